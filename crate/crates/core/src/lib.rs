//! Combined finite volume / nonconforming finite element simulation of
//! immiscible, compressible two-phase flow in porous media.

// `!(x > 0.0)` is the NaN-rejecting form used throughout for validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod mesh;
pub mod physics;
pub mod assembly;
pub mod scheme;
pub mod solver;
pub mod diagnostics;
pub mod io;
