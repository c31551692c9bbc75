//! Small fixed-size vector helpers. Points are always stored with three
//! components; the unused trailing coordinate is zero in 2D.

use nalgebra::{Matrix2, Matrix3};

pub type Point = [f64; 3];

#[inline]
pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: &Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn distance(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

pub fn centroid(points: &[Point]) -> Point {
    let mut c = [0.0; 3];
    for p in points {
        c = add(&c, p);
    }
    scale(&c, 1.0 / points.len() as f64)
}

/// Measure of the simplex spanned by `points` (a `k`-simplex has `k + 1`
/// points), computed from the Gram determinant so it works for sides and
/// dual faces embedded in a higher-dimensional space.
pub fn simplex_measure(points: &[Point]) -> f64 {
    let k = points.len() - 1;
    let edges: Vec<Point> = points[1..].iter().map(|p| sub(p, &points[0])).collect();
    match k {
        0 => 1.0,
        1 => norm(&edges[0]),
        2 => {
            let g = Matrix2::new(
                dot(&edges[0], &edges[0]),
                dot(&edges[0], &edges[1]),
                dot(&edges[1], &edges[0]),
                dot(&edges[1], &edges[1]),
            );
            g.determinant().max(0.0).sqrt() / 2.0
        }
        3 => {
            let g = Matrix3::from_fn(|i, j| dot(&edges[i], &edges[j]));
            g.determinant().max(0.0).sqrt() / 6.0
        }
        _ => unreachable!("simplices of dimension > 3 are not supported"),
    }
}

/// Largest distance between any two vertices.
pub fn diameter(points: &[Point]) -> f64 {
    let mut diam: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            diam = diam.max(distance(&points[i], &points[j]));
        }
    }
    diam
}

/// Gradients of the barycentric coordinates of a full-dimensional simplex.
/// Returns `None` when the simplex is degenerate.
pub fn barycentric_gradients(points: &[Point], dim: usize) -> Option<Vec<Point>> {
    let mut grads = vec![[0.0; 3]; dim + 1];
    match dim {
        2 => {
            let e1 = sub(&points[1], &points[0]);
            let e2 = sub(&points[2], &points[0]);
            let jac = Matrix2::new(e1[0], e2[0], e1[1], e2[1]);
            let inv = jac.try_inverse()?;
            for j in 0..2 {
                grads[j + 1] = [inv[(j, 0)], inv[(j, 1)], 0.0];
            }
        }
        3 => {
            let e: Vec<Point> = (1..4).map(|i| sub(&points[i], &points[0])).collect();
            let jac = Matrix3::from_fn(|r, c| e[c][r]);
            let inv = jac.try_inverse()?;
            for j in 0..3 {
                grads[j + 1] = [inv[(j, 0)], inv[(j, 1)], inv[(j, 2)]];
            }
        }
        _ => return None,
    }
    let mut g0 = [0.0; 3];
    for g in &grads[1..] {
        g0 = sub(&g0, g);
    }
    grads[0] = g0;
    Some(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measures_of_unit_simplices() {
        let tri = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!((simplex_measure(&tri) - 0.5).abs() < 1e-15);
        let tet = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        assert!((simplex_measure(&tet) - 1.0 / 6.0).abs() < 1e-15);
        assert!((simplex_measure(&tri[1..]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn barycentric_gradients_sum_to_zero() {
        let tri = [[0.0, 0.0, 0.0], [2.0, 0.5, 0.0], [0.3, 1.0, 0.0]];
        let g = barycentric_gradients(&tri, 2).unwrap();
        let s = add(&add(&g[0], &g[1]), &g[2]);
        assert!(norm(&s) < 1e-14);
        // lambda_1 is 1 at vertex 1 and 0 at vertex 0
        assert!((dot(&g[1], &sub(&tri[1], &tri[0])) - 1.0).abs() < 1e-14);
        assert!(barycentric_gradients(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], 2).is_none());
    }
}
