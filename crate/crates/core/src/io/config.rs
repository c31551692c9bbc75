//! INI-style run configuration.
//!
//! ```ini
//! [mesh]
//! file = meshes/square_16.txt   # relative to the config file
//! # unit_square = 16            # alternatively, a generated mesh
//! [boundary]
//! dirichlet = x == 0            # boundary sides whose barycentre satisfies this
//! [model]
//! preset = quadratic-linear
//! [initial]
//! p_l = 0
//! s_l = 0.3                     # or p_g = ...
//! [sources]
//! injection = (x > 0.75) * (y < 0.25)
//! injected_liquid_saturation = 1
//! [time]
//! dt = 0.01
//! t_final = 0.2
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use super::expr::Expression;
use crate::diagnostics::ManufacturedProblem;
use crate::mesh::{BoundaryTag, MeshError, MeshFormat, PrimalMesh};
use crate::physics::{FluidModel, PresetParameters, Tensor, TensorField};
use crate::solver::SolverConfig;

/// Environment variable overriding `[output] directory`.
pub const OUTPUT_DIR_ENV: &str = "PORFLOW_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("[{section}] {key}: {message}")]
    Value { section: String, key: String, message: String },
    #[error("[{section}] missing required key `{key}`")]
    Missing { section: String, key: String },
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("{0}")]
    Invalid(String),
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

const KNOWN: &[(&str, &[&str])] = &[
    ("mesh", &["file", "format", "unit_square"]),
    ("boundary", &["dirichlet"]),
    (
        "model",
        &[
            "preset",
            "viscosity_liquid",
            "viscosity_gas",
            "relperm_exponent",
            "p_max",
            "rho_liquid",
            "rho_gas_reference",
            "gas_c2",
            "rho_min",
            "rho_max",
            "porosity",
            "permeability",
            "permeability_tensor",
            "gravity",
        ],
    ),
    ("initial", &["p_l", "p_g", "s_l"]),
    ("sources", &["injection", "production", "injected_liquid_saturation"]),
    ("time", &["dt", "t_final"]),
    (
        "solver",
        &[
            "newton_tol",
            "newton_max_iter",
            "line_search_shrink",
            "line_search_max_halvings",
            "jacobian",
            "linear_solver",
            "iterative_tol",
            "halving_depth",
            "residual_floor",
        ],
    ),
    ("output", &["directory", "cadence", "formats"]),
    ("convergence", &["problem", "base_n", "levels"]),
];

fn parse_sections(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax { line: line_no, message: "unterminated section header".into() })?
                .trim()
                .to_string();
            if !KNOWN.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError::Syntax { line: line_no, message: format!("unknown section [{name}]") });
            }
            if sections.contains_key(&name) {
                return Err(ConfigError::Syntax { line: line_no, message: format!("duplicate section [{name}]") });
            }
            sections.insert(name.clone(), BTreeMap::new());
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: line_no, message: format!("expected `key = value`, got `{line}`") });
        };
        let section = current
            .clone()
            .ok_or_else(|| ConfigError::Syntax { line: line_no, message: "key outside of a section".into() })?;
        let key = key.trim().to_string();
        let keys = KNOWN.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !keys.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { section, key });
        }
        let entries = sections.get_mut(&section).expect("section inserted");
        if entries.insert(key.clone(), (line_no, value.trim().to_string())).is_some() {
            return Err(ConfigError::Syntax { line: line_no, message: format!("duplicate key `{key}`") });
        }
    }
    Ok(sections)
}

struct Reader<'a> {
    sections: &'a Sections,
}

impl Reader<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(|(_, v)| v.as_str())
    }

    fn value<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(section, key)
            .map(|v| {
                v.parse::<T>().map_err(|e| ConfigError::Value { section: section.into(), key: key.into(), message: e.to_string() })
            })
            .transpose()
    }

    fn number(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(section, key)
            .map(|v| {
                let e = Expression::parse(v)
                    .map_err(|m| ConfigError::Value { section: section.into(), key: key.into(), message: m })?;
                e.eval(&[0.0; 3], 0.0).map_err(|m| ConfigError::Value { section: section.into(), key: key.into(), message: m })
            })
            .transpose()
    }

    fn numbers(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.raw(section, key)
            .map(|v| {
                v.split(',')
                    .map(|p| {
                        p.trim().parse::<f64>().map_err(|e| ConfigError::Value {
                            section: section.into(),
                            key: key.into(),
                            message: format!("`{}`: {e}", p.trim()),
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    fn expression(&self, section: &str, key: &str) -> Result<Option<Expression>, ConfigError> {
        self.raw(section, key)
            .map(|v| Expression::parse(v).map_err(|m| ConfigError::Value { section: section.into(), key: key.into(), message: m }))
            .transpose()
    }
}

#[derive(Debug, Clone)]
pub enum MeshSource {
    File { path: PathBuf, format: MeshFormat },
    UnitSquare { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    QuadraticLinear,
    ConstantDensity,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "quadratic-linear" => Ok(Preset::QuadraticLinear),
            "constant-density" => Ok(Preset::ConstantDensity),
            other => Err(format!("unknown preset `{other}` (expected quadratic-linear or constant-density)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub preset: Preset,
    pub params: PresetParameters,
    /// Row-major `d x d` entries replacing the scalar permeability.
    pub permeability_tensor: Option<Vec<f64>>,
    pub gravity: [f64; 3],
}

impl ModelConfig {
    pub fn build(&self, dim: usize) -> Result<FluidModel, ConfigError> {
        let mut model = match self.preset {
            Preset::QuadraticLinear => FluidModel::quadratic_linear(dim, &self.params),
            Preset::ConstantDensity => FluidModel::constant_density(dim, &self.params),
        };
        if let Some(entries) = &self.permeability_tensor {
            if entries.len() != dim * dim {
                return Err(ConfigError::Invalid(format!(
                    "permeability_tensor needs {} entries for a {dim}-dimensional mesh, got {}",
                    dim * dim,
                    entries.len()
                )));
            }
            model.permeability = TensorField::Constant(Tensor::new(dim, entries));
        }
        model.gravity = self.gravity;
        Ok(model)
    }
}

#[derive(Debug, Clone)]
pub enum InitialGas {
    Pressure(Expression),
    Saturation(Expression),
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub cadence: usize,
    pub vtk: bool,
    pub csv: bool,
}

#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub problem: ManufacturedProblem,
    pub base_n: usize,
    pub levels: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub dirichlet: Option<Expression>,
    pub model: ModelConfig,
    pub initial_p_l: Expression,
    pub initial_gas: InitialGas,
    pub injection: Expression,
    pub production: Expression,
    pub injected_liquid_saturation: Expression,
    pub dt: f64,
    pub t_final: f64,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    pub convergence: ConvergenceConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut config = Self::parse(&text, &base)?;
        if let MeshSource::File { path, .. } = &config.mesh {
            if !path.is_file() {
                return Err(ConfigError::Value {
                    section: "mesh".into(),
                    key: "file".into(),
                    message: format!("{} does not exist", path.display()),
                });
            }
        }
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            config.output.directory = PathBuf::from(dir);
        }
        Ok(config)
    }

    /// Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let sections = parse_sections(text)?;
        let r = Reader { sections: &sections };
        let missing = |section: &str, key: &str| ConfigError::Missing { section: section.into(), key: key.into() };

        let mesh = match (r.raw("mesh", "file"), r.value::<usize>("mesh", "unit_square")?) {
            (Some(file), None) => MeshSource::File {
                path: base.join(file),
                format: r.value::<MeshFormat>("mesh", "format")?.unwrap_or_default(),
            },
            (None, Some(n)) if n > 0 => MeshSource::UnitSquare { n },
            (None, Some(_)) => {
                return Err(ConfigError::Value { section: "mesh".into(), key: "unit_square".into(), message: "must be positive".into() })
            }
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("[mesh] takes either `file` or `unit_square`, not both".into())),
            (None, None) => return Err(missing("mesh", "file")),
        };

        let defaults = PresetParameters::default();
        let num = |key: &str, default: f64| r.number("model", key).map(|v| v.unwrap_or(default));
        let params = PresetParameters {
            viscosity: [num("viscosity_liquid", defaults.viscosity[0])?, num("viscosity_gas", defaults.viscosity[1])?],
            relperm_exponent: num("relperm_exponent", defaults.relperm_exponent)?,
            p_max: num("p_max", defaults.p_max)?,
            rho_liquid: num("rho_liquid", defaults.rho_liquid)?,
            rho_gas_reference: num("rho_gas_reference", defaults.rho_gas_reference)?,
            gas_c2: num("gas_c2", defaults.gas_c2)?,
            rho_min: num("rho_min", defaults.rho_min)?,
            rho_max: num("rho_max", defaults.rho_max)?,
            porosity: num("porosity", defaults.porosity)?,
            permeability: num("permeability", defaults.permeability)?,
        };
        let mut gravity = [0.0; 3];
        if let Some(g) = r.numbers("model", "gravity")? {
            if g.len() > 3 {
                return Err(ConfigError::Value { section: "model".into(), key: "gravity".into(), message: "at most 3 components".into() });
            }
            gravity[..g.len()].copy_from_slice(&g);
        }
        let model = ModelConfig {
            preset: r.value::<Preset>("model", "preset")?.unwrap_or(Preset::QuadraticLinear),
            params,
            permeability_tensor: r.numbers("model", "permeability_tensor")?,
            gravity,
        };

        let initial_p_l = r.expression("initial", "p_l")?.ok_or_else(|| missing("initial", "p_l"))?;
        let initial_gas = match (r.expression("initial", "p_g")?, r.expression("initial", "s_l")?) {
            (Some(p), None) => InitialGas::Pressure(p),
            (None, Some(s)) => InitialGas::Saturation(s),
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("[initial] takes either `p_g` or `s_l`, not both".into())),
            (None, None) => return Err(missing("initial", "p_g")),
        };

        let zero = || Expression::parse("0").expect("constant");
        let dt = r.number("time", "dt")?.ok_or_else(|| missing("time", "dt"))?;
        let t_final = r.number("time", "t_final")?.ok_or_else(|| missing("time", "t_final"))?;
        if !(dt > 0.0) {
            return Err(ConfigError::Value { section: "time".into(), key: "dt".into(), message: format!("must be positive, got {dt}") });
        }
        if !(t_final > 0.0) {
            return Err(ConfigError::Value { section: "time".into(), key: "t_final".into(), message: format!("must be positive, got {t_final}") });
        }

        let d = SolverConfig::default();
        let solver = SolverConfig {
            newton_tol: r.number("solver", "newton_tol")?.unwrap_or(d.newton_tol),
            newton_max_iter: r.value("solver", "newton_max_iter")?.unwrap_or(d.newton_max_iter),
            line_search_shrink: r.number("solver", "line_search_shrink")?.unwrap_or(d.line_search_shrink),
            line_search_max_halvings: r.value("solver", "line_search_max_halvings")?.unwrap_or(d.line_search_max_halvings),
            jacobian: r.value("solver", "jacobian")?.unwrap_or(d.jacobian),
            linear_solver: r.value("solver", "linear_solver")?.unwrap_or(d.linear_solver),
            iterative_tol: r.number("solver", "iterative_tol")?.unwrap_or(d.iterative_tol),
            halving_depth: r.value("solver", "halving_depth")?.unwrap_or(d.halving_depth),
            residual_floor: r.number("solver", "residual_floor")?.unwrap_or(d.residual_floor),
        };
        solver.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let output = parse_output(&r, base)?;
        let convergence = parse_convergence(&r)?;

        Ok(RunConfig {
            mesh,
            dirichlet: r.expression("boundary", "dirichlet")?,
            model,
            initial_p_l,
            initial_gas,
            injection: r.expression("sources", "injection")?.unwrap_or_else(zero),
            production: r.expression("sources", "production")?.unwrap_or_else(zero),
            injected_liquid_saturation: r.expression("sources", "injected_liquid_saturation")?.unwrap_or_else(zero),
            dt,
            t_final,
            solver,
            output,
            convergence,
        })
    }

    /// Loads or generates the mesh and applies the boundary override.
    pub fn build_mesh(&self) -> Result<PrimalMesh, MeshError> {
        let mesh = match &self.mesh {
            MeshSource::File { path, format } => crate::mesh::load_primal(path, *format)?,
            MeshSource::UnitSquare { n } => PrimalMesh::unit_square(*n, |_| BoundaryTag::Impervious)?,
        };
        Ok(match &self.dirichlet {
            Some(expr) => mesh.with_boundary_tags(|q| {
                if expr.eval_or_nan(q, 0.0) != 0.0 {
                    BoundaryTag::Dirichlet
                } else {
                    BoundaryTag::Impervious
                }
            }),
            None => mesh,
        })
    }
}

fn parse_output(r: &Reader, base: &Path) -> Result<OutputConfig, ConfigError> {
    let formats = r.raw("output", "formats").unwrap_or("vtk, csv");
    let mut output = OutputConfig {
        directory: base.join(r.raw("output", "directory").unwrap_or("output")),
        cadence: r.value("output", "cadence")?.unwrap_or(1),
        vtk: false,
        csv: false,
    };
    for f in formats.split(',').map(str::trim).filter(|f| !f.is_empty()) {
        match f {
            "vtk" => output.vtk = true,
            "csv" => output.csv = true,
            other => {
                return Err(ConfigError::Value { section: "output".into(), key: "formats".into(), message: format!("unknown format `{other}`") })
            }
        }
    }
    if output.cadence == 0 {
        return Err(ConfigError::Value { section: "output".into(), key: "cadence".into(), message: "must be at least 1".into() });
    }
    Ok(output)
}

fn parse_convergence(r: &Reader) -> Result<ConvergenceConfig, ConfigError> {
    Ok(ConvergenceConfig {
        problem: r.value::<ManufacturedProblem>("convergence", "problem")?.unwrap_or(ManufacturedProblem::SinSin),
        base_n: r.value("convergence", "base_n")?.unwrap_or(4),
        levels: r.value("convergence", "levels")?.unwrap_or(3),
    })
}

/// Reads only the `[convergence]` and `[output]` sections; the rest of the
/// file is syntax-checked but may be incomplete.
pub fn load_convergence(path: impl AsRef<Path>) -> Result<(ConvergenceConfig, OutputConfig), ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    let sections = parse_sections(&text)?;
    let r = Reader { sections: &sections };
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut output = parse_output(&r, &base)?;
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
        output.directory = PathBuf::from(dir);
    }
    Ok((parse_convergence(&r)?, output))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
[mesh]
unit_square = 4
[boundary]
dirichlet = x == 0
[model]
preset = quadratic-linear
p_max = 2
permeability_tensor = 2, 0, 0, 1
[initial]
p_l = 0
s_l = 0.3
[sources]
injection = (x > 0.75) * (y < 0.25)
[time]
dt = 0.01
t_final = 0.02
[solver]
jacobian = analytic
[output]
directory = out
formats = csv
";

    #[test]
    fn parses_a_full_config() {
        let c = RunConfig::parse(SAMPLE, Path::new("/base")).unwrap();
        assert!(matches!(c.mesh, MeshSource::UnitSquare { n: 4 }));
        assert_eq!(c.model.params.p_max, 2.0);
        assert_eq!(c.solver.jacobian, crate::solver::JacobianMode::Analytic);
        assert_eq!(c.output.directory, PathBuf::from("/base/out"));
        assert!(c.output.csv && !c.output.vtk);
        let mesh = c.build_mesh().unwrap();
        let dirichlet = (0..mesh.num_sides()).filter(|&s| mesh.boundary_tag(s) == Some(BoundaryTag::Dirichlet)).count();
        assert_eq!(dirichlet, 4);
        let model = c.model.build(2).unwrap();
        assert_eq!(model.permeability.at(&[0.0; 3]).get(0, 0), 2.0);
    }

    #[test]
    fn reports_errors_with_context() {
        let bad_key = SAMPLE.replace("p_max = 2", "p_maxx = 2");
        assert!(matches!(RunConfig::parse(&bad_key, Path::new("")), Err(ConfigError::UnknownKey { .. })));
        let no_dt = SAMPLE.replace("dt = 0.01", "");
        assert!(matches!(RunConfig::parse(&no_dt, Path::new("")), Err(ConfigError::Missing { .. })));
        let bad_dt = SAMPLE.replace("dt = 0.01", "dt = -1");
        assert!(RunConfig::parse(&bad_dt, Path::new("")).is_err());
        let garbage = SAMPLE.replace("[time]", "time");
        assert!(matches!(RunConfig::parse(&garbage, Path::new("")), Err(ConfigError::Syntax { .. })));
    }
}
