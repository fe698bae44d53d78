//! Run configuration, read from TOML. Unknown keys are rejected.
//!
//! ```toml
//! [grid]
//! L = 16.0
//! n = 512
//!
//! [model]
//! a_ratios = [0.80, 0.85, 0.90, 0.93, 0.96]
//! g = 1.0
//!
//! [model.potential]
//! kind = "singular"
//! points = [{ z = [0.0, 0.0], p = 1.5 }]
//! h0 = 1.0
//! ```
//!
//! Table files (`h_table`, `cell_table`) hold an `m x m` block of
//! whitespace-separated numbers, one row per line; `#` starts a comment.
//! Relative paths are resolved against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{RegimeThreshold, SweepGrid, SweepOptions, ThresholdPrefactor};
use crate::energy::ModelParams;
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::groundstate::{Q0Constants, ShootingOptions};
use crate::minimizer::{InitSpec, Method, MinimizeOptions};
use crate::potentials::{Envelope, PotentialSpec, SingularPoint};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub solver: SolverConfig,
    pub q_solver: QSolverConfig,
    pub sweep: SweepConfig,
    pub regime: RegimeConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub half_width: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { half_width: 16.0, n: 512 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub a: Option<f64>,
    /// `a / a*`.
    pub a_ratio: Option<f64>,
    pub a_list: Option<Vec<f64>>,
    pub a_ratios: Option<Vec<f64>>,
    pub g: f64,
    /// Independent gravity variants for `sweep`.
    pub g_list: Option<Vec<f64>>,
    pub potential: PotentialConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            a: None,
            a_ratio: None,
            a_list: None,
            a_ratios: None,
            g: 1.0,
            g_list: None,
            potential: PotentialConfig::Zero,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Zero,
    Trap {
        q: f64,
    },
    Singular {
        points: Vec<PointConfig>,
        #[serde(default)]
        h0: Option<f64>,
        #[serde(default)]
        h_table: Option<TableRef>,
    },
    Periodic {
        cell_table: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub z: [f64; 2],
    pub p: f64,
}

/// Envelope samples on the node lattice of `[-extent, extent]^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRef {
    pub path: PathBuf,
    pub extent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: Method,
    pub energy_tol: f64,
    pub residual_tol: f64,
    pub max_iter: usize,
    pub initial_step: f64,
    pub backtrack: f64,
    pub seed: SeedConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = MinimizeOptions::default();
        SolverConfig {
            method: d.method,
            energy_tol: d.energy_tol,
            residual_tol: d.residual_tol,
            max_iter: d.max_iter,
            initial_step: d.initial_step,
            backtrack: d.backtrack,
            seed: SeedConfig::Auto,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeedConfig {
    Auto,
    Gaussian {
        center: [f64; 2],
        width: f64,
    },
    /// `b Q0(b (x - center))`.
    Q0 {
        center: [f64; 2],
        b: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QSolverConfig {
    pub dr: f64,
    pub r_max: f64,
    pub tol: f64,
    /// Exponents whose moments `I(p)` are tabulated.
    pub p_list: Vec<f64>,
    /// Envelope value at the singular points; taken from the potential when absent.
    pub h0: Option<f64>,
}

impl Default for QSolverConfig {
    fn default() -> Self {
        let d = ShootingOptions::default();
        QSolverConfig { dr: d.dr, r_max: d.r_max, tol: d.tol, p_list: vec![0.5, 1.0, 1.5], h0: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// `true`: `L = extent / l` per row with `n` nodes; `false`: the `[grid]` box.
    pub adaptive: bool,
    pub n: Option<usize>,
    pub extent: f64,
    pub cutoff_fraction: f64,
    pub resolution_limit: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { adaptive: true, n: None, extent: 16.0, cutoff_fraction: 0.5, resolution_limit: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeConfig {
    pub prefactor: PrefactorKind,
    pub band: f64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        RegimeConfig { prefactor: PrefactorKind::Unit, band: RegimeThreshold::default().band }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefactorKind {
    Unit,
    Balance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// A parsed config together with the directory its relative paths refer to.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Schema checks that do not need `a*` or the file system.
    pub fn validate(&self) -> Result<()> {
        Grid2D::new(self.grid.half_width, self.grid.n)?;
        let m = &self.model;
        let scalars = [m.a.is_some(), m.a_ratio.is_some()].iter().filter(|b| **b).count();
        let lists = [m.a_list.is_some(), m.a_ratios.is_some()].iter().filter(|b| **b).count();
        if scalars > 1 || lists > 1 || scalars + lists > 1 {
            return Err(Error::Config("give at most one of model.a, a_ratio, a_list, a_ratios".into()));
        }
        for v in m.a.iter().chain(m.a_list.iter().flatten()) {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::Config(format!("a must be finite and >= 0, got {v}")));
            }
        }
        for r in m.a_ratio.iter().chain(m.a_ratios.iter().flatten()) {
            if !(r.is_finite() && *r >= 0.0) {
                return Err(Error::Config(format!("a / a* must be finite and >= 0, got {r}")));
            }
        }
        for g in std::iter::once(&m.g).chain(m.g_list.iter().flatten()) {
            if !(g.is_finite() && *g >= 0.0) {
                return Err(Error::Config(format!("g must be finite and >= 0, got {g}")));
            }
        }
        if matches!(&m.g_list, Some(l) if l.is_empty()) || matches!(&m.a_list, Some(l) if l.is_empty()) {
            return Err(Error::Config("lists in [model] must be nonempty".into()));
        }
        if let PotentialConfig::Singular { points, h0, h_table } = &m.potential {
            if points.is_empty() {
                return Err(Error::Config("a singular potential needs at least one point".into()));
            }
            if h0.is_some() && h_table.is_some() {
                return Err(Error::Config("give either h0 or h_table, not both".into()));
            }
        }
        let s = &self.solver;
        if !(s.energy_tol > 0.0 && s.residual_tol > 0.0 && s.initial_step > 0.0 && s.max_iter > 0) {
            return Err(Error::Config("solver tolerances, step and max_iter must be positive".into()));
        }
        if !(s.backtrack > 0.0 && s.backtrack < 1.0) {
            return Err(Error::Config("solver.backtrack must lie in (0, 1)".into()));
        }
        if let SeedConfig::Gaussian { width, .. } = s.seed {
            if !(width > 0.0) {
                return Err(Error::Config("seed width must be positive".into()));
            }
        }
        if let SeedConfig::Q0 { b, .. } = s.seed {
            if !(b > 0.0) {
                return Err(Error::Config("seed scale b must be positive".into()));
            }
        }
        if self.q_solver.p_list.iter().any(|p| !(*p > 0.0 && *p < 2.0)) {
            return Err(Error::Config("q_solver.p_list entries must lie in (0, 2)".into()));
        }
        if let Some(n) = self.sweep.n {
            Grid2D::new(1.0, n)?;
        }
        if !(self.sweep.extent > 0.0 && self.sweep.cutoff_fraction > 0.0 && self.sweep.cutoff_fraction <= 1.0) {
            return Err(Error::Config("sweep.extent must be positive and cutoff_fraction in (0, 1]".into()));
        }
        if !(self.regime.band >= 1.0) {
            return Err(Error::Config("regime.band must be >= 1".into()));
        }
        if self.output.formats.is_empty() {
            return Err(Error::Config("output.formats must name at least one format".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.grid.half_width, self.grid.n)
    }

    pub fn shooting(&self) -> ShootingOptions {
        ShootingOptions { dr: self.q_solver.dr, r_max: self.q_solver.r_max, tol: self.q_solver.tol }
    }

    /// `a` values in increasing order, resolved against `a*`.
    pub fn a_values(&self, a_star: f64) -> Result<Vec<f64>> {
        let m = &self.model;
        let values = if let Some(a) = m.a {
            vec![a]
        } else if let Some(r) = m.a_ratio {
            vec![r * a_star]
        } else if let Some(l) = &m.a_list {
            l.clone()
        } else if let Some(l) = &m.a_ratios {
            l.iter().map(|r| r * a_star).collect()
        } else {
            return Err(Error::Config("no contact strength given: set model.a, a_ratio, a_list or a_ratios".into()));
        };
        Ok(values)
    }

    pub fn g_values(&self) -> Vec<f64> {
        self.model.g_list.clone().unwrap_or_else(|| vec![self.model.g])
    }

    pub fn minimize_options(&self) -> MinimizeOptions {
        let s = &self.solver;
        MinimizeOptions {
            initial_step: s.initial_step,
            backtrack: s.backtrack,
            energy_tol: s.energy_tol,
            residual_tol: s.residual_tol,
            max_iter: s.max_iter,
            method: s.method,
            init: InitSpec::Auto,
            a_star: None,
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        let grid = if self.sweep.adaptive {
            SweepGrid::Adaptive { n: self.sweep.n.unwrap_or(self.grid.n), extent: self.sweep.extent }
        } else {
            SweepGrid::Fixed { half_width: self.grid.half_width, n: self.sweep.n.unwrap_or(self.grid.n) }
        };
        SweepOptions {
            grid,
            minimize: self.minimize_options(),
            cutoff_fraction: self.sweep.cutoff_fraction,
            resolution_limit: self.sweep.resolution_limit,
        }
    }

    pub fn threshold(&self, consts: &Q0Constants, p: f64, h0: f64) -> Result<RegimeThreshold> {
        match self.regime.prefactor {
            PrefactorKind::Unit => Ok(RegimeThreshold { prefactor: ThresholdPrefactor::Unit, band: self.regime.band }),
            PrefactorKind::Balance => RegimeThreshold::balance(consts, p, h0, self.regime.band),
        }
    }
}

impl LoadedConfig {
    /// Reads, parses and validates a config file, including referenced tables.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = RunConfig::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = LoadedConfig { config, base };
        loaded.potential_spec()?;
        Ok(loaded)
    }

    pub fn defaults() -> Self {
        LoadedConfig { config: RunConfig::default(), base: PathBuf::new() }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        let spec = match &self.config.model.potential {
            PotentialConfig::Zero => PotentialSpec::Zero,
            PotentialConfig::Trap { q } => PotentialSpec::Trap { q: *q },
            PotentialConfig::Singular { points, h0, h_table } => {
                let envelope = match h_table {
                    Some(t) => Envelope::Table { extent: t.extent, values: read_table(&self.resolve(&t.path))? },
                    None => Envelope::Constant(h0.unwrap_or(1.0)),
                };
                PotentialSpec::SingularSum {
                    points: points.iter().map(|pt| SingularPoint { z: (pt.z[0], pt.z[1]), p: pt.p }).collect(),
                    envelope,
                }
            }
            PotentialConfig::Periodic { cell_table } => {
                PotentialSpec::Periodic { values: read_table(&self.resolve(cell_table))? }
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn params(&self, a: f64, g: f64) -> Result<ModelParams> {
        ModelParams::new(a, g, self.potential_spec()?)
    }

    /// Envelope value used for the regime constants.
    pub fn h0(&self) -> Result<f64> {
        if let Some(h) = self.config.q_solver.h0 {
            return Ok(h);
        }
        Ok(crate::potentials::singular_set(&self.potential_spec()?).map_or(1.0, |s| s.h0))
    }

    pub fn seed(&self, profile: &std::sync::Arc<crate::groundstate::RadialProfile>) -> InitSpec {
        match self.config.solver.seed {
            SeedConfig::Auto => InitSpec::Auto,
            SeedConfig::Gaussian { center, width } => InitSpec::Gaussian { center: (center[0], center[1]), width },
            SeedConfig::Q0 { center, b } => {
                InitSpec::Q0Seed { center: (center[0], center[1]), b, profile: profile.clone() }
            }
        }
    }
}

/// Reads a square whitespace-separated table.
pub fn read_table(path: &Path) -> Result<Array2<f64>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read table {}: {e}", path.display())))?;
    parse_table(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_table(text: &str) -> std::result::Result<Array2<f64>, String> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}")))
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .collect::<std::result::Result<_, _>>()?;
    let m = rows.len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(format!(
            "table must be square, got {m} rows of lengths {:?}",
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        ));
    }
    Ok(Array2::from_shape_fn((m, m), |(i, j)| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.grid.n, 512);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[grid]\nL = 8.0\nm = 64\n").is_err());
        assert!(RunConfig::from_toml("[model.potential]\nkind = \"trap\"\nq = 2.0\np = 1.0\n").is_err());
        assert!(RunConfig::from_toml("[modle]\n").is_err());
    }

    #[test]
    fn singular_potential_parses() {
        let c = RunConfig::from_toml(
            "[model]\na_ratios = [0.9, 0.95]\ng = 0.5\n[model.potential]\nkind = \"singular\"\npoints = [{ z = [0.0, 0.0], p = 1.5 }]\nh0 = 2.0\n",
        )
        .unwrap();
        let l = LoadedConfig { config: c, base: PathBuf::new() };
        let spec = l.potential_spec().unwrap();
        assert_eq!(spec, PotentialSpec::single((0.0, 0.0), 1.5, 2.0));
        assert_eq!(l.config.a_values(10.0).unwrap(), vec![9.0, 9.5]);
        assert_eq!(l.h0().unwrap(), 2.0);
    }

    #[test]
    fn conflicting_a_keys_are_rejected() {
        assert!(RunConfig::from_toml("[model]\na = 1.0\na_list = [1.0]\n").is_err());
    }

    #[test]
    fn bad_grid_is_rejected() {
        assert!(RunConfig::from_toml("[grid]\nn = 100\n").is_err());
    }

    #[test]
    fn tables_parse() {
        let t = parse_table("# header\n1 2\n3 4 # tail\n").unwrap();
        assert_eq!(t[[1, 0]], 3.0);
        assert!(parse_table("1 2\n3\n").is_err());
    }
}
