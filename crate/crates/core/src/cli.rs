//! Commands behind the `gpcollapse` binary. Each command computes
//! everything first and returns the files to write, so a failing run leaves
//! no partial output.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::asymptotics::{gravity_threshold, predict, regime_for_g, sweep, GravityRegime, Prediction, SweepResult};
use crate::config::{Format, LoadedConfig};
use crate::energy::{DiscreteModel, ELResult, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::groundstate::{q0_constants, q0_identities, solve_q_with, Q0Constants, Q0Identities, RadialProfile};
use crate::io::{encode_field, sweep_csv, Artifacts};
use crate::minimizer::{minimize_model, minimize_over_singular_set, InitSpec, MinimizeOptions, MinimizerResult};
use crate::potentials::{singular_set, Snap};
use crate::verify::{self, Check, Report, VerifyOptions};

/// How a command ended, mapped to the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Exit 0.
    Success,
    /// Exit 3: the run finished but did not converge or a check failed.
    NotConverged,
}

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Serialization(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

pub struct CommandOutput {
    pub artifacts: Artifacts,
    pub outcome: Outcome,
    /// Human-readable summary for stdout.
    pub summary: Vec<String>,
}

struct Ground {
    profile: Arc<RadialProfile>,
    consts: Q0Constants,
}

fn ground(cfg: &LoadedConfig) -> Result<Ground> {
    let profile = Arc::new(solve_q_with(&cfg.config.shooting())?);
    let mut p_list = cfg.config.q_solver.p_list.clone();
    if let Some(s) = singular_set(&cfg.potential_spec()?) {
        if !p_list.contains(&s.p) {
            p_list.push(s.p);
        }
    }
    let consts = q0_constants(&profile, &p_list, cfg.h0()?)?;
    Ok(Ground { profile, consts })
}

#[derive(Serialize)]
struct ProfileFile<'a> {
    a_star: f64,
    q0_initial: f64,
    dr: f64,
    r_max: f64,
    /// Every `stride`-th mesh point of the shooting solution.
    stride: usize,
    ode_residual_sup: f64,
    r: &'a [f64],
    q: &'a [f64],
    dq: &'a [f64],
}

#[derive(Serialize)]
struct ConstantsFile<'a> {
    #[serde(flatten)]
    constants: &'a Q0Constants,
    identities: Q0Identities,
}

pub fn solve_q(cfg: &LoadedConfig) -> Result<CommandOutput> {
    let g = ground(cfg)?;
    let ids = q0_identities(&g.profile);
    let stride = 10;
    let coarse = g.profile.resampled(stride);
    let mut artifacts = Artifacts::default();
    artifacts.add_json(
        "q_profile.json",
        &ProfileFile {
            a_star: g.profile.a_star(),
            q0_initial: g.profile.q0_initial(),
            dr: g.profile.dr(),
            r_max: g.profile.r_max(),
            stride,
            ode_residual_sup: g.profile.ode_residual_sup(),
            r: coarse.r_mesh(),
            q: coarse.q_values(),
            dq: coarse.dq_values(),
        },
    )?;
    artifacts.add_json("q0_constants.json", &ConstantsFile { constants: &g.consts, identities: ids })?;
    let summary = vec![
        format!("a* = {:.12}", g.consts.a_star),
        format!("D0 = {:.12}", g.consts.d0),
        format!("|int Q0^2 - 1| = {:.3e}", (ids.mass - 1.0).abs()),
        format!("|int |grad Q0|^2 - 1| = {:.3e}", (ids.kinetic - 1.0).abs()),
        format!("|(a*/2) int Q0^4 - 1| = {:.3e}", (ids.quartic - 1.0).abs()),
    ];
    Ok(CommandOutput { artifacts, outcome: Outcome::Success, summary })
}

#[derive(Serialize)]
struct FieldMeta {
    format: &'static str,
    n: usize,
    #[serde(rename = "L")]
    half_width: f64,
    bytes: usize,
}

#[derive(Serialize)]
struct ResultFile<'a> {
    a: f64,
    g: f64,
    a_star: f64,
    energy: EnergyBreakdown,
    el: ELResult,
    iterations: usize,
    converged: bool,
    peak: (f64, f64),
    width: f64,
    radius_quartiles: (f64, f64),
    snaps: &'a [Snap],
    /// Energies of all runs when several most-singular points compete.
    multi_start: Option<Vec<((f64, f64), f64)>>,
    degenerate: bool,
    history: &'a [f64],
}

fn single_a(cfg: &LoadedConfig, a_star: f64) -> Result<f64> {
    let a = cfg.config.a_values(a_star)?;
    match a.as_slice() {
        [a] => Ok(*a),
        _ => Err(Error::Config("minimize needs a single contact strength (model.a or model.a_ratio)".into())),
    }
}

pub fn minimize(cfg: &LoadedConfig) -> Result<CommandOutput> {
    let g = ground(cfg)?;
    let a_star = g.consts.a_star;
    let a = single_a(cfg, a_star)?;
    let model = DiscreteModel::new(&cfg.params(a, cfg.config.model.g)?, &cfg.config.grid()?)?;
    let opts = MinimizeOptions { init: cfg.seed(&g.profile), a_star: Some(a_star), ..cfg.config.minimize_options() };

    let several = singular_set(&model.params().potential).is_some_and(|s| s.z.len() > 1);
    let (res, multi, degenerate): (MinimizerResult, _, bool) = if several && matches!(opts.init, InitSpec::Auto) {
        let m = minimize_over_singular_set(&model, &opts, 1.0)?;
        let energies = m.runs.iter().map(|(z, r)| (*z, r.energy.total)).collect();
        let best = m.runs[m.best].1.clone();
        (best, Some(energies), m.degenerate)
    } else {
        (minimize_model(&model, &opts)?, None, false)
    };

    let grid = res.field.grid();
    let mut artifacts = Artifacts::default();
    let bytes = encode_field(&res.field);
    artifacts.add_json(
        "field.json",
        &FieldMeta {
            format: "u64 n, f64 L, then n*n f64 row-major; little endian",
            n: grid.n(),
            half_width: grid.half_width(),
            bytes: bytes.len(),
        },
    )?;
    artifacts.add("field.bin", bytes);
    artifacts.add_json(
        "result.json",
        &ResultFile {
            a,
            g: cfg.config.model.g,
            a_star,
            energy: res.energy,
            el: res.el,
            iterations: res.iterations,
            converged: res.converged,
            peak: res.peak,
            width: res.width,
            radius_quartiles: res.radius_quartiles,
            snaps: &model.potential().snaps,
            multi_start: multi,
            degenerate,
            history: &res.history,
        },
    )?;
    let summary = vec![
        format!("a = {a:.12} (a/a* = {:.6})", a / a_star),
        format!(
            "E = {:.12e}  kinetic = {:.6e}  potential = {:.6e}  quartic = {:.6e}  gravity = {:.6e}",
            res.energy.total, res.energy.kinetic, res.energy.potential, res.energy.quartic, res.energy.gravity
        ),
        format!(
            "residual = {:.3e}  iterations = {}  converged = {}",
            res.el.residual_norm, res.iterations, res.converged
        ),
    ];
    let outcome = if res.converged { Outcome::Success } else { Outcome::NotConverged };
    Ok(CommandOutput { artifacts, outcome, summary })
}

#[derive(Serialize)]
struct FitFile<'a> {
    g: f64,
    #[serde(flatten)]
    result: &'a SweepResult,
}

pub fn sweep_cmd(cfg: &LoadedConfig) -> Result<CommandOutput> {
    use rayon::prelude::*;
    let gr = ground(cfg)?;
    let a_list = cfg.config.a_values(gr.consts.a_star)?;
    let opts = cfg.config.sweep_options();
    let g_list = cfg.config.g_values();
    let runs: Vec<(f64, SweepResult)> = g_list
        .par_iter()
        .map(|&g| Ok((g, sweep(&a_list, &cfg.params(1.0, g)?, &gr.consts, &gr.profile, &opts)?)))
        .collect::<Result<_>>()?;

    let mut artifacts = Artifacts::default();
    let mut summary = Vec::new();
    let mut failed = false;
    let formats = &cfg.config.output.formats;
    for (g, res) in &runs {
        let prefix = if g_list.len() == 1 { String::new() } else { format!("g_{g}/") };
        if formats.contains(&Format::Csv) {
            artifacts.add(format!("{prefix}sweep.csv"), sweep_csv(&res.rows)?);
        }
        if formats.contains(&Format::Json) {
            artifacts.add_json(format!("{prefix}fit.json"), &FitFile { g: *g, result: res })?;
        }
        failed |= !res.failures.is_empty();
        summary.push(match &res.fit {
            Some(f) => format!(
                "g = {g}: exponent {:.4}, amplitude {:.6e}, {} rows fitted",
                f.exponent, f.amplitude, f.rows_used
            ),
            None => format!("g = {g}: no fit"),
        });
        summary.extend(res.failures.iter().map(|f| format!("g = {g}: {f}")));
    }
    let outcome = if failed { Outcome::NotConverged } else { Outcome::Success };
    Ok(CommandOutput { artifacts, outcome, summary })
}

#[derive(Serialize)]
struct PredictionRow {
    g: f64,
    #[serde(flatten)]
    prediction: Prediction,
    /// Present when the potential has a singular part.
    gravity_regime: Option<GravityRegime>,
    g_threshold: Option<f64>,
}

pub fn predict_cmd(cfg: &LoadedConfig) -> Result<CommandOutput> {
    let gr = ground(cfg)?;
    let a_star = gr.consts.a_star;
    let a_list = cfg.config.a_values(a_star)?;
    let set = singular_set(&cfg.potential_spec()?);
    let mut rows = Vec::new();
    for g in cfg.config.g_values() {
        let params = cfg.params(1.0, g)?;
        for &a in &a_list {
            let prediction = predict(a, &params, &gr.consts)?;
            let (gravity_regime, g_threshold) = match &set {
                Some(s) => {
                    let th = cfg.config.threshold(&gr.consts, s.p, s.h0)?;
                    (Some(regime_for_g(a, a_star, g, s.p, &th)?), Some(gravity_threshold(a, a_star, s.p, &th)))
                }
                None => (None, None),
            };
            rows.push(PredictionRow { g, prediction, gravity_regime, g_threshold });
        }
    }
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "g = {} a = {:.6}: {:?}, l = {:.6e}, E = {:.6e}",
                r.g, r.prediction.a, r.prediction.regime, r.prediction.l_pred, r.prediction.e_pred
            )
        })
        .collect();
    let mut artifacts = Artifacts::default();
    let mut file = BTreeMap::new();
    file.insert("a_star", serde_json::to_value(a_star).expect("number"));
    file.insert("predictions", serde_json::to_value(&rows).map_err(|e| Error::Serialization(e.to_string()))?);
    artifacts.add_json("predictions.json", &file)?;
    Ok(CommandOutput { artifacts, outcome: Outcome::Success, summary })
}

pub fn verify_cmd(cfg: &LoadedConfig) -> Result<CommandOutput> {
    let opts = VerifyOptions {
        sweep_n: cfg.config.grid.n,
        shooting: cfg.config.shooting(),
        minimize: cfg.config.minimize_options(),
    };
    let report: Report = verify::run(&opts)?;
    let summary = report.checks.iter().map(Check::line).collect();
    let outcome = if report.passed() { Outcome::Success } else { Outcome::NotConverged };
    let mut artifacts = Artifacts::default();
    artifacts.add_json("verify_report.json", &report)?;
    Ok(CommandOutput { artifacts, outcome, summary })
}
