//! Blow-up laws as `a` approaches `a*`, the trial-state upper bound, and
//! sweeps that measure the approach.
//!
//! Writing `u = l Q0(l x)` in the energy gives, to leading order,
//! `l^2 (a* - a) / a* - h0 I(p) l^p - g D0 l`. Minimizing the dominant
//! terms yields the closed-form predictions; minimizing all three gives the
//! heuristic scale used to size adaptive grids.

use std::sync::Arc;

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::energy::{DiscreteModel, EnergyBreakdown, ModelParams};
use crate::error::{Error, Result};
use crate::gravity::build_kernel;
use crate::grid::{log_warning, normalize, resample_affine, Field, Grid2D, Resample};
use crate::groundstate::{a_coefficient, beta_strong, q0_on_grid, Q0Constants, RadialProfile};
use crate::minimizer::{minimize_model, peak_location, InitSpec, MinimizeOptions, MinimizerResult};
use crate::potentials::singular_set;
use crate::quadrature::{fit_line, golden_section_min, LineFit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// No singular part, or `p < 1`: gravity sets the scale `(a* - a)^{-1}`.
    Weak,
    /// `p > 1`: the potential sets the scale `(a* - a)^{-1/(2-p)}`.
    Strong,
    /// `p = 1`: both contribute at the scale `(a* - a)^{-1}`.
    Border,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub regime: Regime,
    pub a: f64,
    pub l_pred: f64,
    pub e_pred: f64,
    pub beta: f64,
    /// `A`, absent in the weak regime.
    pub a_coeff: Option<f64>,
    /// `p` of the most singular points.
    pub p: Option<f64>,
    /// `(1 - p) / (2 - p)`.
    pub g_threshold_exponent: Option<f64>,
    /// Minimizer of the three-term reduced energy.
    pub l_heuristic: f64,
    pub e_heuristic: f64,
}

fn moment(consts: &Q0Constants, p: f64) -> Result<f64> {
    consts.moment(p).ok_or_else(|| Error::Config(format!("I(p) for p = {p} is missing from the constants")))
}

/// `l^2 (a* - a) / a* - c l^p - d l` and its minimizer over `l > 0`.
pub fn reduced_energy_minimum(a_star: f64, a: f64, c: f64, p: f64, d: f64, guess: f64) -> (f64, f64) {
    let k = (a_star - a) / a_star;
    let f = |l: f64| k * l * l - c * l.powf(p) - d * l;
    let s = golden_section_min(|s: f64| f(s.exp()), (guess * 1e-4).ln(), (guess * 1e4).ln(), 1e-14);
    let l = s.exp();
    (l, f(l))
}

pub fn predict(a: f64, params: &ModelParams, consts: &Q0Constants) -> Result<Prediction> {
    let a_star = consts.a_star;
    if !(a > 0.0 && a < a_star) {
        return Err(Error::Domain(format!("predictions need 0 < a < a* = {a_star}, got {a}")));
    }
    let g = params.g;
    let d0 = consts.d0;
    let set = singular_set(&params.potential).filter(|s| s.h0 > 0.0);
    let delta = a_star - a;

    let (regime, p, h0) = match &set {
        None => (Regime::Weak, None, 0.0),
        Some(s) if s.p < 1.0 => (Regime::Weak, Some(s.p), s.h0),
        Some(s) if s.p == 1.0 => (Regime::Border, Some(1.0), s.h0),
        Some(s) => (Regime::Strong, Some(s.p), s.h0),
    };
    let raw_moment = match p {
        Some(p) => moment(consts, p)?,
        None => 0.0,
    };
    let moment_c = h0 * raw_moment;

    let (l_pred, e_pred, beta, a_coeff) = match regime {
        Regime::Weak => {
            let beta = 0.5 * g * a_star * d0;
            if beta <= 0.0 {
                return Err(Error::Domain("a weak model without gravity has no blow-up law".into()));
            }
            (beta / delta, -beta * beta / (a_star * delta), beta, None)
        }
        Regime::Border | Regime::Strong => {
            let pp = p.expect("singular regime has p");
            let big_a = a_coefficient(pp, h0, raw_moment, g * d0);
            let beta = beta_strong(pp, a_star, big_a);
            let l = beta * delta.powf(-1.0 / (2.0 - pp));
            let e = (beta * beta / a_star - beta.powf(pp) * big_a) * delta.powf(-pp / (2.0 - pp));
            (l, e, beta, Some(big_a))
        }
    };
    let (l_heuristic, e_heuristic) = reduced_energy_minimum(a_star, a, moment_c, p.unwrap_or(1.0), g * d0, l_pred);
    Ok(Prediction {
        regime,
        a,
        l_pred,
        e_pred,
        beta,
        a_coeff,
        p,
        g_threshold_exponent: p.map(|p| (1.0 - p) / (2.0 - p)),
        l_heuristic,
        e_heuristic,
    })
}

/// Which attractive term is expected to dominate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GravityRegime {
    GravityDominated,
    PotentialDominated,
    Balanced,
}

/// How the threshold `g_c = C (a* - a)^{(1-p)/(2-p)}` is formed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdPrefactor {
    /// `C = 1`.
    Unit,
    /// `C` from equating `g D0 l` with `h0 I(p) l^p` at the blow-up scale of
    /// the term that would dominate without the other.
    Balance { h0: f64, moment: f64, d0: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeThreshold {
    pub prefactor: ThresholdPrefactor,
    /// `g > band g_c` is gravity dominated, `g < g_c / band` potential dominated.
    pub band: f64,
}

impl Default for RegimeThreshold {
    fn default() -> Self {
        RegimeThreshold { prefactor: ThresholdPrefactor::Unit, band: 10.0 }
    }
}

impl RegimeThreshold {
    /// Balance prefactor for `V = -h0 |x|^{-p}` from the tabulated constants.
    pub fn balance(consts: &Q0Constants, p: f64, h0: f64, band: f64) -> Result<Self> {
        Ok(RegimeThreshold {
            prefactor: ThresholdPrefactor::Balance { h0, moment: moment(consts, p)?, d0: consts.d0 },
            band,
        })
    }
}

/// Critical gravitational constant `g_c(a)`.
pub fn gravity_threshold(a: f64, a_star: f64, p: f64, threshold: &RegimeThreshold) -> f64 {
    let delta = a_star - a;
    let scaling = delta.powf((1.0 - p) / (2.0 - p));
    let c = match threshold.prefactor {
        ThresholdPrefactor::Unit => 1.0,
        ThresholdPrefactor::Balance { h0, moment, d0 } => {
            let c_pot = h0 * moment;
            if p < 1.0 {
                (c_pot / (d0 * (0.5 * a_star * d0).powf(1.0 - p))).powf(1.0 / (2.0 - p))
            } else {
                c_pot / d0 * beta_strong(p, a_star, c_pot).powf(p - 1.0)
            }
        }
    };
    c * scaling
}

pub fn regime_for_g(a: f64, a_star: f64, g: f64, p: f64, threshold: &RegimeThreshold) -> Result<GravityRegime> {
    if !(a > 0.0 && a < a_star) {
        return Err(Error::Domain(format!("need 0 < a < a* = {a_star}, got {a}")));
    }
    if !(p > 0.0 && p < 2.0) {
        return Err(Error::Domain(format!("need 0 < p < 2, got {p}")));
    }
    let gc = gravity_threshold(a, a_star, p, threshold);
    Ok(if g > threshold.band * gc {
        GravityRegime::GravityDominated
    } else if g * threshold.band < gc {
        GravityRegime::PotentialDominated
    } else {
        GravityRegime::Balanced
    })
}

/// `phi(|x - x0|) l Q0(l (x - x0))`, normalized, with a smooth cutoff
/// `phi = 1` on `r <= R/2` falling to zero at `r = R`.
pub fn trial_state(profile: &RadialProfile, grid: &Grid2D, l: f64, x0: (f64, f64), cutoff: f64) -> Result<Field> {
    if !(cutoff > 0.0) {
        return Err(Error::Config(format!("cutoff radius must be positive, got {cutoff}")));
    }
    let base = q0_on_grid(profile, grid, x0, l)?;
    let phi = |r: f64| {
        if r <= 0.5 * cutoff {
            1.0
        } else if r >= cutoff {
            0.0
        } else {
            let s = (r - 0.5 * cutoff) / (0.5 * cutoff);
            (0.5 * std::f64::consts::PI * s).cos().powi(2)
        }
    };
    let mut table = base.into_values();
    for ((i, j), v) in table.indexed_iter_mut() {
        *v *= phi((grid.coord(i) - x0.0).hypot(grid.coord(j) - x0.1));
    }
    normalize(&Field::new(grid, table)?)
}

/// Energy of the trial state: an upper bound for `E(a)` up to quadrature error.
pub fn trial_upper_bound(
    model: &DiscreteModel,
    profile: &RadialProfile,
    l: f64,
    x0: (f64, f64),
    cutoff: Option<f64>,
) -> Result<EnergyBreakdown> {
    let cutoff = cutoff.unwrap_or(0.5 * model.grid().half_width());
    model.evaluate(&trial_state(profile, model.grid(), l, x0, cutoff)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileError {
    pub l2: f64,
    pub h1: f64,
}

/// Distance between `l^{-1} u(x_k + x / l)` and `beta Q0(beta x)`.
///
/// Both norms are dilation covariant, so the comparison is done on the
/// original grid against `b Q0(b (x - x_k))` with `b = beta l`; the gradient
/// part is scaled back by `1/l`.
pub fn rescaled_profile_error(u: &Field, profile: &RadialProfile, l: f64, beta: f64) -> Result<ProfileError> {
    let g = u.grid();
    let n = g.n();
    let (i, j) = u.argmax();
    if i < 2 || j < 2 || i + 2 >= n || j + 2 >= n {
        return Err(Error::Domain("the peak touches the box edge; the domain is too small".into()));
    }
    let xk = peak_location(u);
    let w = q0_on_grid(profile, g, xk, beta * l)?;
    let mut diff = u.values().clone();
    Zip::from(&mut diff).and(w.values()).for_each(|d, &w| *d -= w);
    let l2 = g.inner(&diff, &diff).sqrt();
    let grad2 = g.inner(&diff, &g.neg_laplacian(&diff));
    let h1 = (l2 * l2 + grad2.max(0.0) / (l * l)).sqrt();
    Ok(ProfileError { l2, h1 })
}

/// Grid used at each sweep point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepGrid {
    Fixed {
        half_width: f64,
        n: usize,
    },
    /// `L = extent / l` with `l` the heuristic blow-up scale.
    Adaptive {
        n: usize,
        extent: f64,
    },
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub grid: SweepGrid,
    pub minimize: MinimizeOptions,
    /// Trial-state cutoff radius in units of the box half width.
    pub cutoff_fraction: f64,
    /// Smallest admissible `h l` before a row is marked under-resolved.
    pub resolution_limit: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            grid: SweepGrid::Adaptive { n: 512, extent: 16.0 },
            minimize: MinimizeOptions::default(),
            cutoff_fraction: 0.5,
            resolution_limit: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub energy: EnergyBreakdown,
    pub mu: f64,
    pub residual: f64,
    pub width: f64,
    pub peak: (f64, f64),
    pub l_pred: f64,
    pub e_pred: f64,
    pub err_l2: f64,
    pub err_h1: f64,
    pub trial_bound: f64,
    pub converged: bool,
    pub iterations: usize,
    pub under_resolved: bool,
    pub half_width: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyFit {
    /// Exponent `k` in `E ~ -c (a* - a)^{k}`.
    pub exponent: f64,
    pub amplitude: f64,
    pub line: LineFit,
    pub rows_used: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub a_star: f64,
    pub regime: Option<Regime>,
    pub rows: Vec<SweepRow>,
    pub fit: Option<EnergyFit>,
    pub failures: Vec<String>,
    /// Full minimizer output per row; not serialized.
    #[serde(skip)]
    pub results: Vec<MinimizerResult>,
}

fn sweep_grid(opts: &SweepOptions, l: f64) -> Result<Grid2D> {
    match opts.grid {
        SweepGrid::Fixed { half_width, n } => Grid2D::new(half_width, n),
        SweepGrid::Adaptive { n, extent } => Grid2D::new(extent / l, n),
    }
}

/// `rho u(c + rho (x - c))` carried from the grid of `prev` onto `dst`, renormalized.
fn warm_start(prev: &Field, dst: &Grid2D, rho: f64, center: (f64, f64)) -> Result<Field> {
    let offset = (center.0 * (1.0 - rho), center.1 * (1.0 - rho));
    let table = resample_affine(prev.values(), prev.grid(), dst, rho, offset, Resample::Spectral)?;
    normalize(&Field::from_table_clamped(dst, table)?)
}

pub fn sweep(
    a_list: &[f64],
    params: &ModelParams,
    consts: &Q0Constants,
    profile: &Arc<RadialProfile>,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    let a_star = consts.a_star;
    if a_list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("a_list must be strictly increasing".into()));
    }
    if let Some(a) = a_list.iter().find(|a| !(**a > 0.0 && **a < a_star)) {
        return Err(Error::Domain(format!("a = {a} is not in (0, a*); E(a) = -inf for all a >= a*")));
    }
    let center = crate::minimizer::default_center(&params.potential);
    let mut rows = Vec::with_capacity(a_list.len());
    let mut results = Vec::with_capacity(a_list.len());
    let mut failures = Vec::new();
    let mut regime = None;
    let mut prev: Option<(Field, f64)> = None;

    for &a in a_list {
        let pred = predict(a, params, consts)?;
        regime = Some(pred.regime);
        let grid = sweep_grid(opts, pred.l_heuristic)?;
        let model = DiscreteModel::with_kernel(&params.with_a(a), Arc::new(build_kernel(&grid)))?;
        let snapped = model.potential().snaps.iter().find(|s| s.requested == center).map_or(center, |s| s.snapped);

        let init = match &prev {
            Some((u, l_prev)) => InitSpec::Provided(warm_start(u, &grid, pred.l_heuristic / l_prev, snapped)?),
            None => InitSpec::Q0Seed { center: snapped, b: pred.l_heuristic, profile: profile.clone() },
        };
        let mopts = MinimizeOptions { init, a_star: Some(a_star), ..opts.minimize.clone() };
        let res = minimize_model(&model, &mopts)?;
        let hl = grid.spacing() * pred.l_heuristic;
        let under_resolved = hl > opts.resolution_limit;
        if under_resolved {
            log_warning(&format!("a = {a}: h l = {hl:.3} exceeds {}", opts.resolution_limit));
        }
        if !res.converged {
            failures.push(format!("a = {a}: not converged (residual {:.3e})", res.el.residual_norm));
        }
        let err = match rescaled_profile_error(&res.field, profile, pred.l_pred / pred.beta, pred.beta) {
            Ok(e) => e,
            Err(e) => {
                failures.push(format!("a = {a}: profile error unavailable: {e}"));
                ProfileError { l2: f64::NAN, h1: f64::NAN }
            }
        };
        let bound =
            trial_upper_bound(&model, profile, pred.l_pred, snapped, Some(opts.cutoff_fraction * grid.half_width()))
                .map(|e| e.total)
                .unwrap_or(f64::NAN);
        rows.push(SweepRow {
            a,
            energy: res.energy,
            mu: res.el.mu,
            residual: res.el.residual_norm,
            width: res.width,
            peak: res.peak,
            l_pred: pred.l_pred,
            e_pred: pred.e_pred,
            err_l2: err.l2,
            err_h1: err.h1,
            trial_bound: bound,
            converged: res.converged,
            iterations: res.iterations,
            under_resolved,
            half_width: grid.half_width(),
            n: grid.n(),
        });
        prev = Some((res.field.clone(), pred.l_heuristic));
        results.push(res);
    }

    let fit = fit_energy(a_star, &rows);
    Ok(SweepResult { a_star, regime, rows, fit, failures, results })
}

/// Least-squares fit of `log(-E)` against `log(a* - a)` over converged rows.
/// The two largest-`a` rows are left out when they are under-resolved.
pub fn fit_energy(a_star: f64, rows: &[SweepRow]) -> Option<EnergyFit> {
    let k = rows.len();
    let used: Vec<&SweepRow> = rows
        .iter()
        .enumerate()
        .filter(|(i, r)| r.converged && !(r.under_resolved && *i + 2 >= k) && r.energy.total < 0.0)
        .map(|(_, r)| r)
        .collect();
    let x: Vec<f64> = used.iter().map(|r| (a_star - r.a).ln()).collect();
    let y: Vec<f64> = used.iter().map(|r| (-r.energy.total).ln()).collect();
    let line = fit_line(&x, &y)?;
    Some(EnergyFit { exponent: line.slope, amplitude: -line.intercept.exp(), line, rows_used: used.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::PotentialSpec;
    use std::collections::BTreeMap;

    fn consts() -> Q0Constants {
        let mut moments = BTreeMap::new();
        moments.insert("0.5".to_string(), 1.25868);
        moments.insert("1".to_string(), 1.92167);
        moments.insert("1.5".to_string(), 4.26069);
        Q0Constants {
            a_star: 11.7009,
            d0: 1.26024,
            moments,
            beta_weak: 0.5 * 11.7009 * 1.26024,
            h0: 1.0,
            a_coeff: BTreeMap::new(),
            beta_strong: BTreeMap::new(),
        }
    }

    #[test]
    fn weak_prediction_matches_closed_form() {
        let c = consts();
        let p = predict(10.0, &ModelParams::new(10.0, 1.0, PotentialSpec::Zero).unwrap(), &c).unwrap();
        assert_eq!(p.regime, Regime::Weak);
        let beta = c.beta_weak;
        assert!((p.l_pred - beta / (c.a_star - 10.0)).abs() < 1e-12 * p.l_pred);
        // a comparison search pins the argmin only to ~sqrt(eps)
        assert!((p.l_heuristic / p.l_pred - 1.0).abs() < 1e-7, "{}", p.l_heuristic / p.l_pred - 1.0);
        assert!((p.e_heuristic / p.e_pred - 1.0).abs() < 1e-12);
    }

    #[test]
    fn border_coefficient_has_both_terms() {
        let c = consts();
        let params = ModelParams::new(10.0, 1.0, PotentialSpec::single((0.0, 0.0), 1.0, 1.0)).unwrap();
        let p = predict(10.0, &params, &c).unwrap();
        assert_eq!(p.regime, Regime::Border);
        assert!((p.a_coeff.unwrap() - (1.92167 + 1.26024)).abs() < 1e-12);
    }

    #[test]
    fn supercritical_prediction_is_a_domain_error() {
        let c = consts();
        let params = ModelParams::new(12.0, 1.0, PotentialSpec::Zero).unwrap();
        assert!(matches!(predict(12.0, &params, &c), Err(Error::Domain(_))));
    }

    #[test]
    fn unit_threshold_signs() {
        let t = RegimeThreshold::default();
        let a_star = 11.7;
        assert_eq!(regime_for_g(11.69, a_star, 1.0, 0.5, &t).unwrap(), GravityRegime::Balanced);
        assert_eq!(regime_for_g(11.69999, a_star, 1.0, 0.5, &t).unwrap(), GravityRegime::GravityDominated);
        assert_eq!(regime_for_g(11.69999, a_star, 1.0, 1.5, &t).unwrap(), GravityRegime::PotentialDominated);
        assert_eq!(regime_for_g(5.0, a_star, 1.0, 1.0, &t).unwrap(), GravityRegime::Balanced);
        assert_eq!(regime_for_g(5.0, a_star, 20.0, 1.0, &t).unwrap(), GravityRegime::GravityDominated);
    }

    #[test]
    fn empty_sweep_has_no_fit() {
        assert!(fit_energy(11.7, &[]).is_none());
    }
}
