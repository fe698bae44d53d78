//! Minimization on the unit sphere `h^2 sum u^2 = 1`.
//!
//! Each step moves along a preconditioned tangent direction and retracts
//! back to the sphere (clamp negatives, renormalize). The preconditioner is
//! `(sigma - Delta)^{-1}` with `sigma` the current kinetic energy, which
//! makes the natural step length close to one at every length scale.
//! Directions are combined by Polak-Ribiere conjugation with automatic
//! restarts. A step is accepted only if it does not raise the objective, so
//! the recorded sequence is non-increasing.

use std::sync::Arc;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::energy::{el_from_hu, DiscreteModel, ELResult, EnergyBreakdown, ModelParams};
use crate::error::{Error, Result};
use crate::gravity::GravityKernel;
use crate::grid::{kinetic_of_table, log_warning, normalize, Field, Grid2D, ResolutionPolicy};
use crate::groundstate::{q0_on_grid_with, reference_a_star, RadialProfile};
use crate::potentials::{singular_set, PotentialSpec};

/// A functional on the unit sphere with its half gradient.
pub trait Objective {
    fn grid(&self) -> &Grid2D;
    /// Value and `H u`, where `2 H u` is the `L^2` gradient of the unconstrained functional.
    fn value_and_hu(&self, u: &Array2<f64>) -> (f64, Array2<f64>);
    /// `value(to) - value(from)`; override when a cancellation-free form exists.
    fn change(&self, from: &Array2<f64>, to: &Array2<f64>) -> f64 {
        self.value_and_hu(to).0 - self.value_and_hu(from).0
    }
}

impl Objective for DiscreteModel {
    fn grid(&self) -> &Grid2D {
        DiscreteModel::grid(self)
    }

    fn value_and_hu(&self, u: &Array2<f64>) -> (f64, Array2<f64>) {
        let (e, hu) = self.breakdown_and_hu(u);
        (e.total, hu)
    }

    fn change(&self, from: &Array2<f64>, to: &Array2<f64>) -> f64 {
        self.energy_change(from, to).expect("tables live on the model grid")
    }
}

/// The Gagliardo-Nirenberg quotient `int |grad u|^2 / ((1/2) int u^4)` at unit mass.
/// Its minimum is `a*`.
#[derive(Clone, Debug)]
pub struct GnQuotient {
    grid: Grid2D,
}

impl GnQuotient {
    pub fn new(grid: &Grid2D) -> Self {
        GnQuotient { grid: grid.clone() }
    }
}

impl Objective for GnQuotient {
    fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn value_and_hu(&self, u: &Array2<f64>) -> (f64, Array2<f64>) {
        let (kin, lap) = self.grid.kinetic_and_neg_laplacian(u);
        let half_q = 0.5 * self.grid.cell_area() * u.iter().map(|v| v.powi(4)).sum::<f64>();
        let mut hu = lap;
        Zip::from(&mut hu).and(u).for_each(|h, &v| {
            *h = (*h * half_q - kin * v * v * v) / (half_q * half_q);
        });
        (kin / half_q, hu)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Preconditioned steepest descent.
    GradientFlow,
    /// Preconditioned Polak-Ribiere conjugate gradients.
    ConjugateGradient,
}

#[derive(Clone, Debug)]
pub enum InitSpec {
    /// Gaussian at the most singular point, else at the origin.
    Auto,
    Gaussian {
        center: (f64, f64),
        width: f64,
    },
    Q0Seed {
        center: (f64, f64),
        b: f64,
        profile: Arc<RadialProfile>,
    },
    Provided(Field),
}

#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    pub initial_step: f64,
    pub backtrack: f64,
    pub energy_tol: f64,
    pub residual_tol: f64,
    pub max_iter: usize,
    pub method: Method,
    pub init: InitSpec,
    /// Critical strength used for the domain check; computed once when absent.
    pub a_star: Option<f64>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            initial_step: 1.0,
            backtrack: 0.5,
            energy_tol: 1e-10,
            residual_tol: 1e-6,
            max_iter: 5000,
            method: Method::ConjugateGradient,
            init: InitSpec::Auto,
            a_star: None,
        }
    }
}

impl MinimizeOptions {
    fn validate(&self) -> Result<()> {
        if !(self.initial_step > 0.0) {
            return Err(Error::Config("initial step must be positive".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config("backtracking factor must lie in (0, 1)".into()));
        }
        if !(self.energy_tol > 0.0 && self.residual_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a sphere-constrained descent on a generic objective.
#[derive(Clone, Debug)]
pub struct DescentRun {
    pub field: Field,
    pub value: f64,
    pub el: ELResult,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MinimizerResult {
    pub field: Field,
    pub energy: EnergyBreakdown,
    pub el: ELResult,
    pub iterations: usize,
    pub converged: bool,
    /// Sub-grid location of the maximum of `u`.
    pub peak: (f64, f64),
    /// `1 / ||grad u||`.
    pub width: f64,
    /// Radii about the peak enclosing a quarter and three quarters of the mass.
    pub radius_quartiles: (f64, f64),
    pub history: Vec<f64>,
}

fn retract(grid: &Grid2D, u: &Array2<f64>, d: &Array2<f64>, t: f64) -> Option<Array2<f64>> {
    let mut v = u.clone();
    Zip::from(&mut v).and(d).for_each(|a, &b| {
        let s = *a + t * b;
        *a = if s > 0.0 { s } else { 0.0 };
    });
    let m = grid.inner(&v, &v);
    if !(m > 0.0 && m.is_finite()) {
        return None;
    }
    let c = 1.0 / m.sqrt();
    v.mapv_inplace(|x| x * c);
    Some(v)
}

fn axpy(y: &mut Array2<f64>, a: f64, x: &Array2<f64>) {
    Zip::from(y).and(x).for_each(|y, &x| *y += a * x);
}

/// Sphere-constrained descent from `start` (normalized on entry).
pub fn descend<O: Objective>(obj: &O, start: &Field, opts: &MinimizeOptions) -> Result<DescentRun> {
    opts.validate()?;
    let grid = obj.grid().clone();
    if !grid.same_as(start.grid()) {
        return Err(Error::GridMismatch("initial field and objective live on different grids".into()));
    }
    let mut u = normalize(start)?.into_values();
    let (mut f, mut hu) = obj.value_and_hu(&u);
    let mut evaluations = 1;
    let mut history = vec![f];
    let mut t = opts.initial_step;
    let mut rel_change = f64::INFINITY;
    let mut prev: Option<(Array2<f64>, Array2<f64>, f64)> = None; // (direction, z, <r, z>)
    let mut converged = false;
    let mut iterations = 0;
    let mut restarted = false;

    for it in 0..opts.max_iter {
        let el = el_from_hu(&grid, &u, &hu);
        if el.residual_norm <= opts.residual_tol && rel_change <= opts.energy_tol {
            converged = true;
            break;
        }
        if !f.is_finite() {
            break;
        }
        iterations = it + 1;

        let mut r = hu.clone();
        axpy(&mut r, -el.mu, &u);
        let sigma = kinetic_of_table(&grid, &u).max(1e-12);
        let pr = grid.apply_radial_symbol(&hu, |k2| 1.0 / (sigma + k2));
        let pu = grid.apply_radial_symbol(&u, |k2| 1.0 / (sigma + k2));
        let mu_p = grid.inner(&u, &pr) / grid.inner(&u, &pu);
        let mut z = pr;
        axpy(&mut z, -mu_p, &pu);
        let rz = grid.inner(&r, &z);

        let mut d = z.mapv(|v| -v);
        if let (Method::ConjugateGradient, Some((d_prev, z_prev, rz_prev)), false) = (opts.method, &prev, restarted) {
            let beta = ((rz - grid.inner(&r, z_prev)) / rz_prev).max(0.0);
            if beta > 0.0 && beta.is_finite() {
                axpy(&mut d, beta, d_prev);
                let along = grid.inner(&u, &d);
                axpy(&mut d, -along, &u);
                if grid.inner(&r, &d) >= 0.0 {
                    d = z.mapv(|v| -v);
                }
            }
        }
        // nodes pinned at zero by the retraction stay pinned
        let mut pinned = false;
        Zip::from(&mut d).and(&u).for_each(|d, &v| {
            if v <= 0.0 && *d < 0.0 {
                *d = 0.0;
                pinned = true;
            }
        });
        if pinned {
            let along = grid.inner(&u, &d);
            axpy(&mut d, -along, &u);
        }
        let slope = 2.0 * grid.inner(&r, &d);
        if !(slope < 0.0) {
            rel_change = 0.0;
            converged = el.residual_norm <= opts.residual_tol;
            break;
        }

        // backtracking with quadratic interpolation
        let mut step = (2.0 * t).min(1e3 * opts.initial_step);
        let mut accepted = None;
        while step > 1e-14 * opts.initial_step {
            if let Some(cand) = retract(&grid, &u, &d, step) {
                let (mut fc, huc) = obj.value_and_hu(&cand);
                evaluations += 1;
                if (fc - f).abs() <= 1e-9 * f.abs() {
                    // direct values are dominated by roundoff here
                    fc = f + obj.change(&u, &cand);
                }
                if fc < f {
                    accepted = Some((cand, fc, huc));
                    break;
                }
                let curv = fc - f - slope * step;
                let guess = if curv > 0.0 && curv.is_finite() { -slope * step * step / (2.0 * curv) } else { 0.0 };
                step = guess.clamp(0.1 * step, opts.backtrack * step);
            } else {
                step *= opts.backtrack;
            }
        }
        let Some((cand, fc, huc)) = accepted else {
            if restarted {
                rel_change = 0.0;
                converged = el.residual_norm <= opts.residual_tol;
                break;
            }
            // retry from steepest descent before giving up
            restarted = true;
            prev = None;
            t = opts.initial_step;
            continue;
        };
        restarted = false;
        t = step;
        rel_change = (f - fc).abs() / fc.abs().max(f64::MIN_POSITIVE);
        prev = Some((d, z, rz));
        u = cand;
        f = fc;
        hu = huc;
        history.push(f);
    }

    let el = el_from_hu(&grid, &u, &hu);
    if !converged && el.residual_norm <= opts.residual_tol && rel_change <= opts.energy_tol {
        converged = true;
    }
    Ok(DescentRun {
        field: Field::from_table_clamped(&grid, u)?,
        value: f,
        el,
        iterations,
        evaluations,
        converged,
        history,
    })
}

/// Normalized initial field.
pub fn init_field(spec: &InitSpec, grid: &Grid2D, potential: &PotentialSpec) -> Result<Field> {
    match spec {
        InitSpec::Auto => {
            let center = default_center(potential);
            gaussian(grid, center, 1.0)
        }
        InitSpec::Gaussian { center, width } => gaussian(grid, *center, *width),
        InitSpec::Q0Seed { center, b, profile } => q0_on_grid_with(profile, grid, *center, *b, ResolutionPolicy::Warn),
        InitSpec::Provided(u) => {
            if !u.grid().same_as(grid) {
                return Err(Error::GridMismatch("provided initial field is on another grid".into()));
            }
            normalize(u)
        }
    }
}

fn gaussian(grid: &Grid2D, center: (f64, f64), width: f64) -> Result<Field> {
    if !(width > 0.0) {
        return Err(Error::Config(format!("Gaussian width must be positive, got {width}")));
    }
    let s = 0.5 / (width * width);
    normalize(&Field::from_fn(grid, |x, y| (-s * ((x - center.0).powi(2) + (y - center.1).powi(2))).exp())?)
}

/// Seed location: a most singular point, else the origin.
pub fn default_center(potential: &PotentialSpec) -> (f64, f64) {
    singular_set(potential).and_then(|s| s.z.first().copied()).unwrap_or((0.0, 0.0))
}

/// Minimizes the energy of `model`.
pub fn minimize_model(model: &DiscreteModel, opts: &MinimizeOptions) -> Result<MinimizerResult> {
    let a_star = match opts.a_star {
        Some(v) => v,
        None => reference_a_star()?,
    };
    let a = model.params().a;
    if a >= a_star {
        return Err(Error::Domain(format!("a = {a} is not below a* = {a_star}; E(a) = -inf for all a >= a*")));
    }
    let start = init_field(&opts.init, model.grid(), &model.params().potential)?;
    let run = descend(model, &start, opts)?;
    let energy = model.evaluate(&run.field)?;
    let peak = peak_location(&run.field);
    let kin = energy.kinetic;
    Ok(MinimizerResult {
        radius_quartiles: radius_quartiles(&run.field, peak),
        width: if kin > 0.0 { 1.0 / kin.sqrt() } else { f64::INFINITY },
        peak,
        energy,
        el: run.el,
        iterations: run.iterations,
        converged: run.converged,
        history: run.history,
        field: run.field,
    })
}

pub fn minimize(params: &ModelParams, kernel: &Arc<GravityKernel>, opts: &MinimizeOptions) -> Result<MinimizerResult> {
    let model = DiscreteModel::with_kernel(params, kernel.clone())?;
    minimize_model(&model, opts)
}

/// One run per most-singular point; the lowest energy wins.
#[derive(Clone, Debug)]
pub struct MultiStartResult {
    pub runs: Vec<((f64, f64), MinimizerResult)>,
    pub best: usize,
    /// Several runs tie with the best energy to within `1e-8`.
    pub degenerate: bool,
}

pub fn minimize_over_singular_set(
    model: &DiscreteModel,
    opts: &MinimizeOptions,
    width: f64,
) -> Result<MultiStartResult> {
    let centers = singular_set(&model.params().potential)
        .map(|s| s.z)
        .filter(|z| !z.is_empty())
        .unwrap_or_else(|| vec![(0.0, 0.0)]);
    let mut runs = Vec::with_capacity(centers.len());
    for c in centers {
        let o = MinimizeOptions { init: InitSpec::Gaussian { center: c, width }, ..opts.clone() };
        runs.push((c, minimize_model(model, &o)?));
    }
    let best = (0..runs.len())
        .min_by(|&i, &j| runs[i].1.energy.total.total_cmp(&runs[j].1.energy.total))
        .expect("at least one run");
    let e0 = runs[best].1.energy.total;
    let ties = runs.iter().filter(|r| (r.1.energy.total - e0).abs() <= 1e-8 * e0.abs().max(1.0)).count();
    Ok(MultiStartResult { runs, best, degenerate: ties > 1 })
}

/// Maximum of `u` refined by a parabola through the neighbouring nodes.
pub fn peak_location(u: &Field) -> (f64, f64) {
    let g = u.grid();
    let v = u.values();
    let n = g.n();
    let (i, j) = u.argmax();
    let refine = |m: f64, c: f64, p: f64| {
        let den = m - 2.0 * c + p;
        if den < 0.0 {
            (0.5 * (m - p) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    let h = g.spacing();
    let dx = if i > 0 && i + 1 < n { refine(v[[i - 1, j]], v[[i, j]], v[[i + 1, j]]) } else { 0.0 };
    let dy = if j > 0 && j + 1 < n { refine(v[[i, j - 1]], v[[i, j]], v[[i, j + 1]]) } else { 0.0 };
    (g.coord(i) + dx * h, g.coord(j) + dy * h)
}

pub fn radius_quartiles(u: &Field, center: (f64, f64)) -> (f64, f64) {
    let g = u.grid();
    let h2 = g.cell_area();
    let mut pts: Vec<(f64, f64)> = u
        .values()
        .indexed_iter()
        .map(|((i, j), v)| ((g.coord(i) - center.0).hypot(g.coord(j) - center.1), h2 * v * v))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    let (mut q1, mut q3) = (f64::NAN, f64::NAN);
    for (r, w) in pts {
        acc += w;
        if q1.is_nan() && acc >= 0.25 * total {
            q1 = r;
        }
        if acc >= 0.75 * total {
            q3 = r;
            break;
        }
    }
    (q1, q3)
}

/// Radial symmetry diagnostics about `center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialCheck {
    /// Largest `|u - <u>_r|` relative to the peak value.
    pub deviation: f64,
    /// Largest increase of the shell average with radius, relative to the peak.
    pub monotonicity_violation: f64,
}

/// Compares `u` with its shell-averaged radial profile around `center`,
/// inside the disc where `u` exceeds `1e-6` of its peak. The profile is
/// interpolated linearly in the mean radius of each shell of width `h`.
pub fn radial_check(u: &Field, center: (f64, f64)) -> RadialCheck {
    let g = u.grid();
    let h = g.spacing();
    let top = u.values().iter().copied().fold(0.0, f64::max);
    let bins = (2.0 * g.half_width() / h) as usize + 2;
    let mut sum = vec![0.0; bins];
    let mut rsum = vec![0.0; bins];
    let mut cnt = vec![0usize; bins];
    let radius = |i: usize, j: usize| (g.coord(i) - center.0).hypot(g.coord(j) - center.1);
    for ((i, j), v) in u.values().indexed_iter() {
        let r = radius(i, j);
        let b = (r / h).round() as usize;
        if b < bins {
            sum[b] += v;
            rsum[b] += r;
            cnt[b] += 1;
        }
    }
    let shells: Vec<(f64, f64)> = (0..bins)
        .filter(|&b| cnt[b] > 0)
        .map(|b| (rsum[b] / cnt[b] as f64, sum[b] / cnt[b] as f64))
        .take_while(|s| s.1 > 1e-6 * top)
        .collect();
    let profile = |r: f64| -> Option<f64> {
        let k = shells.partition_point(|s| s.0 <= r);
        if k == 0 {
            return shells.first().map(|s| s.1);
        }
        let (r0, v0) = shells[k - 1];
        let &(r1, v1) = shells.get(k)?;
        Some(v0 + (v1 - v0) * (r - r0) / (r1 - r0))
    };
    let mut deviation: f64 = 0.0;
    for ((i, j), v) in u.values().indexed_iter() {
        if let Some(p) = profile(radius(i, j)) {
            deviation = deviation.max((v - p).abs());
        }
    }
    let violation = shells.windows(2).map(|w| w[1].1 - w[0].1).fold(0.0, f64::max);
    RadialCheck { deviation: deviation / top, monotonicity_violation: violation / top }
}

/// Warns when a weak-regime minimizer near `a*` is expected to be under-resolved.
pub fn check_weak_resolution(beta: f64, a_star: f64, a: f64, h: f64) {
    let scale = beta / (a_star - a) * h;
    if scale > 0.5 {
        log_warning(&format!("expected blow-up scale times h is {scale:.3}; the minimizer is under-resolved"));
    }
}

/// `inf J` over unit-mass fields on the grid, an estimate of `a*`.
pub fn gn_minimum(grid: &Grid2D, start: &Field, opts: &MinimizeOptions) -> Result<DescentRun> {
    descend(&GnQuotient::new(grid), start, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::ModelParams;

    fn opts() -> MinimizeOptions {
        MinimizeOptions { a_star: Some(11.700896524557), ..MinimizeOptions::default() }
    }

    #[test]
    fn harmonic_ground_state() {
        let grid = Grid2D::new(8.0, 64).unwrap();
        let model =
            DiscreteModel::new(&ModelParams::new(0.0, 0.0, PotentialSpec::Trap { q: 2.0 }).unwrap(), &grid).unwrap();
        let o = MinimizeOptions { init: InitSpec::Gaussian { center: (0.5, -0.3), width: 2.0 }, ..opts() };
        let r = minimize_model(&model, &o).unwrap();
        assert!(r.converged);
        assert!((r.energy.total - 2.0).abs() < 1e-3, "{}", r.energy.total);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn supercritical_strength_is_rejected() {
        let grid = Grid2D::new(8.0, 32).unwrap();
        let model = DiscreteModel::new(&ModelParams::new(12.0, 1.0, PotentialSpec::Zero).unwrap(), &grid).unwrap();
        assert!(matches!(minimize_model(&model, &opts()), Err(Error::Domain(_))));
    }

    #[test]
    fn spreading_case_does_not_converge() {
        let grid = Grid2D::new(8.0, 32).unwrap();
        let model = DiscreteModel::new(&ModelParams::new(0.0, 0.0, PotentialSpec::Zero).unwrap(), &grid).unwrap();
        let o = MinimizeOptions { max_iter: 50, ..opts() };
        let r = minimize_model(&model, &o).unwrap();
        assert!(!r.converged);
        assert!(r.energy.total > 0.0 && r.energy.total < 0.2);
    }

    #[test]
    fn gaussian_init_has_unit_mass() {
        let grid = Grid2D::new(8.0, 32).unwrap();
        let u =
            init_field(&InitSpec::Gaussian { center: (0.0, 0.0), width: 1.0 }, &grid, &PotentialSpec::Zero).unwrap();
        assert!((crate::grid::mass(&u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auto_init_sits_on_the_singularity() {
        let spec = PotentialSpec::single((1.0, 2.0), 1.5, 1.0);
        assert_eq!(default_center(&spec), (1.0, 2.0));
        assert_eq!(default_center(&PotentialSpec::Trap { q: 2.0 }), (0.0, 0.0));
    }
}
