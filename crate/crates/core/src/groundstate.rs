//! The Townes profile: the positive radial solution of
//! `-Delta Q + Q - Q^3 = 0` in the plane, and the constants built from
//! `Q0 = Q / ||Q||`.
//!
//! `Q(0)` is found by bisection between trajectories that cross zero
//! (too large) and trajectories that turn back up (too small). Because the
//! decaying solution is a separatrix, any outward shot eventually departs
//! from it; the stored profile is therefore polished by matching the
//! outward solution to an inward one started from the `c K0(r)` tail at
//! `r_max`, so that the profile is smooth all the way to the truncation
//! radius.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{log_warning, normalize, Field, Grid2D, ResolutionPolicy};
use crate::quadrature::simpson;

const BRACKET: (f64, f64) = (1.0, 5.0);

/// Q(r) on a uniform radial mesh `r_i = i dr`, `0 <= r_i <= r_max`.
#[derive(Clone, Debug)]
pub struct RadialProfile {
    r_mesh: Vec<f64>,
    q_values: Vec<f64>,
    dq_values: Vec<f64>,
    q0_initial: f64,
    dr: f64,
    r_max: f64,
    a_star: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootingOptions {
    pub dr: f64,
    pub r_max: f64,
    pub tol: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions { dr: 1e-4, r_max: 20.0, tol: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shot {
    /// Q turned back up before reaching zero: Q(0) too small.
    Under,
    /// Q crossed zero: Q(0) too large.
    Over,
    /// Neither happened before r_max.
    Undecided,
}

type State = [f64; 2];

fn rhs(r: f64, y: State) -> State {
    [y[1], -y[1] / r + y[0] - y[0] * y[0] * y[0]]
}

fn rk4_step(r: f64, y: State, h: f64) -> State {
    let k1 = rhs(r, y);
    let k2 = rhs(r + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
    let k3 = rhs(r + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
    let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Regular series at the origin: `Q = s + c2 r^2 + c4 r^4`.
fn series_start(s: f64, r: f64) -> State {
    let c2 = (s - s * s * s) / 4.0;
    let c4 = c2 * (1.0 - 3.0 * s * s) / 16.0;
    [s + c2 * r * r + c4 * r.powi(4), 2.0 * c2 * r + 4.0 * c4 * r.powi(3)]
}

fn classify(s: f64, dr: f64, steps: usize) -> Shot {
    let mut y = series_start(s, dr);
    for i in 1..steps {
        let r = i as f64 * dr;
        y = rk4_step(r, y, dr);
        if y[0] < 0.0 {
            return Shot::Over;
        }
        if y[1] > 0.0 {
            return Shot::Under;
        }
    }
    // the constant solution Q = 1 and its neighbours never decay
    if y[0] > 1e-3 * s {
        Shot::Under
    } else {
        Shot::Undecided
    }
}

/// Outward trajectory on mesh points `0..=last`.
fn integrate_out(s: f64, dr: f64, last: usize) -> Vec<State> {
    let mut out = Vec::with_capacity(last + 1);
    out.push([s, 0.0]);
    if last == 0 {
        return out;
    }
    let mut y = series_start(s, dr);
    out.push(y);
    for i in 1..last {
        y = rk4_step(i as f64 * dr, y, dr);
        out.push(y);
    }
    out
}

/// Inward trajectory from `steps * dr` down to `first * dr`, started on the
/// decaying tail `c K0(r)`; element `k` is at mesh index `first + k`.
fn integrate_in(c: f64, dr: f64, first: usize, steps: usize) -> Vec<State> {
    let r_end = steps as f64 * dr;
    let mut y = [c * puruspe::Kn(0, r_end), -c * puruspe::Kn(1, r_end)];
    let mut rev = Vec::with_capacity(steps - first + 1);
    rev.push(y);
    for i in (first + 1..=steps).rev() {
        y = rk4_step(i as f64 * dr, y, -dr);
        rev.push(y);
    }
    rev.reverse();
    rev
}

fn mismatch(s: f64, c: f64, dr: f64, m: usize, steps: usize) -> [f64; 2] {
    let out = integrate_out(s, dr, m);
    let inn = integrate_in(c, dr, m, steps);
    [out[m][0] - inn[0][0], out[m][1] - inn[0][1]]
}

/// Shooting solver for the Townes equation.
pub fn solve_q(dr: f64, r_max: f64, tol: f64) -> Result<RadialProfile> {
    if !(dr > 0.0 && r_max >= 12.0 && dr <= 1e-3 * r_max) {
        return Err(Error::Config(format!(
            "need r_max >= 12 and 0 < dr <= 1e-3 r_max, got dr = {dr}, r_max = {r_max}"
        )));
    }
    if !(tol > 0.0 && tol <= 1e-10) {
        return Err(Error::Config(format!("bisection tolerance must lie in (0, 1e-10], got {tol}")));
    }
    let steps = (r_max / dr).round() as usize;
    let dr = r_max / steps as f64;

    let (mut lo, mut hi) = BRACKET;
    if classify(lo, dr, steps) != Shot::Under || classify(hi, dr, steps) != Shot::Over {
        return Err(Error::Solver(format!("no shooting bracket for Q(0) in [{lo}, {hi}]")));
    }
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        match classify(mid, dr, steps) {
            Shot::Under => lo = mid,
            Shot::Over => hi = mid,
            Shot::Undecided => {
                lo = mid;
                hi = mid;
            }
        }
    }
    let s0 = 0.5 * (lo + hi);

    // Matching radius: where the outward shot is still insensitive to the
    // last bit of Q(0); the inward leg carries the full nonlinearity.
    let trial = integrate_out(s0, dr, steps);
    let m = trial
        .iter()
        .position(|y| y[0] < 1e-2 * s0 || y[1] > 0.0)
        .ok_or_else(|| Error::Solver("outward solution never decays".into()))?;
    if trial[m][1] > 0.0 || m < 10 {
        return Err(Error::Solver("outward solution departs before reaching its tail".into()));
    }
    let rm = m as f64 * dr;
    let mut s = s0;
    let mut c = trial[m][0] / puruspe::Kn(0, rm);
    let mut best = (f64::INFINITY, s, c);
    for _ in 0..12 {
        let f = mismatch(s, c, dr, m, steps);
        let size = f[0].abs().max(f[1].abs());
        if size < best.0 {
            best = (size, s, c);
        }
        if size < 1e-16 * s {
            break;
        }
        let ds = 1e-9 * s;
        let dc = 1e-7 * c;
        let fs = mismatch(s + ds, c, dr, m, steps);
        let fc = mismatch(s, c + dc, dr, m, steps);
        let j = [[(fs[0] - f[0]) / ds, (fc[0] - f[0]) / dc], [(fs[1] - f[1]) / ds, (fc[1] - f[1]) / dc]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Solver("singular matching Jacobian".into()));
        }
        let step_s = (f[0] * j[1][1] - f[1] * j[0][1]) / det;
        let step_c = (j[0][0] * f[1] - j[1][0] * f[0]) / det;
        s -= step_s;
        c -= step_c;
    }
    let (_, s, c) = best;
    if (s - s0).abs() > 1e-6 {
        return Err(Error::Solver(format!("tail matching moved Q(0) from {s0} to {s}")));
    }

    let out = integrate_out(s, dr, m);
    let inn = integrate_in(c, dr, m, steps);
    let mut q_values = Vec::with_capacity(steps + 1);
    let mut dq_values = Vec::with_capacity(steps + 1);
    for y in out.iter().take(m) {
        q_values.push(y[0]);
        dq_values.push(y[1]);
    }
    for y in &inn {
        q_values.push(y[0]);
        dq_values.push(y[1]);
    }
    let r_mesh: Vec<f64> = (0..=steps).map(|i| i as f64 * dr).collect();

    if q_values.windows(2).any(|w| !(w[1] < w[0])) || q_values.iter().any(|q| !(*q > 0.0)) {
        return Err(Error::Solver("profile is not positive and strictly decreasing".into()));
    }
    if *q_values.last().unwrap() >= 1e-8 {
        return Err(Error::Solver(format!(
            "profile has not decayed at r_max = {r_max}: Q = {:.3e}",
            q_values.last().unwrap()
        )));
    }

    let weights: Vec<f64> = q_values.iter().zip(&r_mesh).map(|(q, r)| q * q * r).collect();
    let a_star = 2.0 * PI * simpson(&weights, dr);
    Ok(RadialProfile { r_mesh, q_values, dq_values, q0_initial: s, dr, r_max, a_star })
}

/// `a*` from the default shooting parameters, computed once per process.
pub fn reference_a_star() -> Result<f64> {
    static CELL: OnceLock<std::result::Result<f64, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let o = ShootingOptions::default();
        solve_q(o.dr, o.r_max, o.tol).map(|p| p.a_star()).map_err(|e| e.to_string())
    })
    .clone()
    .map_err(Error::Solver)
}

pub fn solve_q_with(opts: &ShootingOptions) -> Result<RadialProfile> {
    solve_q(opts.dr, opts.r_max, opts.tol)
}

/// `a* = int |Q|^2` (composite Simpson on the profile mesh).
pub fn a_star(profile: &RadialProfile) -> f64 {
    profile.a_star
}

impl RadialProfile {
    pub fn r_mesh(&self) -> &[f64] {
        &self.r_mesh
    }

    pub fn q_values(&self) -> &[f64] {
        &self.q_values
    }

    pub fn dq_values(&self) -> &[f64] {
        &self.dq_values
    }

    /// The converged shooting parameter `Q(0)`.
    pub fn q0_initial(&self) -> f64 {
        self.q0_initial
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn a_star(&self) -> f64 {
        self.a_star
    }

    /// `Q(r)` by cubic Hermite interpolation; zero beyond `r_max`.
    pub fn q_at(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.r_max {
            return 0.0;
        }
        let t = r / self.dr;
        let i = (t.floor() as usize).min(self.q_values.len() - 2);
        let s = t - i as f64;
        let (y0, y1) = (self.q_values[i], self.q_values[i + 1]);
        let (d0, d1) = (self.dq_values[i] * self.dr, self.dq_values[i + 1] * self.dr);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }

    /// `Q0(r) = Q(r) / sqrt(a*)`.
    pub fn q0_at(&self, r: f64) -> f64 {
        self.q_at(r) / self.a_star.sqrt()
    }

    /// Residual of the central-difference ODE `Q'' + Q'/r - Q + Q^3` at interior nodes.
    pub fn ode_residual_sup(&self) -> f64 {
        let q = &self.q_values;
        let h = self.dr;
        (1..q.len() - 1)
            .map(|i| {
                let r = self.r_mesh[i];
                let d2 = (q[i + 1] - 2.0 * q[i] + q[i - 1]) / (h * h);
                let d1 = (q[i + 1] - q[i - 1]) / (2.0 * h);
                (d2 + d1 / r - q[i] + q[i].powi(3)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Copy of the profile on every `stride`-th mesh point.
    pub fn resampled(&self, stride: usize) -> RadialProfile {
        let pick = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<_>>();
        let r_mesh = pick(&self.r_mesh);
        let q_values = pick(&self.q_values);
        let dq_values = pick(&self.dq_values);
        let dr = self.dr * stride as f64;
        let r_max = *r_mesh.last().unwrap();
        let weights: Vec<f64> = q_values.iter().zip(&r_mesh).map(|(q, r)| q * q * r).collect();
        let a_star = 2.0 * PI * simpson(&weights, dr);
        RadialProfile { r_mesh, q_values, dq_values, q0_initial: self.q0_initial, dr, r_max, a_star }
    }

    fn radial_integral(&self, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let vals: Vec<f64> = self
            .r_mesh
            .iter()
            .zip(self.q_values.iter().zip(&self.dq_values))
            .map(|(r, (q, dq))| f(*r, *q, *dq))
            .collect();
        2.0 * PI * simpson(&vals, self.dr)
    }
}

/// The normalization identities `int Q0^2 = int |grad Q0|^2 = (a*/2) int Q0^4 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Q0Identities {
    pub mass: f64,
    pub kinetic: f64,
    pub quartic: f64,
}

pub fn q0_identities(profile: &RadialProfile) -> Q0Identities {
    let a = profile.a_star;
    let mass = profile.radial_integral(|r, q, _| q * q * r) / a;
    let kinetic = profile.radial_integral(|r, _, dq| dq * dq * r) / a;
    let quartic = 0.5 * a * profile.radial_integral(|r, q, _| q.powi(4) * r) / (a * a);
    Q0Identities { mass, kinetic, quartic }
}

/// `I(p) = int Q0^2 / |x|^p` for `0 < p < 2`.
///
/// The first `NEAR_CELLS` cells use the exact integral of `r^{1-p}` against
/// an even quartic least-squares fit of `Q0^2`; the rest is Simpson.
pub fn singular_moment(profile: &RadialProfile, p: f64) -> Result<f64> {
    const NEAR_CELLS: usize = 200;
    if !(p > 0.0 && p < 2.0) {
        return Err(Error::Domain(format!("moment exponent must lie in (0, 2), got {p}")));
    }
    let a = profile.a_star;
    let rho: Vec<f64> = profile.q_values.iter().map(|q| q * q / a).collect();
    let k = NEAR_CELLS.min(rho.len() / 4);
    let rk = profile.r_mesh[k];

    // least squares for rho ~ c0 + c1 r^2 + c2 r^4 on [0, r_k], in the scaled variable t = r / r_k
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for i in 0..=k {
        let t2 = (profile.r_mesh[i] / rk).powi(2);
        let basis = [1.0, t2, t2 * t2];
        for a_ in 0..3 {
            atb[a_] += basis[a_] * rho[i];
            for b in 0..3 {
                ata[a_][b] += basis[a_] * basis[b];
            }
        }
    }
    let c = solve3(ata, atb).ok_or_else(|| Error::Solver("degenerate near-origin fit".into()))?;
    let near = rk.powf(2.0 - p) * (c[0] / (2.0 - p) + c[1] / (4.0 - p) + c[2] / (6.0 - p));

    let far_vals: Vec<f64> = (k..rho.len()).map(|i| rho[i] * profile.r_mesh[i].powf(1.0 - p)).collect();
    let far = simpson(&far_vals, profile.dr);
    Ok(2.0 * PI * (near + far))
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = b[row];
        }
        *o = det(&mc) / d;
    }
    Some(out)
}

/// `D0 = int int Q0(x)^2 Q0(y)^2 / |x - y|`.
///
/// Computed in Fourier space: with `rho_hat(k) = 2 pi int rho(r) J0(k r) r dr`
/// and the planar transform `2 pi / |k|` of `1/|x|`, the double integral
/// reduces to `int_0^inf rho_hat(k)^2 dk`. The profile is subsampled to a
/// step of about 0.005 for the Hankel transform, and `k` runs to 40 where
/// `rho_hat` has decayed below `1e-10`.
pub fn gravity_constant(profile: &RadialProfile) -> f64 {
    const K_MAX: f64 = 40.0;
    const K_STEPS: usize = 4000;
    let stride = ((0.005 / profile.dr).round() as usize).max(1);
    let a = profile.a_star;
    let r: Vec<f64> = profile.r_mesh.iter().step_by(stride).copied().collect();
    let w: Vec<f64> = profile.q_values.iter().step_by(stride).zip(&r).map(|(q, r)| q * q / a * r).collect();
    let dr = profile.dr * stride as f64;
    let dk = K_MAX / K_STEPS as f64;
    let mut buf = vec![0.0; r.len()];
    let hat: Vec<f64> = (0..=K_STEPS)
        .map(|j| {
            let k = j as f64 * dk;
            for ((b, ri), wi) in buf.iter_mut().zip(&r).zip(&w) {
                *b = wi * puruspe::Jn(0, k * ri);
            }
            let v = 2.0 * PI * simpson(&buf, dr);
            v * v
        })
        .collect();
    simpson(&hat, dk)
}

/// Blow-up constants derived from `Q0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Q0Constants {
    pub a_star: f64,
    #[serde(rename = "D0")]
    pub d0: f64,
    /// `I(p)` keyed by the decimal form of `p`.
    #[serde(rename = "I")]
    pub moments: BTreeMap<String, f64>,
    pub beta_weak: f64,
    pub h0: f64,
    /// `A(p, h0)` for the requested `p >= 1`.
    #[serde(rename = "A")]
    pub a_coeff: BTreeMap<String, f64>,
    /// `beta(p, h0) = (p a* A / 2)^{1/(2-p)}` for the requested `p >= 1`.
    pub beta_strong: BTreeMap<String, f64>,
}

pub fn p_key(p: f64) -> String {
    format!("{p}")
}

/// `A(p, h0)`: the singular moment, plus `D0` on the border `p = 1`.
pub fn a_coefficient(p: f64, h0: f64, moment: f64, d0: f64) -> f64 {
    if p == 1.0 {
        h0 * moment + d0
    } else {
        h0 * moment
    }
}

/// Minimizer of `l^2 / a* - l^p A` over `l > 0`.
pub fn beta_strong(p: f64, a_star: f64, a: f64) -> f64 {
    (p * a_star * a / 2.0).powf(1.0 / (2.0 - p))
}

pub fn q0_constants(profile: &RadialProfile, p_list: &[f64], h0: f64) -> Result<Q0Constants> {
    if !(h0 >= 0.0 && h0.is_finite()) {
        return Err(Error::Domain(format!("h0 must be nonnegative, got {h0}")));
    }
    let a_star = profile.a_star;
    let d0 = gravity_constant(profile);
    let mut moments = BTreeMap::new();
    let mut a_coeff = BTreeMap::new();
    let mut beta = BTreeMap::new();
    for &p in p_list {
        let m = singular_moment(profile, p)?;
        moments.insert(p_key(p), m);
        if p >= 1.0 {
            let a = a_coefficient(p, h0, m, d0);
            a_coeff.insert(p_key(p), a);
            beta.insert(p_key(p), beta_strong(p, a_star, a));
        }
    }
    Ok(Q0Constants { a_star, d0, moments, beta_weak: 0.5 * a_star * d0, h0, a_coeff, beta_strong: beta })
}

impl Q0Constants {
    pub fn moment(&self, p: f64) -> Option<f64> {
        self.moments.get(&p_key(p)).copied()
    }
}

/// `b Q0(b |x - center|)` on the grid, renormalized to unit discrete mass.
pub fn q0_on_grid(profile: &RadialProfile, grid: &Grid2D, center: (f64, f64), b: f64) -> Result<Field> {
    q0_on_grid_with(profile, grid, center, b, ResolutionPolicy::Error)
}

pub fn q0_on_grid_with(
    profile: &RadialProfile,
    grid: &Grid2D,
    center: (f64, f64),
    b: f64,
    policy: ResolutionPolicy,
) -> Result<Field> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Domain(format!("scale must be positive, got {b}")));
    }
    let bh = b * grid.spacing();
    if bh > 0.5 {
        let msg = format!("b h = {bh:.3} exceeds 0.5; b Q0(b x) is under-resolved");
        match policy {
            ResolutionPolicy::Error => return Err(Error::Resolution(msg)),
            ResolutionPolicy::Warn => log_warning(&msg),
            ResolutionPolicy::Ignore => {}
        }
    }
    let n = grid.n();
    let table = Array2::from_shape_fn((n, n), |(i, j)| {
        let dx = grid.coord(i) - center.0;
        let dy = grid.coord(j) - center.1;
        b * profile.q0_at(b * (dx * dx + dy * dy).sqrt())
    });
    normalize(&Field::new(grid, table)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_options() {
        assert!(matches!(solve_q(1e-4, 10.0, 1e-12), Err(Error::Config(_))));
        assert!(matches!(solve_q(0.1, 20.0, 1e-12), Err(Error::Config(_))));
        assert!(matches!(solve_q(1e-3, 20.0, 1e-6), Err(Error::Config(_))));
    }

    #[test]
    fn series_start_satisfies_the_ode() {
        let s = 2.2;
        let r = 1e-2;
        let y = series_start(s, r);
        let h = 1e-4;
        let yp = series_start(s, r + h);
        let ym = series_start(s, r - h);
        let d2 = (yp[0] - 2.0 * y[0] + ym[0]) / (h * h);
        let res = d2 + y[1] / r - y[0] + y[0].powi(3);
        assert!(res.abs() < 1e-5, "residual {res}");
    }

    #[test]
    fn shots_are_classified_by_their_fate() {
        assert_eq!(classify(1.0, 1e-3, 20_000), Shot::Under);
        assert_eq!(classify(5.0, 1e-3, 20_000), Shot::Over);
    }

    #[test]
    fn coarse_profile_is_positive_and_decreasing() {
        let p = solve_q(1e-3, 20.0, 1e-11).unwrap();
        assert!((p.q0_initial() - 2.2062).abs() < 1e-3);
        assert!(p.q_values().windows(2).all(|w| w[1] < w[0]));
        assert!(*p.q_values().last().unwrap() < 1e-8);
        assert!((p.a_star() - 11.7009).abs() < 1e-3);
    }

    #[test]
    fn moment_rejects_p_outside_range() {
        let p = solve_q(1e-3, 20.0, 1e-11).unwrap();
        assert!(matches!(singular_moment(&p, 2.0), Err(Error::Domain(_))));
        assert!(matches!(singular_moment(&p, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn a_coefficient_case_split() {
        assert_eq!(a_coefficient(1.5, 2.0, 3.0, 7.0), 6.0);
        assert_eq!(a_coefficient(1.0, 2.0, 3.0, 7.0), 13.0);
    }
}
