//! Discrete energies against independent one-dimensional quadratures.

use std::f64::consts::PI;
use std::sync::Arc;

use gpcollapse::energy::{DiscreteModel, ModelParams};
use gpcollapse::gravity::{build_kernel, gravity_energy};
use gpcollapse::grid::{kinetic_energy, mass, normalize, Field, Grid2D};
use gpcollapse::groundstate::{q0_constants, q0_identities, q0_on_grid, solve_q, RadialProfile};
use gpcollapse::potentials::PotentialSpec;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let m = 2 * panels;
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m).map(|k| f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// `2 pi int_0^R r^{1-p} f(r) dr`, with `r = t^2` to tame the origin.
fn radial_moment(f: impl Fn(f64) -> f64, p: f64, r_max: f64) -> f64 {
    2.0 * PI * simpson(|t| 2.0 * t.powf(3.0 - 2.0 * p) * f(t * t), 0.0, r_max.sqrt(), 4000)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn profile() -> RadialProfile {
    solve_q(1e-4, 20.0, 1e-12).unwrap()
}

#[test]
fn shifted_gaussian_terms() {
    let (w, c, p, a, g) = (0.7, (0.25, -0.125), 0.5, 2.0, 1.5);
    let grid = Grid2D::new(8.0, 256).unwrap();
    let u = Field::from_fn(&grid, |x, y| (-((x - c.0).powi(2) + (y - c.1).powi(2)) / (2.0 * w * w)).exp()).unwrap();
    let u = normalize(&u).unwrap();
    let params = ModelParams::new(a, g, PotentialSpec::single(c, p, 1.0)).unwrap();
    let e = DiscreteModel::new(&params, &grid).unwrap().evaluate(&u).unwrap();

    let rho = |r: f64| (-r * r / (w * w)).exp() / (PI * w * w);
    let dens_grad = |r: f64| (r / (w * w)).powi(2) * rho(r);
    let r_max = 12.0 * w;
    let kinetic = radial_moment(dens_grad, 0.0, r_max);
    let singular = radial_moment(rho, p, r_max);
    let quartic = radial_moment(|r| rho(r) * rho(r), 0.0, r_max);
    // x - y of two independent copies has the law of a Gaussian with twice the variance
    let gravity = radial_moment(|s| (-s * s / (2.0 * w * w)).exp() / (2.0 * PI * w * w), 1.0, 16.0 * w);

    assert!((mass(&u) - 1.0).abs() < 1e-12);
    assert!(rel(e.kinetic, kinetic) < 1e-8, "kinetic {} vs {kinetic}", e.kinetic);
    assert!(rel(e.potential, -singular) < 1e-3, "potential {} vs {}", e.potential, -singular);
    assert!(rel(e.quartic, 0.5 * a * quartic) < 1e-8, "quartic {} vs {}", e.quartic, 0.5 * a * quartic);
    assert!(rel(e.gravity, g * gravity) < 1e-3, "gravity {} vs {}", e.gravity, g * gravity);
    assert!((e.total - (e.kinetic + e.potential - e.quartic - e.gravity)).abs() < 1e-12);
}

#[test]
fn townes_constants() {
    let prof = profile();
    let consts = q0_constants(&prof, &[0.5, 1.0, 1.5], 1.0).unwrap();
    assert!((consts.a_star - 11.700896524557).abs() < 1e-8, "a* = {}", consts.a_star);
    let ids = q0_identities(&prof);
    for v in [ids.mass, ids.kinetic, ids.quartic] {
        assert!((v - 1.0).abs() < 1e-6, "{ids:?}");
    }
    for (p, frozen) in [(0.5, 1.25868288), (1.0, 1.92167349), (1.5, 4.26068827)] {
        let oracle = radial_moment(|r| prof.q0_at(r).powi(2), p, 19.0);
        let m = consts.moment(p).unwrap();
        assert!(rel(m, oracle) < 1e-7, "I({p}) = {m}, quadrature {oracle}");
        assert!(rel(m, frozen) < 1e-7, "I({p}) = {m}, frozen {frozen}");
    }
    assert!(rel(consts.beta_weak, 0.5 * consts.a_star * consts.d0) < 1e-15);
    assert!(rel(consts.a_coeff["1"], consts.moment(1.0).unwrap() + consts.d0) < 1e-15);
}

#[test]
fn gravity_constant_matches_grid_kernel() {
    let prof = Arc::new(profile());
    let consts = q0_constants(&prof, &[], 1.0).unwrap();
    let grid = Grid2D::new(10.0, 256).unwrap();
    let u = q0_on_grid(&prof, &grid, (0.0, 0.0), 1.0).unwrap();
    let d = gravity_energy(&u, &build_kernel(&grid)).unwrap();
    assert!(rel(d, consts.d0) < 1e-3, "grid {d} vs {}", consts.d0);
    assert!((kinetic_energy(&u) - 1.0).abs() < 1e-3);
}

#[test]
fn harmonic_gaussian_is_stationary() {
    let grid = Grid2D::new(8.0, 64).unwrap();
    let u = normalize(&Field::from_fn(&grid, |x, y| (-(x * x + y * y) / 2.0).exp()).unwrap()).unwrap();
    let model =
        DiscreteModel::new(&ModelParams::new(0.0, 0.0, PotentialSpec::Trap { q: 2.0 }).unwrap(), &grid).unwrap();
    let el = model.el_residual(&u).unwrap();
    assert!((el.mu - 2.0).abs() < 1e-10, "mu = {}", el.mu);
    assert!(el.residual_norm < 1e-10, "residual = {}", el.residual_norm);
}
