use std::sync::Arc;

use gpcollapse::energy::{DiscreteModel, ModelParams};
use gpcollapse::grid::{mass, normalize, Field, Grid2D};
use gpcollapse::groundstate::{q0_constants, solve_q};
use gpcollapse::minimizer::{minimize_model, minimize_over_singular_set, InitSpec, MinimizeOptions};
use gpcollapse::potentials::{Envelope, PotentialSpec, SingularPoint};
use gpcollapse::verify::random_directions;
use gpcollapse::Error;

const A_STAR: f64 = 11.700896524557148;

fn opts(init: InitSpec) -> MinimizeOptions {
    MinimizeOptions { init, a_star: Some(A_STAR), ..Default::default() }
}

#[test]
fn gradient_agrees_with_central_differences() {
    let grid = Grid2D::new(6.0, 64).unwrap();
    let params = ModelParams::new(0.6 * A_STAR, 1.0, PotentialSpec::single((0.0, 0.0), 0.5, 1.0)).unwrap();
    let model = DiscreteModel::new(&params, &grid).unwrap();
    let u = Field::from_fn(&grid, |x, y| (-(x * x + 0.5 * y * y) / 2.0).exp() * (1.0 + 0.1 * x)).unwrap();
    let u = normalize(&u).unwrap();
    let grad = model.gradient(&u).unwrap();
    let h2 = grid.cell_area();
    let eps = 1e-5;
    for d in random_directions(&grid, 5, 7) {
        let e = |s: f64| model.functional(&(u.values() + &(&d * s))).unwrap().total;
        let fd = (e(eps) - e(-eps)) / (2.0 * eps);
        let analytic = h2 * (&grad * &d).sum();
        let scale = (h2 * (&grad * &grad).sum()).sqrt();
        assert!((fd - analytic).abs() < 1e-6 * scale, "fd {fd} analytic {analytic}");
        let exact = model.energy_change(&(u.values() - &(&d * eps)), &(u.values() + &(&d * eps))).unwrap();
        assert!((exact - (e(eps) - e(-eps))).abs() < 1e-10 * e(0.0).abs());
    }
}

#[test]
fn harmonic_run_keeps_invariants() {
    let grid = Grid2D::new(8.0, 64).unwrap();
    let model =
        DiscreteModel::new(&ModelParams::new(0.0, 0.0, PotentialSpec::Trap { q: 2.0 }).unwrap(), &grid).unwrap();
    let res = minimize_model(&model, &opts(InitSpec::Gaussian { center: (0.5, 0.0), width: 2.0 })).unwrap();
    assert!(res.converged);
    assert!((res.energy.total - 2.0).abs() < 1e-3);
    assert!((mass(&res.field) - 1.0).abs() < 1e-10);
    assert!(res.field.values().iter().all(|&v| v >= 0.0));
    assert!(res.history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
    assert!(res.el.residual_norm <= 1e-6);
}

#[test]
fn supercritical_contact_strength_is_a_domain_error() {
    let grid = Grid2D::new(4.0, 32).unwrap();
    let model = DiscreteModel::new(&ModelParams::new(A_STAR, 1.0, PotentialSpec::Zero).unwrap(), &grid).unwrap();
    let err = minimize_model(&model, &opts(InitSpec::Auto)).unwrap_err();
    assert!(matches!(err, Error::Domain(_)));
    assert!(err.to_string().contains("E(a) = -inf for all a >= a*"));
}

#[test]
fn gaussian_and_townes_seeds_agree() {
    let profile = Arc::new(solve_q(1e-4, 20.0, 1e-12).unwrap());
    let consts = q0_constants(&profile, &[], 1.0).unwrap();
    let a = 0.8 * consts.a_star;
    let l = consts.beta_weak / (consts.a_star - a);
    let grid = Grid2D::new(16.0 / l, 256).unwrap();
    let model = DiscreteModel::new(&ModelParams::new(a, 1.0, PotentialSpec::Zero).unwrap(), &grid).unwrap();
    let mut o = opts(InitSpec::Gaussian { center: (0.0, 0.0), width: 1.0 / l });
    o.a_star = Some(consts.a_star);
    let gauss = minimize_model(&model, &o).unwrap();
    o.init = InitSpec::Q0Seed { center: (0.0, 0.0), b: l, profile };
    let townes = minimize_model(&model, &o).unwrap();
    assert!(gauss.converged && townes.converged);
    let (e1, e2) = (gauss.energy.total, townes.energy.total);
    assert!((e1 - e2).abs() <= 1e-5 * e1.abs(), "{e1} vs {e2}");
}

#[test]
fn symmetric_singular_points_are_degenerate() {
    let grid = Grid2D::new(4.0, 128).unwrap();
    // the node set is mirror symmetric about x = -h/2
    let h = grid.spacing();
    let points = vec![SingularPoint { z: (-1.0, 0.0), p: 0.5 }, SingularPoint { z: (1.0 - h, 0.0), p: 0.5 }];
    let spec = PotentialSpec::SingularSum { points, envelope: Envelope::Constant(1.0) };
    let model = DiscreteModel::new(&ModelParams::new(0.5 * A_STAR, 1.0, spec).unwrap(), &grid).unwrap();
    let multi = minimize_over_singular_set(&model, &opts(InitSpec::Auto), 0.5).unwrap();
    assert_eq!(multi.runs.len(), 2);
    let energies: Vec<f64> = multi.runs.iter().map(|r| r.1.energy.total).collect();
    assert!(multi.degenerate, "{energies:?}");
    for (z, run) in &multi.runs {
        assert!(run.converged);
        assert!((run.peak.0 - z.0).abs() < 0.5 && run.peak.1.abs() < 1e-3, "{z:?} -> {:?}", run.peak);
    }
}
