//! The energy `E_a(u) = int |grad u|^2 + int V u^2 - (a/2) int u^4 - g D(u)`,
//! its `L^2` gradient `2 H u` with
//! `H u = -Delta u + V u - a u^3 - 2 g (|x|^{-1} * u^2) u`,
//! and the Euler-Lagrange residual on the unit sphere.

use std::sync::Arc;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gravity::{build_kernel, GravityKernel};
use crate::grid::{kinetic_of_table, mass, Field, Grid2D};
use crate::potentials::{sample_potential, PotentialSpec, SampledPotential};
use crate::quadrature::CompensatedSum;

/// Mass deviation tolerated by the energy evaluators.
pub const MASS_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub a: f64,
    pub g: f64,
    pub potential: PotentialSpec,
}

impl ModelParams {
    pub fn new(a: f64, g: f64, potential: PotentialSpec) -> Result<Self> {
        let p = ModelParams { a, g, potential };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(Error::Domain(format!("a must be >= 0, got {}", self.a)));
        }
        if !(self.g.is_finite() && self.g >= 0.0) {
            return Err(Error::Domain(format!("g must be >= 0, got {}", self.g)));
        }
        self.potential.validate()
    }

    pub fn with_a(&self, a: f64) -> Self {
        ModelParams { a, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    /// `(a/2) int u^4`, entering the total with a minus sign.
    pub quartic: f64,
    /// `g D(u)`, entering the total with a minus sign.
    pub gravity: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn assemble(kinetic: f64, potential: f64, quartic: f64, gravity: f64) -> Self {
        EnergyBreakdown { kinetic, potential, quartic, gravity, total: kinetic + potential - quartic - gravity }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ELResult {
    pub mu: f64,
    pub residual_norm: f64,
    /// `H u` vanished identically.
    pub degenerate: bool,
}

/// A model discretized on a grid: sampled potential plus gravity kernel.
#[derive(Clone, Debug)]
pub struct DiscreteModel {
    params: ModelParams,
    grid: Grid2D,
    potential: SampledPotential,
    kernel: Arc<GravityKernel>,
}

impl DiscreteModel {
    pub fn new(params: &ModelParams, grid: &Grid2D) -> Result<Self> {
        Self::with_kernel(params, Arc::new(build_kernel(grid)))
    }

    pub fn with_kernel(params: &ModelParams, kernel: Arc<GravityKernel>) -> Result<Self> {
        params.validate()?;
        let grid = kernel.grid().clone();
        let potential = sample_potential(&params.potential, &grid)?;
        Ok(DiscreteModel { params: params.clone(), grid, potential, kernel })
    }

    /// Same discretization with a different contact strength.
    pub fn with_a(&self, a: f64) -> Result<Self> {
        let params = self.params.with_a(a);
        params.validate()?;
        Ok(DiscreteModel { params, ..self.clone() })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn kernel(&self) -> &Arc<GravityKernel> {
        &self.kernel
    }

    pub fn potential(&self) -> &SampledPotential {
        &self.potential
    }

    fn check_field(&self, u: &Field) -> Result<()> {
        if !self.grid.same_as(u.grid()) {
            return Err(Error::GridMismatch("field and model live on different grids".into()));
        }
        let m = mass(u);
        if (m - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Precondition(format!("field must have unit mass, got {m}")));
        }
        Ok(())
    }

    fn newton_potential(&self, u: &Array2<f64>) -> Option<Array2<f64>> {
        if self.params.g == 0.0 {
            return None;
        }
        let rho = u.mapv(|v| v * v);
        Some(self.kernel.convolve(&rho).expect("table shape matches kernel"))
    }

    fn breakdown_with(&self, u: &Array2<f64>, kinetic: f64, phi: Option<&Array2<f64>>) -> EnergyBreakdown {
        let h2 = self.grid.cell_area();
        let mut pot = CompensatedSum::default();
        let mut quart = CompensatedSum::default();
        Zip::from(u).and(&self.potential.values).for_each(|&v, &vv| {
            let v2 = v * v;
            pot.add(vv * v2);
            quart.add(v2 * v2);
        });
        let gravity = phi.map_or(0.0, |phi| {
            let mut acc = CompensatedSum::default();
            Zip::from(u).and(phi).for_each(|&v, &f| acc.add(v * v * f));
            acc.value() * h2
        });
        let (pot, quart) = (pot.value(), quart.value());
        EnergyBreakdown::assemble(kinetic, h2 * pot, 0.5 * self.params.a * h2 * quart, self.params.g * gravity)
    }

    /// The functional on an arbitrary table, without the mass constraint.
    pub fn functional(&self, u: &Array2<f64>) -> Result<EnergyBreakdown> {
        self.grid.check_shape(u)?;
        let phi = self.newton_potential(u);
        Ok(self.breakdown_with(u, kinetic_of_table(&self.grid, u), phi.as_ref()))
    }

    /// Energy breakdown together with `H u`.
    pub fn breakdown_and_hu(&self, u: &Array2<f64>) -> (EnergyBreakdown, Array2<f64>) {
        let phi = self.newton_potential(u);
        let (kinetic, mut hu) = self.grid.kinetic_and_neg_laplacian(u);
        let e = self.breakdown_with(u, kinetic, phi.as_ref());
        let a = self.params.a;
        let two_g = 2.0 * self.params.g;
        match &phi {
            Some(phi) => Zip::from(&mut hu)
                .and(u)
                .and(&self.potential.values)
                .and(phi)
                .for_each(|h, &v, &pot, &f| *h += (pot - a * v * v - two_g * f) * v),
            None => Zip::from(&mut hu)
                .and(u)
                .and(&self.potential.values)
                .for_each(|h, &v, &pot| *h += (pot - a * v * v) * v),
        }
        (e, hu)
    }

    /// `E(to) - E(from)` in difference form, accurate when the two tables are close.
    pub fn energy_change(&self, from: &Array2<f64>, to: &Array2<f64>) -> Result<f64> {
        self.grid.check_shape(from)?;
        self.grid.check_shape(to)?;
        let diff = to - from;
        let sum = to + from;
        let kinetic = self.grid.kinetic_cross(&diff, &sum);
        // rho_to - rho_from and rho_to + rho_from
        let drho = &diff * &sum;
        let srho = Zip::from(to).and(from).map_collect(|&a, &b| a * a + b * b);
        let mut pot = CompensatedSum::default();
        let mut quart = CompensatedSum::default();
        Zip::from(&drho).and(&srho).and(&self.potential.values).for_each(|&d, &s, &v| {
            pot.add(v * d);
            quart.add(d * s);
        });
        let h2 = self.grid.cell_area();
        let mut total = kinetic + h2 * (pot.value() - 0.5 * self.params.a * quart.value());
        if self.params.g != 0.0 {
            let phi = self.kernel.convolve(&srho)?;
            let mut grav = CompensatedSum::default();
            Zip::from(&drho).and(&phi).for_each(|&d, &f| grav.add(d * f));
            total -= self.params.g * h2 * grav.value();
        }
        Ok(total)
    }

    pub fn evaluate(&self, u: &Field) -> Result<EnergyBreakdown> {
        self.check_field(u)?;
        self.functional(u.values())
    }

    /// `L^2` gradient `2 H u` of the unconstrained functional.
    pub fn gradient(&self, u: &Field) -> Result<Array2<f64>> {
        self.check_field(u)?;
        Ok(self.breakdown_and_hu(u.values()).1.mapv(|v| 2.0 * v))
    }

    pub fn el_residual(&self, u: &Field) -> Result<ELResult> {
        self.check_field(u)?;
        let (_, hu) = self.breakdown_and_hu(u.values());
        Ok(el_from_hu(&self.grid, u.values(), &hu))
    }
}

/// `mu = <u, Hu>` and `||Hu - mu u|| / ||Hu||`.
pub(crate) fn el_from_hu(grid: &Grid2D, u: &Array2<f64>, hu: &Array2<f64>) -> ELResult {
    let mu = grid.inner(u, hu);
    let norm = grid.inner(hu, hu).sqrt();
    if norm == 0.0 {
        return ELResult { mu, residual_norm: 0.0, degenerate: true };
    }
    let r2 = Zip::from(hu).and(u).fold(0.0, |acc, &h, &v| acc + (h - mu * v).powi(2)) * grid.cell_area();
    ELResult { mu, residual_norm: r2.sqrt() / norm, degenerate: false }
}

pub fn evaluate(u: &Field, params: &ModelParams, kernel: &Arc<GravityKernel>) -> Result<EnergyBreakdown> {
    DiscreteModel::with_kernel(params, kernel.clone())?.evaluate(u)
}

pub fn gradient(u: &Field, params: &ModelParams, kernel: &Arc<GravityKernel>) -> Result<Array2<f64>> {
    DiscreteModel::with_kernel(params, kernel.clone())?.gradient(u)
}

pub fn el_residual(u: &Field, params: &ModelParams, kernel: &Arc<GravityKernel>) -> Result<ELResult> {
    DiscreteModel::with_kernel(params, kernel.clone())?.el_residual(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::normalize;

    fn gaussian(grid: &Grid2D) -> Field {
        normalize(&Field::from_fn(grid, |x, y| (-(x * x + y * y) / 2.0).exp()).unwrap()).unwrap()
    }

    #[test]
    fn kinetic_only_gaussian() {
        let grid = Grid2D::new(8.0, 128).unwrap();
        let m = DiscreteModel::new(&ModelParams::new(0.0, 0.0, PotentialSpec::Zero).unwrap(), &grid).unwrap();
        let e = m.evaluate(&gaussian(&grid)).unwrap();
        assert!((e.total - 1.0).abs() < 1e-6);
        assert_eq!(e.gravity, 0.0);
    }

    #[test]
    fn breakdown_is_additive() {
        let grid = Grid2D::new(8.0, 64).unwrap();
        let m =
            DiscreteModel::new(&ModelParams::new(3.0, 1.0, PotentialSpec::Trap { q: 2.0 }).unwrap(), &grid).unwrap();
        let e = m.evaluate(&gaussian(&grid)).unwrap();
        assert!((e.total - (e.kinetic + e.potential - e.quartic - e.gravity)).abs() < 1e-12);
        assert!(e.quartic > 0.0 && e.gravity > 0.0);
    }

    #[test]
    fn unnormalized_field_is_rejected() {
        let grid = Grid2D::new(8.0, 32).unwrap();
        let m = DiscreteModel::new(&ModelParams::new(1.0, 1.0, PotentialSpec::Zero).unwrap(), &grid).unwrap();
        let u = gaussian(&grid).scaled(1.1).unwrap();
        assert!(matches!(m.evaluate(&u), Err(Error::Precondition(_))));
    }

    #[test]
    fn negative_parameters_are_rejected() {
        assert!(ModelParams::new(-1.0, 1.0, PotentialSpec::Zero).is_err());
        assert!(ModelParams::new(1.0, -1.0, PotentialSpec::Zero).is_err());
    }

    #[test]
    fn residual_is_large_away_from_critical_points() {
        let grid = Grid2D::new(8.0, 64).unwrap();
        let m = DiscreteModel::new(&ModelParams::new(5.0, 1.0, PotentialSpec::Zero).unwrap(), &grid).unwrap();
        let u = normalize(
            &Field::from_fn(&grid, |x, y| {
                (-(x - 1.0).powi(2) - 3.0 * y * y).exp() + 0.3 * (-(x + 2.0).powi(2) - y * y).exp()
            })
            .unwrap(),
        )
        .unwrap();
        assert!(m.el_residual(&u).unwrap().residual_norm > 0.05);
    }
}
