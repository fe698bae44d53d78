use ndarray::Array2;
use proptest::prelude::*;

use gpcollapse::energy::{DiscreteModel, ModelParams};
use gpcollapse::grid::{dilate, kinetic_energy, mass, normalize, Field, Grid2D};
use gpcollapse::io::{decode_field, encode_field};
use gpcollapse::potentials::{sample_potential, PotentialSpec};

fn gaussian(grid: &Grid2D, c: (f64, f64), w: f64) -> Field {
    Field::from_fn(grid, |x, y| (-((x - c.0).powi(2) + (y - c.1).powi(2)) / (2.0 * w * w)).exp()).unwrap()
}

fn quartic(u: &Field) -> f64 {
    u.grid().cell_area() * u.values().iter().map(|v| v.powi(4)).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn normalization_is_scale_free(c in 1e-3f64..1e3, w in 0.5f64..2.0) {
        let grid = Grid2D::new(8.0, 64).unwrap();
        let u = gaussian(&grid, (0.0, 0.0), w);
        let a = normalize(&u).unwrap();
        let b = normalize(&u.scaled(c).unwrap()).unwrap();
        prop_assert!((mass(&b) - 1.0).abs() < 1e-12);
        let gap = a.values().iter().zip(b.values().iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(gap < 1e-13);
    }

    #[test]
    fn dilation_scales_kinetic_and_quartic(s in 0.6f64..1.6) {
        let grid = Grid2D::new(8.0, 128).unwrap();
        let u = normalize(&gaussian(&grid, (0.0, 0.0), 1.0)).unwrap();
        let v = dilate(&u, s).unwrap();
        prop_assert!((mass(&v) - 1.0).abs() < 1e-9);
        prop_assert!((kinetic_energy(&v) / kinetic_energy(&u) - s * s).abs() < 1e-6 * s * s);
        prop_assert!((quartic(&v) / quartic(&u) - s * s).abs() < 1e-6 * s * s);
    }

    #[test]
    fn energy_change_matches_direct_difference(
        cx in -1.0f64..1.0, cy in -1.0f64..1.0, w1 in 0.6f64..1.5, w2 in 0.6f64..1.5, a in 0.0f64..10.0,
    ) {
        let grid = Grid2D::new(6.0, 64).unwrap();
        let params = ModelParams::new(a, 1.0, PotentialSpec::single((0.0, 0.0), 1.0, 1.0)).unwrap();
        let model = DiscreteModel::new(&params, &grid).unwrap();
        let u = normalize(&gaussian(&grid, (0.0, 0.0), w1)).unwrap();
        let v = normalize(&gaussian(&grid, (cx, cy), w2)).unwrap();
        let direct = model.evaluate(&v).unwrap().total - model.evaluate(&u).unwrap().total;
        let change = model.energy_change(u.values(), v.values()).unwrap();
        prop_assert!((direct - change).abs() < 1e-11 * (1.0 + direct.abs()));
    }

    #[test]
    fn periodic_potential_repeats_exactly(seed in prop::collection::vec(-5.0f64..5.0, 16), shift in 1usize..4) {
        let cell = Array2::from_shape_vec((4, 4), seed).unwrap();
        let grid = Grid2D::new(4.0, 64).unwrap();
        let m = (1.0 / grid.spacing()).round() as usize;
        let v = sample_potential(&PotentialSpec::Periodic { values: cell.clone() }, &grid).unwrap().values;
        let k = shift * m;
        for i in 0..64 - k {
            for j in 0..64 - k {
                prop_assert_eq!(v[[i, j]].to_bits(), v[[i + k, j]].to_bits());
                prop_assert_eq!(v[[i, j]].to_bits(), v[[i, j + k]].to_bits());
            }
        }
        let origin = 32;
        for a in 0..4 {
            for b in 0..4 {
                prop_assert_eq!(v[[origin + a * m / 4, origin + b * m / 4]], cell[[a, b]]);
            }
        }
    }

    #[test]
    fn field_files_roundtrip(w in 0.3f64..3.0, c in -2.0f64..2.0) {
        let grid = Grid2D::new(5.0, 32).unwrap();
        let u = normalize(&gaussian(&grid, (c, -c), w)).unwrap();
        let back = decode_field(&encode_field(&u)).unwrap();
        prop_assert!(back.values().iter().zip(u.values().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
