use std::sync::Arc;

use fracheat::fracop::{apply_half_gradient, ds_energy, ds_magnitude, riesz_gradient, FractionalOperator};
use fracheat::{Grid, GridField, OperatorMatrix, QuadratureScheme, SpatialDomain};
use nalgebra::SymmetricEigen;

fn wide_line(half: f64, n: usize) -> Arc<Grid> {
    Grid::new(SpatialDomain::new(1, vec![-half], vec![half], 1e-3).unwrap(), n).unwrap()
}

fn center_nodes(g: &Grid, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..g.len()).collect();
    idx.sort_by(|&a, &b| g.point(a)[0].abs().total_cmp(&g.point(b)[0].abs()));
    idx.truncate(count);
    idx
}

#[test]
fn plane_wave_symbol_in_one_dimension() {
    let g = wide_line(32.0, 256);
    let scheme = QuadratureScheme::default();
    for s in [0.3, 0.5, 0.75] {
        let op = FractionalOperator::new(&g, 2.0 * s, &scheme).unwrap();
        for xi in [1.0f64, 2.0] {
            let f = GridField::from_fn(&g, |x| (xi * x[0]).cos());
            let out = op.apply(&f).unwrap();
            for i in center_nodes(&g, 4) {
                let exact = xi.powf(2.0 * s) * f.values()[i];
                let rel = (out.values()[i] / exact - 1.0).abs();
                assert!(rel < 0.03, "s={s} ξ={xi}: rel err {rel}");
            }
        }
    }
}

#[test]
fn plane_wave_symbol_in_two_dimensions() {
    let g = Grid::new(SpatialDomain::new(2, vec![-12.0; 2], vec![12.0; 2], 1e-3).unwrap(), 64).unwrap();
    let op = FractionalOperator::new(&g, 1.0, &QuadratureScheme::default()).unwrap();
    let f = GridField::from_fn(&g, |x| x[0].cos() * x[1].cos());
    let out = op.apply(&f).unwrap();
    let xi = 2f64.sqrt();
    let c = g.nearest(&[0.0, 0.0]);
    let rel = (out.values()[c] / (xi * f.values()[c]) - 1.0).abs();
    assert!(rel < 0.05, "rel err {rel}");
}

#[test]
fn scaling_law_in_free_space() {
    // f(x/λ) on a grid scaled by λ gives outputs scaled by λ^{-ρ}
    let rho = 0.8;
    let lam = 2.0;
    let scheme = QuadratureScheme::default();
    let bump = |x: f64| (-x * x).exp();
    let g1 = wide_line(8.0, 200);
    let g2 = wide_line(8.0 * lam, 200);
    let o1 = FractionalOperator::new(&g1, rho, &scheme).unwrap().apply(&GridField::from_fn(&g1, |x| bump(x[0]))).unwrap();
    let o2 = FractionalOperator::new(&g2, rho, &scheme)
        .unwrap()
        .apply(&GridField::from_fn(&g2, |x| bump(x[0] / lam)))
        .unwrap();
    for i in center_nodes(&g1, 10) {
        let ratio = o2.values()[i] / o1.values()[i];
        assert!((ratio / lam.powf(-rho) - 1.0).abs() < 0.05, "ratio {ratio}");
    }
}

#[test]
fn dirichlet_spectrum_is_positive_and_matches_reference() {
    // first Dirichlet eigenvalue of (-Δ)^{1/2} on (-1, 1) is 1.1577738...
    let g = Grid::new(SpatialDomain::interval(0.25), 256).unwrap();
    let a = OperatorMatrix::assemble(&g, 1.0, &QuadratureScheme::default()).unwrap();
    let eig = SymmetricEigen::new(a.matrix().clone());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    assert!(vals[0] > 0.0);
    assert!((vals[0] / 1.157_773_883_697 - 1.0).abs() < 0.01, "λ1 = {}", vals[0]);
}

#[test]
fn half_operators_compose_to_the_full_operator() {
    let g = Grid::new(SpatialDomain::new(1, vec![-6.0], vec![6.0], 1e-3).unwrap(), 256).unwrap();
    let scheme = QuadratureScheme::default();
    let s = 0.5;
    let f = GridField::from_fn(&g, |x| (-2.0 * x[0] * x[0]).exp());
    let half = FractionalOperator::new(&g, s, &scheme).unwrap();
    let twice = half.apply(&half.apply(&f).unwrap()).unwrap();
    let once = FractionalOperator::new(&g, 2.0 * s, &scheme).unwrap().apply(&f).unwrap();
    let scale = once.max_abs();
    for i in center_nodes(&g, 60) {
        let gap = (twice.values()[i] - once.values()[i]).abs();
        assert!(gap < 0.05 * scale, "gap {gap} at {}", g.point(i)[0]);
    }
}

#[test]
fn exterior_values_of_nonnegative_data_are_negative() {
    let g = Grid::new(SpatialDomain::interval(0.5), 96).unwrap();
    let f = GridField::dirichlet_from_fn(&g, |x| 1.0 - x[0] * x[0]);
    let out = apply_half_gradient(&f, 0.5, &QuadratureScheme::default()).unwrap();
    let op = FractionalOperator::new(&g, 0.5, &QuadratureScheme::default()).unwrap();
    for i in 0..g.len() {
        if !g.is_interior(i) && g.delta()[i] > g.h() {
            assert!(out.values()[i] < 0.0);
            // away from ∂Ω the quadrature equals the plain exterior integral
            let direct = op.apply_at_far_point(&f, g.point(i));
            assert!((out.values()[i] / direct - 1.0).abs() < 0.05);
        }
    }
}

#[test]
fn riesz_gradient_symmetries_and_sign() {
    let scheme = QuadratureScheme::default();
    let g = wide_line(4.0, 161);
    let constant = GridField::from_fn(&g, |_| 1.0);
    let c = g.nearest(&[0.0]);
    assert!(riesz_gradient(&constant, 0.5, &scheme).unwrap()[0].values()[c].abs() < 1e-10);
    let odd = GridField::from_fn(&g, |x| x[0] * (-x[0] * x[0]).exp());
    let even = GridField::from_fn(&g, |x| (-x[0] * x[0]).exp());
    assert!(riesz_gradient(&even, 0.5, &scheme).unwrap()[0].values()[c].abs() < 1e-10);
    assert!(riesz_gradient(&odd, 0.5, &scheme).unwrap()[0].values()[c] > 0.0);

    // near s = 1 the Riesz gradient points like the classical derivative
    let grid = Grid::new(SpatialDomain::interval(0.25), 128).unwrap();
    let bump = GridField::dirichlet_from_fn(&grid, |x| (1.0 - x[0] * x[0]).powi(2) * (1.0 + 0.5 * x[0]));
    let rg = &riesz_gradient(&bump, 0.95, &scheme).unwrap()[0];
    let v = bump.values();
    let mut agree = 0;
    let interior = grid.interior_indices();
    for &i in interior {
        let fd = v[i + 1] - v[i - 1];
        if fd.signum() == rg.values()[i].signum() {
            agree += 1;
        }
    }
    assert!(agree as f64 >= 0.9 * interior.len() as f64, "{agree}/{}", interior.len());
}

#[test]
fn riesz_gradient_in_two_dimensions_respects_axes() {
    let g = Grid::new(SpatialDomain::square(0.25), 41).unwrap();
    assert!(g.interior_len() % 2 == 1);
    let f = GridField::dirichlet_from_fn(&g, |x| (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]) * (1.0 + 0.3 * x[0]));
    let rg = riesz_gradient(&f, 0.6, &QuadratureScheme::default()).unwrap();
    let c = g.nearest(&[0.0, 0.0]);
    // ∂_x f(0) = 0.3, ∂_y f(0) = 0
    assert!(rg[0].values()[c] > 0.0);
    assert!(rg[1].values()[c].abs() < 1e-10 * rg[0].values()[c].abs().max(1.0));
}

#[test]
fn ds_magnitude_energy_identity() {
    // ‖D_s f‖₂² = ⟨(-Δ)^s f, f⟩ for f vanishing outside Ω
    let g = Grid::new(SpatialDomain::interval(0.25), 256).unwrap();
    let s = 0.5;
    let scheme = QuadratureScheme::default();
    let a = OperatorMatrix::assemble(&g, 2.0 * s, &scheme).unwrap();
    let eig = SymmetricEigen::new(a.matrix().clone());
    let k = eig.eigenvalues.imin();
    let phi = GridField::from_interior(&g, eig.eigenvectors.column(k).as_slice()).unwrap();
    let h = g.h();
    let quad: f64 = phi.interior_values().iter().zip(a.apply_interior(&phi.interior_values())).map(|(u, v)| u * v).sum::<f64>() * h;
    let d = ds_magnitude(&phi, s, &scheme).unwrap();
    assert!(d.values().iter().all(|&v| v >= 0.0));
    let energy = ds_energy(&phi, s, &scheme).unwrap();
    assert!((energy / quad - 1.0).abs() < 0.1, "{energy} vs {quad}");
}
