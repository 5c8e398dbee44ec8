mod common;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use netsir::calibration::synth_network;
use netsir::spectral::{
    build_demography_matrix, check_subcritical, equilibrium_population, growth_generator, growth_rate_lambda1,
    offspring_matrix, r0,
};
use netsir::{Matrix, Model};

fn dense(m: &Matrix<f64>) -> DMatrix<f64> {
    let rows = m.to_rows();
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
}

fn max_real(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn max_modulus(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn models() -> Vec<Model> {
    let mut out = vec![common::three_node(), common::pair(), common::endemic()];
    for seed in 0..6 {
        out.push(synth_network(12, 0.25, seed).unwrap());
    }
    out
}

#[test]
fn equilibrium_matches_dense_solve() {
    for m in models() {
        let a = build_demography_matrix(&m);
        let sub = check_subcritical(&a).unwrap();
        assert_relative_eq!(sub.spectral_abscissa, max_real(&dense(a.matrix())), epsilon = 1e-9);
        if !sub.subcritical {
            continue;
        }
        let z = equilibrium_population(&a, m.immigration()).unwrap();
        let rhs = -DVector::from_column_slice(m.immigration());
        let want = dense(a.matrix()).lu().solve(&rhs).unwrap();
        for (got, want) in z.iter().zip(want.iter()) {
            assert_relative_eq!(*got, *want, max_relative = 1e-10, epsilon = 1e-12);
        }
    }
}

#[test]
fn r0_is_the_spectral_radius() {
    for m in models() {
        let c = offspring_matrix(&m).unwrap();
        assert_relative_eq!(r0(&c).unwrap(), max_modulus(&dense(&c)), max_relative = 1e-9);
    }
}

#[test]
fn lambda1_is_the_growth_abscissa() {
    for m in models() {
        let want = max_real(&dense(&growth_generator(&m)));
        assert_relative_eq!(growth_rate_lambda1(&m).unwrap(), want, epsilon = 1e-9);
    }
}
