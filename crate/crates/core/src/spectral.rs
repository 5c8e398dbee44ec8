//! Matrix-analytic quantities of the model: demographic matrix, subcriticality,
//! equilibrium population, mean offspring matrix, `R₀`, early growth rate and
//! the Lyapunov vector of the population process.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Lu, Matrix};
use crate::model::{require_connected, NetworkModel};
use crate::outbreak::{self, FixedPointOptions};
use crate::scalar::{norm_inf, Scalar};

/// Above this size eigenvalues of Metzler matrices come from shifted power
/// iteration instead of the dense QR solver.
pub const DENSE_EIGEN_LIMIT: usize = 200;

/// `A` with `A[i][i] = b_i − d_i − Σ_j θ_{i,j}` and `A[i][j] = θ_{j,i}`, so the
/// mean scaled population follows `z' = A·z + B`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemographyMatrix<T>(Matrix<T>);

impl<T: Scalar> DemographyMatrix<T> {
    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    /// `A·z + B`.
    pub fn drift(&self, z: &[T], immigration: &[T]) -> Vec<T> {
        self.0
            .mul_vec(z)
            .into_iter()
            .zip(immigration)
            .map(|(a, &b)| a + b)
            .collect()
    }
}

pub fn build_demography_matrix<T: Scalar>(model: &NetworkModel<T>) -> DemographyMatrix<T> {
    let n = model.n();
    let theta = model.transfer();
    let mut a = theta.transpose();
    for i in 0..n {
        a[(i, i)] = model.birth()[i] - model.death()[i] - model.out_rate(i);
    }
    DemographyMatrix(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Subcriticality<T> {
    pub spectral_abscissa: T,
    pub subcritical: bool,
    /// Abscissa exactly zero: treated as not subcritical.
    pub boundary: bool,
}

/// Dominant (real) eigenvalue of a Metzler matrix.
pub fn metzler_abscissa<T: Scalar>(m: &Matrix<T>) -> Result<T> {
    if m.rows() > DENSE_EIGEN_LIMIT {
        if let Some(est) = linalg::perron_power_iteration(m, T::tol(1e-13), 1_000_000) {
            return Ok(est.value);
        }
    }
    linalg::spectral_abscissa_dense(m)
}

pub fn check_subcritical<T: Scalar>(a: &DemographyMatrix<T>) -> Result<Subcriticality<T>> {
    let abscissa = metzler_abscissa(a.matrix())?;
    Ok(Subcriticality {
        spectral_abscissa: abscissa,
        subcritical: abscissa < T::zero(),
        boundary: abscissa == T::zero(),
    })
}

/// `z* = −A⁻¹·B`, the stationary mean of `Xᴺ/N`.
pub fn equilibrium_population<T: Scalar>(a: &DemographyMatrix<T>, immigration: &[T]) -> Result<Vec<T>> {
    let rhs: Vec<T> = immigration.iter().map(|&b| -b).collect();
    linalg::solve(a.matrix(), &rhs)
}

/// `diag(Σ) − Θ`, the generator of an infective's node walk with killing.
pub fn walk_matrix<T: Scalar>(model: &NetworkModel<T>) -> Matrix<T> {
    let n = model.n();
    let mut k = model.transfer().scale(-T::one());
    for i in 0..n {
        k[(i, i)] = model.leave_rate(i);
    }
    k
}

/// Mean offspring matrix `C = (diag(Σ) − Θ)⁻¹·diag(β)`; `C[i][j]` is the
/// expected number of infections made in node `j` by an infective born in node `i`.
pub fn offspring_matrix<T: Scalar>(model: &NetworkModel<T>) -> Result<Matrix<T>> {
    let inv = Lu::factor(&walk_matrix(model))?.inverse();
    let n = model.n();
    let mut c = inv;
    for i in 0..n {
        for j in 0..n {
            // clamp roundoff: the exact inverse of an M-matrix is entrywise nonnegative
            c[(i, j)] = (c[(i, j)] * model.infection()[j]).max(T::zero());
        }
    }
    Ok(c)
}

/// Perron root of a nonnegative matrix.
///
/// Power iteration first; reducible inputs whose iterate loses positivity fall
/// back to the dense eigensolver.
pub fn r0<T: Scalar>(c: &Matrix<T>) -> Result<T> {
    if c.iter().any(|&x| x < T::zero() || !x.is_finite()) {
        return Err(Error::Precondition("offspring matrix must be nonnegative".into()));
    }
    if c.max_abs() == T::zero() {
        return Ok(T::zero());
    }
    if let Some(est) = linalg::perron_power_iteration(c, T::tol(1e-14), 100_000) {
        return Ok(est.value.max(T::zero()));
    }
    Ok(linalg::spectral_abscissa_dense(c)?.max(T::zero()))
}

/// Mean-semigroup generator `M` with `M[i][i] = β_i − Σ_i`, `M[i][j] = θ_{i,j}`.
pub fn growth_generator<T: Scalar>(model: &NetworkModel<T>) -> Matrix<T> {
    let mut m = model.transfer().clone();
    for i in 0..model.n() {
        m[(i, i)] = model.infection()[i] - model.leave_rate(i);
    }
    m
}

/// `λ₁`: maximal real eigenvalue of [`growth_generator`].
pub fn growth_rate_lambda1<T: Scalar>(model: &NetworkModel<T>) -> Result<T> {
    metzler_abscissa(&growth_generator(model))
}

/// `v = −(Aᵀ)⁻¹·B`, the positive weight vector making `x ↦ 1 + v·x` a
/// Lyapunov function for the population process.
pub fn lyapunov_vector<T: Scalar>(a: &DemographyMatrix<T>, immigration: &[T]) -> Result<Vec<T>> {
    let rhs: Vec<T> = immigration.iter().map(|&b| -b).collect();
    let v = linalg::solve(&a.matrix().transpose(), &rhs)?;
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| **x <= T::zero()) {
        return Err(Error::Precondition(format!(
            "lyapunov vector entry {i} = {x} is not positive (connectivity or subcriticality violated)"
        )));
    }
    Ok(v)
}

/// Every analytic outbreak quantity for one model.
#[derive(Debug, Clone, Serialize)]
pub struct OutbreakAnalysis<T> {
    #[serde(rename = "A")]
    pub demography: Vec<Vec<T>>,
    pub spectral_abscissa: T,
    pub subcritical: bool,
    /// Absent when the demography is not subcritical.
    pub z_star: Option<Vec<T>>,
    #[serde(rename = "C")]
    pub offspring: Vec<Vec<T>>,
    #[serde(rename = "R0")]
    pub r0: T,
    pub lambda1: T,
    pub q: Vec<T>,
    pub p: Vec<T>,
    #[serde(rename = "p_I0")]
    pub p_initial: T,
    pub fixed_point_iterations: usize,
    pub warnings: Vec<String>,
}

/// Computes [`OutbreakAnalysis`]. Requires a strongly connected transfer graph.
pub fn analyze<T: Scalar>(
    model: &NetworkModel<T>,
    initial_infectives: &[u64],
    opts: FixedPointOptions<T>,
) -> Result<OutbreakAnalysis<T>> {
    require_connected(model)?;
    let a = build_demography_matrix(model);
    let sub = check_subcritical(&a)?;
    let mut warnings = Vec::new();
    if sub.boundary {
        warnings.push("spectral abscissa is exactly 0: demography treated as not subcritical".into());
    }
    let z_star = if sub.subcritical {
        let z = equilibrium_population(&a, model.immigration())?;
        let res = norm_inf(&a.drift(&z, model.immigration()));
        if res > T::tol(1e-10) * norm_inf(model.immigration()).max(T::one()) {
            warnings.push(format!("equilibrium residual {res}"));
        }
        Some(z)
    } else {
        None
    };
    let c = offspring_matrix(model)?;
    let r0 = r0(&c)?;
    let lambda1 = growth_rate_lambda1(model)?;
    let (q, iterations) = if r0 == T::one() {
        warnings.push("R0 is exactly 1: no major outbreak".into());
        (vec![T::one(); model.n()], 0)
    } else {
        let fp = outbreak::extinction_probs(model, opts)?;
        (fp.q, fp.iterations)
    };
    let p: Vec<T> = q.iter().map(|&x| T::one() - x).collect();
    let p_initial = outbreak::major_outbreak_prob(&q, initial_infectives)?;
    Ok(OutbreakAnalysis {
        demography: a.matrix().to_rows(),
        spectral_abscissa: sub.spectral_abscissa,
        subcritical: sub.subcritical,
        z_star,
        offspring: c.to_rows(),
        r0,
        lambda1,
        q,
        p,
        p_initial,
        fixed_point_iterations: iterations,
        warnings,
    })
}
