//! Offspring generating function and extinction probabilities of the
//! branching approximation.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::NetworkModel;
use crate::scalar::{norm_inf, Scalar};

/// A point of `[0, 1]ⁿ` at which the generating function is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct PgfPoint<T>(Vec<T>);

impl<T: Scalar> PgfPoint<T> {
    pub fn new(s: Vec<T>) -> Result<Self> {
        if let Some(x) = s.iter().find(|x| !(**x >= T::zero() && **x <= T::one())) {
            return Err(Error::Precondition(format!("PGF argument {x} outside [0, 1]")));
        }
        Ok(Self(s))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![T::one(); n])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

/// `G(s)`: solves `(diag(λ(s)) − Θ)·G = ω` with `λ_i(s) = (1 − s_i)·β_i + Σ_i`
/// and `ω_i = d_i + γ_i`. Entries are clamped to `[0, 1]` against roundoff.
pub fn eval_g<T: Scalar>(model: &NetworkModel<T>, s: &PgfPoint<T>) -> Result<Vec<T>> {
    let n = model.n();
    if s.0.len() != n {
        return Err(Error::Dimension(format!(
            "PGF argument has {} entries, expected {n}",
            s.0.len()
        )));
    }
    let mut k: Matrix<T> = model.transfer().scale(-T::one());
    for i in 0..n {
        k[(i, i)] = (T::one() - s.0[i]) * model.infection()[i] + model.leave_rate(i);
    }
    let omega: Vec<T> = (0..n).map(|i| model.death()[i] + model.recovery()[i]).collect();
    let g = linalg::solve(&k, &omega)?;
    Ok(g.into_iter().map(|x| x.max(T::zero()).min(T::one())).collect())
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for FixedPointOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::tol(1e-12),
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtinctionSolve<T> {
    pub q: Vec<T>,
    pub iterations: usize,
    /// `‖s_{k+1} − s_k‖∞` at termination.
    pub gap: T,
    /// Ratio of the last two gaps; close to 1 near criticality.
    pub rate: T,
}

/// Minimal fixed point `q` of `G` by iterating `s ← G(s)` from `s = 0`.
///
/// The iterates are entrywise nondecreasing and converge to the extinction
/// probabilities. Starting anywhere else also converges but the
/// minimal-fixed-point guarantee is only claimed for the zero start used here.
pub fn extinction_probs<T: Scalar>(model: &NetworkModel<T>, opts: FixedPointOptions<T>) -> Result<ExtinctionSolve<T>> {
    iterate_from(model, PgfPoint::zeros(model.n()), opts, |_| {})
}

/// As [`extinction_probs`] from an arbitrary start, calling `observe` on each iterate.
pub fn iterate_from<T: Scalar>(
    model: &NetworkModel<T>,
    start: PgfPoint<T>,
    opts: FixedPointOptions<T>,
    mut observe: impl FnMut(&[T]),
) -> Result<ExtinctionSolve<T>> {
    let mut s = start;
    let mut prev_gap = T::infinity();
    let mut rate = T::zero();
    for it in 1..=opts.max_iter {
        let next = eval_g(model, &s)?;
        observe(&next);
        let gap = norm_inf(&next.iter().zip(s.as_slice()).map(|(a, b)| *a - *b).collect::<Vec<_>>());
        if prev_gap.is_finite() && prev_gap > T::zero() {
            rate = gap / prev_gap;
        }
        s = PgfPoint(next);
        if gap < opts.tol {
            return Ok(ExtinctionSolve {
                q: s.0,
                iterations: it,
                gap,
                rate,
            });
        }
        prev_gap = gap;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        gap: prev_gap.as_f64(),
        last: s.0.iter().map(|x| x.as_f64()).collect(),
    })
}

/// `1 − ∏_k q_k^{I0_k}`.
pub fn major_outbreak_prob<T: Scalar>(q: &[T], initial_infectives: &[u64]) -> Result<T> {
    if q.len() != initial_infectives.len() {
        return Err(Error::Dimension("q and I0 lengths differ".into()));
    }
    if let Some(x) = q.iter().find(|x| !(**x >= T::zero() && **x <= T::one())) {
        return Err(Error::Precondition(format!(
            "extinction probability {x} outside [0, 1]"
        )));
    }
    let prod = q
        .iter()
        .zip(initial_infectives)
        .filter(|(_, &k)| k > 0)
        .fold(T::one(), |acc, (&qk, &k)| acc * qk.powf(T::lit(k as f64)));
    Ok(T::one() - prod)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(beta: f64, gamma: f64, d: f64) -> NetworkModel<f64> {
        NetworkModel::new(
            vec![0.0],
            vec![0.0],
            vec![d],
            Matrix::zeros(1, 1),
            vec![beta],
            vec![gamma],
        )
        .unwrap()
    }

    fn symmetric_pair() -> NetworkModel<f64> {
        NetworkModel::new(
            vec![0.5; 2],
            vec![0.0; 2],
            vec![0.5; 2],
            Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            vec![2.0; 2],
            vec![0.5; 2],
        )
        .unwrap()
    }

    #[test]
    fn scalar_pgf_at_zero() {
        let m = single(0.67, 1.0 / 5.5, 0.0);
        let g = eval_g(&m, &PgfPoint::zeros(1)).unwrap();
        let want = (1.0 / 5.5) / (0.67 + 1.0 / 5.5);
        assert!((g[0] - want).abs() < 1e-15);
        assert!((g[0] - 0.2135).abs() < 1e-4);
    }

    #[test]
    fn pgf_at_one_is_one() {
        for m in [single(0.67, 0.2, 0.1), symmetric_pair()] {
            let g = eval_g(&m, &PgfPoint::ones(m.n())).unwrap();
            assert!(g.iter().all(|x| (x - 1.0).abs() < 1e-14), "{g:?}");
        }
    }

    #[test]
    fn symmetric_pair_pgf_at_half() {
        let g = eval_g(&symmetric_pair(), &PgfPoint::new(vec![0.5, 0.5]).unwrap()).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn extinction_fmd_and_subcritical() {
        let fp = extinction_probs(&single(0.67, 1.0 / 5.5, 0.0), FixedPointOptions::default()).unwrap();
        assert!((fp.q[0] - (1.0 / 5.5) / 0.67).abs() < 1e-10);
        let sub = extinction_probs(&single(0.1, 1.0, 0.0), FixedPointOptions::default()).unwrap();
        assert!((sub.q[0] - 1.0).abs() < 1e-11);
        let pair = extinction_probs(&symmetric_pair(), FixedPointOptions::default()).unwrap();
        assert!(pair.q.iter().all(|q| (q - 0.5).abs() < 1e-10));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let opts = FixedPointOptions {
            tol: 1e-12,
            max_iter: 3,
        };
        match extinction_probs(&single(0.67, 1.0 / 5.5, 0.0), opts) {
            Err(Error::NoConvergence { iterations, last, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(last.len(), 1);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn outbreak_probability_products() {
        assert!((major_outbreak_prob(&[0.2714f64], &[1]).unwrap() - 0.7286).abs() < 1e-12);
        assert_eq!(major_outbreak_prob(&[0.3f64, 0.4], &[0, 0]).unwrap(), 0.0);
        assert!((major_outbreak_prob(&[0.5f64, 0.5], &[1, 1]).unwrap() - 0.75).abs() < 1e-15);
        assert!(PgfPoint::new(vec![1.5]).is_err());
    }
}
