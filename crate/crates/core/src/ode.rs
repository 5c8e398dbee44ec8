//! Deterministic limits: the linear population flow, the SIR dynamical
//! system, endemic equilibria and the one-node Lyapunov function.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Lu, Matrix};
use crate::model::NetworkModel;
use crate::scalar::{norm_inf, Scalar};
use crate::spectral::{self, DemographyMatrix};

/// Scaled densities per node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterministicState<T> {
    pub s: Vec<T>,
    pub i: Vec<T>,
    pub r: Vec<T>,
}

impl<T: Scalar> DeterministicState<T> {
    pub fn new(s: Vec<T>, i: Vec<T>, r: Vec<T>) -> Result<Self> {
        let n = s.len();
        if i.len() != n || r.len() != n {
            return Err(Error::Dimension("s, i, r lengths differ".into()));
        }
        if let Some(x) = s.iter().chain(&i).chain(&r).find(|x| !x.is_finite() || **x < T::zero()) {
            return Err(Error::Precondition(format!(
                "state entry {x} is negative or not finite"
            )));
        }
        Ok(Self { s, i, r })
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    /// `[s, i, r]` stacked.
    pub fn flatten(&self) -> Vec<T> {
        self.s.iter().chain(&self.i).chain(&self.r).copied().collect()
    }

    pub fn from_flat(y: &[T]) -> Self {
        let n = y.len() / 3;
        Self {
            s: y[..n].to_vec(),
            i: y[n..2 * n].to_vec(),
            r: y[2 * n..].to_vec(),
        }
    }

    pub fn totals(&self) -> Vec<T> {
        (0..self.n()).map(|k| self.s[k] + self.i[k] + self.r[k]).collect()
    }

    /// Membership of `E`: nonnegative with some infective mass.
    pub fn in_domain(&self) -> bool {
        self.i.iter().any(|&x| x > T::zero())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Dopri5Options<T> {
    pub rtol: T,
    pub atol: T,
    pub max_steps: usize,
    /// Reject steps that leave the nonnegative orthant.
    pub nonnegative: bool,
}

impl<T: Scalar> Default for Dopri5Options<T> {
    fn default() -> Self {
        Self {
            rtol: T::tol(1e-9),
            atol: T::tol(1e-12),
            max_steps: 10_000_000,
            nonnegative: false,
        }
    }
}

/// Solution sampled at requested output times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeTrajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dormand–Prince 5(4) with step control, sampled exactly at `times`
/// (nondecreasing, the first being the initial time).
pub fn dopri5<T: Scalar>(
    mut f: impl FnMut(T, &[T], &mut [T]),
    y0: &[T],
    times: &[T],
    opts: Dopri5Options<T>,
) -> Result<OdeTrajectory<T>> {
    let dim = y0.len();
    let Some(&t0) = times.first() else {
        return Ok(OdeTrajectory {
            times: vec![],
            states: vec![],
        });
    };
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("output times must be nondecreasing".into()));
    }
    let a: Vec<Vec<T>> = A.iter().map(|row| row.iter().map(|&x| T::lit(x)).collect()).collect();
    let c: Vec<T> = C.iter().map(|&x| T::lit(x)).collect();
    let e: Vec<T> = E.iter().map(|&x| T::lit(x)).collect();
    let mut k = vec![vec![T::zero(); dim]; 7];
    let mut y = y0.to_vec();
    let mut t = t0;
    f(t, &y, &mut k[0]);
    let span = *times.last().unwrap() - t0;
    let mut h = {
        let d0 = norm_inf(&y);
        let d1 = norm_inf(&k[0]);
        let guess = if d0 > T::lit(1e-5) && d1 > T::lit(1e-5) {
            T::lit(0.01) * d0 / d1
        } else {
            T::lit(1e-6)
        };
        if span > T::zero() {
            guess.min(span)
        } else {
            guess
        }
    };
    let mut out = OdeTrajectory {
        times: Vec::with_capacity(times.len()),
        states: Vec::with_capacity(times.len()),
    };
    let mut stage = vec![T::zero(); dim];
    let mut y_new = vec![T::zero(); dim];
    let mut steps = 0usize;
    let fifth = T::lit(0.2);
    for &target in times {
        while target - t > T::zero() {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::StepUnderflow { t: t.as_f64() });
            }
            let h_min = T::lit(1e-14) * t.abs().max(T::one());
            let mut h_try = h.min(target - t);
            // avoid leaving a sliver before the output time
            if target - t - h_try < h_min {
                h_try = target - t;
            }
            for s in 0..6 {
                for d in 0..dim {
                    let mut acc = y[d];
                    for (j, kj) in k.iter().enumerate().take(s + 1) {
                        acc = acc + h_try * a[s][j] * kj[d];
                    }
                    stage[d] = acc;
                }
                if s == 5 {
                    y_new.copy_from_slice(&stage);
                }
                f(t + c[s] * h_try, &stage, &mut k[s + 1]);
            }
            let mut err = T::zero();
            for d in 0..dim {
                let mut ed = T::zero();
                for (j, kj) in k.iter().enumerate() {
                    ed = ed + e[j] * kj[d];
                }
                let scale = opts.atol + opts.rtol * y[d].abs().max(y_new[d].abs());
                let r = h_try * ed / scale;
                err = err + r * r;
            }
            err = (err / T::lit(dim.max(1) as f64)).sqrt();
            let leaves_orthant = opts.nonnegative && y_new.iter().any(|&x| x < T::zero());
            if err <= T::one() && !leaves_orthant && err.is_finite() {
                t = if target - t - h_try < h_min { target } else { t + h_try };
                std::mem::swap(&mut y, &mut y_new);
                let last = k.pop().unwrap();
                k.insert(0, last);
                let grow = if err == T::zero() {
                    T::lit(5.0)
                } else {
                    (T::lit(0.9) * err.powf(-fifth)).min(T::lit(5.0)).max(T::lit(0.2))
                };
                h = h_try * grow;
            } else {
                h = if leaves_orthant || !err.is_finite() {
                    h_try * T::lit(0.5)
                } else {
                    h_try * (T::lit(0.9) * err.powf(-fifth)).max(T::lit(0.2))
                };
                if h < h_min {
                    return Err(Error::StepUnderflow { t: t.as_f64() });
                }
            }
        }
        out.times.push(target);
        out.states.push(y.clone());
    }
    Ok(out)
}

/// Closed-form solution `z(t) = e^{tA}(A⁻¹B + z₀) − A⁻¹B` of `z' = A·z + B`.
#[derive(Debug, Clone)]
pub struct LinearFlow<T> {
    a: Matrix<T>,
    offset: Vec<T>,
}

impl<T: Scalar> LinearFlow<T> {
    pub fn new(a: &DemographyMatrix<T>, immigration: &[T]) -> Result<Self> {
        let offset = Lu::factor(a.matrix())?.solve(immigration);
        Ok(Self {
            a: a.matrix().clone(),
            offset,
        })
    }

    pub fn at(&self, x0: &[T], t: T) -> Result<Vec<T>> {
        let e = linalg::expm(&self.a.scale(t))?;
        let shifted: Vec<T> = x0.iter().zip(&self.offset).map(|(&x, &w)| x + w).collect();
        Ok(e.mul_vec(&shifted)
            .into_iter()
            .zip(&self.offset)
            .map(|(v, &w)| v - w)
            .collect())
    }

    /// `z(k·h)` for `k = 0..=steps` by repeated application of `e^{hA}`.
    pub fn grid(&self, x0: &[T], h: T, steps: usize) -> Result<Vec<Vec<T>>> {
        let e = linalg::expm(&self.a.scale(h))?;
        let mut w: Vec<T> = x0.iter().zip(&self.offset).map(|(&x, &o)| x + o).collect();
        let mut out = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            if k > 0 {
                w = e.mul_vec(&w);
            }
            out.push(w.iter().zip(&self.offset).map(|(&v, &o)| v - o).collect());
        }
        Ok(out)
    }
}

pub fn linear_flow<T: Scalar>(a: &DemographyMatrix<T>, immigration: &[T], x0: &[T], t: T) -> Result<Vec<T>> {
    LinearFlow::new(a, immigration)?.at(x0, t)
}

/// Denominator of the infection term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorMode {
    /// `s_k + i_k + r_k`, as in the jump rates.
    CurrentTotal,
    /// The fixed equilibrium population `z*_k`.
    ZStar,
}

/// Right-hand side of the 3n-dimensional SIR system.
#[derive(Debug, Clone)]
pub struct SirSystem<T> {
    model: NetworkModel<T>,
    mode: DenominatorMode,
    z_star: Vec<T>,
}

impl<T: Scalar> SirSystem<T> {
    pub fn new(model: &NetworkModel<T>, z_star: Vec<T>, mode: DenominatorMode) -> Result<Self> {
        if z_star.len() != model.n() {
            return Err(Error::Dimension("z_star length differs from n".into()));
        }
        if mode == DenominatorMode::ZStar && z_star.iter().any(|&z| !(z > T::zero())) {
            return Err(Error::Precondition("z_star denominators must be positive".into()));
        }
        Ok(Self {
            model: model.clone(),
            mode,
            z_star,
        })
    }

    /// Uses the model's own equilibrium population; requires subcritical demography.
    pub fn for_model(model: &NetworkModel<T>, mode: DenominatorMode) -> Result<Self> {
        let a = spectral::build_demography_matrix(model);
        let sub = spectral::check_subcritical(&a)?;
        if !sub.subcritical {
            return Err(Error::NotSubcritical(sub.spectral_abscissa.as_f64()));
        }
        let z = spectral::equilibrium_population(&a, model.immigration())?;
        Self::new(model, z, mode)
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn z_star(&self) -> &[T] {
        &self.z_star
    }

    pub fn mode(&self) -> DenominatorMode {
        self.mode
    }

    fn denominator(&self, k: usize, y: &[T]) -> T {
        let n = self.n();
        match self.mode {
            DenominatorMode::CurrentTotal => y[k] + y[n + k] + y[2 * n + k],
            DenominatorMode::ZStar => self.z_star[k],
        }
    }

    pub fn rhs(&self, y: &[T], dy: &mut [T]) {
        let n = self.n();
        let m = &self.model;
        let theta = m.transfer();
        for k in 0..n {
            let (s, i, r) = (y[k], y[n + k], y[2 * n + k]);
            let den = self.denominator(k, y);
            let inf = if den > T::zero() {
                m.infection()[k] * i * s / den
            } else {
                T::zero()
            };
            let out = m.out_rate(k) + m.death()[k];
            dy[k] = m.immigration()[k] + m.birth()[k] * (s + i + r) - out * s - inf;
            dy[n + k] = inf - (out + m.recovery()[k]) * i;
            dy[2 * n + k] = m.recovery()[k] * i - out * r;
        }
        for j in 0..n {
            for k in 0..n {
                let th = theta[(j, k)];
                if th > T::zero() {
                    for c in 0..3 {
                        dy[c * n + k] = dy[c * n + k] + th * y[c * n + j];
                    }
                }
            }
        }
    }

    pub fn rhs_vec(&self, y: &[T]) -> Vec<T> {
        let mut dy = vec![T::zero(); y.len()];
        self.rhs(y, &mut dy);
        dy
    }

    /// Analytic Jacobian of [`SirSystem::rhs`].
    pub fn jacobian(&self, y: &[T]) -> Matrix<T> {
        let n = self.n();
        let m = &self.model;
        let mut jac = Matrix::zeros(3 * n, 3 * n);
        for k in 0..n {
            let (sk, ik, rk) = (k, n + k, 2 * n + k);
            let out = m.out_rate(k) + m.death()[k];
            let bk = m.birth()[k];
            jac[(sk, sk)] = bk - out;
            jac[(sk, ik)] = bk;
            jac[(sk, rk)] = bk;
            jac[(ik, ik)] = -(out + m.recovery()[k]);
            jac[(rk, ik)] = m.recovery()[k];
            jac[(rk, rk)] = -out;
            let beta = m.infection()[k];
            let (s, i, r) = (y[sk], y[ik], y[rk]);
            let den = self.denominator(k, y);
            if den > T::zero() {
                let (ds, di, dr) = match self.mode {
                    DenominatorMode::CurrentTotal => {
                        let d2 = den * den;
                        (beta * i * (i + r) / d2, beta * s * (s + r) / d2, -beta * i * s / d2)
                    }
                    DenominatorMode::ZStar => (beta * i / den, beta * s / den, T::zero()),
                };
                for (col, v) in [(sk, ds), (ik, di), (rk, dr)] {
                    jac[(sk, col)] = jac[(sk, col)] - v;
                    jac[(ik, col)] = jac[(ik, col)] + v;
                }
            }
            for j in 0..n {
                let th = m.transfer()[(j, k)];
                if th > T::zero() {
                    for c in 0..3 {
                        jac[(c * n + k, c * n + j)] = jac[(c * n + k, c * n + j)] + th;
                    }
                }
            }
        }
        jac
    }

    /// Integrates from `init` (which must lie in `E`), sampling every `dt` up to `t_end`.
    pub fn integrate(
        &self,
        init: &DeterministicState<T>,
        t_end: T,
        dt: T,
        opts: Dopri5Options<T>,
    ) -> Result<OdeTrajectory<T>> {
        if init.n() != self.n() {
            return Err(Error::Dimension("initial state size differs from n".into()));
        }
        if !init.in_domain() {
            return Err(Error::Precondition("initial state has no infectives (not in E)".into()));
        }
        let times = output_grid(t_end, dt)?;
        let opts = Dopri5Options {
            nonnegative: true,
            ..opts
        };
        dopri5(|_, y, dy| self.rhs(y, dy), &init.flatten(), &times, opts)
    }
}

/// `0, dt, 2dt, …, t_end` (the last point is always `t_end`).
pub fn output_grid<T: Scalar>(t_end: T, dt: T) -> Result<Vec<T>> {
    if !(t_end >= T::zero()) || !(dt > T::zero()) {
        return Err(Error::Precondition("need t_end >= 0 and dt > 0".into()));
    }
    let steps = (t_end / dt).ceil().to_usize().unwrap_or(0);
    let mut times: Vec<T> = (0..steps).map(|k| T::lit(k as f64) * dt).collect();
    times.push(t_end);
    Ok(times)
}

pub fn integrate_sir_ode<T: Scalar>(
    model: &NetworkModel<T>,
    z_star: &[T],
    init: &DeterministicState<T>,
    t_end: T,
    dt: T,
    mode: DenominatorMode,
) -> Result<OdeTrajectory<T>> {
    SirSystem::new(model, z_star.to_vec(), mode)?.integrate(init, t_end, dt, Dopri5Options::default())
}

/// Closed-form one-node endemic equilibrium `(s*, i*, r*)`.
pub fn endemic_equilibrium_1d<T: Scalar>(immigration: T, birth: T, death: T, beta: T, gamma: T) -> Result<(T, T, T)> {
    if !(death > birth) {
        return Err(Error::NotSubcritical((birth - death).as_f64()));
    }
    if !(beta > death + gamma) {
        return Err(Error::NoEndemicEquilibrium(format!(
            "beta = {beta} does not exceed d + gamma = {}",
            death + gamma
        )));
    }
    let z = immigration / (death - birth);
    let gap = T::one() / (death + gamma) - T::one() / beta;
    Ok(((death + gamma) / beta * z, death * z * gap, gamma * z * gap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumClass {
    StableEndemic,
    Unstable,
    DiseaseFree,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport<T> {
    pub point: DeterministicState<T>,
    pub residual: T,
    pub jacobian_abscissa: T,
    pub classification: EquilibriumClass,
    pub newton_iterations: usize,
    pub mode: DenominatorMode,
}

pub const NEWTON_MAX_ITER: usize = 200;

/// Damped Newton from `(0.8, 0.1, 0.1)·z*`.
///
/// The infective coordinates are solved for as `i_k = e^{w_k}` and their
/// equations divided by `i_k`, which removes the disease-free point from the
/// set of finite roots (the raw residual is small near `i = 0` and plain
/// Newton is drawn there). When every `i_k` collapses towards zero the result
/// is reported as the disease-free point `(z*, 0, 0)`.
pub fn find_endemic_equilibrium<T: Scalar>(system: &SirSystem<T>) -> Result<EquilibriumReport<T>> {
    let n = system.n();
    let z = system.z_star().to_vec();
    let mut x: Vec<T> = [T::lit(0.8), T::lit(0.1), T::lit(0.1)]
        .iter()
        .flat_map(|&f| z.iter().map(move |&zk| f * zk))
        .collect();
    for w in &mut x[n..2 * n] {
        *w = w.ln();
    }
    let unpack = |x: &[T]| -> Vec<T> {
        let mut y = x.to_vec();
        for v in &mut y[n..2 * n] {
            *v = v.exp();
        }
        y
    };
    let scaled = |y: &[T]| -> Vec<T> {
        let mut f = system.rhs_vec(y);
        for k in 0..n {
            f[n + k] = f[n + k] / y[n + k];
        }
        f
    };
    let scale = norm_inf(&z).max(T::one());
    let tol = T::tol(1e-10) * scale;
    let collapse = T::lit(1e-12) * scale;
    let mut y = unpack(&x);
    let mut g = scaled(&y);
    let mut res = norm_inf(&g);
    let mut iterations = 0;
    let mut collapsed = false;
    while !(res < tol && norm_inf(&system.rhs_vec(&y)) < tol) {
        if y[n..2 * n].iter().all(|&i| i < collapse) {
            collapsed = true;
            break;
        }
        if iterations == NEWTON_MAX_ITER {
            return Err(Error::NewtonFailed {
                best_residual: norm_inf(&system.rhs_vec(&y)).as_f64(),
            });
        }
        iterations += 1;
        let f = system.rhs_vec(&y);
        let mut jac = system.jacobian(&y);
        for row in 0..3 * n {
            for k in 0..n {
                jac[(row, n + k)] = jac[(row, n + k)] * y[n + k];
            }
        }
        for k in 0..n {
            for col in 0..3 * n {
                jac[(n + k, col)] = jac[(n + k, col)] / y[n + k];
            }
            jac[(n + k, n + k)] = jac[(n + k, n + k)] - f[n + k] / y[n + k];
        }
        let minus_g: Vec<T> = g.iter().map(|&v| -v).collect();
        let step = Lu::factor(&jac)?.solve(&minus_g);
        let mut lambda = T::one();
        loop {
            let trial: Vec<T> = x.iter().zip(&step).map(|(&a, &b)| a + lambda * b).collect();
            let y_trial = unpack(&trial);
            let g_trial = scaled(&y_trial);
            let r_trial = norm_inf(&g_trial);
            if r_trial < res || (lambda < T::lit(1e-10) && r_trial.is_finite()) {
                x = trial;
                y = y_trial;
                g = g_trial;
                res = r_trial;
                break;
            }
            if lambda < T::lit(1e-10) {
                return Err(Error::NewtonFailed {
                    best_residual: norm_inf(&system.rhs_vec(&y)).as_f64(),
                });
            }
            lambda = lambda * T::lit(0.5);
        }
    }
    if collapsed {
        y = z.clone();
        y.extend(std::iter::repeat_n(T::zero(), 2 * n));
    }
    let residual = norm_inf(&system.rhs_vec(&y));
    let abscissa = linalg::spectral_abscissa_dense(&system.jacobian(&y))?;
    let classification = if collapsed {
        EquilibriumClass::DiseaseFree
    } else if abscissa < T::zero() {
        EquilibriumClass::StableEndemic
    } else {
        EquilibriumClass::Unstable
    };
    Ok(EquilibriumReport {
        point: DeterministicState::from_flat(&y),
        residual,
        jacobian_abscissa: abscissa,
        classification,
        newton_iterations: iterations,
        mode: system.mode(),
    })
}

/// `V = s − s*·log s + i − i*·log i` along a one-node trajectory.
pub fn lyapunov_v<T: Scalar>(traj: &OdeTrajectory<T>, s_star: T, i_star: T) -> Result<Vec<T>> {
    traj.states
        .iter()
        .map(|y| {
            if y.len() != 3 {
                return Err(Error::Dimension("Lyapunov function needs a one-node trajectory".into()));
            }
            let (s, i) = (y[0], y[1]);
            if !(s > T::zero() && i > T::zero()) {
                return Err(Error::Precondition(format!("nonpositive sample s = {s}, i = {i}")));
            }
            Ok(s - s_star * s.ln() + i - i_star * i.ln())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_node(b_imm: f64, b: f64, d: f64, beta: f64, gamma: f64) -> NetworkModel<f64> {
        NetworkModel::new(
            vec![b_imm],
            vec![b],
            vec![d],
            Matrix::zeros(1, 1),
            vec![beta],
            vec![gamma],
        )
        .unwrap()
    }

    #[test]
    fn dopri_exponential() {
        let tr = dopri5(
            |_, y, dy| dy[0] = -y[0],
            &[1.0],
            &[0.0, 1.0, 2.0],
            Dopri5Options::default(),
        )
        .unwrap();
        assert!((tr.states[2][0] - (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn scalar_linear_flow() {
        let m = one_node(1.0, 0.0, 1.0, 0.0, 0.0);
        let a = spectral::build_demography_matrix(&m);
        assert_eq!(linear_flow(&a, &[1.0], &[0.0], 0.0).unwrap()[0], 0.0);
        assert!((linear_flow(&a, &[1.0], &[0.0], 2f64.ln()).unwrap()[0] - 0.5).abs() < 1e-14);
        assert!((linear_flow(&a, &[1.0], &[1.0], 7.0).unwrap()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn endemic_point_and_lyapunov() {
        let (s, i, r) = endemic_equilibrium_1d(5.0f64, 0.5, 1.0, 4.0, 1.0).unwrap();
        assert!((s - 5.0).abs() < 1e-14 && (i - 2.5).abs() < 1e-14 && (r - 2.5).abs() < 1e-14);
        assert!(matches!(
            endemic_equilibrium_1d(5.0, 0.5, 1.0, 2.0, 1.0),
            Err(Error::NoEndemicEquilibrium(_))
        ));
        assert!(matches!(
            endemic_equilibrium_1d(5.0, 1.0, 1.0, 4.0, 1.0),
            Err(Error::NotSubcritical(_))
        ));
    }

    #[test]
    fn init_outside_domain_rejected() {
        let m = one_node(5.0, 0.5, 1.0, 4.0, 1.0);
        let init = DeterministicState::new(vec![10.0], vec![0.0], vec![0.0]).unwrap();
        assert!(integrate_sir_ode(&m, &[10.0], &init, 1.0, 0.1, DenominatorMode::CurrentTotal).is_err());
    }

    #[test]
    fn jacobian_matches_differences() {
        let m = NetworkModel::new(
            vec![1.0, 0.5],
            vec![0.1, 0.0],
            vec![0.4, 0.3],
            Matrix::from_rows(&[vec![0.0, 0.2], vec![0.3, 0.0]]).unwrap(),
            vec![3.0, 2.0],
            vec![0.5, 0.7],
        )
        .unwrap();
        for mode in [DenominatorMode::CurrentTotal, DenominatorMode::ZStar] {
            let sys = SirSystem::for_model(&m, mode).unwrap();
            let y = vec![1.2f64, 0.7, 0.3, 0.4, 0.2, 0.5];
            let jac = sys.jacobian(&y);
            for col in 0..6 {
                let h = 1e-6;
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[col] += h;
                ym[col] -= h;
                let (fp, fm) = (sys.rhs_vec(&yp), sys.rhs_vec(&ym));
                for row in 0..6 {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    assert!((fd - jac[(row, col)]).abs() <= 1e-5 * jac[(row, col)].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn newton_one_node() {
        let m = one_node(5.0, 0.5, 1.0, 4.0, 1.0);
        let rep = find_endemic_equilibrium(&SirSystem::for_model(&m, DenominatorMode::CurrentTotal).unwrap()).unwrap();
        assert_eq!(rep.classification, EquilibriumClass::StableEndemic);
        assert!((rep.point.s[0] - 5.0).abs() < 1e-8 && (rep.point.i[0] - 2.5).abs() < 1e-8);
        let sub = one_node(5.0, 0.5, 1.0, 1.0, 1.0);
        let rep =
            find_endemic_equilibrium(&SirSystem::for_model(&sub, DenominatorMode::CurrentTotal).unwrap()).unwrap();
        assert_eq!(rep.classification, EquilibriumClass::DiseaseFree);
        assert_eq!(rep.point.i, vec![0.0]);
    }

    #[test]
    fn lyapunov_rejects_nonpositive() {
        let tr = OdeTrajectory {
            times: vec![0.0],
            states: vec![vec![1.0, 0.0, 0.0]],
        };
        assert!(lyapunov_v(&tr, 5.0, 2.5).is_err());
    }
}
