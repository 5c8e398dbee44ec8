//! Large-deviations rate function of the scaled jump processes, path action
//! and minimum-action upper bounds on exit costs.
//!
//! Every action returned here is the action of one explicit path, hence an
//! upper bound on the corresponding quasipotential, never a certified value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::NetworkModel;
use crate::scalar::{norm_inf, Scalar};

pub const DEFAULT_U_MAX: f64 = 40.0;

/// Scaled propensity of one transition class.
#[derive(Debug, Clone, PartialEq)]
pub enum Rate<T> {
    /// `c0 + Σ c·x_k`.
    Affine { c0: T, terms: Vec<(usize, T)> },
    /// `β·s·i/(s+i+r)`, zero when `s+i+r = 0`.
    Infection { beta: T, s: usize, i: usize, r: usize },
}

impl<T: Scalar> Rate<T> {
    pub fn eval(&self, x: &[T]) -> T {
        match self {
            Rate::Affine { c0, terms } => terms.iter().fold(*c0, |acc, &(k, c)| acc + c * x[k]),
            Rate::Infection { beta, s, i, r } => {
                let p = x[*s] + x[*i] + x[*r];
                if p > T::zero() {
                    *beta * x[*s] * x[*i] / p
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Adds `w·∇rate(x)` into `out`.
    fn add_gradient(&self, x: &[T], w: T, out: &mut [T]) {
        match self {
            Rate::Affine { terms, .. } => {
                for &(k, c) in terms {
                    out[k] = out[k] + w * c;
                }
            }
            Rate::Infection { beta, s, i, r } => {
                let (xs, xi, xr) = (x[*s], x[*i], x[*r]);
                let p = xs + xi + xr;
                if p > T::zero() {
                    let f = w * *beta / (p * p);
                    out[*s] = out[*s] + f * xi * (xi + xr);
                    out[*i] = out[*i] + f * xs * (xs + xr);
                    out[*r] = out[*r] - f * xs * xi;
                }
            }
        }
    }

    fn coefficients_nonnegative(&self) -> bool {
        match self {
            Rate::Affine { c0, terms } => *c0 >= T::zero() && terms.iter().all(|&(_, c)| c >= T::zero()),
            Rate::Infection { beta, .. } => *beta >= T::zero(),
        }
    }

    fn indices(&self) -> Vec<usize> {
        match self {
            Rate::Affine { terms, .. } => terms.iter().map(|&(k, _)| k).collect(),
            Rate::Infection { s, i, r, .. } => vec![*s, *i, *r],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jump<T> {
    /// Sparse jump vector: `+e_k`, `−e_k` or `e_k − e_j`.
    pub delta: Vec<(usize, i8)>,
    pub rate: Rate<T>,
}

impl<T: Scalar> Jump<T> {
    #[inline]
    fn dot(&self, u: &[T]) -> T {
        self.delta
            .iter()
            .fold(T::zero(), |acc, &(k, d)| if d > 0 { acc + u[k] } else { acc - u[k] })
    }
}

/// How often the death block enters the SIR rate function. The displayed
/// formula repeats it; `Duplicated` reproduces that literally for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeathBlock {
    #[default]
    Once,
    Duplicated,
}

/// Transition classes of a scaled density-dependent jump process.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSpec<T> {
    dim: usize,
    jumps: Vec<Jump<T>>,
}

impl<T: Scalar> JumpSpec<T> {
    pub fn new(dim: usize, jumps: Vec<Jump<T>>) -> Result<Self> {
        for (c, j) in jumps.iter().enumerate() {
            let shape_ok = match j.delta.as_slice() {
                [(_, 1)] | [(_, -1)] => true,
                [(a, da), (b, db)] => a != b && da + db == 0 && da.abs() == 1,
                _ => false,
            };
            if !shape_ok {
                return Err(Error::Precondition(format!(
                    "jump {c} is not of the form ±e_k or e_k − e_j"
                )));
            }
            if j.delta
                .iter()
                .map(|&(k, _)| k)
                .chain(j.rate.indices())
                .any(|k| k >= dim)
            {
                return Err(Error::Dimension(format!("jump {c} refers to a coordinate ≥ {dim}")));
            }
            if !j.rate.coefficients_nonnegative() {
                return Err(Error::InvalidRate(format!("jump {c} has a negative rate coefficient")));
            }
        }
        Ok(Self { dim, jumps })
    }

    /// Immigration–birth, death and transfer of the population process.
    pub fn population(model: &NetworkModel<T>) -> Self {
        let n = model.n();
        let mut jumps = Vec::new();
        for j in 0..n {
            jumps.push(Jump {
                delta: vec![(j, 1)],
                rate: Rate::Affine {
                    c0: model.immigration()[j],
                    terms: vec![(j, model.birth()[j])],
                },
            });
            jumps.push(Jump {
                delta: vec![(j, -1)],
                rate: Rate::Affine {
                    c0: T::zero(),
                    terms: vec![(j, model.death()[j])],
                },
            });
            for k in 0..n {
                let th = model.transfer()[(j, k)];
                if k != j && th > T::zero() {
                    jumps.push(Jump {
                        delta: vec![(j, -1), (k, 1)],
                        rate: Rate::Affine {
                            c0: T::zero(),
                            terms: vec![(j, th)],
                        },
                    });
                }
            }
        }
        jumps.retain(|j| !is_null(&j.rate));
        Self { dim: n, jumps }
    }

    /// The `3n`-dimensional SIR process, coordinates `(s, i, r)`.
    pub fn sir(model: &NetworkModel<T>, deaths: DeathBlock) -> Self {
        let n = model.n();
        let mut jumps = Vec::new();
        let copies = match deaths {
            DeathBlock::Once => 1,
            DeathBlock::Duplicated => 2,
        };
        for j in 0..n {
            let (s, i, r) = (j, n + j, 2 * n + j);
            let b = model.birth()[j];
            jumps.push(Jump {
                delta: vec![(s, 1)],
                rate: Rate::Affine {
                    c0: model.immigration()[j],
                    terms: vec![(s, b), (i, b), (r, b)],
                },
            });
            for _ in 0..copies {
                for c in [s, i, r] {
                    jumps.push(Jump {
                        delta: vec![(c, -1)],
                        rate: Rate::Affine {
                            c0: T::zero(),
                            terms: vec![(c, model.death()[j])],
                        },
                    });
                }
            }
            for k in 0..n {
                let th = model.transfer()[(j, k)];
                if k != j && th > T::zero() {
                    for block in 0..3 {
                        jumps.push(Jump {
                            delta: vec![(block * n + j, -1), (block * n + k, 1)],
                            rate: Rate::Affine {
                                c0: T::zero(),
                                terms: vec![(block * n + j, th)],
                            },
                        });
                    }
                }
            }
            jumps.push(Jump {
                delta: vec![(s, -1), (i, 1)],
                rate: Rate::Infection {
                    beta: model.infection()[j],
                    s,
                    i,
                    r,
                },
            });
            jumps.push(Jump {
                delta: vec![(i, -1), (r, 1)],
                rate: Rate::Affine {
                    c0: T::zero(),
                    terms: vec![(i, model.recovery()[j])],
                },
            });
        }
        jumps.retain(|j| !is_null(&j.rate));
        Self { dim: 3 * n, jumps }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jumps(&self) -> &[Jump<T>] {
        &self.jumps
    }

    /// `Σ jump·propensity(x)`.
    pub fn drift(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for j in &self.jumps {
            let a = j.rate.eval(x);
            for &(k, d) in &j.delta {
                out[k] = if d > 0 { out[k] + a } else { out[k] - a };
            }
        }
        out
    }

    /// `∂L/∂x` at the maximizer `u` (envelope theorem).
    fn grad_x(&self, x: &[T], u: &[T], out: &mut [T]) {
        for j in &self.jumps {
            let w = -(j.dot(u).exp() - T::one());
            j.rate.add_gradient(x, w, out);
        }
    }
}

fn is_null<T: Scalar>(r: &Rate<T>) -> bool {
    match r {
        Rate::Affine { c0, terms } => *c0 == T::zero() && terms.iter().all(|&(_, c)| c == T::zero()),
        Rate::Infection { beta, .. } => *beta == T::zero(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalRate<T> {
    pub value: T,
    pub u_opt: Vec<T>,
    /// Some coordinate of the maximizer sits on the box edge with the
    /// gradient pointing outwards: the true supremum is not attained.
    pub boundary_hit: bool,
    /// Largest free gradient component at `u_opt`.
    pub gradient_norm: T,
    pub iterations: usize,
}

const NEWTON_MAX_ITER: usize = 500;

fn check_state<T: Scalar>(jumps: &JumpSpec<T>, x: &[T]) -> Result<()> {
    if x.len() != jumps.dim {
        return Err(Error::Dimension(format!(
            "state has {} entries, expected {}",
            x.len(),
            jumps.dim
        )));
    }
    if let Some(v) = x.iter().find(|v| !(**v >= T::zero()) || !v.is_finite()) {
        return Err(Error::Precondition(format!(
            "state coordinate {v} outside the nonnegative orthant"
        )));
    }
    Ok(())
}

/// `L(x, β) = max_{‖u‖∞ ≤ u_max} β·u − Σ (e^{u·ζ} − 1)·a_ζ(x)` by projected
/// Newton with Armijo backtracking, started from `u = 0`.
pub fn local_rate_l<T: Scalar>(jumps: &JumpSpec<T>, x: &[T], beta: &[T], u_max: T) -> Result<LocalRate<T>> {
    check_state(jumps, x)?;
    if beta.len() != jumps.dim {
        return Err(Error::Dimension(
            "velocity length differs from the state dimension".into(),
        ));
    }
    if !(u_max > T::zero()) {
        return Err(Error::Precondition("u_max must be positive".into()));
    }
    let rates: Vec<T> = jumps.jumps.iter().map(|j| j.rate.eval(x)).collect();
    Ok(maximize(jumps, &rates, beta, u_max))
}

fn objective<T: Scalar>(jumps: &JumpSpec<T>, rates: &[T], beta: &[T], u: &[T]) -> T {
    let lin = beta.iter().zip(u).fold(T::zero(), |acc, (&b, &v)| acc + b * v);
    jumps
        .jumps
        .iter()
        .zip(rates)
        .filter(|(_, &a)| a > T::zero())
        .fold(lin, |acc, (j, &a)| acc - (j.dot(u).exp_m1()) * a)
}

fn maximize<T: Scalar>(jumps: &JumpSpec<T>, rates: &[T], beta: &[T], u_max: T) -> LocalRate<T> {
    let d = jumps.dim;
    let scale = T::one() + norm_inf(beta) + rates.iter().fold(T::zero(), |acc, &a| acc + a);
    let tol = T::tol(1e-14) * scale;
    let mut u = vec![T::zero(); d];
    let mut f = T::zero();
    let mut g = vec![T::zero(); d];
    let mut free = vec![true; d];
    let mut gnorm = T::infinity();
    let mut iterations = 0;
    for it in 0..NEWTON_MAX_ITER {
        iterations = it;
        g.copy_from_slice(beta);
        let mut h = Matrix::zeros(d, d);
        for (j, &a) in jumps.jumps.iter().zip(rates) {
            if a <= T::zero() {
                continue;
            }
            let w = a * j.dot(&u).exp();
            for &(k, dk) in &j.delta {
                let sk = if dk > 0 { w } else { -w };
                g[k] = g[k] - sk;
                for &(l, dl) in &j.delta {
                    h[(k, l)] = if dk == dl { h[(k, l)] + w } else { h[(k, l)] - w };
                }
            }
        }
        for k in 0..d {
            free[k] = !((u[k] >= u_max && g[k] > T::zero()) || (u[k] <= -u_max && g[k] < T::zero()));
        }
        gnorm = (0..d).filter(|&k| free[k]).fold(T::zero(), |m, k| m.max(g[k].abs()));
        if gnorm == T::zero() {
            break;
        }
        // coordinates no active jump touches enter linearly: go straight to the edge
        let mut p = vec![T::zero(); d];
        for k in 0..d {
            if free[k] && h[(k, k)] == T::zero() && g[k] != T::zero() {
                p[k] = (u_max.copysign(g[k]) - u[k]) * T::lit(2.0);
            }
        }
        let idx: Vec<usize> = (0..d).filter(|&k| free[k] && h[(k, k)] > T::zero()).collect();
        let mut hf = Matrix::zeros(idx.len(), idx.len());
        for (a, &k) in idx.iter().enumerate() {
            for (b, &l) in idx.iter().enumerate() {
                hf[(a, b)] = h[(k, l)];
            }
            hf[(a, a)] = hf[(a, a)] * (T::one() + T::tol(1e-12));
        }
        let gf: Vec<T> = idx.iter().map(|&k| g[k]).collect();
        let pf = linalg::solve(&hf, &gf).unwrap_or_else(|_| idx.iter().map(|&k| g[k] / h[(k, k)]).collect());
        for (a, &k) in idx.iter().enumerate() {
            p[k] = pf[a];
        }
        // a small gradient with an O(1) Newton step means the supremum lies at infinity
        if gnorm <= tol && norm_inf(&p) <= T::tol(1e-9) {
            break;
        }
        let mut t = T::one();
        let mut moved = false;
        for _ in 0..80 {
            let trial: Vec<T> = (0..d).map(|k| (u[k] + t * p[k]).max(-u_max).min(u_max)).collect();
            let ft = objective(jumps, rates, beta, &trial);
            let gain = (0..d).fold(T::zero(), |acc, k| acc + g[k] * (trial[k] - u[k]));
            let armijo = ft >= f + T::lit(1e-4) * gain;
            // below roundoff of f only monotonicity can be asked for
            let flat = gain.abs() <= T::lit(16.0) * T::epsilon() * (T::one() + f.abs());
            if ft.is_finite() && ((armijo && ft >= f) || flat) {
                moved = trial != u;
                u = trial;
                f = ft.max(f);
                break;
            }
            t = t * T::lit(0.5);
        }
        if !moved {
            break;
        }
    }
    let boundary_hit = (0..d).any(|k| !free[k]);
    LocalRate {
        value: f.max(T::zero()),
        u_opt: u,
        boundary_hit,
        gradient_norm: gnorm,
        iterations,
    }
}

/// Discretized path with its action.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionPath<T> {
    pub times: Vec<T>,
    pub points: Vec<Vec<T>>,
    pub action: T,
}

impl<T: Scalar> ActionPath<T> {
    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        let d = self.points.first().map_or(0, Vec::len);
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((0..d).map(|k| format!("x{k}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, p) in self.times.iter().zip(&self.points) {
            let row: Vec<String> = std::iter::once(t.to_string())
                .chain(p.iter().map(|v| v.to_string()))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActionEstimate<T> {
    pub action: T,
    /// `|A_h − A_{2h}|/3` from the path restricted to every other grid point.
    pub richardson_error: T,
    /// Segments whose local maximizer hit the `u_max` box.
    pub boundary_hits: usize,
}

fn check_grid<T: Scalar>(jumps: &JumpSpec<T>, times: &[T], points: &[Vec<T>]) -> Result<()> {
    if times.len() != points.len() || times.is_empty() {
        return Err(Error::Dimension(
            "times and points must be nonempty and of equal length".into(),
        ));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("path times must be strictly increasing".into()));
    }
    for p in points {
        check_state(jumps, p)?;
    }
    Ok(())
}

/// Midpoint quadrature of `L` along the piecewise-linear interpolant: on each
/// segment the velocity is the exact segment slope and `L` is sampled at the
/// segment midpoint.
fn segment_action<T: Scalar>(
    jumps: &JumpSpec<T>,
    times: &[T],
    points: &[Vec<T>],
    u_max: T,
    mut grad: Option<&mut [Vec<T>]>,
) -> (T, usize) {
    let d = jumps.dim;
    let half = T::lit(0.5);
    let mut total = T::zero();
    let mut hits = 0;
    let mut gx = vec![T::zero(); d];
    for k in 0..points.len() - 1 {
        let h = times[k + 1] - times[k];
        let mid: Vec<T> = (0..d).map(|c| (points[k][c] + points[k + 1][c]) * half).collect();
        let v: Vec<T> = (0..d).map(|c| (points[k + 1][c] - points[k][c]) / h).collect();
        let rates: Vec<T> = jumps.jumps.iter().map(|j| j.rate.eval(&mid)).collect();
        let lr = maximize(jumps, &rates, &v, u_max);
        total = total + h * lr.value;
        hits += lr.boundary_hit as usize;
        if let Some(g) = grad.as_deref_mut() {
            gx.iter_mut().for_each(|x| *x = T::zero());
            jumps.grad_x(&mid, &lr.u_opt, &mut gx);
            for c in 0..d {
                let share = h * half * gx[c];
                g[k][c] = g[k][c] + share - lr.u_opt[c];
                g[k + 1][c] = g[k + 1][c] + share + lr.u_opt[c];
            }
        }
    }
    (total, hits)
}

/// Action of a path plus a Richardson error estimate.
pub fn path_action<T: Scalar>(
    jumps: &JumpSpec<T>,
    times: &[T],
    points: &[Vec<T>],
    u_max: T,
) -> Result<ActionEstimate<T>> {
    check_grid(jumps, times, points)?;
    let (fine, hits) = segment_action(jumps, times, points, u_max, None);
    let m = points.len() - 1;
    let richardson_error = if m >= 2 {
        let mut keep: Vec<usize> = (0..=m).step_by(2).collect();
        if *keep.last().unwrap() != m {
            keep.push(m);
        }
        let ct: Vec<T> = keep.iter().map(|&k| times[k]).collect();
        let cp: Vec<Vec<T>> = keep.iter().map(|&k| points[k].clone()).collect();
        let (coarse, _) = segment_action(jumps, &ct, &cp, u_max, None);
        (fine - coarse).abs() / T::lit(3.0)
    } else {
        T::zero()
    };
    Ok(ActionEstimate {
        action: fine,
        richardson_error,
        boundary_hits: hits,
    })
}

impl<T: Scalar> ActionPath<T> {
    pub fn new(jumps: &JumpSpec<T>, times: Vec<T>, points: Vec<Vec<T>>, u_max: T) -> Result<Self> {
        let action = path_action(jumps, &times, &points, u_max)?.action;
        Ok(Self { times, points, action })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BallNorm {
    Two,
    Inf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target<T> {
    Point(Vec<T>),
    /// Any point of the sphere `‖y − center‖ = radius`.
    BallExit {
        center: Vec<T>,
        radius: T,
        norm: BallNorm,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions<T> {
    pub horizon: T,
    pub grid: usize,
    pub restarts: usize,
    pub seed: u64,
    pub u_max: T,
    pub max_iter: usize,
    /// Restart perturbation relative to the start–target distance.
    pub noise: T,
}

impl<T: Scalar> Default for MinimizeOptions<T> {
    fn default() -> Self {
        Self {
            horizon: T::lit(10.0),
            grid: 64,
            restarts: 4,
            seed: 0,
            u_max: T::lit(DEFAULT_U_MAX),
            max_iter: 2000,
            noise: T::lit(0.05),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizeResult<T> {
    pub path: ActionPath<T>,
    /// Index of the restart that produced `path`.
    pub best_restart: usize,
    pub restart_actions: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
}

/// How the optimization vector maps to the terminal point.
#[derive(Clone)]
enum Terminal<T> {
    Fixed(Vec<T>),
    /// Face `coord = center ± radius` of the ∞-sphere; the other coordinates are free.
    Face {
        coord: usize,
        value: T,
    },
    /// `center + radius·w/‖w‖₂`.
    Sphere {
        center: Vec<T>,
        radius: T,
    },
}

struct Problem<'a, T> {
    jumps: &'a JumpSpec<T>,
    start: &'a [T],
    times: Vec<T>,
    terminal: Terminal<T>,
    u_max: T,
}

impl<T: Scalar> Problem<'_, T> {
    fn interior(&self) -> usize {
        self.times.len() - 2
    }

    fn unpack(&self, z: &[T]) -> Vec<Vec<T>> {
        let d = self.jumps.dim;
        let mut pts = Vec::with_capacity(self.times.len());
        pts.push(self.start.to_vec());
        for k in 0..self.interior() {
            pts.push(z[k * d..(k + 1) * d].to_vec());
        }
        let tail = &z[self.interior() * d..];
        pts.push(match &self.terminal {
            Terminal::Fixed(y) => y.clone(),
            Terminal::Face { coord, value } => {
                let mut y = tail.to_vec();
                y[*coord] = *value;
                y
            }
            Terminal::Sphere { center, radius } => {
                let nrm = tail.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
                center.iter().zip(tail).map(|(&c, &w)| c + *radius * w / nrm).collect()
            }
        });
        pts
    }

    /// Action and gradient, or `None` outside the orthant.
    fn eval(&self, z: &[T], grad: &mut [T]) -> Option<T> {
        let d = self.jumps.dim;
        let pts = self.unpack(z);
        if pts.iter().flatten().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return None;
        }
        let mut g = vec![vec![T::zero(); d]; pts.len()];
        let (a, _) = segment_action(self.jumps, &self.times, &pts, self.u_max, Some(&mut g));
        for k in 0..self.interior() {
            grad[k * d..(k + 1) * d].copy_from_slice(&g[k + 1]);
        }
        let last = &g[pts.len() - 1];
        let tail = &mut grad[self.interior() * d..];
        match &self.terminal {
            Terminal::Fixed(_) => {}
            Terminal::Face { coord, .. } => {
                tail.copy_from_slice(last);
                tail[*coord] = T::zero();
            }
            Terminal::Sphere { radius, .. } => {
                let w = &z[self.interior() * d..];
                let nrm = w.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
                let proj = w.iter().zip(last).fold(T::zero(), |a, (&wi, &gi)| a + wi * gi) / (nrm * nrm);
                for c in 0..d {
                    tail[c] = *radius / nrm * (last[c] - proj * w[c]);
                }
            }
        }
        a.is_finite().then_some(a)
    }
}

struct LbfgsOutcome<T> {
    z: Vec<T>,
    f: T,
    iterations: usize,
    converged: bool,
}

/// Limited-memory BFGS with Armijo backtracking; infeasible trial points
/// (`None`) are treated as failed steps.
fn lbfgs<T: Scalar>(
    mut z: Vec<T>,
    max_iter: usize,
    mut eval: impl FnMut(&[T], &mut [T]) -> Option<T>,
) -> Option<LbfgsOutcome<T>> {
    const MEMORY: usize = 10;
    let n = z.len();
    let mut g = vec![T::zero(); n];
    let mut f = eval(&z, &mut g)?;
    if n == 0 {
        return Some(LbfgsOutcome {
            z,
            f,
            iterations: 0,
            converged: true,
        });
    }
    let mut hist: Vec<(Vec<T>, Vec<T>, T)> = Vec::new();
    let gtol = T::tol(1e-9);
    let mut stall = 0;
    for it in 0..max_iter {
        if norm_inf(&g) <= gtol {
            return Some(LbfgsOutcome {
                z,
                f,
                iterations: it,
                converged: true,
            });
        }
        let mut q = g.clone();
        let mut alpha = vec![T::zero(); hist.len()];
        for (idx, (s, y, rho)) in hist.iter().enumerate().rev() {
            let a = *rho * dot(s, &q);
            alpha[idx] = a;
            axpy(-a, y, &mut q);
        }
        if let Some((s, y, _)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v = *v * gamma);
        } else {
            let gn = norm_inf(&g);
            let step = T::lit(1e-2) / (T::one() + gn);
            q.iter_mut().for_each(|v| *v = *v * step);
        }
        for (idx, (s, y, rho)) in hist.iter().enumerate() {
            let b = *rho * dot(y, &q);
            axpy(alpha[idx] - b, s, &mut q);
        }
        let mut dir: Vec<T> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < T::zero()) {
            hist.clear();
            dir = g
                .iter()
                .map(|&v| -v * T::lit(1e-2) / (T::one() + norm_inf(&g)))
                .collect();
            slope = dot(&g, &dir);
        }
        let mut t = T::one();
        let mut accepted = None;
        let mut g_new = vec![T::zero(); n];
        for _ in 0..60 {
            let trial: Vec<T> = z.iter().zip(&dir).map(|(&a, &b)| a + t * b).collect();
            if let Some(ft) = eval(&trial, &mut g_new) {
                if ft <= f + T::lit(1e-4) * t * slope {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            t = t * T::lit(0.5);
        }
        let Some((z_new, f_new)) = accepted else {
            return Some(LbfgsOutcome {
                z,
                f,
                iterations: it,
                converged: false,
            });
        };
        let s: Vec<T> = z_new.iter().zip(&z).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if hist.len() == MEMORY {
                hist.remove(0);
            }
            hist.push((s, y, T::one() / sy));
        }
        let decrease = f - f_new;
        z = z_new;
        g.copy_from_slice(&g_new);
        f = f_new;
        stall = if decrease <= T::tol(1e-15) * (T::one() + f.abs()) {
            stall + 1
        } else {
            0
        };
        if stall >= 5 {
            return Some(LbfgsOutcome {
                z,
                f,
                iterations: it + 1,
                converged: true,
            });
        }
    }
    Some(LbfgsOutcome {
        z,
        f,
        iterations: max_iter,
        converged: false,
    })
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

fn distance<T: Scalar>(a: &[T], b: &[T], norm: BallNorm) -> T {
    let diff = a.iter().zip(b).map(|(&x, &y)| x - y);
    match norm {
        BallNorm::Inf => diff.fold(T::zero(), |m, v| m.max(v.abs())),
        BallNorm::Two => diff.fold(T::zero(), |m, v| m + v * v).sqrt(),
    }
}

/// Points, action, iterations and convergence flag of one restart.
type RestartRun<T> = (Vec<Vec<T>>, T, usize, bool);

/// Minimum-action path from `start` to `target` over `[0, horizon]`, best of
/// several L-BFGS descents. Restart 0 is the straight line; for ball targets
/// the first restarts sweep the coordinate directions and later ones are
/// random. Restarts run in parallel and are seeded by `(seed, index)`.
pub fn minimize_action<T: Scalar>(
    jumps: &JumpSpec<T>,
    start: &[T],
    target: &Target<T>,
    opts: MinimizeOptions<T>,
) -> Result<MinimizeResult<T>> {
    check_state(jumps, start)?;
    if start.iter().any(|v| !(*v > T::zero())) {
        return Err(Error::Precondition("start must lie strictly inside the orthant".into()));
    }
    if opts.grid < 8 {
        return Err(Error::Precondition(format!("grid size {} below 8", opts.grid)));
    }
    if opts.restarts == 0 || !(opts.horizon > T::zero()) {
        return Err(Error::Precondition(
            "need at least one restart and a positive horizon".into(),
        ));
    }
    let d = jumps.dim;
    let trivial = |t: T| MinimizeResult {
        path: ActionPath {
            times: vec![T::zero()],
            points: vec![start.to_vec()],
            action: t,
        },
        best_restart: 0,
        restart_actions: vec![t],
        converged: true,
        iterations: 0,
    };
    match target {
        Target::Point(y) => {
            check_state(jumps, y)?;
            if y.as_slice() == start {
                return Ok(trivial(T::zero()));
            }
        }
        Target::BallExit { center, radius, norm } => {
            if center.len() != d {
                return Err(Error::Dimension("ball center dimension differs from the state".into()));
            }
            if !(*radius > T::zero()) {
                return Err(Error::Precondition("ball radius must be positive".into()));
            }
            if distance(start, center, *norm) >= *radius {
                return Ok(trivial(T::zero()));
            }
        }
    }
    let m = opts.grid;
    let times: Vec<T> = (0..=m)
        .map(|k| opts.horizon * T::lit(k as f64) / T::lit(m as f64))
        .collect();
    let runs: Vec<Option<RestartRun<T>>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            let (terminal, end) = initial_terminal(target, r, &mut rng);
            let prob = Problem {
                jumps,
                start,
                times: times.clone(),
                terminal: terminal.clone(),
                u_max: opts.u_max,
            };
            let reach = distance(start, &end, BallNorm::Inf);
            let mut z = Vec::with_capacity((m - 1) * d + d);
            for k in 1..m {
                let frac = T::lit(k as f64 / m as f64);
                for c in 0..d {
                    let mut v = start[c] + (end[c] - start[c]) * frac;
                    if r > 0 && opts.noise > T::zero() {
                        let e: f64 = rng.random_range(-1.0..1.0);
                        v = v + opts.noise * reach * T::lit(e);
                    }
                    z.push(v.max(T::zero()));
                }
            }
            match &terminal {
                Terminal::Fixed(_) => {}
                Terminal::Face { .. } => z.extend_from_slice(&end),
                Terminal::Sphere { center, .. } => z.extend(end.iter().zip(center).map(|(&a, &b)| a - b)),
            }
            let out = lbfgs(z, opts.max_iter, |z, g| prob.eval(z, g))?;
            Some((prob.unpack(&out.z), out.f, out.iterations, out.converged))
        })
        .collect();
    let restart_actions: Vec<T> = runs.iter().map(|r| r.as_ref().map_or(T::infinity(), |r| r.1)).collect();
    let (best, _) =
        restart_actions.iter().enumerate().fold(
            (None, T::infinity()),
            |(bi, bv), (i, &v)| if v < bv { (Some(i), v) } else { (bi, bv) },
        );
    let Some(best) = best else {
        return Err(Error::Precondition("every restart started outside the orthant".into()));
    };
    let (points, action, iterations, converged) = runs[best].clone().unwrap();
    Ok(MinimizeResult {
        path: ActionPath { times, points, action },
        best_restart: best,
        restart_actions,
        converged,
        iterations,
    })
}

fn initial_terminal<T: Scalar>(target: &Target<T>, r: usize, rng: &mut ChaCha8Rng) -> (Terminal<T>, Vec<T>) {
    match target {
        Target::Point(y) => (Terminal::Fixed(y.clone()), y.clone()),
        Target::BallExit { center, radius, norm } => {
            let d = center.len();
            let mut w: Vec<T> = if r < 2 * d {
                let mut w = vec![T::zero(); d];
                w[r / 2] = if r.is_multiple_of(2) { T::one() } else { -T::one() };
                w
            } else {
                (0..d).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect()
            };
            if w.iter().all(|v| *v == T::zero()) {
                w[0] = T::one();
            }
            match norm {
                BallNorm::Two => {
                    let nrm = w.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
                    let end: Vec<T> = center.iter().zip(&w).map(|(&c, &v)| c + *radius * v / nrm).collect();
                    (
                        Terminal::Sphere {
                            center: center.clone(),
                            radius: *radius,
                        },
                        end,
                    )
                }
                BallNorm::Inf => {
                    let (coord, big) =
                        w.iter().enumerate().fold(
                            (0, T::zero()),
                            |(bi, bv), (i, v)| {
                                if v.abs() > bv {
                                    (i, v.abs())
                                } else {
                                    (bi, bv)
                                }
                            },
                        );
                    let end: Vec<T> = center.iter().zip(&w).map(|(&c, &v)| c + *radius * v / big).collect();
                    (
                        Terminal::Face {
                            coord,
                            value: end[coord],
                        },
                        end,
                    )
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn birth_death(up: f64, down: f64) -> JumpSpec<f64> {
        JumpSpec::new(
            1,
            vec![
                Jump {
                    delta: vec![(0, 1)],
                    rate: Rate::Affine { c0: up, terms: vec![] },
                },
                Jump {
                    delta: vec![(0, -1)],
                    rate: Rate::Affine {
                        c0: 0.0,
                        terms: vec![(0, down)],
                    },
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn symmetric_legendre_value() {
        let j = birth_death(1.0, 1.0);
        let l = local_rate_l(&j, &[1.0], &[1.0], 40.0).unwrap();
        let u = 0.5f64.asinh();
        assert!((l.u_opt[0] - u).abs() < 1e-12);
        assert!((l.value - (u - 2.0 * (u.cosh() - 1.0))).abs() < 1e-12);
        assert!((l.value - 0.2451).abs() < 1e-4);
        assert!(!l.boundary_hit);
    }

    #[test]
    fn pure_death_hits_box() {
        let j = birth_death(0.0, 2.0);
        let l = local_rate_l(&j, &[1.5], &[0.0], 40.0).unwrap();
        assert!(l.boundary_hit);
        assert!((l.value - 3.0 * (1.0 - (-40.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn rejects_malformed_jumps() {
        let bad = Jump {
            delta: vec![(0, 2)],
            rate: Rate::Affine { c0: 1.0, terms: vec![] },
        };
        assert!(JumpSpec::new(1, vec![bad]).is_err());
        assert!(local_rate_l(&birth_death(1.0, 1.0), &[-1.0], &[0.0], 40.0).is_err());
    }

    #[test]
    fn lbfgs_on_quadratic() {
        let out = lbfgs(vec![3.0f64, -2.0], 200, |z: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (z[0] - 1.0);
            g[1] = 20.0 * (z[1] + 0.5);
            Some((z[0] - 1.0).powi(2) + 10.0 * (z[1] + 0.5).powi(2))
        })
        .unwrap();
        assert!(out.converged);
        assert!((out.z[0] - 1.0).abs() < 1e-8 && (out.z[1] + 0.5).abs() < 1e-8);
    }
}
