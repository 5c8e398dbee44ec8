//! Replicated simulation experiments compared against the analytic results.
//!
//! Replica `k` of an experiment with seed `s` always uses stream `(s, k)`
//! and results are gathered in replica order, so every report is identical
//! whatever the number of worker threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{NetworkModel, ScalingConfig};
use crate::ode::{self, DenominatorMode, EquilibriumClass, LinearFlow, SirSystem};
use crate::outbreak::{self, FixedPointOptions, PgfPoint};
use crate::spectral;
use crate::ssa::{self, ClassifierParams, EndReason, OutbreakClassifier, RngSpec, SimOptions, TrajectoryStats};

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Precondition(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn replicate<R: Send>(n_runs: usize, f: impl Fn(u64) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    (0..n_runs as u64).into_par_iter().map(f).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Sample mean and `sd/√n` with the `n − 1` variance.
pub fn mean_estimate(values: &[f64]) -> MeanEstimate {
    let n = values.len() as f64;
    if values.is_empty() {
        return MeanEstimate {
            mean: f64::NAN,
            std_error: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return MeanEstimate { mean, std_error: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    MeanEstimate {
        mean,
        std_error: (var / n).sqrt(),
    }
}

/// Nearest-rank quantile of an unsorted sample.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        k if k % 2 == 1 => v[k / 2],
        k => 0.5 * (v[k / 2 - 1] + v[k / 2]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaSummary {
    pub stream: u64,
    pub extinction_time: Option<f64>,
    pub total_size: u64,
    pub max_infectives: u64,
    pub end_reason: EndReason,
    /// `None` when the run was censored before it could be classified.
    pub major: Option<bool>,
}

impl ReplicaSummary {
    fn new(stream: u64, stats: &TrajectoryStats, major: Option<bool>) -> Self {
        Self {
            stream,
            extinction_time: stats.extinction_time,
            total_size: stats.total_size,
            max_infectives: stats.max_infectives,
            end_reason: stats.end_reason,
            major,
        }
    }
}

pub fn write_replicas_csv(replicas: &[ReplicaSummary], mut w: impl Write) -> Result<()> {
    writeln!(w, "stream,extinction_time,total_size,max_infectives,end_reason,major")?;
    for r in replicas {
        let tau = r.extinction_time.map_or(String::new(), |t| t.to_string());
        let major = r.major.map_or(String::new(), |m| m.to_string());
        let reason = match r.end_reason {
            EndReason::Extinct => "extinct",
            EndReason::Horizon => "horizon",
            EndReason::Cap => "cap",
        };
        writeln!(
            w,
            "{},{tau},{},{},{reason},{major}",
            r.stream, r.total_size, r.max_infectives
        )?;
    }
    Ok(())
}

/// Fraction of unclassifiable runs tolerated by [`estimate_outbreak_prob`].
pub const MAX_CENSORED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n_runs: usize,
    pub classified: usize,
    pub censored: usize,
    pub inconclusive: usize,
    /// Branching-process prediction `1 − ∏ q_k^{I0_k}` when it can be computed.
    pub analytic: Option<f64>,
    pub classifier: OutbreakClassifier,
    /// Set when more than 1% of the runs could not be classified.
    pub failure: Option<String>,
    pub replicas: Vec<ReplicaSummary>,
}

impl EnsembleResult {
    /// `(estimate − analytic)/std_error`.
    pub fn z_score(&self) -> Option<f64> {
        self.analytic.map(|p| {
            if self.std_error > 0.0 {
                (self.estimate - p) / self.std_error
            } else if self.estimate == p {
                0.0
            } else {
                f64::INFINITY
            }
        })
    }
}

/// Frequency of major outbreaks among `n_runs` SIR replicates. Each run
/// stops as soon as it qualifies as major or its infectives die out.
pub fn estimate_outbreak_prob(
    model: &NetworkModel<f64>,
    scaling: &ScalingConfig<f64>,
    params: ClassifierParams,
    n_runs: usize,
    seed: u64,
) -> Result<EnsembleResult> {
    if n_runs < 100 {
        return Err(Error::Precondition(format!("n_runs = {n_runs} below 100")));
    }
    let classifier = OutbreakClassifier::for_model(model, scaling, params)?;
    let opts = classifier.stop_options(SimOptions::summary());
    let replicas = replicate(n_runs, |k| {
        let tr = ssa::simulate_sir(model, scaling, f64::INFINITY, RngSpec::new(seed, k), opts)?;
        Ok(ReplicaSummary::new(k, &tr.stats, classifier.classify(&tr.stats)))
    })?;
    let classified = replicas.iter().filter(|r| r.major.is_some()).count();
    let majors: Vec<f64> = replicas
        .iter()
        .filter_map(|r| r.major.map(|m| if m { 1.0 } else { 0.0 }))
        .collect();
    let est = mean_estimate(&majors);
    let censored = n_runs - classified;
    let failure = (censored as f64 > MAX_CENSORED_FRACTION * n_runs as f64)
        .then(|| format!("{censored} of {n_runs} runs could not be classified"));
    let analytic = outbreak::extinction_probs(model, FixedPointOptions::default())
        .ok()
        .and_then(|fp| outbreak::major_outbreak_prob(&fp.q, scaling.initial_infectives()).ok());
    Ok(EnsembleResult {
        estimate: est.mean,
        std_error: est.std_error,
        n_runs,
        classified,
        censored,
        inconclusive: 0,
        analytic,
        classifier,
        failure,
        replicas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryMean {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// `N·z* = −N·A⁻¹B`.
    pub expected: Vec<f64>,
    pub n_runs: usize,
    pub burn_in: f64,
    pub horizon: f64,
}

impl StationaryMean {
    /// Largest `|mean − expected|/std_error` over the nodes.
    pub fn max_z_score(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.expected)
            .zip(&self.std_error)
            .map(|((m, e), s)| {
                if *s > 0.0 {
                    (m - e).abs() / s
                } else if m == e {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Time-and-ensemble average of `Xᴺ` over `[burn_in, horizon]`, each replica
/// started at `⌊N·x0⌋` (`x0 = z*` by default).
pub fn stationary_mean_population(
    model: &NetworkModel<f64>,
    scale: f64,
    x0: Option<&[f64]>,
    burn_in: f64,
    horizon: f64,
    n_runs: usize,
    seed: u64,
) -> Result<StationaryMean> {
    let a = spectral::build_demography_matrix(model);
    let sub = spectral::check_subcritical(&a)?;
    if !sub.subcritical {
        return Err(Error::NotSubcritical(sub.spectral_abscissa));
    }
    let relax = 10.0 / sub.spectral_abscissa.abs();
    if burn_in < relax {
        return Err(Error::Precondition(format!(
            "burn_in {burn_in} shorter than 10/|abscissa| = {relax}"
        )));
    }
    if n_runs < 2 {
        return Err(Error::Precondition("need at least two replicas".into()));
    }
    let z = spectral::equilibrium_population(&a, model.immigration())?;
    let start = x0.map_or_else(|| z.clone(), <[f64]>::to_vec);
    let runs = replicate(n_runs, |k| {
        ssa::population_time_average(model, scale, &start, burn_in, horizon, RngSpec::new(seed, k))
    })?;
    let n = model.n();
    let (mut mean, mut std_error) = (vec![0.0; n], vec![0.0; n]);
    for node in 0..n {
        let col: Vec<f64> = runs.iter().map(|r| r[node]).collect();
        let e = mean_estimate(&col);
        mean[node] = e.mean;
        std_error[node] = e.std_error;
    }
    Ok(StationaryMean {
        mean,
        std_error,
        expected: z.iter().map(|v| v * scale).collect(),
        n_runs,
        burn_in,
        horizon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlnRow {
    pub scale: f64,
    pub q90: f64,
    pub median: f64,
    /// Per-replica `max_t ‖Xᴺ(t)/N − z(t)‖∞` over the output grid.
    pub deviations: Vec<f64>,
}

/// Deviation of `Xᴺ/N` from the linear flow from `x0`, for each `N`. The
/// supremum is taken over a uniform grid of step at most `dt`.
pub fn lln_deviation(
    model: &NetworkModel<f64>,
    x0: &[f64],
    scales: &[f64],
    horizon: f64,
    dt: f64,
    n_runs: usize,
    seed: u64,
) -> Result<Vec<LlnRow>> {
    if scales.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("scales must be increasing".into()));
    }
    if !(horizon >= 0.0 && dt > 0.0) || n_runs == 0 {
        return Err(Error::Precondition("need horizon ≥ 0, dt > 0 and n_runs > 0".into()));
    }
    let a = spectral::build_demography_matrix(model);
    let flow = LinearFlow::new(&a, model.immigration())?;
    let steps = (horizon / dt).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let z = if horizon == 0.0 {
        vec![x0.to_vec()]
    } else {
        flow.grid(x0, h, steps)?
    };
    let mut rows = Vec::new();
    for &scale in scales {
        let deviations = replicate(n_runs, |k| {
            let sup = |counts: &[u64], zt: &[f64]| {
                counts
                    .iter()
                    .zip(zt)
                    .map(|(&c, &v)| (c as f64 / scale - v).abs())
                    .fold(0.0, f64::max)
            };
            if horizon == 0.0 {
                let init = ScalingConfig::new(scale, x0.to_vec(), vec![0; model.n()])?.initial_population();
                return Ok(sup(&init, &z[0]));
            }
            let opts = SimOptions {
                record_events: false,
                snapshot_dt: Some(h),
                ..SimOptions::default()
            };
            let tr = ssa::simulate_population(model, scale, x0, horizon, RngSpec::new(seed, k), opts)?;
            Ok(tr
                .snapshots
                .iter()
                .zip(&z)
                .map(|(s, zt)| sup(&s.counts, zt))
                .fold(0.0, f64::max))
        })?;
        rows.push(LlnRow {
            scale,
            q90: quantile(&deviations, 0.9),
            median: median(&deviations),
            deviations,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PgfProbe {
    pub s: Vec<f64>,
    pub empirical: MeanEstimate,
    /// `G_source(s)`.
    pub analytic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffspringEstimate {
    pub source: usize,
    pub mean: Vec<MeanEstimate>,
    /// Row `source` of the mean offspring matrix.
    pub expected: Vec<f64>,
    pub probes: Vec<PgfProbe>,
    pub n_runs: usize,
}

/// Offspring vector of one infective born in `source`: it infects at rate
/// `β_k` while in node `k`, moves at `θ_{k,j}` and is removed at `d_k + γ_k`.
fn single_lifetime(model: &NetworkModel<f64>, source: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let n = model.n();
    let mut w = vec![0u64; n];
    let mut k = source;
    loop {
        let total = model.infection()[k] + model.leave_rate(k);
        if total <= 0.0 {
            return w;
        }
        let u: f64 = rng.random::<f64>() * total;
        if u < model.infection()[k] {
            w[k] += 1;
            continue;
        }
        let mut acc = model.infection()[k] + model.death()[k] + model.recovery()[k];
        if u < acc {
            return w;
        }
        let mut next = None;
        for j in (0..n).filter(|&j| j != k) {
            acc += model.transfer()[(k, j)];
            if u < acc {
                next = Some(j);
                break;
            }
        }
        // roundoff at the top of the range lands on the last positive transfer
        k = next.unwrap_or_else(|| {
            (0..n)
                .rev()
                .find(|&j| j != k && model.transfer()[(k, j)] > 0.0)
                .unwrap_or(k)
        });
    }
}

/// Empirical mean offspring per node and `E[∏ s_k^{W_k}]` at the probe
/// points, for ancestors born in `source`.
pub fn offspring_empirical(
    model: &NetworkModel<f64>,
    source: usize,
    probes: &[Vec<f64>],
    n_runs: usize,
    seed: u64,
) -> Result<OffspringEstimate> {
    let n = model.n();
    if source >= n {
        return Err(Error::UnknownNode(source.to_string()));
    }
    if n_runs < 10_000 {
        return Err(Error::Precondition(format!("n_runs = {n_runs} below 10⁴")));
    }
    let points: Vec<PgfPoint<f64>> = probes.iter().map(|s| PgfPoint::new(s.clone())).collect::<Result<_>>()?;
    let c = spectral::offspring_matrix(model)?;
    let samples = replicate(n_runs, |k| {
        let mut rng = RngSpec::new(seed, k).generator();
        Ok(single_lifetime(model, source, &mut rng))
    })?;
    let mean = (0..n)
        .map(|j| mean_estimate(&samples.iter().map(|w| w[j] as f64).collect::<Vec<_>>()))
        .collect();
    let probes = points
        .iter()
        .map(|p| {
            let vals: Vec<f64> = samples
                .iter()
                .map(|w| w.iter().zip(p.as_slice()).map(|(&c, &s)| s.powi(c as i32)).product())
                .collect();
            Ok(PgfProbe {
                s: p.as_slice().to_vec(),
                empirical: mean_estimate(&vals),
                analytic: outbreak::eval_g(model, p)?[source],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OffspringEstimate {
        source,
        mean,
        expected: c.row(source).to_vec(),
        probes,
        n_runs,
    })
}

/// `10⁴` divided by the slowest positive per-capita rate of the model.
pub fn default_t_cap(model: &NetworkModel<f64>) -> f64 {
    let a = spectral::build_demography_matrix(model);
    let relax = spectral::check_subcritical(&a)
        .map(|s| s.spectral_abscissa.abs())
        .unwrap_or(0.0);
    let slowest = model
        .death()
        .iter()
        .chain(model.recovery())
        .chain(model.infection())
        .chain(std::iter::once(&relax))
        .copied()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min);
    if slowest.is_finite() {
        1e4 / slowest
    } else {
        1e4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub scale: f64,
    pub n_runs: usize,
    pub majors: usize,
    /// Major runs still alive at `t_cap`; their `τ` and `Z` enter as lower bounds.
    pub censored: usize,
    pub median_log_tau: f64,
    pub median_log_size: f64,
    /// Median of `max_I/(N·‖z*‖₁)` over major runs.
    pub median_max_fraction: f64,
    /// At least half of the major runs are censored: the medians are lower bounds.
    pub median_is_lower_bound: bool,
    /// The `log₁₀ Z` sample has an empty gap of at least one decade.
    pub bimodal: bool,
    pub replicas: Vec<ReplicaSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SlopeFit {
    pub fn excludes_zero(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub tau_slope: SlopeFit,
    pub size_slope: SlopeFit,
    /// Half the equilibrium infective fraction `‖i*‖₁/‖z*‖₁`, the stand-in for the
    /// unspecified constant of the max-infectives bound.
    pub fraction_bound: f64,
    pub fraction_ok: bool,
    pub t_cap: f64,
    pub bootstrap: usize,
    pub inconclusive: Option<String>,
}

pub const MIN_MAJORS: usize = 30;

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn has_decade_gap(sizes: &[u64]) -> bool {
    let mut v: Vec<f64> = sizes.iter().map(|&z| ((z + 1) as f64).log10()).collect();
    v.sort_by(f64::total_cmp);
    v.windows(2).any(|w| w[1] - w[0] >= 1.0)
}

fn fit_with_bootstrap(scales: &[f64], samples: &[Vec<f64>], bootstrap: usize, rng: &mut ChaCha8Rng) -> SlopeFit {
    let medians: Vec<f64> = samples.iter().map(|s| median(s)).collect();
    let slope = least_squares_slope(scales, &medians);
    let mut slopes: Vec<f64> = (0..bootstrap)
        .map(|_| {
            let med: Vec<f64> = samples
                .iter()
                .map(|s| {
                    let resampled: Vec<f64> = (0..s.len()).map(|_| s[rng.random_range(0..s.len())]).collect();
                    median(&resampled)
                })
                .collect();
            least_squares_slope(scales, &med)
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let pick = |p: f64| slopes[((p * bootstrap as f64) as usize).min(bootstrap - 1)];
    SlopeFit {
        slope,
        ci_low: pick(0.025),
        ci_high: pick(0.975),
    }
}

/// Extinction time and total size of major outbreaks as `N` grows. Runs are
/// censored at `t_cap`; a censored run contributes `t_cap` and its size so
/// far, both lower bounds.
#[allow(clippy::too_many_arguments)]
pub fn endemic_scaling(
    model: &NetworkModel<f64>,
    x0: &[f64],
    initial_infectives: &[u64],
    scales: &[f64],
    t_cap: f64,
    n_runs: usize,
    seed: u64,
    params: ClassifierParams,
    bootstrap: usize,
) -> Result<ScalingReport> {
    if scales.len() < 2 || scales.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("need at least two increasing scales".into()));
    }
    if bootstrap == 0 {
        return Err(Error::Precondition("bootstrap must be positive".into()));
    }
    let mut inconclusive = None;
    let system = SirSystem::for_model(model, DenominatorMode::CurrentTotal)?;
    let eq = ode::find_endemic_equilibrium(&system)?;
    if eq.classification != EquilibriumClass::StableEndemic {
        inconclusive = Some(format!("equilibrium is {:?}, not stable endemic", eq.classification));
    }
    let z_mass: f64 = system.z_star().iter().sum();
    let i_mass: f64 = eq.point.i.iter().sum();
    let fraction_bound = 0.5 * i_mass / z_mass;
    let mut rows = Vec::new();
    let mut tau_samples = Vec::new();
    let mut size_samples = Vec::new();
    for &scale in scales {
        let scaling = ScalingConfig::new(scale, x0.to_vec(), initial_infectives.to_vec())?;
        let classifier = OutbreakClassifier::for_model(model, &scaling, params)?;
        let replicas = replicate(n_runs, |k| {
            let tr = ssa::simulate_sir(model, &scaling, t_cap, RngSpec::new(seed, k), SimOptions::summary())?;
            Ok(ReplicaSummary::new(k, &tr.stats, Some(classifier.is_major(&tr.stats))))
        })?;
        let major: Vec<&ReplicaSummary> = replicas.iter().filter(|r| r.major == Some(true)).collect();
        let censored = major.iter().filter(|r| r.extinction_time.is_none()).count();
        let taus: Vec<f64> = major.iter().map(|r| r.extinction_time.unwrap_or(t_cap).ln()).collect();
        let sizes: Vec<f64> = major.iter().map(|r| (r.total_size.max(1) as f64).ln()).collect();
        let fractions: Vec<f64> = major
            .iter()
            .map(|r| r.max_infectives as f64 / (scale * z_mass))
            .collect();
        if major.len() < MIN_MAJORS {
            inconclusive.get_or_insert(format!("only {} major outbreaks at N = {scale}", major.len()));
        }
        let all_sizes: Vec<u64> = replicas.iter().map(|r| r.total_size).collect();
        rows.push(ScalingRow {
            scale,
            n_runs,
            majors: major.len(),
            censored,
            median_log_tau: median(&taus),
            median_log_size: median(&sizes),
            median_max_fraction: median(&fractions),
            median_is_lower_bound: 2 * censored >= major.len() && censored > 0,
            bimodal: has_decade_gap(&all_sizes),
            replicas,
        });
        tau_samples.push(taus);
        size_samples.push(sizes);
    }
    let (tau_slope, size_slope) = if inconclusive.is_some() && rows.iter().any(|r| r.majors == 0) {
        let nan = SlopeFit {
            slope: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
        };
        (nan, nan)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let t = fit_with_bootstrap(scales, &tau_samples, bootstrap, &mut rng);
        let z = fit_with_bootstrap(scales, &size_samples, bootstrap, &mut rng);
        (t, z)
    };
    let fraction_ok = rows.iter().all(|r| r.median_max_fraction >= fraction_bound);
    Ok(ScalingReport {
        rows,
        tau_slope,
        size_slope,
        fraction_bound,
        fraction_ok,
        t_cap,
        bootstrap,
        inconclusive,
    })
}
