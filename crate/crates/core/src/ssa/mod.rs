//! Exact event-driven simulation of the population process, the SIR process
//! and its approximating branching process, plus their shared-stream coupling.

mod coupled;
mod direct;
mod network;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{NetworkModel, ScalingConfig};
use crate::spectral;

pub use network::Layout;

use coupled::{Firing, Nrm};
use direct::{Direct, Step};
use network::ReactionNet;

/// Seed plus replica index; equal specs give equal trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub(crate) fn generator(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    In,
    Death,
    Move,
    DeathS,
    DeathI,
    DeathR,
    MoveS,
    MoveI,
    MoveR,
    Infection,
    Recovery,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::In => "in",
            EventKind::Death => "death",
            EventKind::Move => "move",
            EventKind::DeathS => "death_s",
            EventKind::DeathI => "death_i",
            EventKind::DeathR => "death_r",
            EventKind::MoveS => "move_s",
            EventKind::MoveI => "move_i",
            EventKind::MoveR => "move_r",
            EventKind::Infection => "infection",
            EventKind::Recovery => "recovery",
        }
    }

    pub fn is_move(self) -> bool {
        matches!(
            self,
            EventKind::Move | EventKind::MoveS | EventKind::MoveI | EventKind::MoveR
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub from: u32,
    /// Destination node for moves.
    pub to: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Extinct,
    Horizon,
    Cap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStats {
    /// First time the infective count is zero; `None` when censored.
    pub extinction_time: Option<f64>,
    /// Upward jumps of the total infective count.
    pub total_size: u64,
    pub max_infectives: u64,
    pub end_reason: EndReason,
    /// The cap was the event limit rather than an outbreak threshold.
    pub event_limit_hit: bool,
    pub n_events: u64,
    pub final_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: f64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventTrajectory {
    pub layout: Layout,
    pub n: usize,
    pub initial: Vec<u64>,
    pub events: Vec<EventRecord>,
    /// Uniform-grid states when requested.
    pub snapshots: Vec<Snapshot>,
    /// State after every event, only with [`SimOptions::record_states`].
    pub states: Vec<Vec<u64>>,
    pub final_state: Vec<u64>,
    pub stats: TrajectoryStats,
}

impl EventTrajectory {
    /// `time,event_kind,node_from,node_to`, nodes 1-based, `node_to` empty unless a move.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "time,event_kind,node_from,node_to")?;
        for e in &self.events {
            match e.to {
                Some(to) => writeln!(w, "{},{},{},{}", e.time, e.kind.as_str(), e.from + 1, to + 1)?,
                None => writeln!(w, "{},{},{},", e.time, e.kind.as_str(), e.from + 1)?,
            }
        }
        Ok(())
    }

    pub fn total_infectives(&self, state: &[u64]) -> u64 {
        match self.layout {
            Layout::Population => 0,
            Layout::Sir => state[self.n..2 * self.n].iter().sum(),
            Layout::Branching => state.iter().sum(),
        }
    }
}

pub const DEFAULT_EVENT_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub record_events: bool,
    pub snapshot_dt: Option<f64>,
    /// Full state after every event (debug; memory heavy).
    pub record_states: bool,
    pub event_cap: u64,
    /// Stop once the total size reaches this value.
    pub size_cap: Option<u64>,
    /// Stop once the infective count reaches this value.
    pub infectives_cap: Option<u64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            record_events: true,
            snapshot_dt: None,
            record_states: false,
            event_cap: DEFAULT_EVENT_CAP,
            size_cap: None,
            infectives_cap: None,
        }
    }
}

impl SimOptions {
    /// Statistics only.
    pub fn summary() -> Self {
        Self {
            record_events: false,
            ..Self::default()
        }
    }
}

fn check_horizon(t_end: f64) -> Result<()> {
    if !(t_end > 0.0) {
        return Err(Error::Precondition(format!("t_end must be positive, got {t_end}")));
    }
    Ok(())
}

struct Recorder {
    traj: EventTrajectory,
    stop_on_extinction: bool,
    opts: SimOptions,
}

impl Recorder {
    fn new(net: &ReactionNet, x0: &[u64], opts: SimOptions, infectives: u64) -> Self {
        let stop_on_extinction = net.layout != Layout::Population;
        Self {
            traj: EventTrajectory {
                layout: net.layout,
                n: net.n,
                initial: x0.to_vec(),
                events: vec![],
                snapshots: vec![],
                states: vec![],
                final_state: x0.to_vec(),
                stats: TrajectoryStats {
                    extinction_time: None,
                    total_size: 0,
                    max_infectives: infectives,
                    end_reason: EndReason::Horizon,
                    event_limit_hit: false,
                    n_events: 0,
                    final_time: 0.0,
                },
            },
            stop_on_extinction,
            opts,
        }
    }

    /// Books one applied event; returns true when the run must stop.
    fn on_event(&mut self, net: &ReactionNet, c: usize, t: f64, x: &[u64], before: u64, after: u64) -> bool {
        let st = &mut self.traj.stats;
        st.n_events += 1;
        if after > before {
            st.total_size += after - before;
        }
        st.max_infectives = st.max_infectives.max(after);
        let ch = &net.channels[c];
        if self.opts.record_events {
            self.traj.events.push(EventRecord {
                time: t,
                kind: ch.kind,
                from: ch.from,
                to: ch.kind.is_move().then_some(ch.to),
            });
        }
        if self.opts.record_states {
            self.traj.states.push(x.to_vec());
        }
        if self.stop_on_extinction && after == 0 {
            st.extinction_time = Some(t);
            st.end_reason = EndReason::Extinct;
            return true;
        }
        if self.opts.size_cap.is_some_and(|cap| st.total_size >= cap)
            || self.opts.infectives_cap.is_some_and(|cap| after >= cap)
        {
            st.end_reason = EndReason::Cap;
            return true;
        }
        if st.n_events >= self.opts.event_cap {
            st.end_reason = EndReason::Cap;
            st.event_limit_hit = true;
            return true;
        }
        false
    }

    fn finish(mut self, t: f64, x: Vec<u64>) -> EventTrajectory {
        self.traj.stats.final_time = t;
        self.traj.final_state = x;
        self.traj
    }
}

fn run_direct(net: &ReactionNet, x0: Vec<u64>, t_end: f64, rng: RngSpec, opts: SimOptions) -> EventTrajectory {
    let mut eng = Direct::new(net, x0.clone(), rng.generator(), false);
    let mut rec = Recorder::new(net, &x0, opts, eng.infectives);
    if rec.stop_on_extinction && eng.infectives == 0 {
        rec.traj.stats.extinction_time = Some(0.0);
        rec.traj.stats.end_reason = EndReason::Extinct;
        return rec.finish(0.0, x0);
    }
    let mut next_snap = 0usize;
    let snap_time = |k: usize| opts.snapshot_dt.map_or(f64::INFINITY, |dt| k as f64 * dt);
    loop {
        while snap_time(next_snap) <= eng.t && snap_time(next_snap) <= t_end {
            rec.traj.snapshots.push(Snapshot {
                time: snap_time(next_snap),
                counts: eng.x.clone(),
            });
            next_snap += 1;
        }
        let target = snap_time(next_snap).min(t_end);
        let before = eng.infectives;
        match eng.advance(target) {
            Step::Fired(c) => {
                if rec.on_event(net, c, eng.t, &eng.x, before, eng.infectives) {
                    break;
                }
            }
            Step::Reached => {
                if eng.t >= t_end {
                    if snap_time(next_snap) <= t_end {
                        continue;
                    }
                    break;
                }
            }
            Step::Stalled => break,
        }
    }
    let t = eng.t;
    rec.finish(t, eng.x)
}

/// Population process: inflow `N·B_i + b_i·x_i`, death `d_i·x_i`, transfer
/// `θ_{i,j}·x_i`, from `⌊N·x0⌋`.
pub fn simulate_population(
    model: &NetworkModel<f64>,
    scale: f64,
    x0: &[f64],
    t_end: f64,
    rng: RngSpec,
    opts: SimOptions,
) -> Result<EventTrajectory> {
    check_horizon(t_end)?;
    if x0.len() != model.n() {
        return Err(Error::Dimension("x0 length differs from n".into()));
    }
    let scaling = ScalingConfig::new(scale, x0.to_vec(), vec![0; model.n()])?;
    let net = network::population_net(model, scale);
    Ok(run_direct(&net, scaling.initial_population(), t_end, rng, opts))
}

/// SIR process from `(⌊N·x0⌋ − I0, I0, 0)` until the infectives die out or
/// `t_end` (which may be infinite).
pub fn simulate_sir(
    model: &NetworkModel<f64>,
    scaling: &ScalingConfig<f64>,
    t_end: f64,
    rng: RngSpec,
    opts: SimOptions,
) -> Result<EventTrajectory> {
    check_horizon(t_end)?;
    if scaling.x0().len() != model.n() {
        return Err(Error::Dimension("scaling size differs from n".into()));
    }
    let net = network::sir_net(model, scaling.scale(), false);
    let init = scaling.initial_sir();
    let x0: Vec<u64> = init.s.iter().chain(&init.i).chain(&init.r).copied().collect();
    Ok(run_direct(&net, x0, t_end, rng, opts))
}

/// Branching approximation from `I0`, stopped at extinction or once the
/// infective count reaches `cap`.
pub fn simulate_branching(
    model: &NetworkModel<f64>,
    initial_infectives: &[u64],
    cap: u64,
    rng: RngSpec,
    opts: SimOptions,
) -> Result<EventTrajectory> {
    if initial_infectives.len() != model.n() {
        return Err(Error::Dimension("I0 length differs from n".into()));
    }
    if cap == 0 {
        return Err(Error::Precondition("cap must be positive".into()));
    }
    let net = network::branching_net(model);
    let opts = SimOptions {
        infectives_cap: Some(opts.infectives_cap.map_or(cap, |c| c.min(cap))),
        ..opts
    };
    let mut traj = run_direct(&net, initial_infectives.to_vec(), f64::INFINITY, rng, opts);
    if traj.stats.end_reason != EndReason::Extinct && traj.total_infectives(&traj.final_state) >= cap {
        traj.stats.end_reason = EndReason::Cap;
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledRun {
    pub sir: EventTrajectory,
    pub branching: EventTrajectory,
    /// First rejected contact in the SIR process before `T`.
    pub divergence_time: Option<f64>,
}

pub const COUPLED_BRANCHING_CAP: u64 = 1_000_000;

fn run_nrm(
    net: &ReactionNet,
    x0: Vec<u64>,
    t_end: f64,
    rng: RngSpec,
    opts: SimOptions,
) -> (EventTrajectory, Option<f64>) {
    let mut eng = Nrm::new(net, x0.clone(), rng);
    let mut rec = Recorder::new(net, &x0, opts, eng.infectives);
    let mut first_rejection = None;
    if eng.infectives == 0 {
        rec.traj.stats.extinction_time = Some(0.0);
        rec.traj.stats.end_reason = EndReason::Extinct;
        return (rec.finish(0.0, x0), None);
    }
    loop {
        let before = eng.infectives;
        match eng.advance(t_end) {
            (Step::Fired(_), Some(Firing::Applied(c))) => {
                if rec.on_event(net, c, eng.t, &eng.x, before, eng.infectives) {
                    break;
                }
            }
            (Step::Fired(_), _) => {
                first_rejection.get_or_insert(eng.t);
            }
            _ => break,
        }
    }
    let t = eng.t;
    (rec.finish(t, eng.x), first_rejection)
}

/// SIR and branching processes driven by the same unit-rate Poisson
/// processes for every infective transition and the same uniform marks. The
/// infective paths agree event-for-event until the first rejected contact.
pub fn simulate_coupled(
    model: &NetworkModel<f64>,
    scaling: &ScalingConfig<f64>,
    horizon: f64,
    rng: RngSpec,
    opts: SimOptions,
) -> Result<CoupledRun> {
    check_horizon(horizon)?;
    let sir_net = network::sir_net(model, scaling.scale(), true);
    let init = scaling.initial_sir();
    let x0: Vec<u64> = init.s.iter().chain(&init.i).chain(&init.r).copied().collect();
    let (sir, rejection) = run_nrm(&sir_net, x0, horizon, rng, opts);
    let br_net = network::branching_net(model);
    let br_opts = SimOptions {
        infectives_cap: Some(opts.infectives_cap.unwrap_or(COUPLED_BRANCHING_CAP)),
        ..opts
    };
    let (branching, _) = run_nrm(&br_net, init.i.clone(), horizon, rng, br_opts);
    Ok(CoupledRun {
        sir,
        branching,
        divergence_time: rejection,
    })
}

/// Exact time average of the population process over `[from, to]`, started at `⌊N·x0⌋`.
pub fn population_time_average(
    model: &NetworkModel<f64>,
    scale: f64,
    x0: &[f64],
    from: f64,
    to: f64,
    rng: RngSpec,
) -> Result<Vec<f64>> {
    if !(from >= 0.0 && to > from && to.is_finite()) {
        return Err(Error::Precondition(format!("invalid averaging window [{from}, {to}]")));
    }
    if x0.len() != model.n() {
        return Err(Error::Dimension("x0 length differs from n".into()));
    }
    let net = network::population_net(model, scale);
    let start = ScalingConfig::new(scale, x0.to_vec(), vec![0; model.n()])?.initial_population();
    let mut eng = Direct::new(&net, start, rng.generator(), false);
    while let Step::Fired(_) = eng.advance(from) {}
    let mut acc = vec![0.0; model.n()];
    let mut last = from;
    loop {
        let step = eng.advance(to);
        let dt = eng.t - last;
        for (a, &v) in acc.iter_mut().zip(&eng.x) {
            *a += v as f64 * dt;
        }
        if let Step::Fired(c) = step {
            // the state changed at eng.t: undo the jump for the interval just closed
            for &(k, d) in net.channels[c].effects() {
                acc[k as usize] -= d as f64 * dt;
            }
            last = eng.t;
        } else {
            break;
        }
    }
    Ok(acc.into_iter().map(|a| a / (to - from)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitTime {
    pub time: f64,
    pub censored: bool,
}

/// First time `‖Xᴺ/N − z*‖∞ ≥ eps` for the population process started at `⌊N·z*⌋`.
pub fn exit_time_ball(model: &NetworkModel<f64>, scale: f64, eps: f64, t_cap: f64, rng: RngSpec) -> Result<ExitTime> {
    let a = spectral::build_demography_matrix(model);
    let sub = spectral::check_subcritical(&a)?;
    if !sub.subcritical {
        return Err(Error::NotSubcritical(sub.spectral_abscissa));
    }
    let z = spectral::equilibrium_population(&a, model.immigration())?;
    let zmax = z.iter().cloned().fold(0.0, f64::max);
    if !(eps > 0.0 && eps < zmax) {
        return Err(Error::Precondition(format!("eps = {eps} must lie in (0, {zmax})")));
    }
    check_horizon(t_cap)?;
    let net = network::population_net(model, scale);
    let x0 = ScalingConfig::new(scale, z.clone(), vec![0; model.n()])?.initial_population();
    let outside = |x: &[u64]| x.iter().zip(&z).any(|(&v, &zk)| (v as f64 / scale - zk).abs() >= eps);
    if outside(&x0) {
        return Ok(ExitTime {
            time: 0.0,
            censored: false,
        });
    }
    let mut eng = Direct::new(&net, x0, rng.generator(), false);
    loop {
        match eng.advance(t_cap) {
            Step::Fired(c) => {
                let ch = &net.channels[c];
                if ch.effects().iter().any(|&(k, _)| {
                    let k = k as usize;
                    (eng.x[k] as f64 / scale - z[k]).abs() >= eps
                }) {
                    return Ok(ExitTime {
                        time: eng.t,
                        censored: false,
                    });
                }
            }
            _ => {
                return Ok(ExitTime {
                    time: t_cap,
                    censored: true,
                })
            }
        }
    }
}

/// Thresholds separating major from minor outbreaks at finite `N`:
/// major iff `Z > max(min_size, fraction·scale)` or `max_I ≥ fraction·scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutbreakClassifier {
    pub size_threshold: f64,
    pub infectives_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifierParams {
    pub min_size: f64,
    pub fraction: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            min_size: 100.0,
            fraction: 0.05,
        }
    }
}

impl OutbreakClassifier {
    /// Population scale `N·‖z*‖₁`, or `N·‖x0‖₁` when the demography has no equilibrium.
    pub fn for_model(
        model: &NetworkModel<f64>,
        scaling: &ScalingConfig<f64>,
        params: ClassifierParams,
    ) -> Result<Self> {
        let a = spectral::build_demography_matrix(model);
        let sub = spectral::check_subcritical(&a)?;
        let mass: f64 = if sub.subcritical {
            spectral::equilibrium_population(&a, model.immigration())?.iter().sum()
        } else {
            scaling.x0().iter().sum()
        };
        let scale = scaling.scale() * mass;
        Ok(Self {
            size_threshold: params.min_size.max(params.fraction * scale),
            infectives_threshold: params.fraction * scale,
        })
    }

    /// Early-stop caps that decide a run as soon as it qualifies as major.
    pub fn stop_options(&self, base: SimOptions) -> SimOptions {
        SimOptions {
            size_cap: Some(self.size_threshold.floor() as u64 + 1),
            infectives_cap: Some(self.infectives_threshold.ceil().max(1.0) as u64),
            ..base
        }
    }

    pub fn is_major(&self, stats: &TrajectoryStats) -> bool {
        stats.total_size as f64 > self.size_threshold || stats.max_infectives as f64 >= self.infectives_threshold
    }

    /// `Some(major?)`, or `None` when the run was censored before qualifying.
    pub fn classify(&self, stats: &TrajectoryStats) -> Option<bool> {
        if self.is_major(stats) {
            Some(true)
        } else if stats.end_reason == EndReason::Extinct {
            Some(false)
        } else {
            None
        }
    }
}
