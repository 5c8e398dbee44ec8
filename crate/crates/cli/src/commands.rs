use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use netsir::calibration::{self, default_floor, read_movements_csv, read_nodes_csv};
use netsir::ldp::{self, BallNorm, DeathBlock, JumpSpec, MinimizeOptions, Target};
use netsir::model::{self, LoadedConfig, ModelDocument};
use netsir::montecarlo::{self, write_replicas_csv};
use netsir::ode::{
    find_endemic_equilibrium, output_grid, DenominatorMode, DeterministicState, Dopri5Options, EquilibriumClass,
    LinearFlow, SirSystem,
};
use netsir::spectral::{build_demography_matrix, check_subcritical, equilibrium_population};
use netsir::ssa::{self, ClassifierParams, EventTrajectory, RngSpec, SimOptions};
use netsir::{Error, FixedPointOptions, Model, Scalar};
use serde_json::{json, Value};

use crate::args::*;
use crate::output::{sidecar, CliResult, Failure, Outputs};

pub enum Outcome {
    Done,
    /// Outputs were written but the experiment could not reach a verdict.
    Inconclusive(String),
}

pub struct Context<'a> {
    pub cli: &'a Cli,
    pub config: Option<&'a [u8]>,
    pub out: Outputs,
}

impl Context<'_> {
    fn loaded(&self) -> CliResult<LoadedConfig> {
        let bytes = self.config.ok_or_else(|| {
            Failure::Usage(format!(
                "--config is required for {}",
                subcommand_name(&self.cli.command)
            ))
        })?;
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse(format!("config is not UTF-8: {e}")))?;
        Ok(model::load_model(text)?)
    }
}

pub fn subcommand_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Analyze(_) => "analyze",
        Command::OutbreakProb(_) => "outbreak-prob",
        Command::Simulate(_) => "simulate",
        Command::Ensemble(_) => "ensemble",
        Command::Ode(_) => "ode",
        Command::Equilibrium(_) => "equilibrium",
        Command::ExitCost(_) => "exit-cost",
        Command::Calibrate(_) => "calibrate",
        Command::Synth(_) => "synth",
    }
}

pub fn dispatch(ctx: &mut Context) -> CliResult<Outcome> {
    match &ctx.cli.command {
        Command::Analyze(a) => analyze(ctx, a),
        Command::OutbreakProb(a) => outbreak_prob(ctx, a),
        Command::Simulate(a) => simulate(ctx, a),
        Command::Ensemble(a) => ensemble(ctx, a),
        Command::Ode(a) => ode(ctx, a),
        Command::Equilibrium(a) => equilibrium(ctx, a),
        Command::ExitCost(a) => exit_cost(ctx, a),
        Command::Calibrate(a) => calibrate(ctx, a),
        Command::Synth(a) => synth(ctx, a),
    }
}

fn analyze(ctx: &mut Context, a: &AnalyzeArgs) -> CliResult<Outcome> {
    let cfg = ctx.loaded()?;
    let i0 = cfg.scaling.initial_infectives();
    let report = match a.precision {
        Precision::F64 => {
            let opts = FixedPointOptions {
                tol: a.tol,
                max_iter: a.max_iter,
            };
            serde_json::to_value(netsir::analyze(&cfg.model, i0, opts)?)
        }
        Precision::F32 => {
            let opts = FixedPointOptions {
                tol: f32::tol(a.tol),
                max_iter: a.max_iter,
            };
            serde_json::to_value(netsir::analyze(&cfg.model.cast::<f32>(), i0, opts)?)
        }
    }
    .map_err(Error::from)?;
    ctx.out.emit_json(a.out.as_deref(), &report)?;
    Ok(Outcome::Done)
}

fn outbreak_prob(ctx: &mut Context, a: &OutbreakProbArgs) -> CliResult<Outcome> {
    let cfg = ctx.loaded()?;
    let n = cfg.model.n();
    let i0 = match a.seed_node {
        Some(k) if (1..=n).contains(&k) => {
            let mut v = vec![0; n];
            v[k - 1] = 1;
            v
        }
        Some(k) => return Err(Error::UnknownNode(k.to_string()).into()),
        None => cfg.scaling.initial_infectives().to_vec(),
    };
    let fp = netsir::extinction_probs(
        &cfg.model,
        FixedPointOptions {
            tol: a.tol,
            max_iter: a.max_iter,
        },
    )?;
    let p: Vec<f64> = fp.q.iter().map(|q| 1.0 - q).collect();
    let p_i0 = netsir::major_outbreak_prob(&fp.q, &i0)?;
    let report = json!({
        "q": fp.q,
        "p": p,
        "I0": i0,
        "p_I0": p_i0,
        "iterations": fp.iterations,
        "gap": fp.gap,
        "rate": fp.rate,
    });
    ctx.out.emit_json(a.out.as_deref(), &report)?;
    Ok(Outcome::Done)
}

fn events_csv(t: &EventTrajectory) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    t.write_csv(&mut buf)?;
    Ok(buf)
}

fn simulate(ctx: &mut Context, a: &SimulateArgs) -> CliResult<Outcome> {
    let cfg = ctx.loaded()?;
    let m = &cfg.model;
    let scaling = match a.scale {
        Some(n) => cfg.scaling.with_scale(n)?,
        None => cfg.scaling.clone(),
    };
    let rng = RngSpec::new(ctx.cli.seed, a.stream);
    let opts = SimOptions::default();
    let header = json!({
        "process": format!("{:?}", a.process).to_lowercase(),
        "seed": rng.seed,
        "stream": rng.stream,
        "N": scaling.scale(),
    });
    let (primary, mut stats, extra) = match a.process {
        Process::Population => {
            let t = ssa::simulate_population(m, scaling.scale(), scaling.x0(), a.t_end, rng, opts)?;
            (t, None, None)
        }
        Process::Sir => (ssa::simulate_sir(m, &scaling, a.t_end, rng, opts)?, None, None),
        Process::Branching => (
            ssa::simulate_branching(m, scaling.initial_infectives(), a.cap, rng, opts)?,
            None,
            None,
        ),
        Process::Coupled => {
            let run = ssa::simulate_coupled(m, &scaling, a.t_end, rng, opts)?;
            let stats = json!({
                "sir": { "stats": run.sir.stats, "final_state": run.sir.final_state },
                "branching": { "stats": run.branching.stats, "final_state": run.branching.final_state },
                "divergence_time": run.divergence_time,
            });
            (run.sir, Some(stats), Some(run.branching))
        }
    };
    let stats = stats
        .take()
        .unwrap_or_else(|| json!({ "stats": primary.stats, "final_state": primary.final_state }));
    let mut sidecar_doc = header;
    if let (Value::Object(h), Value::Object(s)) = (&mut sidecar_doc, stats) {
        h.extend(s);
    }
    let out = a.out.as_deref();
    ctx.out.emit(out, &events_csv(&primary)?)?;
    if let Some(path) = out {
        if let Some(br) = &extra {
            ctx.out.emit(Some(&sidecar(path, ".branching.csv")), &events_csv(br)?)?;
        }
        ctx.out.emit_json(Some(&sidecar(path, ".stats.json")), &sidecar_doc)?;
    }
    Ok(Outcome::Done)
}

fn strip(value: &mut Value, key: &str) {
    if let Value::Object(map) = value {
        map.remove(key);
    }
}

fn replicas_bytes(replicas: &[montecarlo::ReplicaSummary]) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_replicas_csv(replicas, &mut buf)?;
    Ok(buf)
}

fn emit_replicas(ctx: &mut Context, path: Option<&Path>, bytes: Vec<u8>) -> CliResult<()> {
    if let Some(p) = path {
        ctx.out.emit(Some(p), &bytes)?;
    }
    Ok(())
}

fn ensemble(ctx: &mut Context, a: &EnsembleArgs) -> CliResult<Outcome> {
    let cfg = ctx.loaded()?;
    let m = &cfg.model;
    let seed = ctx.cli.seed;
    let scaling = match a.scale {
        Some(n) => cfg.scaling.with_scale(n)?,
        None => cfg.scaling.clone(),
    };
    let mut outcome = Outcome::Done;
    let report = match a.experiment {
        Experiment::Outbreak => {
            let runs = a.runs.unwrap_or(10_000);
            let res = montecarlo::estimate_outbreak_prob(m, &scaling, ClassifierParams::default(), runs, seed)?;
            emit_replicas(ctx, a.replicas.as_deref(), replicas_bytes(&res.replicas)?)?;
            if let Some(f) = &res.failure {
                outcome = Outcome::Inconclusive(f.clone());
            }
            let mut v = to_value(&res)?;
            strip(&mut v, "replicas");
            v["z_score"] = json!(res.z_score());
            v
        }
        Experiment::Stationary => {
            let burn_in = match a.burn_in {
                Some(b) => b,
                None => {
                    let sub = check_subcritical(&build_demography_matrix(m))?;
                    if !sub.subcritical {
                        return Err(Error::NotSubcritical(sub.spectral_abscissa).into());
                    }
                    10.0 / sub.spectral_abscissa.abs()
                }
            };
            let horizon = a.horizon.unwrap_or(burn_in + 1000.0);
            let runs = a.runs.unwrap_or(200);
            let res = montecarlo::stationary_mean_population(
                m,
                scaling.scale(),
                Some(scaling.x0()),
                burn_in,
                horizon,
                runs,
                seed,
            )?;
            let mut v = to_value(&res)?;
            v["max_z_score"] = json!(res.max_z_score());
            v
        }
        Experiment::Lln => {
            let scales = or_default(&a.scales, &[10.0, 100.0, 1000.0]);
            let rows = montecarlo::lln_deviation(
                m,
                scaling.x0(),
                &scales,
                a.horizon.unwrap_or(100.0),
                a.dt,
                a.runs.unwrap_or(200),
                seed,
            )?;
            let mut csv = String::from("scale,stream,deviation\n");
            for row in &rows {
                for (k, d) in row.deviations.iter().enumerate() {
                    csv.push_str(&format!("{},{k},{d}\n", row.scale));
                }
            }
            emit_replicas(ctx, a.replicas.as_deref(), csv.into_bytes())?;
            let mut rows_v = to_value(&rows)?;
            if let Value::Array(items) = &mut rows_v {
                items.iter_mut().for_each(|r| strip(r, "deviations"));
            }
            let decreasing = rows.windows(2).all(|w| w[1].q90 < w[0].q90);
            json!({ "rows": rows_v, "q90_strictly_decreasing": decreasing })
        }
        Experiment::Offspring => {
            let n = m.n();
            let probes = if a.probe.is_empty() {
                vec![vec![0.0; n], vec![0.5; n]]
            } else if !a.probe.len().is_multiple_of(n) {
                return Err(Failure::Usage(format!("--probe needs {n} entries per probe")));
            } else {
                a.probe.chunks(n).map(<[f64]>::to_vec).collect()
            };
            if a.source == 0 || a.source > n {
                return Err(Error::UnknownNode(a.source.to_string()).into());
            }
            let res = montecarlo::offspring_empirical(m, a.source - 1, &probes, a.runs.unwrap_or(10_000), seed)?;
            to_value(&res)?
        }
        Experiment::Scaling => {
            let scales = or_default(&a.scales, &[10.0, 20.0, 40.0, 80.0]);
            let t_cap = a.t_cap.unwrap_or_else(|| montecarlo::default_t_cap(m));
            let rep = montecarlo::endemic_scaling(
                m,
                scaling.x0(),
                scaling.initial_infectives(),
                &scales,
                t_cap,
                a.runs.unwrap_or(200),
                seed,
                ClassifierParams::default(),
                a.bootstrap,
            )?;
            let mut csv = Vec::new();
            for (k, row) in rep.rows.iter().enumerate() {
                let block = String::from_utf8(replicas_bytes(&row.replicas)?).expect("csv is UTF-8");
                for (j, line) in block.lines().enumerate() {
                    if j == 0 && k == 0 {
                        csv.extend_from_slice(format!("scale,{line}\n").as_bytes());
                    } else if j > 0 {
                        csv.extend_from_slice(format!("{},{line}\n", row.scale).as_bytes());
                    }
                }
            }
            emit_replicas(ctx, a.replicas.as_deref(), csv)?;
            if let Some(why) = &rep.inconclusive {
                outcome = Outcome::Inconclusive(why.clone());
            }
            let mut v = to_value(&rep)?;
            if let Some(Value::Array(rows)) = v.get_mut("rows") {
                rows.iter_mut().for_each(|r| strip(r, "replicas"));
            }
            v
        }
    };
    let mut doc = json!({
        "experiment": format!("{:?}", a.experiment).to_lowercase(),
        "seed": seed,
    });
    if let (Value::Object(d), Value::Object(r)) = (&mut doc, report) {
        d.extend(r);
    }
    ctx.out.emit_json(a.out.as_deref(), &doc)?;
    Ok(outcome)
}

fn or_default(given: &[f64], default: &[f64]) -> Vec<f64> {
    if given.is_empty() {
        default.to_vec()
    } else {
        given.to_vec()
    }
}

fn to_value(v: &impl serde::Serialize) -> CliResult<Value> {
    Ok(serde_json::to_value(v).map_err(Error::from)?)
}

fn denominator(d: Denominator) -> DenominatorMode {
    match d {
        Denominator::Total => DenominatorMode::CurrentTotal,
        Denominator::Zstar => DenominatorMode::ZStar,
    }
}

fn csv_rows(header: &[String], times: &[f64], states: &[Vec<f64>]) -> Vec<u8> {
    let mut s = format!("{}\n", header.join(","));
    for (t, y) in times.iter().zip(states) {
        s.push_str(&t.to_string());
        for v in y {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    s.into_bytes()
}

fn ode(ctx: &mut Context, a: &OdeArgs) -> CliResult<Outcome> {
    let cfg = ctx.loaded()?;
    let m = &cfg.model;
    let n = m.n();
    let bytes = match a.mode {
        OdeMode::Linear => {
            let flow = LinearFlow::new(&build_demography_matrix(m), m.immigration())?;
            let times = output_grid(a.t_end, a.dt)?;
            let states = times
                .iter()
                .map(|&t| flow.at(cfg.scaling.x0(), t))
                .collect::<netsir::Result<Vec<_>>>()?;
            let header: Vec<String> = std::iter::once("t".into())
                .chain((1..=n).map(|k| format!("x{k}")))
                .collect();
            csv_rows(&header, &times, &states)
        }
        OdeMode::Sir => {
            let system = SirSystem::for_model(m, denominator(a.denominator))?;
            let sc = &cfg.scaling;
            let i: Vec<f64> = sc.initial_infectives().iter().map(|&k| k as f64 / sc.scale()).collect();
            let s: Vec<f64> = sc.x0().iter().zip(&i).map(|(x, i)| (x - i).max(0.0)).collect();
            let init = DeterministicState::new(s, i, vec![0.0; n])?;
            let traj = system.integrate(&init, a.t_end, a.dt, Dopri5Options::default())?;
            let header: Vec<String> = std::iter::once("t".to_string())
                .chain(
                    ["S", "I", "R"]
                        .iter()
                        .flat_map(|c| (1..=n).map(move |k| format!("{c}{k}"))),
                )
                .collect();
            csv_rows(&header, &traj.times, &traj.states)
        }
    };
    ctx.out.emit(a.out.as_deref(), &bytes)?;
    Ok(Outcome::Done)
}

fn equilibrium(ctx: &mut Context, a: &EquilibriumArgs) -> CliResult<Outcome> {
    let cfg = ctx.loaded()?;
    let system = SirSystem::for_model(&cfg.model, denominator(a.denominator))?;
    let report = find_endemic_equilibrium(&system)?;
    ctx.out.emit_json(a.out.as_deref(), &report)?;
    Ok(Outcome::Done)
}

fn exit_cost(ctx: &mut Context, a: &ExitCostArgs) -> CliResult<Outcome> {
    let cfg = ctx.loaded()?;
    let m = &cfg.model;
    let dem = build_demography_matrix(m);
    let sub = check_subcritical(&dem)?;
    if !sub.subcritical {
        return Err(Error::NotSubcritical(sub.spectral_abscissa).into());
    }
    let (spec, start) = match a.process {
        ExitProcess::Population => (JumpSpec::population(m), equilibrium_population(&dem, m.immigration())?),
        ExitProcess::Sir => {
            let eq = find_endemic_equilibrium(&SirSystem::for_model(m, DenominatorMode::CurrentTotal)?)?;
            if eq.classification == EquilibriumClass::DiseaseFree {
                return Err(Error::NoEndemicEquilibrium("only the disease-free point was found".into()).into());
            }
            (JumpSpec::sir(m, DeathBlock::Once), eq.point.flatten())
        }
    };
    let norm = match a.norm {
        Norm::Two => BallNorm::Two,
        Norm::Inf => BallNorm::Inf,
    };
    let target = Target::BallExit {
        center: start.clone(),
        radius: a.eps,
        norm,
    };
    let opts = MinimizeOptions {
        horizon: a.horizon,
        grid: a.grid,
        restarts: a.restarts,
        seed: ctx.cli.seed,
        u_max: a.u_max,
        max_iter: a.max_iter,
        ..MinimizeOptions::default()
    };
    let res = ldp::minimize_action(&spec, &start, &target, opts)?;
    let est = ldp::path_action(&spec, &res.path.times, &res.path.points, a.u_max)?;
    let mut path_csv = Vec::new();
    res.path.write_csv(&mut path_csv)?;
    if let Some(p) = a.out.as_deref() {
        ctx.out.emit(Some(p), &path_csv)?;
    }
    let report = json!({
        "process": format!("{:?}", a.process).to_lowercase(),
        "eps": a.eps,
        "norm": norm,
        "start": start,
        "exit_point": res.path.points.last(),
        "action": res.path.action,
        "richardson_error": est.richardson_error,
        "boundary_hits": est.boundary_hits,
        "best_restart": res.best_restart,
        "restart_actions": res.restart_actions,
        "converged": res.converged,
        "iterations": res.iterations,
        "grid": a.grid,
        "horizon": a.horizon,
    });
    ctx.out.emit_json(a.report.as_deref(), &report)?;
    Ok(Outcome::Done)
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Usage(format!("cannot open {}: {e}", path.display())))
}

fn document(model: &Model, time_unit: &str) -> ModelDocument {
    ModelDocument {
        n: model.n(),
        immigration: model.immigration().to_vec(),
        b: model.birth().to_vec(),
        d: model.death().to_vec(),
        theta: model.transfer().to_rows(),
        beta: model.infection().to_vec(),
        gamma: model.recovery().to_vec(),
        scale: None,
        x0: None,
        initial_infectives: None,
        time_unit: Some(time_unit.to_string()),
    }
}

fn calibrate(ctx: &mut Context, a: &CalibrateArgs) -> CliResult<Outcome> {
    let nodes = read_nodes_csv(open(&a.nodes)?)?;
    let moves = read_movements_csv(open(&a.movements)?)?;
    let floor = match a.floor {
        Some(f) => f,
        None => default_floor(&a.time_unit)?,
    };
    let cal = calibration::calibrate(&nodes, &moves, floor)?;
    let n = cal.model.n();
    let model = cal.model.with_epidemic(vec![a.beta; n], vec![a.gamma; n])?;
    ctx.out.emit_json(a.out.as_deref(), &document(&model, &a.time_unit))?;
    Ok(Outcome::Done)
}

fn synth(ctx: &mut Context, a: &SynthArgs) -> CliResult<Outcome> {
    let model = calibration::synth_network(a.n, a.density, ctx.cli.seed)?;
    ctx.out.emit_json(a.out.as_deref(), &document(&model, "day"))?;
    Ok(Outcome::Done)
}
