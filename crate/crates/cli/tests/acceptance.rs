//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are printed by `cargo test`.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use netsir::calibration::synth_network;
use netsir::ldp::{self, BallNorm, Jump, JumpSpec, MinimizeOptions, Rate, Target};
use netsir::montecarlo::{self, with_workers};
use netsir::ode::{self, DenominatorMode, DeterministicState, Dopri5Options, SirSystem};
use netsir::spectral::{offspring_matrix, r0};
use netsir::ssa::{self, ClassifierParams, EventKind, EventRecord, RngSpec, SimOptions};
use netsir::{Matrix, Model, Scaling};
use serde_json::Value;

fn one_node(b_imm: f64, b: f64, d: f64, beta: f64, gamma: f64) -> Model {
    Model::new(
        vec![b_imm],
        vec![b],
        vec![d],
        Matrix::zeros(1, 1),
        vec![beta],
        vec![gamma],
    )
    .unwrap()
}

fn fmd() -> Model {
    one_node(0.0, 0.0, 0.0, 0.67, 1.0 / 5.5)
}

fn pair() -> Model {
    Model::new(
        vec![0.5; 2],
        vec![0.0; 2],
        vec![0.5; 2],
        Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        vec![2.0; 2],
        vec![0.5; 2],
    )
    .unwrap()
}

fn three_node() -> Model {
    Model::new(
        vec![1.0, 0.5, 0.5],
        vec![0.1, 0.05, 0.02],
        vec![0.1, 0.2, 0.1],
        Matrix::from_rows(&[vec![0.0, 0.2, 0.2], vec![0.1, 0.0, 0.5], vec![0.1, 0.0, 0.0]]).unwrap(),
        vec![0.0; 3],
        vec![0.0; 3],
    )
    .unwrap()
}

const THREE_NODE_X0: [f64; 3] = [5.0, 2.0, 20.0];

fn endemic() -> Model {
    one_node(5.0, 0.5, 1.0, 4.0, 1.0)
}

const FMD_CONFIG: &str =
    r#"{"n":1,"B":[0],"b":[0],"d":[0],"theta":[[0]],"beta":[0.67],"gamma":[0.18181818181818182],"x0":[1]}"#;

fn netsir(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_netsir"))
        .current_dir(dir)
        .env_remove("EPI_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

type Verdict = Result<(bool, String), String>;
type Check = fn() -> Verdict;

fn fmd_analytics() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    fs::write(dir.path().join("fmd.json"), FMD_CONFIG).map_err(|e| e.to_string())?;
    let out = netsir(dir.path(), &["--config", "fmd.json", "analyze"]);
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let v: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let r0 = v["R0"].as_f64().ok_or("no R0")?;
    let p = v["p_I0"].as_f64().ok_or("no p_I0")?;
    let ok = (r0 - 3.6850).abs() <= 5e-4 && (p - 0.7286).abs() <= 5e-4;
    Ok((ok, format!("R0 = {r0:.6}, p = {p:.6}")))
}

fn network_r0() -> Verdict {
    let t = Instant::now();
    let m = synth_network(50, 0.1, 2026).map_err(|e| e.to_string())?;
    if m.infection().windows(2).any(|w| w[0] != w[1]) || m.recovery().windows(2).any(|w| w[0] != w[1]) {
        return Err("synthetic rates are not uniform".into());
    }
    let r = r0(&offspring_matrix(&m).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let d_bar = m.death().iter().sum::<f64>() / m.n() as f64;
    let approx = m.infection()[0] / (m.recovery()[0] + d_bar);
    let rel = (r / approx - 1.0).abs();
    let secs = t.elapsed().as_secs_f64();
    Ok((
        rel < 0.01 && secs < 1.0,
        format!("R0 = {r:.6}, β/(γ+d̄) = {approx:.6}, rel {rel:.2e}, {secs:.3} s"),
    ))
}

fn branching_agreement() -> Verdict {
    let runs = 10_000;
    let cases = [
        // single-node FMD: 1 − γ/β
        (
            "fmd",
            fmd(),
            Scaling::new(1e4, vec![1.0], vec![1]),
            1.0 - (1.0 / 5.5) / 0.67,
        ),
        // symmetric pair: q(3 − 2q) = 1 gives q = 1/2
        ("pair", pair(), Scaling::new(1e4, vec![1.0, 1.0], vec![1, 0]), 0.5),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, m, sc, oracle) in cases {
        let sc = sc.map_err(|e| e.to_string())?;
        let res = montecarlo::estimate_outbreak_prob(&m, &sc, ClassifierParams::default(), runs, 3)
            .map_err(|e| e.to_string())?;
        let z = (res.estimate - oracle) / res.std_error;
        ok &= z.abs() <= 3.0 && res.failure.is_none();
        notes.push(format!("{name} {:.4} vs {oracle:.4} (z = {z:+.2})", res.estimate));
    }
    Ok((ok, notes.join("; ")))
}

#[allow(clippy::needless_range_loop)]
/// `−A⁻¹B` by Gauss–Jordan on the 3×3 demography matrix written from the rates.
fn three_node_equilibrium(m: &Model) -> Vec<f64> {
    let n = m.n();
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        let out: f64 = (0..n).map(|j| m.transfer()[(i, j)]).sum();
        a[i][i] = m.birth()[i] - m.death()[i] - out;
        for j in 0..n {
            if j != i {
                a[i][j] = m.transfer()[(j, i)];
            }
        }
        a[i][n] = -m.immigration()[i];
    }
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, p);
        let piv = a[c][c];
        a[c].iter_mut().for_each(|v| *v /= piv);
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                let row_c = a[c].clone();
                a[r].iter_mut().zip(&row_c).for_each(|(v, w)| *v -= f * w);
            }
        }
    }
    a.iter().map(|row| row[n]).collect()
}

fn stationary_mean() -> Verdict {
    let m = three_node();
    let z = three_node_equilibrium(&m);
    let scale = 100.0;
    let (burn_in, horizon) = (160.0, 1160.0);
    let res = montecarlo::stationary_mean_population(&m, scale, Some(&THREE_NODE_X0), burn_in, horizon, 100, 11)
        .map_err(|e| e.to_string())?;
    let zs: Vec<f64> = res
        .mean
        .iter()
        .zip(&z)
        .zip(&res.std_error)
        .map(|((mean, z), se)| (mean - scale * z) / se)
        .collect();
    let ok = zs.iter().all(|v| v.abs() <= 3.0);
    Ok((
        ok,
        format!(
            "mean {:.2?} vs N·z* {:.2?}, z {:.2?}",
            res.mean,
            z.iter().map(|v| v * scale).collect::<Vec<_>>(),
            zs
        ),
    ))
}

fn lln() -> Verdict {
    let rows = montecarlo::lln_deviation(
        &three_node(),
        &THREE_NODE_X0,
        &[10.0, 100.0, 1000.0],
        100.0,
        0.1,
        200,
        5,
    )
    .map_err(|e| e.to_string())?;
    let q: Vec<f64> = rows.iter().map(|r| r.q90).collect();
    let ok = q.windows(2).all(|w| w[1] < w[0]);
    Ok((ok, format!("q90 at N = 10, 100, 1000: {q:.4?}")))
}

fn infective(e: &&EventRecord) -> bool {
    matches!(
        e.kind,
        EventKind::DeathI | EventKind::MoveI | EventKind::Infection | EventKind::Recovery
    )
}

fn coupling() -> Verdict {
    let m = fmd();
    let runs = 1000;
    let mut freq = Vec::new();
    let mut mismatches = 0;
    for scale in [1e2, 1e4] {
        let sc = Scaling::new(scale, vec![1.0], vec![1]).map_err(|e| e.to_string())?;
        let mut diverged = 0;
        for stream in 0..runs {
            let run = ssa::simulate_coupled(&m, &sc, 5.0, RngSpec::new(17, stream), SimOptions::default())
                .map_err(|e| e.to_string())?;
            let cut = run.divergence_time.unwrap_or(f64::INFINITY);
            diverged += run.divergence_time.is_some() as usize;
            let a: Vec<_> = run
                .sir
                .events
                .iter()
                .filter(infective)
                .filter(|e| e.time < cut)
                .collect();
            let b: Vec<_> = run.branching.events.iter().filter(|e| e.time < cut).collect();
            let exact = if run.divergence_time.is_some() {
                a == b
            } else {
                // without a rejection the two paths coincide up to the horizon, or until
                // the branching cap stops one of them
                let k = a.len().min(b.len());
                a[..k] == b[..k] && (a.len() == b.len() || run.branching.stats.end_reason == ssa::EndReason::Cap)
            };
            mismatches += !exact as usize;
        }
        freq.push(diverged as f64 / runs as f64);
    }
    let ok = mismatches == 0 && freq[1] < freq[0];
    Ok((
        ok,
        format!(
            "{mismatches} mismatches in {} pairs, divergence before T = 5: {:.3} (N = 1e2), {:.3} (N = 1e4)",
            2 * runs,
            freq[0],
            freq[1]
        ),
    ))
}

fn endemic_rhs(y: &[f64]) -> [f64; 3] {
    let (bi, b, d, beta, gamma) = (5.0, 0.5, 1.0, 4.0, 1.0);
    let (s, i, r) = (y[0], y[1], y[2]);
    let p = s + i + r;
    let inf = beta * s * i / p;
    [bi + b * p - d * s - inf, inf - (d + gamma) * i, gamma * i - d * r]
}

fn endemic_lyapunov() -> Verdict {
    let m = endemic();
    let star = [5.0, 2.5, 2.5];
    let (s, i, r) = ode::endemic_equilibrium_1d(5.0f64, 0.5, 1.0, 4.0, 1.0).map_err(|e| e.to_string())?;
    let closed_gap = (s - star[0]).abs().max((i - star[1]).abs()).max((r - star[2]).abs());
    let system = SirSystem::for_model(&m, DenominatorMode::CurrentTotal).map_err(|e| e.to_string())?;
    let lib_res = system.rhs_vec(&star).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let own_res = endemic_rhs(&star).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let residual = lib_res.max(own_res);
    let opts = Dopri5Options {
        rtol: 1e-11,
        atol: 1e-13,
        ..Dopri5Options::default()
    };
    let mut worst = 0.0f64;
    for start in [[8.0, 1.0, 1.0], [2.0, 6.0, 3.0], [1.0, 0.2, 12.0]] {
        let init =
            DeterministicState::new(vec![start[0]], vec![start[1]], vec![start[2]]).map_err(|e| e.to_string())?;
        let traj = system.integrate(&init, 200.0, 200.0, opts).map_err(|e| e.to_string())?;
        let end = traj.states.last().unwrap();
        worst = worst.max(end.iter().zip(star).fold(0.0, |a, (x, y)| a.max((x - y).abs())));
    }
    let init = DeterministicState::new(vec![8.0], vec![1.0], vec![1.0]).map_err(|e| e.to_string())?;
    let traj = system.integrate(&init, 100.0, 0.05, opts).map_err(|e| e.to_string())?;
    let v = ode::lyapunov_v(&traj, star[0], star[1]).map_err(|e| e.to_string())?;
    let rise = v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let ok = closed_gap < 1e-13 && residual < 1e-13 && worst < 1e-6 && rise <= 1e-12;
    Ok((
        ok,
        format!("residual {residual:.1e}, worst endpoint gap {worst:.1e}, largest V increase {rise:.1e}"),
    ))
}

fn birth_death(up: f64, down: f64) -> JumpSpec<f64> {
    let jumps = vec![
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
    ];
    JumpSpec::new(1, jumps).unwrap()
}

fn rate_function() -> Verdict {
    let u_max = ldp::DEFAULT_U_MAX;
    let mut drift_l = 0.0f64;
    let pop = JumpSpec::population(&three_node());
    for x in [vec![3.0, 1.0, 4.0], THREE_NODE_X0.to_vec()] {
        let l = ldp::local_rate_l(&pop, &x, &pop.drift(&x), u_max).map_err(|e| e.to_string())?;
        drift_l = drift_l.max(l.value.abs());
    }
    let sir = JumpSpec::sir(&endemic(), ldp::DeathBlock::Once);
    let x = [6.0, 1.5, 2.0];
    drift_l = drift_l.max(
        ldp::local_rate_l(&sir, &x, &sir.drift(&x), u_max)
            .map_err(|e| e.to_string())?
            .value
            .abs(),
    );

    let walk = birth_death(1.0, 1.0);
    let l = ldp::local_rate_l(&walk, &[1.0], &[1.0], u_max)
        .map_err(|e| e.to_string())?
        .value;
    let u = 0.5f64.asinh();
    let closed = u - 2.0 * (u.cosh() - 1.0);

    // ∫₁^{1.5} log x dx, cheaper than leaving through 0.5
    let exact = 1.5 * 1.5f64.ln() - 0.5;
    let target = Target::BallExit {
        center: vec![1.0],
        radius: 0.5,
        norm: BallNorm::Two,
    };
    let res = ldp::minimize_action(
        &walk,
        &[1.0],
        &target,
        MinimizeOptions {
            grid: 64,
            ..MinimizeOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let a = res.path.action;
    let ok = drift_l < 1e-10
        && (l - closed).abs() < 1e-6
        && (closed - 0.2451).abs() < 5e-5
        && (exact - 0.10820).abs() < 5e-6
        && (a / exact - 1.0).abs() < 0.05;
    Ok((
        ok,
        format!("L(drift) {drift_l:.1e}, L = {l:.7} vs {closed:.7}, action {a:.5} vs {exact:.5}"),
    ))
}

fn scaling() -> Verdict {
    let m = endemic();
    let rep = montecarlo::endemic_scaling(
        &m,
        &[10.0],
        &[1],
        &[10.0, 20.0, 40.0, 80.0],
        1000.0,
        500,
        23,
        ClassifierParams::default(),
        1000,
    )
    .map_err(|e| e.to_string())?;
    let majors: Vec<usize> = rep.rows.iter().map(|r| r.majors).collect();
    let censored: Vec<usize> = rep.rows.iter().map(|r| r.censored).collect();
    let bounds: Vec<f64> = rep.rows.iter().map(|r| r.median_max_fraction).collect();
    let lower: Vec<f64> = rep
        .rows
        .iter()
        .filter(|r| r.median_is_lower_bound)
        .map(|r| r.scale)
        .collect();
    let slope_ok = |s: &montecarlo::SlopeFit| s.slope > 0.0 && s.excludes_zero();
    let ok = majors.iter().all(|&k| k >= 200)
        && slope_ok(&rep.tau_slope)
        && slope_ok(&rep.size_slope)
        && rep.fraction_ok
        && rep.inconclusive.is_none();
    Ok((
        ok,
        format!(
            "majors {majors:?}, censored at t_cap = {} {censored:?}, log τ slope {:.4} [{:.4}, {:.4}], log Z slope {:.4} [{:.4}, {:.4}], max-I fraction {bounds:.3?} vs bound {:.3}; medians are censored lower bounds at N = {lower:?}",
            rep.t_cap,
            rep.tau_slope.slope,
            rep.tau_slope.ci_low,
            rep.tau_slope.ci_high,
            rep.size_slope.slope,
            rep.size_slope.ci_low,
            rep.size_slope.ci_high,
            rep.fraction_bound
        ),
    ))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = dir.path();
    fs::write(p.join("fmd.json"), FMD_CONFIG).map_err(|e| e.to_string())?;
    fs::write(
        p.join("pair.json"),
        r#"{"n":2,"B":[0.5,0.5],"b":[0,0],"d":[0.5,0.5],"theta":[[0,1],[1,0]],"beta":[2,2],"gamma":[0.5,0.5],"N":200,"I0":[1,0]}"#,
    )
    .map_err(|e| e.to_string())?;
    fs::write(
        p.join("endemic.json"),
        r#"{"n":1,"B":[5],"b":[0.5],"d":[1],"theta":[[0]],"beta":[4],"gamma":[1],"N":10}"#,
    )
    .map_err(|e| e.to_string())?;
    let jobs: Vec<(&str, Vec<&str>)> = vec![
        (
            "sim-sir",
            vec!["--config", "pair.json", "simulate", "--process", "sir", "--t-end", "20"],
        ),
        (
            "sim-pop",
            vec![
                "--config",
                "pair.json",
                "simulate",
                "--process",
                "population",
                "--t-end",
                "20",
            ],
        ),
        (
            "sim-br",
            vec![
                "--config",
                "pair.json",
                "simulate",
                "--process",
                "branching",
                "--cap",
                "500",
            ],
        ),
        (
            "sim-cp",
            vec![
                "--config",
                "pair.json",
                "simulate",
                "--process",
                "coupled",
                "--t-end",
                "10",
            ],
        ),
        (
            "ens-out",
            vec![
                "--config",
                "pair.json",
                "ensemble",
                "--experiment",
                "outbreak",
                "--runs",
                "500",
            ],
        ),
        (
            "ens-lln",
            vec![
                "--config",
                "pair.json",
                "ensemble",
                "--experiment",
                "lln",
                "--runs",
                "50",
                "--horizon",
                "10",
            ],
        ),
        (
            "ens-sta",
            vec![
                "--config",
                "pair.json",
                "ensemble",
                "--experiment",
                "stationary",
                "--runs",
                "20",
                "--horizon",
                "100",
            ],
        ),
        (
            "ens-off",
            vec![
                "--config",
                "fmd.json",
                "ensemble",
                "--experiment",
                "offspring",
                "--runs",
                "10000",
            ],
        ),
        (
            "ens-sc",
            vec![
                "--config",
                "endemic.json",
                "ensemble",
                "--experiment",
                "scaling",
                "--runs",
                "100",
                "--scales",
                "4,8",
                "--t-cap",
                "50",
                "--bootstrap",
                "100",
            ],
        ),
        (
            "exit",
            vec![
                "--config",
                "endemic.json",
                "exit-cost",
                "--process",
                "sir",
                "--grid",
                "16",
                "--restarts",
                "6",
            ],
        ),
    ];
    let mut outputs = Vec::new();
    for (tag, args) in &jobs {
        let mut per_run = Vec::new();
        for (round, workers) in [(0, "1"), (1, "8"), (2, "1")] {
            let out_name = format!("{tag}-{round}.out");
            let side_name = format!("{tag}-{round}.side");
            let mut full: Vec<&str> = vec!["--seed", "31", "--workers", workers];
            full.extend(args.iter().copied());
            let is_sim = args.contains(&"simulate");
            let is_exit = args.contains(&"exit-cost");
            if is_exit {
                full.extend(["--out", &side_name, "--report", &out_name]);
            } else {
                full.extend(["--out", &out_name]);
            }
            if args.contains(&"ensemble") {
                full.extend(["--replicas", &side_name]);
            }
            let out = netsir(p, &full);
            if !matches!(out.status.code(), Some(0) | Some(3)) {
                return Err(format!("{tag}: {}", String::from_utf8_lossy(&out.stderr)));
            }
            let mut bytes = fs::read(p.join(&out_name)).map_err(|e| e.to_string())?;
            let extra = if is_sim {
                format!("{out_name}.stats.json")
            } else {
                side_name.clone()
            };
            if let Ok(b) = fs::read(p.join(extra)) {
                bytes.extend(b);
            }
            per_run.push(bytes);
        }
        outputs.push((tag, per_run.windows(2).all(|w| w[0] == w[1])));
    }
    let sc = Scaling::new(200.0, vec![1.0, 1.0], vec![1, 0]).map_err(|e| e.to_string())?;
    let lib = |k: usize| {
        with_workers(k, || {
            montecarlo::estimate_outbreak_prob(&pair(), &sc, ClassifierParams::default(), 300, 8)
        })
        .and_then(|r| r)
        .map(|r| serde_json::to_string(&r).unwrap())
    };
    let lib_same = lib(1).map_err(|e| e.to_string())? == lib(8).map_err(|e| e.to_string())?;
    let bad: Vec<&str> = outputs.iter().filter(|(_, same)| !same).map(|(t, _)| **t).collect();
    let ok = bad.is_empty() && lib_same;
    Ok((
        ok,
        format!(
            "{} CLI jobs x 3 runs (workers 1, 8, 1), differing: {bad:?}; library ensemble equal: {lib_same}",
            jobs.len()
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("single-node FMD analytics", fmd_analytics),
        ("network R0 near beta/(gamma + mean d)", network_r0),
        ("branching approximation of outbreak frequency", branching_agreement),
        ("stationary mean population", stationary_mean),
        ("law of large numbers", lln),
        ("coupling with the branching process", coupling),
        ("endemic equilibrium and Lyapunov function", endemic_lyapunov),
        ("rate function and exit cost", rate_function),
        ("endemic extinction-time scaling", scaling),
        ("determinism across runs and workers", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = match check() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !ok as usize;
        println!(
            "criterion {:>2} {} {name}: {detail} ({:.1} s)",
            k + 1,
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
