mod common;

use netsir::ldp::{
    local_rate_l, minimize_action, path_action, BallNorm, DeathBlock, Jump, JumpSpec, MinimizeOptions, Rate, Target,
};
use netsir::ode::LinearFlow;
use netsir::spectral::{build_demography_matrix, equilibrium_population};
use netsir::ssa::{exit_time_ball, RngSpec};
use proptest::prelude::*;

const U_MAX: f64 = 40.0;

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

/// `β·u − Σ (e^{u·ζ} − 1)·a(x)` written out from the public jump list.
fn legendre_objective(spec: &JumpSpec<f64>, x: &[f64], beta: &[f64], u: &[f64]) -> f64 {
    let mut f: f64 = beta.iter().zip(u).map(|(b, v)| b * v).sum();
    for j in spec.jumps() {
        let uz: f64 = j.delta.iter().map(|&(k, d)| d as f64 * u[k]).sum();
        f -= uz.exp_m1() * j.rate.eval(x);
    }
    f
}

fn immigration_death_cost(y: f64) -> f64 {
    y * y.ln() - y + 1.0
}

#[test]
fn symmetric_walk_closed_form() {
    let l = local_rate_l(&birth_death(1.0, 1.0), &[1.0], &[1.0], U_MAX).unwrap();
    let u = 0.5f64.asinh();
    assert!((l.u_opt[0] - u).abs() < 1e-12);
    assert!((l.value - (u - 2.0 * (u.cosh() - 1.0))).abs() < 1e-12);
    assert!((l.value - 0.2451).abs() < 1e-4);
}

#[test]
fn pure_death_supremum_at_infinity() {
    let (d, x) = (1.3, 0.7);
    let l = local_rate_l(&birth_death(0.0, d), &[x], &[0.0], U_MAX).unwrap();
    assert!(l.boundary_hit);
    assert!((l.value - d * x * (1.0 - (-U_MAX).exp())).abs() < 1e-12);
}

#[test]
fn sir_death_block_variants() {
    let m = common::endemic();
    let once = JumpSpec::sir(&m, DeathBlock::Once);
    let twice = JumpSpec::sir(&m, DeathBlock::Duplicated);
    let x = [5.0, 2.5, 2.5];
    let drift = once.drift(&x);
    assert!(drift.iter().all(|v| v.abs() < 1e-12), "{drift:?}");
    let dt = twice.drift(&x);
    for k in 0..3 {
        assert!((dt[k] - (drift[k] - m.death()[0] * x[k])).abs() < 1e-12);
    }
    let l1 = local_rate_l(&once, &x, &[0.0; 3], U_MAX).unwrap().value;
    let l2 = local_rate_l(&twice, &x, &[0.0; 3], U_MAX).unwrap().value;
    // the equilibrium is a rest point only when deaths are counted once
    assert!(l1 < 1e-12 && l2 > 1e-3, "{l1} {l2}");
}

#[test]
fn flow_path_costs_nothing() {
    let m = common::three_node();
    let spec = JumpSpec::population(&m);
    let a = build_demography_matrix(&m);
    let flow = LinearFlow::new(&a, m.immigration()).unwrap();
    let h = 0.1;
    let points = flow.grid(&common::THREE_NODE_X0, h, 200).unwrap();
    let times: Vec<f64> = (0..=200).map(|k| k as f64 * h).collect();
    let est = path_action(&spec, &times, &points, U_MAX).unwrap();
    assert!(est.action < 1e-6, "{}", est.action);
}

#[test]
fn frozen_path_pays_the_freezing_cost() {
    let spec = JumpSpec::population(&common::three_node());
    let x = vec![3.0, 1.0, 4.0];
    let times: Vec<f64> = (0..=20).map(|k| 1.0 + 0.25 * k as f64).collect();
    let points = vec![x.clone(); times.len()];
    let est = path_action(&spec, &times, &points, U_MAX).unwrap();
    let frozen = local_rate_l(&spec, &x, &[0.0; 3], U_MAX).unwrap().value;
    assert!(frozen > 0.0);
    assert!((est.action - 5.0 * frozen).abs() < 1e-12 * (1.0 + est.action));
}

#[test]
fn richardson_bounds_refinement_change() {
    let spec = birth_death(1.0, 1.0);
    let horizon = 2.0;
    let curve = |t: f64| 1.0 + 0.4 * (std::f64::consts::PI * t / (2.0 * horizon)).sin();
    let sample = |m: usize| {
        let times: Vec<f64> = (0..=m).map(|k| horizon * k as f64 / m as f64).collect();
        let points: Vec<Vec<f64>> = times.iter().map(|&t| vec![curve(t)]).collect();
        path_action(&spec, &times, &points, U_MAX).unwrap()
    };
    let coarse = sample(16);
    let fine = sample(32);
    assert!(coarse.richardson_error > 0.0);
    assert!((fine.action - coarse.action).abs() < coarse.richardson_error);
}

#[test]
fn immigration_death_quasipotential() {
    let spec = birth_death(1.0, 1.0);
    let opts = MinimizeOptions {
        grid: 64,
        ..MinimizeOptions::default()
    };
    let res = minimize_action(&spec, &[1.0], &Target::Point(vec![1.5]), opts).unwrap();
    let exact = immigration_death_cost(1.5);
    assert!((exact - 0.10820).abs() < 1e-5);
    assert!(
        (res.path.action / exact - 1.0).abs() < 0.05,
        "{} vs {exact}",
        res.path.action
    );
    assert!(res.path.action >= exact * (1.0 - 1e-3));
    assert_eq!(res.path.points.len(), 65);
}

#[test]
fn point_target_equal_to_start_is_free() {
    let spec = JumpSpec::population(&common::three_node());
    let x = vec![3.0, 1.0, 4.0];
    let res = minimize_action(&spec, &x, &Target::Point(x.clone()), MinimizeOptions::default()).unwrap();
    assert_eq!(res.path.action, 0.0);
    assert_eq!(res.path.points, vec![x]);
}

#[test]
fn more_restarts_never_hurt() {
    let spec = birth_death(1.0, 1.0);
    let target = Target::BallExit {
        center: vec![1.0],
        radius: 0.5,
        norm: BallNorm::Two,
    };
    let mut prev = f64::INFINITY;
    for restarts in [1, 2, 4, 6] {
        let opts = MinimizeOptions {
            grid: 32,
            restarts,
            seed: 7,
            ..MinimizeOptions::default()
        };
        let a = minimize_action(&spec, &[1.0], &target, opts).unwrap().path.action;
        assert!(a <= prev);
        prev = a;
    }
    assert!((prev / immigration_death_cost(1.5) - 1.0).abs() < 0.05);
}

#[test]
fn population_exit_cost_is_positive() {
    let m = common::three_node();
    let a = build_demography_matrix(&m);
    let z = equilibrium_population(&a, m.immigration()).unwrap();
    let eps = 0.25 * z.iter().cloned().fold(f64::INFINITY, f64::min);
    let spec = JumpSpec::population(&m);
    let opts = MinimizeOptions {
        grid: 32,
        restarts: 6,
        ..MinimizeOptions::default()
    };
    let target = Target::BallExit {
        center: z.clone(),
        radius: eps,
        norm: BallNorm::Two,
    };
    let res = minimize_action(&spec, &z, &target, opts).unwrap();
    assert!(res.path.action > 1e-3, "{}", res.path.action);
    let end = res.path.points.last().unwrap();
    let r: f64 = end.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!((r - eps).abs() < 1e-9);
}

#[test]
fn exit_cost_orders_exit_times() {
    let m = common::one_node(1.0, 0.0, 1.0, 0.0, 0.0);
    let spec = JumpSpec::population(&m);
    let target = Target::BallExit {
        center: vec![1.0],
        radius: 0.5,
        norm: BallNorm::Inf,
    };
    let alpha = minimize_action(&spec, &[1.0], &target, MinimizeOptions::default())
        .unwrap()
        .path
        .action;
    assert!(alpha > 0.0);
    let mut medians = Vec::new();
    for scale in [5.0, 20.0, 50.0] {
        let mut times: Vec<f64> = (0..101)
            .map(|k| exit_time_ball(&m, scale, 0.5, 1e7, RngSpec::new(3, k)).unwrap().time)
            .collect();
        times.sort_by(f64::total_cmp);
        medians.push(times[50]);
    }
    // larger N: smaller exp(−N·α), longer exits
    assert!(medians.windows(2).all(|w| w[1] > w[0]), "{medians:?}");
}

proptest! {
    #[test]
    fn drift_is_free(x in prop::collection::vec(0.05f64..30.0, 3)) {
        let spec = JumpSpec::population(&common::three_node());
        let drift = spec.drift(&x);
        let l = local_rate_l(&spec, &x, &drift, U_MAX).unwrap();
        prop_assert!(l.value.abs() < 1e-10);
        prop_assert!(l.u_opt.iter().all(|u| u.abs() < 1e-8));
    }

    #[test]
    fn sir_drift_is_free(x in prop::collection::vec(0.05f64..10.0, 3)) {
        let spec = JumpSpec::sir(&common::endemic(), DeathBlock::Once);
        let drift = spec.drift(&x);
        let l = local_rate_l(&spec, &x, &drift, U_MAX).unwrap();
        prop_assert!(l.value.abs() < 1e-10);
    }

    #[test]
    fn rate_function_is_nonnegative_and_stationary(
        x in prop::collection::vec(0.1f64..10.0, 3),
        v in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let spec = JumpSpec::population(&common::three_node());
        let l = local_rate_l(&spec, &x, &v, U_MAX).unwrap();
        prop_assert!(l.value >= 0.0);
        if !l.boundary_hit {
            prop_assert!(l.gradient_norm < 1e-10, "{:?}", l);
            let h = 1e-5;
            for k in 0..3 {
                let mut up = l.u_opt.clone();
                let mut dn = l.u_opt.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (legendre_objective(&spec, &x, &v, &up) - legendre_objective(&spec, &x, &v, &dn)) / (2.0 * h);
                prop_assert!(fd.abs() < 1e-5, "fd gradient {}", fd);
            }
            let direct = legendre_objective(&spec, &x, &v, &l.u_opt);
            prop_assert!((direct - l.value).abs() < 1e-10 * (1.0 + l.value));
        }
    }

    #[test]
    fn convex_in_velocity(
        x in prop::collection::vec(0.1f64..10.0, 3),
        v1 in prop::collection::vec(-3.0f64..3.0, 3),
        v2 in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let spec = JumpSpec::population(&common::three_node());
        let mid: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| 0.5 * (a + b)).collect();
        let l = |v: &[f64]| local_rate_l(&spec, &x, v, U_MAX).unwrap().value;
        prop_assert!(l(&mid) <= 0.5 * (l(&v1) + l(&v2)) + 1e-10);
    }

    #[test]
    fn one_dimensional_closed_form(x in 0.1f64..5.0, v in -4.0f64..4.0) {
        let (b, d) = (1.0, 0.8);
        let l = local_rate_l(&birth_death(b, d), &[x], &[v], U_MAX).unwrap();
        let e = (v + (v * v + 4.0 * b * d * x).sqrt()) / (2.0 * b);
        let want = v * e.ln() - b * (e - 1.0) - d * x * (1.0 / e - 1.0);
        prop_assert!((l.value - want).abs() < 1e-10 * (1.0 + want));
    }
}
