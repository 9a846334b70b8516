use std::f64::consts::PI;

use heatctl_core::dynamics::{brownian_stream, BrownianPath};
use heatctl_core::experiments::{
    bound_for, check_bound, compare, fit_decay, run_ensemble, Run, Simulator,
};
use heatctl_core::kernel::apply_forward;
use heatctl_core::scenario::{scenario_preset, Prepared, Scenario};
use heatctl_core::spde::{l2_norm_sq, simulate_target, FieldOperator, Recording, Trajectory};
use proptest::prelude::*;

fn field(run: Run) -> Trajectory {
    match run {
        Run::Field(tr) => tr,
        Run::Coupled(_) => panic!("field run expected"),
    }
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    (l2_norm_sq(&d) / l2_norm_sq(b)).sqrt()
}

/// Sums consecutive pairs: the same Brownian path on a grid twice as coarse.
fn coarsen(p: &BrownianPath) -> BrownianPath {
    BrownianPath {
        seed: p.seed,
        stream: p.stream,
        dt: 2.0 * p.dt,
        increments: p.increments.chunks(2).map(|c| c.iter().sum()).collect(),
    }
}

fn remark2(dt: f64) -> Scenario {
    let mut s = scenario_preset("remark2").unwrap();
    s.dt = dt;
    s.nodes = 129;
    s.record_every = 1;
    s
}

/// Mean over paths of the relative L2 error at `t = 1`, for `dt`, `2dt`,
/// `4dt` on the same Brownian paths.
fn remark2_strong_errors(paths: u64) -> [f64; 3] {
    let sims: Vec<(Prepared, f64)> = [1e-4, 2e-4, 4e-4]
        .iter()
        .map(|dt| (Prepared::new(&remark2(*dt)).unwrap(), *dt))
        .collect();
    let mut errs = [0.0; 3];
    for i in 0..paths {
        let mut path = brownian_stream(31, i, 1e-4, 10_000).unwrap();
        let b: f64 = path.increments.iter().sum();
        for (level, (p, _)) in sims.iter().enumerate() {
            let mut sim = Simulator::new(p).unwrap();
            let tr = field(sim.run(&path, Some(path.steps())).unwrap());
            let (t, y) = tr.snapshots.last().unwrap();
            let exact: Vec<f64> = (0..129)
                .map(|j| (2.0 * PI * j as f64 / 128.0).cos() * (t + 0.1 * b).exp())
                .collect();
            errs[level] += rel_l2(y, &exact) / paths as f64;
            path = coarsen(&path);
        }
    }
    errs
}

#[test]
fn remark2_strong_error_shrinks_with_dt() {
    let errs = remark2_strong_errors(64);
    assert!(
        errs[1] / errs[0] >= 1.3 && errs[2] / errs[1] >= 1.3,
        "{errs:?}"
    );
}

/// Closed-loop field pushed through the transform vs. the target system
/// driven by the recorded `w̃ = w − ŵ` on the same noise.
fn commutation_error(dt: f64, nodes: usize) -> f64 {
    let mut s = scenario_preset("section4").unwrap();
    s.dt = dt;
    s.nodes = nodes;
    s.horizon = 1.0;
    s.record_every = 1;
    let p = Prepared::new(&s).unwrap();
    let mut sim = Simulator::new(&p).unwrap();
    let path = sim.path(5, 0).unwrap();
    let stride = s.steps() / 10;
    let tr = field(sim.run(&path, Some(stride)).unwrap());
    let w_tilde: Vec<f64> = tr.w.iter().zip(&tr.w_hat).map(|(w, h)| w - h).collect();

    let mut op = FieldOperator::new(&vec![0.0; nodes], s.c, dt, s.scheme).unwrap();
    let z0 = op.encode(&apply_forward(&p.transform, &p.y0).unwrap());
    let target = simulate_target(
        &mut op,
        s.sigma,
        &z0,
        &w_tilde,
        &path,
        Recording {
            stride: s.steps(),
            snapshots: Some(stride),
        },
    )
    .unwrap();
    let mut worst = 0.0_f64;
    for ((_, y), (_, z)) in tr.snapshots.iter().zip(&target.snapshots) {
        let ty = apply_forward(&p.transform, y).unwrap();
        let d: Vec<f64> = ty.iter().zip(z).map(|(a, b)| a - b).collect();
        worst = worst.max((l2_norm_sq(&d) / l2_norm_sq(&z0)).sqrt());
    }
    worst
}

#[test]
fn transform_commutes_with_dynamics() {
    // first order in the joint refinement (dt, h) → (dt/2, h/2)
    let errs: Vec<f64> = [(2e-4, 65), (1e-4, 129), (5e-5, 257)]
        .iter()
        .map(|(dt, m)| commutation_error(*dt, *m))
        .collect();
    assert!(
        errs[0] / errs[1] >= 1.8 && errs[1] / errs[2] >= 1.8,
        "{errs:?}"
    );
    assert!(errs[2] < 0.1, "{errs:?}");
}

#[test]
fn target_energy_estimate() {
    let mut s = scenario_preset("section4").unwrap();
    s.nodes = 65;
    s.record_every = 1;
    let p = Prepared::new(&s).unwrap();
    let mut sim = Simulator::new(&p).unwrap();
    let (n, eps, stride) = (64, 0.5, 500);
    let steps = s.steps();
    let mut op = FieldOperator::new(&vec![0.0; s.nodes], s.c, s.dt, s.scheme).unwrap();
    let z0_nodal = apply_forward(&p.transform, &p.y0).unwrap();
    let z0 = op.encode(&z0_nodal);

    let records = steps / stride + 1;
    let mut sum = vec![0.0; records];
    let mut sum_sq = vec![0.0; records];
    let mut w_int = vec![0.0; records];
    for i in 0..n {
        let path = sim.path(77, i).unwrap();
        let tr = field(sim.run(&path, None).unwrap());
        let w_tilde: Vec<f64> = tr.w.iter().zip(&tr.w_hat).map(|(w, h)| w - h).collect();
        let target = simulate_target(
            &mut op,
            s.sigma,
            &z0,
            &w_tilde,
            &path,
            Recording {
                stride,
                snapshots: None,
            },
        )
        .unwrap();
        for (r, v) in target.norm_sq.iter().enumerate() {
            sum[r] += v;
            sum_sq[r] += v * v;
        }
        let mut acc = 0.0;
        for (k, wt) in w_tilde.iter().enumerate().take(steps) {
            if k % stride == 0 {
                w_int[k / stride] += acc / n as f64;
            }
            acc += wt * wt * s.dt;
        }
        w_int[records - 1] += acc / n as f64;
    }
    let e0 = l2_norm_sq(&z0_nodal);
    let rate = s.sigma * s.sigma - 2.0 * s.c + 2.0 * eps;
    for r in 0..records {
        let t = (r * stride) as f64 * s.dt;
        let mean = sum[r] / n as f64;
        let var = (sum_sq[r] / n as f64 - mean * mean).max(0.0) * n as f64 / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let bound = (e0 + w_int[r] / eps) * (rate * t).exp().max(1.0);
        assert!(mean <= bound + 3.0 * se, "t={t}: {mean} > {bound} + 3·{se}");
    }
}

#[test]
fn open_and_closed_loop_on_common_noise() {
    let mut s = scenario_preset("section4").unwrap();
    s.nodes = 65;
    let p = Prepared::new(&s).unwrap();
    let c = compare(&p, 64, 3).unwrap();
    assert!(c.open_growth > 1.0, "{}", c.open_growth);
    assert!(c.closed_ratio < 0.05, "{}", c.closed_ratio);
    let window = (1.0, 3.0);
    let slope = fit_decay(&c.closed.t, &c.closed.mean_norm_sq, window).unwrap();
    assert!(slope <= -0.5, "{slope}");
}

#[test]
fn coupled_tail_slopes_meet_the_almost_sure_rate() {
    let p = Prepared::new(&scenario_preset("coupledZeta").unwrap()).unwrap();
    let e = run_ensemble(&p, 500, 12).unwrap();
    let r = check_bound(&e, bound_for(&p));
    assert!(r.passed(), "{r:?}");
    assert!(r.as_fraction >= 0.95);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn runs_are_bitwise_reproducible(seed in any::<u64>(), stream in 0u64..1000) {
        let mut s = scenario_preset("section4").unwrap();
        s.nodes = 33;
        s.horizon = 0.05;
        s.record_every = 1;
        let p = Prepared::new(&s).unwrap();
        let mut a = Simulator::new(&p).unwrap();
        let mut b = Simulator::new(&p).unwrap();
        let pa = a.path(seed, stream).unwrap();
        let pb = b.path(seed, stream).unwrap();
        prop_assert_eq!(&pa, &pb);
        let ta = field(a.run(&pa, Some(50)).unwrap());
        let tb = field(b.run(&pb, Some(50)).unwrap());
        prop_assert_eq!(ta, tb);
    }
}
