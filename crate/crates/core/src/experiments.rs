//! Ensembles over seeded paths and checks against the certified decay bounds.

use rayon::prelude::*;

use crate::dynamics::{
    brownian_stream, simulate_coupled, BrownianPath, CoupledTrajectory, ExoPropagator,
    ObserverPropagators,
};
use crate::error::{Error, Result};
use crate::kernel::apply_forward;
use crate::scenario::{Mode, Prepared, Profile};
use crate::spde::{
    simulate_open_loop, simulate_target, ClosedLoop, ClosedLoopInit, FieldOperator, Recording,
    Sensors, Trajectory,
};

pub use crate::scenario::scenario_preset;

/// Paths per parallel block; results are folded block by block in path order.
const BLOCK: usize = 256;
/// Largest tolerated fraction of aborted paths.
pub const MAX_ABORT_FRACTION: f64 = 1e-3;
/// Standard errors of slack in every one-sided bound check.
pub const SE_SLACK: f64 = 3.0;
/// Absolute slack on the almost-sure tail slope.
pub const SLOPE_SLACK: f64 = 0.1;
/// Fraction of paths that must meet the tail-slope bound.
pub const AS_PASS_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub enum Run {
    Field(Trajectory),
    Coupled(CoupledTrajectory),
}

/// Per-mode simulation machinery built once per scenario.
#[derive(Debug, Clone)]
pub struct Simulator {
    prepared: Prepared,
    closed: Option<ClosedLoop>,
    field_op: Option<FieldOperator>,
    exo: ExoPropagator,
    /// Initial field in the coordinates of whichever operator is active.
    field0: Vec<f64>,
}

/// `y0` in `op`'s coordinates, exact for an integer cosine profile.
fn initial_field(op: &FieldOperator, profile: &Profile, y0: &[f64]) -> Vec<f64> {
    match profile {
        Profile::Cosine { k, amp } if k.fract() == 0.0 && *k >= 0.0 => {
            op.encode_cosine(*k as usize, *amp)
        }
        _ => op.encode(y0),
    }
}

impl Simulator {
    /// Closed mode does not require the certificate here; callers that need
    /// it check [`Prepared::certified`].
    pub fn new(prepared: &Prepared) -> Result<Self> {
        let s = &prepared.scenario;
        let spec = s.plant_spec();
        let exo = ExoPropagator::new(&s.a_exo, &s.c_row, s.dt)?;
        let (closed, field_op) = match s.mode {
            Mode::Closed => {
                let operator = FieldOperator::new(&prepared.a_samples, 0.0, s.dt, s.scheme)?;
                let sensors =
                    Sensors::new(&prepared.kernel, &prepared.transform)?.for_operator(&operator);
                (
                    Some(ClosedLoop {
                        operator,
                        sensors,
                        exo: exo.clone(),
                        observer: ObserverPropagators::new(&spec, s.dt)?,
                        k11: prepared.kernel.k11,
                        sigma: s.sigma,
                    }),
                    None,
                )
            }
            Mode::Open => (
                None,
                Some(FieldOperator::new(
                    &prepared.a_samples,
                    0.0,
                    s.dt,
                    s.scheme,
                )?),
            ),
            Mode::Target => (
                None,
                Some(FieldOperator::new(
                    &vec![0.0; s.nodes],
                    s.c,
                    s.dt,
                    s.scheme,
                )?),
            ),
            Mode::Coupled => (None, None),
        };
        let field0 = match (&closed, &field_op, s.mode) {
            (_, Some(op), Mode::Target) => {
                op.encode(&apply_forward(&prepared.transform, &prepared.y0)?)
            }
            (Some(cl), _, _) => initial_field(&cl.operator, &s.y0, &prepared.y0),
            (_, Some(op), _) => initial_field(op, &s.y0, &prepared.y0),
            _ => Vec::new(),
        };
        Ok(Self {
            prepared: prepared.clone(),
            closed,
            field_op,
            exo,
            field0,
        })
    }

    pub fn prepared(&self) -> &Prepared {
        &self.prepared
    }

    /// Brownian increments of ensemble path `index`.
    pub fn path(&self, master_seed: u64, index: u64) -> Result<BrownianPath> {
        let s = &self.prepared.scenario;
        brownian_stream(master_seed, index, s.dt, s.steps())
    }

    pub fn run(&mut self, path: &BrownianPath, snapshots: Option<usize>) -> Result<Run> {
        let s = &self.prepared.scenario;
        let rec = Recording {
            stride: s.record_every,
            snapshots,
        };
        let xi0: Vec<f64> = s.xi0.iter().copied().collect();
        match s.mode {
            Mode::Closed => {
                let theta0: Vec<f64> = s.theta0.iter().copied().collect();
                let init = ClosedLoopInit {
                    field: &self.field0,
                    xi0: &xi0,
                    theta0: &theta0,
                };
                Ok(Run::Field(
                    self.closed
                        .as_mut()
                        .expect("closed mode")
                        .run(&init, path, rec)?,
                ))
            }
            Mode::Open => {
                let op = self.field_op.as_mut().expect("open mode");
                let exo = if xi0.iter().any(|v| *v != 0.0) {
                    Some((&self.exo, xi0.as_slice()))
                } else {
                    None
                };
                Ok(Run::Field(simulate_open_loop(
                    op,
                    s.sigma,
                    &self.field0,
                    exo,
                    path,
                    rec,
                )?))
            }
            Mode::Target => {
                let op = self.field_op.as_mut().expect("target mode");
                let w_tilde = vec![0.0; path.steps()];
                Ok(Run::Field(simulate_target(
                    op,
                    s.sigma,
                    &self.field0,
                    &w_tilde,
                    path,
                    rec,
                )?))
            }
            Mode::Coupled => Ok(Run::Coupled(simulate_coupled(
                self.prepared.z0,
                &self.prepared.eta0,
                &s.xi0,
                &s.plant_spec(),
                path,
                s.record_every,
            )?)),
        }
    }
}

/// One path of the scenario. Closed mode requires a passing certificate.
pub fn simulate(prepared: &Prepared, seed: u64, snapshots: Option<usize>) -> Result<Run> {
    if prepared.scenario.mode == Mode::Closed {
        prepared.certified()?;
    }
    let mut sim = Simulator::new(prepared)?;
    let path = sim.path(seed, 0)?;
    sim.run(&path, snapshots)
}

#[derive(Debug, Clone, PartialEq)]
struct PathSummary {
    t: Vec<f64>,
    norm_sq: Vec<f64>,
    obs_err: Option<Vec<f64>>,
}

fn summarize(run: Run, mode: Mode) -> PathSummary {
    match run {
        Run::Field(tr) => {
            let obs_err = if mode == Mode::Closed {
                Some(
                    tr.w_hat
                        .iter()
                        .zip(&tr.w)
                        .map(|(a, b)| (a - b).abs())
                        .collect(),
                )
            } else {
                None
            };
            PathSummary {
                norm_sq: tr.norm_sq,
                t: tr.t,
                obs_err,
            }
        }
        Run::Coupled(tr) => PathSummary {
            norm_sq: tr.energy(),
            obs_err: Some(
                tr.w_hat
                    .iter()
                    .zip(&tr.w)
                    .map(|(a, b)| (a - b).abs())
                    .collect(),
            ),
            t: tr.t,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub scenario: String,
    pub mode: Mode,
    pub paths: usize,
    pub master_seed: u64,
    pub t: Vec<f64>,
    /// Mean of the path norm (`‖y‖²`, or `|Z|² + |η|²` in coupled mode).
    pub mean_norm_sq: Vec<f64>,
    pub se: Vec<f64>,
    /// Mean of `|ŵ − w|` where an observer runs.
    pub mean_obs_err: Option<Vec<f64>>,
    /// Per-path least-squares slope of `log‖·‖` over the last half of the
    /// horizon; `−∞` for paths that sit at zero.
    pub tail_slopes: Vec<f64>,
    pub aborted: usize,
}

#[derive(Debug, Clone)]
struct Welford {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(len: usize) -> Self {
        Self {
            n: 0.0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / self.n;
            *s += d * (v - *m);
        }
    }

    fn standard_errors(&self) -> Vec<f64> {
        if self.n < 2.0 {
            return vec![0.0; self.m2.len()];
        }
        self.m2
            .iter()
            .map(|s| (s / (self.n - 1.0) / self.n).sqrt())
            .collect()
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var("HEATCTL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
}

/// Runs `n` paths with streams `0..n` of `master_seed`. Paths that abort
/// numerically are excluded; more than 0.1% aborted paths fail the run.
pub fn run_ensemble(prepared: &Prepared, n: usize, master_seed: u64) -> Result<Ensemble> {
    if n < 2 {
        return Err(Error::invalid("paths", format!("need at least 2, got {n}")));
    }
    let sim = Simulator::new(prepared)?;
    let body = || ensemble_body(&sim, n, master_seed);
    match thread_cap() {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Io(e.to_string()))?
            .install(body),
        None => body(),
    }
}

fn ensemble_body(sim: &Simulator, n: usize, master_seed: u64) -> Result<Ensemble> {
    let s = &sim.prepared.scenario;
    let mut norm_acc: Option<Welford> = None;
    let mut err_acc: Option<Welford> = None;
    let mut t_grid = Vec::new();
    let mut tail_slopes = Vec::with_capacity(n);
    let mut aborted = 0usize;

    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        let results: Vec<Result<PathSummary>> = (start..end)
            .into_par_iter()
            .map_init(
                || sim.clone(),
                |local, i| {
                    let path = local.path(master_seed, i as u64)?;
                    Ok(summarize(local.run(&path, None)?, s.mode))
                },
            )
            .collect();
        for r in results {
            let summary = match r {
                Ok(s) => s,
                Err(Error::NumericalAbort { .. }) => {
                    aborted += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let acc = norm_acc.get_or_insert_with(|| {
                t_grid = summary.t.clone();
                Welford::new(summary.t.len())
            });
            acc.push(&summary.norm_sq);
            if let Some(e) = &summary.obs_err {
                err_acc.get_or_insert_with(|| Welford::new(e.len())).push(e);
            }
            tail_slopes.push(tail_slope(&summary.t, &summary.norm_sq));
        }
    }
    if aborted as f64 > MAX_ABORT_FRACTION * n as f64 || norm_acc.is_none() {
        return Err(Error::ExcessiveAborts { aborted, total: n });
    }
    let acc = norm_acc.expect("checked above");
    Ok(Ensemble {
        scenario: s.name.clone(),
        mode: s.mode,
        paths: n,
        master_seed,
        se: acc.standard_errors(),
        mean_norm_sq: acc.mean,
        mean_obs_err: err_acc.map(|w| w.mean),
        t: t_grid,
        tail_slopes,
        aborted,
    })
}

/// Slope of `½·log(norm_sq)` over the last half of the recorded horizon.
fn tail_slope(t: &[f64], norm_sq: &[f64]) -> f64 {
    let t_end = t.last().copied().unwrap_or(0.0);
    match fit_decay(t, norm_sq, (0.5 * t_end, t_end)) {
        Ok(s) => 0.5 * s,
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Least-squares slope of `log(values)` over samples with `t` in `window`.
pub fn fit_decay(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::Dimension(format!(
            "{} times but {} values",
            times.len(),
            values.len()
        )));
    }
    let (lo, hi) = window;
    let eps = 1e-12 * hi.abs().max(1.0);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= lo - eps && **t <= hi + eps)
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < 2 {
        return Err(Error::invalid("window", "fewer than two samples in window"));
    }
    if pts.iter().any(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("values", "nonpositive value in window"));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let lm = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, v) in &pts {
        num += (t - tm) * (v.ln() - lm);
        den += (t - tm) * (t - tm);
    }
    Ok(num / den)
}

/// `prefactor·e^{−rate·t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayBound {
    pub prefactor: f64,
    pub rate: f64,
}

impl DecayBound {
    pub fn at(&self, t: f64) -> f64 {
        self.prefactor * (-self.rate * t).exp()
    }
}

/// The certified bound for a prepared scenario: `Γ*·e^{−θ*t}` for the
/// field modes, `(λ_max/λ_min)·E₀·e^{−rate_Ze·t}` for the coupled system.
/// `Ok(None)` in open mode, where nothing is claimed.
pub fn bound_for(prepared: &Prepared) -> Result<Option<DecayBound>> {
    match prepared.scenario.mode {
        Mode::Open | Mode::Target => Ok(None),
        Mode::Closed => {
            let cert = prepared.certified()?;
            let g = cert
                .gammas
                .ok_or_else(|| Error::invalid("cert", "bound constants missing"))?;
            Ok(Some(DecayBound {
                prefactor: g.gamma_star,
                rate: cert.theta_star,
            }))
        }
        Mode::Coupled => {
            let cert = prepared.certified()?;
            let e0 = prepared.z0 * prepared.z0 + prepared.eta0.norm_squared();
            Ok(Some(DecayBound {
                prefactor: cert.lambda_max / cert.lambda_min * e0,
                rate: cert.rate_ze,
            }))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Uncertified,
    NotApplicable,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Uncertified => "uncertified",
            Verdict::NotApplicable => "n/a",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub bound: Option<DecayBound>,
    /// Largest `(mean − bound)/SE` over the recorded times.
    pub max_margin: f64,
    /// Fraction of paths with tail slope `≤ −rate/2 + 0.1`.
    pub as_fraction: f64,
    pub verdict: Verdict,
    /// Why the scenario is uncertified, if it is.
    pub reason: Option<String>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Compares the ensemble against `bound` with 3-SE slack and the per-path
/// tail slopes against `−rate/2 + 0.1`.
pub fn check_bound(
    ensemble: &Ensemble,
    bound: std::result::Result<Option<DecayBound>, Error>,
) -> BoundReport {
    let bound = match bound {
        Ok(Some(b)) => b,
        Ok(None) => {
            return BoundReport {
                bound: None,
                max_margin: f64::NAN,
                as_fraction: f64::NAN,
                verdict: Verdict::NotApplicable,
                reason: None,
            }
        }
        Err(e) => {
            return BoundReport {
                bound: None,
                max_margin: f64::NAN,
                as_fraction: f64::NAN,
                verdict: Verdict::Uncertified,
                reason: Some(e.to_string()),
            }
        }
    };
    let mut max_margin = f64::NEG_INFINITY;
    for ((t, m), se) in ensemble
        .t
        .iter()
        .zip(&ensemble.mean_norm_sq)
        .zip(&ensemble.se)
    {
        let diff = m - bound.at(*t);
        let margin = if *se > 0.0 {
            diff / se
        } else if diff > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        max_margin = max_margin.max(margin);
    }
    let limit = -0.5 * bound.rate + SLOPE_SLACK;
    let good = ensemble.tail_slopes.iter().filter(|s| **s <= limit).count();
    let as_fraction = if ensemble.tail_slopes.is_empty() {
        1.0
    } else {
        good as f64 / ensemble.tail_slopes.len() as f64
    };
    let verdict = if max_margin <= SE_SLACK && as_fraction >= AS_PASS_FRACTION {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    BoundReport {
        bound: Some(bound),
        max_margin,
        as_fraction,
        verdict,
        reason: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub open: Ensemble,
    pub closed: Ensemble,
    /// Open-loop mean at `t = 1` (or the horizon, if shorter) over its start.
    pub open_growth: f64,
    /// Closed-loop mean at the horizon over its start.
    pub closed_ratio: f64,
}

fn value_at(e: &Ensemble, t: f64) -> f64 {
    let k =
        e.t.iter()
            .position(|s| *s >= t - 1e-9)
            .unwrap_or(e.t.len() - 1);
    e.mean_norm_sq[k]
}

/// Open and closed loop on the same master seed (common random numbers).
/// The open loop keeps the disturbance as its boundary flux.
pub fn compare(prepared: &Prepared, n: usize, master_seed: u64) -> Result<Comparison> {
    prepared.certified()?;
    let mut closed_s = prepared.scenario.clone();
    closed_s.mode = Mode::Closed;
    let mut open_s = closed_s.clone();
    open_s.mode = Mode::Open;
    let closed_p = Prepared {
        scenario: closed_s,
        ..prepared.clone()
    };
    let open_p = Prepared {
        scenario: open_s,
        ..prepared.clone()
    };
    let closed = run_ensemble(&closed_p, n, master_seed)?;
    let open = run_ensemble(&open_p, n, master_seed)?;
    let open_growth = value_at(&open, 1.0) / open.mean_norm_sq[0];
    let closed_ratio = closed.mean_norm_sq[closed.mean_norm_sq.len() - 1] / closed.mean_norm_sq[0];
    Ok(Comparison {
        open,
        closed,
        open_growth,
        closed_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{scenario_preset, Profile};
    use nalgebra::DVector;

    #[test]
    fn fit_exact_exponential() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
        assert!((fit_decay(&t, &v, (0.0, 5.0)).unwrap() + 2.0).abs() < 1e-9);
        assert_eq!(fit_decay(&t, &vec![4.0; 50], (1.0, 3.0)).unwrap(), 0.0);
        let mut bad = v.clone();
        bad[20] = 0.0;
        assert!(fit_decay(&t, &bad, (1.0, 3.0)).is_err());
        assert!(fit_decay(&t, &bad, (3.0, 4.0)).is_ok());
    }

    fn small(name: &str) -> crate::scenario::Scenario {
        let mut s = scenario_preset(name).unwrap();
        s.nodes = 17;
        s.dt = 1e-3;
        s.horizon = 0.1;
        s.record_every = 10;
        s
    }

    #[test]
    fn zero_data_gives_zero_statistics_and_trivial_pass() {
        let mut s = small("section4");
        s.y0 = Profile::Constant(0.0);
        s.xi0 = DVector::zeros(2);
        let p = Prepared::new(&s).unwrap();
        let e = run_ensemble(&p, 2, 9).unwrap();
        assert!(e.mean_norm_sq.iter().chain(&e.se).all(|v| *v == 0.0));
        let r = check_bound(&e, bound_for(&p));
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn ensemble_is_deterministic() {
        let p = Prepared::new(&small("section4")).unwrap();
        let a = run_ensemble(&p, 5, 77).unwrap();
        let b = run_ensemble(&p, 5, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.t.len(), 11);
        assert!(run_ensemble(&p, 1, 77).is_err());
    }

    #[test]
    fn ensemble_prefix_is_independent_of_size() {
        let p = Prepared::new(&small("remark2")).unwrap();
        let e2 = run_ensemble(&p, 2, 5).unwrap();
        let e3 = run_ensemble(&p, 3, 5).unwrap();
        assert_eq!(e2.tail_slopes[..], e3.tail_slopes[..2]);
        let mut sim = Simulator::new(&p).unwrap();
        let path = sim.path(5, 1).unwrap();
        let Run::Field(tr) = sim.run(&path, None).unwrap() else {
            panic!()
        };
        assert_eq!(e3.tail_slopes[1], tail_slope(&tr.t, &tr.norm_sq));
    }

    #[test]
    fn uncertified_scenario_is_reported() {
        let mut s = small("section4");
        s.sigma = 0.2;
        let p = Prepared::new(&s).unwrap();
        assert!(matches!(
            simulate(&p, 1, None),
            Err(Error::Uncertified { .. })
        ));
        let e = run_ensemble(&p, 2, 1).unwrap();
        let r = check_bound(&e, bound_for(&p));
        assert_eq!(r.verdict, Verdict::Uncertified);
        assert!(r.reason.unwrap().contains("sigma"));
    }

    #[test]
    fn open_mode_is_not_checked() {
        let p = Prepared::new(&small("remark2")).unwrap();
        let e = run_ensemble(&p, 4, 3).unwrap();
        assert!(e.mean_obs_err.is_none());
        assert_eq!(
            check_bound(&e, bound_for(&p)).verdict,
            Verdict::NotApplicable
        );
    }

    #[test]
    fn margin_detects_violation() {
        let e = Ensemble {
            scenario: "x".into(),
            mode: Mode::Closed,
            paths: 2,
            master_seed: 0,
            t: vec![0.0, 1.0],
            mean_norm_sq: vec![1.0, 2.0],
            se: vec![0.1, 0.1],
            mean_obs_err: None,
            tail_slopes: vec![-1.0, -1.0],
            aborted: 0,
        };
        let b = DecayBound {
            prefactor: 1.5,
            rate: 0.0,
        };
        let r = check_bound(&e, Ok(Some(b)));
        assert!((r.max_margin - 5.0).abs() < 1e-12);
        assert_eq!(r.verdict, Verdict::Fail);
        let r = check_bound(
            &e,
            Ok(Some(DecayBound {
                prefactor: 2.2,
                rate: 0.0,
            })),
        );
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn coupled_and_target_modes_run() {
        let p = Prepared::new(&small("coupledZeta")).unwrap();
        let e = run_ensemble(&p, 3, 1).unwrap();
        assert!(e.mean_obs_err.is_some());
        assert!(bound_for(&p).unwrap().is_some());
        let mut s = small("section4");
        s.mode = Mode::Target;
        let p = Prepared::new(&s).unwrap();
        assert!(
            matches!(simulate(&p, 1, Some(5)).unwrap(), Run::Field(tr) if tr.snapshots.len() == 21)
        );
    }
}
