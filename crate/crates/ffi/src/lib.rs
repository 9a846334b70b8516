//! C ABI over `heatctl-core`.
//!
//! Handles are opaque pointers created by `heatctl_*_new`/`_preset`/`_run`
//! functions and released by the matching `_free`. Every fallible call
//! returns a [`HeatctlStatus`]; on failure the message is available from
//! [`heatctl_last_error`] on the same thread until the next failing call.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use heatctl_core::config::parse_config;
use heatctl_core::experiments::{
    bound_for, check_bound, run_ensemble, simulate, DecayBound, Ensemble, Run, Verdict,
};
use heatctl_core::kernel::solve_kernel;
use heatctl_core::scenario::{scenario_preset, Prepared, Scenario};
use heatctl_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatctlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Certification = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatctlVerdict {
    Pass = 0,
    Fail = 1,
    Uncertified = 2,
    NotApplicable = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatctlColumn {
    Time = 0,
    NormSq = 1,
    Y1 = 2,
    Z = 3,
    W = 4,
    WHat = 5,
    U = 6,
}

/// Certificate summary. `gamma_star` is NaN when the bound constants are
/// unavailable.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HeatctlCertificate {
    pub mu_c: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub q_residual: f64,
    pub sigma_max: f64,
    pub rate_ze: f64,
    pub rate_beta: f64,
    pub theta_star: f64,
    pub gamma_star: f64,
}

/// `prefactor` and `rate` are NaN when no bound applies.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatctlBoundReport {
    pub prefactor: f64,
    pub rate: f64,
    pub max_margin: f64,
    pub as_fraction: f64,
    pub verdict: HeatctlVerdict,
}

pub struct HeatctlScenario {
    inner: Scenario,
}

/// One simulated path. In coupled mode `NormSq` holds `|Z|² + |η|²` and
/// the `Y1` and `U` columns are zero.
pub struct HeatctlTrajectory {
    columns: [Vec<f64>; 7],
}

pub struct HeatctlEnsemble {
    inner: Ensemble,
    bound: Result<Option<DecayBound>, Error>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HeatctlStatus {
    match e {
        Error::InvalidArgument { .. }
        | Error::Dimension(_)
        | Error::OutsideTriangle { .. }
        | Error::Config { .. } => HeatctlStatus::InvalidArgument,
        Error::Io(_) => HeatctlStatus::Io,
        Error::NotHurwitz { .. }
        | Error::NotObservable { .. }
        | Error::NotPositiveDefinite
        | Error::LyapunovResidual { .. }
        | Error::Uncertified { .. }
        | Error::DampingTooSmall { .. } => HeatctlStatus::Certification,
        Error::KernelNotConverged { .. }
        | Error::SingularPivot { .. }
        | Error::NumericalAbort { .. }
        | Error::ExcessiveAborts { .. } => HeatctlStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), HeatctlFailure>) -> HeatctlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HeatctlStatus::Ok,
        Ok(Err(HeatctlFailure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(HeatctlFailure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            HeatctlStatus::NullPointer
        }
        Ok(Err(HeatctlFailure::Arg(msg))) => {
            set_error(msg);
            HeatctlStatus::InvalidArgument
        }
        Err(_) => {
            set_error("internal panic".into());
            HeatctlStatus::Panic
        }
    }
}

enum HeatctlFailure {
    Core(Error),
    Null(&'static str),
    Arg(String),
}

impl From<Error> for HeatctlFailure {
    fn from(e: Error) -> Self {
        HeatctlFailure::Core(e)
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, HeatctlFailure> {
    if p.is_null() {
        return Err(HeatctlFailure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| HeatctlFailure::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn scenario_mut<'a>(h: *mut HeatctlScenario) -> Result<&'a mut Scenario, HeatctlFailure> {
    h.as_mut()
        .map(|s| &mut s.inner)
        .ok_or(HeatctlFailure::Null("scenario"))
}

unsafe fn scenario_ref<'a>(h: *const HeatctlScenario) -> Result<&'a Scenario, HeatctlFailure> {
    h.as_ref()
        .map(|s| &s.inner)
        .ok_or(HeatctlFailure::Null("scenario"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn heatctl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn heatctl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a scenario from a preset name (`section4`, `remark2`,
/// `coupledZeta`).
#[no_mangle]
pub unsafe extern "C" fn heatctl_scenario_preset(
    name: *const c_char,
    out: *mut *mut HeatctlScenario,
) -> HeatctlStatus {
    guard(|| {
        if out.is_null() {
            return Err(HeatctlFailure::Null("out"));
        }
        let s = scenario_preset(cstr(name, "name")?)?;
        *out = Box::into_raw(Box::new(HeatctlScenario { inner: s }));
        Ok(())
    })
}

/// Creates a scenario from configuration text (`[scenario]` section).
#[no_mangle]
pub unsafe extern "C" fn heatctl_scenario_from_config(
    text: *const c_char,
    out: *mut *mut HeatctlScenario,
) -> HeatctlStatus {
    guard(|| {
        if out.is_null() {
            return Err(HeatctlFailure::Null("out"));
        }
        let cfg = parse_config(cstr(text, "text")?)?;
        *out = Box::into_raw(Box::new(HeatctlScenario {
            inner: cfg.scenario,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn heatctl_scenario_free(h: *mut HeatctlScenario) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Sets the noise intensity.
#[no_mangle]
pub unsafe extern "C" fn heatctl_scenario_set_sigma(
    h: *mut HeatctlScenario,
    sigma: f64,
) -> HeatctlStatus {
    guard(|| {
        scenario_mut(h)?.sigma = sigma;
        Ok(())
    })
}

/// Sets the time step, grid size and horizon together.
#[no_mangle]
pub unsafe extern "C" fn heatctl_scenario_set_grid(
    h: *mut HeatctlScenario,
    dt: f64,
    nodes: usize,
    horizon: f64,
) -> HeatctlStatus {
    guard(|| {
        let s = scenario_mut(h)?;
        s.dt = dt;
        s.nodes = nodes;
        s.horizon = horizon;
        Ok(())
    })
}

/// Validates the scenario without running anything.
#[no_mangle]
pub unsafe extern "C" fn heatctl_scenario_validate(h: *const HeatctlScenario) -> HeatctlStatus {
    guard(|| Ok(scenario_ref(h)?.validate()?))
}

/// Certifies the scenario's gains. On certification failure `out` is left
/// untouched.
#[no_mangle]
pub unsafe extern "C" fn heatctl_certify(
    h: *const HeatctlScenario,
    out: *mut HeatctlCertificate,
) -> HeatctlStatus {
    guard(|| {
        let s = scenario_ref(h)?;
        let out = out.as_mut().ok_or(HeatctlFailure::Null("out"))?;
        let p = Prepared::new(s)?;
        let c = p.certified()?;
        *out = HeatctlCertificate {
            mu_c: c.mu_c,
            lambda_min: c.lambda_min,
            lambda_max: c.lambda_max,
            q_residual: c.q_residual,
            sigma_max: c.sigma_max,
            rate_ze: c.rate_ze,
            rate_beta: c.rate_beta,
            theta_star: c.theta_star,
            gamma_star: c.gammas.map_or(f64::NAN, |g| g.gamma_star),
        };
        Ok(())
    })
}

/// Solves the kernel for `n` samples `a` and damping `c`. Writes `k(1,1)`
/// to `k11` and the trace `k_x(1, ζ_j)` to `kx1` (length `n`). Either
/// output may be null.
#[no_mangle]
pub unsafe extern "C" fn heatctl_kernel_solve(
    a: *const f64,
    n: usize,
    c: f64,
    k11: *mut f64,
    kx1: *mut f64,
) -> HeatctlStatus {
    guard(|| {
        if a.is_null() {
            return Err(HeatctlFailure::Null("a"));
        }
        let samples = std::slice::from_raw_parts(a, n);
        let k = solve_kernel(samples, c, n)?;
        if let Some(out) = k11.as_mut() {
            *out = k.k11;
        }
        if !kx1.is_null() {
            std::slice::from_raw_parts_mut(kx1, n).copy_from_slice(&k.kx1_trace);
        }
        Ok(())
    })
}

/// Simulates one path with the given seed.
#[no_mangle]
pub unsafe extern "C" fn heatctl_simulate(
    h: *const HeatctlScenario,
    seed: u64,
    out: *mut *mut HeatctlTrajectory,
) -> HeatctlStatus {
    guard(|| {
        if out.is_null() {
            return Err(HeatctlFailure::Null("out"));
        }
        let p = Prepared::new(scenario_ref(h)?)?;
        let columns = match simulate(&p, seed, None)? {
            Run::Field(tr) => [tr.t, tr.norm_sq, tr.y1, tr.z, tr.w, tr.w_hat, tr.u],
            Run::Coupled(tr) => {
                let len = tr.t.len();
                let energy = tr.energy();
                [
                    tr.t,
                    energy,
                    vec![0.0; len],
                    tr.z,
                    tr.w,
                    tr.w_hat,
                    vec![0.0; len],
                ]
            }
        };
        *out = Box::into_raw(Box::new(HeatctlTrajectory { columns }));
        Ok(())
    })
}

/// Number of recorded times, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn heatctl_trajectory_len(h: *const HeatctlTrajectory) -> usize {
    h.as_ref().map_or(0, |t| t.columns[0].len())
}

/// Copies one column into `buf`, which must hold `len` values with
/// `len == heatctl_trajectory_len(h)`.
#[no_mangle]
pub unsafe extern "C" fn heatctl_trajectory_column(
    h: *const HeatctlTrajectory,
    column: HeatctlColumn,
    buf: *mut f64,
    len: usize,
) -> HeatctlStatus {
    guard(|| {
        let t = h.as_ref().ok_or(HeatctlFailure::Null("trajectory"))?;
        if buf.is_null() {
            return Err(HeatctlFailure::Null("buf"));
        }
        let col = &t.columns[column as usize];
        if len != col.len() {
            return Err(HeatctlFailure::Arg(format!(
                "buffer holds {len}, column has {}",
                col.len()
            )));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(col);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn heatctl_trajectory_free(h: *mut HeatctlTrajectory) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Runs `paths` seeded paths.
#[no_mangle]
pub unsafe extern "C" fn heatctl_ensemble_run(
    h: *const HeatctlScenario,
    paths: usize,
    master_seed: u64,
    out: *mut *mut HeatctlEnsemble,
) -> HeatctlStatus {
    guard(|| {
        if out.is_null() {
            return Err(HeatctlFailure::Null("out"));
        }
        let p = Prepared::new(scenario_ref(h)?)?;
        let inner = run_ensemble(&p, paths, master_seed)?;
        *out = Box::into_raw(Box::new(HeatctlEnsemble {
            inner,
            bound: bound_for(&p),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn heatctl_ensemble_len(h: *const HeatctlEnsemble) -> usize {
    h.as_ref().map_or(0, |e| e.inner.t.len())
}

/// Copies times, means and standard errors; each buffer holds `len` values
/// with `len == heatctl_ensemble_len(h)`. Null buffers are skipped.
#[no_mangle]
pub unsafe extern "C" fn heatctl_ensemble_series(
    h: *const HeatctlEnsemble,
    t: *mut f64,
    mean_norm_sq: *mut f64,
    se: *mut f64,
    len: usize,
) -> HeatctlStatus {
    guard(|| {
        let e = &h.as_ref().ok_or(HeatctlFailure::Null("ensemble"))?.inner;
        if len != e.t.len() {
            return Err(HeatctlFailure::Arg(format!(
                "buffer holds {len}, ensemble has {}",
                e.t.len()
            )));
        }
        for (dst, src) in [(t, &e.t), (mean_norm_sq, &e.mean_norm_sq), (se, &e.se)] {
            if !dst.is_null() {
                std::slice::from_raw_parts_mut(dst, len).copy_from_slice(src);
            }
        }
        Ok(())
    })
}

/// Checks the ensemble against the certified bound of its scenario.
#[no_mangle]
pub unsafe extern "C" fn heatctl_ensemble_check(
    h: *const HeatctlEnsemble,
    out: *mut HeatctlBoundReport,
) -> HeatctlStatus {
    guard(|| {
        let e = h.as_ref().ok_or(HeatctlFailure::Null("ensemble"))?;
        let out = out.as_mut().ok_or(HeatctlFailure::Null("out"))?;
        let r = check_bound(&e.inner, e.bound.clone());
        *out = HeatctlBoundReport {
            prefactor: r.bound.map_or(f64::NAN, |b| b.prefactor),
            rate: r.bound.map_or(f64::NAN, |b| b.rate),
            max_margin: r.max_margin,
            as_fraction: r.as_fraction,
            verdict: match r.verdict {
                Verdict::Pass => HeatctlVerdict::Pass,
                Verdict::Fail => HeatctlVerdict::Fail,
                Verdict::Uncertified => HeatctlVerdict::Uncertified,
                Verdict::NotApplicable => HeatctlVerdict::NotApplicable,
            },
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn heatctl_ensemble_free(h: *mut HeatctlEnsemble) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_statuses() {
        assert_eq!(status_of(&Error::Io("x".into())), HeatctlStatus::Io);
        assert_eq!(
            status_of(&Error::NotPositiveDefinite),
            HeatctlStatus::Certification
        );
        assert_eq!(
            status_of(&Error::NumericalAbort {
                step: 1,
                what: "nan".into()
            }),
            HeatctlStatus::Numerical
        );
    }

    #[test]
    fn panics_become_a_status() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, HeatctlStatus::Panic);
        let msg = unsafe { CStr::from_ptr(heatctl_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }

    #[test]
    fn error_text_survives_interior_nul() {
        set_error("a\0b".into());
        let msg = unsafe { CStr::from_ptr(heatctl_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "a b");
    }
}
