//! CSV and report writers. Floats are written in the shortest form that
//! parses back to the same value.

use std::io::Write;

use nalgebra::DMatrix;
use serde_json::json;

use crate::certify::GainCertificate;
use crate::dynamics::CoupledTrajectory;
use crate::error::Result;
use crate::experiments::{BoundReport, Comparison, DecayBound, Ensemble};
use crate::kernel::Kernel;
use crate::spde::Trajectory;

pub fn write_trajectory_csv<W: Write>(tr: &Trajectory, mut out: W) -> Result<()> {
    writeln!(out, "t,norm_sq,y1,Z,w,w_hat,u")?;
    for k in 0..tr.t.len() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            tr.t[k], tr.norm_sq[k], tr.y1[k], tr.z[k], tr.w[k], tr.w_hat[k], tr.u[k]
        )?;
    }
    Ok(())
}

/// Long format: one `t,x,y` row per node and snapshot.
pub fn write_snapshots_csv<W: Write>(snapshots: &[(f64, Vec<f64>)], mut out: W) -> Result<()> {
    writeln!(out, "t,x,y")?;
    for (t, y) in snapshots {
        let h = 1.0 / (y.len().max(2) - 1) as f64;
        for (j, v) in y.iter().enumerate() {
            writeln!(out, "{t},{},{v}", j as f64 * h)?;
        }
    }
    Ok(())
}

pub fn write_coupled_csv<W: Write>(tr: &CoupledTrajectory, mut out: W) -> Result<()> {
    let n = tr.eta.first().map_or(0, Vec::len);
    let mut header = String::from("t,Z");
    for i in 1..=n {
        header.push_str(&format!(",eta_{i}"));
    }
    header.push_str(",w,w_hat");
    writeln!(out, "{header}")?;
    for k in 0..tr.t.len() {
        write!(out, "{},{}", tr.t[k], tr.z[k])?;
        for v in &tr.eta[k] {
            write!(out, ",{v}")?;
        }
        writeln!(out, ",{},{}", tr.w[k], tr.w_hat[k])?;
    }
    Ok(())
}

/// `bound_value` is left empty when no bound applies.
pub fn write_ensemble_csv<W: Write>(
    e: &Ensemble,
    bound: Option<DecayBound>,
    mut out: W,
) -> Result<()> {
    writeln!(out, "t,mean_norm_sq,se,bound_value")?;
    for k in 0..e.t.len() {
        let b = bound.map_or_else(String::new, |b| b.at(e.t[k]).to_string());
        writeln!(out, "{},{},{},{b}", e.t[k], e.mean_norm_sq[k], e.se[k])?;
    }
    Ok(())
}

fn flat(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let r: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
            format!("[{}]", r.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Kernel traces as `key=value` lines.
pub fn kernel_report(k: &Kernel) -> String {
    let last = k.n() - 1;
    let mut s = String::new();
    s.push_str(&format!("n={}\n", k.n()));
    s.push_str(&format!("c={}\n", k.c));
    s.push_str(&format!("sweeps={}\n", k.sweeps));
    s.push_str(&format!("k11={:.5}\n", k.k11));
    s.push_str(&format!("k_max_abs={:.5e}\n", k.grid.max_abs()));
    s.push_str(&format!("k_x1_at_0={:.5}\n", k.kx1_trace[0]));
    s.push_str(&format!("k_x1_at_1={:.5}\n", k.kx1_trace[last]));
    let a_max = k.a_samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = (k.c.abs() + a_max) * k.grid.max_abs();
    let res = k.interior_residual();
    s.push_str(&format!("interior_residual={res:.3e}\n"));
    if scale > 0.0 {
        s.push_str(&format!("interior_residual_rel={:.3e}\n", res / scale));
    }
    s
}

/// The certificate as flat `key=value` lines. Rates and tolerances are
/// printed with five decimals, matrices in full precision.
pub fn certificate_report(cert: &GainCertificate) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| s.push_str(&format!("{k}={v}\n"));
    kv("c", cert.spec.c.to_string());
    kv("sigma", cert.spec.sigma.to_string());
    kv("M", flat(&cert.m));
    kv("Q", flat(&cert.q));
    kv("q_residual", format!("{:.3e}", cert.q_residual));
    kv("lambda_min", format!("{:.5}", cert.lambda_min));
    kv("lambda_max", format!("{:.5}", cert.lambda_max));
    kv("mu_c", format!("{:.5}", cert.mu_c));
    kv("sigma_max", format!("{:.5}", cert.sigma_max));
    kv("rate_ze", format!("{:.5}", cert.rate_ze));
    kv("rate_beta", format!("{:.5}", cert.rate_beta));
    kv("theta_star", format!("{:.5}", cert.theta_star));
    kv("theta_frac", cert.theta_frac.to_string());
    kv("degenerate", cert.degenerate.to_string());
    if let Some(g) = cert.gammas {
        kv("gamma1", format!("{:.5e}", g.gamma1));
        kv("gamma2", format!("{:.5e}", g.gamma2));
        kv("gamma", format!("{:.5e}", g.gamma));
        kv("gamma_star", format!("{:.5e}", g.gamma_star));
    }
    s
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn certificate_json(cert: &GainCertificate) -> String {
    let v = json!({
        "c": cert.spec.c,
        "sigma": cert.spec.sigma,
        "A": rows(&cert.spec.a),
        "C": rows(&cert.spec.c_row),
        "L": rows(&cert.spec.l_col),
        "M": rows(&cert.m),
        "Q": rows(&cert.q),
        "q_residual": cert.q_residual,
        "lambda_min": cert.lambda_min,
        "lambda_max": cert.lambda_max,
        "mu_c": cert.mu_c,
        "sigma_max": cert.sigma_max,
        "rate_ze": cert.rate_ze,
        "rate_beta": cert.rate_beta,
        "theta_star": cert.theta_star,
        "theta_frac": cert.theta_frac,
        "degenerate": cert.degenerate,
        "gammas": cert.gammas,
    });
    serde_json::to_string_pretty(&v).unwrap_or_default() + "\n"
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.5}")
    } else {
        v.to_string()
    }
}

pub fn bound_report(e: &Ensemble, r: &BoundReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("scenario={}\n", e.scenario));
    s.push_str(&format!("mode={}\n", e.mode.name()));
    s.push_str(&format!("paths={}\n", e.paths));
    s.push_str(&format!("master_seed={}\n", e.master_seed));
    s.push_str(&format!("aborted={}\n", e.aborted));
    let last = e.t.len() - 1;
    s.push_str(&format!("mean_norm_sq_0={}\n", e.mean_norm_sq[0]));
    s.push_str(&format!("mean_norm_sq_T={}\n", e.mean_norm_sq[last]));
    s.push_str(&format!("se_T={}\n", e.se[last]));
    if let Some(b) = r.bound {
        s.push_str(&format!("theta_star={}\n", num(b.rate)));
        s.push_str(&format!("gamma_star={:.5e}\n", b.prefactor));
    }
    s.push_str(&format!("max_margin={}\n", num(r.max_margin)));
    s.push_str(&format!("as_fraction={}\n", num(r.as_fraction)));
    s.push_str(&format!("verdict={}\n", r.verdict.name()));
    if let Some(reason) = &r.reason {
        s.push_str(&format!("reason={reason}\n"));
    }
    s
}

pub fn comparison_report(c: &Comparison) -> String {
    format!(
        "paths={}\nmaster_seed={}\nopen_growth_t1={}\nclosed_ratio_T={}\nopen_aborted={}\nclosed_aborted={}\n",
        c.closed.paths,
        c.closed.master_seed,
        num(c.open_growth),
        num(c.closed_ratio),
        c.open.aborted,
        c.closed.aborted
    )
}
