//! Gain certification for the coupled measurement/observer-error system.
//!
//! The averaged measurement `Z` and the observer error `η` obey the linear
//! Itô system `d(Z, η) = M(Z, η)dt + σ(Z, LZ)dB` with
//!
//! ```text
//! M = [ −(c+π²)   C    ]
//!     [    0    A + LC ]
//! ```
//!
//! Everything here follows from the Lyapunov solution `MᵀQ + QM = −I`:
//! the noise gain `μ_c = [1; L]ᵀ Q [1; L]`, the admissible noise level
//! `min{1/√μ_c, √(2(c−1)/3)}`, the decay rates and the bound constants.

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

pub const HURWITZ_MARGIN: f64 = 1e-9;
pub const LYAPUNOV_TOLERANCE: f64 = 1e-10;
pub const OBSERVABILITY_RTOL: f64 = 1e-10;
pub const DEFAULT_THETA_FRAC: f64 = 0.9;

/// Plant and observer data needed for certification.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub c: f64,
    pub sigma: f64,
    /// Exogenous generator, n×n.
    pub a: DMatrix<f64>,
    /// Output row, 1×n.
    pub c_row: DMatrix<f64>,
    /// Observer gain, n×1.
    pub l_col: DMatrix<f64>,
}

impl PlantSpec {
    pub fn exo_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn check_dims(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n || self.c_row.shape() != (1, n) || self.l_col.shape() != (n, 1) {
            return Err(Error::Dimension(format!(
                "A {:?}, C {:?}, L {:?}",
                self.a.shape(),
                self.c_row.shape(),
                self.l_col.shape()
            )));
        }
        Ok(())
    }

    /// `A + LC`.
    pub fn observer_matrix(&self) -> DMatrix<f64> {
        &self.a + &self.l_col * &self.c_row
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gammas {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma: f64,
    pub gamma_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainCertificate {
    pub spec: PlantSpec,
    pub m: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub q_residual: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub mu_c: f64,
    pub sigma_max: f64,
    /// `(1 − μ_c σ²)/λ_max(Q)`.
    pub rate_ze: f64,
    /// `2c − 2 − 3σ²`.
    pub rate_beta: f64,
    pub theta_star: f64,
    pub theta_frac: f64,
    /// True when the two rates coincide and `theta_frac` picked the rate.
    pub degenerate: bool,
    pub gammas: Option<Gammas>,
}

pub fn build_m(
    c: f64,
    a: &DMatrix<f64>,
    l: &DMatrix<f64>,
    c_row: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || l.shape() != (n, 1) || c_row.shape() != (1, n) {
        return Err(Error::Dimension(format!(
            "A {:?}, L {:?}, C {:?}",
            a.shape(),
            l.shape(),
            c_row.shape()
        )));
    }
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m[(0, 0)] = -(c + PI * PI);
    let obs = a + l * c_row;
    for j in 0..n {
        m[(0, j + 1)] = c_row[(0, j)];
        for i in 0..n {
            m[(i + 1, j + 1)] = obs[(i, j)];
        }
    }
    Ok(m)
}

/// Largest real part over the spectrum (−∞ for an empty matrix).
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    m.complex_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |acc, z| acc.max(z.re))
}

pub fn check_hurwitz(m: &DMatrix<f64>) -> Result<()> {
    let max_real = spectral_abscissa(m);
    if !(max_real < -HURWITZ_MARGIN) {
        return Err(Error::NotHurwitz { max_real });
    }
    Ok(())
}

pub fn lyapunov_residual(m: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let r = m.transpose() * q + q * m + DMatrix::identity(m.nrows(), m.nrows());
    r.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Solve `MᵀQ + QM = −I` through the vectorized system
/// `(I ⊗ Mᵀ + Mᵀ ⊗ I) vec(Q) = −vec(I)`.
pub fn lyapunov_solve(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n || n == 0 {
        return Err(Error::Dimension(format!(
            "M must be square and nonempty, got {:?}",
            m.shape()
        )));
    }
    check_hurwitz(m)?;
    let id = DMatrix::<f64>::identity(n, n);
    let mt = m.transpose();
    let big = id.kronecker(&mt) + mt.kronecker(&id);
    let rhs = nalgebra::DVector::from_iterator(n * n, (-&id).iter().copied());
    let sol = big
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularPivot { row: 0 })?;
    let raw = DMatrix::from_column_slice(n, n, sol.as_slice());
    let q = (&raw + raw.transpose()) * 0.5;
    let residual = lyapunov_residual(m, &q);
    let scale = 1.0_f64.max(m.amax() * q.amax());
    if !(residual <= LYAPUNOV_TOLERANCE * scale) {
        return Err(Error::LyapunovResidual { residual });
    }
    if q.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(q)
}

fn sym_extremes(q: &DMatrix<f64>) -> (f64, f64) {
    let ev = q.clone().symmetric_eigenvalues();
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn eigen_extremes(q: &DMatrix<f64>) -> (f64, f64) {
    sym_extremes(q)
}

/// `μ = λ_max(PᵀQP)` with `P = [[1, 0], [L, 0]]`, cross-checked against the
/// block expansion `Q₁ + Q₂L + LᵀQ₃ + LᵀQ₄L`.
pub fn mu_from_q(q: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<f64> {
    let n = l.nrows();
    if q.shape() != (n + 1, n + 1) || l.ncols() != 1 {
        return Err(Error::Dimension(format!(
            "Q {:?} with L {:?}",
            q.shape(),
            l.shape()
        )));
    }
    if q.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }

    let mut p = DMatrix::zeros(n + 1, n + 1);
    p[(0, 0)] = 1.0;
    for i in 0..n {
        p[(i + 1, 0)] = l[(i, 0)];
    }
    let sandwich = p.transpose() * q * &p;
    let sandwich = (&sandwich + sandwich.transpose()) * 0.5;
    let (_, via_eigen) = sym_extremes(&sandwich);

    let q1 = q[(0, 0)];
    let q2 = q.view((0, 1), (1, n));
    let q3 = q.view((1, 0), (n, 1));
    let q4 = q.view((1, 1), (n, n));
    let expansion =
        q1 + (q2 * l)[(0, 0)] + (l.transpose() * q3)[(0, 0)] + (l.transpose() * q4 * l)[(0, 0)];

    if (via_eigen - expansion).abs() > 1e-10 * 1.0_f64.max(expansion.abs()) {
        return Err(Error::InvalidArgument {
            arg: "Q",
            reason: format!("eigenvalue path {via_eigen} disagrees with expansion {expansion}"),
        });
    }
    Ok(expansion)
}

/// The scalar `λ* = (l₁ − c − π²)(c + π²) + l₂ − 1` of the two-dimensional
/// harmonic closed form.
pub fn lambda_star_n2(c: f64, l1: f64, l2: f64) -> f64 {
    let cp = c + PI * PI;
    (l1 - cp) * cp + l2 - 1.0
}

/// Closed-form expression for `μ_c` when `A = [[0, 2], [−2, 0]]`, `C = [1, 0]`.
///
/// Diagnostic only: at `(1.02, −5, −1)` it evaluates to about 8.94 while the
/// Lyapunov route gives about 4.36, so it is never used for certification.
pub fn mu_closed_form_n2(c: f64, l1: f64, l2: f64) -> Result<f64> {
    let ls = lambda_star_n2(c, l1, l2);
    if l1 == 0.0 || l2 == 2.0 || ls == 0.0 {
        return Err(Error::invalid(
            "l1, l2",
            "closed form divides by l1, l2 − 2 and λ*",
        ));
    }
    let cp = c + PI * PI;
    let t = l2 - 3.0 + 2.0 * cp / ls;
    Ok(
        1.0 / (2.0 * cp) + (-l1 * cp - l2) / (cp * ls) + t * l1 / 2.0 - l1 * l2 / 2.0
            + (l2 * l2 / ls + l1 * l2 * l2 / 2.0 - t * l2 * l2 / l1) / (l2 - 2.0),
    )
}

/// Numerical rank of the observability stack `[C; CA; …; CA^{n−1}]`.
pub fn observability_rank(a: &DMatrix<f64>, c_row: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    if n == 0 {
        return 0;
    }
    let mut stack = DMatrix::zeros(n, n);
    let mut row = c_row.clone();
    for k in 0..n {
        stack.set_row(k, &row.row(0));
        row = &row * a;
    }
    let sv = stack.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > OBSERVABILITY_RTOL * top).count()
}

/// Certified decay rate from the two component rates. When they coincide
/// (to 1e−12 relative) the rate is `theta_frac·rate_beta` instead.
pub fn select_theta(rate_beta: f64, rate_ze: f64, theta_frac: f64) -> (f64, bool) {
    let scale = rate_beta.abs().max(rate_ze.abs()).max(f64::MIN_POSITIVE);
    if (rate_beta - rate_ze).abs() <= 1e-12 * scale {
        (theta_frac * rate_beta, true)
    } else {
        (rate_beta.min(rate_ze), false)
    }
}

pub fn certify_gains(spec: &PlantSpec, theta_frac: f64) -> Result<GainCertificate> {
    spec.check_dims()?;
    if !(theta_frac > 0.0 && theta_frac < 1.0) {
        return Err(Error::invalid(
            "theta_frac",
            format!("must lie in (0, 1), got {theta_frac}"),
        ));
    }
    if !spec.c.is_finite() || !spec.sigma.is_finite() {
        return Err(Error::invalid("c, sigma", "non-finite"));
    }
    if !(spec.c > 1.0) {
        return Err(Error::DampingTooSmall { c: spec.c });
    }
    let n = spec.exo_dim();
    let rank = observability_rank(&spec.a, &spec.c_row);
    if rank < n {
        return Err(Error::NotObservable { rank, dim: n });
    }
    check_hurwitz(&spec.observer_matrix())?;

    let m = build_m(spec.c, &spec.a, &spec.l_col, &spec.c_row)?;
    let q = lyapunov_solve(&m)?;
    let q_residual = lyapunov_residual(&m, &q);
    let (lambda_min, lambda_max) = sym_extremes(&q);
    let mu_c = mu_from_q(&q, &spec.l_col)?;

    let sigma_max = (1.0 / mu_c.sqrt()).min((2.0 * (spec.c - 1.0) / 3.0).sqrt());
    if !(spec.sigma.abs() < sigma_max) {
        return Err(Error::Uncertified {
            sigma: spec.sigma.abs(),
            sigma_max,
        });
    }
    let s2 = spec.sigma * spec.sigma;
    let rate_ze = (1.0 - mu_c * s2) / lambda_max;
    let rate_beta = 2.0 * spec.c - 2.0 - 3.0 * s2;
    let (theta_star, degenerate) = select_theta(rate_beta, rate_ze, theta_frac);

    Ok(GainCertificate {
        spec: spec.clone(),
        m,
        q,
        q_residual,
        lambda_min,
        lambda_max,
        mu_c,
        sigma_max,
        rate_ze,
        rate_beta,
        theta_star,
        theta_frac,
        degenerate,
        gammas: None,
    })
}

fn norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Constants of the mean-square bound `E‖y‖² ≤ Γ*·e^{−θ*t}`.
///
/// `e_beta0_sq` is `E∫(z₀ + x²/2·Cη₀)²`; `max_l_sq` is the largest squared
/// inverse-kernel value.
pub fn gamma_constants(
    cert: &GainCertificate,
    e_z0_sq: f64,
    e_eta0_sq: f64,
    e_beta0_sq: f64,
    max_l_sq: f64,
) -> Result<Gammas> {
    for (name, v) in [
        ("EZ0sq", e_z0_sq),
        ("Eeta0sq", e_eta0_sq),
        ("Ebeta0sq", e_beta0_sq),
        ("max_l_sq", max_l_sq),
    ] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument {
                arg: "moments",
                reason: format!("{name} = {v} must be finite and nonnegative"),
            });
        }
    }
    if !(cert.theta_star > 0.0) {
        return Err(Error::invalid("cert", "theta_star must be positive"));
    }
    let spec = &cert.spec;
    let c = spec.c;
    let s2 = spec.sigma * spec.sigma;
    let c_norm = norm(&spec.c_row);
    let cl = if spec.exo_dim() == 0 {
        0.0
    } else {
        (&spec.c_row * &spec.l_col)[(0, 0)]
    };
    let c_obs = norm(&(&spec.c_row * spec.observer_matrix()));

    let first =
        ((1.0 + c / 2.0) * c_norm).powi(2) + (c_obs / 2.0).powi(2) + 0.75 * s2 * c_norm * c_norm;
    let second = 0.75 * s2 * cl * cl;
    let gamma1 = first.max(second);

    let ratio = cert.lambda_max / cert.lambda_min;
    let e0 = e_z0_sq + e_eta0_sq;
    let gamma2 = if cert.degenerate {
        let gap = cert.rate_beta - cert.theta_star;
        e_beta0_sq + gamma1 * ratio * e0 / (E * gap)
    } else {
        e_beta0_sq + gamma1 / (cert.rate_beta - cert.rate_ze).abs() * ratio * e0
    };
    let gamma = 2.0 * gamma2 + 0.5 * c_norm * c_norm * ratio * e0;
    let gamma_star = 2.0 * (1.0 + max_l_sq) * gamma;
    Ok(Gammas {
        gamma1,
        gamma2,
        gamma,
        gamma_star,
    })
}
