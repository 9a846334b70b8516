//! Stochastic heat equation on `[0, 1]` with Neumann actuation at `x = 1`.
//!
//! One step is implicit in the drift and explicit in the noise:
//! `(B − dt·(A_h + B·diag(a − c_shift)))·y⁺ = B·y·(1 + σ·dB) + dt·(2g/h)·e_last`,
//! where `A_h` is the ghost-node second difference divided by `h²` and `B`
//! is the identity (`Central2`) or the fourth-order compact mass stencil
//! (`Compact4`).

use serde::{Deserialize, Serialize};

use crate::dynamics::{dot, BrownianPath, ExoPropagator, ObserverPropagators};
use crate::error::{Error, Result};
use crate::kernel::{apply_forward, transform::quad_weight, Kernel, TransformPair};

/// Magnitude past which a path is treated as diverged.
pub const OVERFLOW_LIMIT: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpatialScheme {
    /// Three-point second difference.
    Central2,
    /// Padé compact second derivative, `(y''_{i−1} + 10y''_i + y''_{i+1})/12`.
    #[default]
    Compact4,
}

impl SpatialScheme {
    pub fn name(self) -> &'static str {
        match self {
            SpatialScheme::Central2 => "central2",
            SpatialScheme::Compact4 => "compact4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "central2" => Some(SpatialScheme::Central2),
            "compact4" => Some(SpatialScheme::Compact4),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub y: Vec<f64>,
    pub t: f64,
}

/// Trapezoid weights on the uniform grid of `[0, 1]`.
pub fn trapezoid_weights(m: usize) -> Vec<f64> {
    let h = 1.0 / (m - 1) as f64;
    (0..m).map(|j| quad_weight(m - 1, j, h)).collect()
}

/// `∫₀¹ y²` by the trapezoid rule.
pub fn l2_norm_sq(y: &[f64]) -> f64 {
    let m = y.len();
    if m < 2 {
        return 0.0;
    }
    let h = 1.0 / (m - 1) as f64;
    let inner: f64 = y[1..m - 1].iter().map(|v| v * v).sum();
    h * (inner + 0.5 * (y[0] * y[0] + y[m - 1] * y[m - 1]))
}

#[derive(Debug, Clone)]
enum Solver {
    /// Thomas factorization of the nodal step matrix.
    Tridiagonal {
        sub: Vec<f64>,
        sup_mod: Vec<f64>,
        inv_den: Vec<f64>,
        rhs: Vec<f64>,
    },
    /// Constant `a`: the ghost-node operator and the mass stencil are both
    /// diagonal in the basis `cos(kπx_j)`, which is orthogonal under the
    /// trapezoid weights. The state is the coefficient vector.
    Modal {
        /// `basis[j·m + k] = cos(kπx_j)`.
        basis: Vec<f64>,
        /// `Σ_j W_j cos²(kπx_j)`.
        gram: Vec<f64>,
        beta: Vec<f64>,
        inv_den: Vec<f64>,
        /// Coefficients of `(2/h)·e_last`.
        flux: Vec<f64>,
    },
}

/// Step operator for fixed `(a, c_shift, dt)`.
///
/// The field state passed to [`FieldOperator::step`] lives in operator
/// coordinates: nodal values for a variable coefficient, cosine
/// coefficients for a constant one. Both represent the same discrete scheme;
/// the modal form keeps modes that are exactly zero at zero, which matters
/// when `a` makes low modes grow like `e^{40t}` and round-off would seed
/// them. Convert with [`FieldOperator::encode`] and
/// [`FieldOperator::decode`].
#[derive(Debug, Clone)]
pub struct FieldOperator {
    m: usize,
    h: f64,
    dt: f64,
    scheme: SpatialScheme,
    solver: Solver,
}

fn check_operator_inputs(a: &[f64], c_shift: f64, dt: f64) -> Result<()> {
    if a.len() < 3 {
        return Err(Error::invalid(
            "nodes",
            format!("need at least 3 nodes, got {}", a.len()),
        ));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(
            "dt",
            format!("must be positive and finite, got {dt}"),
        ));
    }
    if !a.iter().all(|v| v.is_finite()) || !c_shift.is_finite() {
        return Err(Error::invalid("a", "coefficients must be finite"));
    }
    Ok(())
}

/// `cos(kπ·j/n)` with the argument reduced mod `2n` first.
fn grid_cos(k: usize, j: usize, n: usize) -> f64 {
    let r = (k * j) % (2 * n);
    (std::f64::consts::PI * r as f64 / n as f64).cos()
}

impl FieldOperator {
    /// Modal when `a` is constant, tridiagonal otherwise.
    pub fn new(a: &[f64], c_shift: f64, dt: f64, scheme: SpatialScheme) -> Result<Self> {
        check_operator_inputs(a, c_shift, dt)?;
        if a.iter().all(|v| *v == a[0]) {
            Self::modal(a.len(), a[0], c_shift, dt, scheme)
        } else {
            Self::tridiagonal(a, c_shift, dt, scheme)
        }
    }

    pub fn tridiagonal(a: &[f64], c_shift: f64, dt: f64, scheme: SpatialScheme) -> Result<Self> {
        check_operator_inputs(a, c_shift, dt)?;
        let m = a.len();
        let h = 1.0 / (m - 1) as f64;
        let r = dt / (h * h);

        // Mass stencil B and stiffness A_h·h² per row, as (sub, diag, sup).
        let mass = |i: usize| -> (f64, f64, f64) {
            match scheme {
                SpatialScheme::Central2 => (0.0, 1.0, 0.0),
                SpatialScheme::Compact4 => {
                    if i == 0 {
                        (0.0, 10.0 / 12.0, 2.0 / 12.0)
                    } else if i == m - 1 {
                        (2.0 / 12.0, 10.0 / 12.0, 0.0)
                    } else {
                        (1.0 / 12.0, 10.0 / 12.0, 1.0 / 12.0)
                    }
                }
            }
        };
        let stiff = |i: usize| -> (f64, f64, f64) {
            if i == 0 {
                (0.0, -2.0, 2.0)
            } else if i == m - 1 {
                (2.0, -2.0, 0.0)
            } else {
                (1.0, -2.0, 1.0)
            }
        };
        let react = |j: usize| 1.0 - dt * (a[j] - c_shift);

        let mut sub = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut sup = vec![0.0; m];
        for i in 0..m {
            let (bl, bd, bu) = mass(i);
            let (sl, sd, su) = stiff(i);
            diag[i] = bd * react(i) - r * sd;
            if i > 0 {
                sub[i] = bl * react(i - 1) - r * sl;
            }
            if i + 1 < m {
                sup[i] = bu * react(i + 1) - r * su;
            }
        }

        let mut sup_mod = vec![0.0; m];
        let mut inv_den = vec![0.0; m];
        let mut prev = 0.0;
        for i in 0..m {
            let den = diag[i] - sub[i] * prev;
            if !(den.abs() > 1e-300) || !den.is_finite() {
                return Err(Error::SingularPivot { row: i });
            }
            inv_den[i] = 1.0 / den;
            sup_mod[i] = sup[i] * inv_den[i];
            prev = sup_mod[i];
        }
        Ok(Self {
            m,
            h,
            dt,
            scheme,
            solver: Solver::Tridiagonal {
                sub,
                sup_mod,
                inv_den,
                rhs: vec![0.0; m],
            },
        })
    }

    fn modal(m: usize, a: f64, c_shift: f64, dt: f64, scheme: SpatialScheme) -> Result<Self> {
        let n = m - 1;
        let h = 1.0 / n as f64;
        let mut basis = vec![0.0; m * m];
        for j in 0..m {
            for k in 0..m {
                basis[j * m + k] = grid_cos(k, j, n);
            }
        }
        let gram: Vec<f64> = (0..m)
            .map(|k| if k == 0 || k == n { 1.0 } else { 0.5 })
            .collect();
        let mut beta = vec![1.0; m];
        let mut inv_den = vec![0.0; m];
        let mut flux = vec![0.0; m];
        for k in 0..m {
            let ck = grid_cos(k, 1, n);
            let alpha = 2.0 * (ck - 1.0) / (h * h);
            if scheme == SpatialScheme::Compact4 {
                beta[k] = (10.0 + 2.0 * ck) / 12.0;
            }
            let den = beta[k] * (1.0 - dt * (a - c_shift)) - dt * alpha;
            if !(den.abs() > 1e-300) || !den.is_finite() {
                return Err(Error::SingularPivot { row: k });
            }
            inv_den[k] = 1.0 / den;
            // (2/h)·W_last·cos(kπ)/gram_k with W_last = h/2
            flux[k] = basis[n * m + k] / gram[k];
        }
        Ok(Self {
            m,
            h,
            dt,
            scheme,
            solver: Solver::Modal {
                basis,
                gram,
                beta,
                inv_den,
                flux,
            },
        })
    }

    pub fn nodes(&self) -> usize {
        self.m
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> SpatialScheme {
        self.scheme
    }

    pub fn is_modal(&self) -> bool {
        matches!(self.solver, Solver::Modal { .. })
    }

    /// Nodal values to operator coordinates.
    pub fn encode(&self, y: &[f64]) -> Vec<f64> {
        match &self.solver {
            Solver::Tridiagonal { .. } => y.to_vec(),
            Solver::Modal { basis, gram, .. } => {
                let w = trapezoid_weights(self.m);
                (0..self.m)
                    .map(|k| {
                        let s: f64 = (0..self.m)
                            .map(|j| w[j] * basis[j * self.m + k] * y[j])
                            .sum();
                        s / gram[k]
                    })
                    .collect()
            }
        }
    }

    /// `amp·cos(kπx)` in operator coordinates, exact in the modal case.
    pub fn encode_cosine(&self, k: usize, amp: f64) -> Vec<f64> {
        match &self.solver {
            Solver::Modal { .. } if k < self.m => {
                let mut c = vec![0.0; self.m];
                c[k] = amp;
                c
            }
            _ => {
                let n = self.m - 1;
                let y: Vec<f64> = (0..self.m).map(|j| amp * grid_cos(k, j, n)).collect();
                self.encode(&y)
            }
        }
    }

    pub fn decode(&self, state: &[f64]) -> Vec<f64> {
        match &self.solver {
            Solver::Tridiagonal { .. } => state.to_vec(),
            Solver::Modal { basis, .. } => (0..self.m)
                .map(|j| dot(&basis[j * self.m..(j + 1) * self.m], state))
                .collect(),
        }
    }

    /// Weights `u` with `u·state = v·y` for the nodal functional `v`.
    pub fn functional(&self, v: &[f64]) -> Vec<f64> {
        match &self.solver {
            Solver::Tridiagonal { .. } => v.to_vec(),
            Solver::Modal { basis, .. } => {
                let mut out = vec![0.0; self.m];
                for (j, vj) in v.iter().enumerate() {
                    for (o, b) in out.iter_mut().zip(&basis[j * self.m..(j + 1) * self.m]) {
                        *o += b * vj;
                    }
                }
                out
            }
        }
    }

    /// Trapezoid `∫y²` of the represented field.
    pub fn norm_sq(&self, state: &[f64]) -> f64 {
        match &self.solver {
            Solver::Tridiagonal { .. } => l2_norm_sq(state),
            Solver::Modal { gram, .. } => gram.iter().zip(state).map(|(g, c)| g * c * c).sum(),
        }
    }

    /// Advances `state` with boundary flux `g` and noise factor `σ·dB`.
    pub fn step(&mut self, state: &mut [f64], g: f64, sigma_db: f64) {
        let m = self.m;
        debug_assert_eq!(state.len(), m);
        let s = 1.0 + sigma_db;
        match &mut self.solver {
            Solver::Modal {
                beta,
                inv_den,
                flux,
                ..
            } => {
                let f = self.dt * g;
                for k in 0..m {
                    state[k] = (beta[k] * s * state[k] + f * flux[k]) * inv_den[k];
                }
            }
            Solver::Tridiagonal {
                sub,
                sup_mod,
                inv_den,
                rhs,
            } => {
                let y = state;
                match self.scheme {
                    SpatialScheme::Central2 => {
                        for (r, v) in rhs.iter_mut().zip(y.iter()) {
                            *r = s * v;
                        }
                    }
                    SpatialScheme::Compact4 => {
                        let k = s / 12.0;
                        rhs[0] = k * (10.0 * y[0] + 2.0 * y[1]);
                        for i in 1..m - 1 {
                            rhs[i] = k * (y[i - 1] + 10.0 * y[i] + y[i + 1]);
                        }
                        rhs[m - 1] = k * (2.0 * y[m - 2] + 10.0 * y[m - 1]);
                    }
                }
                rhs[m - 1] += self.dt * 2.0 * g / self.h;

                let mut prev = 0.0;
                for i in 0..m {
                    prev = (rhs[i] - sub[i] * prev) * inv_den[i];
                    y[i] = prev;
                }
                for i in (0..m - 1).rev() {
                    y[i] -= sup_mod[i] * y[i + 1];
                }
            }
        }
    }
}

/// One field step. Builds and factors the operator on every call; the
/// simulators keep a [`FieldOperator`] instead.
#[allow(clippy::too_many_arguments)]
pub fn step_field(
    state: &FieldState,
    g: f64,
    a: &[f64],
    c_shift: f64,
    sigma: f64,
    db: f64,
    dt: f64,
    scheme: SpatialScheme,
) -> Result<FieldState> {
    if a.len() != state.y.len() {
        return Err(Error::Dimension(format!(
            "field has {} nodes, coefficient has {}",
            state.y.len(),
            a.len()
        )));
    }
    if !db.is_finite() || !g.is_finite() {
        return Err(Error::invalid("dB, g", "must be finite"));
    }
    let mut op = FieldOperator::tridiagonal(a, c_shift, dt, scheme)?;
    let mut y = state.y.clone();
    op.step(&mut y, g, sigma * db);
    Ok(FieldState { y, t: state.t + dt })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurements {
    pub y1: f64,
    pub z: f64,
    pub avg_kx: f64,
}

/// Linear functionals behind [`measure`], folded into two weight vectors:
/// `Z = v_z·y` with `v_z = Tᵀ(W·cos πx)` and `avg_kx = v_k·y` with
/// `v_k = W·k_x(1, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensors {
    v_last: Vec<f64>,
    v_z: Vec<f64>,
    v_k: Vec<f64>,
}

impl Sensors {
    pub fn new(kernel: &Kernel, tp: &TransformPair) -> Result<Self> {
        let m = kernel.n();
        if tp.n() != m {
            return Err(Error::Dimension(format!(
                "kernel has {m} nodes, transform has {}",
                tp.n()
            )));
        }
        let w = trapezoid_weights(m);
        let h = kernel.h();
        let wc: Vec<f64> = (0..m)
            .map(|j| w[j] * (std::f64::consts::PI * j as f64 * h).cos())
            .collect();
        let mut v_last = vec![0.0; m];
        v_last[m - 1] = 1.0;
        Ok(Self {
            v_last,
            v_z: tp.transpose_apply(&wc)?,
            v_k: w
                .iter()
                .zip(&kernel.kx1_trace)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    /// The same functionals acting on `op`'s coordinates.
    pub fn for_operator(&self, op: &FieldOperator) -> Self {
        Self {
            v_last: op.functional(&self.v_last),
            v_z: op.functional(&self.v_z),
            v_k: op.functional(&self.v_k),
        }
    }

    #[inline]
    pub fn read(&self, state: &[f64]) -> Measurements {
        Measurements {
            y1: dot(&self.v_last, state),
            z: dot(&self.v_z, state),
            avg_kx: dot(&self.v_k, state),
        }
    }
}

/// `y(1)`, `Z = ∫cos(πx)·(Ty)` and `∫k_x(1, ζ)y(ζ)dζ`, all by trapezoid.
pub fn measure(y: &[f64], kernel: &Kernel, tp: &TransformPair) -> Result<Measurements> {
    let m = y.len();
    if kernel.n() != m || tp.n() != m {
        return Err(Error::Dimension(format!(
            "field has {m} nodes, kernel {} and transform {}",
            kernel.n(),
            tp.n()
        )));
    }
    let z = apply_forward(tp, y)?;
    let w = trapezoid_weights(m);
    let h = kernel.h();
    let mut zq = 0.0;
    let mut avg = 0.0;
    for j in 0..m {
        zq += w[j] * (std::f64::consts::PI * j as f64 * h).cos() * z[j];
        avg += w[j] * kernel.kx1_trace[j] * y[j];
    }
    Ok(Measurements {
        y1: y[m - 1],
        z: zq,
        avg_kx: avg,
    })
}

#[inline]
pub fn dobc_control(y1: f64, avg_kx: f64, k11: f64, w_hat: f64) -> f64 {
    k11 * y1 + avg_kx - w_hat
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub norm_sq: Vec<f64>,
    pub y1: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub w_hat: Vec<f64>,
    pub u: Vec<f64>,
    /// Observer error `η = ξ̂ − ξ` per record; closed loop only.
    pub eta: Vec<Vec<f64>>,
    /// `(t, y)` pairs at the snapshot stride.
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

impl Trajectory {
    fn with_capacity(n: usize) -> Self {
        Self {
            t: Vec::with_capacity(n),
            norm_sq: Vec::with_capacity(n),
            y1: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            w: Vec::with_capacity(n),
            w_hat: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            eta: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(&mut self, t: f64, norm_sq: f64, y1: f64, z: f64, w: f64, w_hat: f64, u: f64) {
        self.t.push(t);
        self.norm_sq.push(norm_sq);
        self.y1.push(y1);
        self.z.push(z);
        self.w.push(w);
        self.w_hat.push(w_hat);
        self.u.push(u);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Recording options shared by the simulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recording {
    /// Scalar records every `stride` steps (and always at the final step).
    pub stride: usize,
    /// Field snapshots every this many steps, if set.
    pub snapshots: Option<usize>,
}

impl Default for Recording {
    fn default() -> Self {
        Self {
            stride: 1,
            snapshots: None,
        }
    }
}

impl Recording {
    fn check(&self) -> Result<()> {
        if self.stride == 0 || self.snapshots == Some(0) {
            return Err(Error::invalid("stride", "must be at least 1"));
        }
        Ok(())
    }

    #[inline]
    fn scalar_due(&self, k: usize, steps: usize) -> bool {
        k % self.stride == 0 || k == steps
    }

    #[inline]
    fn snapshot_due(&self, k: usize, steps: usize) -> bool {
        matches!(self.snapshots, Some(s) if k % s == 0 || k == steps)
    }
}

fn check_field(y: &[f64], step: usize) -> Result<()> {
    for v in y {
        if !v.is_finite() || v.abs() > OVERFLOW_LIMIT {
            return Err(Error::NumericalAbort {
                step,
                what: format!("field value {v} is not finite or exceeds {OVERFLOW_LIMIT:e}"),
            });
        }
    }
    Ok(())
}

/// Everything the closed loop needs that does not change between paths.
/// `sensors` must act on `operator`'s coordinates (see
/// [`Sensors::for_operator`]).
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub operator: FieldOperator,
    pub sensors: Sensors,
    pub exo: ExoPropagator,
    pub observer: ObserverPropagators,
    pub k11: f64,
    pub sigma: f64,
}

/// Initial data for one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopInit<'a> {
    /// Initial field in operator coordinates.
    pub field: &'a [f64],
    pub xi0: &'a [f64],
    pub theta0: &'a [f64],
}

impl ClosedLoop {
    /// Runs one path. `dt` and `σ` are those the context was built with;
    /// the path must use the same `dt`.
    pub fn run(
        &mut self,
        init: &ClosedLoopInit<'_>,
        path: &BrownianPath,
        rec: Recording,
    ) -> Result<Trajectory> {
        rec.check()?;
        let m = self.operator.nodes();
        let n = self.exo.dim();
        if init.field.len() != m || init.xi0.len() != n || init.theta0.len() != n {
            return Err(Error::Dimension(format!(
                "initial data sizes ({}, {}, {}) do not match ({m}, {n}, {n})",
                init.field.len(),
                init.xi0.len(),
                init.theta0.len()
            )));
        }
        check_path_dt(path, self.operator.dt())?;
        let steps = path.steps();
        let mut y = init.field.to_vec();
        let mut xi = init.xi0.to_vec();
        let mut theta = init.theta0.to_vec();
        let mut scratch = vec![0.0; n];
        let mut out = Trajectory::with_capacity(steps / rec.stride + 2);
        let dt = self.operator.dt();

        for k in 0..=steps {
            let meas = self.sensors.read(&y);
            let w = self.exo.output(&xi);
            let w_hat = self.observer.estimate(&theta, meas.z);
            let u = dobc_control(meas.y1, meas.avg_kx, self.k11, w_hat);
            let t = k as f64 * dt;
            if rec.scalar_due(k, steps) {
                out.push(t, self.operator.norm_sq(&y), meas.y1, meas.z, w, w_hat, u);
                out.eta.push(self.observer.error(&theta, meas.z, &xi));
            }
            if rec.snapshot_due(k, steps) {
                out.snapshots.push((t, self.operator.decode(&y)));
            }
            if k == steps {
                break;
            }
            self.operator
                .step(&mut y, u + w, self.sigma * path.increments[k]);
            check_field(&y, k + 1)?;
            self.observer
                .advance(&mut theta, meas.z, -w_hat, &mut scratch);
            self.exo.advance(&mut xi, &mut scratch);
        }
        Ok(out)
    }
}

fn check_path_dt(path: &BrownianPath, dt: f64) -> Result<()> {
    if (path.dt - dt).abs() > 1e-12 * dt {
        return Err(Error::invalid(
            "path",
            format!("path dt {} differs from simulation dt {dt}", path.dt),
        ));
    }
    Ok(())
}

/// Uncontrolled plant: `g = w` with `w` from the exogenous system (zero when
/// `xi0 = 0`). `Z`, `ŵ` and `u` are recorded as zero. `y0` is in operator
/// coordinates.
pub fn simulate_open_loop(
    operator: &mut FieldOperator,
    sigma: f64,
    y0: &[f64],
    exo: Option<(&ExoPropagator, &[f64])>,
    path: &BrownianPath,
    rec: Recording,
) -> Result<Trajectory> {
    rec.check()?;
    if y0.len() != operator.nodes() {
        return Err(Error::Dimension(format!(
            "y0 has {} nodes, operator has {}",
            y0.len(),
            operator.nodes()
        )));
    }
    check_path_dt(path, operator.dt())?;
    let mut xi = exo.map(|(_, x)| x.to_vec()).unwrap_or_default();
    let mut scratch = vec![0.0; xi.len()];
    let steps = path.steps();
    let dt = operator.dt();
    let mut last = vec![0.0; y0.len()];
    last[y0.len() - 1] = 1.0;
    let last = operator.functional(&last);
    let mut y = y0.to_vec();
    let mut out = Trajectory::with_capacity(steps / rec.stride + 2);
    for k in 0..=steps {
        let w = exo.map_or(0.0, |(p, _)| p.output(&xi));
        let t = k as f64 * dt;
        if rec.scalar_due(k, steps) {
            out.push(t, operator.norm_sq(&y), dot(&last, &y), 0.0, w, 0.0, 0.0);
        }
        if rec.snapshot_due(k, steps) {
            out.snapshots.push((t, operator.decode(&y)));
        }
        if k == steps {
            break;
        }
        operator.step(&mut y, w, sigma * path.increments[k]);
        check_field(&y, k + 1)?;
        if let Some((p, _)) = exo {
            p.advance(&mut xi, &mut scratch);
        }
    }
    Ok(out)
}

/// Target system `dz = (z_xx − cz)dt + σz dB`, `z_x(0) = 0`, `z_x(1) = w̃`.
/// `operator` must be built with `a ≡ 0` and `c_shift = c`. The `w` column
/// records `w̃`; `Z` is `∫cos(πx)z`. `z0` is in operator coordinates.
pub fn simulate_target(
    operator: &mut FieldOperator,
    sigma: f64,
    z0: &[f64],
    w_tilde: &[f64],
    path: &BrownianPath,
    rec: Recording,
) -> Result<Trajectory> {
    rec.check()?;
    let m = operator.nodes();
    if z0.len() != m {
        return Err(Error::Dimension(format!(
            "z0 has {} nodes, operator has {m}",
            z0.len()
        )));
    }
    let steps = path.steps();
    if w_tilde.len() < steps {
        return Err(Error::Dimension(format!(
            "w_tilde has {} entries, path has {steps} steps",
            w_tilde.len()
        )));
    }
    check_path_dt(path, operator.dt())?;
    let h = 1.0 / (m - 1) as f64;
    let wc: Vec<f64> = trapezoid_weights(m)
        .iter()
        .enumerate()
        .map(|(j, w)| w * (std::f64::consts::PI * j as f64 * h).cos())
        .collect();
    let wc = operator.functional(&wc);
    let mut last = vec![0.0; m];
    last[m - 1] = 1.0;
    let last = operator.functional(&last);
    let dt = operator.dt();
    let mut z = z0.to_vec();
    let mut out = Trajectory::with_capacity(steps / rec.stride + 2);
    for k in 0..=steps {
        let t = k as f64 * dt;
        if rec.scalar_due(k, steps) {
            let wt = w_tilde.get(k).copied().unwrap_or(0.0);
            out.push(
                t,
                operator.norm_sq(&z),
                dot(&last, &z),
                dot(&wc, &z),
                wt,
                0.0,
                0.0,
            );
        }
        if rec.snapshot_due(k, steps) {
            out.snapshots.push((t, operator.decode(&z)));
        }
        if k == steps {
            break;
        }
        operator.step(&mut z, w_tilde[k], sigma * path.increments[k]);
        check_field(&z, k + 1)?;
    }
    Ok(out)
}
