//! Finite-dimensional pieces of the closed loop: Brownian increments, the
//! exogenous signal, the disturbance observer, the scalar `Z` equation and
//! the coupled `(Z, η)` error system.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::certify::{build_m, PlantSpec};
use crate::error::{Error, Result};

/// Decay rate of the test-function projection, `π²` for `cos(πx)`.
pub const PI_SQ: f64 = std::f64::consts::PI * std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub seed: u64,
    /// Stream index within the seed; ensemble path `i` uses stream `i`.
    pub stream: u64,
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl BrownianPath {
    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    /// `B(t_k)` for `k = 0..=steps`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.increments.len() + 1);
        let mut b = 0.0;
        out.push(b);
        for d in &self.increments {
            b += d;
            out.push(b);
        }
        out
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(
            "dt",
            format!("must be positive and finite, got {dt}"),
        ));
    }
    Ok(())
}

/// Increments for stream `stream` of `seed`. ChaCha streams are independent,
/// so path `i` of an ensemble does not depend on how many paths run or in
/// which order.
pub fn brownian_stream(seed: u64, stream: u64, dt: f64, steps: usize) -> Result<BrownianPath> {
    check_dt(dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let scale = dt.sqrt();
    let increments = (0..steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect();
    Ok(BrownianPath {
        seed,
        stream,
        dt,
        increments,
    })
}

pub fn brownian_path(seed: u64, dt: f64, steps: usize) -> Result<BrownianPath> {
    brownian_stream(seed, 0, dt, steps)
}

/// Exact one-step propagator `e^{A·dt}` of the exogenous system.
#[derive(Debug, Clone)]
pub struct ExoPropagator {
    n: usize,
    step: Vec<f64>,
    c_row: Vec<f64>,
}

impl ExoPropagator {
    pub fn new(a: &DMatrix<f64>, c_row: &DMatrix<f64>, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let n = a.nrows();
        if a.ncols() != n || c_row.nrows() != 1 || c_row.ncols() != n {
            return Err(Error::Dimension(format!(
                "A is {}x{}, C is {}x{}",
                a.nrows(),
                a.ncols(),
                c_row.nrows(),
                c_row.ncols()
            )));
        }
        let e = (a * dt).exp();
        Ok(Self {
            n,
            step: row_major(&e),
            c_row: c_row.iter().copied().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn advance(&self, xi: &mut [f64], scratch: &mut [f64]) {
        matvec(&self.step, xi, scratch);
        xi.copy_from_slice(scratch);
    }

    #[inline]
    pub fn output(&self, xi: &[f64]) -> f64 {
        dot(&self.c_row, xi)
    }
}

/// `ξ_k` for `k = 0..=steps` and `w_k = Cξ_k`.
pub fn exo_series(
    xi0: &DVector<f64>,
    dt: f64,
    steps: usize,
    a: &DMatrix<f64>,
    c_row: &DMatrix<f64>,
) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
    let prop = ExoPropagator::new(a, c_row, dt)?;
    if xi0.len() != prop.n {
        return Err(Error::Dimension(format!(
            "xi0 has length {}, A is {}x{}",
            xi0.len(),
            prop.n,
            prop.n
        )));
    }
    let mut xi: Vec<f64> = xi0.iter().copied().collect();
    let mut scratch = vec![0.0; prop.n];
    let mut states = Vec::with_capacity(steps + 1);
    let mut w = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        states.push(DVector::from_column_slice(&xi));
        w.push(prop.output(&xi));
        if k < steps {
            prop.advance(&mut xi, &mut scratch);
        }
    }
    Ok((states, w))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub theta: DVector<f64>,
    pub xi_hat: DVector<f64>,
    pub w_hat: f64,
}

impl ObserverState {
    /// State with `ξ̂ = ϑ + L·Z` and `ŵ = C·ξ̂` filled in.
    pub fn new(theta: DVector<f64>, z: f64, spec: &PlantSpec) -> Self {
        let xi_hat = &theta + spec.l_col.column(0) * z;
        let w_hat = (&spec.c_row * &xi_hat)[(0, 0)];
        Self {
            theta,
            xi_hat,
            w_hat,
        }
    }
}

/// Zero-order-hold propagators of the observer: with `Z` and `u0` frozen
/// over a step, `ϑ⁺ = Φϑ + (Ψb)Z + (ΨL)u0`.
#[derive(Debug, Clone)]
pub struct ObserverPropagators {
    n: usize,
    phi: Vec<f64>,
    psi_b: Vec<f64>,
    psi_l: Vec<f64>,
    l: Vec<f64>,
    c_row: Vec<f64>,
}

impl ObserverPropagators {
    pub fn new(spec: &PlantSpec, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        spec.check_dims()?;
        let n = spec.exo_dim();
        let f = spec.observer_matrix();
        // exp([[F, I], [0, 0]]·dt) = [[Φ, Ψ], [0, I]]
        let mut aug = DMatrix::zeros(2 * n, 2 * n);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&f * dt));
        for i in 0..n {
            aug[(i, n + i)] = dt;
        }
        let e = aug.exp();
        let phi = e.view((0, 0), (n, n)).into_owned();
        let psi = e.view((0, n), (n, n)).into_owned();
        let l = &spec.l_col;
        let b = &f * l + l * (spec.c + PI_SQ);
        Ok(Self {
            n,
            phi: row_major(&phi),
            psi_b: (&psi * b).iter().copied().collect(),
            psi_l: (&psi * l).iter().copied().collect(),
            l: l.iter().copied().collect(),
            c_row: spec.c_row.iter().copied().collect(),
        })
    }

    pub fn phi(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.phi)
    }

    #[inline]
    pub(crate) fn advance(&self, theta: &mut [f64], z: f64, u0: f64, scratch: &mut [f64]) {
        matvec(&self.phi, theta, scratch);
        for i in 0..self.n {
            theta[i] = scratch[i] + self.psi_b[i] * z + self.psi_l[i] * u0;
        }
    }

    /// `ϑ + LZ − ξ`.
    #[inline]
    pub(crate) fn error(&self, theta: &[f64], z: f64, xi: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| theta[i] + self.l[i] * z - xi[i])
            .collect()
    }

    /// `ŵ = C(ϑ + LZ)`.
    #[inline]
    pub(crate) fn estimate(&self, theta: &[f64], z: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            s += self.c_row[i] * (theta[i] + self.l[i] * z);
        }
        s
    }
}

pub fn observer_step(
    obs: &ObserverState,
    z_now: f64,
    u0: f64,
    z_next: f64,
    props: &ObserverPropagators,
    spec: &PlantSpec,
) -> ObserverState {
    let mut theta: Vec<f64> = obs.theta.iter().copied().collect();
    let mut scratch = vec![0.0; theta.len()];
    props.advance(&mut theta, z_now, u0, &mut scratch);
    ObserverState::new(DVector::from_vec(theta), z_next, spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTrajectory {
    pub t: Vec<f64>,
    pub z: Vec<f64>,
    /// One row per record, `n` entries each.
    pub eta: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub w_hat: Vec<f64>,
}

impl CoupledTrajectory {
    /// `|Z|² + |η|²` per record.
    pub fn energy(&self) -> Vec<f64> {
        self.z
            .iter()
            .zip(&self.eta)
            .map(|(z, e)| z * z + e.iter().map(|v| v * v).sum::<f64>())
            .collect()
    }
}

/// Euler–Maruyama on `d(Z, η) = M(Z, η)dt + σZ(1, L)dB`.
///
/// `xi0` only feeds the reported `w` and `ŵ = w + Cη` columns. Records every
/// `stride` steps and at the final step.
pub fn simulate_coupled(
    z0: f64,
    eta0: &DVector<f64>,
    xi0: &DVector<f64>,
    spec: &PlantSpec,
    path: &BrownianPath,
    stride: usize,
) -> Result<CoupledTrajectory> {
    spec.check_dims()?;
    let n = spec.exo_dim();
    if eta0.len() != n || xi0.len() != n {
        return Err(Error::Dimension(format!(
            "eta0 has length {}, xi0 has length {}, exogenous dimension is {n}",
            eta0.len(),
            xi0.len()
        )));
    }
    if stride == 0 {
        return Err(Error::invalid("stride", "must be at least 1"));
    }
    let dt = path.dt;
    let m = row_major(&build_m(spec.c, &spec.a, &spec.l_col, &spec.c_row)?);
    let l: Vec<f64> = spec.l_col.iter().copied().collect();
    let c_row: Vec<f64> = spec.c_row.iter().copied().collect();
    let exo = ExoPropagator::new(&spec.a, &spec.c_row, dt)?;
    let sigma = spec.sigma;

    let dim = n + 1;
    let mut x = Vec::with_capacity(dim);
    x.push(z0);
    x.extend(eta0.iter());
    let mut xi: Vec<f64> = xi0.iter().copied().collect();
    let mut drift = vec![0.0; dim];
    let mut scratch = vec![0.0; n];

    let steps = path.steps();
    let cap = steps / stride + 2;
    let mut out = CoupledTrajectory {
        t: Vec::with_capacity(cap),
        z: Vec::with_capacity(cap),
        eta: Vec::with_capacity(cap),
        w: Vec::with_capacity(cap),
        w_hat: Vec::with_capacity(cap),
    };
    for k in 0..=steps {
        if k % stride == 0 || k == steps {
            let w = exo.output(&xi);
            out.t.push(k as f64 * dt);
            out.z.push(x[0]);
            out.eta.push(x[1..].to_vec());
            out.w.push(w);
            out.w_hat.push(w + dot(&c_row, &x[1..]));
        }
        if k == steps {
            break;
        }
        let db = path.increments[k];
        matvec(&m, &x, &mut drift);
        let noise = sigma * x[0] * db;
        x[0] += drift[0] * dt + noise;
        for i in 0..n {
            x[1 + i] += drift[1 + i] * dt + l[i] * noise;
        }
        if !x.iter().all(|v| v.is_finite() && v.abs() < 1e150) {
            return Err(Error::NumericalAbort {
                step: k + 1,
                what: "coupled state overflowed".into(),
            });
        }
        exo.advance(&mut xi, &mut scratch);
    }
    Ok(out)
}

/// Euler–Maruyama on `dZ = −[(c+π²)Z + u0 + w]dt + σZ dB`; `Z_k` for
/// `k = 0..=steps` where `steps` is the path length.
pub fn simulate_scalar_z(
    z0: f64,
    u0: &[f64],
    w: &[f64],
    c: f64,
    sigma: f64,
    path: &BrownianPath,
) -> Result<Vec<f64>> {
    let steps = path.steps();
    if u0.len() < steps || w.len() < steps {
        return Err(Error::Dimension(format!(
            "input series have lengths {} and {}, path has {steps} steps",
            u0.len(),
            w.len()
        )));
    }
    let dt = path.dt;
    let rate = c + PI_SQ;
    let mut z = z0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(z);
    for k in 0..steps {
        z += -(rate * z + u0[k] + w[k]) * dt + sigma * z * path.increments[k];
        out.push(z);
    }
    Ok(out)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

#[inline]
fn matvec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&m[i * n..(i + 1) * n], x);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
