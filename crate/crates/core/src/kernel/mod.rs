//! Backstepping kernel on the triangle `0 ≤ ζ ≤ x ≤ 1`.
//!
//! The kernel solves
//!
//! ```text
//! k_xx − k_ζζ = (c + a(ζ)) k,   k_ζ(x, 0) = 0,   k(x, x) = −½ ∫₀ˣ (a + c)
//! ```
//!
//! In characteristic coordinates `ξ = x + ζ`, `η = x − ζ` the problem is the
//! integral equation
//!
//! ```text
//! G(ξ, η) = −½F(ξ/2) − ½F(η/2) + ¼ ∫_η^ξ ∫_0^η f G ds dτ + ½ ∫_0^η ∫_0^τ f G ds dτ
//! ```
//!
//! with `f = a + c`, `F = ∫f`, and `f` evaluated at `(τ − s)/2`. It is solved
//! by successive approximation on a characteristic grid of spacing `h`; every
//! node of the `(x, ζ)` grid is a node of that grid, so no interpolation of
//! the solution is needed. All integrals use the trapezoid rule, so the
//! solution is second order in `h`.

mod bessel;
mod cache;
pub(crate) mod transform;

pub use bessel::{bessel_i1, bessel_i1_over_arg, bessel_kernel_value};
pub use cache::{read_kernel_csv, write_kernel_csv};
pub use transform::{apply_forward, apply_inverse, build_transform, TransformPair};

use crate::error::{Error, Result};

/// Successive-change threshold for the fixed-point sweep, relative to `max(1, ‖k‖∞)`.
pub const KERNEL_TOLERANCE: f64 = 1e-12;
pub const KERNEL_MAX_SWEEPS: usize = 2000;

/// Samples on the lower-triangle nodes `(x_i, ζ_j) = (i·h, j·h)`, `j ≤ i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriGrid {
    n: usize,
    h: f64,
    values: Vec<f64>,
}

impl TriGrid {
    pub fn zeros(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(
                "n",
                format!("need at least 3 nodes, got {n}"),
            ));
        }
        Ok(Self {
            n,
            h: 1.0 / (n - 1) as f64,
            values: vec![0.0; n * (n + 1) / 2],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    fn offset(i: usize, j: usize) -> usize {
        i * (i + 1) / 2 + j
    }

    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        if j > i || i >= self.n {
            return Err(Error::OutsideTriangle { i, j });
        }
        Ok(self.values[Self::offset(i, j)])
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        if j > i || i >= self.n {
            return Err(Error::OutsideTriangle { i, j });
        }
        self.values[Self::offset(i, j)] = v;
        Ok(())
    }

    /// Unchecked access for hot loops; `j ≤ i < n` is the caller's job.
    #[inline]
    pub(crate) fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(j <= i && i < self.n);
        self.values[Self::offset(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub grid: TriGrid,
    pub c: f64,
    pub a_samples: Vec<f64>,
    /// `k(x_i, x_i)`.
    pub diag_trace: Vec<f64>,
    /// `k_x(1, ζ_j)`.
    pub kx1_trace: Vec<f64>,
    pub k11: f64,
    pub sweeps: usize,
}

impl Kernel {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    pub fn value(&self, i: usize, j: usize) -> Result<f64> {
        self.grid.get(i, j)
    }

    /// `−½∫₀^{x_i}(a + c)` by the trapezoid rule on the sample grid.
    pub fn diag_closed_form(&self) -> Vec<f64> {
        let h = self.h();
        let mut out = Vec::with_capacity(self.n());
        let mut acc = 0.0;
        out.push(0.0);
        for w in self.a_samples.windows(2) {
            acc += 0.5 * h * (w[0] + w[1] + 2.0 * self.c);
            out.push(-0.5 * acc);
        }
        out
    }

    /// Max-norm of the five-point residual `k_xx − k_ζζ − (c + a(ζ))k` over
    /// nodes whose stencil lies inside the triangle.
    pub fn interior_residual(&self) -> f64 {
        let n = self.n();
        let h2 = self.h() * self.h();
        let k = &self.grid;
        let mut worst = 0.0_f64;
        for i in 2..n - 1 {
            for j in 1..i {
                let kxx = (k.at(i + 1, j) - 2.0 * k.at(i, j) + k.at(i - 1, j)) / h2;
                let kzz = (k.at(i, j + 1) - 2.0 * k.at(i, j) + k.at(i, j - 1)) / h2;
                let r = kxx - kzz - (self.c + self.a_samples[j]) * k.at(i, j);
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// `k_ζ(x_i, 0)` by a three-point one-sided difference (rows `i ≥ 2`).
    pub fn neumann_trace(&self) -> Vec<f64> {
        let h = self.h();
        (2..self.n())
            .map(|i| {
                let k = &self.grid;
                (-3.0 * k.at(i, 0) + 4.0 * k.at(i, 1) - k.at(i, 2)) / (2.0 * h)
            })
            .collect()
    }

    /// `k_x(1, ζ_j)` by the three-point backward difference in `x`, for the
    /// columns `j ≤ n − 3` where the stencil stays inside the triangle.
    pub fn kx1_one_sided(&self) -> Vec<f64> {
        let n = self.n();
        let h = self.h();
        let k = &self.grid;
        (0..=n - 3)
            .map(|j| (3.0 * k.at(n - 1, j) - 4.0 * k.at(n - 2, j) + k.at(n - 3, j)) / (2.0 * h))
            .collect()
    }
}

/// Characteristic-grid storage: row `p` (ξ = p·h) holds `η = q·h` for
/// `0 ≤ q ≤ min(p, N − p)`.
struct CharGrid {
    big: usize,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl CharGrid {
    fn new(big: usize) -> Self {
        let mut offsets = Vec::with_capacity(big + 2);
        let mut off = 0;
        for p in 0..=big {
            offsets.push(off);
            off += p.min(big - p) + 1;
        }
        offsets.push(off);
        Self {
            big,
            offsets,
            data: vec![0.0; off],
        }
    }

    #[inline]
    fn qmax(&self, p: usize) -> usize {
        p.min(self.big - p)
    }

    #[inline]
    fn get(&self, p: usize, q: usize) -> f64 {
        self.data[self.offsets[p] + q]
    }

    #[inline]
    fn set(&mut self, p: usize, q: usize, v: f64) {
        let o = self.offsets[p];
        self.data[o + q] = v;
    }
}

/// Reaction `f = a + c` on the half grid (spacing h/2) by linear
/// interpolation, and its running integral, exact for the interpolant.
fn half_grid_reaction(a: &[f64], c: f64, h: f64) -> (Vec<f64>, Vec<f64>) {
    let big = 2 * (a.len() - 1);
    let f: Vec<f64> = (0..=big)
        .map(|r| {
            if r % 2 == 0 {
                c + a[r / 2]
            } else {
                c + 0.5 * (a[r / 2] + a[r / 2 + 1])
            }
        })
        .collect();
    let mut big_f = vec![0.0; big + 1];
    for r in 1..=big {
        big_f[r] = big_f[r - 1] + 0.25 * h * (f[r - 1] + f[r]);
    }
    (f, big_f)
}

/// Inner integrals for a given iterate: `hh = f·G`, `S(τ, η) = ∫₀^η hh(τ, s) ds`.
fn inner_integrals(g: &CharGrid, f: &[f64], h: f64) -> (CharGrid, CharGrid) {
    let big = g.big;
    let mut hh = CharGrid::new(big);
    let mut s = CharGrid::new(big);
    for p in 0..=big {
        let qm = g.qmax(p);
        let mut acc = 0.0;
        let mut prev = f[p] * g.get(p, 0);
        hh.set(p, 0, prev);
        for q in 1..=qm {
            let cur = f[p - q] * g.get(p, q);
            hh.set(p, q, cur);
            acc += 0.5 * h * (prev + cur);
            s.set(p, q, acc);
            prev = cur;
        }
    }
    (hh, s)
}

pub fn solve_kernel(a_samples: &[f64], c: f64, n: usize) -> Result<Kernel> {
    if n < 3 {
        return Err(Error::invalid(
            "n",
            format!("need at least 3 nodes, got {n}"),
        ));
    }
    if a_samples.len() != n {
        return Err(Error::Dimension(format!(
            "a_samples has {} entries, grid has {n}",
            a_samples.len()
        )));
    }
    if !c.is_finite() || a_samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("a_samples, c", "non-finite coefficient"));
    }

    let h = 1.0 / (n - 1) as f64;
    let big = 2 * (n - 1);
    let (f, big_f) = half_grid_reaction(a_samples, c, h);

    let mut base = CharGrid::new(big);
    for p in 0..=big {
        for q in 0..=base.qmax(p) {
            base.set(p, q, -0.5 * (big_f[p] + big_f[q]));
        }
    }

    let mut g = CharGrid {
        big,
        offsets: base.offsets.clone(),
        data: base.data.clone(),
    };
    let mut diag_int = vec![0.0; big / 2 + 1];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let (_, s) = inner_integrals(&g, &f, h);

        // ½∫₀^η S(τ, τ) dτ
        for q in 1..=big / 2 {
            diag_int[q] = diag_int[q - 1] + 0.5 * h * (s.get(q - 1, q - 1) + s.get(q, q));
        }

        let mut change = 0.0_f64;
        let mut scale = 1.0_f64;
        for q in 0..=big / 2 {
            // ∫_η^ξ S(τ, η) dτ, accumulated along p for fixed q
            let mut rect = 0.0;
            for p in q..=big - q {
                if p > q {
                    rect += 0.5 * h * (s.get(p - 1, q) + s.get(p, q));
                }
                let v = base.get(p, q) + 0.25 * rect + 0.5 * diag_int[q];
                change = change.max((v - g.get(p, q)).abs());
                scale = scale.max(v.abs());
                g.set(p, q, v);
            }
        }

        if !change.is_finite() {
            return Err(Error::KernelNotConverged {
                iterations: sweeps,
                last_change: change,
            });
        }
        if change <= KERNEL_TOLERANCE * scale {
            break;
        }
        if sweeps >= KERNEL_MAX_SWEEPS {
            return Err(Error::KernelNotConverged {
                iterations: sweeps,
                last_change: change,
            });
        }
    }

    let mut grid = TriGrid::zeros(n)?;
    for i in 0..n {
        for j in 0..=i {
            grid.values[TriGrid::offset(i, j)] = g.get(i + j, i - j);
        }
    }
    let diag_trace: Vec<f64> = (0..n).map(|i| grid.at(i, i)).collect();

    // k_x = G_ξ + G_η, differentiated through the integral form:
    // G_ξ = −¼f(ξ/2) + ¼S(ξ, η),  G_η = −¼f(η/2) + ¼S(η, η) + ¼∫_η^ξ fG(τ, η) dτ
    let (hh, s) = inner_integrals(&g, &f, h);
    let kx1_trace: Vec<f64> = (0..n)
        .map(|j| {
            let p = n - 1 + j;
            let q = n - 1 - j;
            let mut line = 0.0;
            for pp in q + 1..=p {
                line += 0.5 * h * (hh.get(pp - 1, q) + hh.get(pp, q));
            }
            0.25 * (-f[p] - f[q] + s.get(p, q) + s.get(q, q) + line)
        })
        .collect();

    let k11 = diag_trace[n - 1];
    Ok(Kernel {
        grid,
        c,
        a_samples: a_samples.to_vec(),
        diag_trace,
        kx1_trace,
        k11,
        sweeps,
    })
}
