//! Discrete Volterra transform `z = y − ∫₀ˣ k(x, ζ) y(ζ) dζ` and its inverse.
//!
//! Quadrature convention: trapezoid on `[0, x_i]`, weight `h/2` at both
//! `ζ = 0` and `ζ = x_i`, `h` in between; row 0 is the identity. The
//! endpoint weight at `ζ = x_i` lands on the diagonal, which therefore reads
//! `1 − h·k(x_i, x_i)/2`. The inverse is always applied by forward
//! substitution against the same matrix.

use super::Kernel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TransformPair {
    n: usize,
    /// Packed lower-triangular rows of `T`.
    forward: Vec<f64>,
    /// `max l(x, ζ)²` recovered from `T⁻¹ − I`.
    pub inverse_kernel_max_sq: f64,
}

#[inline]
fn row_offset(i: usize) -> usize {
    i * (i + 1) / 2
}

/// Trapezoid weight of node `j` in the integral over `[0, x_i]`.
#[inline]
pub(crate) fn quad_weight(i: usize, j: usize, h: f64) -> f64 {
    if i == 0 {
        0.0
    } else if j == 0 || j == i {
        0.5 * h
    } else {
        h
    }
}

impl TransformPair {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry `T[i][j]`, zero above the diagonal.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.forward[row_offset(i) + j]
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut forward = vec![0.0; n * (n + 1) / 2];
        for i in 0..n {
            forward[row_offset(i) + i] = 1.0;
        }
        Self {
            n,
            forward,
            inverse_kernel_max_sq: 0.0,
        }
    }

    /// `Tᵀ·v`, used to fold the transform into fixed linear functionals.
    pub fn transpose_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, v.len())?;
        let mut out = vec![0.0; self.n];
        for (i, vi) in v.iter().enumerate() {
            let row = &self.forward[row_offset(i)..=row_offset(i) + i];
            for (o, t) in out.iter_mut().zip(row) {
                *o += t * vi;
            }
        }
        Ok(out)
    }
}

fn check_len(n: usize, len: usize) -> Result<()> {
    if n != len {
        return Err(Error::Dimension(format!(
            "field has {len} nodes, transform expects {n}"
        )));
    }
    Ok(())
}

pub fn build_transform(kernel: &Kernel) -> Result<TransformPair> {
    let n = kernel.n();
    let h = kernel.h();
    let mut forward = vec![0.0; n * (n + 1) / 2];
    for i in 0..n {
        let off = row_offset(i);
        for j in 0..=i {
            let delta = if i == j { 1.0 } else { 0.0 };
            forward[off + j] = delta - quad_weight(i, j, h) * kernel.grid.at(i, j);
        }
        let d = forward[off + i];
        if !(d.abs() > 1e-300) || !d.is_finite() {
            return Err(Error::SingularPivot { row: i });
        }
    }
    let mut tp = TransformPair {
        n,
        forward,
        inverse_kernel_max_sq: 0.0,
    };

    // Columns of T⁻¹ by forward substitution; l(x_i, ζ_j) = (T⁻¹ − I)_ij / w_ij.
    let mut max_sq = 0.0_f64;
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = apply_inverse(&tp, &e)?;
        for (i, v) in col.iter().enumerate().skip(j) {
            let w = quad_weight(i, j, h);
            if w > 0.0 {
                let delta = if i == j { 1.0 } else { 0.0 };
                let l = (v - delta) / w;
                max_sq = max_sq.max(l * l);
            }
        }
    }
    tp.inverse_kernel_max_sq = max_sq;
    Ok(tp)
}

pub fn apply_forward(tp: &TransformPair, y: &[f64]) -> Result<Vec<f64>> {
    check_len(tp.n, y.len())?;
    Ok((0..tp.n)
        .map(|i| {
            let row = &tp.forward[row_offset(i)..=row_offset(i) + i];
            row.iter().zip(y).map(|(t, v)| t * v).sum()
        })
        .collect())
}

pub fn apply_inverse(tp: &TransformPair, z: &[f64]) -> Result<Vec<f64>> {
    check_len(tp.n, z.len())?;
    let mut y = vec![0.0; tp.n];
    for i in 0..tp.n {
        let off = row_offset(i);
        let mut acc = z[i];
        for j in 0..i {
            acc -= tp.forward[off + j] * y[j];
        }
        y[i] = acc / tp.forward[off + i];
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::solve_kernel;

    #[test]
    fn zero_kernel_is_identity() {
        let k = solve_kernel(&[0.0; 11], 0.0, 11).unwrap();
        let tp = build_transform(&k).unwrap();
        assert_eq!(tp, TransformPair::identity(11));
        assert_eq!(tp.inverse_kernel_max_sq, 0.0);
        let y: Vec<f64> = (0..11).map(|i| i as f64 * 0.3 - 1.0).collect();
        assert_eq!(apply_forward(&tp, &y).unwrap(), y);
        assert_eq!(apply_inverse(&tp, &y).unwrap(), y);
    }

    #[test]
    fn linear_in_zero() {
        let k = solve_kernel(&[3.0; 21], 1.0, 21).unwrap();
        let tp = build_transform(&k).unwrap();
        assert!(apply_forward(&tp, &[0.0; 21])
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn diagonal_carries_endpoint_weight() {
        let k = solve_kernel(&[3.0; 21], 1.0, 21).unwrap();
        let tp = build_transform(&k).unwrap();
        assert_eq!(tp.entry(0, 0), 1.0);
        for i in 1..21 {
            let expect = 1.0 - 0.5 * k.h() * k.diag_trace[i];
            assert!((tp.entry(i, i) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let tp = TransformPair::identity(5);
        assert!(apply_forward(&tp, &[1.0; 4]).is_err());
        assert!(apply_inverse(&tp, &[1.0; 6]).is_err());
    }

    #[test]
    fn transpose_matches_dense_product() {
        let k = solve_kernel(&[2.0; 9], 1.0, 9).unwrap();
        let tp = build_transform(&k).unwrap();
        let v: Vec<f64> = (0..9).map(|i| (i as f64).cos()).collect();
        let got = tp.transpose_apply(&v).unwrap();
        for j in 0..9 {
            let want: f64 = (0..9).map(|i| tp.entry(i, j) * v[i]).sum();
            assert!((got[j] - want).abs() < 1e-14);
        }
    }
}
