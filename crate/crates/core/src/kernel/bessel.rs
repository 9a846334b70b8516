//! Closed-form kernel for a constant reaction coefficient.
//!
//! When the reaction term is constant the kernel PDE has the solution
//!
//! ```text
//! k(x, ζ) = −c·x · I₁(s)/s,   s = √(c(x² − ζ²))
//! ```
//!
//! with `I₁` the first-order modified Bessel function. `I₁(s)/s` is summed
//! directly as a power series in `s²/4`, which stays finite at `s = 0`
//! (limit ½) and needs no special case on the diagonal.

use crate::error::{Error, Result};

/// `I₁(s)/s` by its power series; terms stop once they drop below 1e−16 of the sum.
pub fn bessel_i1_over_arg(s: f64) -> f64 {
    let q = 0.25 * s * s;
    let mut term = 0.5;
    let mut sum = term;
    let mut i = 0.0;
    loop {
        i += 1.0;
        term *= q / (i * (i + 1.0));
        sum += term;
        if term.abs() <= 1e-16 * sum.abs() {
            return sum;
        }
    }
}

/// First-order modified Bessel function of the first kind.
pub fn bessel_i1(s: f64) -> f64 {
    s * bessel_i1_over_arg(s)
}

/// Closed-form kernel value at `(x, ζ)` for reaction `c` and `a ≡ 0`.
pub fn bessel_kernel_value(c: f64, x: f64, zeta: f64) -> Result<f64> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::invalid(
            "c",
            format!("must be finite and >= 0, got {c}"),
        ));
    }
    if !(0.0..=1.0).contains(&x) || !(0.0..=x).contains(&zeta) {
        return Err(Error::invalid(
            "x, zeta",
            format!("({x}, {zeta}) is outside 0 <= zeta <= x <= 1"),
        ));
    }
    let s = (c * (x * x - zeta * zeta)).max(0.0).sqrt();
    Ok(-c * x * bessel_i1_over_arg(s))
}
