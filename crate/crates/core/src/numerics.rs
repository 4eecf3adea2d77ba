//! Special-function kernels: Gauss hypergeometric series, integer-order
//! upper incomplete gamma, and associated Laguerre coefficients.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

/// Hard cap on hypergeometric series terms.
pub const MAX_SERIES_TERMS: usize = 100_000;

const EPS: f64 = 1e-16;

/// Gauss hypergeometric function `2F1(a, b; c; z)` for real `|z| < 1`.
///
/// Non-negative arguments are summed directly with the term-ratio
/// recurrence. Arguments below `-0.5` are first mapped through the Pfaff
/// transformation `2F1(a,b;c;z) = (1-z)^{-b} 2F1(c-a, b; c; z/(z-1))`,
/// which lands in `(1/3, 1/2)`.
pub fn gauss_2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && c.is_finite() && z.is_finite()) {
        return Err(Error::arg("2F1 arguments must be finite"));
    }
    if c <= 0.0 && c.fract() == 0.0 {
        return Err(Error::arg(format!("2F1 undefined for c = {c}")));
    }
    if c <= 0.0 {
        return Err(Error::arg(format!("2F1 requires c > 0, got {c}")));
    }
    if z.abs() >= 1.0 {
        return Err(Error::arg(format!("2F1 requires |z| < 1, got {z}")));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    if z < -0.5 {
        let w = z / (z - 1.0);
        let inner = series(c - a, b, c, w)?;
        return Ok((1.0 - z).powf(-b) * inner);
    }
    series(a, b, c, z)
}

fn series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut sum = 1.0;
    let mut term = 1.0;
    for n in 0..MAX_SERIES_TERMS {
        let nf = n as f64;
        let ratio = (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * z;
        term *= ratio;
        sum += term;
        if !sum.is_finite() {
            return Err(Error::Numeric(format!(
                "2F1 series overflowed at term {n} (a={a}, b={b}, c={c}, z={z})"
            )));
        }
        if term == 0.0 {
            return Ok(sum);
        }
        // Once the ratio has dropped below one the remaining terms shrink
        // at least geometrically; bound the tail by term * r / (1 - r).
        let r = ratio.abs();
        if r < 1.0 {
            let tail = term.abs() * r / (1.0 - r);
            if tail <= EPS * sum.abs() {
                return Ok(sum);
            }
        }
    }
    Err(Error::NonConvergence {
        what: "2F1 series",
        partial: sum,
        iterations: MAX_SERIES_TERMS,
    })
}

/// Upper incomplete gamma `Γ(s, x)` for integer `s >= 1`, via the finite sum
/// `(s-1)! e^{-x} Σ_{k<s} x^k / k!`.
pub fn upper_inc_gamma(s: u32, x: f64) -> Result<f64> {
    if s == 0 {
        return Err(Error::arg("incomplete gamma order must be >= 1"));
    }
    if !(x >= 0.0) {
        return Err(Error::arg(format!("incomplete gamma needs x >= 0, got {x}")));
    }
    let fact: f64 = if s <= 171 {
        (1..s).map(f64::from).product()
    } else {
        ln_factorial((s - 1) as u64).exp()
    };
    Ok(fact * upper_inc_gamma_regularized(s, x))
}

/// `Γ(s, x) / (s-1)!`, the Poisson tail `P{Poisson(x) < s}`.
pub fn upper_inc_gamma_regularized(s: u32, x: f64) -> f64 {
    if x < s as f64 {
        // Q is close to one here; sum the small lower tail instead.
        return 1.0 - lower_tail(s, x);
    }
    let mut term = 1.0;
    let mut acc = 1.0;
    for k in 1..s {
        term *= x / k as f64;
        acc += term;
    }
    (-x).exp() * acc
}

/// `P{Poisson(x) >= s}` by the convergent series from `k = s`, for `x < s`.
fn lower_tail(s: u32, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let s64 = s as u64;
    let mut term = (s as f64 * x.ln() - x - ln_factorial(s64)).exp();
    let mut acc = term;
    let mut k = s as f64;
    loop {
        k += 1.0;
        term *= x / k;
        acc += term;
        if term <= EPS * acc {
            return acc;
        }
    }
}

/// Coefficients of the associated Laguerre polynomial `L_n^α` in the
/// monomial basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaguerreCoeffs {
    pub order: u32,
    pub shift: u32,
    /// `coeffs[l]` multiplies `λ^l`.
    pub coeffs: Vec<f64>,
}

impl LaguerreCoeffs {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &w| acc * x + w)
    }

    /// Coefficient `ω_l`, zero above the degree.
    pub fn get(&self, l: usize) -> f64 {
        self.coeffs.get(l).copied().unwrap_or(0.0)
    }
}

/// `ω_l = (-1)^l (n+α)! / ((n-l)! (α+l)! l!)` for `l = 0..=n`, computed in
/// log space.
pub fn laguerre_coeffs(n: u32, alpha: u32) -> LaguerreCoeffs {
    let (n64, a64) = (n as u64, alpha as u64);
    let top = ln_factorial(n64 + a64);
    let coeffs = (0..=n64)
        .map(|l| {
            let mag = (top - ln_factorial(n64 - l) - ln_factorial(a64 + l) - ln_factorial(l)).exp();
            if l % 2 == 0 {
                mag
            } else {
                -mag
            }
        })
        .collect();
    LaguerreCoeffs {
        order: n,
        shift: alpha,
        coeffs,
    }
}

/// Natural log of `n!`.
pub fn ln_fact(n: u64) -> f64 {
    ln_factorial(n)
}
