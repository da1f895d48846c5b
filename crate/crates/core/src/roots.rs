//! Safeguarded bisection for scalar monotone functions.
//!
//! Every one-dimensional solve in the solver goes through here: the
//! stationarity roots in `s`, the per-UE cap multiplier and the edge budget
//! multiplier. The functions involved contain clamps, so no derivative
//! information is used.

use crate::error::{Error, Result};

/// Result of a bracketed solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    /// End of the final bracket on the `f <= 0` side.
    pub lo: f64,
    /// End of the final bracket on the `f >= 0` side.
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    pub iterations: usize,
}

impl Bracket {
    /// The bracket end with the smaller residual magnitude.
    pub fn best(&self) -> f64 {
        if self.f_lo.abs() <= self.f_hi.abs() {
            self.lo
        } else {
            self.hi
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BisectOptions {
    /// Stop once `|f(x)| <= f_tol` at either bracket end.
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for BisectOptions {
    fn default() -> Self {
        BisectOptions {
            f_tol: 0.0,
            max_iter: 200,
        }
    }
}

/// Bisects `f` on `[lo, hi]` where `f(lo) <= 0 <= f(hi)`.
///
/// The function only needs to be sign-consistent at the ends; orientation is
/// fixed (non-decreasing). For a non-increasing function pass `|x| -g(x)`.
/// Iteration stops when a bracket end meets `f_tol`, when the bracket can no
/// longer be split in floating point, or after `max_iter` halvings.
pub fn bisect_increasing<F>(mut f: F, lo: f64, hi: f64, opts: BisectOptions) -> Bracket
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = (lo, hi);
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    debug_assert!(lo <= hi);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if f_lo.abs() <= opts.f_tol || f_hi.abs() <= opts.f_tol {
            break;
        }
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        iterations += 1;
        if f_mid <= 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    Bracket {
        lo,
        hi,
        f_lo,
        f_hi,
        iterations,
    }
}

/// Finds `hi >= start` with `f(hi) >= 0` for a non-decreasing `f` by
/// repeated doubling, returning `(hi, f(hi))`.
pub fn expand_upper<F>(mut f: F, start: f64, max_doublings: u32, what: &'static str) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let mut hi = start;
    for _ in 0..=max_doublings {
        let v = f(hi);
        if v >= 0.0 {
            return Ok((hi, v));
        }
        hi *= 2.0;
    }
    Err(Error::BracketExhausted {
        what,
        doublings: max_doublings,
    })
}

/// Minimizes a convex differentiable function on `[lo, hi]` given its
/// derivative, by bisection on the derivative.
pub fn convex_argmin<D>(mut slope: D, lo: f64, hi: f64, max_iter: usize) -> f64
where
    D: FnMut(f64) -> f64,
{
    if slope(lo) >= 0.0 {
        return lo;
    }
    if slope(hi) <= 0.0 {
        return hi;
    }
    bisect_increasing(
        slope,
        lo,
        hi,
        BisectOptions {
            f_tol: 0.0,
            max_iter,
        },
    )
    .best()
}

/// Counts strict sign changes of `f` on `points + 1` evenly spaced samples.
pub fn sign_changes<F>(mut f: F, lo: f64, hi: f64, points: usize) -> usize
where
    F: FnMut(f64) -> f64,
{
    let mut changes = 0;
    let mut prev = 0.0f64;
    for i in 0..=points {
        let x = lo + (hi - lo) * i as f64 / points as f64;
        let v = f(x);
        if v != 0.0 {
            if prev != 0.0 && v.signum() != prev.signum() {
                changes += 1;
            }
            prev = v;
        }
    }
    changes
}
