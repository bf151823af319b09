//! Generalization-bound numerics.
//!
//! * [`compression_bound`]: for a preferent compression scheme of size `k`
//!   on `n` IID points, with confidence `1 - δ` the probability of a change
//!   of compression is at most `1 - (δ / C(n, k))^{1/(n-k)}`.
//! * [`scenario_bound_zero_violation`] / [`scenario_bound_with_violations`]:
//!   scenario-optimization bounds used by the level-set baselines.

use crate::error::{Error, Result};
use crate::special::{binomial_cdf, ln_binomial};

/// Name recorded in reports next to every compression bound value.
pub const COMPRESSION_BOUND_NAME: &str = "classical-preferent-compression";

/// Bisection tolerance on ε.
pub const BISECTION_TOL: f64 = 1e-10;

fn check_confidence(c: f64) -> Result<()> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidArgument(format!("confidence parameter {c} not in (0, 1]")));
    }
    Ok(())
}

/// `ε̄ = 1 - (δ / C(n, k))^{1/(n-k)}`, evaluated in log space.
/// Returns 1 (vacuous) when `k >= n`.
pub fn compression_bound(n: u64, k: u64, delta: f64) -> Result<f64> {
    check_confidence(delta)?;
    if k >= n {
        return Ok(1.0);
    }
    let log_base = (delta.ln() - ln_binomial(n, k)) / (n - k) as f64;
    Ok((-log_base.exp_m1()).clamp(0.0, 1.0))
}

/// `ε = 1 - β^{1/N}`.
pub fn scenario_bound_zero_violation(n: u64, beta: f64) -> Result<f64> {
    check_confidence(beta)?;
    if n == 0 {
        return Err(Error::InvalidArgument("scenario bound needs N >= 1".into()));
    }
    Ok((-(beta.ln() / n as f64).exp_m1()).clamp(0.0, 1.0))
}

/// Smallest `ε` with `P[Bin(N, ε) <= k] <= β`, by bisection.
///
/// The returned value is the upper end of the final bracket, so the tail
/// there is at most `β`. Returns 1 when `k >= N`.
pub fn scenario_bound_with_violations(n: u64, k: u64, beta: f64) -> Result<f64> {
    check_confidence(beta)?;
    if n == 0 {
        return Err(Error::InvalidArgument("scenario bound needs N >= 1".into()));
    }
    if k >= n {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if binomial_cdf(k, n, mid) <= beta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
