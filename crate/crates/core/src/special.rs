//! Log-binomial and binomial-tail helpers over statrs' special functions.

pub use statrs::function::beta::{beta_reg, ln_beta};
pub use statrs::function::gamma::ln_gamma;

/// `ln C(n, k)`; never forms factorials.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    assert!(k <= n, "ln_binomial requires k <= n");
    statrs::function::factorial::ln_binomial(n, k)
}

/// Lower binomial tail `P[Bin(n, p) <= k]`, via `I_{1-p}(n - k, k + 1)`.
pub fn binomial_cdf(k: u64, n: u64, p: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    beta_reg((n - k) as f64, (k + 1) as f64, 1.0 - p)
}
