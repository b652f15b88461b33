//! Log-space arithmetic helpers shared across the crate.
//!
//! Everything downstream (EPPF weights, marginal likelihoods, partition
//! sums) works with logarithms of positive quantities, with `-inf` as the
//! log of an exact zero. The helpers here keep that convention in one place.

use crate::error::{bail_domain, Result};

pub use statrs::function::gamma::ln_gamma;

/// ln(n!).
pub fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// ln C(n, k). Assumes k <= n.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// P(|Z| <= r) for Z ~ Normal(0, I_k), i.e. the chi(k) CDF at r.
pub fn chi_cdf(k: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    statrs::function::gamma::gamma_lr(k as f64 / 2.0, r * r / 2.0)
}

/// Streaming log-sum-exp: feeds terms one at a time, rescaling on a new
/// running maximum, so partition sums never materialize their term lists.
#[derive(Clone, Debug)]
pub struct LogSumAcc {
    max: f64,
    /// sum of exp(x_i - max) over terms seen so far
    sum: f64,
}

impl LogSumAcc {
    pub fn new() -> Self {
        LogSumAcc {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        debug_assert!(!x.is_nan());
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            if self.max != f64::NEG_INFINITY {
                self.sum = self.sum * (self.max - x).exp() + 1.0;
            } else {
                self.sum = 1.0;
            }
            self.max = x;
        }
    }

    pub fn log_sum(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl Default for LogSumAcc {
    fn default() -> Self {
        Self::new()
    }
}

/// Two-pass log-sum-exp over a slice. Empty input and all-(-inf) both give -inf.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Compensated (Kahan) summation; keeps pmf normalization checks below 1e-14
/// even for thousands of terms.
pub fn kahan_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in xs {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// ln of the rising factorial x(x+d)(x+2d)...(x+(n-1)d) with positive factors.
///
/// The log-gamma route needs every factor strictly positive; callers in the
/// sigma < 0 regime, where factors can vanish, handle that case themselves
/// (they know the structural zero exactly rather than trusting float
/// cancellation).
pub fn log_rising(x: f64, n: usize, d: f64) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    if n == 1 {
        if x <= 0.0 {
            bail_domain!("rising factorial with nonpositive factor {x}");
        }
        return Ok(x.ln());
    }
    if d == 0.0 {
        if x <= 0.0 {
            bail_domain!("rising factorial with nonpositive base {x} and zero increment");
        }
        return Ok(n as f64 * x.ln());
    }
    if d > 0.0 && x > 0.0 {
        let r = x / d;
        return Ok(n as f64 * d.ln() + ln_gamma(r + n as f64) - ln_gamma(r));
    }
    // Explicit product: valid only while factors stay positive.
    let mut acc = 0.0;
    for i in 0..n {
        let f = x + i as f64 * d;
        if f <= 0.0 {
            bail_domain!("rising factorial factor {f} <= 0 at step {i} (x={x}, d={d})");
        }
        acc += f.ln();
    }
    Ok(acc)
}

/// Ratio a/b in [0, +inf] under the conventions 0/0 = 0 and y/0 = +inf
/// (y > 0), taking the operands as logs.
pub fn log_ratio_convention(log_a: f64, log_b: f64) -> f64 {
    if log_a == f64::NEG_INFINITY {
        0.0
    } else if log_b == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        (log_a - log_b).exp()
    }
}
