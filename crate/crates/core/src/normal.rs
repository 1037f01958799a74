//! Standard normal density, distribution and the truncated-moment helpers used
//! by probit moment matching.
//!
//! `v(t) = φ(t)/Φ(t)` and `w(t) = v(t)(v(t) + t)` are the first two
//! correction factors of a Gaussian truncated by a probit likelihood. Below
//! `t = -8` the ratio φ/Φ is taken from the continued fraction of the Mills
//! ratio, which avoids the 0/0 of evaluating both tails directly.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const MILLS_SWITCH: f64 = -8.0;
const LOG_CDF_SWITCH: f64 = -30.0;
const CF_DEPTH: usize = 200;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal cumulative distribution.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Φ(x)`, finite for every finite `x`.
pub fn log_cdf(x: f64) -> f64 {
    if x < LOG_CDF_SWITCH {
        // Φ(x) = φ(x) / (|x| + c(|x|)) via the Mills continued fraction.
        let z = -x;
        let tail = mills_tail(z);
        -0.5 * x * x - LN_SQRT_2PI - (z + tail).ln()
    } else if x > 5.0 {
        // ln(1 - q) for tiny q
        (-0.5 * erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else {
        cdf(x).ln()
    }
}

/// Tail `c(z)` of the Laplace continued fraction for `z > 0`:
/// `(1 - Φ(z)) / φ(z) = 1 / (z + c(z))`, `c(z) = 1/(z + 2/(z + 3/(z + ...)))`.
fn mills_tail(z: f64) -> f64 {
    let mut acc = 0.0;
    for k in (2..=CF_DEPTH).rev() {
        acc = k as f64 / (z + acc);
    }
    1.0 / (z + acc)
}

/// `v(t) = φ(t)/Φ(t)`.
pub fn v(t: f64) -> f64 {
    if t < MILLS_SWITCH {
        let z = -t;
        z + mills_tail(z)
    } else {
        pdf(t) / cdf(t)
    }
}

/// `w(t) = v(t)(v(t) + t)`, always in `(0, 1)`.
pub fn w(t: f64) -> f64 {
    if t < MILLS_SWITCH {
        let z = -t;
        let c = mills_tail(z);
        (z + c) * c
    } else {
        let vt = v(t);
        vt * (vt + t)
    }
}

/// `sqrt(2/π)`, the value of `v(0)`.
pub fn v_at_zero() -> f64 {
    (2.0 / PI).sqrt()
}
