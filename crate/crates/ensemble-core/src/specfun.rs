//! Log-scale special functions: log-gamma and the lattice interaction
//! kernel Q_θ, with their explicit error bounds exposed as checks.

use core::ops::{Add, AddAssign, Sub};

use crate::error::{Error, Result};
use crate::math::{exp, ln, EULER_GAMMA, PI};

/// A positive quantity stored by its natural logarithm.
///
/// `LogValue::ZERO` (logarithm `-inf`) represents an exact zero weight.
/// Multiplication of weights is addition of `LogValue`s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogValue(pub f64);

impl LogValue {
    pub const ZERO: LogValue = LogValue(f64::NEG_INFINITY);
    pub const ONE: LogValue = LogValue(0.0);

    #[inline]
    pub fn ln(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    /// The represented value `exp(ln)`; may overflow to infinity.
    #[inline]
    pub fn value(self) -> f64 {
        exp(self.0)
    }
}

impl Add for LogValue {
    type Output = LogValue;
    #[inline]
    fn add(self, rhs: LogValue) -> LogValue {
        LogValue(self.0 + rhs.0)
    }
}

impl AddAssign for LogValue {
    #[inline]
    fn add_assign(&mut self, rhs: LogValue) {
        self.0 += rhs.0;
    }
}

impl Sub for LogValue {
    type Output = LogValue;
    #[inline]
    fn sub(self, rhs: LogValue) -> LogValue {
        LogValue(self.0 - rhs.0)
    }
}

/// Streaming `ln Σ exp(x_k)` with a running maximum, so arbitrarily many
/// terms of any magnitude can be accumulated without overflow.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp { max: f64::NEG_INFINITY, scaled: 0.0 }
    }

    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled += exp(x - self.max);
        } else {
            self.scaled = self.scaled * exp(self.max - x) + 1.0;
            self.max = x;
        }
    }

    pub fn total(&self) -> LogValue {
        if self.max == f64::NEG_INFINITY {
            LogValue::ZERO
        } else {
            LogValue(self.max + ln(self.scaled))
        }
    }
}

/// Coefficients B_{2k} / (2k (2k-1)) of the Stirling series.
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// Below this argument the recurrence Γ(x+1) = xΓ(x) shifts x upward
/// before the asymptotic series is applied.
const STIRLING_CUTOFF: f64 = 15.0;

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// `ln Γ(x)` for `x > 0` without argument checks.
pub(crate) fn lgamma(x: f64) -> f64 {
    if x <= 23.0 && x == crate::math::floor(x) {
        // (x-1)! is exact in binary64 up to 22!
        let mut f = 1.0;
        let mut k = 2.0;
        while k < x {
            f *= k;
            k += 1.0;
        }
        return ln(f);
    }
    if x >= STIRLING_CUTOFF {
        return stirling(x);
    }
    let mut shifted = x;
    let mut product = 1.0;
    while shifted < STIRLING_CUTOFF {
        product *= shifted;
        shifted += 1.0;
    }
    stirling(shifted) - ln(product)
}

fn stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut power = inv;
    for c in STIRLING {
        series += c * power;
        power *= inv2;
    }
    (x - 0.5) * ln(x) - x + HALF_LN_TWO_PI + series
}

/// Natural logarithm of the gamma function.
///
/// Accurate to about `1e-14 · max(1, |ln Γ(x)|)` on `(0, ∞)`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("log_gamma", alloc::format!("x = {x} must be positive and finite")));
    }
    Ok(lgamma(x))
}

/// `ln Q_θ(x)` with `Q_θ(x) = Γ(x+1)Γ(x+θ) / (Γ(x)Γ(x+1-θ))`, no checks.
///
/// The factor Γ(x+1)/Γ(x) is taken as `x` exactly and θ = 1 reduces to
/// `2 ln x`, so the Coulomb comparison at θ = 1 is exact.
#[inline]
pub(crate) fn log_q(x: f64, theta: f64) -> f64 {
    if theta == 1.0 {
        2.0 * ln(x)
    } else {
        ln(x) + lgamma(x + theta) - lgamma(x + 1.0 - theta)
    }
}

/// Slack allowed when checking the lattice spacing `x ≥ θ` in floating
/// point.
pub(crate) const SPACING_SLACK: f64 = 1e-9;

/// `ln Q_θ(x)` for particle gaps `x ≥ θ`.
pub fn log_q_theta(x: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::domain("log_q_theta", alloc::format!("theta = {theta} must be positive")));
    }
    if !(x >= theta - SPACING_SLACK * theta.max(1.0)) || !x.is_finite() {
        return Err(Error::domain("log_q_theta", alloc::format!("gap x = {x} is smaller than theta = {theta}")));
    }
    Ok(log_q(x, theta))
}

/// The constant `(1+θ)³` in `|ln Q_θ(x) - 2θ ln x| ≤ (1+θ)³ / x`.
pub fn q_theta_bound_constant(theta: f64) -> f64 {
    let t = 1.0 + theta;
    t * t * t
}

/// Whether `x^{x-γ} e^{1-x} ≤ Γ(x) ≤ x^{x-1/2} e^{1-x}` holds for the
/// implemented log-gamma at `x ≥ 1`.
///
/// A relative slack of a few ulps of the compared quantities is allowed,
/// since at `x = 1` all three sides coincide.
pub fn gamma_sandwich_check(x: f64) -> bool {
    if !(x >= 1.0) || !x.is_finite() {
        return false;
    }
    let lg = lgamma(x);
    let lower = (x - EULER_GAMMA) * ln(x) - (x - 1.0);
    let upper = (x - 0.5) * ln(x) - (x - 1.0);
    let slack = 1e-13 * lg.abs().max(x * ln(x)).max(1.0);
    lower <= lg + slack && lg <= upper + slack
}

/// `ln n! - [½ ln 2π + (n+½) ln n - n]`, which lies strictly between
/// `1/(12n+1)` and `1/(12n)` for every positive integer `n`.
pub fn stirling_residual(n: u32) -> f64 {
    let nf = n as f64;
    lgamma(nf + 1.0) - (0.5 * ln(2.0 * PI) + (nf + 0.5) * ln(nf) - nf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn log_gamma_small_table() {
        assert_eq!(log_gamma(1.0).unwrap().abs() < 1e-15, true);
        assert!(close(log_gamma(5.0).unwrap(), 24f64.ln(), 1e-14));
        assert!(close(log_gamma(0.5).unwrap(), 0.5 * PI.ln(), 1e-14));
        assert!(log_gamma(2.0).unwrap().abs() < 1e-14);
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-3.0).is_err());
        assert!(log_gamma(f64::NAN).is_err());
    }

    #[test]
    fn log_gamma_factorials() {
        let mut lf = 0.0f64;
        for n in 1..=170u32 {
            // ln n! accumulated as a sum of logs is an independent oracle.
            lf += (n as f64).ln();
            assert!(close(log_gamma(n as f64 + 1.0).unwrap(), lf, 1e-13), "n = {n}");
        }
    }

    #[test]
    fn log_gamma_against_libm() {
        let mut x = 1e-6;
        while x < 1e6 {
            let ours = log_gamma(x).unwrap();
            let reference = libm::lgamma(x);
            assert!(close(ours, reference, 1e-13), "x = {x}: {ours} vs {reference}");
            x *= 1.07;
        }
    }

    #[test]
    fn log_gamma_duplication_formula() {
        // Γ(x)Γ(x+½) = 2^{1-2x} √π Γ(2x)
        for k in 1..400 {
            let x = 0.013 * k as f64;
            let lhs = lgamma(x) + lgamma(x + 0.5);
            let rhs = (1.0 - 2.0 * x) * 2f64.ln() + 0.5 * PI.ln() + lgamma(2.0 * x);
            assert!(close(lhs, rhs, 1e-13), "x = {x}");
        }
    }

    #[test]
    fn log_q_examples() {
        assert!(close(log_q_theta(5.0, 1.0).unwrap(), 25f64.ln(), 1e-15));
        assert!(close(log_q_theta(2.0, 2.0).unwrap(), 12f64.ln(), 1e-13));
        let v = log_q_theta(0.5, 0.5).unwrap();
        assert!((v - 2.0 * 0.5 * 0.5f64.ln()).abs() <= q_theta_bound_constant(0.5) / 0.5);
        assert!(log_q_theta(0.4, 0.5).is_err());
    }

    #[test]
    fn log_q_matches_plain_gamma_ratio() {
        for &theta in &[0.3, 0.5, 2.0, 3.7] {
            for k in 0..50 {
                let x = theta + 0.37 * k as f64;
                let direct = libm::lgamma(x + 1.0) + libm::lgamma(x + theta)
                    - libm::lgamma(x)
                    - libm::lgamma(x + 1.0 - theta);
                assert!((log_q(x, theta) - direct).abs() < 1e-11, "θ = {theta}, x = {x}");
            }
        }
    }

    #[test]
    fn q_sandwich_on_log_grid() {
        for &theta in &[0.3, 0.5, 1.0, 2.0, 3.7] {
            let c = q_theta_bound_constant(theta);
            for k in 0..1000 {
                let x = theta * (1e6f64 / theta).powf(k as f64 / 999.0);
                let dev = (log_q_theta(x, theta).unwrap() - 2.0 * theta * x.ln()).abs();
                assert!(dev <= c / x, "θ = {theta}, x = {x}, dev = {dev}");
            }
        }
    }

    #[test]
    fn sandwich_examples() {
        assert!(gamma_sandwich_check(1.0));
        assert!(gamma_sandwich_check(10.0));
        assert!(gamma_sandwich_check(2.5));
        assert!(!gamma_sandwich_check(0.5));
    }

    #[test]
    fn stirling_residual_window() {
        for n in 1..=170u32 {
            let r = stirling_residual(n);
            let nf = n as f64;
            assert!(r > 1.0 / (12.0 * nf + 1.0) && r < 1.0 / (12.0 * nf), "n = {n}, r = {r}");
        }
    }

    #[test]
    fn log_sum_exp_streaming() {
        let mut acc = LogSumExp::new();
        for x in [-1000.0, 0.0, 2f64.ln(), 1000.0, f64::NEG_INFINITY] {
            acc.push(x);
        }
        assert!(close(acc.total().ln(), 1000.0, 1e-15));
        let mut small = LogSumExp::new();
        small.push(0.0);
        small.push(0.0);
        assert!(close(small.total().ln(), 2f64.ln(), 1e-15));
        assert!(LogSumExp::new().total().is_zero());
    }

    proptest! {
        #[test]
        fn functional_equation(x in 0.1f64..1000.0) {
            let lhs = log_gamma(x + 1.0).unwrap();
            let rhs = log_gamma(x).unwrap() + x.ln();
            prop_assert!(close(lhs, rhs, 1e-12));
        }

        #[test]
        fn sandwich_holds(x in 1.0f64..1e5) {
            prop_assert!(gamma_sandwich_check(x));
        }

        #[test]
        fn q_bound_random(theta in 0.05f64..5.0, u in 0.0f64..1.0) {
            let x = theta * (1e6f64 / theta).powf(u);
            let dev = (log_q_theta(x, theta).unwrap() - 2.0 * theta * x.ln()).abs();
            prop_assert!(dev <= q_theta_bound_constant(theta) / x);
        }
    }
}
