//! Exact integrals of `ln|x - y|` over intervals and squares.
//!
//! These back every energy computation: piecewise-constant densities
//! interact through cell-pair averages of the logarithmic kernel, which
//! are available in closed form, so no quadrature of a singular integrand
//! is ever needed.

use crate::math::{ln, xlogx};

/// `∬_{[a,b]²} ln|w - v| dw dv` for `r = b - a > 0`.
#[inline]
pub(crate) fn square_self(r: f64) -> f64 {
    r * r * ln(r) - 1.5 * r * r
}

/// `∫_a^b ln|v - c| dv` for `a < b`, any real `c`.
#[inline]
pub(crate) fn segment(a: f64, b: f64, c: f64) -> f64 {
    p_ln_abs(b - c) + p_ln_abs(c - a) + a - b
}

/// `p ln|p|` with value 0 at `p = 0`.
#[inline]
fn p_ln_abs(p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * ln(p.abs())
    }
}

/// `∫_0^a ∫_0^a ln(c + x - y) dx dy` for `c ≥ a ≥ 0`, in closed form with
/// `0 ln 0 = 0`.
#[inline]
pub(crate) fn offset_square(a: f64, c: f64) -> f64 {
    let lo = c - a;
    let hi = c + a;
    0.5 * lo * xlogx(lo) + 0.5 * hi * xlogx(hi) - c * xlogx(c) - 1.5 * a * a
}

/// Mean of `ln(c + x - y)` over `(x, y) ∈ [0, w]²` for `c ≥ w > 0`.
///
/// Close blocks use the closed form; distant blocks use the even moment
/// series of the triangular law of `x - y`, which avoids cancelling
/// `c² ln c` sized terms.
#[inline]
pub(crate) fn mean_log_offset(c: f64, w: f64) -> f64 {
    let ratio = w / c;
    if ratio > 0.25 {
        return offset_square(w, c) / (w * w);
    }
    let r2 = ratio * ratio;
    let mut power = r2;
    let mut sum = 0.0;
    for k in 1..=40 {
        let kf = k as f64;
        let term = power / (kf * (2.0 * kf + 1.0) * (2.0 * kf + 2.0));
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
        power *= r2;
    }
    ln(c) - sum
}

/// Cell-pair averages `K_d` of `-ln|x - y|` for two cells of width `h`
/// whose left ends are `d·h` apart, `d = 0..n`.
pub(crate) fn toeplitz_row(h: f64, n: usize) -> alloc::vec::Vec<f64> {
    let mut row = alloc::vec::Vec::with_capacity(n);
    row.push(-square_self(h) / (h * h));
    for d in 1..n {
        row.push(-mean_log_offset(d as f64 * h, h));
    }
    row
}

/// Second antiderivative of `ln|u|`, `F(u) = u² ln|u| / 2 - 3u²/4`.
#[inline]
fn second_antiderivative(u: f64) -> f64 {
    0.5 * u.abs() * xlogx(u.abs()) - 0.75 * u * u
}

/// `∫_a^b ∫_c^d ln|x - y| dy dx` for arbitrary intervals.
pub(crate) fn rectangle(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let f = second_antiderivative;
    f(b - c) - f(a - c) - f(b - d) + f(a - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::Adaptive;

    #[test]
    fn segment_example() {
        assert!((segment(0.0, 2.0, 1.0) + 2.0).abs() < 1e-15);
        // c outside the interval
        let q = Adaptive::default().integrate(|v| (v - 5.0f64).abs().ln(), 1.0, 3.0).value;
        assert!((segment(1.0, 3.0, 5.0) - q).abs() < 1e-13);
        let q = Adaptive::default().integrate(|v| (v + 0.5f64).abs().ln(), 1.0, 3.0).value;
        assert!((segment(1.0, 3.0, -0.5) - q).abs() < 1e-13);
    }

    #[test]
    fn square_and_rectangle_agree() {
        for &r in &[0.01, 0.5, 1.0, 3.0] {
            assert!((rectangle(0.0, r, 0.0, r) - square_self(r)).abs() < 1e-14);
            assert!((rectangle(2.0, 2.0 + r, 2.0, 2.0 + r) - square_self(r)).abs() < 1e-12);
        }
        assert!((square_self(1.0) + 1.5).abs() < 1e-15);
    }

    #[test]
    fn offset_matches_rectangle_and_series() {
        for &w in &[0.01, 0.3, 1.0] {
            for d in [1.0, 1.5, 2.0, 4.0, 7.5, 40.0, 1000.0] {
                let c = d * w;
                let via_rect = rectangle(c, c + w, 0.0, w) / (w * w);
                let via_mean = mean_log_offset(c, w);
                assert!((via_rect - via_mean).abs() < 1e-9 * via_mean.abs().max(1.0), "w = {w}, c = {c}");
                if d < 4.0 {
                    assert!((offset_square(w, c) / (w * w) - via_mean).abs() < 1e-13);
                }
            }
        }
        // the boundary case c = a uses 0 ln 0 = 0
        let a = 0.7f64;
        let expect = 0.5 * (2.0 * a).powi(2) * (2.0 * a).ln() - a * a * a.ln() - 1.5 * a * a;
        assert!((offset_square(a, a) - expect).abs() < 1e-15);
    }

    #[test]
    fn series_continuity_at_switch() {
        let w = 1.0;
        let below = offset_square(w, 3.999_999) / (w * w);
        let above = mean_log_offset(4.000_001, w);
        assert!((below - above).abs() < 1e-6);
    }
}
