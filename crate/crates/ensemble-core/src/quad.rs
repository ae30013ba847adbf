//! Adaptive Gauss–Legendre quadrature.
//!
//! Nodes and weights are generated by Newton iteration on the Legendre
//! recurrence, so no tabulated constants are involved. The adaptive
//! driver bisects until the two-half estimate agrees with the whole-panel
//! estimate to a tolerance proportional to the panel width; panels at the
//! depth limit are accepted, which keeps integrable endpoint
//! singularities (logarithms, square roots) cheap and accurate.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{cos, PI};

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            let mut x = cos(PI * (i as f64 + 0.75) / (nf + 0.5));
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// Adaptive integrator settings.
#[derive(Debug, Clone)]
pub struct Adaptive {
    rule: GaussLegendre,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
    pub max_evaluations: usize,
}

impl Default for Adaptive {
    fn default() -> Self {
        Adaptive::new(1e-13, 1e-13)
    }
}

impl Adaptive {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Adaptive { rule: GaussLegendre::new(15), abs_tol, rel_tol, max_depth: 56, max_evaluations: 50_000_000 }
    }

    /// `∫_a^b f`, with `f` smooth except possibly at the endpoints.
    ///
    /// Non-finite samples (a node landing exactly on an integrable
    /// singularity) count as zero.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> QuadResult {
        let mut f = move |x: f64| {
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        if a == b {
            return QuadResult { value: 0.0, error_estimate: 0.0, evaluations: 0 };
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let n = self.rule.len();
        let whole = self.rule.integrate(&mut f, lo, hi);
        let mut evaluations = n;
        let scale = whole.abs();
        let width = hi - lo;
        let mut value = 0.0;
        let mut error = 0.0;
        let mut stack: Vec<(f64, f64, f64, u32)> = vec![(lo, hi, whole, 0)];
        while let Some((x0, x1, est, depth)) = stack.pop() {
            let mid = 0.5 * (x0 + x1);
            let left = self.rule.integrate(&mut f, x0, mid);
            let right = self.rule.integrate(&mut f, mid, x1);
            evaluations += 2 * n;
            let refined = left + right;
            let diff = (refined - est).abs();
            let allowed = self.abs_tol.max(self.rel_tol * scale) * (x1 - x0) / width;
            // below this the difference is round-off, not truncation error
            let noise = 64.0 * f64::EPSILON * (left.abs() + right.abs());
            let tiny = (x1 - x0) <= 1024.0 * f64::EPSILON * x0.abs().max(x1.abs());
            let stop = depth >= self.max_depth || evaluations >= self.max_evaluations || tiny;
            if diff <= allowed.max(noise) || stop {
                value += refined;
                error += diff;
            } else {
                stack.push((x0, mid, left, depth + 1));
                stack.push((mid, x1, right, depth + 1));
            }
        }
        QuadResult { value: sign * value, error_estimate: error, evaluations }
    }

    /// `∫_a^b f` split at interior points where `f` is singular or kinked.
    pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64, breaks: &[f64]) -> QuadResult {
        let mut points: Vec<f64> = breaks.iter().copied().filter(|&p| p > a && p < b).collect();
        points.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
        points.dedup();
        let mut total = QuadResult { value: 0.0, error_estimate: 0.0, evaluations: 0 };
        let mut left = a;
        for p in points.into_iter().chain(core::iter::once(b)) {
            let piece = self.integrate(&mut f, left, p);
            total.value += piece.value;
            total.error_estimate += piece.error_estimate;
            total.evaluations += piece.evaluations;
            left = p;
        }
        total
    }
}

/// `∫_a^b f` with default tolerances.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    Adaptive::default().integrate(f, a, b).value
}

/// Double-exponential (tanh-sinh) quadrature for integrands with
/// endpoint singularities.
///
/// The integrand receives `(x, x - a, b - x)` with both distances computed
/// without cancellation, so factors such as `ln(b - x)` stay accurate at
/// nodes that round to the endpoint.
#[derive(Debug, Clone, Copy)]
pub struct TanhSinh {
    pub rel_tol: f64,
    pub max_level: u32,
}

impl Default for TanhSinh {
    fn default() -> Self {
        TanhSinh { rel_tol: 1e-14, max_level: 12 }
    }
}

impl TanhSinh {
    pub fn integrate<F: FnMut(f64, f64, f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> QuadResult {
        let half = 0.5 * (b - a);
        let t_max = 4.0;
        // one node pair at parameter t; returns the weighted contribution
        let mut pair = |t: f64, evals: &mut usize| -> f64 {
            let s = 0.5 * PI * libm::sinh(t);
            let e = libm::exp(-2.0 * s.abs());
            // 1 - |u| = 2e / (1 + e), weight from d/dt tanh(s)
            let comp = 2.0 * e / (1.0 + e);
            let w = 0.5 * PI * libm::cosh(t) * 4.0 * e / ((1.0 + e) * (1.0 + e));
            if w == 0.0 || comp == 0.0 {
                return 0.0;
            }
            let d = half * comp;
            let mut total = 0.0;
            let nodes = [(a + d, d, b - a - d), (b - d, b - a - d, d)];
            let used = if t == 0.0 { 1 } else { 2 };
            for &(x, dl, dr) in &nodes[..used] {
                let v = f(x, dl, dr);
                *evals += 1;
                if v.is_finite() {
                    total += w * v;
                }
            }
            total
        };
        let mut evaluations = 0;
        let mut h = 1.0;
        let mut sum = pair(0.0, &mut evaluations);
        let mut k = 1;
        while k as f64 * h <= t_max {
            sum += pair(k as f64 * h, &mut evaluations);
            k += 1;
        }
        let mut estimate = half * h * sum;
        let mut error = f64::INFINITY;
        for _ in 0..self.max_level {
            h *= 0.5;
            let mut k = 1;
            while k as f64 * h <= t_max {
                sum += pair(k as f64 * h, &mut evaluations);
                k += 2;
            }
            let next = half * h * sum;
            error = (next - estimate).abs();
            estimate = next;
            if error <= self.rel_tol * estimate.abs() {
                break;
            }
        }
        QuadResult { value: estimate, error_estimate: error, evaluations }
    }

    /// `∫_a^b f` split at interior points, each piece by tanh-sinh.
    pub fn integrate_with_breaks<F: FnMut(f64, f64, f64) -> f64>(&self, mut f: F, a: f64, b: f64, breaks: &[f64]) -> QuadResult {
        let mut points: Vec<f64> = breaks.iter().copied().filter(|&p| p > a && p < b).collect();
        points.sort_by(|x, y| x.total_cmp(y));
        points.dedup();
        let mut total = QuadResult { value: 0.0, error_estimate: 0.0, evaluations: 0 };
        let mut left = a;
        for p in points.into_iter().chain(core::iter::once(b)) {
            let piece = self.integrate(&mut f, left, p);
            total.value += piece.value;
            total.error_estimate += piece.error_estimate;
            total.evaluations += piece.evaluations;
            left = p;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(15);
        for deg in 0..30 {
            let got = rule.integrate(|x| x.powi(deg), 0.0, 1.0);
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((got - exact).abs() < 1e-14, "degree {deg}");
        }
        let w: f64 = rule.mapped(-1.0, 1.0).map(|(_, w)| w).sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_and_even_rules() {
        for n in 1..40 {
            let rule = GaussLegendre::new(n);
            let got = rule.integrate(|x| x.exp(), -1.0, 1.0);
            if n >= 8 {
                assert!((got - (1f64.exp() - (-1f64).exp())).abs() < 1e-13, "n = {n}");
            }
        }
    }

    #[test]
    fn log_endpoint_singularity() {
        let r = Adaptive::default().integrate(|x| x.ln(), 0.0, 1.0);
        assert!((r.value + 1.0).abs() < 1e-12, "{r:?}");
        let r = Adaptive::default().integrate(|x| 1.0 / x.sqrt(), 0.0, 4.0);
        assert!((r.value - 4.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn interior_singularity_with_breaks() {
        let r = Adaptive::default().integrate_with_breaks(|v| (v - 1.0f64).abs().ln(), 0.0, 2.0, &[1.0]);
        assert!((r.value + 2.0).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn reversed_limits() {
        let r = integrate(|x| x * x, 1.0, 0.0);
        assert!((r + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tanh_sinh_endpoint_logs() {
        let ts = TanhSinh::default();
        // ∫_0^1 ln x = -1, with the distance to the left end passed exactly
        let r = ts.integrate(|_, dl, _| dl.ln(), 0.0, 1.0);
        assert!((r.value + 1.0).abs() < 1e-14, "{r:?}");
        // ∫_0^1 ln(1-x)/√x = 4 ln 2 - 4
        let r = ts.integrate(|x, _, dr| dr.ln() / x.sqrt(), 0.0, 1.0);
        assert!((r.value - (4.0 * 2f64.ln() - 4.0)).abs() < 1e-12, "{r:?}");
        let r = ts.integrate_with_breaks(|x, _, _| (x - 0.3f64).abs().sqrt(), 0.0, 1.0, &[0.3]);
        let exact = 2.0 / 3.0 * (0.3f64.powf(1.5) + 0.7f64.powf(1.5));
        assert!((r.value - exact).abs() < 1e-13);
    }
}
