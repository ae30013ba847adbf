//! Rate functions of the rightmost particle.
//!
//! The upper tail is governed by `J(t) = inf_{y ≥ t} G(y) - G(b_V)` where
//! `G(x) = -2θ ∫ ln|x-t| φ(t) dt + V(x)` is the effective potential of a
//! test particle; the lower tail by `F^{θ,∞} - F^{θ,t}`. Both are computed
//! from solved equilibria and, for the Krawtchouk and Jack–Plancherel
//! families, from closed forms.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::equilibrium::{krawtchouk_band, jack_band, solve, solve_unbounded, EquilibriumSolution, GridDensity};
use crate::error::{Error, Result};
use crate::kernel;
use crate::math::{ceil, exp, ln, round, sqrt, xlogx};
use crate::measures::Potential;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `∫ ln|x - t| φ(t) dt` for a piecewise-constant density, cell by cell in
/// closed form.
pub fn log_potential(phi: &GridDensity, x: f64) -> f64 {
    let h = phi.h();
    phi.values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(j, &v)| v * kernel::segment(j as f64 * h, (j + 1) as f64 * h, x))
        .sum()
}

/// `G(x) = -2θ ∫ ln|x-t| φ(t) dt + V(x)`.
pub fn g_function(x: f64, phi: &GridDensity, v: &Potential, theta: f64) -> f64 {
    -2.0 * theta * log_potential(phi, x) + v.eval_limit(x)
}

/// Numeric rate data built from a solved equilibrium.
#[derive(Debug, Clone)]
pub struct RateProfile {
    density: GridDensity,
    potential: Potential,
    theta: f64,
    b_v: f64,
    right: f64,
    g_at_b: f64,
}

impl RateProfile {
    /// Uses the solution's right support edge as `b_V`; the infimum in `J`
    /// ranges up to the end of the solution grid or of the domain of `V`,
    /// whichever comes first.
    pub fn new(sol: &EquilibriumSolution, v: &Potential) -> Self {
        let theta = sol.density.theta();
        let b_v = sol.support_edges.1;
        let right = v.domain_right().map_or(sol.density.s(), |r| r.min(sol.density.s()));
        let g_at_b = g_function(b_v, &sol.density, v, theta);
        RateProfile { density: sol.density.clone(), potential: v.clone(), theta, b_v, right, g_at_b }
    }

    pub fn b_v(&self) -> f64 {
        self.b_v
    }

    /// Right end of the range searched for the infimum.
    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn g(&self, x: f64) -> f64 {
        g_function(x, &self.density, &self.potential, self.theta)
    }

    /// `J(t)`: zero up to `b_V`, else `inf_{y ∈ [t, right]} G(y) - G(b_V)`
    /// by a grid scan refined with golden-section search to `1e-8` in `y`.
    pub fn j(&self, t: f64) -> f64 {
        if t <= self.b_v {
            return 0.0;
        }
        if t >= self.right {
            return self.g(t) - self.g_at_b;
        }
        let (y, g) = minimize(|y| self.g(y), t, self.right);
        let _ = y;
        g - self.g_at_b
    }

    /// Rows `(t, G(t), J(t))`.
    pub fn tabulate(&self, ts: &[f64]) -> Vec<(f64, f64, f64)> {
        ts.iter().map(|&t| (t, self.g(t), self.j(t))).collect()
    }
}

/// Minimum of `f` on `[lo, hi]`: a 64-point scan, then golden-section
/// search in the bracket of the best sample.
fn minimize<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> (f64, f64) {
    let n = 64;
    let step = (hi - lo) / n as f64;
    let mut best = (lo, f(lo));
    let mut best_k: usize = 0;
    for k in 1..=n {
        let y = if k == n { hi } else { lo + k as f64 * step };
        let v = f(y);
        if v < best.1 {
            best = (y, v);
            best_k = k;
        }
    }
    let mut a = lo + (best_k.saturating_sub(1)) as f64 * step;
    let mut b = (lo + (best_k + 1) as f64 * step).min(hi);
    let g = (sqrt(5.0) - 1.0) / 2.0;
    while b - a > 1e-8 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mid = 0.5 * (a + b);
    let v = f(mid);
    if v < best.1 {
        (mid, v)
    } else {
        best
    }
}

fn check_positive(what: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(what, format!("{x} must be positive and finite")))
    }
}

/// `Λ(y)` of the Krawtchouk family, `y ≥ b`.
pub fn krawtchouk_lambda(y: f64, m_rate: f64, theta: f64) -> f64 {
    let (a, b) = krawtchouk_band(m_rate, theta);
    let p = sqrt(y - a);
    let q = sqrt((y - b).max(0.0));
    let lo = p + q * sqrt(a / b);
    let hi = p + q * sqrt(b / a);
    -y * ln(lo / hi) - (m_rate + theta) * ln(hi) + (m_rate - theta) * ln(p + q) + theta * ln(b - a)
}

/// `Λ'(y) = -ln[(√(y-a) + √(y-b)√(a/b)) / (√(y-a) + √(y-b)√(b/a))]`.
pub fn krawtchouk_lambda_derivative(y: f64, m_rate: f64, theta: f64) -> f64 {
    let (a, b) = krawtchouk_band(m_rate, theta);
    let p = sqrt(y - a);
    let q = sqrt((y - b).max(0.0));
    -ln((p + q * sqrt(a / b)) / (p + q * sqrt(b / a)))
}

/// Closed-form upper-tail rate of the Krawtchouk family,
/// `2Λ(y) + V(y) - V(b) - (y-b)V'(b)` on `[b, 𝙼+θ]` and zero below `b`.
pub fn krawtchouk_j(y: f64, m_rate: f64, theta: f64) -> Result<f64> {
    check_positive("krawtchouk_j theta", theta)?;
    if !(m_rate > theta) || !m_rate.is_finite() {
        return Err(Error::domain("krawtchouk_j", format!("need 𝙼 > θ, got 𝙼 = {m_rate}, θ = {theta}")));
    }
    let r = m_rate + theta;
    if !(y >= 0.0) || y > r {
        return Err(Error::domain("krawtchouk_j", format!("y = {y} outside [0, {r}]")));
    }
    let (a, b) = krawtchouk_band(m_rate, theta);
    if y <= b {
        return Ok(0.0);
    }
    let v = |x: f64| xlogx(x) + xlogx(r - x);
    let dv_b = ln(b) - ln(a);
    Ok(2.0 * krawtchouk_lambda(y, m_rate, theta) + v(y) - v(b) - (y - b) * dv_b)
}

/// `Λ(α)` of the Jack family, `α ≥ 0`.
pub fn jack_lambda(alpha: f64, t: f64, theta: f64) -> f64 {
    let b = jack_band(t, theta).1;
    let st = sqrt(t);
    let sa = sqrt(alpha);
    let c = 4.0 * st * theta;
    let r = sqrt(c + alpha);
    let k = (st - 1.0) / (st + 1.0);
    (b + alpha) * ln((sa + r) / (k * sa + r)) - 2.0 * st * theta * sa / (sa + r) - 2.0 * theta * ln((sa + r) / sqrt(c))
}

/// `Λ'(α) = ln[(√α + √(4√tθ+α)) / (k√α + √(4√tθ+α))]`, `k = (√t-1)/(√t+1)`.
pub fn jack_lambda_derivative(alpha: f64, t: f64, theta: f64) -> f64 {
    let st = sqrt(t);
    let sa = sqrt(alpha);
    let r = sqrt(4.0 * st * theta + alpha);
    let k = (st - 1.0) / (st + 1.0);
    ln((sa + r) / (k * sa + r))
}

/// Closed-form upper-tail rate of the Jack–Plancherel family,
/// `2Λ(α) + (b+α) ln((b+α)/b) - α` at `y = b + α`, zero below `b`.
pub fn jack_j(y: f64, t: f64, theta: f64) -> Result<f64> {
    check_positive("jack_j t", t)?;
    check_positive("jack_j theta", theta)?;
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::domain("jack_j", format!("y = {y} must be nonnegative")));
    }
    let b = jack_band(t, theta).1;
    if y <= b {
        return Ok(0.0);
    }
    let alpha = y - b;
    Ok(2.0 * jack_lambda(alpha, t, theta) + y * crate::math::ln_1p(alpha / b) - alpha)
}

/// `8√(2√(𝙼θ)) / (3(𝙼-θ))`, the limit of `J(b+α)/α^{3/2}` for Krawtchouk.
pub fn krawtchouk_edge_prefactor(m_rate: f64, theta: f64) -> f64 {
    8.0 * sqrt(2.0 * sqrt(m_rate * theta)) / (3.0 * (m_rate - theta))
}

/// `4 / (3√(θ√t)(√t+1))`, the limit of `J(b+α)/α^{3/2}` for Jack.
pub fn jack_edge_prefactor(t: f64, theta: f64) -> f64 {
    4.0 / (3.0 * sqrt(theta * sqrt(t)) * (sqrt(t) + 1.0))
}

/// Power-law fit `J(b+α) ≈ C α^p` near the edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticFit {
    /// Least-squares slope of `ln J` against `ln α`.
    pub exponent: f64,
    /// `lim J/α^{3/2}`, from a straight-line fit of `J/α^{3/2}` against
    /// `√α` extrapolated to `α = 0`.
    pub prefactor: f64,
    pub samples: usize,
}

/// Fits `rate(α)` on `samples` log-spaced points of `[alpha_min, alpha_max]`.
pub fn fit_edge_asymptotic<F: Fn(f64) -> Result<f64>>(
    rate: F,
    alpha_min: f64,
    alpha_max: f64,
    samples: usize,
) -> Result<AsymptoticFit> {
    if !(alpha_min > 0.0 && alpha_max > alpha_min) || samples < 3 {
        return Err(Error::invalid("need 0 < alpha_min < alpha_max and at least 3 samples"));
    }
    let mut lx = Vec::with_capacity(samples);
    let mut ly = Vec::with_capacity(samples);
    let mut sx = Vec::with_capacity(samples);
    let mut sy = Vec::with_capacity(samples);
    for k in 0..samples {
        let u = k as f64 / (samples - 1) as f64;
        let alpha = exp(ln(alpha_min) + u * (ln(alpha_max) - ln(alpha_min)));
        let j = rate(alpha)?;
        if !(j > 0.0) {
            return Err(Error::domain("fit_edge_asymptotic", format!("rate {j} at α = {alpha} is not positive")));
        }
        lx.push(ln(alpha));
        ly.push(ln(j));
        sx.push(sqrt(alpha));
        sy.push(j / (alpha * sqrt(alpha)));
    }
    let (exponent, _) = line_fit(&lx, &ly);
    let (_, prefactor) = line_fit(&sx, &sy);
    Ok(AsymptoticFit { exponent, prefactor, samples })
}

/// Least-squares `(slope, intercept)`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Lower-tail rate `F^{θ,∞} - F^{θ,t}` with both energies on a common cell
/// width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerTail {
    pub t: f64,
    pub rate: f64,
    pub f_t: f64,
    pub f_inf: f64,
    /// Right end of the interval used for `F^{θ,∞}`.
    pub s_inf: f64,
    pub h: f64,
}

/// `F^{θ,∞} - F^{θ,t}`, never positive.
///
/// `F^{θ,∞}` is solved on `[0, s]` with `s` from [`solve_unbounded`] at
/// `n_grid` cells; the cell width is then adjusted so that `t` is a whole
/// number of cells and both problems are re-solved on that grid.
pub fn lower_tail_rate(t: f64, v: &Potential, theta: f64, n_grid: usize) -> Result<LowerTail> {
    if !(t >= theta) || !t.is_finite() {
        return Err(Error::domain("lower_tail_rate", format!("need t ≥ θ, got t = {t}, θ = {theta}")));
    }
    let unbounded = solve_unbounded(v, theta, n_grid)?;
    lower_tail_rate_with(t, v, theta, unbounded.density.s(), unbounded.density.h())
}

/// [`lower_tail_rate`] with `F^{θ,∞}` taken on `[0, s_inf]` and target cell
/// width `h0`.
pub fn lower_tail_rate_with(t: f64, v: &Potential, theta: f64, s_inf: f64, h0: f64) -> Result<LowerTail> {
    if !(t >= theta) || !t.is_finite() {
        return Err(Error::domain("lower_tail_rate", format!("need t ≥ θ, got t = {t}, θ = {theta}")));
    }
    let n_t = (round(t / h0) as usize).max(64);
    let h = t / n_t as f64;
    let n_inf = (ceil(s_inf.max(t) / h - 1e-9) as usize).max(n_t);
    let f_t = solve(v, theta, t, n_t)?.energy;
    let f_inf = if n_inf == n_t { f_t } else { solve(v, theta, n_inf as f64 * h, n_inf)?.energy };
    Ok(LowerTail { t, rate: (f_inf - f_t).min(0.0), f_t, f_inf, s_inf: n_inf as f64 * h, h })
}

/// `I(θ⁻¹·1_{[0,θ]}) = θ(3/2 - ln θ) + θ⁻¹∫_0^θ V`, the energy of the only
/// admissible density on `[0, θ]`, with the potential integral supplied.
pub fn energy_of_saturated_block(theta: f64, integral_of_v: f64) -> f64 {
    theta * (1.5 - ln(theta)) + integral_of_v / theta
}

/// The six integrals `∫_0^∞ ln|a² ± b²z²| / (c²+d²z²)^n dz` and
/// `∫_0^∞ dz / (c²+d²z²)^n` with closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogIntegral {
    /// `𝓘⁻_{a,b,c,d;1} = π ln(a² + b²c²/d²) / (2cd)`.
    MinusOne { a: f64, b: f64, c: f64, d: f64 },
    /// `𝓘⁺_{a,b,c,d;1} = π ln(a + bc/d) / (cd)`.
    PlusOne { a: f64, b: f64, c: f64, d: f64 },
    /// `𝓘⁻_{a,b,1,1;2} = π ln(a²+b²)/4 - πb²/(2(a²+b²))`.
    MinusTwo { a: f64, b: f64 },
    /// `𝓘⁺_{a,b,1,1;2} = π ln(a+b)/2 - πb/(2a+2b)`.
    PlusTwo { a: f64, b: f64 },
    /// `𝒥_{c,d;1} = π / (2cd)`.
    JOne { c: f64, d: f64 },
    /// `𝒥_{1,1;2} = π/4`.
    JTwo,
}

impl LogIntegral {
    /// `(a, b, c, d)`, with the fixed values implied by the variant.
    pub fn params(&self) -> (f64, f64, f64, f64) {
        match *self {
            LogIntegral::MinusOne { a, b, c, d } | LogIntegral::PlusOne { a, b, c, d } => (a, b, c, d),
            LogIntegral::MinusTwo { a, b } | LogIntegral::PlusTwo { a, b } => (a, b, 1.0, 1.0),
            LogIntegral::JOne { c, d } => (1.0, 0.0, c, d),
            LogIntegral::JTwo => (1.0, 0.0, 1.0, 1.0),
        }
    }

    fn check(&self) -> Result<()> {
        let (a, b, c, d) = self.params();
        let finite = [a, b, c, d].iter().all(|x| x.is_finite());
        if !finite || a < 0.0 || b < 0.0 || c < 0.0 || d < 0.0 {
            return Err(Error::domain("log integral", "parameters must be finite and nonnegative"));
        }
        if !(c * d > 0.0) {
            return Err(Error::domain("log integral", format!("need cd > 0, got c = {c}, d = {d}")));
        }
        if !(a + b > 0.0) {
            return Err(Error::domain("log integral", format!("need a + b > 0, got a = {a}, b = {b}")));
        }
        Ok(())
    }

    /// Short name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            LogIntegral::MinusOne { .. } => "minus-1",
            LogIntegral::PlusOne { .. } => "plus-1",
            LogIntegral::MinusTwo { .. } => "minus-2",
            LogIntegral::PlusTwo { .. } => "plus-2",
            LogIntegral::JOne { .. } => "j-1",
            LogIntegral::JTwo => "j-2",
        }
    }

    /// The closed form.
    pub fn closed_form(&self) -> Result<f64> {
        self.check()?;
        Ok(match *self {
            LogIntegral::MinusOne { a, b, c, d } => PI * ln(a * a + b * b * c * c / (d * d)) / (2.0 * c * d),
            LogIntegral::PlusOne { a, b, c, d } => PI / (c * d) * ln(a + b * c / d),
            LogIntegral::MinusTwo { a, b } => PI / 4.0 * ln(a * a + b * b) - PI * b * b / (2.0 * (a * a + b * b)),
            LogIntegral::PlusTwo { a, b } => PI / 2.0 * ln(a + b) - b * PI / (2.0 * a + 2.0 * b),
            LogIntegral::JOne { c, d } => PI / (2.0 * c * d),
            LogIntegral::JTwo => PI / 4.0,
        })
    }

    /// Tanh-sinh quadrature after `z = (c/d) tan u`, split where the
    /// logarithm is singular.
    ///
    /// With `k = bc/d`, `R = √(a²+k²)` and `u* = atan2(a, k)` the factors
    /// are evaluated as `a cos u ∓ k sin u = R sin(u* ∓ u)` and
    /// `cos u = sin(π/2 - u)`, with every distance to a singular point
    /// taken from the quadrature rule rather than formed by subtraction.
    pub fn quadrature(&self) -> Result<f64> {
        self.check()?;
        let (a, b, c, d) = self.params();
        let k = b * c / d;
        let half_pi = 0.5 * PI;
        let ts = crate::quad::TanhSinh::default();
        let weight_power_two = matches!(self, LogIntegral::MinusTwo { .. } | LogIntegral::PlusTwo { .. } | LogIntegral::JTwo);
        // dz/(c²+d²z²)^n in terms of u
        let measure = |g: f64| if weight_power_two { let co = libm::sin(g); co * co } else { 1.0 / (c * d) };
        let value = match *self {
            LogIntegral::MinusOne { .. } | LogIntegral::MinusTwo { .. } => {
                let r = libm::hypot(a, k);
                let u_star = libm::atan2(a, k);
                let gap = libm::atan2(k, a);
                // ln|R sin(u*-u)| + ln(R sin(u*+u)) - 2 ln sin(π/2-u)
                let integrand = |delta: f64, u: f64, g: f64| {
                    let far = if u_star + u <= half_pi { libm::sin(u_star + u) } else { libm::sin(gap + g) };
                    (2.0 * ln(r) + ln(libm::sin(delta)) + ln(far) - 2.0 * ln(libm::sin(g))) * measure(g)
                };
                let left = ts.integrate(|u, _, dr| integrand(dr, u, gap + dr), 0.0, u_star).value;
                let right = ts.integrate(|u, dl, dr| integrand(dl, u, dr), u_star, half_pi).value;
                left + right
            }
            LogIntegral::PlusOne { .. } | LogIntegral::PlusTwo { .. } => {
                let integrand = |g: f64| {
                    let (sg, cg) = (libm::sin(g), libm::cos(g));
                    (ln(a * a * sg * sg + k * k * cg * cg) - 2.0 * ln(sg)) * measure(g)
                };
                ts.integrate(|_, _, dr| integrand(dr), 0.0, half_pi).value
            }
            LogIntegral::JOne { .. } | LogIntegral::JTwo => ts.integrate(|_, _, dr| measure(dr), 0.0, half_pi).value,
        };
        Ok(value)
    }
}

/// `draws` seeded parameter draws `a, b, c, d ~ U(0.05, 4)`, each expanded
/// into all six integrals.
pub fn random_log_integrals(seed: u64, draws: usize) -> Vec<LogIntegral> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(6 * draws);
    for _ in 0..draws {
        let mut p = || rng.random_range(0.05..4.0);
        let (a, b, c, d) = (p(), p(), p(), p());
        out.extend([
            LogIntegral::MinusOne { a, b, c, d },
            LogIntegral::PlusOne { a, b, c, d },
            LogIntegral::MinusTwo { a, b },
            LogIntegral::PlusTwo { a, b },
            LogIntegral::JOne { c, d },
            LogIntegral::JTwo,
        ]);
    }
    out
}

/// Closed-form integrals of `ln|x - y|` over segments and squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogCell {
    /// `∬_{[0,r]²} ln|x-y| = r² ln r - 3r²/2`, `r > 0`.
    Square { r: f64 },
    /// `∫_a^b ln|x-c| dx = (b-c)ln|b-c| + (c-a)ln|c-a| + a - b`, `a < b`.
    Segment { a: f64, b: f64, c: f64 },
    /// `∫_0^a ∫_0^a ln(c+x-y) dx dy`, `c ≥ a ≥ 0`, with `0 ln 0 = 0`.
    OffsetSquare { a: f64, c: f64 },
}

impl LogCell {
    pub fn closed_form(&self) -> Result<f64> {
        match *self {
            LogCell::Square { r } => {
                check_positive("square cell r", r)?;
                Ok(kernel::square_self(r))
            }
            LogCell::Segment { a, b, c } => {
                if !(a < b) || !c.is_finite() || !b.is_finite() || !a.is_finite() {
                    return Err(Error::domain("segment cell", format!("need finite a < b, got a = {a}, b = {b}")));
                }
                Ok(kernel::segment(a, b, c))
            }
            LogCell::OffsetSquare { a, c } => {
                if !(a >= 0.0 && c >= a) || !c.is_finite() {
                    return Err(Error::domain("offset square", format!("need c ≥ a ≥ 0, got a = {a}, c = {c}")));
                }
                Ok(kernel::offset_square(a, c))
            }
        }
    }

    /// Independent evaluation by (nested) tanh-sinh quadrature.
    pub fn quadrature(&self) -> Result<f64> {
        self.closed_form()?;
        let ts = crate::quad::TanhSinh { rel_tol: 1e-15, max_level: 12 };
        Ok(match *self {
            LogCell::Square { r } => {
                let inner = |x: f64, to_right: f64| {
                    ts.integrate(|_, _, dr| ln(dr), 0.0, x).value + ts.integrate(|_, dl, _| ln(dl), 0.0, to_right).value
                };
                ts.integrate(|_, dl, dr| inner(dl, dr), 0.0, r).value
            }
            LogCell::Segment { a, b, c } => {
                if c > a && c < b {
                    ts.integrate(|_, _, dr| ln(dr), a, c).value + ts.integrate(|_, dl, _| ln(dl), c, b).value
                } else {
                    ts.integrate(|x, _, _| ln((x - c).abs()), a, b).value
                }
            }
            LogCell::OffsetSquare { a, c } => {
                let gap = c - a;
                let inner = |x: f64| ts.integrate(|_, _, dr| ln(gap + x + dr), 0.0, a).value;
                ts.integrate(|_, dl, _| inner(dl), 0.0, a).value
            }
        })
    }
}
