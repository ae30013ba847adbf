//! Potentials, ensemble log-weights, exact partition functions, the
//! energy of atomic measures and the exact pmf decomposition.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{floor, ln, ln_1p, powf, sqrt, xlogx, LN_2};
use crate::specfun::{lgamma, log_q, LogSumExp, LogValue};
use crate::statespace::{empirical_measure, enumerate_states_with_budget, Cap, Configuration, EmpiricalMeasure, DEFAULT_STATE_BUDGET};

/// A piecewise-linear potential with an explicit derivative table.
/// Outside the table it continues linearly with the end slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    xs: Vec<f64>,
    values: Vec<f64>,
    derivatives: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, values: Vec<f64>, derivatives: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != values.len() || xs.len() != derivatives.len() {
            return Err(Error::invalid("a potential table needs at least two rows of (x, V, V')"));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("potential table abscissae must be strictly increasing"));
        }
        if xs.iter().chain(&values).chain(&derivatives).any(|v| !v.is_finite()) {
            return Err(Error::invalid("potential table entries must be finite"));
        }
        Ok(Table { xs, values, derivatives })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.derivatives
    }

    fn locate(&self, x: f64) -> usize {
        let k = self.xs.partition_point(|&p| p <= x);
        k.clamp(1, self.xs.len() - 1) - 1
    }

    fn eval(&self, x: f64) -> f64 {
        let last = self.xs.len() - 1;
        if x <= self.xs[0] {
            return self.values[0] + self.derivatives[0] * (x - self.xs[0]);
        }
        if x >= self.xs[last] {
            return self.values[last] + self.derivatives[last] * (x - self.xs[last]);
        }
        let k = self.locate(x);
        let t = (x - self.xs[k]) / (self.xs[k + 1] - self.xs[k]);
        self.values[k] * (1.0 - t) + self.values[k + 1] * t
    }

    fn derivative(&self, x: f64) -> f64 {
        let last = self.xs.len() - 1;
        if x <= self.xs[0] {
            return self.derivatives[0];
        }
        if x >= self.xs[last] {
            return self.derivatives[last];
        }
        let k = self.locate(x);
        let t = (x - self.xs[k]) / (self.xs[k + 1] - self.xs[k]);
        self.derivatives[k] * (1.0 - t) + self.derivatives[k + 1] * t
    }
}

/// Which potential family a [`Potential`] belongs to.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialFamily {
    /// Pure-β Jack measure; `m_rate` is the limit of `M_N / N`.
    Krawtchouk { m_rate: f64 },
    /// Jack measure with Plancherel specialization `s = tN`.
    JackPlancherel { t: f64 },
    /// User-supplied table, identical for every `N`.
    Tabulated(Table),
}

/// A potential family `(V_N, V, V')` for a fixed `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    family: PotentialFamily,
    theta: f64,
    xi: Option<f64>,
    offset_a: f64,
}

/// Largest cap `M_N` for a Krawtchouk family with rate `m_rate`.
pub fn krawtchouk_cap(m_rate: f64, n: usize) -> u64 {
    floor(m_rate * n as f64 + 1e-9) as u64
}

/// The pure-β (Krawtchouk) potential with rate `𝙼 = m_rate`:
/// `V(x) = x ln x + (𝙼+θ-x) ln(𝙼+θ-x)` on `[0, 𝙼+θ]`.
pub fn krawtchouk_potential(m_rate: f64, theta: f64) -> Result<Potential> {
    if !(m_rate > 0.0) || !m_rate.is_finite() {
        return Err(Error::invalid(format!("Krawtchouk rate must be positive, got {m_rate}")));
    }
    check_theta(theta)?;
    Ok(Potential { family: PotentialFamily::Krawtchouk { m_rate }, theta, xi: None, offset_a: 0.0 })
}

/// The Jack–Plancherel potential `V(x) = A + x ln x - ln(etθ) x`, with `A`
/// the smallest constant making `V(x) ≥ 2θ ln(1+x²)` on `[0, ∞)`.
///
/// Because `Γ(y+1) ≥ (y/e)^y`, every finite-`N` potential dominates the
/// limit, so the same `A` serves all `N`.
pub fn jack_potential(t: f64, theta: f64) -> Result<Potential> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("Plancherel time t must be positive, got {t}")));
    }
    check_theta(theta)?;
    let offset_a = jack_offset(t, theta);
    Ok(Potential { family: PotentialFamily::JackPlancherel { t }, theta, xi: Some(1.0), offset_a })
}

/// `max_{x ≥ 0} [2θ ln(1+x²) - x ln x + x ln(etθ)]`, found by a grid scan
/// on `[0, x_max]` plus golden-section refinement. Beyond `x_max` the
/// bracket is decreasing, which is certified by the sign of its
/// derivative bound `4θ/x - ln x + ln(tθ)`.
fn jack_offset(t: f64, theta: f64) -> f64 {
    let lt = ln(t * theta) + 1.0;
    let h = |x: f64| 2.0 * theta * ln_1p(x * x) - xlogx(x) + x * lt;
    let mut x_max: f64 = 1e3;
    while 4.0 * theta / x_max - ln(x_max) + ln(t * theta) >= 0.0 {
        x_max *= 2.0;
    }
    let n = 20_000;
    let mut best = (0.0, h(0.0));
    let mut prev = 0.0;
    let mut bracket = (0.0, 0.0);
    for k in 1..=n {
        let u = k as f64 / n as f64;
        let x = x_max * u * u;
        let v = h(x);
        if v > best.1 {
            best = (x, v);
            let next = (k + 1).min(n) as f64 / n as f64;
            bracket = (prev, x_max * next * next);
        }
        prev = x;
    }
    let (mut lo, mut hi) = bracket;
    if hi > lo {
        let g = (sqrt(5.0) - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if h(a) >= h(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let v = h(0.5 * (lo + hi));
        if v > best.1 {
            best = (0.5 * (lo + hi), v);
        }
    }
    best.1 + 1e-12 * best.1.abs().max(1.0)
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("theta = {theta} must be positive and finite")))
    }
}

impl Potential {
    /// A tabulated potential used for every `N`; `xi` is the growth margin
    /// the user claims (checked by [`Potential::growth_report`]).
    pub fn tabulated(table: Table, theta: f64, xi: Option<f64>) -> Result<Self> {
        check_theta(theta)?;
        Ok(Potential { family: PotentialFamily::Tabulated(table), theta, xi, offset_a: 0.0 })
    }

    /// The constant potential `V ≡ c`.
    pub fn constant(c: f64, theta: f64) -> Result<Self> {
        Self::tabulated(Table::new(alloc::vec![0.0, 1.0], alloc::vec![c, c], alloc::vec![0.0, 0.0])?, theta, None)
    }

    pub fn family(&self) -> &PotentialFamily {
        &self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Growth margin `ξ`, when the family claims one.
    pub fn xi(&self) -> Option<f64> {
        self.xi
    }

    /// The additive constant `A` of the Jack family (0 otherwise).
    pub fn offset_a(&self) -> f64 {
        self.offset_a
    }

    /// Right end of the domain where `V` is finite, if bounded.
    pub fn domain_right(&self) -> Option<f64> {
        match self.family {
            PotentialFamily::Krawtchouk { m_rate } => Some(m_rate + self.theta),
            _ => None,
        }
    }

    /// `V_N(x)`; `+∞` where the corresponding single-particle weight
    /// vanishes.
    pub fn eval_finite_n(&self, n: usize, x: f64) -> f64 {
        let nf = n as f64;
        let theta = self.theta;
        match &self.family {
            PotentialFamily::Krawtchouk { m_rate } => {
                let mn = krawtchouk_cap(*m_rate, n) as f64;
                let y = nf * x;
                let a1 = y + 1.0;
                let a2 = mn + nf * theta - y + 1.0 - theta;
                if !(a1 > 0.0) || !(a2 > 0.0) {
                    return f64::INFINITY;
                }
                (lgamma(a1) + lgamma(a2) - (mn + nf * theta + 2.0 - theta) * ln(nf) + (mn + nf * theta - theta)) / nf
            }
            PotentialFamily::JackPlancherel { t } => {
                if x < 0.0 {
                    return f64::INFINITY;
                }
                let y = nf * x;
                self.offset_a + (lgamma(y + 1.0) - y * ln(t * theta * nf)) / nf
            }
            PotentialFamily::Tabulated(table) => table.eval(x),
        }
    }

    /// The limit potential `V(x)`.
    pub fn eval_limit(&self, x: f64) -> f64 {
        let theta = self.theta;
        match &self.family {
            PotentialFamily::Krawtchouk { m_rate } => {
                let r = m_rate + theta;
                if x < 0.0 || x > r {
                    f64::INFINITY
                } else {
                    xlogx(x) + xlogx(r - x)
                }
            }
            PotentialFamily::JackPlancherel { t } => {
                if x < 0.0 {
                    f64::INFINITY
                } else {
                    self.offset_a + xlogx(x) - x * (1.0 + ln(t * theta))
                }
            }
            PotentialFamily::Tabulated(table) => table.eval(x),
        }
    }

    /// `V'(x)`. Logarithmic endpoint singularities are evaluated at
    /// `δ = 2⁻⁴⁰·scale` inside the domain.
    pub fn eval_derivative(&self, x: f64) -> Result<f64> {
        let theta = self.theta;
        match &self.family {
            PotentialFamily::Krawtchouk { m_rate } => {
                let r = m_rate + theta;
                if !(0.0..=r).contains(&x) {
                    return Err(Error::domain("krawtchouk V'", format!("x = {x} outside [0, {r}]")));
                }
                let delta = r * powf(2.0, -40.0);
                let x = x.clamp(delta, r - delta);
                Ok(ln(x) - ln(r - x))
            }
            PotentialFamily::JackPlancherel { t } => {
                if x < 0.0 {
                    return Err(Error::domain("jack V'", format!("x = {x} is negative")));
                }
                let delta = (t * theta).max(1.0) * powf(2.0, -40.0);
                Ok(ln(x.max(delta)) - ln(t * theta))
            }
            PotentialFamily::Tabulated(table) => Ok(table.derivative(x)),
        }
    }

    /// Checks `V(x) ≥ (1+ξ)θ ln(1+x²)` on a geometric grid up to `10⁴`.
    /// Violations are reported, never rejected.
    pub fn growth_report(&self) -> GrowthReport {
        let applicable = self.domain_right().is_none();
        let xi = self.xi.unwrap_or(0.0);
        let mut report = GrowthReport { applicable, xi, checked: 0, violations: 0, worst_margin: f64::INFINITY, worst_x: 0.0 };
        if !applicable {
            return report;
        }
        let mut xs: Vec<f64> = alloc::vec![0.0];
        let mut x = 1e-3;
        while x <= 1e4 {
            xs.push(x);
            x *= 1.02;
        }
        xs.push(1e4);
        for x in xs {
            let margin = self.eval_limit(x) - (1.0 + xi) * self.theta * ln_1p(x * x);
            report.checked += 1;
            if margin < report.worst_margin {
                report.worst_margin = margin;
                report.worst_x = x;
            }
            if margin < -1e-12 {
                report.violations += 1;
            }
        }
        report
    }

    /// `sup_x |V_N(x) - V(x)|` over the given points.
    pub fn sup_deviation(&self, n: usize, xs: &[f64]) -> f64 {
        xs.iter()
            .map(|&x| {
                let (a, b) = (self.eval_finite_n(n, x), self.eval_limit(x));
                if a.is_finite() && b.is_finite() {
                    (a - b).abs()
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// The measured constant `C_N = sup|V_N - V| · N / ln(N+1)`; the
    /// convergence rate is only ever reported, never assumed.
    pub fn convergence_constant(&self, n: usize, xs: &[f64]) -> f64 {
        self.sup_deviation(n, xs) * n as f64 / ln(n as f64 + 1.0)
    }
}

/// Outcome of [`Potential::growth_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthReport {
    /// False for families on a bounded domain, where the growth condition
    /// is not required.
    pub applicable: bool,
    pub xi: f64,
    pub checked: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub worst_x: f64,
}

impl GrowthReport {
    pub fn holds(&self) -> bool {
        !self.applicable || self.violations == 0
    }
}

/// Pair interaction of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interaction {
    /// `∏ Q_θ(ℓ_i - ℓ_j)`.
    QTheta,
    /// `∏ |ℓ_i - ℓ_j|^β`.
    Coulomb { beta: f64 },
}

/// Everything needed to weigh configurations of one ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub n: usize,
    pub theta: f64,
    pub cap: Cap,
    pub potential: Potential,
    pub interaction: Interaction,
}

impl EnsembleSpec {
    pub fn new(n: usize, theta: f64, cap: Cap, potential: Potential, interaction: Interaction) -> Result<Self> {
        check_theta(theta)?;
        if n == 0 {
            return Err(Error::invalid("an ensemble needs at least one particle"));
        }
        if potential.theta() != theta {
            return Err(Error::invalid("potential and ensemble use different theta"));
        }
        Ok(EnsembleSpec { n, theta, cap, potential, interaction })
    }

    /// The pure-β Jack ensemble with `N` particles and cap `M`; the
    /// potential rate is `M/N`, so `M_N = M` exactly.
    pub fn krawtchouk(n: usize, cap: u64, theta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("an ensemble needs at least one particle"));
        }
        let rate = cap as f64 / n as f64;
        let potential = if cap == 0 {
            krawtchouk_potential(f64::MIN_POSITIVE, theta)?
        } else {
            krawtchouk_potential(rate, theta)?
        };
        Self::new(n, theta, Cap::Finite(cap), potential, Interaction::QTheta)
    }

    /// The Jack–Plancherel ensemble with `s = tN`, truncated at the
    /// smallest `λ₁`-level whose neglected mass is at most `tail_eps`.
    pub fn jack_plancherel(n: usize, t: f64, theta: f64, tail_eps: f64) -> Result<Self> {
        let potential = jack_potential(t, theta)?;
        let cap = plancherel_truncation(n, t, theta, tail_eps);
        Self::new(n, theta, cap, potential, Interaction::QTheta)
    }

    pub fn with_interaction(mut self, interaction: Interaction) -> Self {
        self.interaction = interaction;
        self
    }

    /// Family name used in file formats.
    pub fn family_name(&self) -> &'static str {
        match self.potential.family() {
            PotentialFamily::Krawtchouk { .. } => "krawtchouk",
            PotentialFamily::JackPlancherel { .. } => "jack",
            PotentialFamily::Tabulated(_) => "tabulated",
        }
    }

    pub(crate) fn check(&self, c: &Configuration) -> Result<()> {
        if c.n() != self.n {
            return Err(Error::invalid(format!("configuration has {} particles, ensemble has {}", c.n(), self.n)));
        }
        if c.theta() != self.theta {
            return Err(Error::invalid("configuration and ensemble use different theta"));
        }
        if let Some(m) = self.cap.level() {
            if c.to_partition()[0] > m {
                return Err(Error::invalid(format!("λ₁ = {} exceeds the ensemble cap {m}", c.to_partition()[0])));
            }
        }
        Ok(())
    }

    /// `-N V_N(ℓ/N)` for one particle.
    #[inline]
    pub(crate) fn log_single(&self, position: f64) -> f64 {
        let nf = self.n as f64;
        -nf * self.potential.eval_finite_n(self.n, position / nf)
    }

    /// Log pair factor for a gap `d > 0`.
    #[inline]
    pub(crate) fn log_pair(&self, d: f64) -> f64 {
        match self.interaction {
            Interaction::QTheta => log_q(d, self.theta),
            Interaction::Coulomb { beta } => beta * ln(d),
        }
    }
}

/// Truncation level for the Jack–Plancherel ensemble.
///
/// Under this measure `|λ|` is Poisson with mean `θsN = θtN²`, and
/// `λ₁ ≤ |λ|`, so the level `L` with `P(|λ| > L) ≤ ε` neglects at most `ε`.
/// The Poisson tail is bounded by `p(L+1)·(L+2)/(L+2-μ)`.
pub fn plancherel_truncation(n: usize, t: f64, theta: f64, tail_eps: f64) -> Cap {
    let mu = theta * t * (n as f64) * (n as f64);
    let log_pmf = |k: f64| k * ln(mu) - mu - lgamma(k + 1.0);
    let mut level = floor(mu).max(0.0);
    loop {
        let k = level + 1.0;
        if k + 1.0 > mu {
            let bound = log_pmf(k) + ln((k + 1.0) / (k + 1.0 - mu));
            if bound <= ln(tail_eps) {
                return Cap::Truncated { level: level as u64, tail_mass: crate::math::exp(bound) };
            }
        }
        level += 1.0;
    }
}

/// `ln` of the unnormalized weight of `c`:
/// `Σ_{i<j} ln Q_θ(ℓ_i-ℓ_j) - N Σ_i V_N(ℓ_i/N)` (or `β ln|ℓ_i-ℓ_j|` pairs).
pub fn log_weight(spec: &EnsembleSpec, c: &Configuration) -> Result<LogValue> {
    spec.check(c)?;
    Ok(log_weight_unchecked(spec, c))
}

pub(crate) fn log_weight_unchecked(spec: &EnsembleSpec, c: &Configuration) -> LogValue {
    let pos = c.positions();
    let mut total = 0.0;
    for (i, &p) in pos.iter().enumerate() {
        let single = spec.log_single(p);
        if single == f64::NEG_INFINITY || single.is_nan() {
            return LogValue::ZERO;
        }
        total += single;
        for &q in &pos[i + 1..] {
            total += spec.log_pair(p - q);
        }
    }
    LogValue(total)
}

/// `ln Z_N` by streaming log-sum-exp over every configuration.
pub fn exact_log_partition(spec: &EnsembleSpec) -> Result<LogValue> {
    exact_log_partition_with_budget(spec, DEFAULT_STATE_BUDGET)
}

pub fn exact_log_partition_with_budget(spec: &EnsembleSpec, budget: u128) -> Result<LogValue> {
    let m = spec.cap.level().ok_or_else(|| Error::invalid("exact partition functions need a finite or truncated cap"))?;
    let mut acc = LogSumExp::new();
    for c in enumerate_states_with_budget(spec.n, m, spec.theta, budget)? {
        acc.push(log_weight_unchecked(spec, &c).ln());
    }
    Ok(acc.total())
}

/// Normalized log-probabilities of every state, in enumeration order.
pub fn exact_log_pmf(spec: &EnsembleSpec) -> Result<Vec<(Configuration, f64)>> {
    let m = spec.cap.level().ok_or_else(|| Error::invalid("exact pmfs need a finite or truncated cap"))?;
    let states: Vec<Configuration> = enumerate_states_with_budget(spec.n, m, spec.theta, DEFAULT_STATE_BUDGET)?.collect();
    let logs: Vec<f64> = states.iter().map(|c| log_weight_unchecked(spec, c).ln()).collect();
    let mut acc = LogSumExp::new();
    for &l in &logs {
        acc.push(l);
    }
    let z = acc.total().ln();
    Ok(states.into_iter().zip(logs).map(|(c, l)| (c, l - z)).collect())
}

/// Closed-form `ln Z` of the Krawtchouk ensemble, normalized like
/// [`log_weight`] (i.e. with the `V_N` weights).
pub fn krawtchouk_log_partition(n: usize, m: u64, theta: f64) -> f64 {
    let nf = n as f64;
    let mf = m as f64;
    let per_particle = (mf + nf * theta + 2.0 - theta) * ln(nf) - (mf + nf * theta - theta);
    krawtchouk_log_partition_gamma_weights(n, m, theta) + nf * per_particle
}

/// `ln Z(M,N) = Σ_i ln[2^M Γ(iθ) / (Γ(M+θ(i-1)+1) Γ(θ))]`, the
/// normalizer for the single-particle weights `1/(Γ(ℓ+1)Γ(M+Nθ-ℓ+1-θ))`
/// together with the `Q_θ` pair factors.
pub fn krawtchouk_log_partition_gamma_weights(n: usize, m: u64, theta: f64) -> f64 {
    let mf = m as f64;
    (1..=n)
        .map(|i| {
            let i = i as f64;
            mf * LN_2 + lgamma(i * theta) - lgamma(mf + theta * (i - 1.0) + 1.0) - lgamma(theta)
        })
        .sum()
}

/// Closed-form `ln Z_N` of the untruncated Jack–Plancherel ensemble,
/// normalized like [`log_weight`].
pub fn jack_plancherel_log_partition(n: usize, t: f64, theta: f64, offset_a: f64) -> f64 {
    let nf = n as f64;
    let s = t * nf;
    let mut z = -nf * nf * offset_a - nf * lgamma(theta) + s * theta * nf + 0.5 * theta * nf * (nf - 1.0) * ln(s * theta);
    for i in 1..=n {
        z += lgamma(i as f64 * theta);
    }
    z
}

/// `-(2θ/r²) Σ_{i<j} ln|x_i - x_j| + (1/r) Σ V(x_i)` with the limit
/// potential.
pub fn energy_of_atoms(mu: &EmpiricalMeasure, v: &Potential, theta: f64) -> Result<f64> {
    energy_of_atoms_with(mu, |x| v.eval_limit(x), theta)
}

/// [`energy_of_atoms`] for an arbitrary potential function.
pub fn energy_of_atoms_with<V: Fn(f64) -> f64>(mu: &EmpiricalMeasure, v: V, theta: f64) -> Result<f64> {
    let atoms = mu.atoms();
    let r = atoms.len() as f64;
    let mut logs = 0.0;
    for (i, &a) in atoms.iter().enumerate() {
        for &b in &atoms[i + 1..] {
            let d = (a - b).abs();
            if d == 0.0 {
                return Err(Error::domain("energy_of_atoms", format!("coincident atoms at {a}")));
            }
            logs += ln(d);
        }
    }
    let potential: f64 = atoms.iter().map(|&x| v(x)).sum();
    Ok(-2.0 * theta / (r * r) * logs + potential / r)
}

/// `ln(Z_N P_N(ℓ)) - θN(N-1) ln N + N² I_{V_N}(μ_N)`.
///
/// Algebraically this equals `Σ_{i<j} [ln Q_θ(ℓ_i-ℓ_j) - 2θ ln(ℓ_i-ℓ_j)]`;
/// here it is evaluated from its definition.
pub fn pmf_decomposition_residual(spec: &EnsembleSpec, c: &Configuration) -> Result<f64> {
    let lw = log_weight(spec, c)?.ln();
    let nf = spec.n as f64;
    let mu = empirical_measure(c);
    let energy = energy_of_atoms_with(&mu, |x| spec.potential.eval_finite_n(spec.n, x), spec.theta)?;
    Ok(lw - spec.theta * nf * (nf - 1.0) * ln(nf) + nf * nf * energy)
}

/// `(1+θ)³ Σ_{i<j} 1/(ℓ_i - ℓ_j)`.
pub fn pmf_residual_bound(c: &Configuration) -> f64 {
    let pos = c.positions();
    let mut s = 0.0;
    for (i, &p) in pos.iter().enumerate() {
        for &q in &pos[i + 1..] {
            s += 1.0 / (p - q);
        }
    }
    crate::specfun::q_theta_bound_constant(c.theta()) * s
}

/// `(1+θ)³ θ⁻¹ N (1 + ln N)`, a configuration-free bound on the residual.
pub fn pmf_residual_uniform_bound(n: usize, theta: f64) -> f64 {
    let nf = n as f64;
    crate::specfun::q_theta_bound_constant(theta) / theta * nf * (1.0 + ln(nf))
}

/// Human-readable summary of a potential family.
pub fn describe(p: &Potential) -> String {
    match p.family() {
        PotentialFamily::Krawtchouk { m_rate } => format!("krawtchouk(M={m_rate}, theta={})", p.theta()),
        PotentialFamily::JackPlancherel { t } => format!("jack(t={t}, theta={}, A={})", p.theta(), p.offset_a()),
        PotentialFamily::Tabulated(t) => format!("tabulated({} rows, theta={})", t.xs().len(), p.theta()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::{enumerate_states, mollify, partial_empirical_measure};
    use alloc::vec;
    use proptest::prelude::*;

    fn zero_spec(n: usize, m: u64, theta: f64) -> EnsembleSpec {
        EnsembleSpec::new(n, theta, Cap::Finite(m), Potential::constant(0.0, theta).unwrap(), Interaction::QTheta).unwrap()
    }

    #[test]
    fn log_weight_examples() {
        let spec = EnsembleSpec::krawtchouk(1, 3, 0.7).unwrap();
        let c = Configuration::from_partition(&[2], 0.7, Cap::Finite(3)).unwrap();
        let v = spec.potential.eval_finite_n(1, 2.0);
        assert!((log_weight(&spec, &c).unwrap().ln() + v).abs() < 1e-15);

        let spec = zero_spec(2, 5, 1.0);
        let c = Configuration::from_partition(&[3, 1], 1.0, Cap::Finite(5)).unwrap();
        assert!((log_weight(&spec, &c).unwrap().ln() - 2.0 * 3f64.ln()).abs() < 1e-15);

        let spec = zero_spec(2, 5, 2.0);
        let c = Configuration::from_partition(&[0, 0], 2.0, Cap::Finite(5)).unwrap();
        assert!((log_weight(&spec, &c).unwrap().ln() - 12f64.ln()).abs() < 1e-13);

        let wrong = Configuration::from_partition(&[0, 0, 0], 2.0, Cap::Finite(5)).unwrap();
        assert!(log_weight(&spec, &wrong).is_err());
    }

    #[test]
    fn partition_function_examples() {
        let spec = zero_spec(1, 1, 1.0);
        assert!((exact_log_partition(&spec).unwrap().ln() - 2f64.ln()).abs() < 1e-15);
        for &theta in &[0.5, 1.0, 2.0] {
            for (n, m) in [(1usize, 1u64), (2, 2), (3, 2), (2, 4)] {
                let spec = EnsembleSpec::krawtchouk(n, m, theta).unwrap();
                let exact = exact_log_partition(&spec).unwrap().ln();
                let closed = krawtchouk_log_partition(n, m, theta);
                assert!((exact - closed).abs() <= 1e-10 * closed.abs().max(1.0), "θ = {theta}, N = {n}, M = {m}");
            }
        }
    }

    #[test]
    fn gamma_weight_normalizer_by_direct_sum() {
        // oracle: sum the single-particle gamma weights times Q_θ pairs directly
        for &theta in &[0.5, 1.0, 2.0] {
            for (n, m) in [(1usize, 1u64), (2, 2), (3, 3)] {
                let nf = n as f64;
                let mut acc = LogSumExp::new();
                for c in enumerate_states(n, m, theta).unwrap() {
                    let pos = c.positions();
                    let mut lw = 0.0;
                    for (i, &p) in pos.iter().enumerate() {
                        lw -= libm::lgamma(p + 1.0) + libm::lgamma(m as f64 + nf * theta - p + 1.0 - theta);
                        for &q in &pos[i + 1..] {
                            let d = p - q;
                            lw += libm::lgamma(d + 1.0) + libm::lgamma(d + theta) - libm::lgamma(d) - libm::lgamma(d + 1.0 - theta);
                        }
                    }
                    acc.push(lw);
                }
                let closed = krawtchouk_log_partition_gamma_weights(n, m, theta);
                assert!((acc.total().ln() - closed).abs() < 1e-10 * closed.abs().max(1.0));
            }
        }
    }

    #[test]
    fn printed_normalizer_differs_by_a_power_of_two_over_one_plus_theta() {
        // the product with (1+θ)^M per factor normalizes these weights only at θ = 1
        for theta in [0.5f64, 1.0, 2.0] {
            for (n, m) in [(1usize, 1u64), (2, 2), (3, 2)] {
                let printed: f64 = (1..=n)
                    .map(|i| {
                        let i = i as f64;
                        m as f64 * (1.0 + theta).ln() + libm::lgamma(i * theta)
                            - libm::lgamma(m as f64 + theta * (i - 1.0) + 1.0)
                            - libm::lgamma(theta)
                    })
                    .sum();
                let gap = krawtchouk_log_partition_gamma_weights(n, m, theta) - printed;
                let expected = (n as f64) * (m as f64) * (2.0 / (1.0 + theta)).ln();
                assert!((gap - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn q_theta_and_coulomb_coincide_at_theta_one() {
        let spec = EnsembleSpec::krawtchouk(3, 4, 1.0).unwrap();
        let coulomb = spec.clone().with_interaction(Interaction::Coulomb { beta: 2.0 });
        for c in enumerate_states(3, 4, 1.0).unwrap() {
            assert_eq!(log_weight(&spec, &c).unwrap(), log_weight(&coulomb, &c).unwrap());
        }
    }

    #[test]
    fn pmf_sums_to_one() {
        for &theta in &[0.5, 1.0, 2.0] {
            for n in 1..=3usize {
                for m in 0..=5u64 {
                    let spec = EnsembleSpec::krawtchouk(n, m.max(1), theta).unwrap();
                    let z = exact_log_partition(&spec).unwrap().ln();
                    let total: f64 = enumerate_states(n, m.max(1), theta)
                        .unwrap()
                        .map(|c| (log_weight(&spec, &c).unwrap().ln() - z).exp())
                        .sum();
                    assert!((total - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn energy_examples() {
        let zero = Potential::constant(0.0, 1.0).unwrap();
        let mu = EmpiricalMeasure::from_atoms(vec![0.3], 1, 1.0).unwrap();
        assert_eq!(energy_of_atoms(&mu, &zero, 1.0).unwrap(), 0.0);
        let mu = EmpiricalMeasure::from_atoms(vec![0.0, 1.0], 2, 1.0).unwrap();
        assert_eq!(energy_of_atoms(&mu, &zero, 1.0).unwrap(), 0.0);
        let mu = EmpiricalMeasure::from_atoms(vec![0.0, 0.5, 1.0], 3, 1.0).unwrap();
        let e = energy_of_atoms(&mu, &zero, 1.0).unwrap();
        assert!((e - 4.0 / 9.0 * 2f64.ln()).abs() < 1e-15);
        let mu = EmpiricalMeasure::from_atoms(vec![0.5, 0.5], 2, 1.0).unwrap();
        assert!(energy_of_atoms(&mu, &zero, 1.0).is_err());
    }

    #[test]
    fn residual_examples() {
        let spec = EnsembleSpec::krawtchouk(1, 4, 2.0).unwrap();
        let c = Configuration::from_partition(&[3], 2.0, Cap::Finite(4)).unwrap();
        assert!(pmf_decomposition_residual(&spec, &c).unwrap().abs() < 1e-12);
        let spec = EnsembleSpec::krawtchouk(4, 5, 1.0).unwrap();
        for c in enumerate_states(4, 5, 1.0).unwrap() {
            assert!(pmf_decomposition_residual(&spec, &c).unwrap().abs() < 1e-9);
        }
        let spec = EnsembleSpec::krawtchouk(3, 6, 2.0).unwrap();
        for c in enumerate_states(3, 6, 2.0).unwrap() {
            let r = pmf_decomposition_residual(&spec, &c).unwrap();
            // oracle: the algebraically simplified form
            let pos = c.positions();
            let mut simplified = 0.0;
            for i in 0..3 {
                for j in i + 1..3 {
                    let d = pos[i] - pos[j];
                    simplified += crate::specfun::log_q_theta(d, 2.0).unwrap() - 4.0 * d.ln();
                }
            }
            assert!((r - simplified).abs() < 1e-9);
            assert!(r.abs() <= pmf_residual_bound(&c));
            assert!(pmf_residual_bound(&c) <= pmf_residual_uniform_bound(3, 2.0) + 1e-12);
        }
    }

    #[test]
    fn krawtchouk_potential_examples() {
        let p = krawtchouk_potential(3.0, 1.0).unwrap();
        let mid = 2.0;
        assert!((p.eval_limit(mid) - 4.0 * 2f64.ln()).abs() < 1e-14);
        assert!(p.eval_derivative(mid).unwrap().abs() < 1e-15);
        assert!(p.eval_derivative(-0.1).is_err());
        assert!(p.eval_derivative(4.1).is_err());
        assert!(p.eval_derivative(0.0).unwrap().is_finite());
        assert!(krawtchouk_potential(0.0, 1.0).is_err());
    }

    #[test]
    fn krawtchouk_finite_n_convergence() {
        let p = krawtchouk_potential(1.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..=400).map(|k| 2.0 * k as f64 / 400.0).collect();
        let c100 = p.convergence_constant(100, &xs);
        let c200 = p.convergence_constant(200, &xs);
        let c400 = p.convergence_constant(400, &xs);
        let dev200 = p.sup_deviation(200, &xs);
        assert!(dev200 <= c100 * 201f64.ln() / 200.0 * 1.25, "{dev200} vs C = {c100}");
        assert!(c400 <= 1.25 * c100 && c200 <= 1.25 * c100);
    }

    #[test]
    fn jack_potential_examples() {
        for &(t, theta) in &[(1.0, 1.0), (4.0, 1.0), (0.25, 2.0)] {
            let p = jack_potential(t, theta).unwrap();
            assert!(p.eval_derivative(t * theta).unwrap().abs() < 1e-14);
            let e = core::f64::consts::E;
            assert!((p.eval_limit(1.0) - p.offset_a() + (e * t * theta).ln()).abs() < 1e-13);
            let report = p.growth_report();
            assert!(report.applicable && report.holds(), "{report:?}");
            // A is the smallest such constant: it touches the envelope
            assert!(report.worst_margin < 1e-3, "{report:?}");
            let xs: Vec<f64> = (0..=200).map(|k| 10.0 * k as f64 / 200.0).collect();
            for n in [10usize, 50, 200] {
                for &x in &xs {
                    assert!(p.eval_finite_n(n, x) >= 2.0 * theta * (1.0 + x * x).ln() - 1e-12);
                }
            }
            let cs: Vec<f64> = [50usize, 100, 200].iter().map(|&n| p.convergence_constant(n, &xs)).collect();
            assert!(cs[1] <= 1.3 * cs[0] && cs[2] <= 1.3 * cs[0], "{cs:?}");
        }
    }

    #[test]
    fn growth_validator_reports_flat_potential() {
        let flat = Potential::constant(0.0, 1.0).unwrap();
        let r = flat.growth_report();
        assert!(r.applicable && !r.holds() && r.violations > 0);
        assert!(krawtchouk_potential(1.0, 1.0).unwrap().growth_report().holds());
    }

    #[test]
    fn jack_partition_function_matches_truncated_sum() {
        for &(n, t, theta) in &[(1usize, 0.3, 1.0), (2, 0.5, 1.0), (2, 0.4, 0.5), (3, 0.2, 2.0)] {
            let spec = EnsembleSpec::jack_plancherel(n, t, theta, 1e-14).unwrap();
            let exact = exact_log_partition(&spec).unwrap().ln();
            let closed = jack_plancherel_log_partition(n, t, theta, spec.potential.offset_a());
            assert!((exact - closed).abs() < 1e-10 * closed.abs().max(1.0), "{n} {t} {theta}: {exact} vs {closed}");
        }
    }

    #[test]
    fn mollified_energy_gap_scales_like_log_n_over_n() {
        let theta = 1.0;
        let p = krawtchouk_potential(4.0, theta).unwrap();
        let ks: Vec<f64> = [50usize, 100, 200]
            .iter()
            .map(|&n| {
                let m = 4 * n as u64;
                // a typical configuration: quantiles of the equilibrium density
                let c = crate::equilibrium::closed_form_quantile_configuration(
                    &|x| crate::equilibrium::krawtchouk_density(x, 4.0, theta),
                    5.0,
                    n,
                    theta,
                    m,
                )
                .unwrap();
                let mu = partial_empirical_measure(&c, n);
                let atomic = energy_of_atoms(&mu, &p, theta).unwrap();
                let smooth = mollify(&mu).energy(|x| p.eval_limit(x), theta);
                (atomic - smooth).abs() * n as f64 / (n as f64).ln()
            })
            .collect();
        assert!(ks[1] <= 1.3 * ks[0] && ks[2] <= 1.3 * ks[0], "{ks:?}");
    }

    #[test]
    fn plancherel_truncation_is_conservative() {
        match plancherel_truncation(1, 0.1, 1.0, 1e-12) {
            Cap::Truncated { level, tail_mass } => {
                assert!(tail_mass <= 1e-12);
                // direct Poisson tail beyond the level
                let mu: f64 = 0.1;
                let tail: f64 = (level + 1..level + 60).map(|k| (k as f64 * mu.ln() - mu - libm::lgamma(k as f64 + 1.0)).exp()).sum();
                assert!(tail <= tail_mass);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn residual_bound_random(l in proptest::collection::vec(0u64..30, 3..=3), theta in 0.2f64..4.0) {
            let mut l = l;
            l.sort_unstable_by(|a, b| b.cmp(a));
            let spec = EnsembleSpec::krawtchouk(3, 30, theta).unwrap();
            let c = Configuration::from_partition(&l, theta, Cap::Finite(30)).unwrap();
            let r = pmf_decomposition_residual(&spec, &c).unwrap();
            prop_assert!(r.abs() <= pmf_residual_bound(&c) + 1e-9);
        }
    }
}
