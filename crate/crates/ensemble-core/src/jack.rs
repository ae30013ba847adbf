//! Jack polynomials at the specializations the ensembles come from:
//! pure-α `1^N`, pure-β `1_β^M` and Plancherel `𝔯_s`, each in a
//! gamma-product form and an independent box-product form, together with
//! Cauchy normalization checks and the induced particle measures.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, ln, ln_1p};
use crate::measures::{exact_log_pmf, EnsembleSpec};
use crate::specfun::{lgamma, LogSumExp, LogValue};

/// A partition with its conjugate cached.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    parts: Vec<u64>,
    conjugate: Vec<u64>,
}

/// One box of a Young diagram with its hook statistics (1-based row and
/// column).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionBox {
    pub row: u64,
    pub col: u64,
    pub arm: u64,
    pub leg: u64,
    pub coarm: u64,
    pub coleg: u64,
}

impl Partition {
    /// Accepts weakly decreasing parts; trailing zeros are dropped.
    pub fn new(parts: &[u64]) -> Result<Self> {
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid(format!("partition parts must be weakly decreasing: {parts:?}")));
        }
        let parts: Vec<u64> = parts.iter().copied().take_while(|&p| p > 0).collect();
        let width = parts.first().copied().unwrap_or(0);
        let conjugate = (1..=width).map(|j| parts.iter().filter(|&&p| p >= j).count() as u64).collect();
        Ok(Partition { parts, conjugate })
    }

    pub fn empty() -> Self {
        Partition { parts: Vec::new(), conjugate: Vec::new() }
    }

    pub fn parts(&self) -> &[u64] {
        &self.parts
    }

    /// Number of nonzero rows `ℓ(λ)`.
    pub fn length(&self) -> usize {
        self.parts.len()
    }

    /// `|λ|`.
    pub fn size(&self) -> u64 {
        self.parts.iter().sum()
    }

    pub fn conjugate(&self) -> Partition {
        Partition { parts: self.conjugate.clone(), conjugate: self.parts.clone() }
    }

    /// Row `i` (1-based), zero beyond the length.
    pub fn row(&self, i: usize) -> u64 {
        self.parts.get(i - 1).copied().unwrap_or(0)
    }

    /// Column `j` (1-based) of the diagram, i.e. `λ'_j`.
    pub fn column(&self, j: usize) -> u64 {
        self.conjugate.get(j - 1).copied().unwrap_or(0)
    }

    pub fn boxes(&self) -> impl Iterator<Item = PartitionBox> + '_ {
        self.parts.iter().enumerate().flat_map(move |(i, &len)| {
            let row = i as u64 + 1;
            (1..=len).map(move |col| PartitionBox {
                row,
                col,
                arm: len - col,
                leg: self.conjugate[(col - 1) as usize] - row,
                coarm: col - 1,
                coleg: row - 1,
            })
        })
    }

    /// Positions `ℓ_i = λ_i + (N-i)θ` for `N ≥ ℓ(λ)` rows.
    pub fn positions(&self, n: usize, theta: f64) -> Vec<f64> {
        (1..=n).map(|i| self.row(i) as f64 + (n - i) as f64 * theta).collect()
    }
}

/// All partitions with at most `n` rows and parts at most `m`.
pub fn partitions_in_box(n: usize, m: u64) -> Vec<Partition> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    fn rec(n: usize, bound: u64, current: &mut Vec<u64>, out: &mut Vec<Partition>) {
        if current.len() == n {
            out.push(Partition::new(current).expect("decreasing by construction"));
            return;
        }
        for p in (0..=bound).rev() {
            current.push(p);
            rec(n, p, current, out);
            current.pop();
        }
    }
    rec(n, m, &mut current, &mut out);
    out
}

/// All partitions with at most `n` rows and `|λ| ≤ max_size`.
pub fn partitions_up_to_size(n: usize, max_size: u64) -> Vec<Partition> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    fn rec(n: usize, bound: u64, left: u64, current: &mut Vec<u64>, out: &mut Vec<Partition>) {
        if current.len() == n || bound == 0 || left == 0 {
            out.push(Partition::new(current).expect("decreasing by construction"));
            return;
        }
        for p in (0..=bound.min(left)).rev() {
            current.push(p);
            rec(n, p, left - p, current, out);
            current.pop();
        }
    }
    rec(n, max_size, max_size, &mut current, &mut out);
    out
}

/// A Jack-positive specialization `(α, β, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Specialization {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub gamma: f64,
}

impl Specialization {
    pub fn new(mut alphas: Vec<f64>, mut betas: Vec<f64>, gamma: f64) -> Result<Self> {
        if alphas.iter().chain(&betas).any(|&v| !(v >= 0.0) || !v.is_finite()) || !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::invalid("specialization parameters must be finite and nonnegative"));
        }
        alphas.sort_by(|a, b| b.total_cmp(a));
        betas.sort_by(|a, b| b.total_cmp(a));
        Ok(Specialization { alphas, betas, gamma })
    }

    /// `1^N`.
    pub fn pure_alpha(n: usize) -> Self {
        Specialization { alphas: alloc::vec![1.0; n], betas: Vec::new(), gamma: 0.0 }
    }

    /// `1_β^M`.
    pub fn pure_beta(m: usize) -> Self {
        Specialization { alphas: Vec::new(), betas: alloc::vec![1.0; m], gamma: 0.0 }
    }

    /// `𝔯_s`.
    pub fn plancherel(s: f64) -> Self {
        Specialization { alphas: Vec::new(), betas: Vec::new(), gamma: s }
    }

    /// The image of the Newton power sum `p_k`.
    pub fn power_sum(&self, k: u32, theta: f64) -> f64 {
        if k == 1 {
            return self.gamma + self.alphas.iter().sum::<f64>() + self.betas.iter().sum::<f64>();
        }
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        let beta_factor = sign * libm::pow(theta, (k - 1) as f64);
        self.alphas.iter().map(|a| libm::pow(*a, k as f64)).sum::<f64>()
            + beta_factor * self.betas.iter().map(|b| libm::pow(*b, k as f64)).sum::<f64>()
    }
}

/// `p_k(ρ)` for `k ≥ 1`.
pub fn power_sum(spec: &Specialization, k: u32, theta: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("power sums start at k = 1"));
    }
    Ok(spec.power_sum(k, theta))
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("theta = {theta} must be positive")))
    }
}

/// `ln J_λ(1^N; θ)` from the gamma product
/// `∏_i Γ(θ)/Γ(iθ) · ∏_{i<j} Γ(ℓ_i-ℓ_j+θ)/Γ(ℓ_i-ℓ_j)`.
pub fn log_jack_one_n(lambda: &Partition, n: usize, theta: f64) -> Result<LogValue> {
    check_theta(theta)?;
    if lambda.length() > n {
        return Ok(LogValue::ZERO);
    }
    let l = lambda.positions(n, theta);
    let mut total = 0.0;
    for i in 0..n {
        total += lgamma(theta) - lgamma((i + 1) as f64 * theta);
        for j in i + 1..n {
            let d = l[i] - l[j];
            total += lgamma(d + theta) - lgamma(d);
        }
    }
    Ok(LogValue(total))
}

/// `ln J_λ(1^N; θ)` from the box product
/// `∏_□ (Nθ + a'(□) - θℓ'(□)) / (a(□) + θℓ(□) + θ)`.
pub fn log_jack_one_n_boxes(lambda: &Partition, n: usize, theta: f64) -> Result<LogValue> {
    check_theta(theta)?;
    if lambda.length() > n {
        return Ok(LogValue::ZERO);
    }
    let nf = n as f64;
    let total = lambda
        .boxes()
        .map(|b| ln(nf * theta + b.coarm as f64 - theta * b.coleg as f64) - ln(b.arm as f64 + theta * b.leg as f64 + theta))
        .sum();
    Ok(LogValue(total))
}

/// `ln J̃_λ(𝔯_s; θ)` from the gamma product with `N = ℓ(λ)` rows.
pub fn log_dual_jack_plancherel(lambda: &Partition, s: f64, theta: f64) -> Result<LogValue> {
    log_dual_jack_plancherel_rows(lambda, lambda.length().max(1), s, theta)
}

/// `ln J̃_λ(𝔯_s; θ) = -θ N(N-1)/2 · ln(sθ) + Σ_{i<j} ln[Γ(d+1)/Γ(d+1-θ)]
/// + Σ_i [ℓ_i ln(sθ) - ln Γ(ℓ_i+1)]` for any `N ≥ ℓ(λ)`.
pub fn log_dual_jack_plancherel_rows(lambda: &Partition, n: usize, s: f64, theta: f64) -> Result<LogValue> {
    check_theta(theta)?;
    if !(s > 0.0) {
        return Err(Error::invalid(format!("Plancherel parameter s = {s} must be positive")));
    }
    if lambda.length() > n {
        return Err(Error::invalid("need at least as many rows as the partition has"));
    }
    let nf = n as f64;
    let lst = ln(s * theta);
    let l = lambda.positions(n, theta);
    let mut total = -0.5 * theta * nf * (nf - 1.0) * lst;
    for i in 0..n {
        total += l[i] * lst - lgamma(l[i] + 1.0);
        for j in i + 1..n {
            let d = l[i] - l[j];
            total += lgamma(d + 1.0) - lgamma(d + 1.0 - theta);
        }
    }
    Ok(LogValue(total))
}

/// `ln J̃_λ(𝔯_s; θ) = Σ_□ ln[sθ / (a(□) + θℓ(□) + 1)]`.
pub fn log_dual_jack_plancherel_boxes(lambda: &Partition, s: f64, theta: f64) -> Result<LogValue> {
    check_theta(theta)?;
    let lst = ln(s * theta);
    Ok(LogValue(lambda.boxes().map(|b| lst - ln(b.arm as f64 + theta * b.leg as f64 + 1.0)).sum()))
}

/// `ln J̃_λ(1_β^M; θ)` (all `M` β-parameters equal to one) from the gamma
/// product with `N = ℓ(λ)` rows; zero when `λ₁ > M`.
pub fn log_dual_jack_pure_beta(lambda: &Partition, m: u64, theta: f64) -> Result<LogValue> {
    log_dual_jack_beta_rows(lambda, lambda.length().max(1), m, 1.0, theta)
}

/// `ln J̃_λ` at `M` β-parameters all equal to `beta`, for any `N ≥ ℓ(λ)`
/// rows. The gamma product
/// `∏_{i<j} Γ(d+1)/Γ(d+1-θ) · ∏_i Γ(M+θ(i-1)+1) / (Γ(ℓ_i+1) Γ(M+Nθ-ℓ_i+1-θ))`
/// is the value at `beta = 1/θ`; other values follow by homogeneity.
pub fn log_dual_jack_beta_rows(lambda: &Partition, n: usize, m: u64, beta: f64, theta: f64) -> Result<LogValue> {
    check_theta(theta)?;
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("beta = {beta} must be positive")));
    }
    if lambda.length() > n {
        return Err(Error::invalid("need at least as many rows as the partition has"));
    }
    if lambda.row(1) > m {
        return Ok(LogValue::ZERO);
    }
    let nf = n as f64;
    let mf = m as f64;
    let l = lambda.positions(n, theta);
    let mut total = lambda.size() as f64 * ln(beta * theta);
    for i in 0..n {
        total += lgamma(mf + theta * i as f64 + 1.0) - lgamma(l[i] + 1.0) - lgamma(mf + nf * theta - l[i] + 1.0 - theta);
        for j in i + 1..n {
            let d = l[i] - l[j];
            total += lgamma(d + 1.0) - lgamma(d + 1.0 - theta);
        }
    }
    Ok(LogValue(total))
}

/// `J̃_λ(1_β^M; θ) = θ^{|λ|} J_{λ'}(1^M; θ⁻¹)`.
pub fn log_dual_jack_pure_beta_duality(lambda: &Partition, m: u64, theta: f64) -> Result<LogValue> {
    check_theta(theta)?;
    let dual = log_jack_one_n_boxes(&lambda.conjugate(), m as usize, 1.0 / theta)?;
    Ok(LogValue(dual.ln() + lambda.size() as f64 * ln(theta)))
}

/// `ln J_λ(1_β^M; θ) = Σ_□ ln[θ(M + θℓ'(□) - a'(□)) / (a(□) + θℓ(□) + θ)]`,
/// zero when `λ₁ > M`.
pub fn log_jack_pure_beta_boxes(lambda: &Partition, m: u64, theta: f64) -> Result<LogValue> {
    check_theta(theta)?;
    if lambda.row(1) > m {
        return Ok(LogValue::ZERO);
    }
    let mf = m as f64;
    Ok(LogValue(
        lambda
            .boxes()
            .map(|b| ln(theta * (mf + theta * b.coleg as f64 - b.coarm as f64)) - ln(b.arm as f64 + theta * b.leg as f64 + theta))
            .sum(),
    ))
}

/// `ln ∏_□ (a + θℓ + θ)/(a + θℓ + 1)`, the factor turning `J_λ` into `J̃_λ`.
pub fn log_dual_correction(lambda: &Partition, theta: f64) -> f64 {
    lambda
        .boxes()
        .map(|b| {
            let base = b.arm as f64 + theta * b.leg as f64;
            ln(base + theta) - ln(base + 1.0)
        })
        .sum()
}

/// `ln H_θ(1^N; ρ) = Nθγ + N Σ ln(1+θβ_i) - Nθ Σ ln(1-α_i)`.
pub fn log_normalization(n: usize, rho: &Specialization, theta: f64) -> Result<LogValue> {
    check_theta(theta)?;
    if let Some(&a) = rho.alphas.iter().find(|&&a| a >= 1.0) {
        return Err(Error::Divergence(format!("the Cauchy sum diverges for α = {a} ≥ 1")));
    }
    let nf = n as f64;
    let total = nf * theta * rho.gamma + nf * rho.betas.iter().map(|&b| ln_1p(theta * b)).sum::<f64>()
        - nf * theta * rho.alphas.iter().map(|&a| ln_1p(-a)).sum::<f64>();
    Ok(LogValue(total))
}

/// Which Cauchy sum [`verify_cauchy_sum`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CauchyFamily {
    /// `ρ₂ = 1_β^M`; the sum is finite.
    PureBeta { m: u64 },
    /// `ρ₂ = 𝔯_s`, summed over `|λ| ≤ max_size`.
    PlancherelTruncated { s: f64, max_size: u64 },
}

/// Result of a Cauchy-sum check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyCheck {
    pub log_sum: f64,
    pub log_normalization: f64,
    /// `|Σ J J̃ / H - 1|`.
    pub relative_error: f64,
    /// Mass of the omitted terms relative to `H` (zero when nothing is
    /// omitted).
    pub tail_bound: f64,
    pub terms: usize,
}

/// Maximum number of terms a Cauchy check may enumerate.
pub const CAUCHY_BUDGET: u128 = 5_000_000;

/// `Σ_λ J_λ(1^N) J̃_λ(ρ₂)` against its closed form.
///
/// Under the Plancherel measure `|λ|` is Poisson with mean `θsN`, so the
/// omitted tail is exactly `P(Poisson(θsN) > max_size)`.
pub fn verify_cauchy_sum(n: usize, family: CauchyFamily, theta: f64) -> Result<CauchyCheck> {
    check_theta(theta)?;
    let (partitions, rho, tail) = match family {
        CauchyFamily::PureBeta { m } => {
            let count = crate::statespace::state_count(n, m);
            if count > CAUCHY_BUDGET {
                return Err(Error::Budget { count, budget: CAUCHY_BUDGET });
            }
            (partitions_in_box(n, m), Specialization::pure_beta(m as usize), 0.0)
        }
        CauchyFamily::PlancherelTruncated { s, max_size } => {
            let mu = theta * s * n as f64;
            let mut tail = 0.0;
            let mut k = max_size as f64 + 1.0;
            loop {
                let term = exp(k * ln(mu) - mu - lgamma(k + 1.0));
                tail += term;
                if k > mu && term < 1e-18 * tail.max(f64::MIN_POSITIVE) || term == 0.0 {
                    break;
                }
                k += 1.0;
            }
            (partitions_up_to_size(n, max_size), Specialization::plancherel(s), tail)
        }
    };
    let mut acc = LogSumExp::new();
    for lambda in &partitions {
        let j = log_jack_one_n(lambda, n, theta)?;
        let dual = match family {
            CauchyFamily::PureBeta { m } => log_dual_jack_pure_beta(lambda, m, theta)?,
            CauchyFamily::PlancherelTruncated { s, .. } => log_dual_jack_plancherel(lambda, s, theta)?,
        };
        acc.push((j + dual).ln());
    }
    let log_sum = acc.total().ln();
    let log_norm = log_normalization(n, &rho, theta)?.ln();
    Ok(CauchyCheck {
        log_sum,
        log_normalization: log_norm,
        relative_error: (libm::expm1(log_sum - log_norm)).abs(),
        tail_bound: tail,
        terms: partitions.len(),
    })
}

/// Largest `|ln P_Jack(λ) - ln P_ensemble(ℓ)|` between the Krawtchouk
/// ensemble and the Jack measure with `ρ₁ = 1^N` and `ρ₂` made of `M`
/// β-parameters equal to `1/θ`.
pub fn induced_discrepancy_pure_beta(n: usize, m: u64, theta: f64) -> Result<f64> {
    let spec = EnsembleSpec::krawtchouk(n, m, theta)?;
    let ensemble = exact_log_pmf(&spec)?;
    let beta = 1.0 / theta;
    let rho = Specialization::new(Vec::new(), alloc::vec![beta; m as usize], 0.0)?;
    let log_h = log_normalization(n, &rho, theta)?.ln();
    let mut worst: f64 = 0.0;
    for (c, lp) in &ensemble {
        let lambda = Partition::new(&c.to_partition())?;
        let dual = log_dual_jack_beta_rows(&lambda, lambda.length().max(1), m, beta, theta)?;
        let jack = (log_jack_one_n(&lambda, n, theta)? + dual).ln() - log_h;
        worst = worst.max((jack - lp).abs());
    }
    Ok(worst)
}

/// Largest `|ln P_Jack(λ) - ln P_ensemble(ℓ)|` for the Plancherel Jack
/// measure with `s = tN` and the Jack–Plancherel ensemble, both
/// renormalized on the truncated state space of the ensemble.
pub fn induced_discrepancy_plancherel(n: usize, t: f64, theta: f64, tail_eps: f64) -> Result<f64> {
    let spec = EnsembleSpec::jack_plancherel(n, t, theta, tail_eps)?;
    let ensemble = exact_log_pmf(&spec)?;
    let s = t * n as f64;
    let mut jack_logs = Vec::with_capacity(ensemble.len());
    let mut acc = LogSumExp::new();
    for (c, _) in &ensemble {
        let lambda = Partition::new(&c.to_partition())?;
        let v = (log_jack_one_n(&lambda, n, theta)? + log_dual_jack_plancherel(&lambda, s, theta)?).ln();
        acc.push(v);
        jack_logs.push(v);
    }
    let z = acc.total().ln();
    Ok(ensemble.iter().zip(&jack_logs).map(|((_, lp), &j)| (j - z - lp).abs()).fold(0.0, f64::max))
}
