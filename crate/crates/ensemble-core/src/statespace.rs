//! Particle configurations on shifted lattices, exact enumeration,
//! empirical measures and the combinatorial transport maps.
//!
//! A configuration of `N` particles is stored by its partition
//! `λ₁ ≥ … ≥ λ_N ≥ 0` together with `θ`; the positions are
//! `ℓ_i = λ_i + (N - i)θ`, so the lattice constraint is exact.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::equilibrium::GridDensity;
use crate::error::{Error, Result};
use crate::kernel;
use crate::math::{ceil, floor};

/// Default ceiling on the number of states an exhaustive pass may visit.
pub const DEFAULT_STATE_BUDGET: u128 = 10_000_000;

/// Bound on the largest row `λ₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cap {
    /// `λ₁ ≤ M`.
    Finite(u64),
    /// An infinite cap replaced by `level`, neglecting at most `tail_mass`
    /// of probability.
    Truncated { level: u64, tail_mass: f64 },
    /// No bound (configurations not attached to an ensemble).
    Unbounded,
}

impl Cap {
    pub fn level(&self) -> Option<u64> {
        match *self {
            Cap::Finite(m) => Some(m),
            Cap::Truncated { level, .. } => Some(level),
            Cap::Unbounded => None,
        }
    }
}

/// An ordered particle vector `ℓ₁ > … > ℓ_N` in `𝕎_N^{θ,M}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    theta: f64,
    cap: Cap,
    lambda: Vec<u64>,
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("theta = {theta} must be positive and finite")))
    }
}

impl Configuration {
    /// Builds `ℓ_i = λ_i + (N - i)θ` from a partition.
    pub fn from_partition(lambda: &[u64], theta: f64, cap: Cap) -> Result<Self> {
        check_theta(theta)?;
        if lambda.is_empty() {
            return Err(Error::invalid("a configuration needs at least one particle"));
        }
        if let Some(i) = lambda.windows(2).position(|w| w[0] < w[1]) {
            return Err(Error::invalid(format!(
                "partition must be weakly decreasing, but λ_{} = {} < λ_{} = {}",
                i + 1,
                lambda[i],
                i + 2,
                lambda[i + 1]
            )));
        }
        if let Some(m) = cap.level() {
            if lambda[0] > m {
                return Err(Error::invalid(format!("λ₁ = {} exceeds the cap {m}", lambda[0])));
            }
        }
        Ok(Configuration { theta, cap, lambda: lambda.to_vec() })
    }

    /// The zero partition, i.e. the densest packing `ℓ_i = (N - i)θ`.
    pub fn zero(n: usize, theta: f64, cap: Cap) -> Result<Self> {
        Self::from_partition(&vec![0; n.max(1)], theta, cap)
    }

    pub(crate) fn from_parts_unchecked(lambda: Vec<u64>, theta: f64, cap: Cap) -> Self {
        Configuration { theta, cap, lambda }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    pub fn cap(&self) -> Cap {
        self.cap
    }

    /// The partition `λ`.
    pub fn to_partition(&self) -> &[u64] {
        &self.lambda
    }

    /// `ℓ_i` for the 0-based index `i`.
    #[inline]
    pub fn position(&self, i: usize) -> f64 {
        self.lambda[i] as f64 + (self.n() - 1 - i) as f64 * self.theta
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.position(i)).collect()
    }

    /// Re-checks the defining invariants.
    pub fn validate(&self) -> Result<()> {
        Self::from_partition(&self.lambda, self.theta, self.cap).map(|_| ())
    }

    pub fn with_cap(&self, cap: Cap) -> Result<Self> {
        Self::from_partition(&self.lambda, self.theta, cap)
    }
}

/// `C(n + m, n)`, saturating at `u128::MAX`.
pub fn state_count(n: usize, m: u64) -> u128 {
    let k = n as u128;
    let total = k + m as u128;
    let k = k.min(total - k);
    let mut c: u128 = 1;
    for i in 0..k {
        match c.checked_mul(total - i) {
            Some(v) => c = v / (i + 1),
            None => return u128::MAX,
        }
    }
    c
}

/// Streams every configuration of `𝕎_N^{θ,M}` once, in colexicographic
/// order of `λ` (the last row varies slowest).
pub fn enumerate_states(n: usize, m: u64, theta: f64) -> Result<States> {
    enumerate_states_with_budget(n, m, theta, DEFAULT_STATE_BUDGET)
}

pub fn enumerate_states_with_budget(n: usize, m: u64, theta: f64, budget: u128) -> Result<States> {
    check_theta(theta)?;
    if n == 0 {
        return Err(Error::invalid("enumeration needs at least one particle"));
    }
    let count = state_count(n, m);
    if count > budget {
        return Err(Error::Budget { count, budget });
    }
    Ok(States { theta, m, next: Some(vec![0; n]), remaining: count })
}

/// Iterator over `𝕎_N^{θ,M}`; see [`enumerate_states`].
#[derive(Debug, Clone)]
pub struct States {
    theta: f64,
    m: u64,
    next: Option<Vec<u64>>,
    remaining: u128,
}

impl States {
    /// Resumes the stream at `lambda` (inclusive).
    pub fn starting_at(mut self, lambda: &[u64]) -> Result<Self> {
        let c = Configuration::from_partition(lambda, self.theta, Cap::Finite(self.m))?;
        let n = self.next.as_ref().map_or(0, |v| v.len());
        if c.n() != n {
            return Err(Error::invalid("resume point has the wrong number of rows"));
        }
        self.next = Some(lambda.to_vec());
        Ok(self)
    }

    /// Number of states in the full stream.
    pub fn total(&self) -> u128 {
        self.remaining
    }
}

/// Colex successor: raise the first row that can grow and reset all
/// earlier rows to the new value.
fn colex_successor(lambda: &mut [u64], m: u64) -> bool {
    for i in 0..lambda.len() {
        let room = if i == 0 { m } else { lambda[i - 1].min(m) };
        if lambda[i] < room {
            let v = lambda[i] + 1;
            for x in lambda[..=i].iter_mut() {
                *x = v;
            }
            return true;
        }
    }
    false
}

impl Iterator for States {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        if colex_successor(&mut succ, self.m) {
            self.next = Some(succ);
        }
        Some(Configuration::from_parts_unchecked(current, self.theta, Cap::Finite(self.m)))
    }
}

/// Atoms `ℓ_i / N`, each carrying mass `1/r` where `r` is the number of
/// atoms (`r = N` for the full empirical measure).
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
    scale: usize,
    theta: f64,
}

impl EmpiricalMeasure {
    /// Builds a measure from explicit atoms; `scale` is the `N` used to
    /// rescale positions and `theta` the lattice spacing.
    pub fn from_atoms(atoms: Vec<f64>, scale: usize, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        if atoms.is_empty() || scale == 0 {
            return Err(Error::invalid("an empirical measure needs atoms and a positive scale"));
        }
        Ok(EmpiricalMeasure { atoms, scale, theta })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.atoms.len() as f64
    }

    pub fn total_mass(&self) -> f64 {
        self.weight() * self.atoms.len() as f64
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// The empirical measure `(1/N) Σ δ_{ℓ_i/N}`.
pub fn empirical_measure(c: &Configuration) -> EmpiricalMeasure {
    partial_empirical_measure(c, c.n())
}

/// `(1/r) Σ δ_{ℓ_i/N}` for a configuration of `r` particles rescaled by an
/// external `N`.
pub fn partial_empirical_measure(c: &Configuration, scale_n: usize) -> EmpiricalMeasure {
    let n = scale_n as f64;
    EmpiricalMeasure { atoms: c.positions().into_iter().map(|p| p / n).collect(), scale: scale_n, theta: c.theta }
}

/// `|{ i : ℓ_i ≥ ρN }|`.
pub fn count_above(c: &Configuration, rho: f64) -> usize {
    let threshold = rho * c.n() as f64;
    (0..c.n()).filter(|&i| c.position(i) >= threshold).count()
}

fn count_above_scaled(c: &Configuration, threshold: f64) -> usize {
    (0..c.n()).filter(|&i| c.position(i) >= threshold).count()
}

/// Erases particle `w'` and slides particles `w'+1, …, w+1` one slot up:
/// `ℓ'_k = ℓ_{k+1} + θ` for `w' ≤ k ≤ w`, all other particles fixed.
///
/// Indices are 1-based. The window must end before the last particle
/// (`w ≤ N - 1`). The image depends only on the configuration with
/// particle `w'` removed, and is injective as a function of it.
pub fn shift_map(c: &Configuration, w: usize, w_prime: usize) -> Result<Configuration> {
    let n = c.n();
    if !(1 <= w_prime && w_prime <= w && w < n) {
        return Err(Error::invalid(format!("shift window needs 1 ≤ w' ≤ w ≤ N-1, got w' = {w_prime}, w = {w}, N = {n}")));
    }
    let mut lambda = c.lambda.clone();
    // ℓ'_k = ℓ_{k+1} + θ  ⇔  λ'_k = λ_{k+1}
    for k in (w_prime - 1)..w {
        lambda[k] = c.lambda[k + 1];
    }
    Configuration::from_partition(&lambda, c.theta, c.cap)
}

/// Recovers the configuration with particle `w'` removed from the image
/// of [`shift_map`].
pub fn shift_map_preimage(image: &Configuration, w: usize, w_prime: usize) -> Result<Vec<f64>> {
    let n = image.n();
    if !(1 <= w_prime && w_prime <= w && w < n) {
        return Err(Error::invalid("shift window out of range"));
    }
    let mut erased = Vec::with_capacity(n - 1);
    for k in 0..n {
        if k + 1 == w_prime {
            continue;
        }
        let p = if k + 1 > w_prime && k < w + 1 { image.position(k - 1) - image.theta } else { image.position(k) };
        erased.push(p);
    }
    Ok(erased)
}

/// Result of the push-right map.
#[derive(Debug, Clone, PartialEq)]
pub struct PushRight {
    pub image: Configuration,
    /// Number of particles at or beyond the barrier.
    pub u: usize,
    /// New position of particle `u`.
    pub nu: f64,
}

/// With `u` particles at or beyond `barrier·N`, removes the rightmost
/// particle, slides particles `2, …, u` one slot up and places particle
/// `u` at the first lattice site `ℓ_{u+1} + θ + a ≥ barrier·N`.
///
/// The fibre of the map is determined by `(ℓ₁, u)`, so it has at most
/// `N(M+1)` elements.
pub fn push_right_tail_map(c: &Configuration, barrier: f64) -> Result<PushRight> {
    let n = c.n();
    let target = barrier * n as f64;
    let u = count_above_scaled(c, target);
    if u == 0 || u >= n {
        return Err(Error::invalid(format!(
            "barrier {barrier} must leave between 1 and N-1 particles at or above barrier·N (found {u} of {n})"
        )));
    }
    let base = c.position(u) + c.theta; // ℓ_{u+1} + θ, 0-based index u
    let gap = target - base;
    // smallest a ∈ ℤ≥0 with base + a ≥ target, treating round-off at an
    // exact lattice hit as equality
    let a = ceil(gap - 1e-9 * target.abs().max(1.0)).max(0.0);
    let nu = base + a;
    let mut lambda = c.lambda.clone();
    for k in 0..u - 1 {
        lambda[k] = c.lambda[k + 1];
    }
    lambda[u - 1] = c.lambda[u] + a as u64;
    let image = Configuration::from_partition(&lambda, c.theta, c.cap)?;
    Ok(PushRight { image, u, nu })
}

/// Lattice configuration of `r` particles placed at the quantiles of `φ`.
///
/// `y_i` solves `∫_0^{y_i} φ = (i - ½)/r` (smallest solution) and
/// `ℓ'_i` is the largest element of `ℤ + (r-i)θ` that is `≤ N·y_{r-i+1}`.
/// A value landing exactly on a lattice point counts as `≤`.
pub fn quantile_configuration(phi: &GridDensity, n: usize, r: usize, m: u64) -> Result<Configuration> {
    phi.check_admissible()?;
    if r == 0 || 2 * r < n || r > n {
        return Err(Error::invalid(format!("need n/2 ≤ r ≤ n, got r = {r}, n = {n}")));
    }
    let theta = phi.theta();
    let ys: Vec<f64> = (1..=r).map(|i| phi.quantile((i as f64 - 0.5) / r as f64)).collect();
    let nf = n as f64;
    let mut lambda = Vec::with_capacity(r);
    for i in 1..=r {
        let v = nf * ys[r - i] - (r - i) as f64 * theta;
        let k = floor(v + 1e-9 * v.abs().max(1.0));
        if k < 0.0 {
            return Err(Error::invalid(format!("quantile row {i} falls below the lattice")));
        }
        lambda.push(k as u64);
    }
    Configuration::from_partition(&lambda, theta, Cap::Finite(m))
}

/// Empirical atoms smeared into blocks `[a, a + θ/N)` of height
/// `N/(rθ)`; an admissible density of unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedDensity {
    starts: Vec<f64>,
    width: f64,
    height: f64,
}

/// The mollified measure of an empirical measure.
pub fn mollify(mu: &EmpiricalMeasure) -> MollifiedDensity {
    let width = mu.theta / mu.scale as f64;
    let height = mu.weight() / width;
    let mut starts = mu.atoms.clone();
    starts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    MollifiedDensity { starts, width, height }
}

impl MollifiedDensity {
    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn mass(&self) -> f64 {
        self.starts.len() as f64 * self.width * self.height
    }

    /// Density value at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let hits = self.starts.iter().filter(|&&a| a <= x && x < a + self.width).count();
        hits as f64 * self.height
    }

    /// `θ ∬ -ln|x-y| ψ(x)ψ(y) + ∫ V ψ` with exact block-pair integrals and
    /// adaptive quadrature for the potential term.
    pub fn energy<V: Fn(f64) -> f64>(&self, v: V, theta: f64) -> f64 {
        let w = self.width;
        let h2 = self.height * self.height;
        let self_term = self.starts.len() as f64 * kernel::square_self(w);
        let mut cross = 0.0;
        for (i, &a) in self.starts.iter().enumerate() {
            for &b in &self.starts[i + 1..] {
                let c = (b - a).abs();
                cross += if c >= w { w * w * kernel::mean_log_offset(c, w) } else { kernel::rectangle(a, a + w, b, b + w) };
            }
        }
        let log_energy = -theta * h2 * (self_term + 2.0 * cross);
        let quad = crate::quad::Adaptive::new(1e-14, 1e-12);
        let potential: f64 =
            self.starts.iter().map(|&a| quad.integrate(|x| v(x), a, a + w).value).sum::<f64>() * self.height;
        log_energy + potential
    }

    /// Exact cell averages on the uniform grid of `n_grid` cells over
    /// `[0, s]`.
    pub fn to_grid(&self, s: f64, n_grid: usize, theta: f64) -> Result<GridDensity> {
        let h = s / n_grid as f64;
        let mut values = vec![0.0; n_grid];
        for &a in &self.starts {
            let b = a + self.width;
            let first = floor(a / h).max(0.0) as usize;
            let mut j = first;
            while j < n_grid && (j as f64) * h < b {
                let lo = (j as f64 * h).max(a);
                let hi = ((j + 1) as f64 * h).min(b);
                if hi > lo {
                    values[j] += self.height * (hi - lo) / h;
                }
                j += 1;
            }
        }
        GridDensity::new(s, theta, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(l: &[u64], theta: f64) -> Configuration {
        Configuration::from_partition(l, theta, Cap::Unbounded).unwrap()
    }

    #[test]
    fn from_partition_examples() {
        assert_eq!(cfg(&[0, 0, 0], 0.5).positions(), vec![1.0, 0.5, 0.0]);
        assert_eq!(cfg(&[2, 1], 1.0).positions(), vec![3.0, 1.0]);
        assert_eq!(cfg(&[5, 5, 0], 2.0).positions(), vec![9.0, 7.0, 0.0]);
        assert!(Configuration::from_partition(&[1, 2], 1.0, Cap::Unbounded).is_err());
        assert!(Configuration::from_partition(&[3, 1], 1.0, Cap::Finite(2)).is_err());
        assert!(Configuration::from_partition(&[], 1.0, Cap::Unbounded).is_err());
        assert!(Configuration::from_partition(&[1], 0.0, Cap::Unbounded).is_err());
    }

    #[test]
    fn enumeration_examples() {
        let all: Vec<Vec<u64>> = enumerate_states(2, 2, 1.0).unwrap().map(|c| c.to_partition().to_vec()).collect();
        assert_eq!(all, vec![vec![0, 0], vec![1, 0], vec![2, 0], vec![1, 1], vec![2, 1], vec![2, 2]]);
        let one: Vec<_> = enumerate_states(1, 0, 1.0).unwrap().collect();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].positions(), vec![0.0]);
        assert_eq!(enumerate_states(3, 3, 0.5).unwrap().count(), 20);
    }

    #[test]
    fn enumeration_counts_and_round_trip() {
        for n in 1..=8usize {
            for m in 0..=8u64 {
                let states = enumerate_states(n, m, 0.7).unwrap();
                assert_eq!(states.total(), state_count(n, m));
                let mut seen = 0u128;
                for c in states {
                    seen += 1;
                    c.validate().unwrap();
                    if n <= 4 && m <= 6 {
                        let back = Configuration::from_partition(c.to_partition(), 0.7, Cap::Finite(m)).unwrap();
                        assert_eq!(back.to_partition(), c.to_partition());
                    }
                }
                // independent count: binomial via Pascal's rule
                let mut row = vec![1u128; 1];
                for k in 1..=(n as u64 + m) as usize {
                    let mut next = vec![1u128; k + 1];
                    for j in 1..k {
                        next[j] = row[j - 1] + row[j];
                    }
                    row = next;
                }
                assert_eq!(seen, row[n]);
            }
        }
    }

    #[test]
    fn enumeration_budget_and_resume() {
        match enumerate_states_with_budget(10, 10, 1.0, 1000) {
            Err(Error::Budget { count, .. }) => assert_eq!(count, 184_756),
            other => panic!("expected budget error, got {other:?}"),
        }
        let tail: Vec<_> =
            enumerate_states(2, 2, 1.0).unwrap().starting_at(&[1, 1]).unwrap().map(|c| c.to_partition().to_vec()).collect();
        assert_eq!(tail, vec![vec![1, 1], vec![2, 1], vec![2, 2]]);
    }

    #[test]
    fn empirical_measure_examples() {
        let mu = empirical_measure(&cfg(&[2, 1], 1.0));
        assert_eq!(mu.atoms(), &[1.5, 0.5]);
        assert_eq!(mu.weight(), 0.5);
        let mu = empirical_measure(&cfg(&[0, 0, 0], 1.0));
        assert!((mu.atoms()[0] - 2.0 / 3.0).abs() < 1e-15 && (mu.atoms()[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((mu.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn count_above_examples() {
        let c = cfg(&[2, 1], 1.0);
        assert_eq!(count_above(&c, 1.0), 1);
        assert_eq!(count_above(&c, 0.0), 2);
        assert_eq!(count_above(&c, 1.6), 0);
    }

    #[test]
    fn shift_map_examples() {
        let c = cfg(&[2, 1], 1.0);
        assert_eq!(shift_map(&c, 1, 1).unwrap().positions(), vec![2.0, 1.0]);
        assert!(shift_map(&c, 2, 2).is_err());
        assert!(shift_map(&c, 1, 2).is_err());
        assert!(shift_map(&c, 0, 0).is_err());
    }

    #[test]
    fn shift_map_preimage_recovers_erased_vector() {
        let c = cfg(&[7, 4, 4, 2, 1], 0.5);
        for w in 1..5 {
            for wp in 1..=w {
                let img = shift_map(&c, w, wp).unwrap();
                let erased: Vec<f64> =
                    c.positions().into_iter().enumerate().filter(|&(k, _)| k + 1 != wp).map(|(_, p)| p).collect();
                assert_eq!(shift_map_preimage(&img, w, wp).unwrap(), erased);
            }
        }
    }

    #[test]
    fn push_right_examples() {
        let c = cfg(&[4, 1], 1.0); // ℓ = (5, 1)
        let p = push_right_tail_map(&c, 1.5).unwrap();
        assert_eq!((p.u, p.nu), (1, 3.0));
        assert_eq!(p.image.positions(), vec![3.0, 1.0]);
        // barrier just below ℓ₁/N with ℓ₂ + θ ≥ barrier·N: minimal shift
        let c = cfg(&[5, 4], 1.0); // ℓ = (6, 4)
        let p = push_right_tail_map(&c, 2.4).unwrap();
        assert_eq!(p.nu, 5.0);
        assert!(push_right_tail_map(&c, 10.0).is_err());
        assert!(push_right_tail_map(&c, 0.0).is_err());
    }

    #[test]
    fn push_right_lands_exactly_on_lattice_barrier() {
        let c = cfg(&[6, 0], 1.0); // ℓ = (7, 0), barrier·N = 4
        let p = push_right_tail_map(&c, 2.0).unwrap();
        assert_eq!(p.nu, 4.0);
    }

    #[test]
    fn quantile_examples() {
        let phi = GridDensity::new(1.0, 1.0, vec![1.0; 64]).unwrap();
        let c = quantile_configuration(&phi, 4, 4, 10).unwrap();
        assert_eq!(c.positions(), vec![3.0, 2.0, 1.0, 0.0]);
        // the densest admissible density collapses to the zero partition
        for &theta in &[0.5, 1.0, 1.5] {
            let phi = GridDensity::new(theta, theta, vec![1.0 / theta; 32]).unwrap();
            let c = quantile_configuration(&phi, 6, 6, 3).unwrap();
            assert_eq!(c.to_partition(), &[0; 6]);
        }
        let bad = GridDensity::new(1.0, 1.0, vec![0.5; 8]);
        assert!(bad.is_err() || quantile_configuration(&bad.unwrap(), 4, 4, 3).is_err());
    }

    #[test]
    fn mollify_examples() {
        let one = mollify(&empirical_measure(&cfg(&[0], 1.0)));
        assert_eq!((one.eval(0.0), one.eval(0.99), one.eval(1.0)), (1.0, 1.0, 0.0));
        for &theta in &[0.5, 1.0, 2.5] {
            let n = 7;
            let psi = mollify(&empirical_measure(&Configuration::zero(n, theta, Cap::Unbounded).unwrap()));
            assert!((psi.mass() - 1.0).abs() < 1e-14);
            for k in 0..100 {
                let x = theta * (k as f64 + 0.5) / 100.0;
                assert!((psi.eval(x) - 1.0 / theta).abs() < 1e-12, "θ = {theta}, x = {x}");
            }
            assert_eq!(psi.eval(theta * 1.0001), 0.0);
        }
    }

    #[test]
    fn mollified_grid_projection_keeps_mass() {
        let c = cfg(&[5, 3, 3, 0], 0.7);
        let psi = mollify(&empirical_measure(&c));
        let g = psi.to_grid(3.0, 300, 0.7).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-12);
    }

    fn arb_partition(max_n: usize, max_m: u64) -> impl Strategy<Value = Vec<u64>> {
        proptest::collection::vec(0..=max_m, 2..=max_n).prop_map(|mut v| {
            v.sort_unstable_by(|a, b| b.cmp(a));
            v
        })
    }

    proptest! {
        #[test]
        fn transport_maps_stay_valid(l in arb_partition(50, 200), theta in 0.2f64..3.0, wr in 0.0f64..1.0, wpr in 0.0f64..1.0, br in 0.0f64..1.0) {
            let c = Configuration::from_partition(&l, theta, Cap::Finite(200)).unwrap();
            let n = c.n();
            let w = 1 + ((n - 2) as f64 * wr) as usize;
            let wp = 1 + ((w - 1) as f64 * wpr) as usize;
            let img = shift_map(&c, w, wp).unwrap();
            prop_assert!(img.validate().is_ok());
            let lo = c.position(n - 1) / n as f64;
            let hi = c.position(0) / n as f64;
            let barrier = lo + (hi - lo) * br;
            if let Ok(p) = push_right_tail_map(&c, barrier) {
                prop_assert!(p.image.validate().is_ok());
                prop_assert!(p.nu >= barrier * n as f64 - 1e-9);
                prop_assert!(p.image.position(0) <= c.position(0) + 1e-12);
            }
        }
    }
}
