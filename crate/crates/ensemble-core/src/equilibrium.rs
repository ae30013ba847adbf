//! The constrained equilibrium problem on a uniform grid, the closed-form
//! equilibrium densities of the two exactly solvable families, the
//! logarithmic distance `𝒟` and the `H^{1/2}` half-norm.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel;
use crate::math::{arccot, ceil, cos, ln, powf, round, sin, sqrt, PI};
use crate::measures::Potential;
use crate::quad::{Adaptive, GaussLegendre};
use crate::statespace::{quantile_configuration, Configuration};

/// Slack allowed above the cap `θ⁻¹`.
pub const BOX_SLACK: f64 = 1e-12;
/// Slack allowed on the unit mass.
pub const MASS_SLACK: f64 = 1e-10;

/// A density that is constant on each of `n_grid` cells of `[0, s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    s: f64,
    theta: f64,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(s: f64, theta: f64, values: Vec<f64>) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid(format!("support right end s = {s} must be positive")));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::invalid(format!("theta = {theta} must be positive")));
        }
        if values.is_empty() {
            return Err(Error::invalid("a grid density needs at least one cell"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid density values must be finite"));
        }
        Ok(GridDensity { s, theta, values })
    }

    /// Cell averages of `f` (8-point Gauss–Legendre per cell), clipped to
    /// `[0, θ⁻¹]` and rescaled to unit mass.
    pub fn from_fn<F: Fn(f64) -> f64>(s: f64, theta: f64, n_grid: usize, f: F) -> Result<Self> {
        let h = s / n_grid as f64;
        let gl = GaussLegendre::new(8);
        let mut values: Vec<f64> =
            (0..n_grid).map(|j| (gl.integrate(&f, j as f64 * h, (j + 1) as f64 * h) / h).clamp(0.0, 1.0 / theta)).collect();
        let mass = h * values.iter().sum::<f64>();
        if !(mass > 0.0) {
            return Err(Error::invalid("density has no mass on the grid"));
        }
        for v in &mut values {
            *v = (*v / mass).min(1.0 / theta);
        }
        Self::new(s, theta, values)
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_grid(&self) -> usize {
        self.values.len()
    }

    /// Cell width `h = s / n_grid`.
    pub fn h(&self) -> f64 {
        self.s / self.values.len() as f64
    }

    pub fn cell_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h()
    }

    pub fn mass(&self) -> f64 {
        self.h() * self.values.iter().sum::<f64>()
    }

    /// Checks `0 ≤ φ ≤ θ⁻¹` and unit mass.
    pub fn check_admissible(&self) -> Result<()> {
        let cap = 1.0 / self.theta + BOX_SLACK;
        if let Some((j, v)) = self.values.iter().enumerate().find(|(_, &v)| v < -BOX_SLACK || v > cap) {
            return Err(Error::invalid(format!("cell {j} has density {v}, outside [0, 1/θ]")));
        }
        let mass = self.mass();
        if (mass - 1.0).abs() > MASS_SLACK {
            return Err(Error::invalid(format!("density has mass {mass}, not 1")));
        }
        Ok(())
    }

    /// `φ(x)`, zero outside `[0, s)`.
    pub fn eval(&self, x: f64) -> f64 {
        if !(0.0..self.s).contains(&x) {
            return 0.0;
        }
        let j = ((x / self.h()) as usize).min(self.values.len() - 1);
        self.values[j]
    }

    /// `∫_0^x φ`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let h = self.h();
        let x = x.min(self.s);
        let full = ((x / h) as usize).min(self.values.len());
        let mut total = h * self.values[..full].iter().sum::<f64>();
        if full < self.values.len() {
            total += (x - full as f64 * h) * self.values[full];
        }
        total
    }

    /// Smallest `y` with `∫_0^y φ = level`.
    pub fn quantile(&self, level: f64) -> f64 {
        if level <= 0.0 {
            return 0.0;
        }
        let h = self.h();
        let mut cum = 0.0;
        for (j, &v) in self.values.iter().enumerate() {
            let next = cum + h * v;
            if next >= level && v > 0.0 {
                return j as f64 * h + (level - cum) / v;
            }
            cum = next;
        }
        self.s
    }

    /// Left end of the first and right end of the last cell above `tau`.
    pub fn support_edges(&self, tau: f64) -> (f64, f64) {
        let h = self.h();
        let first = self.values.iter().position(|&v| v > tau).unwrap_or(0);
        let last = self.values.iter().rposition(|&v| v > tau).unwrap_or(self.values.len() - 1);
        (first as f64 * h, (last + 1) as f64 * h)
    }

    /// Largest `|φ_j - f̄_j|` over cells whose centers are farther than
    /// `margin` from every breakpoint, where `f̄_j` is the cell average of
    /// `f`.
    pub fn sup_error_away_from<F: Fn(f64) -> f64>(&self, f: F, breakpoints: &[f64], margin: f64) -> f64 {
        let h = self.h();
        let gl = GaussLegendre::new(8);
        let mut worst: f64 = 0.0;
        for (j, &v) in self.values.iter().enumerate() {
            let lo = j as f64 * h;
            let hi = lo + h;
            if breakpoints.iter().any(|&b| b > lo - margin && b < hi + margin) {
                continue;
            }
            let avg = gl.integrate(&f, lo, hi) / h;
            worst = worst.max((v - avg).abs());
        }
        worst
    }
}

/// Cell averages of the potential; `None` marks cells where it is
/// infinite.
fn potential_cells(v: &Potential, h: f64, n: usize) -> Vec<Option<f64>> {
    let gl = GaussLegendre::new(6);
    (0..n)
        .map(|j| {
            let lo = j as f64 * h;
            let mut sum = 0.0;
            for (x, w) in gl.mapped(lo, lo + h) {
                let val = v.eval_limit(x);
                if !val.is_finite() {
                    return None;
                }
                sum += w * val;
            }
            Some(sum / h)
        })
        .collect()
}

/// `(Kφ)_j = Σ_k K_{|j-k|} φ_k`, skipping the zero tails of `φ`.
fn toeplitz_apply(row: &[f64], phi: &[f64], out: &mut [f64]) {
    let n = phi.len();
    let lo = phi.iter().position(|&v| v != 0.0);
    let Some(lo) = lo else {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    };
    let hi = phi.iter().rposition(|&v| v != 0.0).unwrap_or(lo);
    for j in 0..n {
        let mut acc = 0.0;
        if j >= lo {
            let top = j.min(hi);
            for k in lo..=top {
                acc += row[j - k] * phi[k];
            }
        }
        let start = (j + 1).max(lo);
        if start <= hi {
            for k in start..=hi {
                acc += row[k - j] * phi[k];
            }
        }
        out[j] = acc;
    }
}

/// The discretized energy `θ h² φᵀKφ + h Σ V̄_j φ_j`, where `K_jk` is the
/// exact cell-pair average of `-ln|x-y|` and `V̄_j` the cell average of `V`.
pub fn kernel_energy(phi: &GridDensity, v: &Potential, theta: f64) -> f64 {
    let n = phi.n_grid();
    let h = phi.h();
    let row = kernel::toeplitz_row(h, n);
    let mut kphi = vec![0.0; n];
    toeplitz_apply(&row, phi.values(), &mut kphi);
    let vcells = potential_cells(v, h, n);
    let mut quad = 0.0;
    let mut lin = 0.0;
    for j in 0..n {
        quad += phi.values()[j] * kphi[j];
        if phi.values()[j] != 0.0 {
            lin += phi.values()[j] * vcells[j].unwrap_or(f64::INFINITY);
        }
    }
    theta * h * h * quad + h * lin
}

/// Stopping rules and limits for the projected-gradient solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Converged when the energy drops by less than `rel_tol·max(1,|F|)`
    /// over `window` iterations.
    pub rel_tol: f64,
    pub window: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iters: 100_000, rel_tol: 1e-10, window: 50 }
    }
}

/// Output of the equilibrium solver.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub density: GridDensity,
    /// The minimal energy `F_V^{θ,s}` on the grid.
    pub energy: f64,
    /// `(a_V, b_V)`: the ends of the numerical support.
    pub support_edges: (f64, f64),
    /// The variational level: median of `∫k_V(x_j,·)φ` over interior cells.
    pub kappa: f64,
    /// `U_j - κ` per cell, with `U_j = θ∫-ln|x_j-y|φ(y)dy + V_j/2 + ½∫Vφ`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative energy decrease over the last window.
    pub last_change: f64,
}

impl EquilibriumSolution {
    fn interior_tau(&self) -> f64 {
        1e-4 / self.density.theta()
    }

    /// Optimality violation of cell `j`: `|r|` on interior cells, `max(0,-r)`
    /// where `φ = 0` and `max(0, r)` where `φ = θ⁻¹`.
    pub fn violation(&self, j: usize) -> f64 {
        let tau = self.interior_tau();
        let cap = 1.0 / self.density.theta();
        let r = self.residuals[j];
        let phi = self.density.values()[j];
        if phi <= tau {
            (-r).max(0.0)
        } else if phi >= cap - tau {
            r.max(0.0)
        } else {
            r.abs()
        }
    }

    /// Fraction of cells farther than `margin` from every breakpoint whose
    /// violation is at most `tol·(1+|κ|)`.
    pub fn residual_pass_fraction(&self, breakpoints: &[f64], margin: f64, tol: f64) -> f64 {
        let h = self.density.h();
        let bound = tol * (1.0 + self.kappa.abs());
        let mut total = 0usize;
        let mut pass = 0usize;
        for j in 0..self.density.n_grid() {
            let lo = j as f64 * h;
            if breakpoints.iter().any(|&b| b > lo - margin && b < lo + h + margin) {
                continue;
            }
            total += 1;
            if self.violation(j) <= bound {
                pass += 1;
            }
        }
        if total == 0 {
            1.0
        } else {
            pass as f64 / total as f64
        }
    }
}

/// Projection onto `{0 ≤ φ_j ≤ u_j, h Σ φ_j = 1}` by bisection on the
/// shift `μ` in `φ_j = clamp(y_j - μ, 0, u_j)`, finished with an exact
/// solve for `μ` on the resulting free set.
fn project(y: &[f64], upper: &[f64], h: f64, out: &mut [f64]) {
    let mass = |mu: f64| h * y.iter().zip(upper).map(|(&v, &u)| (v - mu).clamp(0.0, u)).sum::<f64>();
    let mut lo = y.iter().zip(upper).map(|(&v, &u)| v - u).fold(f64::INFINITY, f64::min);
    let mut hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut mu = 0.5 * (lo + hi);
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut upper_mass = 0.0;
    for (&v, &u) in y.iter().zip(upper) {
        let t = v - mu;
        if t >= u {
            upper_mass += u;
        } else if t > 0.0 {
            free_sum += v;
            free_count += 1;
        }
    }
    if free_count > 0 {
        mu = (free_sum + upper_mass - 1.0 / h) / free_count as f64;
    }
    for ((o, &v), &u) in out.iter_mut().zip(y).zip(upper) {
        *o = (v - mu).clamp(0.0, u);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn check_potential(v: &Potential) -> Result<()> {
    let report = v.growth_report();
    if !report.holds() {
        return Err(Error::invalid(format!(
            "potential violates the growth condition at x = {} (margin {})",
            report.worst_x, report.worst_margin
        )));
    }
    Ok(())
}

/// Minimizes the discretized energy over densities on `[0, s]` bounded by
/// `θ⁻¹`. Errors with a non-convergence diagnostic when the iteration cap
/// is hit; [`solve_best_effort`] returns the best iterate instead.
pub fn solve(v: &Potential, theta: f64, s: f64, n_grid: usize) -> Result<EquilibriumSolution> {
    let sol = solve_best_effort(v, theta, s, n_grid, SolverOptions::default())?;
    if !sol.converged {
        return Err(Error::NonConvergence { iterations: sol.iterations, last_change: sol.last_change });
    }
    Ok(sol)
}

/// Like [`solve`] but always returns the final iterate, flagged by
/// `converged`.
pub fn solve_best_effort(v: &Potential, theta: f64, s: f64, n_grid: usize, opts: SolverOptions) -> Result<EquilibriumSolution> {
    if !(theta > 0.0) || theta != v.theta() {
        return Err(Error::invalid("solver theta must be positive and match the potential"));
    }
    if !(s >= theta) || !s.is_finite() {
        return Err(Error::invalid(format!("need s ≥ θ, got s = {s}, θ = {theta}")));
    }
    if n_grid < 64 {
        return Err(Error::invalid(format!("need at least 64 cells, got {n_grid}")));
    }
    check_potential(v)?;
    let n = n_grid;
    let h = s / n as f64;
    let cap = 1.0 / theta;
    let vcells = potential_cells(v, h, n);
    let upper: Vec<f64> = vcells.iter().map(|c| if c.is_some() { cap } else { 0.0 }).collect();
    if h * upper.iter().sum::<f64>() < 1.0 - 1e-12 {
        return Err(Error::invalid("the potential is finite on too little of [0, s] to hold unit mass"));
    }
    let vbar: Vec<f64> = vcells.iter().map(|c| c.unwrap_or(0.0)).collect();
    let row = kernel::toeplitz_row(h, n);

    let allowed = upper.iter().filter(|&&u| u > 0.0).count() as f64;
    let mut phi: Vec<f64> = upper.iter().map(|&u| if u > 0.0 { (1.0 / (h * allowed)).min(u) } else { 0.0 }).collect();
    let mut scratch = phi.clone();
    project(&scratch, &upper, h, &mut phi);

    let mut kphi = vec![0.0; n];
    toeplitz_apply(&row, &phi, &mut kphi);
    let grad = |kphi: &[f64], out: &mut [f64]| {
        for j in 0..n {
            out[j] = 2.0 * theta * h * kphi[j] + vbar[j];
        }
    };
    let energy_of = |phi: &[f64], kphi: &[f64]| theta * h * h * dot(phi, kphi) + h * dot(phi, &vbar);

    let mut g = vec![0.0; n];
    grad(&kphi, &mut g);
    let mut energy = energy_of(&phi, &kphi);
    let mut history: Vec<f64> = vec![energy];
    let mut alpha = 1.0 / (2.0 * theta * h * row[0].abs().max(1.0));
    let mut d = vec![0.0; n];
    let mut kd = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;

    for it in 1..=opts.max_iters {
        iterations = it;
        for j in 0..n {
            scratch[j] = phi[j] - alpha * g[j];
        }
        project(&scratch, &upper, h, &mut d);
        let mut dmax: f64 = 0.0;
        for j in 0..n {
            d[j] -= phi[j];
            dmax = dmax.max(d[j].abs());
        }
        if dmax <= 1e-15 * cap {
            converged = true;
            last_change = 0.0;
            break;
        }
        toeplitz_apply(&row, &d, &mut kd);
        let gd = h * dot(&g, &d);
        let dkd = theta * h * h * dot(&d, &kd);
        let step = if dkd > 0.0 { (-gd / (2.0 * dkd)).clamp(0.0, 1.0) } else { 1.0 };
        for j in 0..n {
            phi[j] += step * d[j];
            kphi[j] += step * kd[j];
        }
        if it % 200 == 0 {
            // refresh against accumulated round-off and keep the box exact
            for (p, &u) in phi.iter_mut().zip(&upper) {
                *p = p.clamp(0.0, u);
            }
            toeplitz_apply(&row, &phi, &mut kphi);
            energy = energy_of(&phi, &kphi);
        } else {
            energy += step * gd + step * step * dkd;
        }
        grad(&kphi, &mut g_new);
        let mut ss = 0.0;
        let mut sy = 0.0;
        for j in 0..n {
            let sj = step * d[j];
            let yj = g_new[j] - g[j];
            ss += sj * sj;
            sy += sj * yj;
        }
        core::mem::swap(&mut g, &mut g_new);
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { 1e12 };
        history.push(energy);
        if history.len() > opts.window {
            let old = history[history.len() - 1 - opts.window];
            last_change = (old - energy) / energy.abs().max(1.0);
            if last_change < opts.rel_tol {
                converged = true;
                break;
            }
        }
        if step == 0.0 {
            converged = true;
            last_change = 0.0;
            break;
        }
    }

    toeplitz_apply(&row, &phi, &mut kphi);
    let energy = energy_of(&phi, &kphi);
    let density = GridDensity::new(s, theta, phi)?;
    let half_potential = 0.5 * h * dot(density.values(), &vbar);
    let u: Vec<f64> = (0..n)
        .map(|j| if upper[j] > 0.0 { theta * h * kphi[j] + 0.5 * vbar[j] + half_potential } else { f64::INFINITY })
        .collect();
    let tau = 1e-4 / theta;
    let interior: Vec<f64> =
        (0..n).filter(|&j| density.values()[j] > tau && density.values()[j] < cap - tau).map(|j| u[j]).collect();
    let kappa = median(interior);
    let residuals = u.iter().map(|&x| x - kappa).collect();
    let support_edges = density.support_edges(1e-9 * cap);
    Ok(EquilibriumSolution { density, energy, support_edges, kappa, residuals, iterations, converged, last_change })
}

/// `F_V^{θ,∞}`: solves on `[0, s]` with `s = 2θ, 4θ, ...` until the right
/// edge satisfies `b_V ≤ s - 2θ` for two consecutive values of `s`, and
/// returns the first of the two.
pub fn solve_unbounded(v: &Potential, theta: f64, n_grid: usize) -> Result<EquilibriumSolution> {
    let mut s = 2.0 * theta;
    let mut pending: Option<EquilibriumSolution> = None;
    for _ in 0..40 {
        let sol = solve(v, theta, s, n_grid)?;
        let ok = sol.support_edges.1 <= s - 2.0 * theta;
        match (ok, pending.take()) {
            (true, Some(first)) => return Ok(first),
            (true, None) => pending = Some(sol),
            (false, _) => {}
        }
        s *= 2.0;
    }
    Err(Error::Divergence("the support kept growing with s".into()))
}

/// Solves on `[0, s']` with cells of width `h`, where `s'` is `s` rounded
/// to a multiple of `h`. Used to compare energies on a common grid.
pub fn solve_with_spacing(v: &Potential, theta: f64, s: f64, h: f64) -> Result<EquilibriumSolution> {
    let n = round(s / h).max(64.0) as usize;
    solve(v, theta, n as f64 * h, n)
}

/// Closed-form equilibrium density of the Krawtchouk family.
pub fn krawtchouk_density(x: f64, m_rate: f64, theta: f64) -> f64 {
    let c = 0.5 * (m_rate + theta);
    let r2 = m_rate * theta;
    let dx = x - c;
    if dx * dx < r2 {
        arccot((m_rate - theta) / (2.0 * sqrt(r2 - dx * dx))) / (theta * PI)
    } else if m_rate < theta && dx.abs() <= c {
        1.0 / theta
    } else {
        0.0
    }
}

/// Closed-form equilibrium density of the Jack–Plancherel family.
pub fn jack_density(x: f64, t: f64, theta: f64) -> f64 {
    let (a, b) = jack_band(t, theta);
    if x > a && x < b {
        let u = x + theta * (t - 1.0);
        arccot(u / sqrt(4.0 * theta * t * x - u * u)) / (theta * PI)
    } else if t < 1.0 && (0.0..a).contains(&x) {
        1.0 / theta
    } else {
        0.0
    }
}

/// Ends `(M+θ)/2 ∓ √(Mθ)` of the arccot band of the Krawtchouk density.
pub fn krawtchouk_band(m_rate: f64, theta: f64) -> (f64, f64) {
    let c = 0.5 * (m_rate + theta);
    let r = sqrt(m_rate * theta);
    (c - r, c + r)
}

/// Ends `θ(√t ∓ 1)²` of the arccot band of the Jack density.
pub fn jack_band(t: f64, theta: f64) -> (f64, f64) {
    let r = sqrt(t);
    (theta * (r - 1.0) * (r - 1.0), theta * (r + 1.0) * (r + 1.0))
}

/// One of the two exactly solvable families, for comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    Krawtchouk { m_rate: f64, theta: f64 },
    Jack { t: f64, theta: f64 },
}

impl ClosedForm {
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            ClosedForm::Krawtchouk { m_rate, theta } => krawtchouk_density(x, m_rate, theta),
            ClosedForm::Jack { t, theta } => jack_density(x, t, theta),
        }
    }

    /// The arccot band.
    pub fn band(&self) -> (f64, f64) {
        match *self {
            ClosedForm::Krawtchouk { m_rate, theta } => krawtchouk_band(m_rate, theta),
            ClosedForm::Jack { t, theta } => jack_band(t, theta),
        }
    }

    /// Ends of the support, including saturated plateaus.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            ClosedForm::Krawtchouk { m_rate, theta } if m_rate < theta => (0.0, m_rate + theta),
            ClosedForm::Jack { t, theta } if t < 1.0 => (0.0, jack_band(t, theta).1),
            _ => self.band(),
        }
    }

    /// Points where the density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let (a, b) = self.band();
        let (lo, hi) = self.support();
        let mut pts = vec![a, b, lo, hi];
        pts.sort_by(|x, y| x.total_cmp(y));
        pts.dedup();
        pts
    }

    /// `∫_0^x φ` by adaptive quadrature split at the breakpoints.
    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let breaks: Vec<f64> = self.breakpoints().into_iter().filter(|&b| b > lo && b < x).collect();
        Adaptive::new(1e-13, 1e-12).integrate_with_breaks(|y| self.density(y), lo, x, &breaks).value
    }
}

/// The quantile configuration of a closed-form density, via its cell
/// averages on a fine grid over `[0, s]`.
pub fn closed_form_quantile_configuration(
    f: &dyn Fn(f64) -> f64,
    s: f64,
    n: usize,
    theta: f64,
    m: u64,
) -> Result<Configuration> {
    let phi = GridDensity::from_fn(s, theta, 1 << 14, f)?;
    quantile_configuration(&phi, n, n, m)
}

fn breakpoints_with_values(d: &GridDensity) -> (Vec<f64>, Vec<f64>) {
    let h = d.h();
    let xs = (0..=d.n_grid()).map(|j| j as f64 * h).collect();
    (xs, d.values().to_vec())
}

/// Signed difference `ν - ρ` as a step function on the merged breakpoints.
fn merged_difference(nu: &GridDensity, rho: &GridDensity) -> (Vec<f64>, Vec<f64>) {
    let (xa, _) = breakpoints_with_values(nu);
    let (xb, _) = breakpoints_with_values(rho);
    let mut xs: Vec<f64> = xa.into_iter().chain(xb).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
    let vals = xs
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            nu.eval(mid) - rho.eval(mid)
        })
        .collect();
    (xs, vals)
}

/// `𝒟(ν, ρ) = (-∬ ln|x-y| (ν-ρ)(x)(ν-ρ)(y))^{1/2}` from exact
/// rectangle integrals; round-off below zero is clamped.
pub fn d_metric(nu: &GridDensity, rho: &GridDensity) -> f64 {
    let (xs, vals) = merged_difference(nu, rho);
    let m = vals.len();
    let mut total = 0.0;
    for a in 0..m {
        if vals[a] == 0.0 {
            continue;
        }
        let (a0, a1) = (xs[a], xs[a + 1]);
        total += vals[a] * vals[a] * kernel::square_self(a1 - a0);
        let mut cross = 0.0;
        for b in a + 1..m {
            if vals[b] != 0.0 {
                cross += vals[b] * kernel::rectangle(a0, a1, xs[b], xs[b + 1]);
            }
        }
        total += 2.0 * vals[a] * cross;
    }
    sqrt((-total).max(0.0))
}

/// `𝒟` from the Fourier form `∫_0^∞ |ν̂ - ρ̂|²/ξ dξ`, integrated over
/// dyadic panels `[2^k, 2^{k+1}]` from `2^-30` to `xi_max`; the tail
/// beyond `xi_max` is bounded by the jump sizes and added.
pub fn d_metric_fourier(nu: &GridDensity, rho: &GridDensity, xi_max: f64) -> f64 {
    let (xs, vals) = merged_difference(nu, rho);
    let span = xs[xs.len() - 1] - xs[0];
    let transform_sq = |xi: f64| {
        let mut re = 0.0;
        let mut im = 0.0;
        for (w, &v) in xs.windows(2).zip(&vals) {
            if v == 0.0 {
                continue;
            }
            let mid = 0.5 * (w[0] + w[1]);
            let half = 0.5 * (w[1] - w[0]);
            let amp = v * 2.0 * sin(xi * half) / xi;
            re += amp * cos(xi * mid);
            im += amp * sin(xi * mid);
        }
        re * re + im * im
    };
    let mut total = 0.0;
    let mut lo = powf(2.0, -30.0);
    // below the first panel |δ̂|² = O(ξ²) so the integral there is negligible
    while lo < xi_max {
        let hi = (2.0 * lo).min(xi_max);
        let cycles = (hi - lo) * span / (2.0 * PI);
        let pieces = (ceil(cycles) as usize).max(1);
        let gl = GaussLegendre::new(24);
        let width = (hi - lo) / pieces as f64;
        for p in 0..pieces {
            let a = lo + p as f64 * width;
            total += gl.integrate(|xi| transform_sq(xi) / xi, a, a + width);
        }
        lo = hi;
    }
    // |δ̂(ξ)| ≤ 2Σ|jumps|/ξ, and on average |δ̂|² ≈ 2Σ jumps²/ξ²
    let mut prev = 0.0;
    let mut jumps = 0.0;
    for &v in &vals {
        jumps += (v - prev) * (v - prev);
        prev = v;
    }
    jumps += prev * prev;
    total += jumps / (xi_max * xi_max);
    sqrt(total.max(0.0))
}

/// A continuous piecewise-linear function vanishing outside its first and
/// last knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::invalid("a piecewise-linear function needs matching knots and values"));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("knots must be strictly increasing"));
        }
        if values[0] != 0.0 || values[values.len() - 1] != 0.0 {
            return Err(Error::invalid("a compactly supported Lipschitz function must vanish at its end knots"));
        }
        Ok(PiecewiseLinear { knots, values })
    }

    /// Samples `f` at `n + 1` equispaced points of `[-radius, radius]`,
    /// forcing the end values to zero.
    pub fn sample<F: Fn(f64) -> f64>(f: F, radius: f64, n: usize) -> Result<Self> {
        let knots: Vec<f64> = (0..=n).map(|k| -radius + 2.0 * radius * k as f64 / n as f64).collect();
        let mut values: Vec<f64> = knots.iter().map(|&x| f(x)).collect();
        values[0] = 0.0;
        values[n] = 0.0;
        Self::new(knots, values)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0] || x >= k[k.len() - 1] {
            return 0.0;
        }
        let i = k.partition_point(|&p| p <= x) - 1;
        let t = (x - k[i]) / (k[i + 1] - k[i]);
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.knots.windows(2).zip(self.values.windows(2)).map(|(x, v)| (v[1] - v[0]) / (x[1] - x[0])).collect()
    }

    /// Lipschitz constant `max |g'|`.
    pub fn lipschitz(&self) -> f64 {
        self.slopes().iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// `M` with support in `[-M, M]`.
    pub fn support_radius(&self) -> f64 {
        self.knots[0].abs().max(self.knots[self.knots.len() - 1].abs())
    }

    /// Slope jumps `g'(x_k+) - g'(x_k-)` at every knot.
    pub fn slope_jumps(&self) -> Vec<f64> {
        let s = self.slopes();
        let mut out = Vec::with_capacity(self.knots.len());
        let mut prev = 0.0;
        for &v in s.iter().chain(core::iter::once(&0.0)) {
            out.push(v - prev);
            prev = v;
        }
        out
    }
}

/// The Gagliardo double integral `∬ |g(x)-g(y)|²/|x-y|² dx dy` by
/// quadrature over knot-cell pairs plus the outside contribution.
///
/// Equal cells contribute `slope² len²`. Adjacent cells meet at a corner
/// where the difference quotient depends only on the direction, so each
/// half of their rectangle reduces (Duffy) to a smooth one-dimensional
/// integral. Separated cells use nested adaptive quadrature.
pub fn gagliardo_seminorm(g: &PiecewiseLinear) -> f64 {
    let k = g.knots();
    let slopes = g.slopes();
    let cells = slopes.len();
    let quad = Adaptive::new(1e-13, 1e-12);
    let gl = GaussLegendre::new(30);
    let mut inside = 0.0;
    for a in 0..cells {
        let la = k[a + 1] - k[a];
        inside += slopes[a] * slopes[a] * la * la;
        if a + 1 < cells {
            let lb = k[a + 2] - k[a + 1];
            let (sa, sb) = (slopes[a], slopes[a + 1]);
            // x = c - p, y = c + q; quotient (s_a p + s_b q)/(p + q)
            let lower = gl.integrate(
                |v| {
                    let r = lb / la * v;
                    let q = (sa + sb * r) / (1.0 + r);
                    q * q
                },
                0.0,
                1.0,
            );
            let upper = gl.integrate(
                |v| {
                    let r = la / lb * v;
                    let q = (sa * r + sb) / (r + 1.0);
                    q * q
                },
                0.0,
                1.0,
            );
            inside += 2.0 * 0.5 * la * lb * (lower + upper);
        }
        for b in a + 2..cells {
            let inner = |x: f64| {
                let gx = g.eval(x);
                quad.integrate(
                    |y| {
                        let q = (gx - g.eval(y)) / (x - y);
                        q * q
                    },
                    k[b],
                    k[b + 1],
                )
                .value
            };
            inside += 2.0 * quad.integrate(inner, k[a], k[a + 1]).value;
        }
    }
    let (x0, xk) = (k[0], k[k.len() - 1]);
    let outside = quad
        .integrate_with_breaks(
            |x| {
                let v = g.eval(x);
                v * v * (1.0 / (x - x0) + 1.0 / (xk - x))
            },
            x0,
            xk,
            &k[1..k.len() - 1],
        )
        .value;
    inside + 2.0 * outside
}

/// `Σ_{j≠k} Δs_j Δs_k d² ln|d|` with `d = x_j - x_k` and `Δs` the slope
/// jumps; equal to [`gagliardo_seminorm`] for piecewise-linear functions.
pub fn gagliardo_seminorm_closed_form(g: &PiecewiseLinear) -> f64 {
    let k = g.knots();
    let ds = g.slope_jumps();
    let mut total = 0.0;
    for i in 0..k.len() {
        for j in i + 1..k.len() {
            let d = k[i] - k[j];
            total += 2.0 * ds[i] * ds[j] * d * d * ln(d.abs());
        }
    }
    total
}

/// `‖g‖_{1/2} = (∫ |t| |ĝ(t)|² dt)^{1/2}` with `ĝ(t) = ∫ e^{itx} g(x) dx`.
/// With this transform the Gagliardo integral equals `‖g‖²_{1/2}` exactly.
pub fn half_norm(g: &PiecewiseLinear) -> f64 {
    sqrt(gagliardo_seminorm(g).max(0.0))
}

/// `‖g‖_{1/2}` from the Fourier side, `2∫_0^∞ |Σ Δs_k e^{itx_k}|²/t³ dt`,
/// with the low frequencies integrated in real space per segment to
/// avoid cancellation, and an averaged tail beyond `t_max`.
pub fn half_norm_fourier(g: &PiecewiseLinear, t_max: f64) -> f64 {
    let k = g.knots();
    let v = g.values();
    let span = k[k.len() - 1] - k[0];
    let ds = g.slope_jumps();
    let t_switch = 1.0 / span;
    // ĝ by exact per-segment integrals for small t
    let transform_sq = |t: f64| {
        let mut re = 0.0;
        let mut im = 0.0;
        if t < t_switch {
            let gl = GaussLegendre::new(16);
            for i in 0..k.len() - 1 {
                for (x, w) in gl.mapped(k[i], k[i + 1]) {
                    let s = (x - k[i]) / (k[i + 1] - k[i]);
                    let gx = v[i] * (1.0 - s) + v[i + 1] * s;
                    re += w * gx * cos(t * x);
                    im += w * gx * sin(t * x);
                }
            }
        } else {
            for (&x, &d) in k.iter().zip(&ds) {
                re += d * cos(t * x);
                im += d * sin(t * x);
            }
            let t2 = t * t;
            re /= t2;
            im /= t2;
        }
        re * re + im * im
    };
    let gl = GaussLegendre::new(24);
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut hi = powf(2.0, -20.0) * t_switch;
    total += gl.integrate(|t| t * transform_sq(t), lo, hi);
    lo = hi;
    while lo < t_max {
        hi = (2.0 * lo).min(t_max);
        let pieces = (ceil((hi - lo) * span / (2.0 * PI)) as usize).max(1);
        let width = (hi - lo) / pieces as f64;
        for p in 0..pieces {
            let a = lo + p as f64 * width;
            let b = a + width;
            if a < t_switch && b > t_switch {
                total += gl.integrate(|t| t * transform_sq(t), a, t_switch);
                total += gl.integrate(|t| t * transform_sq(t), t_switch, b);
            } else {
                total += gl.integrate(|t| t * transform_sq(t), a, b);
            }
        }
        lo = hi;
    }
    // the tail averages |Σ Δs e^{itx}|² to Σ Δs², giving ∫ t⁻³ Σ Δs²
    let tail = ds.iter().map(|d| d * d).sum::<f64>() / (2.0 * t_max * t_max);
    sqrt((2.0 * (total + tail)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{jack_potential, krawtchouk_potential};
    use rand::{Rng, SeedableRng};

    fn uniform(s: f64, theta: f64, n: usize) -> GridDensity {
        GridDensity::new(s, theta, vec![1.0 / s; n]).unwrap()
    }

    #[test]
    fn energy_examples() {
        let zero = Potential::constant(0.0, 1.0).unwrap();
        let one = GridDensity::new(1.0, 1.0, vec![1.0]).unwrap();
        assert!((kernel_energy(&one, &zero, 1.0) - 1.5).abs() < 1e-14);
        let two = GridDensity::new(1.0, 1.0, vec![1.0, 1.0]).unwrap();
        assert!((kernel_energy(&two, &zero, 1.0) - 1.5).abs() < 1e-13);
        let many = uniform(1.0, 1.0, 257);
        assert!((kernel_energy(&many, &zero, 1.0) - 1.5).abs() < 1e-10);
        let c = Potential::constant(0.7, 1.0).unwrap();
        assert!((kernel_energy(&two, &c, 1.0) - 2.2).abs() < 1e-13);
    }

    #[test]
    fn energy_of_wider_uniform_by_quadrature() {
        // oracle: θ∬ -ln|x-y| on [0,s]² / s² = θ(3/2 - ln s)
        let zero = Potential::constant(0.0, 0.5).unwrap();
        let phi = uniform(3.0, 0.5, 300);
        let expected = 0.5 * (1.5 - 3f64.ln());
        assert!((kernel_energy(&phi, &zero, 0.5) - expected).abs() < 1e-10);
    }

    #[test]
    fn projection_is_feasible_and_idempotent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = 100;
            let h = 0.04;
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let upper = vec![0.8; n];
            let mut p = vec![0.0; n];
            project(&y, &upper, h, &mut p);
            assert!((h * p.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            assert!(p.iter().all(|&v| (0.0..=0.8).contains(&v)));
            let mut q = vec![0.0; n];
            project(&p, &upper, h, &mut q);
            assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-13));
            // optimality: φ = clamp(y - μ) for a single μ
            let mus: Vec<f64> = (0..n).filter(|&j| p[j] > 0.0 && p[j] < 0.8).map(|j| y[j] - p[j]).collect();
            assert!(mus.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
        }
    }

    #[test]
    fn density_examples() {
        assert!((krawtchouk_density(1.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
        for x in [0.0, 0.4, 4.6, 5.0] {
            assert_eq!(krawtchouk_density(x, 4.0, 1.0), 0.0);
        }
        assert_eq!(krawtchouk_density(0.1, 0.25, 1.0), 1.0);
        assert!((jack_density(2.0, 1.0, 1.0) - 0.25).abs() < 1e-15);
        assert_eq!(jack_band(4.0, 1.0), (1.0, 9.0));
        assert_eq!(jack_density(0.1, 0.25, 1.0), 1.0);
    }

    #[test]
    fn closed_forms_have_unit_mass() {
        let forms = [
            ClosedForm::Krawtchouk { m_rate: 0.25, theta: 1.0 },
            ClosedForm::Krawtchouk { m_rate: 4.0, theta: 1.0 },
            ClosedForm::Krawtchouk { m_rate: 1.0, theta: 2.0 },
            ClosedForm::Jack { t: 0.25, theta: 1.0 },
            ClosedForm::Jack { t: 4.0, theta: 1.0 },
            ClosedForm::Jack { t: 2.0, theta: 0.5 },
        ];
        for f in forms {
            assert!((f.cdf(1e6) - 1.0).abs() < 1e-12);
            let (lo, hi) = f.support();
            assert!((f.cdf(hi - 1e-12) - 1.0).abs() < 1e-9, "{f:?}");
            assert!(f.cdf(lo + 1e-3) > 0.0);
            // density bounded by θ⁻¹
            let theta = match f {
                ClosedForm::Krawtchouk { theta, .. } | ClosedForm::Jack { theta, .. } => theta,
            };
            assert!((0..1000).all(|k| f.density(hi * k as f64 / 1000.0) <= 1.0 / theta + 1e-15));
        }
    }

    #[test]
    fn solver_rejects_flat_potential() {
        let zero = Potential::constant(0.0, 1.0).unwrap();
        assert!(matches!(solve(&zero, 1.0, 4.0, 128), Err(Error::Validation(_))));
    }

    #[test]
    fn krawtchouk_solution_is_flat_at_m_equals_theta() {
        let v = krawtchouk_potential(1.0, 1.0).unwrap();
        let sol = solve(&v, 1.0, 2.0, 1024).unwrap();
        let err = sol.density.values().iter().map(|&x| (x - 0.5).abs()).fold(0.0, f64::max);
        assert!(err <= 0.02, "sup error {err}");
        assert!(sol.support_edges.1 >= 1.0);
    }

    #[test]
    fn jack_solution_value_at_two() {
        let v = jack_potential(1.0, 1.0).unwrap();
        let sol = solve(&v, 1.0, 6.0, 768).unwrap();
        assert!((sol.density.eval(2.0) - 0.25).abs() < 0.02);
        let (a, b) = sol.support_edges;
        let h = sol.density.h();
        assert!(a.abs() <= 2.0 * h && (b - 4.0).abs() <= 2.0 * h, "{a} {b}");
    }

    #[test]
    fn energy_decreases_with_s_and_stabilizes() {
        let v = krawtchouk_potential(4.0, 1.0).unwrap();
        let theta = 1.0;
        let h = 5.0 / 256.0;
        let small = solve_with_spacing(&v, theta, 3.0, h).unwrap();
        let mid = solve_with_spacing(&v, theta, 4.0, h).unwrap();
        let full = solve_with_spacing(&v, theta, 5.0, h).unwrap();
        assert!(small.energy >= mid.energy - 1e-9 && mid.energy >= full.energy - 1e-9);
        let jv = jack_potential(0.5, 1.0).unwrap();
        let a = solve_with_spacing(&jv, theta, 6.0, 6.0 / 256.0).unwrap();
        let b = solve_with_spacing(&jv, theta, 12.0, 6.0 / 256.0).unwrap();
        assert!((a.energy - b.energy).abs() < 1e-7);
        for j in 0..256 {
            assert!((a.density.values()[j] - b.density.values()[j]).abs() < 1e-3);
        }
    }

    #[test]
    fn quantile_and_cdf_are_inverse() {
        let f = ClosedForm::Jack { t: 2.0, theta: 1.0 };
        let phi = GridDensity::from_fn(8.0, 1.0, 512, |x| f.density(x)).unwrap();
        phi.check_admissible().unwrap();
        for k in 1..20 {
            let p = k as f64 / 20.0;
            assert!((phi.cdf(phi.quantile(p)) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn d_metric_examples() {
        let a = uniform(1.0, 1.0, 64);
        assert_eq!(d_metric(&a, &a), 0.0);
        let wide = GridDensity::new(2.0, 1.0, vec![0.5; 64]).unwrap();
        let d = d_metric(&a, &wide);
        assert!(d > 0.0);
        // oracle: I(u[0,1]) = 3/2, I(u[0,2]) = 3/2 - ln 2, cross from the
        // rectangle formula evaluated by hand
        let cross = -kernel::rectangle(0.0, 1.0, 0.0, 2.0) / 2.0;
        let expected = (1.5 + (1.5 - 2f64.ln()) - 2.0 * cross).sqrt();
        assert!((d - expected).abs() < 1e-12);
        let fourier = d_metric_fourier(&a, &wide, 4096.0);
        assert!((d - fourier).abs() < 1e-3, "{d} vs {fourier}");
    }

    #[test]
    fn d_metric_fourier_agrees_on_closed_forms() {
        let f = ClosedForm::Jack { t: 1.0, theta: 1.0 };
        let g = ClosedForm::Krawtchouk { m_rate: 2.0, theta: 1.0 };
        let nu = GridDensity::from_fn(4.0, 1.0, 128, |x| f.density(x)).unwrap();
        let rho = GridDensity::from_fn(4.0, 1.0, 96, |x| g.density(x)).unwrap();
        let real = d_metric(&nu, &rho);
        let fourier = d_metric_fourier(&nu, &rho, 4096.0);
        assert!((real - fourier).abs() < 1e-3, "{real} vs {fourier}");
    }

    #[test]
    fn half_norm_examples() {
        let zero = PiecewiseLinear::new(vec![-1.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(half_norm(&zero), 0.0);
        let tri = PiecewiseLinear::new(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]).unwrap();
        let expected = (8.0 * 2f64.ln()).sqrt();
        assert!((half_norm(&tri) - expected).abs() < 1e-8);
        assert!((gagliardo_seminorm_closed_form(&tri) - 8.0 * 2f64.ln()).abs() < 1e-14);
        assert!((half_norm_fourier(&tri, 4096.0) - expected).abs() < 1e-3);
        // scale invariance of the H^{1/2} seminorm under g(λx)
        for lambda in [0.25, 3.0] {
            let scaled = PiecewiseLinear::new(vec![-1.0 / lambda, 0.0, 1.0 / lambda], vec![0.0, 1.0, 0.0]).unwrap();
            assert!((half_norm(&scaled) - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn half_norm_matches_closed_form_and_fourier() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let k = rng.random_range(1..5);
            let mut xs: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            xs.push(-2.0);
            xs.push(2.0);
            xs.sort_by(|a, b| a.total_cmp(b));
            let mut vs: Vec<f64> = xs.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            vs[0] = 0.0;
            vs[k + 1] = 0.0;
            let g = PiecewiseLinear::new(xs, vs).unwrap();
            let q = gagliardo_seminorm(&g);
            let c = gagliardo_seminorm_closed_form(&g);
            assert!((q - c).abs() < 1e-8 * c.max(1.0), "{q} vs {c}");
            let f = half_norm_fourier(&g, 2048.0);
            assert!((f - q.sqrt()).abs() < 2e-3 * q.sqrt().max(1.0), "{f} vs {}", q.sqrt());
        }
    }
}
