//! `verify`: runs identity suites and exits nonzero when any check fails.

use clap::ValueEnum;
use ensemble_core::jack::{verify_cauchy_sum, CauchyFamily};
use ensemble_core::measures::EnsembleSpec;
use ensemble_core::rates::{random_log_integrals, LogCell};
use ensemble_core::sampler::exact_kernel;
use ensemble_core::specfun::{log_q_theta, q_theta_bound_constant};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{effective, say, Common, Run};
use crate::error::{LabError, LabResult};
use crate::io::{fmt17, Num};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// Every check below.
    Identities,
    /// `|ln Q_θ(x) - 2θ ln x| ≤ (1+θ)³/x`.
    Sandwich,
    /// Jack Cauchy sums against their closed forms.
    Cauchy,
    /// Log-integral closed forms against quadrature.
    Integrals,
    /// Detailed balance of the sampler kernel at N = 2.
    Balance,
}

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    /// Seed of the randomized integral draws.
    /// Seed for the random integral parameters
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parameter draws, six integrals each
    #[arg(long)]
    pub draws: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Settings {
    suite: Suite,
    seed: u64,
    draws: usize,
}

/// Outcome of one named check: the worst observed discrepancy against
/// its tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub worst: Num,
    pub tolerance: Num,
    pub cases: usize,
}

impl Check {
    fn new(name: impl Into<String>, worst: f64, tolerance: f64, cases: usize) -> Self {
        Check { name: name.into(), passed: worst <= tolerance, worst: Num(worst), tolerance: Num(tolerance), cases }
    }

    fn failed(name: impl Into<String>, why: &str) -> Self {
        eprintln!("check error: {why}");
        Check { name: name.into(), passed: false, worst: Num(f64::NAN), tolerance: Num(0.0), cases: 0 }
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    suite: Suite,
    passed: usize,
    failed: usize,
    checks: Vec<Check>,
}

fn defaults() -> Value {
    json!({ "suite": "identities", "seed": 1, "draws": 100 })
}

/// `max (|ln Q_θ(x) - 2θ ln x| · x/(1+θ)³)` over 10³ log-spaced
/// `x ∈ [θ, 10⁶]` per θ; passes when at most one.
pub fn sandwich() -> Check {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for theta in [0.3, 0.5, 1.0, 2.0, 3.7] {
        let (lo, hi) = (f64::ln(theta), f64::ln(1e6));
        for k in 0..1000 {
            let x = (lo + (hi - lo) * k as f64 / 999.0).exp();
            let Ok(lq) = log_q_theta(x, theta) else {
                return Check::failed("q-theta-sandwich", &format!("ln Q_θ undefined at x = {x}, θ = {theta}"));
            };
            worst = worst.max((lq - 2.0 * theta * x.ln()).abs() * x / q_theta_bound_constant(theta));
            cases += 1;
        }
    }
    Check::new("q-theta-sandwich", worst, 1.0, cases)
}

/// Pure-β sums for `N, M ≤ 4`, `θ ∈ {0.5, 1, 2}`, and the Plancherel sum at
/// `N = 1`, `s = 0.1`.
pub fn cauchy() -> Vec<Check> {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for theta in [0.5, 1.0, 2.0] {
        for n in 1..=4 {
            for m in 1..=4 {
                match verify_cauchy_sum(n, CauchyFamily::PureBeta { m }, theta) {
                    Ok(c) => worst = worst.max(c.relative_error),
                    Err(e) => return vec![Check::failed("cauchy-pure-beta", &e.to_string())],
                }
                cases += 1;
            }
        }
    }
    let pure = Check::new("cauchy-pure-beta", worst, 1e-10, cases);
    let planch = match verify_cauchy_sum(1, CauchyFamily::PlancherelTruncated { s: 0.1, max_size: 60 }, 1.0) {
        Ok(c) => Check::new("cauchy-plancherel", c.relative_error, 1e-8, c.terms),
        Err(e) => Check::failed("cauchy-plancherel", &e.to_string()),
    };
    vec![pure, planch]
}

/// Log-integral closed forms on `draws` random parameter sets (relative
/// error, tolerance 1e-8) and log-cell closed forms (absolute error,
/// tolerance 1e-12).
pub fn integrals(seed: u64, draws: usize) -> Vec<Check> {
    let mut worst: f64 = 0.0;
    let list = random_log_integrals(seed, draws);
    for kind in &list {
        match (kind.closed_form(), kind.quadrature()) {
            (Ok(exact), Ok(q)) => worst = worst.max((q - exact).abs() / exact.abs().max(q.abs()).max(1e-12)),
            (Err(e), _) | (_, Err(e)) => return vec![Check::failed("log-integrals", &e.to_string())],
        }
    }
    let ints = Check::new("log-integrals", worst, 1e-8, list.len());
    let cells = [
        LogCell::Square { r: 0.3 },
        LogCell::Square { r: 2.5 },
        LogCell::Segment { a: -1.0, b: 2.0, c: 0.4 },
        LogCell::Segment { a: 1.0, b: 3.0, c: 7.0 },
        LogCell::OffsetSquare { a: 0.5, c: 0.5 },
        LogCell::OffsetSquare { a: 1.0, c: 2.5 },
    ];
    let mut worst: f64 = 0.0;
    for cell in &cells {
        match (cell.closed_form(), cell.quadrature()) {
            (Ok(exact), Ok(q)) => worst = worst.max((q - exact).abs()),
            (Err(e), _) | (_, Err(e)) => return vec![ints, Check::failed("log-cells", &e.to_string())],
        }
    }
    vec![ints, Check::new("log-cells", worst, 1e-12, cells.len())]
}

/// Detailed balance of the exact sampler kernel for the Krawtchouk
/// ensemble with `N = 2`, `M = 3`.
pub fn balance() -> Check {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for theta in [0.5, 1.0, 2.0] {
        let kernel = EnsembleSpec::krawtchouk(2, 3, theta).and_then(|s| exact_kernel(&s));
        match kernel {
            Ok(k) => {
                worst = worst.max(k.detailed_balance_defect());
                cases += k.states.len();
            }
            Err(e) => return Check::failed("detailed-balance", &e.to_string()),
        }
    }
    Check::new("detailed-balance", worst, 1e-12, cases)
}

fn checks(cfg: &Settings) -> Vec<Check> {
    match cfg.suite {
        Suite::Identities => {
            let mut all = vec![sandwich()];
            all.extend(cauchy());
            all.extend(integrals(cfg.seed, cfg.draws));
            all.push(balance());
            all
        }
        Suite::Sandwich => vec![sandwich()],
        Suite::Cauchy => cauchy(),
        Suite::Integrals => integrals(cfg.seed, cfg.draws),
        Suite::Balance => vec![balance()],
    }
}

pub fn run(args: &VerifyArgs) -> LabResult<Value> {
    let (cfg, params): (Settings, _) = effective(&args.common, defaults(), args)?;
    let run = Run::start("verify", &args.common, params, Some(cfg.seed))?;
    let mut failures = 0;
    let summary = run.complete(|run| {
        let checks = checks(&cfg);
        for c in &checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            say(&format!("{status} {}: worst {} (tolerance {}, {} cases)", c.name, fmt17(c.worst.0), fmt17(c.tolerance.0), c.cases));
        }
        let rows = checks.iter().map(|c| {
            vec![c.name.clone(), c.passed.to_string(), fmt17(c.worst.0), fmt17(c.tolerance.0), c.cases.to_string()]
        });
        run.out.write_csv("verify.csv", "verify", &["check", "passed", "worst", "tolerance", "cases"], rows)?;
        failures = checks.iter().filter(|c| !c.passed).count();
        Ok(Summary { suite: cfg.suite, passed: checks.len() - failures, failed: failures, checks })
    })?;
    if failures > 0 {
        return Err(LabError::Numerical(format!("{failures} check(s) failed")));
    }
    Ok(summary)
}
