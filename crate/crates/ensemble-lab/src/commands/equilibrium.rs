//! `equilibrium`: solves the constrained energy problem and tabulates the
//! density.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{effective, Common, Model, ModelFlags, Run};
use crate::error::LabResult;
use crate::io::{fmt17, Num};

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct EquilibriumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelFlags,
    /// Right end of the interval [0, s].
    /// Right end of the solver domain (default: the potential's domain, else found by doubling)
    #[arg(long)]
    pub s: Option<f64>,
    /// Grid cells on [0, s]
    #[arg(long)]
    pub n_grid: Option<usize>,
    /// Solver iteration limit
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Residual tolerance, relative to 1 + |κ|.
    #[arg(long)]
    pub residual_tol: Option<f64>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Settings {
    #[serde(flatten)]
    model: Model,
    s: Option<f64>,
    n_grid: usize,
    max_iters: usize,
    residual_tol: f64,
}

#[derive(Debug, Serialize)]
struct ClosedSummary {
    support: (Num, Num),
    sup_error: Num,
    edge_error_cells: (Num, Num),
}

#[derive(Debug, Serialize)]
struct Summary {
    family: &'static str,
    s: Num,
    n_grid: usize,
    h: Num,
    energy: Num,
    support_edges: (Num, Num),
    kappa: Num,
    mass: Num,
    iterations: usize,
    converged: bool,
    last_change: Num,
    max_violation: Num,
    residual_pass_fraction: Num,
    closed_form: Option<ClosedSummary>,
}

fn defaults() -> Value {
    json!({ "theta": 1.0, "n_grid": 1024, "max_iters": 100_000, "residual_tol": 5e-3 })
}

pub fn run(args: &EquilibriumArgs) -> LabResult<Value> {
    let (cfg, params): (Settings, _) = effective(&args.common, defaults(), args)?;
    Run::start("equilibrium", &args.common, params, None)?.complete(|run| body(&cfg, run))
}

fn body(cfg: &Settings, run: &mut Run) -> LabResult<Summary> {
    let v = cfg.model.potential()?;
    let sol = cfg.model.solve(&v, cfg.s, cfg.n_grid, cfg.max_iters)?;
    let d = &sol.density;
    let h = d.h();
    let closed = cfg.model.closed_form();
    let breakpoints = closed.map(|c| c.breakpoints()).unwrap_or_else(|| vec![sol.support_edges.0, sol.support_edges.1]);
    let margin = 3.0 * h;
    let rows = (0..d.n_grid()).map(|j| {
        let x = d.cell_center(j);
        let mut row = vec![fmt17(x), fmt17(d.values()[j]), fmt17(sol.residuals[j])];
        row.push(closed.map_or_else(|| "nan".into(), |c| fmt17(c.density(x))));
        row
    });
    run.out.write_csv("density.csv", "equilibrium-density", &["x", "phi", "residual", "closed_form"], rows)?;
    let max_violation = (0..d.n_grid())
        .filter(|&j| {
            let lo = j as f64 * h;
            !breakpoints.iter().any(|&b| b > lo - margin && b < lo + h + margin)
        })
        .map(|j| sol.violation(j))
        .fold(0.0, f64::max);
    let closed_summary = closed.map(|c| {
        let (lo, hi) = c.support();
        ClosedSummary {
            support: (Num(lo), Num(hi)),
            sup_error: Num(d.sup_error_away_from(|x| c.density(x), &breakpoints, margin)),
            edge_error_cells: (Num((sol.support_edges.0 - lo) / h), Num((sol.support_edges.1 - hi) / h)),
        }
    });
    let summary = Summary {
        family: cfg.model.family.name(),
        s: Num(d.s()),
        n_grid: d.n_grid(),
        h: Num(h),
        energy: Num(sol.energy),
        support_edges: (Num(sol.support_edges.0), Num(sol.support_edges.1)),
        kappa: Num(sol.kappa),
        mass: Num(d.mass()),
        iterations: sol.iterations,
        converged: sol.converged,
        last_change: Num(sol.last_change),
        max_violation: Num(max_violation),
        residual_pass_fraction: Num(sol.residual_pass_fraction(&breakpoints, margin, cfg.residual_tol)),
        closed_form: closed_summary,
    };
    Ok(summary)
}
