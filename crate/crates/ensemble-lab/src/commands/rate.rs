//! `rate`: the effective potential `G`, the upper-tail rate `J`, its edge
//! asymptotics and optionally the lower-tail rate.

use ensemble_core::equilibrium::{jack_band, krawtchouk_band};
use ensemble_core::rates::{
    fit_edge_asymptotic, jack_edge_prefactor, jack_j, krawtchouk_edge_prefactor, krawtchouk_j, lower_tail_rate, RateProfile,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{effective, Common, Family, Model, ModelFlags, Run};
use crate::error::{LabError, LabResult};
use crate::io::{fmt17, Num};

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct RateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelFlags,
    /// Right end of the solver domain (default: the potential's domain, else found by doubling)
    #[arg(long)]
    pub s: Option<f64>,
    /// Grid cells on [0, s]
    #[arg(long)]
    pub n_grid: Option<usize>,
    /// Solver iteration limit
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// First tabulated point (default: the right support edge).
    #[arg(long)]
    pub from: Option<f64>,
    /// Last tabulated point (default: the end of the domain or grid).
    #[arg(long)]
    pub to: Option<f64>,
    /// Tabulated points
    #[arg(long)]
    pub points: Option<usize>,
    /// Fit J(b+α) ≈ Cα^p near the edge.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub asymptotic: bool,
    /// Smallest distance α from the edge in the fit
    #[arg(long)]
    pub alpha_min: Option<f64>,
    /// Largest distance α from the edge in the fit
    #[arg(long)]
    pub alpha_max: Option<f64>,
    /// Points in the fit, log-spaced in α
    #[arg(long)]
    pub fit_points: Option<usize>,
    /// Also compute the lower-tail rate at this point.
    #[arg(long)]
    pub lower: Option<f64>,
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
    from: Option<f64>,
    to: Option<f64>,
    points: usize,
    #[serde(default)]
    asymptotic: bool,
    alpha_min: Option<f64>,
    alpha_max: Option<f64>,
    fit_points: usize,
    lower: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Asymptotic {
    source: &'static str,
    alpha_range: (Num, Num),
    exponent: Num,
    prefactor: Num,
    expected_prefactor: Option<Num>,
    relative_error: Option<Num>,
}

#[derive(Debug, Serialize)]
struct Lower {
    t: Num,
    rate: Num,
    f_t: Num,
    f_inf: Num,
    h: Num,
}

#[derive(Debug, Serialize)]
struct Summary {
    family: &'static str,
    b_v: Num,
    closed_form_edge: Option<Num>,
    right: Num,
    points: usize,
    asymptotic: Option<Asymptotic>,
    lower: Option<Lower>,
}

fn defaults() -> Value {
    json!({ "theta": 1.0, "n_grid": 1024, "max_iters": 100_000, "points": 101, "fit_points": 25 })
}

/// Closed-form edge `b` and rate `J(y)`, where known.
fn closed_rate(model: &Model) -> Option<(f64, Box<dyn Fn(f64) -> ensemble_core::Result<f64>>)> {
    let theta = model.theta;
    match model.family {
        Family::Krawtchouk => {
            let m = model.m?;
            Some((krawtchouk_band(m, theta).1, Box::new(move |y| krawtchouk_j(y, m, theta))))
        }
        Family::Jack => {
            let t = model.t?;
            Some((jack_band(t, theta).1, Box::new(move |y| jack_j(y, t, theta))))
        }
        Family::Tabulated => None,
    }
}

fn expected_prefactor(model: &Model) -> Option<f64> {
    match model.family {
        Family::Krawtchouk => model.m.map(|m| krawtchouk_edge_prefactor(m, model.theta)),
        Family::Jack => model.t.map(|t| jack_edge_prefactor(t, model.theta)),
        Family::Tabulated => None,
    }
}

pub fn run(args: &RateArgs) -> LabResult<Value> {
    let (cfg, params): (Settings, _) = effective(&args.common, defaults(), args)?;
    Run::start("rate", &args.common, params, None)?.complete(|run| body(&cfg, run))
}

fn body(cfg: &Settings, run: &mut Run) -> LabResult<Summary> {
    let v = cfg.model.potential()?;
    let sol = cfg.model.solve(&v, cfg.s, cfg.n_grid, cfg.max_iters)?;
    let profile = RateProfile::new(&sol, &v);
    let closed = closed_rate(&cfg.model);
    let from = cfg.from.unwrap_or(profile.b_v());
    let to = cfg.to.unwrap_or(profile.right());
    if cfg.points < 2 || !(to > from) {
        return Err(LabError::Usage(format!("need --points ≥ 2 and --to > --from, got [{from}, {to}]")));
    }
    let rows = (0..cfg.points).map(|k| {
        let t = from + (to - from) * k as f64 / (cfg.points - 1) as f64;
        let jc = closed.as_ref().and_then(|(_, j)| j(t).ok()).unwrap_or(f64::NAN);
        vec![fmt17(t), fmt17(profile.g(t)), fmt17(profile.j(t)), fmt17(jc)]
    });
    run.out.write_csv("rate.csv", "rate", &["t", "g", "j", "j_closed"], rows)?;

    let asymptotic = if cfg.asymptotic {
        let (source, lo, hi, fit) = match &closed {
            Some((b, j)) => {
                let (lo, hi) = (cfg.alpha_min.unwrap_or(1e-4), cfg.alpha_max.unwrap_or(1e-2));
                ("closed-form", lo, hi, fit_edge_asymptotic(|a| j(b + a), lo, hi, cfg.fit_points))
            }
            None => {
                let (lo, hi) = (cfg.alpha_min.unwrap_or(0.05), cfg.alpha_max.unwrap_or(0.5));
                let b = profile.b_v();
                ("numeric", lo, hi, fit_edge_asymptotic(|a| Ok(profile.j(b + a)), lo, hi, cfg.fit_points))
            }
        };
        let fit = fit?;
        let expected = expected_prefactor(&cfg.model);
        Some(Asymptotic {
            source,
            alpha_range: (Num(lo), Num(hi)),
            exponent: Num(fit.exponent),
            prefactor: Num(fit.prefactor),
            expected_prefactor: expected.map(Num),
            relative_error: expected.map(|e| Num(fit.prefactor / e - 1.0)),
        })
    } else {
        None
    };
    let lower = cfg
        .lower
        .map(|t| lower_tail_rate(t, &v, cfg.model.theta, cfg.n_grid))
        .transpose()?
        .map(|l| Lower { t: Num(l.t), rate: Num(l.rate), f_t: Num(l.f_t), f_inf: Num(l.f_inf), h: Num(l.h) });
    Ok(Summary {
        family: cfg.model.family.name(),
        b_v: Num(profile.b_v()),
        closed_form_edge: closed.as_ref().map(|(b, _)| Num(*b)),
        right: Num(profile.right()),
        points: cfg.points,
        asymptotic,
        lower,
    })
}

