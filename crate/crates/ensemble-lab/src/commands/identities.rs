//! `identities`: tabulates the log-integral closed forms next to their
//! quadratures for seeded random parameters.

use std::collections::BTreeMap;

use ensemble_core::rates::random_log_integrals;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{effective, Common, Run};
use crate::error::LabResult;
use crate::io::{fmt17, Num};

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct IdentitiesArgs {
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
    seed: u64,
    draws: usize,
}

#[derive(Debug, Serialize)]
struct Summary {
    draws: usize,
    /// Largest relative discrepancy per integral.
    worst_relative_error: BTreeMap<&'static str, Num>,
}

fn defaults() -> Value {
    json!({ "seed": 1, "draws": 100 })
}

pub fn run(args: &IdentitiesArgs) -> LabResult<Value> {
    let (cfg, params): (Settings, _) = effective(&args.common, defaults(), args)?;
    Run::start("identities", &args.common, params, Some(cfg.seed))?.complete(|run| {
        let mut worst: BTreeMap<&'static str, f64> = BTreeMap::new();
        let mut rows = Vec::new();
        for kind in random_log_integrals(cfg.seed, cfg.draws) {
            let exact = kind.closed_form()?;
            let q = kind.quadrature()?;
            let rel = (q - exact).abs() / exact.abs().max(q.abs()).max(1e-12);
            let w = worst.entry(kind.name()).or_insert(0.0);
            *w = w.max(rel);
            let (a, b, c, d) = kind.params();
            rows.push(vec![kind.name().to_string(), fmt17(a), fmt17(b), fmt17(c), fmt17(d), fmt17(exact), fmt17(q), fmt17(rel)]);
        }
        run.out.write_csv(
            "identities.csv",
            "identities",
            &["integral", "a", "b", "c", "d", "closed_form", "quadrature", "relative_error"],
            rows,
        )?;
        Ok(Summary { draws: cfg.draws, worst_relative_error: worst.into_iter().map(|(k, v)| (k, Num(v))).collect() })
    })
}
