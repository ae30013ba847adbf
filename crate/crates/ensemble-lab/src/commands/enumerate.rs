//! `enumerate`: exact partition function and pmf by walking every state.

use ensemble_core::measures::{exact_log_partition, exact_log_pmf, jack_potential, krawtchouk_log_partition, EnsembleSpec, Interaction};
use ensemble_core::statespace::{state_count, Cap};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{effective, Common, Family, Model, ModelFlags, Run};
use crate::error::{LabError, LabResult};
use crate::io::{fmt17, Num};

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct EnumerateArgs {
    /// Family, Jack time and θ; here `--m` is the cap M on λ₁.
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub n: Option<usize>,
    /// Write every state with its probability.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub pmf: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Settings {
    #[serde(flatten)]
    model: Model,
    n: usize,
    #[serde(default)]
    pmf: bool,
}

#[derive(Debug, Serialize)]
struct Summary {
    family: &'static str,
    n: usize,
    cap: u64,
    states: u128,
    log_partition: Num,
    closed_form_log_partition: Option<Num>,
    probability_sum: Option<Num>,
}

fn defaults() -> Value {
    json!({ "theta": 1.0 })
}

pub fn run(args: &EnumerateArgs) -> LabResult<Value> {
    let (cfg, params): (Settings, _) = effective(&args.common, defaults(), args)?;
    Run::start("enumerate", &args.common, params, None)?.complete(|run| body(&cfg, run))
}

fn body(cfg: &Settings, run: &mut Run) -> LabResult<Summary> {
    let (n, theta) = (cfg.n, cfg.model.theta);
    let m = cfg.model.m.ok_or_else(|| LabError::Usage("--m (the cap M) is required".into()))?;
    if !(m >= 0.0 && m.fract() == 0.0) {
        return Err(LabError::Usage(format!("--m must be a nonnegative integer cap, got {m}")));
    }
    let cap = m as u64;
    let spec = match cfg.model.family {
        Family::Krawtchouk => EnsembleSpec::krawtchouk(n, cap, theta)?,
        Family::Jack => {
            let t = cfg.model.t.ok_or_else(|| LabError::Usage("--t is required for the jack family".into()))?;
            EnsembleSpec::new(n, theta, Cap::Finite(cap), jack_potential(t, theta)?, Interaction::QTheta)?
        }
        Family::Tabulated => EnsembleSpec::new(n, theta, Cap::Finite(cap), cfg.model.potential()?, Interaction::QTheta)?,
    };
    let log_z = exact_log_partition(&spec)?.ln();
    let probability_sum = if cfg.pmf {
        let pmf = exact_log_pmf(&spec)?;
        let sum = pmf.iter().map(|(_, l)| l.exp()).sum::<f64>();
        let rows = pmf.iter().map(|(c, l)| {
            let lambda: Vec<String> = c.to_partition().iter().map(u64::to_string).collect();
            vec![lambda.join(" "), fmt17(c.position(0)), fmt17(l + log_z), fmt17(l.exp())]
        });
        run.out.write_csv("pmf.csv", "enumerate-pmf", &["lambda", "l1", "log_weight", "probability"], rows)?;
        Some(Num(sum))
    } else {
        None
    };
    Ok(Summary {
        family: cfg.model.family.name(),
        n,
        cap,
        states: state_count(n, cap),
        log_partition: Num(log_z),
        closed_form_log_partition: (cfg.model.family == Family::Krawtchouk).then(|| Num(krawtchouk_log_partition(n, cap, theta))),
        probability_sum,
    })
}
