//! `sample`: seeded Metropolis–Hastings chains, with the empirical law of
//! `ℓ_i/N` and optional tail estimates.

use clap::ValueEnum;
use ensemble_core::measures::{krawtchouk_cap, EnsembleSpec, Interaction};
use ensemble_core::sampler::{in_tail, ks_distance, run_chain, ChainConfig, ChainTally, Fnv64, Side, TailEstimate};
use ensemble_core::statespace::Cap;
use ensemble_core::equilibrium::ClosedForm;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{effective, Common, Family, Model, ModelFlags, Run};
use crate::error::{LabError, LabResult};
use crate::io::{fmt17, Num};
use crate::parallel::{map_indexed, thread_limit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailSide {
    Upper,
    Lower,
}

impl From<TailSide> for Side {
    fn from(s: TailSide) -> Side {
        match s {
            TailSide::Upper => Side::Upper,
            TailSide::Lower => Side::Lower,
        }
    }
}

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelFlags,
    /// Number of particles N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Cap M on λ₁ (for jack, overrides the automatic truncation).
    #[arg(long)]
    pub cap: Option<u64>,
    /// Neglected mass allowed by the automatic jack truncation.
    #[arg(long)]
    pub tail_eps: Option<f64>,
    /// Total steps per chain
    #[arg(long)]
    pub steps: Option<u64>,
    /// Steps discarded before sampling
    #[arg(long)]
    pub burnin: Option<u64>,
    /// Steps between recorded samples
    #[arg(long)]
    pub thin: Option<u64>,
    /// Independent chains, one RNG stream each
    #[arg(long)]
    pub chains: Option<usize>,
    /// RNG seed shared by all chains
    #[arg(long)]
    pub seed: Option<u64>,
    /// Estimate P(ℓ₁ ≥ tN) or P(ℓ₁ ≤ tN) at this t.
    #[arg(long)]
    pub tail: Option<f64>,
    /// Tail direction (default upper)
    #[arg(long, value_enum)]
    pub side: Option<TailSide>,
    /// Histogram bins.
    #[arg(long)]
    pub bins: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Settings {
    #[serde(flatten)]
    model: Model,
    n: usize,
    cap: Option<u64>,
    tail_eps: f64,
    steps: u64,
    burnin: u64,
    thin: u64,
    chains: usize,
    seed: u64,
    tail: Option<f64>,
    side: TailSide,
    bins: usize,
}

#[derive(Debug, Serialize)]
struct ChainSummary {
    chain: usize,
    samples: usize,
    acceptance_rate: Num,
    digest: String,
}

#[derive(Debug, Serialize)]
struct CapSummary {
    level: u64,
    truncated: bool,
    neglected_mass: Option<Num>,
}

#[derive(Debug, Serialize)]
struct TailSummary {
    t: Num,
    side: TailSide,
    p_hat: Num,
    stderr: Num,
    n_effective: Num,
    hits: u64,
    samples: u64,
    /// Rule-of-three upper bound, reported only when no hits occurred.
    upper_bound_if_no_hits: Option<Num>,
    cap: CapSummary,
}

#[derive(Debug, Serialize)]
struct Summary {
    family: &'static str,
    n: usize,
    theta: Num,
    cap: CapSummary,
    threads: usize,
    chains: Vec<ChainSummary>,
    ks_distance: Option<Num>,
    tail: Option<TailSummary>,
}

struct ChainOutput {
    tops: Vec<f64>,
    atoms: Vec<f64>,
    acceptance_rate: f64,
    digest: u64,
}

fn defaults() -> Value {
    json!({
        "theta": 1.0, "tail_eps": 1e-12, "steps": 1_000_000, "burnin": 100_000, "thin": 100,
        "chains": 1, "seed": 0, "side": "upper", "bins": 50
    })
}

fn ensemble(cfg: &Settings) -> LabResult<(EnsembleSpec, Option<ClosedForm>)> {
    let (n, theta) = (cfg.n, cfg.model.theta);
    if n == 0 {
        return Err(LabError::Usage("--n must be positive".into()));
    }
    Ok(match cfg.model.family {
        Family::Krawtchouk => {
            let cap = cfg
                .cap
                .or_else(|| cfg.model.m.map(|m| krawtchouk_cap(m, n)))
                .ok_or_else(|| LabError::Usage("--cap (or --m) is required for the krawtchouk family".into()))?;
            let spec = EnsembleSpec::krawtchouk(n, cap, theta)?;
            (spec, Some(ClosedForm::Krawtchouk { m_rate: cap as f64 / n as f64, theta }))
        }
        Family::Jack => {
            let t = cfg.model.t.ok_or_else(|| LabError::Usage("--t is required for the jack family".into()))?;
            let mut spec = EnsembleSpec::jack_plancherel(n, t, theta, cfg.tail_eps)?;
            if let Some(cap) = cfg.cap {
                spec.cap = Cap::Finite(cap);
            }
            (spec, Some(ClosedForm::Jack { t, theta }))
        }
        Family::Tabulated => {
            let cap = cfg.cap.ok_or_else(|| LabError::Usage("--cap is required for the tabulated family".into()))?;
            (EnsembleSpec::new(n, theta, Cap::Finite(cap), cfg.model.potential()?, Interaction::QTheta)?, None)
        }
    })
}

fn cap_summary(cap: Cap) -> CapSummary {
    match cap {
        Cap::Truncated { level, tail_mass } => CapSummary { level, truncated: true, neglected_mass: Some(Num(tail_mass)) },
        other => CapSummary { level: other.level().unwrap_or(u64::MAX), truncated: false, neglected_mass: None },
    }
}

fn run_one(chain: &ChainConfig, index: usize) -> LabResult<ChainOutput> {
    let n = chain.spec.n;
    let theta = chain.spec.theta;
    let scale = n as f64;
    let mut run = run_chain(chain, index)?;
    let mut digest = Fnv64::default();
    let mut tops = Vec::new();
    let mut atoms = Vec::new();
    while let Some(p) = run.next_partition() {
        for &x in p {
            digest.write(&x.to_le_bytes());
        }
        tops.push(p[0] as f64 + (n - 1) as f64 * theta);
        atoms.extend(p.iter().enumerate().map(|(i, &x)| (x as f64 + (n - 1 - i) as f64 * theta) / scale));
    }
    Ok(ChainOutput { tops, atoms, acceptance_rate: run.current().acceptance_rate(), digest: digest.finish() })
}

pub fn run(args: &SampleArgs) -> LabResult<Value> {
    let (cfg, params): (Settings, _) = effective(&args.common, defaults(), args)?;
    Run::start("sample", &args.common, params, Some(cfg.seed))?.complete(|run| body(&cfg, run))
}

fn body(cfg: &Settings, run: &mut Run) -> LabResult<Summary> {
    let (spec, closed) = ensemble(cfg)?;
    let (n, cap) = (spec.n, spec.cap);
    let chain = ChainConfig::new(spec, cfg.steps, cfg.burnin, cfg.thin, cfg.seed, cfg.chains)?;
    let threads = thread_limit().min(cfg.chains);
    let outputs = map_indexed(cfg.chains, threads, |k| run_one(&chain, k)).into_iter().collect::<LabResult<Vec<_>>>()?;

    let rows = outputs.iter().enumerate().flat_map(|(c, o)| {
        o.tops.iter().enumerate().map(move |(k, &top)| vec![c.to_string(), k.to_string(), fmt17(top / n as f64)])
    });
    run.out.write_csv("samples.csv", "sample-top", &["chain", "sample", "l1_over_n"], rows)?;

    let mut atoms: Vec<f64> = outputs.iter().flat_map(|o| o.atoms.iter().copied()).collect();
    let hi = atoms.iter().copied().fold(0.0, f64::max) + 1.0 / n as f64;
    let bins = cfg.bins.max(1);
    let width = hi / bins as f64;
    let mut counts = vec![0u64; bins];
    for &a in &atoms {
        counts[((a / width) as usize).min(bins - 1)] += 1;
    }
    let total = atoms.len().max(1) as f64;
    let hist = counts.iter().enumerate().map(|(k, &c)| {
        let lo = k as f64 * width;
        let mid = lo + 0.5 * width;
        let cf = closed.map_or(f64::NAN, |f| f.density(mid));
        vec![fmt17(lo), fmt17(lo + width), c.to_string(), fmt17(c as f64 / (total * width)), fmt17(cf)]
    });
    run.out.write_csv("histogram.csv", "sample-histogram", &["bin_lo", "bin_hi", "count", "density", "closed_form"], hist)?;
    let ks = closed.map(|f| Num(ks_distance(&mut atoms, |x| f.cdf(x))));

    let tail = cfg.tail.map(|t| {
        let side: Side = cfg.side.into();
        let threshold = t * n as f64;
        let tallies: Vec<ChainTally> = outputs
            .iter()
            .map(|o| ChainTally::from_indicators(o.tops.iter().map(|&x| in_tail(x, threshold, side)), o.tops.len() as u64))
            .collect();
        let e = TailEstimate::from_tallies(t, side, &tallies);
        TailSummary {
            t: Num(t),
            side: cfg.side,
            p_hat: Num(e.p_hat),
            stderr: Num(e.stderr),
            n_effective: Num(e.n_effective),
            hits: e.hits,
            samples: e.samples,
            upper_bound_if_no_hits: e.upper_bound_if_no_hits.map(Num),
            cap: cap_summary(cap),
        }
    });
    if let Some(t) = &tail {
        if let Some(b) = t.upper_bound_if_no_hits {
            eprintln!("no hits in {} samples; rule-of-three bound p < {}", t.samples, fmt17(b.0));
        }
    }
    Ok(Summary {
        family: cfg.model.family.name(),
        n,
        theta: Num(cfg.model.theta),
        cap: cap_summary(cap),
        threads,
        chains: outputs
            .iter()
            .enumerate()
            .map(|(k, o)| ChainSummary {
                chain: k,
                samples: o.tops.len(),
                acceptance_rate: Num(o.acceptance_rate),
                digest: format!("{:016x}", o.digest),
            })
            .collect(),
        ks_distance: ks,
        tail,
    })
}
