//! The subcommands. Each takes its flags, merges them with an optional
//! config file and the defaults, writes its outputs and a manifest, and
//! returns a JSON summary.

pub mod enumerate;
pub mod equilibrium;
pub mod identities;
pub mod rate;
pub mod sample;
pub mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ensemble_core::equilibrium::{solve_best_effort, solve_unbounded, ClosedForm, EquilibriumSolution, SolverOptions};
use ensemble_core::measures::{jack_potential, krawtchouk_potential, Potential, Table};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::{merge, read_config_file};
use crate::error::{LabError, LabResult};
use crate::io::OutputDir;
use crate::manifest::{now_rfc3339, RunManifest};

/// Options shared by every subcommand.
#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Directory receiving the output files and the manifest.
    #[arg(long, default_value = "ensemble-lab-out")]
    pub out: PathBuf,
    /// JSON config file, or the manifest of an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the JSON summary on stdout.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Pure-β Jack measure, rate `m`.
    Krawtchouk,
    /// Jack–Plancherel measure, time `t`.
    Jack,
    /// Potential read from a CSV file with columns `x,V,dV`.
    Tabulated,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Krawtchouk => "krawtchouk",
            Family::Jack => "jack",
            Family::Tabulated => "tabulated",
        }
    }
}

/// Flags selecting the potential.
#[derive(Debug, Clone, Default, clap::Args, Serialize)]
pub struct ModelFlags {
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Krawtchouk rate 𝙼 (limit of M/N).
    #[arg(long)]
    pub m: Option<f64>,
    /// Jack–Plancherel time t.
    #[arg(long)]
    pub t: Option<f64>,
    /// Jack parameter θ (default 1)
    #[arg(long)]
    pub theta: Option<f64>,
    /// CSV with columns x,V,dV for the tabulated family.
    #[arg(long)]
    pub potential_file: Option<PathBuf>,
    /// Growth margin claimed for a tabulated potential.
    #[arg(long)]
    pub xi: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub family: Family,
    pub m: Option<f64>,
    pub t: Option<f64>,
    pub theta: f64,
    pub potential_file: Option<PathBuf>,
    pub xi: Option<f64>,
}

fn required<T: Copy>(v: Option<T>, flag: &str, family: &str) -> LabResult<T> {
    v.ok_or_else(|| LabError::Usage(format!("--{flag} is required for the {family} family")))
}

impl Model {
    pub fn potential(&self) -> LabResult<Potential> {
        Ok(match self.family {
            Family::Krawtchouk => krawtchouk_potential(required(self.m, "m", "krawtchouk")?, self.theta)?,
            Family::Jack => jack_potential(required(self.t, "t", "jack")?, self.theta)?,
            Family::Tabulated => {
                let path = self.potential_file.as_deref().ok_or_else(|| LabError::Usage("--potential-file is required for the tabulated family".into()))?;
                Potential::tabulated(read_potential_table(path)?, self.theta, self.xi)?
            }
        })
    }

    pub fn closed_form(&self) -> Option<ClosedForm> {
        match self.family {
            Family::Krawtchouk => self.m.map(|m_rate| ClosedForm::Krawtchouk { m_rate, theta: self.theta }),
            Family::Jack => self.t.map(|t| ClosedForm::Jack { t, theta: self.theta }),
            Family::Tabulated => None,
        }
    }

    /// Solves for the equilibrium measure on `[0, s]`; without `s` the
    /// Krawtchouk family uses its domain `[0, 𝙼+θ]` and the others grow the
    /// interval until the support fits.
    pub fn solve(&self, v: &Potential, s: Option<f64>, n_grid: usize, max_iters: usize) -> LabResult<EquilibriumSolution> {
        let s = s.or_else(|| v.domain_right());
        let sol = match s {
            Some(s) => solve_best_effort(v, self.theta, s, n_grid, SolverOptions { max_iters, ..SolverOptions::default() })?,
            None => solve_unbounded(v, self.theta, n_grid)?,
        };
        if !sol.converged {
            return Err(LabError::Numerical(format!(
                "equilibrium solver did not converge after {} iterations (relative energy change {:e})",
                sol.iterations, sol.last_change
            )));
        }
        Ok(sol)
    }
}

/// Prints a line on stdout, ignoring a closed pipe.
pub fn say(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

/// Reads a potential table with header `x,V,dV`.
pub fn read_potential_table(path: &Path) -> LabResult<Table> {
    let mut r = csv::Reader::from_path(path)?;
    let (mut xs, mut vs, mut ds) = (Vec::new(), Vec::new(), Vec::new());
    for row in r.deserialize::<(f64, f64, f64)>() {
        let (x, v, d) = row?;
        xs.push(x);
        vs.push(v);
        ds.push(d);
    }
    Ok(Table::new(xs, vs, ds)?)
}

/// Merges flags, config file and defaults for one command.
pub fn effective<F: Serialize, T: Serialize + serde::de::DeserializeOwned>(
    common: &Common,
    defaults: Value,
    flags: &F,
) -> LabResult<(T, Map<String, Value>)> {
    let file = common.config.as_deref().map(read_config_file).transpose()?;
    merge(defaults, file, flags)
}

/// Output directory, manifest and summary of one run.
pub struct Run {
    pub out: OutputDir,
    manifest: RunManifest,
    print_json: bool,
}

impl Run {
    pub fn start(command: &str, common: &Common, parameters: Map<String, Value>, seed: Option<u64>) -> LabResult<Self> {
        let started = now_rfc3339();
        Ok(Run { out: OutputDir::create(&common.out)?, manifest: RunManifest::new(command, parameters, seed, started), print_json: common.json })
    }

    /// Runs `body`; on success writes the summary and manifest, on failure
    /// a diagnostic.
    pub fn complete<S: Serialize, F: FnOnce(&mut Run) -> LabResult<S>>(mut self, body: F) -> LabResult<Value> {
        match body(&mut self) {
            Ok(summary) => self.finish(&summary),
            Err(e) => Err(self.fail(e)),
        }
    }

    /// Writes `summary.json` and the manifest, and echoes the summary.
    pub fn finish<S: Serialize>(mut self, summary: &S) -> LabResult<Value> {
        self.out.write_json("summary.json", &format!("{}-summary", self.manifest.command), summary)?;
        if self.print_json {
            say(&serde_json::to_string_pretty(summary)?);
        }
        self.manifest.finish(&mut self.out)?;
        Ok(serde_json::to_value(summary)?)
    }

    /// Records a failure as `diagnostic.json` before returning it.
    pub fn fail(mut self, err: LabError) -> LabError {
        let diag = serde_json::json!({
            "command": self.manifest.command,
            "error": err.to_string(),
            "exit_code": err.exit_code(),
            "parameters": self.manifest.parameters,
        });
        let _ = self.out.write_json("diagnostic.json", "diagnostic", &diag);
        let _ = self.manifest.finish(&mut self.out);
        err
    }
}
