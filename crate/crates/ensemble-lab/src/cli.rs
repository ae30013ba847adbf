//! Command-line grammar.

use clap::{Parser, Subcommand};
use serde_json::Value;

use crate::commands::{enumerate, equilibrium, identities, rate, sample, verify};
use crate::error::LabResult;

#[derive(Debug, Parser)]
#[command(name = "ensemble-lab", version, about = "Reproducible experiments with discrete β-ensembles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the equilibrium measure and tabulate its density.
    Equilibrium(equilibrium::EquilibriumArgs),
    /// Tabulate G and the upper-tail rate J; fit edge asymptotics.
    Rate(rate::RateArgs),
    /// Run Metropolis–Hastings chains and estimate tail probabilities.
    Sample(sample::SampleArgs),
    /// Exact partition function and pmf by enumeration.
    Enumerate(enumerate::EnumerateArgs),
    /// Run an identity suite; exits 1 if any check fails.
    Verify(verify::VerifyArgs),
    /// Tabulate log-integral closed forms against quadrature.
    Identities(identities::IdentitiesArgs),
}

pub fn run(cli: &Cli) -> LabResult<Value> {
    match &cli.command {
        Command::Equilibrium(a) => equilibrium::run(a),
        Command::Rate(a) => rate::run(a),
        Command::Sample(a) => sample::run(a),
        Command::Enumerate(a) => enumerate::run(a),
        Command::Verify(a) => verify::run(a),
        Command::Identities(a) => identities::run(a),
    }
}
