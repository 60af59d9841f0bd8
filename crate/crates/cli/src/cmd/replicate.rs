use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use pdrst::diagram::{to_csv, to_ppd};
use pdrst::fit::{fit_legacy, FitOptions};
use pdrst::mcmc::{replicate, McmcOptions, ReplicationSchedule, UpdateOrder};
use pdrst::model::{FittedModel, LegacyParams};
use serde::Serialize;
use serde_json::json;

use crate::io::read_finite;
use crate::manifest::Output;
use crate::seeds::{stage_seed, Stage};

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    Fixed,
    RandomScan,
}

#[derive(Args, Debug, Serialize)]
pub struct ReplicateArgs {
    /// Diagram to replicate
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub degree: usize,
    /// Model JSON written by `fit`
    #[arg(long)]
    pub model: PathBuf,
    /// Burn-in sweeps
    #[arg(long, default_value_t = 100)]
    pub burn: usize,
    /// Sweeps between retained states
    #[arg(long, default_value_t = 100)]
    pub nb: usize,
    /// States retained per run
    #[arg(long, default_value_t = 1)]
    pub nr: usize,
    /// Independent runs
    #[arg(long = "nR", default_value_t = 1)]
    pub n_runs: usize,
    /// Use the global-interaction Hamiltonian instead of the local model
    #[arg(long)]
    pub legacy: bool,
    /// Interaction terms of the legacy model when fitting it here
    #[arg(long, default_value_t = 1)]
    pub legacy_k: usize,
    /// Legacy distance offset
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Legacy parameters as JSON, skipping the legacy fit
    #[arg(long)]
    pub legacy_params: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "fixed")]
    pub order: Order,
    /// Rebuild the prior from the current state after every block
    #[arg(long)]
    pub refresh: bool,
    /// Worker threads for independent runs
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn run(a: ReplicateArgs, seed: u64) -> Result<()> {
    let d = read_finite(&a.input, a.degree)?;
    let model_text = std::fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let model = FittedModel::from_json(&model_text).with_context(|| format!("parsing {}", a.model.display()))?;
    let chain_seed = stage_seed(seed, Stage::Replicate, 0);
    let legacy: Option<LegacyParams> = if !a.legacy {
        None
    } else if let Some(p) = &a.legacy_params {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
    } else {
        let opts = FitOptions { seed: stage_seed(seed, Stage::Fit, 0), ..FitOptions::default() };
        let lf = fit_legacy(&to_ppd(&d)?, &model.grid, a.legacy_k, a.delta, &opts).context("fitting the legacy model")?;
        log::info!("legacy fit: {:?}", lf.params);
        Some(lf.params)
    };
    if let Some(lp) = &legacy {
        lp.validate()?;
    }
    let schedule = ReplicationSchedule { burn_in: a.burn, n_b: a.nb, n_r: a.nr, n_runs: a.n_runs };
    let opts = McmcOptions {
        order: match a.order {
            Order::Fixed => UpdateOrder::Fixed,
            Order::RandomScan => UpdateOrder::RandomScan,
        },
        refresh_every_block: a.refresh,
        jobs: a.jobs,
    };
    let (diagrams, runs) = replicate(&d, &model, legacy.as_ref(), &schedule, &opts, chain_seed)?;
    let mut out = Output::create(&a.out)?;
    let mut names = Vec::new();
    for (i, rep) in diagrams.iter().enumerate() {
        let name = format!("replicate_{i:04}.csv");
        out.write(&name, &to_csv(rep))?;
        names.push(name);
    }
    if let Some(lp) = &legacy {
        out.write_json("legacy_params.json", lp)?;
    }
    let details = json!({ "replicates": names, "chain_seed": chain_seed, "schedule": schedule, "runs": runs });
    out.finish("replicate", seed, &a, &[a.input.clone(), a.model.clone()], details)
}
