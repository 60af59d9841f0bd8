use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use pdrst::density::{normal_reference_matrix, Bandwidth, GridSpec};
use pdrst::diagram::to_ppd;
use pdrst::fit::{estimate_correlations, fit_diagram, Criterion, FitOptions, Optimizer, Selection};
use pdrst::mcmc::prior_for;
use pdrst::model::NeighborhoodKind;
use serde::Serialize;
use serde_json::json;

use crate::io::{read_finite, stem};
use crate::manifest::Output;
use crate::seeds::{stage_seed, Stage};

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionArg {
    Aic,
    Bic,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Newton,
    NelderMead,
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    /// Diagram files (CSV birth,death or JSON)
    #[arg(long, num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    /// Homological degree recorded for CSV inputs
    #[arg(long, default_value_t = 0)]
    pub degree: usize,
    /// `auto` selects among all seven masks; otherwise a fixed mask such as `1,0,0` or `110`
    #[arg(long, default_value = "auto")]
    pub mask: String,
    /// Criterion used by `--mask auto`
    #[arg(long, value_enum, default_value = "aic")]
    pub criterion: CriterionArg,
    #[arg(long, value_enum, default_value = "newton")]
    pub optimizer: OptimizerArg,
    /// `rot` (rule of thumb), `normal-reference`, or a kernel width
    #[arg(long, default_value = "rot")]
    pub bandwidth: String,
    /// Prior grid nodes per axis
    #[arg(long, default_value_t = GridSpec::DEFAULT_RESOLUTION)]
    pub resolution: usize,
    /// Term k of the energy sees only the k-th nearest point
    #[arg(long)]
    pub shells: bool,
    /// Also write the shape prior on its grid
    #[arg(long)]
    pub write_prior: bool,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn parse_mask(s: &str) -> Result<Option<Vec<bool>>> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    let digits: Vec<&str> = if s.contains(',') { s.split(',').map(str::trim).collect() } else { s.split("").filter(|t| !t.is_empty()).collect() };
    let mask = digits
        .iter()
        .map(|d| match *d {
            "1" => Ok(true),
            "0" => Ok(false),
            _ => bail!("mask entries must be 0 or 1, got {d:?}"),
        })
        .collect::<Result<Vec<bool>>>()?;
    if mask.is_empty() || mask.len() > 3 || !mask.iter().any(|m| *m) {
        bail!("mask {s:?} must have one to three entries with at least one 1");
    }
    Ok(Some(mask))
}

pub fn run(a: FitArgs, seed: u64) -> Result<()> {
    let selection = match parse_mask(&a.mask)? {
        Some(m) => Selection::Mask(m),
        None => Selection::Criterion(match a.criterion {
            CriterionArg::Aic => Criterion::Aic,
            CriterionArg::Bic => Criterion::Bic,
        }),
    };
    let mut out = Output::create(&a.out)?;
    let mut fits = Vec::new();
    let mut summaries = Vec::new();
    for (i, path) in a.input.iter().enumerate() {
        let d = read_finite(path, a.degree)?;
        let bandwidth = match a.bandwidth.as_str() {
            "rot" => None,
            "normal-reference" => Some(normal_reference_matrix(&to_ppd(&d)?)?),
            v => Some(Bandwidth::Scalar(v.parse::<f64>().with_context(|| format!("bandwidth {v:?}"))?)),
        };
        let opts = FitOptions {
            optimizer: match a.optimizer {
                OptimizerArg::Newton => Optimizer::Newton,
                OptimizerArg::NelderMead => Optimizer::NelderMead,
            },
            neighborhoods: if a.shells { NeighborhoodKind::Shell } else { NeighborhoodKind::Nested },
            seed: stage_seed(seed, Stage::Fit, i as u64),
            ..FitOptions::default()
        };
        let (fit, model) = fit_diagram(&d, bandwidth, a.resolution, &selection, &opts).with_context(|| format!("fitting {}", path.display()))?;
        let name = stem(path);
        out.write_json(&format!("{name}.fit.json"), &fit)?;
        out.write(&format!("{name}.model.json"), &(model.to_json()? + "\n"))?;
        if a.write_prior {
            let gd = prior_for(&to_ppd(&d)?, &model)?;
            out.write(&format!("{name}.prior.csv"), &gd.to_csv())?;
        }
        summaries.push(json!({ "input": path.display().to_string(), "n": fit.n, "mask": fit.selected_mask, "alpha": fit.params.alpha, "theta": fit.params.theta, "log_pl": fit.log_pl }));
        fits.push(fit);
    }
    if fits.len() >= 3 {
        out.write_json("correlations.json", &json!({ "parameters": "alpha,theta1..thetaK", "matrix": estimate_correlations(&fits)? }))?;
    }
    out.finish("fit", seed, &a, &a.input, json!({ "fits": summaries }))
}
