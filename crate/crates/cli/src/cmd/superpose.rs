use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use pdrst::diagram::superpose;
use serde::Serialize;
use serde_json::json;

use crate::io::{read_diagram, stem};
use crate::manifest::Output;

#[derive(Args, Debug, Serialize)]
pub struct SuperposeArgs {
    /// Diagram files
    #[arg(long, num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    /// Source labels, one per input; file stems by default
    #[arg(long, num_args = 1..)]
    pub labels: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub degree: usize,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn run(a: SuperposeArgs, seed: u64) -> Result<()> {
    if !a.labels.is_empty() && a.labels.len() != a.input.len() {
        bail!("{} labels given for {} inputs", a.labels.len(), a.input.len());
    }
    let mut diagrams = Vec::new();
    for (i, path) in a.input.iter().enumerate() {
        let label = a.labels.get(i).cloned().unwrap_or_else(|| stem(path));
        diagrams.push((label, read_diagram(path, a.degree)?));
    }
    let rows: usize = diagrams.iter().map(|(_, d)| d.len()).sum();
    let mut out = Output::create(&a.out)?;
    out.write("superposed.csv", &superpose(&diagrams))?;
    out.finish("superpose", seed, &a, &a.input, json!({ "rows": rows }))
}
