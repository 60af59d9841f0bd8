use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use pdrst::depth::{calibrate_inflation, detect, outlier_count_matrix, CGrid, DetectionConfig};
use pdrst::diagram::{to_ppd, PointSet};
use serde::Serialize;
use serde_json::{json, Value};

use crate::io::read_finite;
use crate::manifest::Output;
use crate::seeds::{stage_seed, Stage};

#[derive(Args, Debug, Serialize)]
pub struct DetectArgs {
    /// Observed diagram
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub degree: usize,
    /// Manifest written by `replicate`, or a directory of replicate_*.csv files
    #[arg(long)]
    pub replicates: PathBuf,
    /// Target rate of bagplots with at least A outliers
    #[arg(long, default_value_t = 0.05)]
    pub pstar: f64,
    #[arg(long = "A", default_value_t = 2)]
    pub a: usize,
    /// Points closer than this to the diagonal are never outliers
    #[arg(long, default_value_t = 0.001)]
    pub eps: f64,
    /// Inflation factors searched, as lo:hi:step
    #[arg(long, default_value = "1:5:0.02")]
    pub cgrid: CGrid,
    /// Replicates used for calibration
    #[arg(long, default_value_t = 50)]
    pub n1: usize,
    /// Replicates used for scoring
    #[arg(long, default_value_t = 50)]
    pub n2: usize,
    /// Fixed inflation factor; skips calibration
    #[arg(long)]
    pub c: Option<f64>,
    /// Calibrate on these diagrams instead of the first n1 replicates
    #[arg(long, num_args = 1..)]
    pub calibrate_on: Vec<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
}

fn replicate_paths(source: &Path) -> Result<Vec<PathBuf>> {
    if source.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(source)
            .with_context(|| format!("listing {}", source.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("replicate_") && n.ends_with(".csv")))
            .collect();
        paths.sort();
        return Ok(paths);
    }
    let text = std::fs::read_to_string(source).with_context(|| format!("reading {}", source.display()))?;
    let manifest: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", source.display()))?;
    let Some(list) = manifest.pointer("/details/replicates").and_then(Value::as_array) else {
        bail!("{} does not list any replicates", source.display());
    };
    let dir = source.parent().unwrap_or(Path::new("."));
    list.iter()
        .map(|v| v.as_str().map(|s| dir.join(s)).context("replicate names must be strings"))
        .collect()
}

fn load_ppds(paths: &[PathBuf], degree: usize) -> Result<Vec<PointSet>> {
    paths.iter().map(|p| to_ppd(&read_finite(p, degree)?).with_context(|| format!("{}", p.display()))).collect()
}

pub fn run(a: DetectArgs, seed: u64) -> Result<()> {
    let diagram = read_finite(&a.input, a.degree)?;
    let original = to_ppd(&diagram)?;
    let paths = replicate_paths(&a.replicates)?;
    let mut fixed_c = a.c;
    let needed = if fixed_c.is_some() || !a.calibrate_on.is_empty() { a.n2 } else { a.n1 + a.n2 };
    if needed > paths.len() {
        bail!("need {needed} replicates (n1 = {}, n2 = {}) but {} lists {}", a.n1, a.n2, a.replicates.display(), paths.len());
    }
    if needed < paths.len() {
        log::info!("using the first {needed} of {} replicates", paths.len());
    }
    let mut calibration_warning = false;
    if fixed_c.is_none() && !a.calibrate_on.is_empty() {
        let sets = load_ppds(&a.calibrate_on, a.degree)?;
        let grid = a.cgrid.values()?;
        let counts = outlier_count_matrix(&sets, &grid, a.eps, stage_seed(seed, Stage::Detect, 1))?;
        let cal = calibrate_inflation(&counts, &grid, a.a, a.pstar)?;
        calibration_warning = cal.warning;
        fixed_c = Some(cal.c);
    }
    let replicates = load_ppds(&paths[..needed], a.degree)?;
    let config = DetectionConfig {
        p_star: a.pstar,
        c_grid: a.cgrid,
        a: a.a,
        epsilon: a.eps,
        n1: a.n1,
        n2: a.n2,
        fixed_c,
        seed: stage_seed(seed, Stage::Detect, 0),
    };
    let mut report = detect(&original, &replicates, &config)?;
    report.calibration_warning |= calibration_warning;
    let mut out = Output::create(&a.out)?;
    out.write_json("detection.json", &json!({ "config": config, "report": report }))?;
    let mut csv = String::from("x,y,lifetime,f,p_value\n");
    for (i, p) in diagram.points.iter().enumerate() {
        let death = p.death.unwrap_or(f64::NAN);
        csv.push_str(&format!("{},{},{},{},{}\n", p.birth, death, original.points[i][1], report.f[i], report.p_values[i]));
    }
    out.write("points.csv", &csv)?;
    let mut inputs = vec![a.input.clone(), a.replicates.clone()];
    inputs.extend(a.calibrate_on.iter().cloned());
    let details = json!({ "c": report.calibrated_c, "flagged": report.flagged(a.pstar), "replicates_used": needed });
    out.finish("detect", seed, &a, &inputs, details)
}
