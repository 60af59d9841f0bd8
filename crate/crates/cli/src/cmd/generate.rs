use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Subcommand, ValueEnum};
use pdrst::diagram::to_csv;
use pdrst::generate::pipelines::{circles_diagrams, sphere_h0, CirclesConfig, SphereConfig};
use pdrst::generate::{h0_persistence, h1_persistence_2d, Connectivity, GrfSimulator, GrfSpec};
use serde::Serialize;
use serde_json::json;

use crate::manifest::Output;
use crate::seeds::{stage_rng, Stage};

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    /// Noisy circles smoothed by a Gaussian kernel estimate (H0 and H1)
    Circles(CirclesArgs),
    /// Uniform sample from the unit sphere in three dimensions (H0)
    Sphere(SphereArgs),
    /// Gaussian random fields with covariance exp(-b |t|^a) (H0 and H1)
    Grf(GrfArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Concentric,
    NonConcentric,
}

#[derive(Args, Debug, Serialize)]
pub struct CirclesArgs {
    #[arg(long, value_enum, default_value = "concentric")]
    pub layout: Layout,
    /// Number of independent samples
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Kernel width; defaults to the layout's value
    #[arg(long)]
    pub eta: Option<f64>,
    /// Grid nodes per axis; defaults to the layout's value
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Also write the smoothed density grid
    #[arg(long)]
    pub write_density: bool,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SphereArgs {
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Points per sample
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 61)]
    pub resolution: usize,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct GrfArgs {
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Smoothness exponent in (0, 2]
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Inverse correlation length
    #[arg(long, default_value_t = 100.0)]
    pub b: f64,
    /// Grid nodes per axis
    #[arg(long, default_value_t = 256)]
    pub m: usize,
    /// Also write each simulated field
    #[arg(long)]
    pub write_field: bool,
    #[arg(short, long)]
    pub out: PathBuf,
}

fn points_csv<const D: usize>(header: &str, points: &[[f64; D]]) -> String {
    let mut s = format!("{header}\n");
    for p in points {
        let row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn run(mode: Mode, seed: u64) -> Result<()> {
    match &mode {
        Mode::Circles(a) => circles(a, &mode, seed),
        Mode::Sphere(a) => sphere(a, &mode, seed),
        Mode::Grf(a) => grf(a, &mode, seed),
    }
}

fn circles(a: &CirclesArgs, mode: &Mode, seed: u64) -> Result<()> {
    let mut config = match a.layout {
        Layout::Concentric => CirclesConfig::concentric(),
        Layout::NonConcentric => CirclesConfig::non_concentric(),
    };
    if let Some(eta) = a.eta {
        config.eta = eta;
    }
    if let Some(r) = a.resolution {
        config.resolution = r;
    }
    let mut out = Output::create(&a.out)?;
    let mut counts = Vec::new();
    for k in 0..a.count {
        let mut rng = stage_rng(seed, Stage::Generate, k as u64);
        let d = circles_diagrams(&config, &mut rng)?;
        out.write(&format!("sample_{k}.csv"), &points_csv("x,y", &d.samples))?;
        out.write(&format!("h0_{k}.csv"), &to_csv(&d.h0))?;
        out.write(&format!("h1_{k}.csv"), &to_csv(&d.h1))?;
        if a.write_density {
            out.write(&format!("density_{k}.csv"), &d.density.to_csv())?;
        }
        counts.push(json!({ "h0": d.h0.metadata, "h1": d.h1.metadata }));
    }
    out.finish("generate circles", seed, &json!({ "args": mode, "resolved": config }), &[], json!({ "counts": counts }))
}

fn sphere(a: &SphereArgs, mode: &Mode, seed: u64) -> Result<()> {
    let config = SphereConfig { n: a.n, eta: a.eta, resolution: a.resolution };
    let mut out = Output::create(&a.out)?;
    let mut counts = Vec::new();
    for k in 0..a.count {
        let mut rng = stage_rng(seed, Stage::Generate, k as u64);
        let (samples, d) = sphere_h0(&config, &mut rng)?;
        out.write(&format!("sample_{k}.csv"), &points_csv("x,y,z", &samples))?;
        out.write(&format!("h0_{k}.csv"), &to_csv(&d))?;
        counts.push(d.metadata.clone());
    }
    out.finish("generate sphere", seed, mode, &[], json!({ "counts": counts }))
}

fn grf(a: &GrfArgs, mode: &Mode, seed: u64) -> Result<()> {
    let mut sim = GrfSimulator::new(GrfSpec { a: a.a, b: a.b, m: a.m })?;
    let mut out = Output::create(&a.out)?;
    let mut counts = Vec::new();
    for k in 0..a.count {
        let mut rng = stage_rng(seed, Stage::Generate, k as u64);
        let field = sim.sample(&mut rng);
        let h0 = h0_persistence(&field, Connectivity::Face);
        let h1 = h1_persistence_2d(&field);
        out.write(&format!("h0_{k}.csv"), &to_csv(&h0))?;
        out.write(&format!("h1_{k}.csv"), &to_csv(&h1))?;
        if a.write_field {
            out.write(&format!("field_{k}.csv"), &field.to_csv())?;
        }
        counts.push(json!({ "h0": h0.len(), "h1": h1.len() }));
    }
    let details = json!({ "counts": counts, "embedding_size": sim.embedding_size(), "min_relative_eigenvalue": sim.min_relative_eigenvalue });
    out.finish("generate grf", seed, mode, &[], details)
}
