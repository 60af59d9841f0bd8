use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use pdrst::depth::{cluster_diagram, ClusterFeatures};
use serde::Serialize;
use serde_json::json;

use crate::io::{read_finite, stem};
use crate::manifest::Output;

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Features {
    /// Cosine distance on (death, lifetime)
    DeathLifetime,
    /// Distance on lifetime alone
    Lifetime,
}

#[derive(Args, Debug, Serialize)]
pub struct ClusterArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub degree: usize,
    /// Points with lifetime above this percentile seed the clusters
    #[arg(long, default_value_t = 75.0)]
    pub percentile: f64,
    /// Clusters smaller than this fraction of the points are dropped
    #[arg(long, default_value_t = 0.05)]
    pub min_fraction: f64,
    #[arg(long, value_enum, default_value = "death-lifetime")]
    pub features: Features,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn run(a: ClusterArgs, seed: u64) -> Result<()> {
    let features = match a.features {
        Features::DeathLifetime => ClusterFeatures::DeathLifetime,
        Features::Lifetime => ClusterFeatures::Lifetime,
    };
    let mut out = Output::create(&a.out)?;
    let mut summary = String::from("source,clusters,seeds,points\n");
    for path in &a.input {
        let d = read_finite(path, a.degree)?;
        let c = cluster_diagram(&d, a.percentile, a.min_fraction, features)?;
        let mut csv = String::from("birth,death,lifetime,cluster\n");
        for (p, l) in d.points.iter().zip(&c.labels) {
            let death = p.death.unwrap_or(f64::NAN);
            let label = l.map(|v| v.to_string()).unwrap_or_default();
            csv.push_str(&format!("{},{},{},{}\n", p.birth, death, p.birth - death, label));
        }
        let name = stem(path);
        out.write(&format!("{name}.clusters.csv"), &csv)?;
        summary.push_str(&format!("{name},{},{},{}\n", c.count(), c.n_seeds, d.len()));
    }
    out.write("cluster_counts.csv", &summary)?;
    out.finish("cluster", seed, &a, &a.input, json!(null))
}
