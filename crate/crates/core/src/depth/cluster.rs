//! Grouping diagram points by lifetime with seeded k-means.

use serde::{Deserialize, Serialize};

use crate::diagram::PersistenceDiagram;
use crate::error::{Error, Result};
use crate::stats::quantile;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterFeatures {
    /// Cosine distance on `(death, lifetime)`.
    #[default]
    DeathLifetime,
    /// Euclidean distance on lifetime alone.
    Lifetime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Cluster of each finite point, `None` if its cluster was discarded.
    pub labels: Vec<Option<usize>>,
    pub sizes: Vec<usize>,
    pub n_seeds: usize,
}

impl Clustering {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

const MAX_ROUNDS: usize = 200;

fn normalize(v: [f64; 2]) -> [f64; 2] {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if n > 0.0 {
        [v[0] / n, v[1] / n]
    } else {
        v
    }
}

/// Spherical k-means: assign by largest cosine similarity, centers are
/// normalized member means. Ties go to the lower cluster index.
fn cosine_kmeans(x: &[[f64; 2]], seeds: &[usize]) -> Vec<usize> {
    let unit: Vec<[f64; 2]> = x.iter().map(|v| normalize(*v)).collect();
    let mut centers: Vec<[f64; 2]> = seeds.iter().map(|&s| unit[s]).collect();
    let mut labels = vec![usize::MAX; x.len()];
    for _ in 0..MAX_ROUNDS {
        let mut changed = false;
        for (i, u) in unit.iter().enumerate() {
            let mut best = 0;
            let mut best_sim = f64::NEG_INFINITY;
            for (k, c) in centers.iter().enumerate() {
                let sim = u[0] * c[0] + u[1] * c[1];
                if sim > best_sim {
                    best_sim = sim;
                    best = k;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (k, c) in centers.iter_mut().enumerate() {
            let mut s = [0.0, 0.0];
            for (u, _) in unit.iter().zip(&labels).filter(|(_, l)| **l == k) {
                s[0] += u[0];
                s[1] += u[1];
            }
            if s != [0.0, 0.0] {
                *c = normalize(s);
            }
        }
    }
    labels
}

fn lifetime_kmeans(x: &[f64], seeds: &[usize]) -> Vec<usize> {
    let mut centers: Vec<f64> = seeds.iter().map(|&s| x[s]).collect();
    let mut labels = vec![usize::MAX; x.len()];
    for _ in 0..MAX_ROUNDS {
        let mut changed = false;
        for (i, v) in x.iter().enumerate() {
            let best = (0..centers.len()).min_by(|&a, &b| (v - centers[a]).abs().total_cmp(&(v - centers[b]).abs())).unwrap();
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (k, c) in centers.iter_mut().enumerate() {
            let members: Vec<f64> = x.iter().zip(&labels).filter(|(_, l)| **l == k).map(|(v, _)| *v).collect();
            if !members.is_empty() {
                *c = members.iter().sum::<f64>() / members.len() as f64;
            }
        }
    }
    labels
}

/// Seeds are the points whose lifetime exceeds the `root_percentile`
/// percentile; k-means runs with one cluster per seed, and clusters with fewer
/// than `min_fraction * n` members are dropped. Infinite points are ignored.
pub fn cluster_diagram(diagram: &PersistenceDiagram, root_percentile: f64, min_fraction: f64, features: ClusterFeatures) -> Result<Clustering> {
    if !(0.0..=100.0).contains(&root_percentile) || !(0.0..1.0).contains(&min_fraction) {
        return Err(Error::InvalidParameter(format!("percentile {root_percentile} / fraction {min_fraction} out of range")));
    }
    let pts: Vec<(f64, f64)> = diagram.points.iter().filter_map(|p| p.death.map(|d| (d, p.birth - d))).collect();
    let n = pts.len();
    if n < 4 {
        return Err(Error::TooFewPoints { needed: 4, got: n });
    }
    let lifetimes: Vec<f64> = pts.iter().map(|p| p.1).collect();
    if lifetimes.iter().all(|&l| l == lifetimes[0]) {
        return Ok(Clustering { labels: vec![Some(0); n], sizes: vec![n], n_seeds: 0 });
    }
    let threshold = quantile(&lifetimes, root_percentile / 100.0);
    let seeds: Vec<usize> = (0..n).filter(|&i| lifetimes[i] > threshold).collect();
    if seeds.is_empty() {
        return Ok(Clustering { labels: vec![None; n], sizes: vec![], n_seeds: 0 });
    }
    let raw = match features {
        ClusterFeatures::DeathLifetime => cosine_kmeans(&pts.iter().map(|p| [p.0, p.1]).collect::<Vec<_>>(), &seeds),
        ClusterFeatures::Lifetime => lifetime_kmeans(&lifetimes, &seeds),
    };
    let mut counts = vec![0usize; seeds.len()];
    for &l in &raw {
        counts[l] += 1;
    }
    let min_size = min_fraction * n as f64;
    let mut remap = vec![None; seeds.len()];
    let mut sizes = Vec::new();
    for (k, &c) in counts.iter().enumerate() {
        if c > 0 && (c as f64) >= min_size {
            remap[k] = Some(sizes.len());
            sizes.push(c);
        }
    }
    let labels = raw.iter().map(|&l| remap[l]).collect();
    Ok(Clustering { labels, sizes, n_seeds: seeds.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_lines() -> PersistenceDiagram {
        let mut pairs: Vec<(f64, f64)> = (0..38).map(|i| {
            let d = 1.0 + 0.01 * i as f64;
            (d + 0.1, d)
        }).collect();
        pairs.push((2.0, 1.0));
        pairs.push((2.1, 1.1));
        PersistenceDiagram::from_pairs(0, &pairs)
    }

    #[test]
    fn separated_lines_give_two_clusters() {
        let c = cluster_diagram(&two_lines(), 75.0, 0.05, ClusterFeatures::DeathLifetime).unwrap();
        assert_eq!(c.n_seeds, 2);
        assert_eq!(c.count(), 2);
        let mut sizes = c.sizes.clone();
        sizes.sort();
        assert_eq!(sizes, vec![2, 38]);
        assert_eq!(c.labels[38], c.labels[39]);
        assert_ne!(c.labels[0], c.labels[38]);
        let l = cluster_diagram(&two_lines(), 75.0, 0.05, ClusterFeatures::Lifetime).unwrap();
        assert_eq!(l.count(), 2);
    }

    #[test]
    fn stricter_size_floor_drops_small_cluster() {
        let c = cluster_diagram(&two_lines(), 75.0, 0.06, ClusterFeatures::DeathLifetime).unwrap();
        assert_eq!(c.count(), 1);
        assert_eq!(c.labels[39], None);
    }

    #[test]
    fn equal_lifetimes_form_one_cluster() {
        let d = PersistenceDiagram::from_pairs(0, &[(1.5, 1.0), (2.5, 2.0), (3.5, 3.0), (0.5, 0.0), (4.5, 4.0)]);
        let c = cluster_diagram(&d, 90.0, 0.05, ClusterFeatures::DeathLifetime).unwrap();
        assert_eq!(c.sizes, vec![5]);
        assert!(c.labels.iter().all(|l| *l == Some(0)));
    }

    #[test]
    fn rejects_tiny_diagrams() {
        let d = PersistenceDiagram::from_pairs(0, &[(1.5, 1.0), (2.5, 2.0)]);
        assert!(cluster_diagram(&d, 75.0, 0.05, ClusterFeatures::DeathLifetime).is_err());
    }
}
