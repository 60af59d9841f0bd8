//! Superlevel-set persistence of grid functions: H0 by union-find with the
//! elder rule, and H1 in 2-D through the complementary dual grid.

use serde::{Deserialize, Serialize};

use super::GridFunction;
use crate::diagram::{DiagramPoint, PersistenceDiagram};

/// Neighbor structure of the lattice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    /// 4-connectivity in 2-D, 6 in 3-D.
    #[default]
    Face,
    /// 8-connectivity in 2-D, 26 in 3-D.
    Full,
}

impl Connectivity {
    fn offsets(self, dim: usize) -> Vec<Vec<isize>> {
        let mut out = Vec::new();
        let mut cur = vec![-1isize; dim];
        loop {
            let nonzero = cur.iter().filter(|&&c| c != 0).count();
            let keep = match self {
                Connectivity::Face => nonzero == 1,
                Connectivity::Full => nonzero > 0,
            };
            if keep {
                out.push(cur.clone());
            }
            let mut a = dim;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                if cur[a] < 1 {
                    cur[a] += 1;
                    break;
                }
                cur[a] = -1;
            }
        }
    }
}

/// Lattice neighbors of linear index `k`.
fn lattice_neighbors(shape: &[usize], offsets: &[Vec<isize>], k: usize, out: &mut Vec<usize>) {
    let dim = shape.len();
    let mut idx = [0usize; 3];
    let mut r = k;
    for a in (0..dim).rev() {
        idx[a] = r % shape[a];
        r /= shape[a];
    }
    out.clear();
    'next: for off in offsets {
        let mut lin = 0usize;
        for a in 0..dim {
            let c = idx[a] as isize + off[a];
            if c < 0 || c >= shape[a] as isize {
                continue 'next;
            }
            lin = lin * shape[a] + c as usize;
        }
        out.push(lin);
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Union-find over nodes entered in `order`. Returns `(birth, death)` pairs
/// with `death = None` for surviving components; pairs of zero persistence are
/// dropped.
fn elder_rule(
    values: &[f64],
    order: &[usize],
    mut neighbors: impl FnMut(usize, &mut Vec<usize>),
) -> Vec<(f64, Option<f64>)> {
    let n = values.len();
    let mut rank = vec![usize::MAX; n];
    for (r, &k) in order.iter().enumerate() {
        rank[k] = r;
    }
    let mut parent: Vec<usize> = (0..n).collect();
    let mut pairs = Vec::new();
    let mut nb = Vec::new();
    let mut roots = Vec::new();
    for (r, &k) in order.iter().enumerate() {
        neighbors(k, &mut nb);
        roots.clear();
        for &j in &nb {
            if rank[j] < r {
                let root = find(&mut parent, j);
                if !roots.contains(&root) {
                    roots.push(root);
                }
            }
        }
        // Roots are the oldest node of their component.
        let Some(&elder) = roots.iter().min_by_key(|&&x| rank[x]) else {
            continue;
        };
        parent[k] = elder;
        for &root in &roots {
            if root != elder {
                parent[root] = elder;
                if values[root] != values[k] {
                    pairs.push((values[root], Some(values[k])));
                }
            }
        }
    }
    for &k in order {
        if parent[k] == k {
            pairs.push((values[k], None));
        }
    }
    pairs
}

/// Nodes by decreasing value, ties by increasing index.
fn superlevel_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

fn to_diagram(degree: usize, pairs: &[(f64, Option<f64>)]) -> PersistenceDiagram {
    let pts = pairs
        .iter()
        .map(|&(b, d)| match d {
            Some(d) => DiagramPoint::finite(b, d),
            None => DiagramPoint::infinite(b),
        })
        .collect();
    PersistenceDiagram::new(degree, pts)
}

/// H0 of the superlevel sets `{f >= u}`. The global maximum gives the one
/// infinite point.
pub fn h0_persistence(gf: &GridFunction, connectivity: Connectivity) -> PersistenceDiagram {
    let offsets = connectivity.offsets(gf.dim());
    let order = superlevel_order(&gf.values);
    let pairs = elder_rule(&gf.values, &order, |k, out| lattice_neighbors(&gf.shape, &offsets, k, out));
    to_diagram(0, &pairs)
}

/// H1 of the 4-connected superlevel sets of a 2-D function. Holes are the
/// bounded 8-connected components of `{f < u}`; these are tracked as H0 of
/// `-f` on a grid padded with a border at `+inf` that stands for the outside.
/// Each dual pair `(b', d')` becomes the loop `(-d', -b')`.
///
/// # Panics
/// If `gf` is not two-dimensional.
pub fn h1_persistence_2d(gf: &GridFunction) -> PersistenceDiagram {
    assert_eq!(gf.dim(), 2, "H1 is only available for 2-D grids");
    let (n1, n2) = (gf.shape[0], gf.shape[1]);
    let (p1, p2) = (n1 + 2, n2 + 2);
    let mut g = vec![f64::INFINITY; p1 * p2];
    let inner = |i: usize, j: usize| (i + 1) * p2 + j + 1;
    for i in 0..n1 {
        for j in 0..n2 {
            g[inner(i, j)] = -gf.values[i * n2 + j];
        }
    }
    let mut order: Vec<usize> = (0..p1 * p2).filter(|&k| g[k] == f64::INFINITY).collect();
    order.extend(superlevel_order(&gf.values).iter().rev().map(|&k| inner(k / n2, k % n2)));
    let shape = [p1, p2];
    let offsets = Connectivity::Full.offsets(2);
    let pairs: Vec<(f64, Option<f64>)> = elder_rule(&g, &order, |k, out| lattice_neighbors(&shape, &offsets, k, out))
        .into_iter()
        .filter_map(|(b, d)| match d {
            Some(d) if b.is_finite() => Some((-d, Some(-b))),
            _ => None,
        })
        .collect();
    to_diagram(1, &pairs)
}

/// `V - E + F` of the cubical complex spanned by `{f >= u}`: nodes, 4-adjacent
/// node pairs and unit squares whose vertices all lie in the set.
///
/// # Panics
/// If `gf` is not two-dimensional.
pub fn euler_characteristic_2d(gf: &GridFunction, u: f64) -> i64 {
    assert_eq!(gf.dim(), 2, "Euler characteristic is only available for 2-D grids");
    let (n1, n2) = (gf.shape[0], gf.shape[1]);
    let inside = |i: usize, j: usize| gf.values[i * n2 + j] >= u;
    let (mut v, mut e, mut f) = (0i64, 0i64, 0i64);
    for i in 0..n1 {
        for j in 0..n2 {
            if !inside(i, j) {
                continue;
            }
            v += 1;
            let right = j + 1 < n2 && inside(i, j + 1);
            let down = i + 1 < n1 && inside(i + 1, j);
            e += right as i64 + down as i64;
            if right && down && inside(i + 1, j + 1) {
                f += 1;
            }
        }
    }
    v - e + f
}

/// Number of diagram points alive at level `u`: `d < u <= b`.
pub fn betti_at(diagram: &PersistenceDiagram, u: f64) -> usize {
    diagram.points.iter().filter(|p| p.birth >= u && p.death.is_none_or(|d| d < u)).count()
}
