//! Local nearest-neighbour Hamiltonian with a global shape prior, the legacy
//! variance-based Hamiltonian, and their pseudo-likelihoods.

use serde::{Deserialize, Serialize};

use crate::density::{Bandwidth, GridDensity, GridSpec};
use crate::diagram::{Point, PointSet};
use crate::error::{Error, Result};

pub const MAX_K: usize = 3;
pub const ALPHA_MAX: f64 = 3.0;

/// How `N_k` is formed from the ordered neighbours.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborhoodKind {
    /// `N_k` = the `k` nearest points, so nearer neighbours count in several terms.
    #[default]
    Nested,
    /// Experimental: term `k` only sees the `k`-th nearest point.
    Shell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub theta: Vec<f64>,
    pub active: Vec<bool>,
    #[serde(default)]
    pub neighborhoods: NeighborhoodKind,
}

impl ModelParams {
    pub fn new(alpha: f64, theta: Vec<f64>, active: Vec<bool>) -> Result<Self> {
        let p = Self { alpha, theta, active, neighborhoods: NeighborhoodKind::Nested };
        p.validate()?;
        Ok(p)
    }

    /// All `K` terms active.
    pub fn full(alpha: f64, theta: Vec<f64>) -> Result<Self> {
        let k = theta.len();
        Self::new(alpha, theta, vec![true; k])
    }

    /// `alpha = 1`, `theta = 0`: the model reduces to the prior.
    pub fn prior_only(k: usize) -> Self {
        Self { alpha: 1.0, theta: vec![0.0; k], active: vec![true; k], neighborhoods: NeighborhoodKind::Nested }
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.theta.len();
        if k == 0 || k > MAX_K {
            return Err(Error::InvalidParameter(format!("K must be in 1..={MAX_K}, got {k}")));
        }
        if self.active.len() != k {
            return Err(Error::InvalidParameter(format!("mask has {} entries for K = {k}", self.active.len())));
        }
        if !(0.0..=ALPHA_MAX).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, {ALPHA_MAX}], got {}", self.alpha)));
        }
        for (t, a) in self.theta.iter().zip(&self.active) {
            if !t.is_finite() {
                return Err(Error::InvalidParameter(format!("theta not finite: {t}")));
            }
            if !a && *t != 0.0 {
                return Err(Error::InvalidParameter(format!("inactive theta must be 0, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegacyParams {
    pub theta_h: f64,
    pub theta_v: f64,
    pub theta: Vec<f64>,
    pub delta: f64,
}

impl LegacyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {}", self.delta)));
        }
        if self.theta.is_empty() || self.theta.len() > MAX_K {
            return Err(Error::InvalidParameter(format!("K must be in 1..={MAX_K}, got {}", self.theta.len())));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalEvaluation {
    pub log_numerator: f64,
    pub log_normalizer: f64,
}

impl ConditionalEvaluation {
    pub fn log_density(&self) -> f64 {
        self.log_numerator - self.log_normalizer
    }
}

fn dist2(a: Point, b: Point) -> f64 {
    let (u, v) = (a[0] - b[0], a[1] - b[1]);
    u * u + v * v
}

pub fn dist(a: Point, b: Point) -> f64 {
    dist2(a, b).sqrt()
}

/// Indices of the `k` points nearest to `center`, skipping `skip`, ordered by
/// distance with ties going to the lower index.
pub fn nearest_indices(points: &[Point], center: Point, skip: Option<usize>, k: usize) -> Vec<usize> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (j, &p) in points.iter().enumerate() {
        if Some(j) == skip {
            continue;
        }
        let d = dist2(p, center);
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, j));
        best.truncate(k);
    }
    best.into_iter().map(|(_, j)| j).collect()
}

/// Ordered `K` nearest neighbours of point `i`; `N_k` is the first `k` entries.
pub fn neighborhoods(ps: &PointSet, i: usize, k: usize) -> Result<Vec<usize>> {
    if ps.len() <= k {
        return Err(Error::TooFewPoints { needed: k + 1, got: ps.len() });
    }
    Ok(nearest_indices(&ps.points, ps.points[i], Some(i), k))
}

/// `sum_k theta_k sum_{z in N_k} |z - y|` for neighbours sorted by distance to
/// the conditioning point.
pub fn local_energy(y: Point, neighbors: &[Point], theta: &[f64], kind: NeighborhoodKind) -> f64 {
    let mut e = 0.0;
    match kind {
        NeighborhoodKind::Nested => {
            let mut running = 0.0;
            for (k, t) in theta.iter().enumerate() {
                running += dist(neighbors[k], y);
                e += t * running;
            }
        }
        NeighborhoodKind::Shell => {
            for (k, t) in theta.iter().enumerate() {
                e += t * dist(neighbors[k], y);
            }
        }
    }
    e
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn prior_at(gd: &GridDensity, ps: &PointSet, i: usize) -> Result<f64> {
    let x = ps.points[i];
    let lf = gd.log_eval(x);
    if !lf.is_finite() {
        return Err(Error::ZeroPrior { index: i, x1: x[0], x2: x[1] });
    }
    Ok(lf)
}

/// Conditional log density of point `i` given the others, normalized by the
/// trapezoid integral over the grid with the neighbourhood held at `x_i`.
pub fn conditional_log_density(ps: &PointSet, i: usize, params: &ModelParams, gd: &GridDensity) -> Result<ConditionalEvaluation> {
    params.validate()?;
    let nb = neighborhoods(ps, i, params.k())?;
    let nbp: Vec<Point> = nb.iter().map(|&j| ps.points[j]).collect();
    let lf = prior_at(gd, ps, i)?;
    let x = ps.points[i];
    let log_numerator = -local_energy(x, &nbp, &params.theta, params.neighborhoods) + params.alpha * lf;
    let spec = gd.spec();
    let nodes = spec.nodes();
    let w = spec.trapezoid_weights();
    let terms = nodes.iter().zip(&w).zip(gd.log_values()).map(|((z, w), lz)| {
        w.ln() - local_energy(*z, &nbp, &params.theta, params.neighborhoods) + params.alpha * lz
    });
    let log_normalizer = log_sum_exp(terms);
    if !log_normalizer.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    Ok(ConditionalEvaluation { log_numerator, log_normalizer })
}

/// Sum over points of the conditional log densities.
pub fn log_pseudolikelihood(ps: &PointSet, params: &ModelParams, gd: &GridDensity) -> Result<f64> {
    (0..ps.len()).map(|i| conditional_log_density(ps, i, params, gd).map(|c| c.log_density())).sum()
}

/// Full legacy Hamiltonian: weighted horizontal spread, uncentred vertical
/// spread and truncated neighbour distances.
pub fn legacy_hamiltonian(ps: &PointSet, lp: &LegacyParams) -> Result<f64> {
    lp.validate()?;
    let n = ps.len();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let k = lp.theta.len().min(n - 1);
    let mean1 = ps.points.iter().map(|p| p[0]).sum::<f64>() / n as f64;
    let var_h: f64 = ps.points.iter().map(|p| (p[0] - mean1).powi(2)).sum();
    let var_v: f64 = ps.points.iter().map(|p| p[1] * p[1]).sum();
    let mut inter = 0.0;
    for i in 0..n {
        let nb = nearest_indices(&ps.points, ps.points[i], Some(i), k);
        inter += legacy_interaction(ps.points[i], nb.iter().map(|&j| ps.points[j]), &lp.theta, lp.delta);
    }
    Ok(lp.theta_h * var_h + lp.theta_v * var_v + inter)
}

/// `delta^-2 sum_k theta_k sum_{y in N_k} |y - z| 1{|y - z| <= delta}` with
/// nested neighbourhoods given in distance order.
pub fn legacy_interaction(z: Point, neighbors: impl Iterator<Item = Point>, theta: &[f64], delta: f64) -> f64 {
    let mut e = 0.0;
    let mut running = 0.0;
    for (k, y) in neighbors.take(theta.len()).enumerate() {
        let d = dist(y, z);
        if d <= delta {
            running += d;
        }
        e += theta[k] * running;
    }
    e / (delta * delta)
}

/// Energy of placing point `i` at `z` under the legacy model, up to terms not
/// involving `z`. `sum_others` is the sum of the other points' first
/// coordinates and `n` the total point count.
pub fn legacy_conditional_energy(z: Point, neighbors: &[Point], sum_others: f64, n: usize, lp: &LegacyParams) -> f64 {
    let nf = n as f64;
    let h = z[0] * z[0] - (sum_others + z[0]).powi(2) / nf;
    lp.theta_h * h + lp.theta_v * z[1] * z[1] + legacy_interaction(z, neighbors.iter().copied(), &lp.theta, lp.delta)
}

/// Legacy conditional of point `i`, normalized over the grid of `spec`.
pub fn legacy_conditional_log_density(ps: &PointSet, i: usize, lp: &LegacyParams, spec: &GridSpec) -> Result<ConditionalEvaluation> {
    lp.validate()?;
    let n = ps.len();
    let k = lp.theta.len();
    if n <= k {
        return Err(Error::TooFewPoints { needed: k + 1, got: n });
    }
    let nb: Vec<Point> = nearest_indices(&ps.points, ps.points[i], Some(i), k).iter().map(|&j| ps.points[j]).collect();
    let s: f64 = ps.points.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p[0]).sum();
    let log_numerator = -legacy_conditional_energy(ps.points[i], &nb, s, n, lp);
    let nodes = spec.nodes();
    let w = spec.trapezoid_weights();
    let terms = nodes.iter().zip(&w).map(|(z, w)| w.ln() - legacy_conditional_energy(*z, &nb, s, n, lp));
    let log_normalizer = log_sum_exp(terms);
    if !log_normalizer.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    Ok(ConditionalEvaluation { log_numerator, log_normalizer })
}

pub fn legacy_log_pseudolikelihood(ps: &PointSet, lp: &LegacyParams, spec: &GridSpec) -> Result<f64> {
    (0..ps.len()).map(|i| legacy_conditional_log_density(ps, i, lp, spec).map(|c| c.log_density())).sum()
}

/// Model ready for replication: parameters plus everything needed to rebuild
/// the shape prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub params: ModelParams,
    pub bandwidth: Bandwidth,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_pl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl FittedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.params.validate()?;
        m.grid.validate()?;
        Ok(m)
    }
}

/// Pseudo-likelihood whose conditionals are exponential families in a
/// parameter vector `beta`: point `i` at `z` has log weight `beta . u_i(z)`.
///
/// Tabulating `u_i` on the grid once makes every later evaluation, gradient
/// and Hessian a single pass over the table.
#[derive(Clone, Debug)]
pub struct FeatureTable {
    dim: usize,
    n_points: usize,
    n_nodes: usize,
    log_weights: Vec<f64>,
    /// `[point][node][feature]`.
    nodes: Vec<f64>,
    /// `[point][feature]`.
    data: Vec<f64>,
}

/// Value, gradient and (negative semidefinite) Hessian over the selected coordinates.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
}

impl FeatureTable {
    /// Features `(ln fbar, -phi_1, ..., -phi_K)` so that `beta = (alpha, theta)`.
    pub fn local_model(ps: &PointSet, gd: &GridDensity, k: usize, kind: NeighborhoodKind) -> Result<Self> {
        if k == 0 || k > MAX_K {
            return Err(Error::InvalidParameter(format!("K must be in 1..={MAX_K}, got {k}")));
        }
        let n = ps.len();
        if n <= k {
            return Err(Error::TooFewPoints { needed: k + 1, got: n });
        }
        let spec = gd.spec();
        let grid = spec.nodes();
        let dim = k + 1;
        let n_nodes = grid.len();
        let mut nodes = vec![0.0; n * n_nodes * dim];
        let mut data = vec![0.0; n * dim];
        let features = |z: Point, nb: &[Point], lf: f64, out: &mut [f64]| {
            out[0] = lf;
            let mut running = 0.0;
            for kk in 0..k {
                let d = dist(nb[kk], z);
                running = match kind {
                    NeighborhoodKind::Nested => running + d,
                    NeighborhoodKind::Shell => d,
                };
                out[kk + 1] = -running;
            }
        };
        for i in 0..n {
            let nb: Vec<Point> = neighborhoods(ps, i, k)?.iter().map(|&j| ps.points[j]).collect();
            let lf = prior_at(gd, ps, i)?;
            features(ps.points[i], &nb, lf, &mut data[i * dim..(i + 1) * dim]);
            let block = &mut nodes[i * n_nodes * dim..(i + 1) * n_nodes * dim];
            for (g, z) in grid.iter().enumerate() {
                features(*z, &nb, gd.log_values()[g], &mut block[g * dim..(g + 1) * dim]);
            }
        }
        let log_weights = spec.trapezoid_weights().iter().map(|w| w.ln()).collect();
        Ok(Self { dim, n_points: n, n_nodes, log_weights, nodes, data })
    }

    /// Features for `beta = (theta_H, theta_V, theta_1..theta_K)` with `delta` fixed.
    pub fn legacy_model(ps: &PointSet, spec: &GridSpec, k: usize, delta: f64) -> Result<Self> {
        let n = ps.len();
        if n <= k || k == 0 {
            return Err(Error::TooFewPoints { needed: k + 1, got: n });
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        let grid = spec.nodes();
        let dim = k + 2;
        let n_nodes = grid.len();
        let nf = n as f64;
        let total: f64 = ps.points.iter().map(|p| p[0]).sum();
        let mut nodes = vec![0.0; n * n_nodes * dim];
        let mut data = vec![0.0; n * dim];
        let features = |z: Point, nb: &[Point], s: f64, out: &mut [f64]| {
            out[0] = -(z[0] * z[0] - (s + z[0]).powi(2) / nf);
            out[1] = -z[1] * z[1];
            let mut running = 0.0;
            for kk in 0..k {
                let d = dist(nb[kk], z);
                if d <= delta {
                    running += d;
                }
                out[kk + 2] = -running / (delta * delta);
            }
        };
        for i in 0..n {
            let nb: Vec<Point> = neighborhoods(ps, i, k)?.iter().map(|&j| ps.points[j]).collect();
            let s = total - ps.points[i][0];
            features(ps.points[i], &nb, s, &mut data[i * dim..(i + 1) * dim]);
            let block = &mut nodes[i * n_nodes * dim..(i + 1) * n_nodes * dim];
            for (g, z) in grid.iter().enumerate() {
                features(*z, &nb, s, &mut block[g * dim..(g + 1) * dim]);
            }
        }
        let log_weights = spec.trapezoid_weights().iter().map(|w| w.ln()).collect();
        Ok(Self { dim, n_points: n, n_nodes, log_weights, nodes, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Log pseudo-likelihood at `beta`.
    pub fn value(&self, beta: &[f64]) -> f64 {
        self.evaluate(beta, &[], false).value
    }

    /// Per-point log normalizers at `beta`.
    pub fn log_normalizers(&self, beta: &[f64]) -> Vec<f64> {
        let mut scratch = vec![0.0; self.n_nodes];
        (0..self.n_points).map(|i| self.point_lse(i, beta, &mut scratch)).collect()
    }

    fn point_lse(&self, i: usize, beta: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.dim;
        let block = &self.nodes[i * self.n_nodes * d..(i + 1) * self.n_nodes * d];
        let mut m = f64::NEG_INFINITY;
        for (g, (s, lw)) in scratch.iter_mut().zip(&self.log_weights).enumerate() {
            let u = &block[g * d..(g + 1) * d];
            let mut v = *lw;
            for (b, x) in beta.iter().zip(u) {
                v += b * x;
            }
            *s = v;
            m = m.max(v);
        }
        m + scratch.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
    }

    /// Value plus gradient and Hessian restricted to the coordinates in `active`.
    pub fn evaluate(&self, beta: &[f64], active: &[usize], hessian: bool) -> Evaluation {
        assert_eq!(beta.len(), self.dim);
        let d = self.dim;
        let a = active.len();
        let mut value = 0.0;
        let mut gradient = vec![0.0; a];
        let mut hess = vec![0.0; a * a];
        let mut scratch = vec![0.0; self.n_nodes];
        let mut mean = vec![0.0; a];
        let mut second = vec![0.0; a * a];
        for i in 0..self.n_points {
            let lse = self.point_lse(i, beta, &mut scratch);
            let x = &self.data[i * d..(i + 1) * d];
            value += beta.iter().zip(x).map(|(b, u)| b * u).sum::<f64>() - lse;
            if a == 0 {
                continue;
            }
            let block = &self.nodes[i * self.n_nodes * d..(i + 1) * self.n_nodes * d];
            mean.iter_mut().for_each(|v| *v = 0.0);
            second.iter_mut().for_each(|v| *v = 0.0);
            for (g, s) in scratch.iter().enumerate() {
                let p = (s - lse).exp();
                if p == 0.0 {
                    continue;
                }
                let u = &block[g * d..(g + 1) * d];
                for (r, &cr) in active.iter().enumerate() {
                    mean[r] += p * u[cr];
                    if hessian {
                        for (c, &cc) in active.iter().enumerate().take(r + 1) {
                            second[r * a + c] += p * u[cr] * u[cc];
                        }
                    }
                }
            }
            for (r, &cr) in active.iter().enumerate() {
                gradient[r] += x[cr] - mean[r];
                if hessian {
                    for c in 0..=r {
                        hess[r * a + c] -= second[r * a + c] - mean[r] * mean[c];
                    }
                }
            }
        }
        if hessian {
            for r in 0..a {
                for c in 0..r {
                    hess[c * a + r] = hess[r * a + c];
                }
            }
        }
        Evaluation { value, gradient, hessian: hess }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{restrict_halfplane, shape_prior, trapezoid, KernelDensity};
    use proptest::prelude::*;

    fn line(ts: &[f64]) -> PointSet {
        PointSet::new(ts.iter().map(|&t| [t, 0.0]).collect())
    }

    fn small_fixture() -> (PointSet, GridDensity) {
        let ps = PointSet::new(vec![
            [0.20, 0.05],
            [0.25, 0.10],
            [0.10, 0.02],
            [0.30, 0.20],
            [0.22, 0.07],
            [0.15, 0.12],
            [0.35, 0.04],
        ]);
        let gd = shape_prior(&ps, &Bandwidth::Scalar(0.05), 41).unwrap();
        (ps, gd)
    }

    #[test]
    fn collinear_neighborhoods_are_nested() {
        let ps = line(&[0.0, 1.0, 3.0, 7.0]);
        assert_eq!(neighborhoods(&ps, 0, 3).unwrap(), vec![1, 2, 3]);
        assert_eq!(neighborhoods(&ps, 0, 1).unwrap(), vec![1]);
        assert!(neighborhoods(&ps, 0, 4).is_err());
    }

    #[test]
    fn ties_go_to_lower_index() {
        let ps = line(&[0.0, 1.0, -1.0]);
        assert_eq!(neighborhoods(&ps, 0, 1).unwrap(), vec![1]);
        let ps = line(&[0.0, -1.0, 1.0]);
        assert_eq!(neighborhoods(&ps, 0, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn energy_hand_values() {
        assert_eq!(local_energy([0.0, 0.0], &[[3.0, 0.0]], &[2.0], NeighborhoodKind::Nested), 6.0);
        assert_eq!(local_energy([0.0, 0.0], &[[1.0, 0.0], [0.0, 2.0]], &[1.0, 1.0], NeighborhoodKind::Nested), 4.0);
        assert_eq!(local_energy([0.0, 0.0], &[[1.0, 0.0], [0.0, 2.0]], &[1.0, 1.0], NeighborhoodKind::Shell), 3.0);
        assert_eq!(local_energy([5.0, 1.0], &[[1.0, 0.0], [0.0, 2.0]], &[0.0, 0.0], NeighborhoodKind::Nested), 0.0);
    }

    proptest! {
        #[test]
        fn energy_translation_and_scaling(
            y in prop::array::uniform2(-5.0f64..5.0),
            nb in prop::collection::vec(prop::array::uniform2(-5.0f64..5.0), 3),
            theta in prop::collection::vec(-3.0f64..3.0, 3),
            shift in prop::array::uniform2(-5.0f64..5.0),
            c in -4.0f64..4.0,
        ) {
            let e = local_energy(y, &nb, &theta, NeighborhoodKind::Nested);
            let ys = [y[0] + shift[0], y[1] + shift[1]];
            let nbs: Vec<Point> = nb.iter().map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect();
            let es = local_energy(ys, &nbs, &theta, NeighborhoodKind::Nested);
            prop_assert!((e - es).abs() <= 1e-9 * (1.0 + e.abs()));
            let tc: Vec<f64> = theta.iter().map(|t| t * c).collect();
            let ec = local_energy(y, &nb, &tc, NeighborhoodKind::Nested);
            prop_assert!((ec - c * e).abs() <= 1e-9 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn prior_only_conditional_is_the_prior() {
        let (ps, gd) = small_fixture();
        let p = ModelParams::prior_only(2);
        for i in 0..ps.len() {
            let c = conditional_log_density(&ps, i, &p, &gd).unwrap();
            assert!(c.log_normalizer.abs() < 1e-10);
            assert!((c.log_numerator - gd.log_eval(ps.points[i])).abs() < 1e-12);
        }
        let lp = log_pseudolikelihood(&ps, &p, &gd).unwrap();
        let iid: f64 = ps.points.iter().map(|x| gd.log_eval(*x)).sum();
        assert!((lp - iid).abs() < 1e-9);
    }

    #[test]
    fn alpha_zero_theta_zero_is_uniform() {
        let (ps, gd) = small_fixture();
        let p = ModelParams::new(0.0, vec![0.0], vec![true]).unwrap();
        let c = conditional_log_density(&ps, 0, &p, &gd).unwrap();
        assert!((c.log_normalizer - gd.spec().area().ln()).abs() < 1e-12);
    }

    #[test]
    fn conditionals_integrate_to_one() {
        let (ps, gd) = small_fixture();
        for params in [
            ModelParams::full(1.3, vec![-20.0, 5.0, 3.0]).unwrap(),
            ModelParams::new(0.4, vec![0.0, 40.0], vec![false, true]).unwrap(),
        ] {
            for i in [0, 3, 6] {
                let c = conditional_log_density(&ps, i, &params, &gd).unwrap();
                let nb: Vec<Point> = neighborhoods(&ps, i, params.k()).unwrap().iter().map(|&j| ps.points[j]).collect();
                let vals: Vec<f64> = gd
                    .spec()
                    .nodes()
                    .iter()
                    .zip(gd.log_values())
                    .map(|(z, lz)| (-local_energy(*z, &nb, &params.theta, params.neighborhoods) + params.alpha * lz - c.log_normalizer).exp())
                    .collect();
                assert!((trapezoid(gd.spec(), &vals) - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn permutation_invariance() {
        let (ps, gd) = small_fixture();
        let p = ModelParams::full(1.1, vec![-3.0, 2.0]).unwrap();
        let mut shuffled = ps.points.clone();
        shuffled.reverse();
        shuffled.swap(1, 4);
        let a = log_pseudolikelihood(&ps, &p, &gd).unwrap();
        let b = log_pseudolikelihood(&PointSet::new(shuffled), &p, &gd).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn negative_theta_repels_from_neighbor() {
        let ps = PointSet::new(vec![[0.5, 0.5], [0.6, 0.5]]);
        let spec = GridSpec { x1: [0.0, 1.0], x2: [0.0, 1.0], n1: 51, n2: 51 };
        let gd = restrict_halfplane(&KernelDensity::from_points(&ps, Bandwidth::Scalar(0.3)).unwrap(), &spec).unwrap();
        let neutral = ModelParams::full(1.0, vec![0.0]).unwrap();
        let repel = ModelParams::full(1.0, vec![-5.0]).unwrap();
        let cn = conditional_log_density(&ps, 0, &neutral, &gd).unwrap();
        let cr = conditional_log_density(&ps, 0, &repel, &gd).unwrap();
        let near = [0.62, 0.5];
        let log_at = |c: &ConditionalEvaluation, p: &ModelParams| {
            -local_energy(near, &[ps.points[1]], &p.theta, p.neighborhoods) + p.alpha * gd.log_eval(near) - c.log_normalizer
        };
        assert!(log_at(&cr, &repel) < log_at(&cn, &neutral));
    }

    #[test]
    fn zero_prior_is_rejected() {
        let ps = PointSet::new(vec![[0.5, 0.5], [0.6, -0.1], [0.4, 0.3]]);
        let spec = GridSpec { x1: [0.0, 1.0], x2: [0.0, 1.0], n1: 11, n2: 11 };
        let gd = restrict_halfplane(&KernelDensity::from_points(&ps, Bandwidth::Scalar(0.3)).unwrap(), &spec).unwrap();
        let err = conditional_log_density(&ps, 1, &ModelParams::prior_only(1), &gd).unwrap_err();
        assert!(matches!(err, Error::ZeroPrior { index: 1, .. }));
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::full(3.5, vec![0.0]).is_err());
        assert!(ModelParams::full(1.0, vec![0.0; 4]).is_err());
        assert!(ModelParams::new(1.0, vec![1.0, 0.0], vec![false, true]).is_err());
        assert!(ModelParams::new(1.0, vec![0.0, 2.0], vec![false, true]).is_ok());
    }

    #[test]
    fn legacy_identical_points() {
        let ps = PointSet::new(vec![[1.0, 2.0]; 4]);
        let lp = LegacyParams { theta_h: 3.0, theta_v: 0.5, theta: vec![7.0], delta: 1.0 };
        assert_eq!(legacy_hamiltonian(&ps, &lp).unwrap(), 0.5 * 4.0 * 4.0);
    }

    #[test]
    fn legacy_small_delta_kills_interaction() {
        let ps = PointSet::new(vec![[0.0, 1.0], [1.0, 1.0], [3.0, 2.0]]);
        let with = LegacyParams { theta_h: 1.0, theta_v: 1.0, theta: vec![5.0, 5.0], delta: 0.5 };
        let without = LegacyParams { theta: vec![0.0, 0.0], ..with.clone() };
        assert_eq!(legacy_hamiltonian(&ps, &with).unwrap(), legacy_hamiltonian(&ps, &without).unwrap());
    }

    #[test]
    fn legacy_three_point_hand_value() {
        // Points (0,1), (1,1), (3,2); delta = 2.5, theta = (2, 1).
        // Horizontal: mean 4/3, squares 16/9 + 1/9 + 25/9 = 42/9.
        // Vertical: 1 + 1 + 4 = 6.
        // Neighbours: 0 -> [1 (d=1), 2 (d=sqrt10)], 1 -> [0 (1), 2 (sqrt5)], 2 -> [1 (sqrt5), 0 (sqrt10)].
        // Within delta: 1, 1, sqrt5, sqrt5; sqrt10 > 2.5 is cut.
        // Point 0: 2*1 + 1*(1) = 3. Point 1: 2*1 + 1*(1 + sqrt5). Point 2: 2*sqrt5 + 1*sqrt5.
        let ps = PointSet::new(vec![[0.0, 1.0], [1.0, 1.0], [3.0, 2.0]]);
        let lp = LegacyParams { theta_h: 0.5, theta_v: 2.0, theta: vec![2.0, 1.0], delta: 2.5 };
        let s5 = 5.0f64.sqrt();
        let inter = (3.0 + (3.0 + s5) + 3.0 * s5) / 6.25;
        let expect = 0.5 * 42.0 / 9.0 + 2.0 * 6.0 + inter;
        assert!((legacy_hamiltonian(&ps, &lp).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn legacy_conditional_energy_tracks_full_hamiltonian() {
        // Moving one point changes H by the change in its conditional energy,
        // when no other neighbourhood involves it (theta_k = 0 here).
        let ps = PointSet::new(vec![[0.0, 1.0], [1.0, 1.5], [3.0, 2.0], [2.0, 0.5]]);
        let lp = LegacyParams { theta_h: 0.7, theta_v: 1.3, theta: vec![0.0], delta: 1.0 };
        let h0 = legacy_hamiltonian(&ps, &lp).unwrap();
        let mut moved = ps.clone();
        let z = [1.7, 0.2];
        moved.points[1] = z;
        let h1 = legacy_hamiltonian(&moved, &lp).unwrap();
        let s = 0.0 + 3.0 + 2.0;
        let e0 = legacy_conditional_energy(ps.points[1], &[ps.points[0]], s, 4, &lp);
        let e1 = legacy_conditional_energy(z, &[ps.points[0]], s, 4, &lp);
        assert!(((h1 - h0) - (e1 - e0)).abs() < 1e-12);
    }

    #[test]
    fn feature_table_matches_direct_evaluation() {
        let (ps, gd) = small_fixture();
        for kind in [NeighborhoodKind::Nested, NeighborhoodKind::Shell] {
            let t = FeatureTable::local_model(&ps, &gd, 3, kind).unwrap();
            let mut p = ModelParams::full(1.4, vec![-12.0, 4.0, 1.5]).unwrap();
            p.neighborhoods = kind;
            let beta = [p.alpha, p.theta[0], p.theta[1], p.theta[2]];
            let direct = log_pseudolikelihood(&ps, &p, &gd).unwrap();
            assert!((t.value(&beta) - direct).abs() < 1e-9 * direct.abs().max(1.0));
        }
        let lp = LegacyParams { theta_h: 2.0, theta_v: 5.0, theta: vec![3.0, -1.0], delta: 0.15 };
        let t = FeatureTable::legacy_model(&ps, gd.spec(), 2, lp.delta).unwrap();
        let direct = legacy_log_pseudolikelihood(&ps, &lp, gd.spec()).unwrap();
        let v = t.value(&[2.0, 5.0, 3.0, -1.0]);
        assert!((v - direct).abs() < 1e-9 * direct.abs().max(1.0), "{v} vs {direct}");
    }

    #[test]
    fn feature_table_derivatives_match_finite_differences() {
        let (ps, gd) = small_fixture();
        let t = FeatureTable::local_model(&ps, &gd, 2, NeighborhoodKind::Nested).unwrap();
        let beta = [0.8, -6.0, 2.0];
        let active = [0, 1, 2];
        let e = t.evaluate(&beta, &active, true);
        let h = 1e-5;
        for r in 0..3 {
            let mut bp = beta;
            let mut bm = beta;
            bp[r] += h;
            bm[r] -= h;
            let fd = (t.value(&bp) - t.value(&bm)) / (2.0 * h);
            assert!((fd - e.gradient[r]).abs() < 1e-5 * (1.0 + fd.abs()), "grad {r}: {fd} vs {}", e.gradient[r]);
            let ep = t.evaluate(&bp, &active, false);
            let em = t.evaluate(&bm, &active, false);
            for c in 0..3 {
                let fd2 = (ep.gradient[c] - em.gradient[c]) / (2.0 * h);
                assert!((fd2 - e.hessian[r * 3 + c]).abs() < 1e-4 * (1.0 + fd2.abs()));
            }
        }
        for r in 0..3 {
            assert!(e.hessian[r * 3 + r] <= 0.0);
        }
    }

    #[test]
    fn fitted_model_json_round_trip() {
        let m = FittedModel {
            params: ModelParams::full(1.5, vec![-2.0]).unwrap(),
            bandwidth: Bandwidth::Scalar(0.1),
            grid: GridSpec { x1: [0.0, 1.0], x2: [0.0, 2.0], n1: 101, n2: 101 },
            log_pl: Some(-3.5),
            n: Some(12),
        };
        assert_eq!(FittedModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
