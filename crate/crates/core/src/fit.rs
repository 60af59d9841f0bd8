//! Maximum pseudo-likelihood estimation and information-criterion model selection.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{rule_of_thumb_bandwidth, shape_prior, Bandwidth, GridDensity};
use crate::diagram::{to_ppd, PersistenceDiagram, PointSet};
use crate::error::{Error, Result};
use crate::model::{FeatureTable, FittedModel, LegacyParams, ModelParams, NeighborhoodKind, ALPHA_MAX, MAX_K};
use crate::stats;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Damped Newton on the exact gradient and Hessian (the objective is concave).
    #[default]
    Newton,
    NelderMead,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Aic,
    Bic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub optimizer: Optimizer,
    pub simplex_tol: f64,
    pub max_iter: usize,
    pub alpha_tol: f64,
    pub neighborhoods: NeighborhoodKind,
    /// Seeds the simplex restarts.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Newton,
            simplex_tol: 1e-6,
            max_iter: 500,
            alpha_tol: 1e-3,
            neighborhoods: NeighborhoodKind::Nested,
            seed: 0,
        }
    }
}

/// The seven non-empty subsets of `{theta_1, theta_2, theta_3}`, singletons first.
pub fn all_masks() -> Vec<Vec<bool>> {
    vec![
        vec![true, false, false],
        vec![false, true, false],
        vec![false, false, true],
        vec![true, true, false],
        vec![true, false, true],
        vec![false, true, true],
        vec![true, true, true],
    ]
}

pub fn mask_label(mask: &[bool]) -> String {
    let names: Vec<String> = mask.iter().enumerate().filter(|(_, a)| **a).map(|(k, _)| format!("theta{}", k + 1)).collect();
    names.join("+")
}

/// `(AIC, BIC)` with the pseudo-likelihood in place of the likelihood.
pub fn information_criteria(log_pl: f64, p: usize, n: usize) -> (f64, f64) {
    let p = p as f64;
    (2.0 * p - 2.0 * log_pl, p * (n as f64).ln() - 2.0 * log_pl)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskScore {
    pub mask: Vec<bool>,
    pub params: ModelParams,
    pub log_pl: f64,
    pub aic: f64,
    pub bic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub log_pl: f64,
    pub n: usize,
    /// `theta / n`.
    pub theta_per_n: Vec<f64>,
    pub criterion: Criterion,
    pub candidates: Vec<MaskScore>,
    pub selected_mask: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaFit {
    pub theta: Vec<f64>,
    pub log_pl: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with an axis-aligned initial simplex of edge `step`.
/// Stops when every vertex lies within `tol` of the best one, or after `max_iter`
/// iterations.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], step: &[f64], tol: f64, max_iter: usize) -> NelderMeadResult {
    let d = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for k in 0..d {
        let mut v = x0.to_vec();
        v[k] += step[k];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let (ra, ga, ca, sa) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if diameter < tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..d).map(|k| simplex[..d].iter().map(|v| v[k]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..d).map(|k| centroid[k] + t * (simplex[d][k] - centroid[k])).collect() };
        let xr = along(-ra);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-ra * ga);
            let fe = f(&xe);
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
            continue;
        }
        let xc = if fr < values[d] { along(-ra * ca) } else { along(ca) };
        let fc = f(&xc);
        if fc < values[d].min(fr) {
            simplex[d] = xc;
            values[d] = fc;
            continue;
        }
        let (best, rest) = simplex.split_at_mut(1);
        for (vertex, value) in rest.iter_mut().zip(values.iter_mut().skip(1)) {
            for (v, b) in vertex.iter_mut().zip(&best[0]) {
                *v = b + sa * (*v - b);
            }
            *value = f(vertex);
        }
    }
    NelderMeadResult { x: simplex[0].clone(), value: values[0], iterations, converged }
}

/// Maximizes the concave `table.value` over the coordinates in `active`,
/// starting from `beta`. Returns `(beta, value, iterations, converged)`.
fn newton(table: &FeatureTable, mut beta: Vec<f64>, active: &[usize], max_iter: usize) -> Result<(Vec<f64>, f64, usize, bool)> {
    let a = active.len();
    let mut e = table.evaluate(&beta, active, true);
    if !e.value.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    for it in 0..max_iter {
        let g = DVector::from_column_slice(&e.gradient);
        let neg_h = -DMatrix::from_row_slice(a, a, &e.hessian);
        let scale = (0..a).map(|i| neg_h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut shift = 0.0;
        let step = loop {
            let m = &neg_h + DMatrix::identity(a, a) * shift;
            if let Some(ch) = m.cholesky() {
                break ch.solve(&g);
            }
            shift = if shift == 0.0 { 1e-12 * scale } else { shift * 10.0 };
            if shift > 1e12 * scale {
                return Ok((beta, e.value, it, false));
            }
        };
        let decrement = g.dot(&step);
        if !(decrement > 1e-12 * (1.0 + e.value.abs())) {
            return Ok((beta, e.value, it, true));
        }
        let mut t = 1.0;
        let next = loop {
            let mut trial = beta.clone();
            for (r, &c) in active.iter().enumerate() {
                trial[c] += t * step[r];
            }
            let v = table.value(&trial);
            if v.is_finite() && v >= e.value + 1e-4 * t * decrement {
                break Some(trial);
            }
            t *= 0.5;
            if t < 1e-12 {
                break None;
            }
        };
        match next {
            Some(b) => beta = b,
            None => return Ok((beta, e.value, it + 1, decrement < 1e-6 * (1.0 + e.value.abs()))),
        }
        if beta.iter().any(|b| b.abs() > 1e9) {
            let v = table.value(&beta);
            return Ok((beta, v, it + 1, false));
        }
        e = table.evaluate(&beta, active, true);
    }
    Ok((beta, e.value, max_iter, false))
}

fn maximize(table: &FeatureTable, beta0: Vec<f64>, active: &[usize], opts: &FitOptions) -> Result<(Vec<f64>, f64, usize, bool)> {
    let start = table.value(&beta0);
    if !start.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    match opts.optimizer {
        Optimizer::Newton => newton(table, beta0, active, 100),
        Optimizer::NelderMead => {
            let objective = |x: &[f64]| {
                let mut b = beta0.clone();
                for (r, &c) in active.iter().enumerate() {
                    b[c] = x[r];
                }
                let v = table.value(&b);
                if v.is_finite() {
                    -v
                } else {
                    f64::INFINITY
                }
            };
            let x0: Vec<f64> = active.iter().map(|&c| beta0[c]).collect();
            let mut res = nelder_mead(objective, &x0, &vec![1.0; active.len()], opts.simplex_tol, opts.max_iter);
            let mut iterations = res.iterations;
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            // Restart from the best vertex with a fresh, randomly oriented simplex.
            for _ in 0..3 {
                let step: Vec<f64> = (0..active.len())
                    .map(|_| {
                        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        s * (0.5 + rng.random::<f64>()) * (1.0 + res.x.iter().map(|v| v.abs()).fold(0.0, f64::max)) * 1e-2
                    })
                    .collect();
                let again = nelder_mead(objective, &res.x, &step, opts.simplex_tol, opts.max_iter);
                iterations += again.iterations;
                let improved = again.value < res.value - 1e-9 * (1.0 + res.value.abs());
                if again.value <= res.value {
                    res = again;
                }
                if !improved {
                    break;
                }
            }
            let mut beta = beta0;
            for (r, &c) in active.iter().enumerate() {
                beta[c] = res.x[r];
            }
            Ok((beta, -res.value, iterations, res.converged))
        }
    }
}

fn active_theta(mask: &[bool]) -> Result<Vec<usize>> {
    if mask.is_empty() || mask.len() > MAX_K {
        return Err(Error::InvalidParameter(format!("mask length must be in 1..={MAX_K}")));
    }
    let act: Vec<usize> = mask.iter().enumerate().filter(|(_, a)| **a).map(|(k, _)| k + 1).collect();
    if act.is_empty() {
        return Err(Error::InvalidParameter("mask has no active theta".into()));
    }
    Ok(act)
}

/// Builds the tabulated objective for the local model with `K = mask.len()`.
pub fn feature_table(ps: &PointSet, gd: &GridDensity, k: usize, opts: &FitOptions) -> Result<FeatureTable> {
    FeatureTable::local_model(ps, gd, k, opts.neighborhoods)
}

/// Maximizes over the active `theta` with `alpha` held fixed, starting at 0
/// unless `start` is given.
pub fn fit_theta_table(table: &FeatureTable, alpha: f64, mask: &[bool], start: Option<&[f64]>, opts: &FitOptions) -> Result<ThetaFit> {
    if mask.len() + 1 != table.dim() {
        return Err(Error::DimensionMismatch { expected: table.dim() - 1, got: mask.len() });
    }
    let act = active_theta(mask)?;
    let mut beta = vec![0.0; table.dim()];
    beta[0] = alpha;
    if let Some(s) = start {
        for &c in &act {
            beta[c] = s[c - 1];
        }
    }
    let (beta, log_pl, iterations, converged) = maximize(table, beta, &act, opts)?;
    Ok(ThetaFit { theta: beta[1..].to_vec(), log_pl, iterations, converged })
}

pub fn fit_theta(ps: &PointSet, gd: &GridDensity, alpha: f64, mask: &[bool], opts: &FitOptions) -> Result<ThetaFit> {
    let table = feature_table(ps, gd, mask.len(), opts)?;
    fit_theta_table(&table, alpha, mask, None, opts)
}

fn build_result(n: usize, params: ModelParams, log_pl: f64, criterion: Criterion, candidates: Vec<MaskScore>, iterations: usize, converged: bool) -> FitResult {
    let theta_per_n = params.theta.iter().map(|t| t / n as f64).collect();
    let selected_mask = params.active.clone();
    FitResult { params, log_pl, n, theta_per_n, criterion, candidates, selected_mask, iterations, converged }
}

/// Joint Newton ascent over `(alpha, theta)`; when the unconstrained optimum
/// has `alpha` outside `[0, ALPHA_MAX]`, `alpha` is fixed at the nearer bound
/// and `theta` refitted. The objective is jointly concave, so this is the
/// profile maximum.
fn joint_alpha_theta(table: &FeatureTable, mask: &[bool], opts: &FitOptions) -> Result<Option<(ModelParams, f64, usize, bool)>> {
    let act = active_theta(mask)?;
    let mut joint = vec![0];
    joint.extend(&act);
    let (beta, log_pl, mut iterations, converged) = newton(table, vec![0.0; table.dim()], &joint, 100)?;
    if !converged || beta.iter().any(|b| !b.is_finite()) {
        return Ok(None);
    }
    let (beta, log_pl, converged) = if (0.0..=ALPHA_MAX).contains(&beta[0]) {
        (beta, log_pl, converged)
    } else {
        let mut start = beta.clone();
        start[0] = beta[0].clamp(0.0, ALPHA_MAX);
        let (b, v, it, conv) = newton(table, start, &act, 100)?;
        iterations += it;
        (b, v, conv)
    };
    if !converged {
        return Ok(None);
    }
    let theta: Vec<f64> = beta[1..].iter().zip(mask).map(|(t, a)| if *a { *t } else { 0.0 }).collect();
    let params = ModelParams { alpha: beta[0], theta, active: mask.to_vec(), neighborhoods: opts.neighborhoods };
    Ok(Some((params, log_pl, iterations, true)))
}

/// Maximizes over `alpha` in `[0, ALPHA_MAX]` and the active `theta`. Newton
/// works on all coordinates jointly; otherwise (or if that fails to converge)
/// the profile in `alpha` is scanned over `{0, 0.5, ..., 3}` and refined by
/// golden section inside the bracket around the best scan point.
pub fn fit_alpha_theta_table(table: &FeatureTable, mask: &[bool], opts: &FitOptions) -> Result<(ModelParams, f64, usize, bool)> {
    if mask.len() + 1 != table.dim() {
        return Err(Error::DimensionMismatch { expected: table.dim() - 1, got: mask.len() });
    }
    if opts.optimizer == Optimizer::Newton {
        if let Some(found) = joint_alpha_theta(table, mask, opts)? {
            return Ok(found);
        }
        log::debug!("joint Newton did not converge for mask {}; using the profile search", mask_label(mask));
    }
    profile_alpha_theta(table, mask, opts)
}

fn profile_alpha_theta(table: &FeatureTable, mask: &[bool], opts: &FitOptions) -> Result<(ModelParams, f64, usize, bool)> {
    let mut best: Option<(f64, ThetaFit)> = None;
    let mut iterations = 0;
    let mut all_converged = true;
    let mut memo: Vec<(f64, f64, Vec<f64>)> = Vec::new();
    let mut profile = |alpha: f64, best: &mut Option<(f64, ThetaFit)>| -> Result<f64> {
        let start = memo.iter().min_by(|a, b| (a.0 - alpha).abs().total_cmp(&(b.0 - alpha).abs())).map(|m| m.2.clone());
        let fit = match (opts.optimizer, start) {
            (Optimizer::Newton, Some(s)) => fit_theta_table(table, alpha, mask, Some(&s), opts)?,
            _ => fit_theta_table(table, alpha, mask, None, opts)?,
        };
        iterations += fit.iterations;
        all_converged &= fit.converged;
        let v = fit.log_pl;
        memo.push((alpha, v, fit.theta.clone()));
        if best.as_ref().is_none_or(|(_, b)| v > b.log_pl) {
            *best = Some((alpha, fit));
        }
        Ok(v)
    };
    let coarse: Vec<f64> = (0..7).map(|k| k as f64 * 0.5).collect();
    let mut scan = Vec::with_capacity(coarse.len());
    for &a in &coarse {
        scan.push(profile(a, &mut best)?);
    }
    let b = (0..scan.len()).max_by(|&i, &j| scan[i].total_cmp(&scan[j]).then(j.cmp(&i))).unwrap();
    let (mut lo, mut hi) = (coarse[b.saturating_sub(1)], coarse[(b + 1).min(coarse.len() - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = profile(c, &mut best)?;
    let mut fd = profile(d, &mut best)?;
    while hi - lo > opts.alpha_tol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = profile(c, &mut best)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = profile(d, &mut best)?;
        }
    }
    let (alpha, fit) = best.unwrap();
    let alpha = alpha.clamp(0.0, ALPHA_MAX);
    let theta: Vec<f64> = fit.theta.iter().zip(mask).map(|(t, a)| if *a { *t } else { 0.0 }).collect();
    let params = ModelParams { alpha, theta, active: mask.to_vec(), neighborhoods: opts.neighborhoods };
    Ok((params, fit.log_pl, iterations, all_converged))
}

pub fn fit_alpha_theta(ps: &PointSet, gd: &GridDensity, mask: &[bool], opts: &FitOptions) -> Result<FitResult> {
    let table = feature_table(ps, gd, mask.len(), opts)?;
    let (params, log_pl, iterations, converged) = fit_alpha_theta_table(&table, mask, opts)?;
    let p = params.active.iter().filter(|a| **a).count() + 1;
    let (aic, bic) = information_criteria(log_pl, p, ps.len());
    let score = MaskScore { mask: mask.to_vec(), params: params.clone(), log_pl, aic, bic };
    Ok(build_result(ps.len(), params, log_pl, Criterion::Aic, vec![score], iterations, converged))
}

/// Fits all seven masks over `K = 3` and keeps the one minimizing `criterion`.
pub fn select_model(ps: &PointSet, gd: &GridDensity, criterion: Criterion, opts: &FitOptions) -> Result<FitResult> {
    if ps.len() <= MAX_K {
        return Err(Error::TooFewPoints { needed: MAX_K + 1, got: ps.len() });
    }
    let table = feature_table(ps, gd, MAX_K, opts)?;
    let mut candidates = Vec::new();
    let mut iterations = 0;
    let mut converged = true;
    for mask in all_masks() {
        let (params, log_pl, it, conv) = fit_alpha_theta_table(&table, &mask, opts)?;
        iterations += it;
        converged &= conv;
        let p = mask.iter().filter(|a| **a).count() + 1;
        let (aic, bic) = information_criteria(log_pl, p, ps.len());
        candidates.push(MaskScore { mask, params, log_pl, aic, bic });
    }
    let key = |s: &MaskScore| match criterion {
        Criterion::Aic => s.aic,
        Criterion::Bic => s.bic,
    };
    let best = candidates.iter().min_by(|a, b| key(a).total_cmp(&key(b))).unwrap().clone();
    Ok(build_result(ps.len(), best.params, best.log_pl, criterion, candidates, iterations, converged))
}

/// Correlation matrix of `(alpha, theta_1, ..., theta_K)` across repeated fits.
///
/// A parameter that is identical in every fit (for example alpha held at a bound) has NaN correlations.
pub fn estimate_correlations(fits: &[FitResult]) -> Result<Vec<Vec<f64>>> {
    if fits.len() < 3 {
        return Err(Error::NotEnoughReplicates { needed: 3, available: fits.len() });
    }
    let rows: Vec<Vec<f64>> = fits.iter().map(|f| std::iter::once(f.params.alpha).chain(f.params.theta.iter().copied()).collect()).collect();
    Ok(stats::correlation_matrix(&rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegacyFit {
    pub params: LegacyParams,
    pub log_pl: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximum pseudo-likelihood for the legacy model with `delta` fixed.
pub fn fit_legacy(ps: &PointSet, spec: &crate::density::GridSpec, k: usize, delta: f64, opts: &FitOptions) -> Result<LegacyFit> {
    let table = FeatureTable::legacy_model(ps, spec, k, delta)?;
    let active: Vec<usize> = (0..table.dim()).collect();
    let (beta, log_pl, iterations, converged) = maximize(&table, vec![0.0; table.dim()], &active, opts)?;
    let params = LegacyParams { theta_h: beta[0], theta_v: beta[1], theta: beta[2..].to_vec(), delta };
    Ok(LegacyFit { params, log_pl, iterations, converged })
}

/// Which masks to fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Mask(Vec<bool>),
    Criterion(Criterion),
}

/// Builds the shape prior of a finite diagram (rule-of-thumb bandwidth unless
/// given) and fits it, returning the fit and the model used for replication.
pub fn fit_diagram(
    diagram: &PersistenceDiagram,
    bandwidth: Option<Bandwidth>,
    resolution: usize,
    selection: &Selection,
    opts: &FitOptions,
) -> Result<(FitResult, FittedModel)> {
    let ps = to_ppd(diagram)?;
    let bw = match bandwidth {
        Some(b) => b,
        None => Bandwidth::Scalar(rule_of_thumb_bandwidth(&ps)?),
    };
    let gd = shape_prior(&ps, &bw, resolution)?;
    let fit = match selection {
        Selection::Mask(mask) => fit_alpha_theta(&ps, &gd, mask, opts)?,
        Selection::Criterion(c) => select_model(&ps, &gd, *c, opts)?,
    };
    let model = FittedModel { params: fit.params.clone(), bandwidth: bw, grid: gd.spec().clone(), log_pl: Some(fit.log_pl), n: Some(ps.len()) };
    Ok((fit, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{shape_prior, Bandwidth};
    use crate::model::log_pseudolikelihood;

    fn fixture() -> (PointSet, GridDensity) {
        let ps = PointSet::new(vec![
            [0.20, 0.05],
            [0.25, 0.10],
            [0.10, 0.02],
            [0.30, 0.20],
            [0.22, 0.07],
            [0.15, 0.12],
            [0.35, 0.04],
            [0.28, 0.03],
            [0.18, 0.09],
        ]);
        let gd = shape_prior(&ps, &Bandwidth::Scalar(0.05), 41).unwrap();
        (ps, gd)
    }

    #[test]
    fn criteria_algebra() {
        let (aic, bic) = information_criteria(0.0, 2, 7);
        assert_eq!(aic, 4.0);
        assert!((bic - 2.0 * 7f64.ln()).abs() < 1e-12);
        let (a2, b2) = information_criteria(-3.0, 3, 100);
        assert_eq!(a2, 12.0);
        assert!((b2 - (3.0 * 100f64.ln() + 6.0)).abs() < 1e-12);
        let (small, _) = information_criteria(-10.0, 2, 10);
        let (big, _) = information_criteria(-9.5, 3, 10);
        assert!(big > small);
    }

    #[test]
    fn bic_harder_than_aic_iff_log_n_above_two() {
        for n in [5usize, 7, 8, 100] {
            let (a1, b1) = information_criteria(-4.0, 2, n);
            let (a2, b2) = information_criteria(-4.0, 3, n);
            assert_eq!(b2 - b1 > a2 - a1, (n as f64).ln() > 2.0);
        }
    }

    #[test]
    fn masks_cover_every_nonempty_subset() {
        let m = all_masks();
        assert_eq!(m.len(), 7);
        let mut codes: Vec<u8> = m.iter().map(|v| v.iter().enumerate().map(|(k, a)| (*a as u8) << k).sum()).collect();
        codes.sort();
        assert_eq!(codes, (1..8).collect::<Vec<u8>>());
        assert_eq!(mask_label(&m[4]), "theta1+theta3");
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(f, &[-1.2, 1.0], &[0.5, 0.5], 1e-10, 5000);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn nelder_mead_respects_iteration_cap() {
        let r = nelder_mead(|x: &[f64]| x[0] * x[0], &[100.0], &[1e-3], 1e-12, 3);
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn empty_mask_rejected() {
        let (ps, gd) = fixture();
        assert!(fit_theta(&ps, &gd, 1.0, &[false, false], &FitOptions::default()).is_err());
    }

    #[test]
    fn newton_and_simplex_agree() {
        let (ps, gd) = fixture();
        let newton = fit_theta(&ps, &gd, 1.2, &[true, false, true], &FitOptions::default()).unwrap();
        let nm_opts = FitOptions { optimizer: Optimizer::NelderMead, ..FitOptions::default() };
        let nm = fit_theta(&ps, &gd, 1.2, &[true, false, true], &nm_opts).unwrap();
        assert!(newton.converged);
        assert!((newton.log_pl - nm.log_pl).abs() < 1e-6, "{} vs {}", newton.log_pl, nm.log_pl);
        for (a, b) in newton.theta.iter().zip(&nm.theta) {
            assert!((a - b).abs() < 1e-2 * (1.0 + a.abs()), "{:?} vs {:?}", newton.theta, nm.theta);
        }
        assert_eq!(newton.theta[1], 0.0);
    }

    #[test]
    fn fit_never_worse_than_start_and_is_a_maximum() {
        let (ps, gd) = fixture();
        let opts = FitOptions::default();
        let fit = fit_theta(&ps, &gd, 1.0, &[true], &opts).unwrap();
        let at = |t: f64| log_pseudolikelihood(&ps, &ModelParams::full(1.0, vec![t]).unwrap(), &gd).unwrap();
        assert!(fit.log_pl >= at(0.0));
        assert!((fit.log_pl - at(fit.theta[0])).abs() < 1e-9 * fit.log_pl.abs().max(1.0));
        let h = 0.05 * (1.0 + fit.theta[0].abs());
        assert!(at(fit.theta[0] + h) < fit.log_pl);
        assert!(at(fit.theta[0] - h) < fit.log_pl);
    }

    #[test]
    fn profile_beats_random_alpha_probes() {
        let (ps, gd) = fixture();
        let opts = FitOptions::default();
        let res = fit_alpha_theta(&ps, &gd, &[true, true], &opts).unwrap();
        assert!((0.0..=3.0).contains(&res.params.alpha));
        let table = feature_table(&ps, &gd, 2, &opts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a: f64 = rng.random::<f64>() * 3.0;
            let g = fit_theta_table(&table, a, &[true, true], None, &opts).unwrap().log_pl;
            assert!(res.log_pl >= g - 1e-2, "alpha {a}: {g} > {}", res.log_pl);
        }
        let direct = log_pseudolikelihood(&ps, &res.params, &gd).unwrap();
        assert!((direct - res.log_pl).abs() < 1e-9 * direct.abs().max(1.0));
        assert_eq!(res.theta_per_n[0], res.params.theta[0] / ps.len() as f64);
    }

    #[test]
    fn selection_is_deterministic_and_minimizes() {
        let (ps, gd) = fixture();
        let opts = FitOptions::default();
        let a = select_model(&ps, &gd, Criterion::Aic, &opts).unwrap();
        let b = select_model(&ps, &gd, Criterion::Aic, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.candidates.len(), 7);
        assert!(a.candidates.iter().all(|c| c.aic.is_finite() && c.bic.is_finite()));
        let min = a.candidates.iter().map(|c| c.aic).fold(f64::INFINITY, f64::min);
        let chosen = a.candidates.iter().find(|c| c.mask == a.selected_mask).unwrap();
        assert_eq!(chosen.aic, min);
        let bic = select_model(&ps, &gd, Criterion::Bic, &opts).unwrap();
        let min_b = bic.candidates.iter().map(|c| c.bic).fold(f64::INFINITY, f64::min);
        assert_eq!(bic.candidates.iter().find(|c| c.mask == bic.selected_mask).unwrap().bic, min_b);
    }

    #[test]
    fn legacy_fit_improves_on_zero() {
        let (ps, gd) = fixture();
        let fit = fit_legacy(&ps, gd.spec(), 1, 0.1, &FitOptions::default()).unwrap();
        let zero = crate::model::legacy_log_pseudolikelihood(
            &ps,
            &LegacyParams { theta_h: 0.0, theta_v: 0.0, theta: vec![0.0], delta: 0.1 },
            gd.spec(),
        )
        .unwrap();
        assert!(fit.log_pl > zero);
        let again = crate::model::legacy_log_pseudolikelihood(&ps, &fit.params, gd.spec()).unwrap();
        assert!((again - fit.log_pl).abs() < 1e-8 * again.abs().max(1.0));
    }

    #[test]
    fn correlations_need_three_fits() {
        let (ps, gd) = fixture();
        let f = fit_alpha_theta(&ps, &gd, &[true, true, true], &FitOptions::default()).unwrap();
        assert!(estimate_correlations(&[f.clone(), f]).is_err());
    }

    #[test]
    fn joint_newton_matches_golden_section_profile() {
        let (ps, gd) = fixture();
        let table = feature_table(&ps, &gd, 2, &FitOptions::default()).unwrap();
        for mask in [vec![true, false], vec![false, true], vec![true, true]] {
            let (joint, v_joint, _, conv) = fit_alpha_theta_table(&table, &mask, &FitOptions::default()).unwrap();
            let (prof, v_prof, _, _) = profile_alpha_theta(&table, &mask, &FitOptions::default()).unwrap();
            assert!(conv);
            assert!(v_joint >= v_prof - 1e-6, "{v_joint} vs {v_prof}");
            assert!((v_joint - v_prof).abs() < 1e-4 * (1.0 + v_prof.abs()));
            assert!((joint.alpha - prof.alpha).abs() < 5e-3, "{} vs {}", joint.alpha, prof.alpha);
            assert!((0.0..=ALPHA_MAX).contains(&joint.alpha));
        }
    }
}
