//! Metropolis-within-Gibbs replication of a persistence diagram.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{build_sampler, restrict_halfplane, GridDensity, KernelDensity, RectangleSampler};
use crate::diagram::{from_ppd, to_ppd, PersistenceDiagram, Point, PointSet};
use crate::error::{Error, Result};
use crate::model::{legacy_conditional_energy, local_energy, nearest_indices, FittedModel, LegacyParams, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicationSchedule {
    pub burn_in: usize,
    pub n_b: usize,
    pub n_r: usize,
    #[serde(rename = "n_R")]
    pub n_runs: usize,
}

impl Default for ReplicationSchedule {
    fn default() -> Self {
        Self { burn_in: 100, n_b: 100, n_r: 1, n_runs: 1 }
    }
}

impl ReplicationSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.n_b == 0 || self.n_r == 0 || self.n_runs == 0 {
            return Err(Error::InvalidParameter(format!("n_b, n_r and n_R must be at least 1, got {:?}", self)));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_r * self.n_runs
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    #[default]
    Fixed,
    RandomScan,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct McmcOptions {
    pub order: UpdateOrder,
    /// Rebuild the prior and proposal from the current configuration after every block.
    pub refresh_every_block: bool,
    /// Worker threads for independent runs; 0 or 1 runs them in sequence.
    #[serde(default)]
    pub jobs: usize,
}

/// Stationary distribution of the chain.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Local(ModelParams),
    Legacy(LegacyParams),
}

impl Target {
    fn k(&self) -> usize {
        match self {
            Target::Local(p) => p.k(),
            Target::Legacy(p) => p.theta.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Target::Local(p) => p.validate(),
            Target::Legacy(p) => p.validate(),
        }
    }
}

/// Unclamped log of the Metropolis-Hastings ratio for moving a point from `x`
/// to `x_star`, with the neighbourhood `neighbors` of `x` held fixed.
/// `lf_x`, `lf_star` are `ln fbar` at the two points; `sum_others` and `n`
/// are only used by the legacy target. Returns `-inf` if `fbar(x_star) = 0`.
#[allow(clippy::too_many_arguments)]
pub fn log_acceptance_ratio(
    x: Point,
    x_star: Point,
    neighbors: &[Point],
    lf_x: f64,
    lf_star: f64,
    target: &Target,
    sum_others: f64,
    n: usize,
) -> f64 {
    if !lf_star.is_finite() || !lf_x.is_finite() {
        return f64::NEG_INFINITY;
    }
    match target {
        Target::Local(p) => {
            let de = local_energy(x, neighbors, &p.theta, p.neighborhoods) - local_energy(x_star, neighbors, &p.theta, p.neighborhoods);
            de + (1.0 - p.alpha) * (lf_x - lf_star)
        }
        Target::Legacy(lp) => {
            legacy_conditional_energy(x, neighbors, sum_others, n, lp) - legacy_conditional_energy(x_star, neighbors, sum_others, n, lp) + lf_x - lf_star
        }
    }
}

/// `min(1, r)` for replacing point `i` of `config` by `x_star`.
pub fn acceptance_probability(config: &PointSet, i: usize, x_star: Point, target: &Target, gd: &GridDensity) -> Result<f64> {
    target.validate()?;
    let k = target.k();
    if config.len() <= k {
        return Err(Error::TooFewPoints { needed: k + 1, got: config.len() });
    }
    let x = config.points[i];
    let nb: Vec<Point> = nearest_indices(&config.points, x, Some(i), k).iter().map(|&j| config.points[j]).collect();
    let s: f64 = config.points.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p[0]).sum();
    let r = log_acceptance_ratio(x, x_star, &nb, gd.log_eval(x), gd.log_eval(x_star), target, s, config.len());
    Ok(r.exp().min(1.0))
}

/// A single Markov chain over configurations of fixed size.
#[derive(Clone, Debug)]
pub struct Chain {
    pub config: Vec<Point>,
    log_prior: Vec<f64>,
    pub sweeps: usize,
    pub accepted: usize,
    pub proposed: usize,
    pub zero_prior_rejections: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
}

impl Chain {
    pub fn new(initial: &PointSet, gd: &GridDensity, seed: u64) -> Result<Self> {
        let log_prior: Vec<f64> = initial.points.iter().map(|p| gd.log_eval(*p)).collect();
        if let Some(i) = log_prior.iter().position(|v| !v.is_finite()) {
            let p = initial.points[i];
            return Err(Error::ZeroPrior { index: i, x1: p[0], x2: p[1] });
        }
        Ok(Self {
            config: initial.points.clone(),
            log_prior,
            sweeps: 0,
            accepted: 0,
            proposed: 0,
            zero_prior_rejections: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..initial.len()).collect(),
        })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn point_set(&self) -> PointSet {
        PointSet::new(self.config.clone())
    }

    /// Re-evaluates the cached prior values after the prior changes.
    fn reset_prior(&mut self, gd: &GridDensity) {
        self.log_prior = self.config.iter().map(|p| gd.log_eval(*p)).collect();
    }

    /// One Metropolis-within-Gibbs update of point `i`.
    pub fn update(&mut self, i: usize, target: &Target, gd: &GridDensity, sampler: &RectangleSampler) {
        let n = self.config.len();
        let k = target.k();
        let x = self.config[i];
        let nb: Vec<Point> = nearest_indices(&self.config, x, Some(i), k).iter().map(|&j| self.config[j]).collect();
        let s = match target {
            Target::Legacy(_) => self.config.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p[0]).sum(),
            Target::Local(_) => 0.0,
        };
        let x_star = sampler.sample_point(&mut self.rng);
        let lf_star = gd.log_eval(x_star);
        let u: f64 = self.rng.random();
        self.proposed += 1;
        if !lf_star.is_finite() {
            self.zero_prior_rejections += 1;
            return;
        }
        let log_r = log_acceptance_ratio(x, x_star, &nb, self.log_prior[i], lf_star, target, s, n);
        if u.ln() < log_r {
            self.config[i] = x_star;
            self.log_prior[i] = lf_star;
            self.accepted += 1;
        }
    }

    /// Updates every point once, in index order or in a fresh random order.
    pub fn sweep(&mut self, target: &Target, gd: &GridDensity, sampler: &RectangleSampler, order: UpdateOrder) {
        if order == UpdateOrder::RandomScan {
            let mut idx = std::mem::take(&mut self.order);
            idx.shuffle(&mut self.rng);
            for &i in &idx {
                self.update(i, target, gd, sampler);
            }
            self.order = idx;
        } else {
            for i in 0..self.config.len() {
                self.update(i, target, gd, sampler);
            }
        }
        self.sweeps += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub acceptance_rate: f64,
    pub zero_prior_rejections: usize,
}

#[derive(Clone, Debug)]
pub struct Replication {
    pub configurations: Vec<PointSet>,
    pub runs: Vec<RunSummary>,
}

/// Runs `n_R` chains from `initial`, run `r` seeded with `seed ^ r`, each
/// emitting its state after every `n_b` sweeps following the burn-in.
pub fn replicate_point_set(
    initial: &PointSet,
    target: &Target,
    gd: &GridDensity,
    schedule: &ReplicationSchedule,
    opts: &McmcOptions,
    seed: u64,
) -> Result<Replication> {
    schedule.validate()?;
    target.validate()?;
    let k = target.k();
    if initial.len() <= k {
        return Err(Error::TooFewPoints { needed: k + 1, got: initial.len() });
    }
    let sampler = build_sampler(gd, RectangleSampler::DEFAULT_CELLS, RectangleSampler::DEFAULT_CELLS, None)?;
    let run = |r: usize| run_chain(initial, target, gd, &sampler, schedule, opts, r, seed ^ r as u64);
    let jobs = opts.jobs.clamp(1, schedule.n_runs.max(1));
    type RunOutput = Result<(Vec<PointSet>, RunSummary)>;
    let results: Vec<RunOutput> = if jobs == 1 {
        (0..schedule.n_runs).map(run).collect()
    } else {
        let mut slots: Vec<Option<RunOutput>> = (0..schedule.n_runs).map(|_| None).collect();
        std::thread::scope(|scope| {
            let run = &run;
            let handles: Vec<_> = (0..jobs)
                .map(|w| scope.spawn(move || (w..schedule.n_runs).step_by(jobs).map(|r| (r, run(r))).collect::<Vec<_>>()))
                .collect();
            for h in handles {
                for (r, out) in h.join().expect("replication worker panicked") {
                    slots[r] = Some(out);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every run scheduled")).collect()
    };
    let mut configurations = Vec::with_capacity(schedule.total());
    let mut runs = Vec::with_capacity(schedule.n_runs);
    for res in results {
        let (confs, summary) = res?;
        configurations.extend(confs);
        runs.push(summary);
    }
    Ok(Replication { configurations, runs })
}

#[allow(clippy::too_many_arguments)]
fn run_chain(
    initial: &PointSet,
    target: &Target,
    gd: &GridDensity,
    sampler: &RectangleSampler,
    schedule: &ReplicationSchedule,
    opts: &McmcOptions,
    r: usize,
    run_seed: u64,
) -> Result<(Vec<PointSet>, RunSummary)> {
    let mut chain = Chain::new(initial, gd, run_seed)?;
    let mut local_gd = gd.clone();
    let mut local_sampler = sampler.clone();
    for _ in 0..schedule.burn_in {
        chain.sweep(target, &local_gd, &local_sampler, opts.order);
    }
    let mut configurations = Vec::with_capacity(schedule.n_r);
    for _ in 0..schedule.n_r {
        for _ in 0..schedule.n_b {
            chain.sweep(target, &local_gd, &local_sampler, opts.order);
        }
        configurations.push(chain.point_set());
        if opts.refresh_every_block {
            let kd = KernelDensity::from_points(&chain.point_set(), gd.kde().bandwidth().clone())?;
            local_gd = restrict_halfplane(&kd, gd.spec())?;
            local_sampler = build_sampler(&local_gd, RectangleSampler::DEFAULT_CELLS, RectangleSampler::DEFAULT_CELLS, None)?;
            chain.reset_prior(&local_gd);
        }
    }
    let summary = RunSummary { run: r, seed: run_seed, acceptance_rate: chain.acceptance_rate(), zero_prior_rejections: chain.zero_prior_rejections };
    Ok((configurations, summary))
}

pub fn prior_for(ps: &PointSet, model: &FittedModel) -> Result<GridDensity> {
    let kd = KernelDensity::from_points(ps, model.bandwidth.clone())?;
    restrict_halfplane(&kd, &model.grid)
}

/// Replicates a finite persistence diagram under a fitted model; outputs are
/// mapped back from the birth-persistence plane.
pub fn replicate(
    diagram: &PersistenceDiagram,
    model: &FittedModel,
    legacy: Option<&LegacyParams>,
    schedule: &ReplicationSchedule,
    opts: &McmcOptions,
    seed: u64,
) -> Result<(Vec<PersistenceDiagram>, Vec<RunSummary>)> {
    let ps = to_ppd(diagram)?;
    let gd = prior_for(&ps, model)?;
    let target = match legacy {
        Some(lp) => Target::Legacy(lp.clone()),
        None => Target::Local(model.params.clone()),
    };
    let rep = replicate_point_set(&ps, &target, &gd, schedule, opts, seed)?;
    let diagrams = rep.configurations.iter().map(|c| from_ppd(c, diagram.degree)).collect::<Result<Vec<_>>>()?;
    Ok((diagrams, rep.runs))
}
