//! Monte Carlo and multilevel Monte Carlo estimation of `E[Q]`.
//!
//! Samples are drawn in blocks addressed by `(seed, role, level, block)`;
//! blocks run in parallel and their outcomes are folded into the level
//! accumulators strictly in block order, so a run is reproducible for any
//! number of workers.

mod moments;
mod rates;
pub mod toy;
pub mod wipp;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use moments::{Moments, PairMoments};
pub use rates::{
    fit_rates, fit_slope, log_slope, mc_standardized_cost, optimal_allocation, predicted_cost_exponent, CostExponent, CostModel,
    Estimator, Rates,
};

use crate::error::{Error, Result};
use crate::stream::{Role, StreamId};

/// Smallest decay rate used in the bias extrapolation.
pub const ALPHA_FLOOR: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Plain,
    Antithetic,
}

/// What one sample evaluates: the coupled difference `Y_ℓ = Q_ℓ − Q_{ℓ−1}`
/// (with `Y_0 = Q_0`), or `Q_ℓ` alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleKind {
    Coupled(Variant),
    Single(Variant),
}

impl SampleKind {
    pub fn variant(self) -> Variant {
        match self {
            SampleKind::Coupled(v) | SampleKind::Single(v) => v,
        }
    }

    fn role(self) -> Role {
        match self {
            SampleKind::Coupled(_) => Role::Regular,
            SampleKind::Single(_) => Role::SingleLevel,
        }
    }
}

/// Values of the two members of an antithetic pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairParts {
    pub y: [f64; 2],
    pub q: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// Estimator sample: `Y_ℓ`, or `(Y_ℓ + Y_ℓ⁻)/2` for antithetic pairs.
    pub y: f64,
    /// Fine-level `Q_ℓ`, averaged over the pair when antithetic.
    pub q: f64,
    pub parts: Option<PairParts>,
}

/// A family of coupled level approximations of a random quantity.
pub trait LevelSampler: Sync {
    fn max_level(&self) -> usize;

    /// Degrees of freedom `M_ℓ` of level `ℓ`.
    fn cells(&self, level: usize) -> f64;

    fn refinement_ratio(&self) -> f64 {
        self.cells(1) / self.cells(0)
    }

    /// Number of samples produced by one random block.
    fn block_size(&self) -> usize {
        1
    }

    /// Build whatever level `level` needs before sampling it.
    fn prepare(&self, _level: usize) -> Result<()> {
        Ok(())
    }

    /// Evaluate the `block_size()` samples of one block. A sample that fails
    /// with a numerical error is rejected by the caller; any other error
    /// aborts the run.
    fn sample_block(&self, level: usize, kind: SampleKind, block: StreamId, seed: u64) -> Vec<Result<Outcome>>;

    /// Standardized work of one sample, in cells solved.
    fn work(&self, level: usize, kind: SampleKind) -> f64 {
        let base = match kind {
            SampleKind::Coupled(_) if level > 0 => self.cells(level) + self.cells(level - 1),
            _ => self.cells(level),
        };
        match kind.variant() {
            Variant::Plain => base,
            Variant::Antithetic => 2.0 * base,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub cells: f64,
    pub y: Moments,
    pub q: Moments,
    pub pair_y: Option<PairMoments>,
    pub pair_q: Option<PairMoments>,
    /// Standardized work per sample.
    pub cost: f64,
    /// Total standardized work, rejected samples included.
    pub work: f64,
    /// Summed per-block compute time in seconds.
    #[serde(default)]
    pub seconds: f64,
    pub attempted: u64,
    pub rejected: u64,
    /// Next unused block index.
    pub next_block: u64,
}

impl LevelStats {
    pub fn new(level: usize, cells: f64, cost: f64) -> Self {
        Self {
            level,
            cells,
            y: Moments::default(),
            q: Moments::default(),
            pair_y: None,
            pair_q: None,
            cost,
            work: 0.0,
            seconds: 0.0,
            attempted: 0,
            rejected: 0,
            next_block: 0,
        }
    }

    pub fn samples(&self) -> u64 {
        self.y.n
    }

    pub fn var_y(&self) -> f64 {
        self.y.variance().unwrap_or(0.0)
    }

    pub fn var_q(&self) -> f64 {
        self.q.variance().unwrap_or(0.0)
    }

    fn record(&mut self, o: &Outcome) {
        self.y.push(o.y);
        self.q.push(o.q);
        if let Some(p) = o.parts {
            self.pair_y.get_or_insert_with(PairMoments::default).push(p.y[0], p.y[1]);
            self.pair_q.get_or_insert_with(PairMoments::default).push(p.q[0], p.q[1]);
        }
    }

    /// Same statistics, ignoring timing.
    pub fn same_statistics(&self, other: &LevelStats) -> bool {
        LevelStats {
            seconds: 0.0,
            ..self.clone()
        } == LevelStats {
            seconds: 0.0,
            ..other.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub seed: u64,
    /// Warm-up samples on every new level.
    pub n_init: u64,
    /// Abort when a level rejects more than this fraction of its samples.
    pub max_reject_rate: f64,
    /// Worker threads; 0 uses all available.
    pub workers: usize,
    /// Fixed bias decay rate, fitted from the level table when absent.
    pub alpha: Option<f64>,
    /// Finest level allowed (further capped by the sampler).
    pub max_level: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            n_init: 100,
            max_reject_rate: 0.05,
            workers: 0,
            alpha: None,
            max_level: usize::MAX,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    LevelCapReached { bias: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlmcState {
    pub eps: f64,
    pub variant: Variant,
    pub levels: Vec<LevelStats>,
    pub finest_level: usize,
    pub rates: Option<Rates>,
    pub alpha_used: f64,
    pub estimate: f64,
    /// `Σ V[Y_ℓ]/N_ℓ`
    pub estimator_variance: f64,
    pub bias_estimate: f64,
    pub standardized_cost: f64,
    pub wall_seconds: f64,
    pub status: RunStatus,
}

impl MlmcState {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }
}

/// Result of a single-level Monte Carlo run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub eps: f64,
    pub level: usize,
    pub stats: LevelStats,
    pub estimate: f64,
    pub estimator_variance: f64,
    /// Samples called for by `⌈2 V[Q_L]/ε²⌉`.
    pub allocated: u64,
    /// Samples taken times the level cost.
    pub standardized_cost: f64,
    pub wall_seconds: f64,
}

/// Worker pool; outcomes are always returned in input order.
pub struct Workers {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn new(workers: usize) -> Result<Self> {
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
            Ok(Self { pool: Some(pool) })
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = workers;
            Ok(Self {})
        }
    }

    pub fn map<T: Send, F: Fn(u64) -> T + Sync + Send>(&self, range: std::ops::Range<u64>, f: F) -> Vec<T> {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| range.into_par_iter().map(&f).collect());
        }
        range.map(f).collect()
    }
}

fn is_rejection(e: &Error) -> bool {
    e.category() == "numerical"
}

/// Sample `stats.level` until it holds at least `target` accepted samples.
pub fn extend_level<S: LevelSampler + ?Sized>(
    sampler: &S,
    stats: &mut LevelStats,
    kind: SampleKind,
    target: u64,
    opts: &EngineOptions,
    workers: &Workers,
) -> Result<()> {
    let level = stats.level;
    sampler.prepare(level)?;
    let bs = sampler.block_size() as u64;
    while stats.samples() < target {
        let blocks = (target - stats.samples()).div_ceil(bs);
        let start = stats.next_block;
        let results = workers.map(start..start + blocks, |b| {
            let t0 = Instant::now();
            let id = StreamId::new(kind.role(), level, b);
            let out = sampler.sample_block(level, kind, id, opts.seed);
            (out, t0.elapsed().as_secs_f64())
        });
        stats.next_block += blocks;
        for (outs, secs) in results {
            stats.seconds += secs;
            for o in outs {
                stats.attempted += 1;
                stats.work += stats.cost;
                match o {
                    Ok(o) => stats.record(&o),
                    Err(e) if is_rejection(&e) => {
                        log::debug!("level {level}: sample rejected: {e}");
                        stats.rejected += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        if stats.rejected as f64 > opts.max_reject_rate * stats.attempted as f64 {
            return Err(Error::RejectionRate {
                level,
                rejected: stats.rejected,
                attempted: stats.attempted,
            });
        }
    }
    Ok(())
}

/// Fixed-size sampling of levels `0..=finest`, used for level diagnostics.
pub fn sample_levels<S: LevelSampler + ?Sized>(
    sampler: &S,
    finest: usize,
    samples: u64,
    variant: Variant,
    opts: &EngineOptions,
) -> Result<Vec<LevelStats>> {
    if finest > sampler.max_level() {
        return Err(Error::LevelOverflow {
            level: finest,
            max: sampler.max_level(),
        });
    }
    let workers = Workers::new(opts.workers)?;
    let kind = SampleKind::Coupled(variant);
    let mut out = Vec::new();
    for level in 0..=finest {
        let mut st = LevelStats::new(level, sampler.cells(level), sampler.work(level, kind));
        extend_level(sampler, &mut st, kind, samples, opts, &workers)?;
        log::info!(
            "level {level}: N={} E[Y]={:.4e} V[Y]={:.4e} V[Q]={:.4e} rejected={}",
            st.samples(),
            st.y.mean,
            st.var_y(),
            st.var_q(),
            st.rejected
        );
        out.push(st);
    }
    Ok(out)
}

fn difference_levels(levels: &[LevelStats]) -> Vec<&LevelStats> {
    levels.iter().filter(|s| s.level > 0 && s.samples() >= 2).collect()
}

/// Decay rate of `|E[Y_ℓ]|` over the difference levels.
fn fitted_alpha(levels: &[LevelStats]) -> Option<f64> {
    let diff = difference_levels(levels);
    let cells: Vec<f64> = diff.iter().map(|s| s.cells).collect();
    let mean: Vec<f64> = diff.iter().map(|s| s.y.mean).collect();
    log_slope(&cells, &mean).ok().map(|s| -s)
}

fn level_rates(levels: &[LevelStats]) -> Option<Rates> {
    let diff = difference_levels(levels);
    let cells: Vec<f64> = diff.iter().map(|s| s.cells).collect();
    let mean: Vec<f64> = diff.iter().map(|s| s.y.mean).collect();
    let var: Vec<f64> = diff.iter().map(|s| s.var_y()).collect();
    let cost: Vec<f64> = diff.iter().map(|s| s.cost).collect();
    fit_rates(&cells, &mean, &var, &cost).ok()
}

/// Richardson-type bias estimate `max(|E[Y_L]|, |E[Y_{L−1}]|/s^α)/(s^α − 1)`.
fn bias_estimate(levels: &[LevelStats], alpha: f64, ratio: f64) -> f64 {
    let l = levels.len() - 1;
    if l == 0 {
        return 0.0;
    }
    let f = ratio.powf(alpha);
    let mut m = levels[l].y.mean.abs();
    if l >= 2 {
        m = m.max(levels[l - 1].y.mean.abs() / f);
    }
    m / (f - 1.0)
}

/// Adaptive multilevel estimation of `E[Q]` to root-mean-square accuracy
/// `eps`, splitting `ε²` evenly between sampling variance and squared bias.
pub fn run_mlmc<S: LevelSampler + ?Sized>(sampler: &S, eps: f64, variant: Variant, opts: &EngineOptions) -> Result<MlmcState> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", format!("must be positive, got {eps}")));
    }
    if opts.n_init < 2 {
        return Err(Error::invalid("n_init", "need at least two warm-up samples"));
    }
    let t0 = Instant::now();
    let workers = Workers::new(opts.workers)?;
    let kind = SampleKind::Coupled(variant);
    let cap = sampler.max_level().min(opts.max_level);
    let mut levels: Vec<LevelStats> = Vec::new();
    let mut target: Vec<u64> = Vec::new();
    let add_level = |levels: &mut Vec<LevelStats>, target: &mut Vec<u64>| {
        let l = levels.len();
        levels.push(LevelStats::new(l, sampler.cells(l), sampler.work(l, kind)));
        target.push(opts.n_init);
    };
    for _ in 0..=cap.min(1) {
        add_level(&mut levels, &mut target);
    }
    let bias_target = eps / std::f64::consts::SQRT_2;
    let (status, alpha, bias) = loop {
        for (st, &t) in levels.iter_mut().zip(&target) {
            extend_level(sampler, st, kind, t, opts, &workers)?;
        }
        let v: Vec<f64> = levels.iter().map(LevelStats::var_y).collect();
        let c: Vec<f64> = levels.iter().map(|s| s.cost).collect();
        let n_opt = optimal_allocation(&v, &c, eps)?;
        let mut more = false;
        for (t, n) in target.iter_mut().zip(n_opt) {
            if n > *t {
                *t = n;
                more = true;
            }
        }
        if more {
            log::debug!("targets {target:?}");
            continue;
        }
        let alpha = match opts.alpha {
            Some(a) => a,
            None => fitted_alpha(&levels).map_or(ALPHA_FLOOR, |a| a.max(ALPHA_FLOOR)),
        };
        let bias = bias_estimate(&levels, alpha, sampler.refinement_ratio());
        log::info!("L={} bias estimate {bias:.3e} (target {bias_target:.3e}, alpha {alpha:.3})", levels.len() - 1);
        if bias <= bias_target {
            break (RunStatus::Converged, alpha, bias);
        }
        if levels.len() - 1 == cap {
            log::warn!("level cap {cap} reached with bias estimate {bias:.3e}");
            break (RunStatus::LevelCapReached { bias }, alpha, bias);
        }
        add_level(&mut levels, &mut target);
    };
    let estimate = levels.iter().map(|s| s.y.mean).sum();
    let estimator_variance = levels.iter().map(|s| s.var_y() / s.samples() as f64).sum();
    let standardized_cost = levels.iter().map(|s| s.samples() as f64 * s.cost).sum();
    Ok(MlmcState {
        eps,
        variant,
        finest_level: levels.len() - 1,
        rates: level_rates(&levels),
        alpha_used: alpha,
        estimate,
        estimator_variance,
        bias_estimate: bias,
        standardized_cost,
        wall_seconds: t0.elapsed().as_secs_f64(),
        status,
        levels,
    })
}

/// Plain Monte Carlo on level `level` alone with `N = ⌈2 V[Q_L]/ε²⌉`.
pub fn run_mc<S: LevelSampler + ?Sized>(
    sampler: &S,
    eps: f64,
    level: usize,
    variant: Variant,
    opts: &EngineOptions,
) -> Result<McResult> {
    if level > sampler.max_level() {
        return Err(Error::LevelOverflow {
            level,
            max: sampler.max_level(),
        });
    }
    let t0 = Instant::now();
    let workers = Workers::new(opts.workers)?;
    let kind = SampleKind::Single(variant);
    let mut st = LevelStats::new(level, sampler.cells(level), sampler.work(level, kind));
    extend_level(sampler, &mut st, kind, opts.n_init.max(2), opts, &workers)?;
    let (allocated, _) = mc_standardized_cost(st.var_q(), st.cost, eps)?;
    extend_level(sampler, &mut st, kind, allocated, opts, &workers)?;
    Ok(McResult {
        eps,
        level,
        estimate: st.q.mean,
        estimator_variance: st.var_q() / st.samples() as f64,
        allocated,
        standardized_cost: st.samples() as f64 * st.cost,
        wall_seconds: t0.elapsed().as_secs_f64(),
        stats: st,
    })
}
