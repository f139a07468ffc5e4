//! Reproduction runs: fixed-sample level diagnostics (conditional and
//! unconditional, plain and antithetic), MLMC accuracy sweeps with the
//! matching single-level Monte Carlo cost, and the derived ratios. Every
//! table is written as CSV and the derived numbers as one JSON report.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iodata::{write_results, RunConfig, RunSummary};
use crate::mlmc::wipp::{ModelSetup, WippSampler};
use crate::mlmc::{
    fit_rates, mc_standardized_cost, predicted_cost_exponent, run_mc, run_mlmc, sample_levels, CostExponent, CostModel, Estimator,
    LevelSampler, LevelStats, McResult, MlmcState, PairMoments, Rates, SampleKind, Variant,
};

/// What to run. Defaults follow the WIPP experiments: 5000 samples per
/// level, conditional levels from 32² to 256², an unconditional chain from
/// 8², and accuracies from 2·10⁻² down to 5·10⁻³.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub samples: u64,
    /// Finest grid, in cells per direction, of the diagnostic tables.
    pub finest_n: usize,
    /// Coarsest grid of the unconditional table and of the conditional
    /// crossover table.
    pub coarse_n0: usize,
    pub eps: Vec<f64>,
    /// Accuracies at which single-level Monte Carlo is actually run rather
    /// than costed from the MLMC level table.
    pub mc_eps: Vec<f64>,
    pub variants: Vec<Variant>,
}

impl Default for StudyPlan {
    fn default() -> Self {
        Self {
            samples: 5000,
            finest_n: 256,
            coarse_n0: 8,
            eps: vec![2e-2, 1e-2, 5e-3],
            mc_eps: vec![2e-2],
            variants: vec![Variant::Plain, Variant::Antithetic],
        }
    }
}

/// Level table from a fixed number of samples on every level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub conditional: bool,
    pub variant: Variant,
    pub n0: usize,
    pub levels: Vec<LevelStats>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub level: usize,
    /// Cells per direction.
    pub n: usize,
    pub samples: u64,
    pub mean_y: f64,
    pub var_y: f64,
    pub mean_q: f64,
    pub var_q: f64,
    pub se_mean_y: f64,
    pub se_mean_q: f64,
    /// Variance of a single member of an antithetic pair; equals `var_*`
    /// for plain sampling.
    pub var_y_member: f64,
    pub var_q_member: f64,
    pub cost: f64,
    pub rejects: u64,
    pub seconds: f64,
}

impl Diagnostics {
    pub fn n(&self, level: usize) -> usize {
        self.n0 << level
    }

    /// Row for grid size `n`, if the table has it.
    pub fn at(&self, n: usize) -> Option<DiagRow> {
        self.rows().into_iter().find(|r| r.n == n)
    }

    pub fn rows(&self) -> Vec<DiagRow> {
        self.levels
            .iter()
            .map(|s| {
                let k = s.samples() as f64;
                let member = |p: Option<&PairMoments>, plain: f64| {
                    p.and_then(|p| Some(0.5 * (p.var_a()? + p.var_b()?))).unwrap_or(plain)
                };
                let (vym, vqm) = (member(s.pair_y.as_ref(), s.var_y()), member(s.pair_q.as_ref(), s.var_q()));
                DiagRow {
                    level: s.level,
                    n: self.n(s.level),
                    samples: s.samples(),
                    mean_y: s.y.mean,
                    var_y: s.var_y(),
                    mean_q: s.q.mean,
                    var_q: s.var_q(),
                    se_mean_y: (s.var_y() / k).sqrt(),
                    se_mean_q: (s.var_q() / k).sqrt(),
                    var_y_member: vym,
                    var_q_member: vqm,
                    cost: s.cost,
                    rejects: s.rejected,
                    seconds: s.seconds,
                }
            })
            .collect()
    }

    /// Rates fitted over the levels that carry a coarse partner.
    pub fn rates(&self) -> Option<Rates> {
        let d: Vec<&LevelStats> = self.levels.iter().filter(|s| s.level > 0).collect();
        let cells: Vec<f64> = d.iter().map(|s| s.cells).collect();
        let mean: Vec<f64> = d.iter().map(|s| s.y.mean).collect();
        let var: Vec<f64> = d.iter().map(|s| s.var_y()).collect();
        let cost: Vec<f64> = d.iter().map(|s| s.cost).collect();
        fit_rates(&cells, &mean, &var, &cost).ok()
    }
}

fn level_of(n0: usize, n: usize) -> Result<usize> {
    if n < n0 || !n.is_multiple_of(n0) || !(n / n0).is_power_of_two() {
        return Err(Error::invalid("finest_n", format!("{n} is not {n0}·2^k")));
    }
    Ok((n / n0).trailing_zeros() as usize)
}

/// Level diagnostics on `n0 … finest_n` with `samples` per level.
pub fn diagnostics(cfg: &RunConfig, conditional: bool, variant: Variant, n0: usize, finest_n: usize, samples: u64) -> Result<Diagnostics> {
    let finest = level_of(n0, finest_n)?;
    let cfg = RunConfig {
        conditional,
        n0,
        max_level: finest,
        ..cfg.clone()
    };
    let sampler = WippSampler::new(ModelSetup::from_config(&cfg)?)?;
    log::info!(
        "diagnostics: {} {variant:?}, N = {n0}..{finest_n}, {samples} samples per level",
        if conditional { "conditional" } else { "unconditional" }
    );
    let t0 = Instant::now();
    let levels = sample_levels(&sampler, finest, samples, variant, &cfg.engine())?;
    Ok(Diagnostics {
        conditional,
        variant,
        n0,
        levels,
        wall_seconds: t0.elapsed().as_secs_f64(),
    })
}

/// One MLMC run of a sweep next to the cost single-level Monte Carlo would
/// need on its finest grid, `⌈2 V[Q_L]/ε²⌉ · C_L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub variant: Variant,
    pub finest_level: usize,
    pub finest_n: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub converged: bool,
    pub mlmc_cost: f64,
    pub mc_cost: f64,
    pub cost_ratio: f64,
    pub wall_seconds: f64,
}

pub fn sweep_row(state: &MlmcState, sampler: &dyn LevelSampler, n0: usize) -> Result<SweepRow> {
    let l = state.finest_level;
    let fine = &state.levels[l];
    let (_, mc_cost) = mc_standardized_cost(fine.var_q(), sampler.work(l, SampleKind::Single(state.variant)), state.eps)?;
    Ok(SweepRow {
        eps: state.eps,
        variant: state.variant,
        finest_level: l,
        finest_n: n0 << l,
        estimate: state.estimate,
        std_error: state.estimator_variance.sqrt(),
        converged: state.converged(),
        mlmc_cost: state.standardized_cost,
        mc_cost,
        cost_ratio: mc_cost / state.standardized_cost,
        wall_seconds: state.wall_seconds,
    })
}

/// MLMC at every accuracy in `eps`, each from the same seed.
pub fn mlmc_sweep(cfg: &RunConfig, eps: &[f64], variant: Variant) -> Result<Vec<(MlmcState, SweepRow)>> {
    let sampler = WippSampler::new(ModelSetup::from_config(cfg)?)?;
    eps.iter()
        .map(|&e| {
            log::info!("mlmc sweep: eps = {e:e}, {variant:?}");
            let st = run_mlmc(&sampler, e, variant, &cfg.engine())?;
            let row = sweep_row(&st, &sampler, cfg.n0)?;
            Ok((st, row))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub eps: f64,
    pub variant: Variant,
    pub level: usize,
    pub n: usize,
    pub samples: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub standardized_cost: f64,
    pub wall_seconds: f64,
}

impl McRow {
    pub fn new(r: &McResult, variant: Variant, n0: usize) -> Self {
        Self {
            eps: r.eps,
            variant,
            level: r.level,
            n: n0 << r.level,
            samples: r.stats.samples(),
            estimate: r.estimate,
            std_error: r.estimator_variance.sqrt(),
            standardized_cost: r.standardized_cost,
            wall_seconds: r.wall_seconds,
        }
    }
}

/// Ratios between two diagnostic tables on their common grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRatio {
    pub n: usize,
    pub var_q: f64,
    pub var_y: f64,
}

/// `V_a / V_b` for `Q` and `Y` on every grid present in both tables.
pub fn variance_ratios(a: &Diagnostics, b: &Diagnostics) -> Vec<LevelRatio> {
    a.rows()
        .into_iter()
        .filter_map(|ra| {
            b.at(ra.n).map(|rb| LevelRatio {
                n: ra.n,
                var_q: ra.var_q / rb.var_q,
                var_y: ra.var_y / rb.var_y,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub name: String,
    pub conditional: bool,
    pub variant: Variant,
    pub n0: usize,
    pub rates: Option<Rates>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub plan: StudyPlan,
    pub tables: Vec<TableSummary>,
    /// Unconditional over conditional variance.
    pub conditioning: Vec<LevelRatio>,
    /// Plain over antithetic variance (of the pair average).
    pub antithetic: Vec<LevelRatio>,
    pub sweep: Vec<SweepRow>,
    pub mc: Vec<McRow>,
    /// Cost orders predicted from the fitted conditional rates.
    pub predicted_mc: Option<CostExponent>,
    pub predicted_mlmc: Option<CostExponent>,
    pub config: RunConfig,
}

pub fn write_diagnostics_csv<W: Write>(rows: &[DiagRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "level",
        "n",
        "samples",
        "mean_Y",
        "var_Y",
        "mean_Q",
        "var_Q",
        "se_mean_Y",
        "se_mean_Q",
        "var_Y_member",
        "var_Q_member",
        "cost",
        "rejects",
        "seconds",
    ])?;
    let f = |x: f64| format!("{x:.16e}");
    for r in rows {
        w.write_record([
            r.level.to_string(),
            r.n.to_string(),
            r.samples.to_string(),
            f(r.mean_y),
            f(r.var_y),
            f(r.mean_q),
            f(r.var_q),
            f(r.se_mean_y),
            f(r.se_mean_q),
            f(r.var_y_member),
            f(r.var_q_member),
            f(r.cost),
            r.rejects.to_string(),
            f(r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Plain => "plain",
        Variant::Antithetic => "antithetic",
    }
}

/// Run the whole matrix and write it below `out`.
pub fn run_study(cfg: &RunConfig, plan: &StudyPlan, out: &Path) -> Result<StudyReport> {
    fs::create_dir_all(out)?;
    let mut tables = Vec::new();
    let mut save = |name: &str, d: &Diagnostics| -> Result<()> {
        write_diagnostics_csv(&d.rows(), fs::File::create(out.join(format!("{name}.csv")))?)?;
        tables.push(TableSummary {
            name: name.into(),
            conditional: d.conditional,
            variant: d.variant,
            n0: d.n0,
            rates: d.rates(),
            wall_seconds: d.wall_seconds,
        });
        Ok(())
    };

    let cond = diagnostics(cfg, true, Variant::Plain, cfg.n0, plan.finest_n, plan.samples)?;
    save("levels_conditional", &cond)?;
    let crossover_top = cfg.n0.max(plan.coarse_n0);
    let coarse = diagnostics(cfg, true, Variant::Plain, plan.coarse_n0, crossover_top, plan.samples)?;
    save("levels_conditional_coarse", &coarse)?;
    let uncond = diagnostics(cfg, false, Variant::Plain, plan.coarse_n0, plan.finest_n, plan.samples)?;
    save("levels_unconditional", &uncond)?;
    let av = if plan.variants.contains(&Variant::Antithetic) {
        let av = diagnostics(cfg, true, Variant::Antithetic, cfg.n0, plan.finest_n, plan.samples)?;
        save("levels_conditional_antithetic", &av)?;
        Some(av)
    } else {
        None
    };

    let mut sweep = Vec::new();
    let mut mc = Vec::new();
    for &variant in &plan.variants {
        let sampler = WippSampler::new(ModelSetup::from_config(cfg)?)?;
        for (state, row) in mlmc_sweep(cfg, &plan.eps, variant)? {
            let dir = out.join(format!("mlmc_{}_{:e}", variant_name(variant), state.eps));
            let run_cfg = RunConfig {
                eps: state.eps,
                antithetic: variant == Variant::Antithetic,
                ..cfg.clone()
            };
            write_results(&dir, &state.levels, &RunSummary::from_mlmc(&state, &run_cfg))?;
            if plan.mc_eps.contains(&state.eps) {
                log::info!("single-level MC: eps = {:e} on level {}", state.eps, state.finest_level);
                let r = run_mc(&sampler, state.eps, state.finest_level, variant, &cfg.engine())?;
                mc.push(McRow::new(&r, variant, cfg.n0));
            }
            sweep.push(row);
        }
    }
    write_rows(&out.join("cost_sweep.csv"), &sweep)?;
    write_rows(&out.join("mc_runs.csv"), &mc)?;

    let model = cond.rates().map(|r| CostModel {
        alpha: r.alpha,
        beta: r.beta,
        gamma: r.gamma,
    });
    let report = StudyReport {
        plan: plan.clone(),
        tables,
        conditioning: variance_ratios(&uncond, &cond),
        antithetic: av.as_ref().map(|a| variance_ratios(&cond, a)).unwrap_or_default(),
        sweep,
        mc,
        predicted_mc: model.and_then(|m| predicted_cost_exponent(&m, Estimator::Mc).ok()),
        predicted_mlmc: model.and_then(|m| predicted_cost_exponent(&m, Estimator::Mlmc).ok()),
        config: cfg.clone(),
    };
    let mut f = fs::File::create(out.join("study.json"))?;
    serde_json::to_writer_pretty(&mut f, &report)?;
    f.write_all(b"\n")?;
    Ok(report)
}
