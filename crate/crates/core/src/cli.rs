//! Command-line front end. Every subcommand starts from the TOML
//! configuration (or the defaults), applies flag overrides, and writes its
//! data under `--out`; progress goes to standard error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::iodata::{load_config, write_field_csv, write_results, LevelRow, RunConfig, RunSummary, DATA_DIR_ENV};
use crate::mlmc::wipp::{ModelSetup, WippSampler};
use crate::mlmc::{extend_level, run_mc, run_mlmc, LevelSampler, LevelStats, SampleKind, Workers};
use crate::stream::{Role, StreamId};
use crate::study::{run_study, StudyPlan};
use crate::transport::{quantity_of_interest, write_path_csv};

#[derive(Parser, Debug)]
#[command(
    name = "wipp-mlmc",
    version,
    about = "Conditional multilevel Monte Carlo for groundwater travel time at the WIPP site",
    after_help = format!("The borehole file defaults to the bundled data set, or to {} under the directory named by ${DATA_DIR_ENV}.", crate::iodata::BOREHOLE_FILE)
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Draw one log10-transmissivity realization on a level and write it.
    Field,
    /// Kriging mean and standard deviation of log10 T on a level.
    Krige,
    /// One realization: head solution, particle path and travel time.
    Solve,
    /// Single-level Monte Carlo on one level.
    Mc,
    /// Adaptive multilevel Monte Carlo to accuracy --eps.
    Mlmc,
    /// Level diagnostics, conditioning and antithetic comparisons and the
    /// cost-versus-accuracy sweep.
    Study,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// TOML configuration file; unknown keys are an error.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Report unknown configuration keys as warnings instead of errors.
    #[arg(long, global = true)]
    pub lenient: bool,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed; every random stream derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Root-mean-square accuracy target (mlmc, mc).
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Condition on the borehole data (default).
    #[arg(long, global = true, overrides_with = "unconditional")]
    pub conditional: bool,
    /// Ignore the borehole data.
    #[arg(long, global = true, overrides_with = "conditional")]
    pub unconditional: bool,
    /// Use antithetic pairs.
    #[arg(long, global = true)]
    pub antithetic: bool,
    /// Finest level allowed (mlmc) or finest diagnostic level (study).
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    /// Level for field, krige, solve and mc (default: finest allowed).
    #[arg(long, global = true)]
    pub level: Option<usize>,
    /// Cells per direction on level 0.
    #[arg(long, global = true)]
    pub n0: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Samples per level (study), or a fixed sample count for mc.
    #[arg(long, global = true)]
    pub samples: Option<u64>,
    /// Realization index within the seed's stream (field, solve).
    #[arg(long, global = true, default_value_t = 0)]
    pub index: u64,
}

impl Overrides {
    /// Configuration from `--config` (or defaults) with flags applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p, !self.lenient)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
        if self.conditional {
            cfg.conditional = true;
        }
        if self.unconditional {
            cfg.conditional = false;
        }
        if self.antithetic {
            cfg.antithetic = true;
        }
        if let Some(v) = self.levels {
            cfg.max_level = v;
        }
        if let Some(v) = self.n0 {
            cfg.n0 = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Exit status for an error category.
pub fn exit_code(category: &str) -> u8 {
    match category {
        "config" => 3,
        "data" => 4,
        "numerical" => 5,
        "estimation" => 6,
        "io" => 7,
        _ => 1,
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(e.category()))
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.opts.resolve()?;
    match cli.command {
        Command::Field => field(&cfg, &cli.opts),
        Command::Krige => krige(&cfg, &cli.opts),
        Command::Solve => solve(&cfg, &cli.opts),
        Command::Mc => mc(&cfg, &cli.opts),
        Command::Mlmc => mlmc(&cfg),
        Command::Study => study(&cfg),
    }
}

fn sampler(cfg: &RunConfig) -> Result<WippSampler> {
    WippSampler::new(ModelSetup::from_config(cfg)?)
}

fn chosen_level(s: &WippSampler, opts: &Overrides) -> Result<usize> {
    let max = s.max_level();
    let level = opts.level.unwrap_or(max);
    if level > max {
        return Err(Error::LevelOverflow { level, max });
    }
    Ok(level)
}

fn create(dir: &Path, name: &str) -> Result<fs::File> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    log::info!("writing {}", path.display());
    Ok(fs::File::create(path)?)
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn field(cfg: &RunConfig, opts: &Overrides) -> Result<()> {
    let s = sampler(cfg)?;
    let level = chosen_level(&s, opts)?;
    let res = s.resources(level)?;
    let block = StreamId::new(Role::Inspect, level, opts.index / 2);
    let c = &s.realizations(level, block, cfg.seed)?[(opts.index % 2) as usize];
    write_field_csv(&res.fine.cell_centers(), c.fine(), "log10_T", create(&cfg.out, "field.csv")?)
}

fn krige(cfg: &RunConfig, opts: &Overrides) -> Result<()> {
    let s = sampler(cfg)?;
    let level = chosen_level(&s, opts)?;
    let setup = s.setup();
    let centers = setup.grid(level)?.cell_centers();
    let (mean, var) = setup.kriging_map(level)?;
    let mut w = csv::Writer::from_writer(create(&cfg.out, "krige.csv")?);
    w.write_record(["x", "y", "mean", "std"])?;
    for ((pt, m), v) in centers.iter().zip(&mean).zip(&var) {
        w.write_record([format!("{:.16e}", pt.x), format!("{:.16e}", pt.y), format!("{m:.16e}"), format!("{:.16e}", v.sqrt())])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SolveReport {
    level: usize,
    n: usize,
    seed: u64,
    index: u64,
    conditional: bool,
    solver_iterations: usize,
    relative_residual: f64,
    termination: crate::transport::Termination,
    travel_time_years: f64,
    q: Option<f64>,
    cells_visited: usize,
}

fn solve(cfg: &RunConfig, opts: &Overrides) -> Result<()> {
    let s = sampler(cfg)?;
    let level = chosen_level(&s, opts)?;
    let res = s.resources(level)?;
    let block = StreamId::new(Role::Inspect, level, opts.index / 2);
    let c = &s.realizations(level, block, cfg.seed)?[(opts.index % 2) as usize];
    let (sol, tr) = s.setup().evaluate(&res.fine, c.fine(), true)?;
    let mut w = csv::Writer::from_writer(create(&cfg.out, "head.csv")?);
    w.write_record(["x", "y", "log10_T", "head"])?;
    for ((pt, z), h) in res.fine.cell_centers().iter().zip(c.fine()).zip(&sol.head) {
        w.write_record([format!("{:.16e}", pt.x), format!("{:.16e}", pt.y), format!("{z:.16e}"), format!("{h:.16e}")])?;
    }
    w.flush()?;
    write_path_csv(tr.path.as_deref().unwrap_or_default(), create(&cfg.out, "path.csv")?)?;
    print_json(&SolveReport {
        level,
        n: res.fine.n,
        seed: cfg.seed,
        index: opts.index,
        conditional: cfg.conditional,
        solver_iterations: sol.iterations,
        relative_residual: sol.residual,
        termination: tr.termination,
        travel_time_years: tr.time,
        q: quantity_of_interest(&tr).ok(),
        cells_visited: tr.cells_visited,
    })
}

fn mc(cfg: &RunConfig, opts: &Overrides) -> Result<()> {
    let s = sampler(cfg)?;
    let level = chosen_level(&s, opts)?;
    let variant = cfg.variant();
    let engine = cfg.engine();
    let (stats, wall) = match opts.samples {
        Some(n) => {
            let t0 = std::time::Instant::now();
            let kind = SampleKind::Single(variant);
            let mut st = LevelStats::new(level, s.cells(level), s.work(level, kind));
            extend_level(&s, &mut st, kind, n, &engine, &Workers::new(engine.workers)?)?;
            (st, t0.elapsed().as_secs_f64())
        }
        None => {
            let r = run_mc(&s, cfg.eps, level, variant, &engine)?;
            (r.stats, r.wall_seconds)
        }
    };
    let n = stats.samples() as f64;
    let summary = RunSummary {
        estimator: "mc".into(),
        variant,
        conditional: cfg.conditional,
        eps: cfg.eps,
        estimate: stats.q.mean,
        estimator_variance: stats.var_q() / n,
        finest_level: level,
        rates: None,
        alpha_used: None,
        bias_estimate: None,
        standardized_cost: n * stats.cost,
        wall_seconds: wall,
        converged: true,
        seed: cfg.seed,
        levels: vec![LevelRow::from(&stats)],
        config: cfg.clone(),
    };
    write_results(&cfg.out, std::slice::from_ref(&stats), &summary)?;
    print_json(&summary)
}

fn mlmc(cfg: &RunConfig) -> Result<()> {
    let s = sampler(cfg)?;
    let state = run_mlmc(&s, cfg.eps, cfg.variant(), &cfg.engine())?;
    let summary = RunSummary::from_mlmc(&state, cfg);
    write_results(&cfg.out, &state.levels, &summary)?;
    print_json(&summary)
}

fn study(cfg: &RunConfig) -> Result<()> {
    let plan = StudyPlan {
        samples: cfg.samples,
        finest_n: (cfg.n0 << cfg.max_level).min(StudyPlan::default().finest_n).max(cfg.n0),
        ..StudyPlan::default()
    };
    let report = run_study(cfg, &plan, &cfg.out)?;
    log::info!("study written to {}", cfg.out.display());
    print_json(&report)
}
