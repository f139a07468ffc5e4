//! Borehole data, run configuration and result files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceParams;
use crate::error::{Error, Result};
use crate::flow::{BoundaryHead, FaceAveraging, SolverOptions};
use crate::grid::{DomainSpec, Point};
use crate::mlmc::{EngineOptions, LevelStats, MlmcState, Rates, Variant};
use crate::transport::TransportParams;

/// Environment variable naming the directory that holds `wipp_boreholes.csv`.
pub const DATA_DIR_ENV: &str = "WIPP_MLMC_DATA";
pub const BOREHOLE_FILE: &str = "wipp_boreholes.csv";

const BUNDLED_BOREHOLES: &str = include_str!("../data/wipp_boreholes.csv");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoreholeRecord {
    pub name: String,
    pub easting: f64,
    pub northing: f64,
    #[serde(rename = "log10_T")]
    pub log10_t: f64,
}

/// The 39 Culebra transmissivity measurements shipped with the crate.
pub fn bundled_boreholes() -> Vec<BoreholeRecord> {
    parse_boreholes(BUNDLED_BOREHOLES, None).expect("bundled borehole file is valid")
}

pub fn bundled_boreholes_csv() -> &'static str {
    BUNDLED_BOREHOLES
}

/// Parse `name,easting,northing,log10_T` rows. When `domain` is given,
/// every borehole must lie inside it.
pub fn parse_boreholes(text: &str, domain: Option<&DomainSpec>) -> Result<Vec<BoreholeRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let expected = ["name", "easting", "northing", "log10_T"];
    if headers.iter().ne(expected) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, found {}", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<BoreholeRecord>() {
        let rec = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if ![rec.easting, rec.northing, rec.log10_t].iter().all(|v| v.is_finite()) {
            return Err(Error::Parse {
                line: out.len() as u64 + 2,
                message: format!("non-finite value for {}", rec.name),
            });
        }
        if let Some(d) = domain {
            if !d.contains(Point::new(rec.easting, rec.northing)) {
                return Err(Error::ObservationOutsideDomain {
                    name: rec.name,
                    x: rec.easting,
                    y: rec.northing,
                });
            }
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

pub fn load_boreholes(path: &Path, domain: Option<&DomainSpec>) -> Result<Vec<BoreholeRecord>> {
    parse_boreholes(&fs::read_to_string(path)?, domain)
}

/// Borehole file named by [`DATA_DIR_ENV`], if set.
pub fn env_borehole_path() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(|d| PathBuf::from(d).join(BOREHOLE_FILE))
}

/// Boreholes from an explicit path, else the data directory, else the
/// bundled copy.
pub fn resolve_boreholes(explicit: Option<&Path>, domain: &DomainSpec) -> Result<Vec<BoreholeRecord>> {
    match explicit.map(Path::to_path_buf).or_else(env_borehole_path) {
        Some(p) => {
            log::info!("reading boreholes from {}", p.display());
            load_boreholes(&p, Some(domain))
        }
        None => Ok(bundled_boreholes()),
    }
}

/// Flat key-value run configuration. Every key is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub center_x: f64,
    pub center_y: f64,
    pub extent_x: f64,
    pub extent_y: f64,
    pub inner_half_width: f64,
    pub inner_half_height: f64,
    pub release_x: f64,
    pub release_y: f64,

    pub mean: f64,
    pub sigma2: f64,
    pub correlation_length: f64,

    pub head_a0: f64,
    pub head_a1: f64,
    pub head_a2: f64,
    pub head_x0: f64,
    pub head_y0: f64,
    pub face_averaging: FaceAveraging,
    pub solver_tolerance: f64,
    pub solver_max_iterations: usize,

    pub thickness: f64,
    pub porosity: f64,
    pub max_time: f64,

    /// Cells per direction on level 0.
    pub n0: usize,
    /// Finest level MLMC may add; level `ℓ` has `n0·2^ℓ` cells per direction.
    pub max_level: usize,
    pub eps: f64,
    pub conditional: bool,
    pub antithetic: bool,
    pub seed: u64,
    pub n_init: u64,
    pub max_reject_rate: f64,
    /// Fixed bias decay rate; fitted when absent.
    pub alpha: Option<f64>,
    pub workers: usize,
    pub samples: u64,
    pub boreholes: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DomainSpec::wipp();
        let c = CovarianceParams::WIPP;
        let h = BoundaryHead::WIPP;
        let t = TransportParams::WIPP;
        let s = SolverOptions::default();
        Self {
            center_x: d.center_x,
            center_y: d.center_y,
            extent_x: d.extent_x,
            extent_y: d.extent_y,
            inner_half_width: d.inner_half_width,
            inner_half_height: d.inner_half_height,
            release_x: d.release.x,
            release_y: d.release.y,
            mean: c.mean,
            sigma2: c.variance,
            correlation_length: c.correlation_length,
            head_a0: h.a0,
            head_a1: h.a1,
            head_a2: h.a2,
            head_x0: h.x0,
            head_y0: h.y0,
            face_averaging: FaceAveraging::Harmonic,
            solver_tolerance: s.tolerance,
            solver_max_iterations: s.max_iterations,
            thickness: t.thickness,
            porosity: t.porosity,
            max_time: t.max_time,
            n0: 32,
            max_level: 5,
            eps: 1e-2,
            conditional: true,
            antithetic: false,
            seed: 1,
            n_init: 100,
            max_reject_rate: 0.05,
            alpha: None,
            workers: 0,
            samples: 5000,
            boreholes: None,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn domain(&self) -> DomainSpec {
        DomainSpec {
            center_x: self.center_x,
            center_y: self.center_y,
            extent_x: self.extent_x,
            extent_y: self.extent_y,
            inner_half_width: self.inner_half_width,
            inner_half_height: self.inner_half_height,
            release: Point::new(self.release_x, self.release_y),
        }
    }

    pub fn covariance(&self) -> CovarianceParams {
        CovarianceParams {
            mean: self.mean,
            variance: self.sigma2,
            correlation_length: self.correlation_length,
        }
    }

    pub fn boundary(&self) -> BoundaryHead {
        BoundaryHead {
            a0: self.head_a0,
            a1: self.head_a1,
            a2: self.head_a2,
            x0: self.head_x0,
            y0: self.head_y0,
        }
    }

    pub fn transport(&self) -> TransportParams {
        TransportParams {
            thickness: self.thickness,
            porosity: self.porosity,
            max_time: self.max_time,
            ..TransportParams::WIPP
        }
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.solver_tolerance,
            max_iterations: self.solver_max_iterations,
        }
    }

    pub fn variant(&self) -> Variant {
        if self.antithetic {
            Variant::Antithetic
        } else {
            Variant::Plain
        }
    }

    pub fn engine(&self) -> EngineOptions {
        EngineOptions {
            seed: self.seed,
            n_init: self.n_init,
            max_reject_rate: self.max_reject_rate,
            workers: self.workers,
            alpha: self.alpha,
            max_level: self.max_level,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain().validate()?;
        self.covariance().validate()?;
        self.boundary().validate()?;
        self.transport().validate()?;
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid("eps", format!("must be positive, got {}", self.eps)));
        }
        if self.n0 < 2 {
            return Err(Error::invalid("n0", "must be at least 2"));
        }
        if !(self.solver_tolerance > 0.0 && self.solver_tolerance < 1.0) {
            return Err(Error::invalid("solver_tolerance", "must lie in (0, 1)"));
        }
        if self.n_init < 2 {
            return Err(Error::invalid("n_init", "must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.max_reject_rate) {
            return Err(Error::invalid("max_reject_rate", "must lie in [0, 1)"));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) {
                return Err(Error::invalid("alpha", "must be positive"));
            }
        }
        if self.samples < 2 {
            return Err(Error::invalid("samples", "must be at least 2"));
        }
        Ok(())
    }
}

/// Parse a TOML configuration. Unknown keys are an error when `strict`,
/// otherwise they are reported and ignored.
pub fn parse_config(text: &str, strict: bool) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let known: Vec<String> = match toml::Table::try_from(RunConfig::default()) {
        Ok(t) => t.keys().cloned().chain(["alpha".into(), "boreholes".into()]).collect(),
        Err(e) => return Err(Error::Config(e.to_string())),
    };
    let unknown: Vec<String> = table.keys().filter(|k| !known.contains(k)).cloned().collect();
    for key in unknown {
        if strict {
            return Err(Error::UnknownKey(key));
        }
        log::warn!("ignoring unknown configuration key `{key}`");
        table.remove(&key);
    }
    let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, strict: bool) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, strict)
}

/// One row of the per-level table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: usize,
    #[serde(rename = "N_l")]
    pub samples: u64,
    #[serde(rename = "mean_Y")]
    pub mean_y: f64,
    #[serde(rename = "var_Y")]
    pub var_y: f64,
    #[serde(rename = "mean_Q")]
    pub mean_q: f64,
    #[serde(rename = "var_Q")]
    pub var_q: f64,
    pub cost: f64,
    pub rejects: u64,
}

impl From<&LevelStats> for LevelRow {
    fn from(s: &LevelStats) -> Self {
        Self {
            level: s.level,
            samples: s.samples(),
            mean_y: s.y.mean,
            var_y: s.var_y(),
            mean_q: s.q.mean,
            var_q: s.var_q(),
            cost: s.cost,
            rejects: s.rejected,
        }
    }
}

fn full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Per-level CSV with every float at 17 significant digits.
pub fn write_level_csv<W: Write>(levels: &[LevelStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "N_l", "mean_Y", "var_Y", "mean_Q", "var_Q", "cost", "rejects"])?;
    for s in levels {
        let r = LevelRow::from(s);
        w.write_record([
            r.level.to_string(),
            r.samples.to_string(),
            full(r.mean_y),
            full(r.var_y),
            full(r.mean_q),
            full(r.var_q),
            full(r.cost),
            r.rejects.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_level_csv(path: &Path) -> Result<Vec<LevelRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<LevelRow>, _>>()?;
    Ok(rows)
}

/// JSON run summary: the estimate, accuracy target, fitted rates, seed and
/// the full configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub estimator: String,
    pub variant: Variant,
    pub conditional: bool,
    pub eps: f64,
    pub estimate: f64,
    pub estimator_variance: f64,
    pub finest_level: usize,
    pub rates: Option<Rates>,
    pub alpha_used: Option<f64>,
    pub bias_estimate: Option<f64>,
    pub standardized_cost: f64,
    pub wall_seconds: f64,
    pub converged: bool,
    pub seed: u64,
    pub levels: Vec<LevelRow>,
    pub config: RunConfig,
}

impl RunSummary {
    pub fn from_mlmc(state: &MlmcState, config: &RunConfig) -> Self {
        Self {
            estimator: "mlmc".into(),
            variant: state.variant,
            conditional: config.conditional,
            eps: state.eps,
            estimate: state.estimate,
            estimator_variance: state.estimator_variance,
            finest_level: state.finest_level,
            rates: state.rates,
            alpha_used: Some(state.alpha_used),
            bias_estimate: Some(state.bias_estimate),
            standardized_cost: state.standardized_cost,
            wall_seconds: state.wall_seconds,
            converged: state.converged(),
            seed: config.seed,
            levels: state.levels.iter().map(LevelRow::from).collect(),
            config: config.clone(),
        }
    }
}

/// Write `levels.csv` and `summary.json` into `dir`.
pub fn write_results(dir: &Path, levels: &[LevelStats], summary: &RunSummary) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("levels.csv");
    write_level_csv(levels, fs::File::create(&csv_path)?)?;
    let json_path = dir.join("summary.json");
    let mut f = fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut f, summary)?;
    f.write_all(b"\n")?;
    Ok((csv_path, json_path))
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Write a cell field as `x,y,value` rows.
pub fn write_field_csv<W: Write>(points: &[Point], values: &[f64], header: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", header])?;
    for (p, v) in points.iter().zip(values) {
        w.write_record([full(p.x), full(p.y), full(*v)])?;
    }
    w.flush()?;
    Ok(())
}
