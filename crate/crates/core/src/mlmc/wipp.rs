//! The groundwater travel-time model as a [`LevelSampler`]: circulant
//! field draw on the level's sampling lattice, optional kriging conditioning
//! on borehole data, fine and coarse flow solves on the same draw, and
//! particle tracking on each.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{LevelSampler, Outcome, PairParts, SampleKind, Variant};
use crate::conditioning::{antithetic, build_operator, condition, ConditionalSample, ConditioningOperator};
use crate::covariance::{assemble_obs_blocks, CovarianceParams};
use crate::error::{Error, Result};
use crate::fieldgen::{build_spectrum, sampling_lattice, CirculantSpectrum, FieldSampler, RealizationStream, ViewMap};
use crate::flow::{assemble, solve, BoundaryHead, FaceAveraging, HeadSolution, SolverOptions};
use crate::grid::{build_level_grid, max_level_for, snap_observations_auto, AuxLattice, DomainSpec, LevelGrid, ObservationSet};
use crate::iodata::{bundled_boreholes, resolve_boreholes, RunConfig};
use crate::stream::StreamId;
use crate::transport::{quantity_of_interest, track, TransportParams, TravelTimeResult};

/// Everything that defines the model apart from the random draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSetup {
    pub domain: DomainSpec,
    pub covariance: CovarianceParams,
    pub boundary: BoundaryHead,
    pub transport: TransportParams,
    pub averaging: FaceAveraging,
    pub solver: SolverOptions,
    /// Cells per direction on level 0.
    pub n0: usize,
    pub max_level: usize,
    /// Snapped borehole data; empty for unconditional runs.
    pub observations: ObservationSet,
}

impl ModelSetup {
    /// WIPP defaults with the bundled borehole data when `conditional`.
    pub fn wipp(n0: usize, max_level: usize, conditional: bool) -> Result<Self> {
        let domain = DomainSpec::wipp();
        let observations = if conditional {
            snap_observations_auto(&ObservationSet::new(bundled_boreholes()), &domain, n0)?
        } else {
            ObservationSet::empty()
        };
        Ok(Self {
            domain,
            covariance: CovarianceParams::WIPP,
            boundary: BoundaryHead::WIPP,
            transport: TransportParams::WIPP,
            averaging: FaceAveraging::Harmonic,
            solver: SolverOptions::default(),
            n0,
            max_level,
            observations,
        })
    }

    /// Model described by a run configuration; the borehole file is
    /// resolved only for conditional runs.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let domain = cfg.domain();
        let observations = if cfg.conditional {
            let recs = resolve_boreholes(cfg.boreholes.as_deref(), &domain)?;
            snap_observations_auto(&ObservationSet::new(recs), &domain, cfg.n0)?
        } else {
            ObservationSet::empty()
        };
        let setup = Self {
            domain,
            covariance: cfg.covariance(),
            boundary: cfg.boundary(),
            transport: cfg.transport(),
            averaging: cfg.face_averaging,
            solver: cfg.solver(),
            n0: cfg.n0,
            max_level: cfg.max_level,
            observations,
        };
        setup.validate()?;
        Ok(setup)
    }

    pub fn conditional(&self) -> bool {
        !self.observations.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.covariance.validate()?;
        self.boundary.validate()?;
        self.transport.validate()?;
        if self.n0 < 2 {
            return Err(Error::invalid("n0", "coarsest grid needs at least 2 cells per direction"));
        }
        if !self.observations.is_empty() && self.observations.snapping.is_none() {
            return Err(Error::invalid("observations", "must be snapped to a lattice"));
        }
        Ok(())
    }

    pub fn grid(&self, level: usize) -> Result<LevelGrid> {
        build_level_grid(&self.domain, level, self.n0)
    }

    /// Head solution and particle track for one log10-transmissivity field.
    pub fn evaluate(&self, grid: &LevelGrid, log10_t: &[f64], record_path: bool) -> Result<(HeadSolution, TravelTimeResult)> {
        let sys = assemble(grid, log10_t, &self.boundary, self.averaging)?;
        let sol = solve(&sys, &self.solver)?;
        let tr = track(&sol.fluxes, self.domain.release, Some(self.domain.inner()), &self.transport, record_path);
        Ok((sol, tr))
    }

    /// Kriging mean and variance of log10 T at the cell centers of `level`;
    /// the prior moments for an unconditional setup.
    pub fn kriging_map(&self, level: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let grid = self.grid(level)?;
        let centers = grid.cell_centers();
        let p = self.covariance;
        let Some(sn) = self.observations.snapping.as_ref().filter(|_| self.conditional()) else {
            return Ok((vec![p.mean; centers.len()], vec![p.variance; centers.len()]));
        };
        let lattice = sampling_lattice(&grid, &self.observations)?;
        let map = ViewMap::new(&lattice, &grid, &self.observations)?;
        let blocks = assemble_obs_blocks(&centers, &sn.points(), &p);
        let exact: Vec<Option<usize>> = map.fine.iter().map(|i| map.obs.iter().position(|o| o == i)).collect();
        let op = build_operator(&blocks, &self.observations.values(), &p, &exact)?;
        Ok((op.conditional_mean().to_vec(), op.conditional_variance(&blocks.r12, p.variance)))
    }

    /// `Q = log10 t` for one field.
    pub fn quantity(&self, grid: &LevelGrid, log10_t: &[f64]) -> Result<f64> {
        let (_, tr) = self.evaluate(grid, log10_t, false)?;
        quantity_of_interest(&tr)
    }
}

/// Precomputed per-level data shared by all samples of the level.
#[derive(Debug)]
pub struct LevelResources {
    pub fine: LevelGrid,
    pub coarse: Option<LevelGrid>,
    pub lattice: AuxLattice,
    pub sampler: FieldSampler,
    pub map: ViewMap,
    pub operator: ConditioningOperator,
}

#[derive(Default)]
struct Cache {
    levels: HashMap<usize, Arc<LevelResources>>,
    spectra: HashMap<usize, Arc<CirculantSpectrum>>,
}

pub struct WippSampler {
    setup: ModelSetup,
    cache: Mutex<Cache>,
}

impl WippSampler {
    pub fn new(setup: ModelSetup) -> Result<Self> {
        setup.validate()?;
        Ok(Self {
            setup,
            cache: Mutex::new(Cache::default()),
        })
    }

    pub fn setup(&self) -> &ModelSetup {
        &self.setup
    }

    /// Level data, built on first use. Levels sharing a sampling lattice
    /// share its circulant spectrum; small levels use a dense factor.
    pub fn resources(&self, level: usize) -> Result<Arc<LevelResources>> {
        let mut cache = self.cache.lock().expect("resource cache poisoned");
        if let Some(r) = cache.levels.get(&level) {
            return Ok(r.clone());
        }
        if level > self.max_level() {
            return Err(Error::LevelOverflow {
                level,
                max: self.max_level(),
            });
        }
        let s = &self.setup;
        let fine = s.grid(level)?;
        let coarse = if level > 0 { Some(s.grid(level - 1)?) } else { None };
        let lattice = sampling_lattice(&fine, &s.observations)?;
        let map = ViewMap::new(&lattice, &fine, &s.observations)?;
        let spectra = &mut cache.spectra;
        let sampler = FieldSampler::choose(&lattice, &map, &s.covariance, || {
            if let Some(sp) = spectra.get(&lattice.divisions) {
                return Ok(sp.clone());
            }
            let sp = Arc::new(build_spectrum(&lattice, &s.covariance)?);
            log::info!(
                "spectrum for {} divisions: {}x{} embedding, {} padding rounds",
                lattice.divisions,
                sp.mx,
                sp.my,
                sp.padding_rounds
            );
            spectra.insert(lattice.divisions, sp.clone());
            Ok(sp)
        })?;
        let operator = if s.conditional() {
            ConditioningOperator::for_level(&lattice, &map, &s.observations.values(), &s.covariance)?
        } else {
            ConditioningOperator::unconditional(&map, s.covariance.mean)
        };
        let res = Arc::new(LevelResources {
            fine,
            coarse,
            lattice,
            sampler,
            map,
            operator,
        });
        cache.levels.insert(level, res.clone());
        Ok(res)
    }

    /// The (conditioned) realizations of one random block on `level`.
    pub fn realizations(&self, level: usize, block: StreamId, seed: u64) -> Result<Vec<ConditionalSample>> {
        let res = self.resources(level)?;
        let mut stream = RealizationStream::new(block.rng(seed), block);
        (0..self.block_size())
            .map(|_| {
                let f = res.sampler.sample(&res.map, self.setup.covariance.mean, &mut stream)?;
                condition(&f, &res.operator)
            })
            .collect()
    }

    fn pair_values(&self, res: &LevelResources, kind: SampleKind, c: &ConditionalSample) -> Result<(f64, f64)> {
        let q = self.setup.quantity(&res.fine, c.fine())?;
        let y = match (kind, &res.coarse, c.coarse()) {
            (SampleKind::Coupled(_), Some(g), Some(z)) => q - self.setup.quantity(g, z)?,
            _ => q,
        };
        Ok((y, q))
    }

    fn outcome(&self, res: &LevelResources, kind: SampleKind, c: &ConditionalSample) -> Result<Outcome> {
        let (y, q) = self.pair_values(res, kind, c)?;
        Ok(match kind.variant() {
            Variant::Plain => Outcome { y, q, parts: None },
            Variant::Antithetic => {
                let (ya, qa) = self.pair_values(res, kind, &antithetic(c, &res.operator))?;
                Outcome {
                    y: (y + ya) / 2.0,
                    q: (q + qa) / 2.0,
                    parts: Some(PairParts { y: [y, ya], q: [q, qa] }),
                }
            }
        })
    }
}

impl LevelSampler for WippSampler {
    fn max_level(&self) -> usize {
        self.setup.max_level.min(max_level_for(self.setup.n0))
    }

    fn cells(&self, level: usize) -> f64 {
        let n = (self.setup.n0 << level) as f64;
        n * n
    }

    /// Each complex circulant draw yields two independent realizations.
    fn block_size(&self) -> usize {
        2
    }

    fn prepare(&self, level: usize) -> Result<()> {
        self.resources(level).map(|_| ())
    }

    fn sample_block(&self, level: usize, kind: SampleKind, block: StreamId, seed: u64) -> Vec<Result<Outcome>> {
        let res = match self.resources(level) {
            Ok(r) => r,
            Err(e) => return vec![Err(e)],
        };
        match self.realizations(level, block, seed) {
            Ok(cs) => cs.iter().map(|c| self.outcome(&res, kind, c)).collect(),
            Err(e) => vec![Err(e)],
        }
    }
}
