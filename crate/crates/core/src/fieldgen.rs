//! Exact sampling of the stationary log10-transmissivity field by circulant
//! embedding.
//!
//! The lattice covariance is embedded in a periodic (block-circulant) matrix
//! whose eigenvalues are the 2-D DFT of its first row. A complex Gaussian
//! vector scaled by the square-rooted spectrum and transformed once yields
//! two independent real realizations with exactly the kernel covariance on
//! the lattice.
//!
//! Lags beyond the lattice extent are free in the embedding. They are
//! multiplied by a smooth window that falls to zero at half the period,
//! which leaves every lattice covariance untouched and lets a single
//! doubling of the period suffice for the correlation lengths of interest.
//!
//! Levels that read only a few hundred lattice nodes are instead drawn from
//! the Cholesky factor of the covariance of exactly those nodes; the law is
//! the same and a draw costs far less than a transform over the embedding.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::covariance::{dense_covariance, CovarianceParams};
use crate::error::{Error, Result};
use crate::grid::{AuxLattice, LevelGrid, ObservationSet, Point};
use crate::stream::StreamId;

/// Relative threshold below which negative eigenvalues count as round-off.
pub const EIGEN_TOL: f64 = 1e-12;
/// Maximum number of period doublings before giving up.
pub const MAX_PADDING_ROUNDS: usize = 4;
/// Largest number of distinct nodes a level may read and still be drawn
/// through a dense Cholesky factor.
pub const DENSE_VIEW_MAX: usize = 1500;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingOptions {
    /// Taper lags beyond the lattice extent.
    pub taper: bool,
    pub max_rounds: usize,
}

impl Default for EmbeddingOptions {
    fn default() -> Self {
        Self {
            taper: true,
            max_rounds: MAX_PADDING_ROUNDS,
        }
    }
}

/// Square-rooted spectrum of a non-negative definite circulant embedding
/// of the lattice covariance, plus the FFT plans to sample with it.
#[derive(Clone)]
pub struct CirculantSpectrum {
    pub nodes_x: usize,
    pub nodes_y: usize,
    pub mx: usize,
    pub my: usize,
    pub padding_rounds: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// `sqrt(max(λ_k, 0) / (mx·my))`, x fastest.
    scale: Vec<f64>,
    fft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantSpectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantSpectrum")
            .field("nodes", &(self.nodes_x, self.nodes_y))
            .field("embedding", &(self.mx, self.my))
            .field("padding_rounds", &self.padding_rounds)
            .field("min_eigenvalue", &self.min_eigenvalue)
            .field("max_eigenvalue", &self.max_eigenvalue)
            .finish()
    }
}

/// Smallest `2^a·3^b ≥ n`.
fn fast_size(n: usize) -> usize {
    let mut best = usize::MAX;
    let mut p3 = 1usize;
    while p3 < 2 * n.max(1) {
        let mut v = p3;
        while v < n {
            v *= 2;
        }
        best = best.min(v);
        p3 *= 3;
    }
    best
}

/// C∞ step falling from 1 at `t ≤ 0` to 0 at `t ≥ 1`.
fn smooth_window(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let f = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
    let a = f(1.0 - t);
    a / (a + f(t))
}

fn lag_weights(m: usize, nodes: usize, taper: bool) -> Vec<f64> {
    let last = nodes.saturating_sub(1) as f64;
    let half = (m / 2) as f64;
    (0..m)
        .map(|i| {
            let lag = i.min(m - i) as f64;
            if !taper || lag <= last {
                1.0
            } else {
                smooth_window((lag - last) / (half - last))
            }
        })
        .collect()
}

fn fft2_inplace(buf: &mut [Complex<f64>], mx: usize, my: usize, fx: &dyn Fft<f64>, fy: &dyn Fft<f64>) {
    fx.process(buf);
    let mut col = vec![Complex::new(0.0, 0.0); mx * my];
    for j in 0..my {
        for i in 0..mx {
            col[i * my + j] = buf[i + j * mx];
        }
    }
    fy.process(&mut col);
    for j in 0..my {
        for i in 0..mx {
            buf[i + j * mx] = col[i * my + j];
        }
    }
}

/// Eigenvalues of the `mx × my` periodic embedding, x fastest.
#[allow(clippy::too_many_arguments)]
fn embedded_eigenvalues(
    nodes_x: usize,
    nodes_y: usize,
    dx: f64,
    dy: f64,
    p: &CovarianceParams,
    mx: usize,
    my: usize,
    taper: bool,
    fx: &dyn Fft<f64>,
    fy: &dyn Fft<f64>,
) -> Vec<f64> {
    let wx = lag_weights(mx, nodes_x, taper);
    let wy = lag_weights(my, nodes_y, taper);
    let mut buf = vec![Complex::new(0.0, 0.0); mx * my];
    for j in 0..my {
        let ly = j.min(my - j) as f64 * dy;
        for i in 0..mx {
            let lx = i.min(mx - i) as f64 * dx;
            buf[i + j * mx] = Complex::new(p.at_distance(lx.hypot(ly)) * wx[i] * wy[j], 0.0);
        }
    }
    fft2_inplace(&mut buf, mx, my, fx, fy);
    buf.into_iter().map(|c| c.re).collect()
}

/// Smallest and largest eigenvalue of an explicit `mx × my` embedding.
pub fn embedding_extremes(nodes_x: usize, nodes_y: usize, dx: f64, dy: f64, p: &CovarianceParams, mx: usize, my: usize, taper: bool) -> (f64, f64) {
    let mut planner = FftPlanner::new();
    let fx = planner.plan_fft_forward(mx);
    let fy = planner.plan_fft_forward(my);
    let e = embedded_eigenvalues(nodes_x, nodes_y, dx, dy, p, mx, my, taper, fx.as_ref(), fy.as_ref());
    (e.iter().copied().fold(f64::INFINITY, f64::min), e.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Spectrum of the circulant extension of the kernel on `lattice`.
pub fn build_spectrum(lattice: &AuxLattice, p: &CovarianceParams) -> Result<CirculantSpectrum> {
    build_spectrum_with(lattice.nodes_per_dir(), lattice.nodes_per_dir(), lattice.dx, lattice.dy, p, EmbeddingOptions::default())
}

pub fn build_spectrum_with(
    nodes_x: usize,
    nodes_y: usize,
    dx: f64,
    dy: f64,
    p: &CovarianceParams,
    opts: EmbeddingOptions,
) -> Result<CirculantSpectrum> {
    if nodes_x == 0 || nodes_y == 0 {
        return Err(Error::invalid("lattice", "needs at least one node per direction"));
    }
    p.validate()?;
    // A single node needs no periodic extension in that direction.
    let initial = |n: usize| if n == 1 { 1 } else { fast_size(2 * n) };
    let mut mx = initial(nodes_x);
    let mut my = initial(nodes_y);
    let mut planner = FftPlanner::new();
    let mut rounds = 0;
    loop {
        let fx = planner.plan_fft_forward(mx);
        let fy = planner.plan_fft_forward(my);
        let buf = embedded_eigenvalues(nodes_x, nodes_y, dx, dy, p, mx, my, opts.taper, fx.as_ref(), fy.as_ref());
        let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = buf.iter().copied().fold(f64::INFINITY, f64::min);
        if min >= -EIGEN_TOL * max {
            let norm = (mx * my) as f64;
            let scale = buf.iter().map(|e| (e.max(0.0) / norm).sqrt()).collect();
            log::debug!("circulant embedding {mx}x{my} after {rounds} doublings, min/max eigenvalue {:e}", min / max);
            return Ok(CirculantSpectrum {
                nodes_x,
                nodes_y,
                mx,
                my,
                padding_rounds: rounds,
                min_eigenvalue: min,
                max_eigenvalue: max,
                scale,
                fft_x: fx,
                fft_y: fy,
            });
        }
        if rounds == opts.max_rounds {
            return Err(Error::EmbeddingNotPd {
                rounds,
                min_eigenvalue: min,
                max_eigenvalue: max,
            });
        }
        rounds += 1;
        if nodes_x > 1 {
            mx *= 2;
        }
        if nodes_y > 1 {
            my *= 2;
        }
    }
}

impl CirculantSpectrum {
    pub fn lattice_len(&self) -> usize {
        self.nodes_x * self.nodes_y
    }

    /// Eigenvalues of the embedding after clamping, x fastest.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let norm = (self.mx * self.my) as f64;
        self.scale.iter().map(|s| s * s * norm).collect()
    }

    /// Covariance between lattice node `(0, 0)` and node `(i, j)` implied by
    /// the clamped spectrum (inverse transform of the eigenvalues).
    pub fn implied_covariance_row(&self) -> Vec<f64> {
        let (mx, my) = (self.mx, self.my);
        let norm = (mx * my) as f64;
        let mut buf: Vec<Complex<f64>> = self.eigenvalues().into_iter().map(|e| Complex::new(e, 0.0)).collect();
        let mut planner = FftPlanner::new();
        let ix = planner.plan_fft_inverse(mx);
        let iy = planner.plan_fft_inverse(my);
        fft2_inplace(&mut buf, mx, my, ix.as_ref(), iy.as_ref());
        let mut out = Vec::with_capacity(self.lattice_len());
        for j in 0..self.nodes_y {
            for i in 0..self.nodes_x {
                out.push(buf[i + j * mx].re / norm);
            }
        }
        out
    }

    /// One complex draw: two independent zero-mean realizations on the
    /// lattice, x fastest.
    pub fn draw_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let (mx, my, nx, ny) = (self.mx, self.my, self.nodes_x, self.nodes_y);
        let mut buf: Vec<Complex<f64>> = self
            .scale
            .iter()
            .map(|&s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex::new(s * re, s * im)
            })
            .collect();
        self.fft_x.process(&mut buf);
        // Only the first `nx` columns and `ny` rows of the output are kept.
        let mut cols = vec![Complex::new(0.0, 0.0); nx * my];
        for j in 0..my {
            let row = &buf[j * mx..j * mx + nx];
            for (i, v) in row.iter().enumerate() {
                cols[i * my + j] = *v;
            }
        }
        drop(buf);
        self.fft_y.process(&mut cols);
        let mut a = vec![0.0; nx * ny];
        let mut b = vec![0.0; nx * ny];
        for i in 0..nx {
            let col = &cols[i * my..i * my + ny];
            for (j, v) in col.iter().enumerate() {
                a[i + j * nx] = v.re;
                b[i + j * nx] = v.im;
            }
        }
        (a, b)
    }
}

/// A random stream that hands out the two real realizations of each complex
/// draw in turn.
pub struct RealizationStream<R> {
    rng: R,
    id: StreamId,
    queued: Option<Vec<f64>>,
    served: usize,
}

impl<R: Rng> RealizationStream<R> {
    pub fn new(rng: R, id: StreamId) -> Self {
        Self {
            rng,
            id,
            queued: None,
            served: 0,
        }
    }

    /// Next zero-mean realization of the nodes of a dense view sampler.
    pub fn next_dense(&mut self, sampler: &DenseViewSampler) -> Vec<f64> {
        self.served += 1;
        sampler.draw_zero_mean(&mut self.rng)
    }

    /// Next zero-mean lattice realization.
    pub fn next_zero_mean(&mut self, spectrum: &CirculantSpectrum) -> Vec<f64> {
        self.served += 1;
        if let Some(q) = self.queued.take() {
            return q;
        }
        let (a, b) = spectrum.draw_pair(&mut self.rng);
        self.queued = Some(b);
        a
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    pub fn served(&self) -> usize {
        self.served
    }
}

/// Lattice storage indices of the fine cell centres, coarse cell centres
/// and snapped observations for one level.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewMap {
    pub lattice_len: usize,
    pub fine: Vec<usize>,
    pub coarse: Option<Vec<usize>>,
    pub obs: Vec<usize>,
}

/// Coarsest lattice containing the level's own auxiliary lattice and the
/// snapped observations.
pub fn sampling_lattice(grid: &LevelGrid, obs: &ObservationSet) -> Result<AuxLattice> {
    let Some(snap) = &obs.snapping else {
        return Ok(grid.aux.clone());
    };
    if grid.aux.nests_in(&snap.lattice) {
        Ok(snap.lattice.clone())
    } else if snap.lattice.nests_in(&grid.aux) {
        Ok(grid.aux.clone())
    } else {
        Err(Error::invalid(
            "observation lattice",
            format!(
                "{} divisions do not nest with level lattice of {} divisions",
                snap.lattice.divisions, grid.aux.divisions
            ),
        ))
    }
}

impl ViewMap {
    pub fn new(lattice: &AuxLattice, grid: &LevelGrid, obs: &ObservationSet) -> Result<Self> {
        if !grid.aux.nests_in(lattice) {
            return Err(Error::invalid("lattice", "level lattice does not nest in sampling lattice"));
        }
        let n = grid.n;
        let mut fine = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let (k, l) = grid.fine_center_node(i, j);
                let (k, l) = grid.aux.map_to(lattice, k, l);
                fine.push(lattice.index(k, l));
            }
        }
        let coarse = grid.coarse_n().map(|nc| {
            let mut v = Vec::with_capacity(nc * nc);
            for j in 0..nc {
                for i in 0..nc {
                    let (k, l) = grid.coarse_center_node(i, j);
                    let (k, l) = grid.aux.map_to(lattice, k, l);
                    v.push(lattice.index(k, l));
                }
            }
            v
        });
        let obs = match &obs.snapping {
            None if obs.is_empty() => Vec::new(),
            None => return Err(Error::invalid("observations", "must be snapped before sampling")),
            Some(s) => s
                .nodes_on(lattice)
                .ok_or_else(|| Error::invalid("observations", "snap lattice does not nest in sampling lattice"))?
                .into_iter()
                .map(|(k, l)| lattice.index(k, l))
                .collect(),
        };
        Ok(Self {
            lattice_len: lattice.len(),
            fine,
            coarse,
            obs,
        })
    }
}

/// Exact sampler over just the distinct lattice nodes a level reads.
#[derive(Clone, Debug)]
pub struct DenseViewSampler {
    factor: DMatrix<f64>,
    /// The level's views re-indexed into the compact node list.
    compact: ViewMap,
}

impl DenseViewSampler {
    pub fn new(lattice: &AuxLattice, map: &ViewMap, p: &CovarianceParams) -> Result<Self> {
        let mut nodes: Vec<usize> = map.fine.iter().chain(map.coarse.iter().flatten()).chain(&map.obs).copied().collect();
        nodes.sort_unstable();
        nodes.dedup();
        let side = lattice.nodes_per_dir();
        let points: Vec<Point> = nodes.iter().map(|&k| lattice.node(k % side + 1, k / side + 1)).collect();
        let cov = dense_covariance(&points, p)?;
        let factor = cov
            .cholesky()
            .ok_or_else(|| Error::invalid("view covariance", "not numerically positive definite"))?
            .l();
        let remap = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|i| nodes.binary_search(i).expect("node collected above")).collect() };
        let compact = ViewMap {
            lattice_len: nodes.len(),
            fine: remap(&map.fine),
            coarse: map.coarse.as_deref().map(remap),
            obs: remap(&map.obs),
        };
        Ok(Self { factor, compact })
    }

    pub fn nodes(&self) -> usize {
        self.compact.lattice_len
    }

    fn draw_zero_mean<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.nodes(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.factor * z).data.into()
    }
}

/// How a level's unconditional realizations are drawn.
#[derive(Clone, Debug)]
pub enum FieldSampler {
    Circulant(Arc<CirculantSpectrum>),
    Dense(Arc<DenseViewSampler>),
}

impl FieldSampler {
    /// Dense factorization when the level reads at most
    /// [`DENSE_VIEW_MAX`] distinct nodes, else the given spectrum.
    pub fn choose(
        lattice: &AuxLattice,
        map: &ViewMap,
        p: &CovarianceParams,
        spectrum: impl FnOnce() -> Result<Arc<CirculantSpectrum>>,
    ) -> Result<Self> {
        let distinct = map.fine.len() + map.coarse.as_ref().map_or(0, Vec::len) + map.obs.len();
        if distinct <= DENSE_VIEW_MAX {
            if let Ok(d) = DenseViewSampler::new(lattice, map, p) {
                return Ok(Self::Dense(Arc::new(d)));
            }
        }
        spectrum().map(Self::Circulant)
    }

    /// One unconditional sample of the level's views, mean included.
    pub fn sample<R: Rng>(&self, map: &ViewMap, mean: f64, stream: &mut RealizationStream<R>) -> Result<FieldSample> {
        match self {
            Self::Circulant(sp) => sample_unconditional(sp, map, mean, stream),
            Self::Dense(d) => {
                let part = stream.served();
                let mut values = stream.next_dense(d);
                values.iter_mut().for_each(|v| *v += mean);
                let mut s = extract_views(&values, &d.compact)?;
                s.source = Some((stream.id(), part));
                Ok(s)
            }
        }
    }
}

/// One realization restricted to the fine centres, coarse centres and
/// observation nodes of a level.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub fine: Vec<f64>,
    pub coarse: Option<Vec<f64>>,
    pub obs: Vec<f64>,
    /// Stream and position within it. For circulant draws the position is
    /// the part of the complex draw (0 = real, 1 = imaginary); for dense
    /// draws it counts draws from the stream.
    pub source: Option<(StreamId, usize)>,
}

pub fn extract_views(values: &[f64], map: &ViewMap) -> Result<FieldSample> {
    if values.len() != map.lattice_len {
        return Err(Error::DimensionMismatch {
            context: "extract_views",
            expected: map.lattice_len,
            actual: values.len(),
        });
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| values[i]).collect::<Vec<_>>();
    Ok(FieldSample {
        fine: pick(&map.fine),
        coarse: map.coarse.as_deref().map(pick),
        obs: pick(&map.obs),
        source: None,
    })
}

/// Draw the next unconditional realization (mean included) from `stream`.
pub fn sample_unconditional<R: Rng>(
    spectrum: &CirculantSpectrum,
    map: &ViewMap,
    mean: f64,
    stream: &mut RealizationStream<R>,
) -> Result<FieldSample> {
    if spectrum.lattice_len() != map.lattice_len {
        return Err(Error::DimensionMismatch {
            context: "sample_unconditional",
            expected: map.lattice_len,
            actual: spectrum.lattice_len(),
        });
    }
    let part = stream.served() % 2;
    let mut values = stream.next_zero_mean(spectrum);
    values.iter_mut().for_each(|v| *v += mean);
    let mut s = extract_views(&values, map)?;
    s.source = Some((stream.id(), part));
    Ok(s)
}
