//! Cell-centred finite-volume discretization of `∇·(T ∇u) = 0` with
//! Dirichlet head on the whole outer boundary, its solution, and two-point
//! face fluxes.

mod multigrid;

use serde::{Deserialize, Serialize};

pub use multigrid::{Multigrid, SolveStats};

use crate::error::{Error, Result};
use crate::grid::{LevelGrid, Point};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 500;

/// Gaussian head surface `a0·exp(−((x−x0)²/a1² + (y−y0)²/a2²)/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryHead {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub x0: f64,
    pub y0: f64,
}

impl BoundaryHead {
    pub const WIPP: BoundaryHead = BoundaryHead {
        a0: 1134.61,
        a1: 73_559.35,
        a2: 73_559.35,
        x0: 611_011.89,
        y0: 3_580_891.50,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.a1 > 0.0 && self.a2 > 0.0) {
            return Err(Error::invalid("a1", "head surface widths must be positive"));
        }
        if ![self.a0, self.x0, self.y0].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("a0", "head surface parameters must be finite"));
        }
        Ok(())
    }
}

impl Default for BoundaryHead {
    fn default() -> Self {
        Self::WIPP
    }
}

/// Prescribed head on the outer boundary.
pub trait DirichletData {
    fn head(&self, p: Point) -> f64;
}

impl DirichletData for BoundaryHead {
    fn head(&self, p: Point) -> f64 {
        let u = (p.x - self.x0) / self.a1;
        let v = (p.y - self.y0) / self.a2;
        self.a0 * (-(u * u + v * v) / 2.0).exp()
    }
}

impl<F: Fn(Point) -> f64> DirichletData for F {
    fn head(&self, p: Point) -> f64 {
        self(p)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceAveraging {
    #[default]
    Harmonic,
    Geometric,
}

impl FaceAveraging {
    fn average(self, a: f64, b: f64) -> f64 {
        match self {
            FaceAveraging::Harmonic => 2.0 * a * b / (a + b),
            FaceAveraging::Geometric => (a * b).sqrt(),
        }
    }
}

/// The assembled 5-point system. Face coefficients are transmissibilities
/// `T_face · face_length / distance`, with half-cell distance on the
/// boundary.
#[derive(Clone, Debug)]
pub struct FlowSystem {
    pub n: usize,
    pub hx: f64,
    pub hy: f64,
    pub x_min: f64,
    pub y_min: f64,
    /// Cell transmissivity `T = 10^z`.
    pub transmissivity: Vec<f64>,
    /// x-normal faces, `(n + 1) × n`, index `i + j (n + 1)`.
    pub tx: Vec<f64>,
    /// y-normal faces, `n × (n + 1)`, index `i + j n`.
    pub ty: Vec<f64>,
    pub head_west: Vec<f64>,
    pub head_east: Vec<f64>,
    pub head_south: Vec<f64>,
    pub head_north: Vec<f64>,
    /// Volumetric source per cell (already multiplied by the cell area).
    pub source: Vec<f64>,
}

impl FlowSystem {
    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                d[i + j * n] = self.tx[i + j * (n + 1)]
                    + self.tx[i + 1 + j * (n + 1)]
                    + self.ty[i + j * n]
                    + self.ty[i + (j + 1) * n];
            }
        }
        d
    }

    /// Right-hand side for heads shifted by `-shift`.
    pub fn rhs(&self, shift: f64) -> Vec<f64> {
        let n = self.n;
        let mut b = self.source.clone();
        for j in 0..n {
            b[j * n] += self.tx[j * (n + 1)] * (self.head_west[j] - shift);
            b[n - 1 + j * n] += self.tx[n + j * (n + 1)] * (self.head_east[j] - shift);
        }
        for i in 0..n {
            b[i] += self.ty[i] * (self.head_south[i] - shift);
            b[i + (n - 1) * n] += self.ty[i + n * n] * (self.head_north[i] - shift);
        }
        b
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            for i in 0..n {
                let c = i + j * n;
                let w = self.tx[i + j * (n + 1)];
                let e = self.tx[i + 1 + j * (n + 1)];
                let s = self.ty[i + j * n];
                let nn = self.ty[i + (j + 1) * n];
                let mut v = (w + e + s + nn) * x[c];
                if i > 0 {
                    v -= w * x[c - 1];
                }
                if i + 1 < n {
                    v -= e * x[c + 1];
                }
                if j > 0 {
                    v -= s * x[c - n];
                }
                if j + 1 < n {
                    v -= nn * x[c + n];
                }
                y[c] = v;
            }
        }
    }

    /// Dense copy of the matrix, for tests on small grids.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let m = self.cells();
        let mut a = nalgebra::DMatrix::zeros(m, m);
        let mut e = vec![0.0; m];
        let mut col = vec![0.0; m];
        for k in 0..m {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[k] = 1.0;
            self.apply(&e, &mut col);
            for (r, v) in col.iter().enumerate() {
                a[(r, k)] = *v;
            }
        }
        a
    }

    fn boundary_range(&self) -> (f64, f64) {
        self.head_west
            .iter()
            .chain(&self.head_east)
            .chain(&self.head_south)
            .chain(&self.head_north)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Assemble the 5-point system for log10 transmissivities `log10_t` on the
/// fine cells of `grid`.
pub fn assemble(grid: &LevelGrid, log10_t: &[f64], bc: &dyn DirichletData, averaging: FaceAveraging) -> Result<FlowSystem> {
    assemble_with_source(grid, log10_t, bc, averaging, None)
}

/// As [`assemble`], with an optional source density `f(x)` integrated by the
/// midpoint rule.
pub fn assemble_with_source(
    grid: &LevelGrid,
    log10_t: &[f64],
    bc: &dyn DirichletData,
    averaging: FaceAveraging,
    source: Option<&dyn Fn(Point) -> f64>,
) -> Result<FlowSystem> {
    let n = grid.n;
    if log10_t.len() != n * n {
        return Err(Error::DimensionMismatch {
            context: "assemble",
            expected: n * n,
            actual: log10_t.len(),
        });
    }
    let mut t = Vec::with_capacity(n * n);
    for (cell, &z) in log10_t.iter().enumerate() {
        let v = 10f64.powf(z);
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::NonFiniteTransmissivity { cell, log10_t: z });
        }
        t.push(v);
    }
    let (hx, hy) = (grid.hx, grid.hy);
    let mut tx = vec![0.0; (n + 1) * n];
    let mut ty = vec![0.0; n * (n + 1)];
    for j in 0..n {
        tx[j * (n + 1)] = t[j * n] * hy / (0.5 * hx);
        tx[n + j * (n + 1)] = t[n - 1 + j * n] * hy / (0.5 * hx);
        for i in 1..n {
            tx[i + j * (n + 1)] = averaging.average(t[i - 1 + j * n], t[i + j * n]) * hy / hx;
        }
    }
    for i in 0..n {
        ty[i] = t[i] * hx / (0.5 * hy);
        ty[i + n * n] = t[i + (n - 1) * n] * hx / (0.5 * hy);
        for j in 1..n {
            ty[i + j * n] = averaging.average(t[i + (j - 1) * n], t[i + j * n]) * hx / hy;
        }
    }
    let x_max = grid.x_min + n as f64 * hx;
    let y_max = grid.y_min + n as f64 * hy;
    let yc = |j: usize| grid.y_min + (j as f64 + 0.5) * hy;
    let xc = |i: usize| grid.x_min + (i as f64 + 0.5) * hx;
    let head_west = (0..n).map(|j| bc.head(Point::new(grid.x_min, yc(j)))).collect();
    let head_east = (0..n).map(|j| bc.head(Point::new(x_max, yc(j)))).collect();
    let head_south = (0..n).map(|i| bc.head(Point::new(xc(i), grid.y_min))).collect();
    let head_north = (0..n).map(|i| bc.head(Point::new(xc(i), y_max))).collect();
    let source = match source {
        Some(f) => grid.cell_centers().into_iter().map(|p| f(p) * hx * hy).collect(),
        None => vec![0.0; n * n],
    };
    Ok(FlowSystem {
        n,
        hx,
        hy,
        x_min: grid.x_min,
        y_min: grid.y_min,
        transmissivity: t,
        tx,
        ty,
        head_west,
        head_east,
        head_south,
        head_north,
        source,
    })
}

/// Per-unit-width Darcy fluxes `q·n` (m²/s) on every face, positive in the
/// +x / +y direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceFluxes {
    pub n: usize,
    pub hx: f64,
    pub hy: f64,
    pub x_min: f64,
    pub y_min: f64,
    /// `(n + 1) × n`, index `i + j (n + 1)`.
    pub qx: Vec<f64>,
    /// `n × (n + 1)`, index `i + j n`.
    pub qy: Vec<f64>,
}

impl FaceFluxes {
    pub fn qx(&self, i: usize, j: usize) -> f64 {
        self.qx[i + j * (self.n + 1)]
    }

    pub fn qy(&self, i: usize, j: usize) -> f64 {
        self.qy[i + j * self.n]
    }

    /// Net outflow (m³/s per metre of thickness... i.e. flux × face length)
    /// of every cell.
    pub fn cell_imbalance(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                out[i + j * n] = (self.qx(i + 1, j) - self.qx(i, j)) * self.hy + (self.qy(i, j + 1) - self.qy(i, j)) * self.hx;
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> FaceFluxes {
        FaceFluxes {
            qx: self.qx.iter().map(|q| q * factor).collect(),
            qy: self.qy.iter().map(|q| q * factor).collect(),
            ..self.clone()
        }
    }
}

/// Two-point fluxes consistent with the assembled transmissibilities.
pub fn face_fluxes(system: &FlowSystem, head: &[f64]) -> FaceFluxes {
    let n = system.n;
    let (hx, hy) = (system.hx, system.hy);
    let mut qx = vec![0.0; (n + 1) * n];
    let mut qy = vec![0.0; n * (n + 1)];
    for j in 0..n {
        let row = j * (n + 1);
        qx[row] = system.tx[row] * (system.head_west[j] - head[j * n]) / hy;
        qx[row + n] = system.tx[row + n] * (head[n - 1 + j * n] - system.head_east[j]) / hy;
        for i in 1..n {
            qx[row + i] = system.tx[row + i] * (head[i - 1 + j * n] - head[i + j * n]) / hy;
        }
    }
    for i in 0..n {
        qy[i] = system.ty[i] * (system.head_south[i] - head[i]) / hx;
        qy[i + n * n] = system.ty[i + n * n] * (head[i + (n - 1) * n] - system.head_north[i]) / hx;
        for j in 1..n {
            qy[i + j * n] = system.ty[i + j * n] * (head[i + (j - 1) * n] - head[i + j * n]) / hx;
        }
    }
    FaceFluxes {
        n,
        hx,
        hy,
        x_min: system.x_min,
        y_min: system.y_min,
        qx,
        qy,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadSolution {
    /// Hydraulic head per cell (m).
    pub head: Vec<f64>,
    pub fluxes: FaceFluxes,
    pub iterations: usize,
    /// Final relative residual `‖b − A u‖ / ‖b‖`.
    pub residual: f64,
}

/// Solve with multigrid-preconditioned conjugate gradients.
///
/// Heads are solved relative to the mean boundary head, which keeps the
/// right-hand side small compared with the head variations that drive the
/// flow.
pub fn solve(system: &FlowSystem, opts: &SolverOptions) -> Result<HeadSolution> {
    let (lo, hi) = system.boundary_range();
    let shift = if lo.is_finite() { 0.5 * (lo + hi) } else { 0.0 };
    let b = system.rhs(shift);
    let mg = Multigrid::new(system);
    let mut x = vec![0.0; system.cells()];
    let stats = mg.pcg(system, &b, &mut x, opts)?;
    x.iter_mut().for_each(|v| *v += shift);
    let fluxes = face_fluxes(system, &x);
    Ok(HeadSolution {
        head: x,
        fluxes,
        iterations: stats.iterations,
        residual: stats.relative_residual,
    })
}
