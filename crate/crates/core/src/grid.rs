//! Domain geometry, the nested level hierarchy and the half-spacing
//! auxiliary lattices that tie fine cells, coarse cells and boreholes to a
//! single sampling grid.
//!
//! Every lattice used here is described by its number of divisions `K` per
//! direction: node `(k, l)` sits at `(x_min + k·extent_x/K, y_min + l·extent_y/K)`
//! and only interior nodes `1 ≤ k, l ≤ K − 1` exist. Level `ℓ` with `N_ℓ`
//! cells per direction owns the lattice with `K = 2·N_ℓ`; fine cell centres
//! are its odd-index nodes and the centres of level `ℓ − 1` its nodes with
//! index `≡ 2 (mod 4)`. A lattice with `K_a` divisions nests in one with `K_b`
//! divisions whenever `K_a` divides `K_b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iodata::BoreholeRecord;

/// Grid refinement factor between consecutive levels.
pub const REFINEMENT: usize = 2;

/// Largest number of cells per direction any level may request.
pub const MAX_CELLS_PER_DIR: usize = 1 << 13;

/// Domain centre: midpoint of the bounding box of the 39 boreholes.
pub const WIPP_CENTER_X: f64 = 613_490.5;
pub const WIPP_CENTER_Y: f64 = 3_581_067.0;
pub const WIPP_EXTENT_X: f64 = 21_500.0;
pub const WIPP_EXTENT_Y: f64 = 30_500.0;
pub const WIPP_SITE_HALF_SIZE: f64 = 3_200.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn contains_strictly(&self, p: Point) -> bool {
        p.x > self.x_min && p.x < self.x_max && p.y > self.y_min && p.y < self.y_max
    }
}

/// The rectangular flow domain, the repository site rectangle inside it and
/// the particle release point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub center_x: f64,
    pub center_y: f64,
    pub extent_x: f64,
    pub extent_y: f64,
    pub inner_half_width: f64,
    pub inner_half_height: f64,
    pub release: Point,
}

impl DomainSpec {
    /// The Culebra model domain: 21.5 km × 30.5 km centred on the site, with
    /// a 6.4 km square site boundary and release at the centre.
    pub fn wipp() -> Self {
        Self {
            center_x: WIPP_CENTER_X,
            center_y: WIPP_CENTER_Y,
            extent_x: WIPP_EXTENT_X,
            extent_y: WIPP_EXTENT_Y,
            inner_half_width: WIPP_SITE_HALF_SIZE,
            inner_half_height: WIPP_SITE_HALF_SIZE,
            release: Point::new(WIPP_CENTER_X, WIPP_CENTER_Y),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.center_x,
            self.center_y,
            self.extent_x,
            self.extent_y,
            self.inner_half_width,
            self.inner_half_height,
            self.release.x,
            self.release.y,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("domain", "non-finite value"));
        }
        if self.extent_x <= 0.0 || self.extent_y <= 0.0 {
            return Err(Error::invalid("extent", "extents must be positive"));
        }
        if self.inner_half_width <= 0.0 || self.inner_half_height <= 0.0 {
            return Err(Error::invalid("inner_half_width", "site rectangle must be non-empty"));
        }
        if self.inner_half_width >= self.extent_x / 2.0 || self.inner_half_height >= self.extent_y / 2.0 {
            return Err(Error::invalid(
                "inner_half_width",
                "site rectangle must lie strictly inside the domain",
            ));
        }
        if !self.inner().contains_strictly(self.release) {
            return Err(Error::invalid(
                "release",
                "release point must lie strictly inside the site rectangle",
            ));
        }
        Ok(())
    }

    pub fn x_min(&self) -> f64 {
        self.center_x - self.extent_x / 2.0
    }

    pub fn y_min(&self) -> f64 {
        self.center_y - self.extent_y / 2.0
    }

    pub fn bounds(&self) -> Rect {
        Rect {
            x_min: self.x_min(),
            x_max: self.center_x + self.extent_x / 2.0,
            y_min: self.y_min(),
            y_max: self.center_y + self.extent_y / 2.0,
        }
    }

    /// The site boundary rectangle.
    pub fn inner(&self) -> Rect {
        Rect {
            x_min: self.center_x - self.inner_half_width,
            x_max: self.center_x + self.inner_half_width,
            y_min: self.center_y - self.inner_half_height,
            y_max: self.center_y + self.inner_half_height,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.bounds().contains(p)
    }
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self::wipp()
    }
}

/// Lattice of interior nodes at integer multiples of `(extent_x/K, extent_y/K)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxLattice {
    pub x_min: f64,
    pub y_min: f64,
    pub divisions: usize,
    pub dx: f64,
    pub dy: f64,
}

impl AuxLattice {
    pub fn new(domain: &DomainSpec, divisions: usize) -> Self {
        Self {
            x_min: domain.x_min(),
            y_min: domain.y_min(),
            divisions,
            dx: domain.extent_x / divisions as f64,
            dy: domain.extent_y / divisions as f64,
        }
    }

    /// Number of interior nodes per direction.
    pub fn nodes_per_dir(&self) -> usize {
        self.divisions - 1
    }

    pub fn len(&self) -> usize {
        self.nodes_per_dir() * self.nodes_per_dir()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, k: usize, l: usize) -> Point {
        Point::new(self.x_min + k as f64 * self.dx, self.y_min + l as f64 * self.dy)
    }

    /// Row-major storage index (x fastest) of node `(k, l)`.
    pub fn index(&self, k: usize, l: usize) -> usize {
        debug_assert!(k >= 1 && k < self.divisions && l >= 1 && l < self.divisions);
        (k - 1) + (l - 1) * self.nodes_per_dir()
    }

    pub fn points(&self) -> Vec<Point> {
        let n = self.nodes_per_dir();
        let mut out = Vec::with_capacity(n * n);
        for l in 1..self.divisions {
            for k in 1..self.divisions {
                out.push(self.node(k, l));
            }
        }
        out
    }

    /// Nearest interior node; ties go to the smaller index.
    pub fn nearest(&self, p: Point) -> (usize, usize) {
        let pick = |t: f64| -> usize {
            let k = (t - 0.5).ceil();
            k.clamp(1.0, (self.divisions - 1) as f64) as usize
        };
        (pick((p.x - self.x_min) / self.dx), pick((p.y - self.y_min) / self.dy))
    }

    /// Whether every node of `self` is also a node of `finer`.
    pub fn nests_in(&self, finer: &AuxLattice) -> bool {
        finer.divisions.is_multiple_of(self.divisions)
    }

    /// Index of node `(k, l)` of `self` expressed on a lattice it nests in.
    pub fn map_to(&self, finer: &AuxLattice, k: usize, l: usize) -> (usize, usize) {
        let f = finer.divisions / self.divisions;
        (k * f, l * f)
    }
}

/// Cell-centred grid for one level of the hierarchy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelGrid {
    pub level: usize,
    pub n: usize,
    pub hx: f64,
    pub hy: f64,
    pub x_min: f64,
    pub y_min: f64,
    pub aux: AuxLattice,
}

impl LevelGrid {
    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        i + j * self.n
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.x_min + (i as f64 + 0.5) * self.hx,
            self.y_min + (j as f64 + 0.5) * self.hy,
        )
    }

    pub fn cell_centers(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.cells());
        for j in 0..self.n {
            for i in 0..self.n {
                out.push(self.cell_center(i, j));
            }
        }
        out
    }

    /// Cell containing `p`; points on a shared face go to the upper cell.
    pub fn locate(&self, p: Point) -> (usize, usize) {
        let clamp = |t: f64| (t.floor().max(0.0) as usize).min(self.n - 1);
        (clamp((p.x - self.x_min) / self.hx), clamp((p.y - self.y_min) / self.hy))
    }

    /// Own-lattice index of the centre of fine cell `(i, j)`.
    pub fn fine_center_node(&self, i: usize, j: usize) -> (usize, usize) {
        (2 * i + 1, 2 * j + 1)
    }

    /// Own-lattice index of the centre of cell `(i, j)` on level `ℓ − 1`.
    pub fn coarse_center_node(&self, i: usize, j: usize) -> (usize, usize) {
        (4 * i + 2, 4 * j + 2)
    }

    pub fn coarse_n(&self) -> Option<usize> {
        (self.level > 0).then_some(self.n / REFINEMENT)
    }
}

/// Build the grid of `level` with `n0 · 2^level` cells per direction.
pub fn build_level_grid(domain: &DomainSpec, level: usize, n0: usize) -> Result<LevelGrid> {
    if n0 < 2 {
        return Err(Error::invalid("n0", "coarsest grid needs at least 2 cells per direction"));
    }
    let max_level = max_level_for(n0);
    if level > max_level {
        return Err(Error::LevelOverflow {
            level,
            max: max_level,
        });
    }
    let n = n0 << level;
    let hx = domain.extent_x / n as f64;
    let hy = domain.extent_y / n as f64;
    Ok(LevelGrid {
        level,
        n,
        hx,
        hy,
        x_min: domain.x_min(),
        y_min: domain.y_min(),
        aux: AuxLattice::new(domain, 2 * n),
    })
}

/// Deepest level whose grid stays within [`MAX_CELLS_PER_DIR`].
pub fn max_level_for(n0: usize) -> usize {
    let mut level = 0;
    while (n0 << (level + 1)) <= MAX_CELLS_PER_DIR {
        level += 1;
    }
    level
}

/// Snapped observation locations on a particular lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapping {
    pub lattice: AuxLattice,
    pub nodes: Vec<(usize, usize)>,
}

impl Snapping {
    /// Snapped node indices re-expressed on a lattice this one nests in.
    pub fn nodes_on(&self, target: &AuxLattice) -> Option<Vec<(usize, usize)>> {
        self.lattice.nests_in(target).then(|| {
            self.nodes
                .iter()
                .map(|&(k, l)| self.lattice.map_to(target, k, l))
                .collect()
        })
    }

    pub fn points(&self) -> Vec<Point> {
        self.nodes.iter().map(|&(k, l)| self.lattice.node(k, l)).collect()
    }
}

/// Borehole measurements, optionally snapped to a lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub records: Vec<BoreholeRecord>,
    pub snapping: Option<Snapping>,
}

impl ObservationSet {
    pub fn new(records: Vec<BoreholeRecord>) -> Self {
        Self {
            records,
            snapping: None,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.log10_t).collect()
    }

    pub fn points(&self) -> Vec<Point> {
        self.records.iter().map(|r| Point::new(r.easting, r.northing)).collect()
    }
}

/// Snap every observation to the nearest node of `base_grid`'s auxiliary
/// lattice. Because auxiliary lattices nest, the snapped node exists on
/// every finer level too.
pub fn snap_observations(obs: &ObservationSet, base_grid: &LevelGrid, domain: &DomainSpec) -> Result<ObservationSet> {
    snap_to_lattice(obs, &base_grid.aux, domain)
}

pub fn snap_to_lattice(obs: &ObservationSet, lattice: &AuxLattice, domain: &DomainSpec) -> Result<ObservationSet> {
    let bounds = domain.bounds();
    let mut nodes: Vec<(usize, usize)> = Vec::with_capacity(obs.len());
    for rec in &obs.records {
        let p = Point::new(rec.easting, rec.northing);
        if !bounds.contains(p) {
            return Err(Error::ObservationOutsideDomain {
                name: rec.name.clone(),
                x: p.x,
                y: p.y,
            });
        }
        let node = lattice.nearest(p);
        if let Some(prev) = nodes.iter().position(|&n| n == node) {
            return Err(Error::DuplicateObservation {
                first: obs.records[prev].name.clone(),
                second: rec.name.clone(),
                node_x: node.0,
                node_y: node.1,
            });
        }
        nodes.push(node);
    }
    Ok(ObservationSet {
        records: obs.records.clone(),
        snapping: Some(Snapping {
            lattice: lattice.clone(),
            nodes,
        }),
    })
}

/// Snap to the auxiliary lattice of the coarsest grid `n0 · 2^k` (k ≥ 0)
/// on which no two observations share a node.
pub fn snap_observations_auto(obs: &ObservationSet, domain: &DomainSpec, n0: usize) -> Result<ObservationSet> {
    if n0 == 0 || n0 > MAX_CELLS_PER_DIR {
        return Err(Error::invalid("n0", format!("must be in 1..={MAX_CELLS_PER_DIR}, got {n0}")));
    }
    let mut n = n0;
    loop {
        let lattice = AuxLattice::new(domain, 2 * n);
        match snap_to_lattice(obs, &lattice, domain) {
            Err(Error::DuplicateObservation { .. }) if 2 * n <= MAX_CELLS_PER_DIR => n *= 2,
            other => return other,
        }
    }
}
