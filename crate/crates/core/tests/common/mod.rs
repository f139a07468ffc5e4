//! Independent oracles shared by the integration and acceptance tests. Each
//! one recomputes its quantity by a route that does not go through the code
//! under test.
#![allow(dead_code)]

use std::f64::consts::{LN_10, PI};

use nalgebra::DMatrix;
use wipp_mlmc::covariance::CovarianceParams;
use wipp_mlmc::flow::{assemble_with_source, solve, FaceAveraging, FaceFluxes, SolverOptions};
use wipp_mlmc::grid::{build_level_grid, DomainSpec, Point, Rect};
use wipp_mlmc::transport::{TransportParams, SECONDS_PER_YEAR};

/// `σ² exp(−r/λ)`, written out again rather than borrowed from the crate.
pub fn exp_kernel(a: Point, b: Point, p: &CovarianceParams) -> f64 {
    let r = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
    p.variance * (-r / p.correlation_length).exp()
}

pub fn kernel_matrix(a: &[Point], b: &[Point], p: &CovarianceParams) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| exp_kernel(a[i], b[j], p))
}

/// Simple-kriging conditional mean and covariance of `nodes` given values
/// `z` at `obs`, by explicit inversion of the observation block.
pub fn conditional_moments(nodes: &[Point], obs: &[Point], z: &[f64], p: &CovarianceParams) -> (Vec<f64>, DMatrix<f64>) {
    let r11 = kernel_matrix(nodes, nodes, p);
    let r12 = kernel_matrix(nodes, obs, p);
    let r22_inv = kernel_matrix(obs, obs, p).try_inverse().expect("observation block invertible");
    let innov = nalgebra::DVector::from_iterator(z.len(), z.iter().map(|v| v - p.mean));
    let w = &r12 * &r22_inv;
    let mean = (&w * innov).iter().map(|v| v + p.mean).collect();
    let cov = r11 - &w * r12.transpose();
    (mean, cov)
}

/// Travel time through the per-cell linear velocity field by adaptive
/// Dormand–Prince integration. Face and site-edge crossings are located by
/// bisection on the step length. `None` if the particle stalls or leaves
/// the grid.
pub fn rk_travel_time(f: &FaceFluxes, start: Point, target: Rect, params: &TransportParams) -> Option<(f64, Point)> {
    let s = SECONDS_PER_YEAR / (params.thickness * params.porosity);
    let (hx, hy, n) = (f.hx, f.hy, f.n);
    let cell_of = |p: Point| {
        let i = (((p.x - f.x_min) / hx).floor() as isize).clamp(0, n as isize - 1) as usize;
        let j = (((p.y - f.y_min) / hy).floor() as isize).clamp(0, n as isize - 1) as usize;
        (i, j)
    };
    let (mut i, mut j) = cell_of(start);
    let mut p = start;
    let mut t = 0.0;
    let tol = 1e-12;
    for _ in 0..100_000 {
        let (x0, y0) = (f.x_min + i as f64 * hx, f.y_min + j as f64 * hy);
        let vel = |q: Point| {
            let a = (q.x - x0) / hx;
            let b = (q.y - y0) / hy;
            (
                s * ((1.0 - a) * f.qx(i, j) + a * f.qx(i + 1, j)),
                s * ((1.0 - b) * f.qy(i, j) + b * f.qy(i, j + 1)),
            )
        };
        let lo = Point::new(x0.max(target.x_min), y0.max(target.y_min));
        let hi = Point::new((x0 + hx).min(target.x_max), (y0 + hy).min(target.y_max));
        let inside = |q: Point| q.x >= lo.x && q.x <= hi.x && q.y >= lo.y && q.y <= hi.y;
        let gap = |q: Point| (q.x - lo.x).min(hi.x - q.x).min(q.y - lo.y).min(hi.y - q.y);
        let (vx, vy) = vel(p);
        let speed = vx.hypot(vy);
        if speed == 0.0 {
            return None;
        }
        let mut dt = 0.05 * hx.min(hy) / speed;
        // integrate until the cell (clipped to the site) is left
        let exit = loop {
            let (q, err) = dopri_step(&vel, p, dt);
            let scale = hx.min(hy);
            if err > tol * scale {
                dt *= (0.9 * (tol * scale / err).powf(0.2)).max(0.2);
                continue;
            }
            if inside(q) {
                p = q;
                t += dt;
                if gap(p) <= 1e-13 * scale {
                    break p;
                }
                dt *= (0.9 * (tol * scale / err.max(1e-300)).powf(0.2)).min(5.0);
                if dt > 1e14 {
                    return None;
                }
                continue;
            }
            // step leaves the box: bisect for the crossing time
            let (mut a, mut b) = (0.0, dt);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let (qm, _) = dopri_step(&vel, p, m);
                if inside(qm) {
                    a = m;
                    if gap(qm) <= 1e-13 * scale {
                        break;
                    }
                } else {
                    b = m;
                }
            }
            let (q, _) = dopri_step(&vel, p, a);
            t += a;
            p = q;
            break p;
        };
        let scale = hx.min(hy);
        let near = |u: f64, v: f64| (u - v).abs() <= 1e-9 * scale;
        if near(exit.x, target.x_min) || near(exit.x, target.x_max) || near(exit.y, target.y_min) || near(exit.y, target.y_max) {
            return Some((t, exit));
        }
        // step into the neighbour across the nearest face
        let d = [
            (exit.x - x0, 0),
            (x0 + hx - exit.x, 1),
            (exit.y - y0, 2),
            (y0 + hy - exit.y, 3),
        ];
        let face = d.iter().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap().1;
        match face {
            0 if i > 0 => i -= 1,
            1 if i + 1 < n => i += 1,
            2 if j > 0 => j -= 1,
            3 if j + 1 < n => j += 1,
            _ => return None,
        }
    }
    None
}

/// One Dormand–Prince 5(4) step; returns the fifth-order point and the
/// embedded error estimate (Euclidean norm).
fn dopri_step(vel: &dyn Fn(Point) -> (f64, f64), p: Point, h: f64) -> (Point, f64) {
    const C: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let mut k = [(0.0, 0.0); 7];
    k[0] = vel(p);
    for s in 0..6 {
        let (mut dx, mut dy) = (0.0, 0.0);
        for (r, kr) in k.iter().enumerate().take(s + 1) {
            dx += C[s][r] * kr.0;
            dy += C[s][r] * kr.1;
        }
        k[s + 1] = vel(Point::new(p.x + h * dx, p.y + h * dy));
    }
    let (mut dx, mut dy) = (0.0, 0.0);
    for (r, kr) in k.iter().enumerate().take(6) {
        dx += C[5][r] * kr.0;
        dy += C[5][r] * kr.1;
    }
    let (mut ex, mut ey) = (0.0, 0.0);
    for (e, kr) in E.iter().zip(&k) {
        ex += e * kr.0;
        ey += e * kr.1;
    }
    (Point::new(p.x + h * dx, p.y + h * dy), h * ex.hypot(ey))
}

/// RMS head error against `u = sin(πx̂) sin(πŷ)` with a smooth
/// heterogeneous transmissivity, on an `n × n` grid.
pub fn manufactured_error(n: usize) -> f64 {
    let d = DomainSpec::wipp();
    let (x0, y0, lx, ly) = (d.x_min(), d.y_min(), d.extent_x, d.extent_y);
    let hat = move |p: Point| ((p.x - x0) / lx, (p.y - y0) / ly);
    let z = move |p: Point| {
        let (xh, yh) = hat(p);
        0.5 * (PI * xh).cos() * (2.0 * PI * yh).sin() - 4.0
    };
    let exact = move |p: Point| {
        let (xh, yh) = hat(p);
        (PI * xh).sin() * (PI * yh).sin()
    };
    let source = move |p: Point| {
        let (xh, yh) = hat(p);
        let zx = -0.5 * PI / lx * (PI * xh).sin() * (2.0 * PI * yh).sin();
        let zy = 0.5 * 2.0 * PI / ly * (PI * xh).cos() * (2.0 * PI * yh).cos();
        let ux = PI / lx * (PI * xh).cos() * (PI * yh).sin();
        let uy = PI / ly * (PI * xh).sin() * (PI * yh).cos();
        let lap = -((PI / lx).powi(2) + (PI / ly).powi(2)) * exact(p);
        -10f64.powf(z(p)) * (LN_10 * (zx * ux + zy * uy) + lap)
    };
    let g = build_level_grid(&d, 0, n).unwrap();
    let zt: Vec<f64> = g.cell_centers().into_iter().map(z).collect();
    let sys = assemble_with_source(&g, &zt, &|_p: Point| 0.0, FaceAveraging::Harmonic, Some(&source)).unwrap();
    let sol = solve(&sys, &SolverOptions::default()).unwrap();
    let sq: f64 = sol.head.iter().zip(g.cell_centers()).map(|(u, p)| (u - exact(p)).powi(2)).sum();
    (sq / g.cells() as f64).sqrt()
}

/// Observed order from the errors on 32², 64² and 128² grids.
pub fn manufactured_order() -> f64 {
    let e: Vec<f64> = [32, 64, 128].into_iter().map(manufactured_error).collect();
    let h = [1.0f64, 0.5, 0.25];
    let (x, y): (Vec<f64>, Vec<f64>) = h.iter().zip(&e).map(|(h, e)| (h.ln(), e.ln())).unzip();
    let mx = x.iter().sum::<f64>() / 3.0;
    let my = y.iter().sum::<f64>() / 3.0;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

use wipp_mlmc::conditioning::{condition, ConditioningOperator};
use wipp_mlmc::fieldgen::{build_spectrum, build_spectrum_with, sample_unconditional, DenseViewSampler, EmbeddingOptions, FieldSampler, RealizationStream, ViewMap};
use wipp_mlmc::grid::{snap_to_lattice, ObservationSet};
use wipp_mlmc::iodata::{bundled_boreholes, BoreholeRecord};
use wipp_mlmc::mlmc::wipp::{ModelSetup, WippSampler};
use wipp_mlmc::stream::{Role, StreamId};
use wipp_mlmc::transport::track;

/// Largest gap between the covariance implied by the circulant spectrum and
/// the product `L Lᵀ` of a dense Cholesky factor, over all node pairs of the
/// auxiliary lattices of 2×2 … 6×6 grids (and of every rectangular lattice
/// up to 6×6 nodes).
pub fn circulant_vs_cholesky_gap() -> f64 {
    let p = CovarianceParams::WIPP;
    let d = DomainSpec::wipp();
    let mut cases: Vec<(usize, usize, f64, f64)> = Vec::new();
    for n in 2..=6 {
        let g = build_level_grid(&d, 0, n).unwrap();
        let m = g.aux.nodes_per_dir();
        cases.push((m, m, g.aux.dx, g.aux.dy));
    }
    for nx in 1..=6 {
        for ny in 1..=6 {
            cases.push((nx, ny, d.extent_x / 12.0, d.extent_y / 12.0));
        }
    }
    let mut worst: f64 = 0.0;
    for (nx, ny, dx, dy) in cases {
        let s = build_spectrum_with(nx, ny, dx, dy, &p, EmbeddingOptions::default()).unwrap();
        let row = s.implied_covariance_row();
        let pts: Vec<Point> = (0..nx * ny).map(|k| Point::new((k % nx) as f64 * dx, (k / nx) as f64 * dy)).collect();
        let l = kernel_matrix(&pts, &pts, &p).cholesky().expect("kernel matrix is positive definite").l();
        let llt = &l * l.transpose();
        for a in 0..pts.len() {
            for b in 0..pts.len() {
                let lag = (a % nx).abs_diff(b % nx) + nx * (a / nx).abs_diff(b / nx);
                worst = worst.max((row[lag] - llt[(a, b)]).abs());
            }
        }
    }
    worst
}

/// Worst deviation, in standard errors, of the sample mean and covariance
/// of conditioned 5×5 fields from the direct kriging formulas, for both the
/// circulant and the dense draw.
pub fn conditional_moment_scores(samples: usize, seed: u64) -> (f64, f64) {
    let p = CovarianceParams::WIPP;
    let d = DomainSpec::wipp();
    let g = build_level_grid(&d, 0, 5).unwrap();
    let lattice = g.aux.clone();
    // even lattice nodes never coincide with cell centres
    let recs: Vec<BoreholeRecord> = [((2, 4), -3.0), ((6, 2), -6.5), ((4, 8), -5.2)]
        .iter()
        .enumerate()
        .map(|(k, &((a, b), v))| {
            let q = lattice.node(a, b);
            BoreholeRecord {
                name: format!("O{k}"),
                easting: q.x,
                northing: q.y,
                log10_t: v,
            }
        })
        .collect();
    let obs = snap_to_lattice(&ObservationSet::new(recs), &lattice, &d).unwrap();
    let values = obs.values();
    let map = ViewMap::new(&lattice, &g, &obs).unwrap();
    let op = ConditioningOperator::for_level(&lattice, &map, &values, &p).unwrap();
    let (mean, cov) = conditional_moments(&g.cell_centers(), &obs.snapping.as_ref().unwrap().points(), &values, &p);

    let score = |fields: &[Vec<f64>]| {
        let n = fields.len() as f64;
        let m = mean.len();
        let mut worst: f64 = 0.0;
        for a in 0..m {
            let avg = fields.iter().map(|f| f[a]).sum::<f64>() / n;
            let se = (cov[(a, a)] / n).sqrt();
            worst = worst.max((avg - mean[a]).abs() / se);
            for b in a..m {
                let c = fields.iter().map(|f| (f[a] - mean[a]) * (f[b] - mean[b])).sum::<f64>() / n;
                let se = ((cov[(a, a)] * cov[(b, b)] + cov[(a, b)].powi(2)) / n).sqrt();
                worst = worst.max((c - cov[(a, b)]).abs() / se);
            }
        }
        worst
    };
    let spectrum = build_spectrum(&lattice, &p).unwrap();
    let id = StreamId::new(Role::Inspect, 0, 0);
    let mut st = RealizationStream::new(id.rng(seed), id);
    let circ: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            let f = sample_unconditional(&spectrum, &map, p.mean, &mut st).unwrap();
            condition(&f, &op).unwrap().fine().to_vec()
        })
        .collect();
    let dense = FieldSampler::Dense(std::sync::Arc::new(DenseViewSampler::new(&lattice, &map, &p).unwrap()));
    let id = StreamId::new(Role::Inspect, 0, 1);
    let mut st = RealizationStream::new(id.rng(seed), id);
    let dens: Vec<Vec<f64>> = (0..samples)
        .map(|_| condition(&dense.sample(&map, p.mean, &mut st).unwrap(), &op).unwrap().fine().to_vec())
        .collect();
    (score(&circ), score(&dens))
}

/// A conditioned WIPP realization on the `n × n` level-0 grid with its flow
/// solution.
pub fn wipp_flow(n: usize, seed: u64) -> (ModelSetup, FaceFluxes) {
    let setup = ModelSetup::wipp(n, 0, true).unwrap();
    let s = WippSampler::new(setup.clone()).unwrap();
    let res = s.resources(0).unwrap();
    let c = &s.realizations(0, StreamId::new(Role::Inspect, 0, 0), seed).unwrap()[0];
    let (sol, _) = setup.evaluate(&res.fine, c.fine(), false).unwrap();
    (setup, sol.fluxes)
}

/// Relative travel-time gap between semi-analytic tracking and the
/// adaptive integrator on a conditioned 32×32 realization.
pub fn pollock_vs_rk_gap(seed: u64) -> f64 {
    let (setup, fluxes) = wipp_flow(32, seed);
    let target = setup.domain.inner();
    let pol = track(&fluxes, setup.domain.release, Some(target), &setup.transport, false);
    assert!(pol.succeeded(), "{:?}", pol.termination);
    let (t, _) = rk_travel_time(&fluxes, setup.domain.release, target, &setup.transport).expect("integrator reaches the site edge");
    ((pol.time - t) / t).abs()
}

/// Largest misfit to the 39 borehole values over conditioned draws on
/// levels 0–3 from a 32² base grid, antithetic partners included.
pub fn borehole_misfit(blocks: usize) -> f64 {
    let s = WippSampler::new(ModelSetup::wipp(32, 3, true).unwrap()).unwrap();
    let data: Vec<f64> = bundled_boreholes().iter().map(|r| r.log10_t).collect();
    assert_eq!(data.len(), 39);
    let mut worst: f64 = 0.0;
    for level in 0..=3 {
        let res = s.resources(level).unwrap();
        for b in 0..blocks {
            for c in s.realizations(level, StreamId::new(Role::Inspect, level, b as u64), 5).unwrap() {
                let a = wipp_mlmc::conditioning::antithetic(&c, &res.operator);
                for v in [c.obs(), a.obs()] {
                    assert_eq!(v.len(), 39);
                    for (x, y) in v.iter().zip(&data) {
                        worst = worst.max((x - y).abs());
                    }
                }
            }
        }
    }
    worst
}

/// `E ∫₀¹ exp(σZx) dx = ∫₀¹ exp(σ²x²/2) dx`, summed as the power series
/// `Σ (σ²/2)^k / (k! (2k+1))`.
pub fn toy_exact_mean(sigma: f64) -> f64 {
    let a = 0.5 * sigma * sigma;
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..200 {
        term *= a / k as f64;
        let t = term / (2 * k + 1) as f64;
        sum += t;
        if t < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Repetitions, out of `reps`, in which adaptive MLMC on the toy lands within
/// `3ε` of the exact mean.
pub fn toy_hits(sigma: f64, eps: f64, reps: u64) -> u64 {
    use wipp_mlmc::mlmc::{run_mlmc, toy::LognormalToy, EngineOptions, Variant};
    let toy = LognormalToy::new(sigma);
    let exact = toy_exact_mean(sigma);
    (0..reps)
        .filter(|&r| {
            let opts = EngineOptions {
                seed: 1000 + r,
                workers: 1,
                ..EngineOptions::default()
            };
            let st = run_mlmc(&toy, eps, Variant::Plain, &opts).unwrap();
            (st.estimate - exact).abs() <= 3.0 * eps
        })
        .count() as u64
}
