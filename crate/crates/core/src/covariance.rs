//! Isotropic exponential covariance of the log10-transmissivity field.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Point;

/// Largest point set for which a dense covariance matrix may be formed.
pub const DENSE_LIMIT: usize = 64 * 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceParams {
    /// Constant mean of log10 T.
    pub mean: f64,
    /// Variance σ² in (log10 T)².
    pub variance: f64,
    /// Correlation length λ in metres.
    pub correlation_length: f64,
}

impl CovarianceParams {
    /// Posterior-mean parameters of the Culebra log-transmissivity model.
    pub const WIPP: CovarianceParams = CovarianceParams {
        mean: -4.934,
        variance: 6.4791,
        correlation_length: 12_390.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() {
            return Err(Error::invalid("mean", "must be finite"));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::invalid("sigma2", format!("must be positive, got {}", self.variance)));
        }
        if !(self.correlation_length > 0.0 && self.correlation_length.is_finite()) {
            return Err(Error::invalid(
                "correlation_length",
                format!("must be positive, got {}", self.correlation_length),
            ));
        }
        Ok(())
    }

    /// Covariance at separation distance `r`.
    #[inline]
    pub fn at_distance(&self, r: f64) -> f64 {
        self.variance * (-r / self.correlation_length).exp()
    }
}

impl Default for CovarianceParams {
    fn default() -> Self {
        Self::WIPP
    }
}

/// `σ² exp(−‖a − b‖₂ / λ)`.
#[inline]
pub fn kernel(a: Point, b: Point, p: &CovarianceParams) -> f64 {
    p.at_distance(a.distance(b))
}

/// Grid-to-observation and observation-to-observation covariance blocks.
/// The grid-to-grid block is never stored; only the circulant sampler needs
/// it, and only through its first row.
#[derive(Clone, Debug)]
pub struct CovBlocks {
    /// `nodes × obs`
    pub r12: DMatrix<f64>,
    /// `obs × obs`
    pub r22: DMatrix<f64>,
}

pub fn assemble_obs_blocks(nodes: &[Point], obs: &[Point], p: &CovarianceParams) -> CovBlocks {
    let r12 = DMatrix::from_fn(nodes.len(), obs.len(), |i, j| kernel(nodes[i], obs[j], p));
    CovBlocks {
        r12,
        r22: dense_covariance_unchecked(obs, p),
    }
}

/// Dense kernel matrix over `points`, refused above [`DENSE_LIMIT`] points.
pub fn dense_covariance(points: &[Point], p: &CovarianceParams) -> Result<DMatrix<f64>> {
    if points.len() > DENSE_LIMIT {
        return Err(Error::invalid(
            "points",
            format!("dense covariance limited to {DENSE_LIMIT} points, got {}", points.len()),
        ));
    }
    Ok(dense_covariance_unchecked(points, p))
}

fn dense_covariance_unchecked(points: &[Point], p: &CovarianceParams) -> DMatrix<f64> {
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = p.variance;
        for i in (j + 1)..n {
            let c = kernel(points[i], points[j], p);
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Cholesky;
    use proptest::prelude::*;

    const P: CovarianceParams = CovarianceParams::WIPP;

    #[test]
    fn kernel_at_zero_is_variance() {
        let a = Point::new(613_423.0, 3_581_684.0);
        assert_eq!(kernel(a, a, &P), 6.4791);
    }

    #[test]
    fn kernel_at_one_correlation_length() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(12_390.0, 0.0);
        let expected = 6.4791 * (-1.0f64).exp();
        assert!((kernel(a, b, &P) - expected).abs() < 1e-14);
        assert!((expected - 2.383528).abs() < 1e-6);
    }

    #[test]
    fn kernel_decays_monotonically() {
        let o = Point::new(0.0, 0.0);
        let mut prev = kernel(o, o, &P);
        for k in 1..60 {
            let c = kernel(o, Point::new(1000.0 * k as f64, 500.0 * k as f64), &P);
            assert!(c < prev && c > 0.0);
            prev = c;
        }
        assert!(kernel(o, Point::new(1e7, 0.0), &P) < 1e-300);
    }

    #[test]
    fn blocks_single_and_pair() {
        let o = Point::new(0.0, 0.0);
        let b = assemble_obs_blocks(&[o], &[o], &P);
        assert_eq!(b.r22[(0, 0)], P.variance);
        let q = Point::new(0.0, P.correlation_length);
        let b = assemble_obs_blocks(&[], &[o, q], &P);
        assert!((b.r22[(0, 1)] - P.variance * (-1.0f64).exp()).abs() < 1e-14);
        assert_eq!(b.r22[(0, 1)], b.r22[(1, 0)]);
    }

    #[test]
    fn r12_row_of_observation_node_equals_r22_column() {
        let obs = [Point::new(10.0, 20.0), Point::new(3000.0, -500.0), Point::new(-7000.0, 900.0)];
        let nodes = [Point::new(5.0, 5.0), obs[1], Point::new(100.0, 100.0)];
        let b = assemble_obs_blocks(&nodes, &obs, &P);
        for j in 0..3 {
            assert_eq!(b.r12[(1, j)], b.r22[(j, 1)]);
        }
    }

    #[test]
    fn permuting_observations_permutes_r22() {
        let obs = [Point::new(10.0, 20.0), Point::new(3000.0, -500.0), Point::new(-7000.0, 900.0)];
        let perm = [2, 0, 1];
        let permuted: Vec<Point> = perm.iter().map(|&i| obs[i]).collect();
        let a = assemble_obs_blocks(&[], &obs, &P).r22;
        let b = assemble_obs_blocks(&[], &permuted, &P).r22;
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(b[(i, j)], a[(perm[i], perm[j])]);
            }
        }
    }

    #[test]
    fn wipp_observation_covariance_is_pd() {
        let records = crate::iodata::bundled_boreholes();
        let pts: Vec<Point> = records.iter().map(|r| Point::new(r.easting, r.northing)).collect();
        let b = assemble_obs_blocks(&[], &pts, &P);
        assert_eq!(b.r22.nrows(), 39);
        assert!(Cholesky::new(b.r22).is_some());
    }

    #[test]
    fn dense_limit_enforced() {
        let pts = vec![Point::new(0.0, 0.0); DENSE_LIMIT + 1];
        assert!(dense_covariance(&pts, &P).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(CovarianceParams { correlation_length: -1.0, ..P }.validate().is_err());
        assert!(CovarianceParams { variance: 0.0, ..P }.validate().is_err());
        assert!(P.validate().is_ok());
    }

    proptest! {
        #[test]
        fn kernel_symmetric_and_bounded(ax in -1e5f64..1e5, ay in -1e5f64..1e5, bx in -1e5f64..1e5, by in -1e5f64..1e5) {
            let a = Point::new(ax, ay);
            let b = Point::new(bx, by);
            let k = kernel(a, b, &P);
            prop_assert_eq!(k, kernel(b, a, &P));
            prop_assert!(k > 0.0 && k <= P.variance);
        }

        #[test]
        fn variance_scales_blocks(c in 0.01f64..100.0) {
            let pts = [Point::new(0.0, 0.0), Point::new(2500.0, 100.0), Point::new(-40.0, 9000.0)];
            let a = assemble_obs_blocks(&pts, &pts, &P);
            let scaled = CovarianceParams { variance: P.variance * c, ..P };
            let b = assemble_obs_blocks(&pts, &pts, &scaled);
            for (x, y) in a.r12.iter().zip(b.r12.iter()) {
                prop_assert!((x * c - y).abs() <= 1e-12 * y.abs());
            }
        }
    }
}
