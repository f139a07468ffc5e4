//! Conditioning of unconditional realizations on borehole data by simple
//! kriging, and the antithetic counterpart obtained by flipping the sign of
//! the kriging error.
//!
//! With `P = R12 R22⁻¹` and zero-mean draws `Z⁰ = Z − μ`, the conditioned
//! field is `Z_C = μ̃ + (Z⁰₁ − P Z⁰₂)` where `μ̃ = μ + P (z₂ − μ)`; its
//! antithetic partner is `μ̃ − (Z⁰₁ − P Z⁰₂)`.

use nalgebra::{Cholesky, DMatrix};

use crate::covariance::{assemble_obs_blocks, CovBlocks, CovarianceParams};
use crate::error::{Error, Result};
use crate::fieldgen::{FieldSample, ViewMap};
use crate::grid::{AuxLattice, Point};

/// Simple-kriging weights and conditional mean over a fixed list of nodes.
#[derive(Clone, Debug)]
pub struct ConditioningOperator {
    n_obs: usize,
    mean: f64,
    /// Node-major weights, `nodes × n_obs`.
    weights: Vec<f64>,
    cond_mean: Vec<f64>,
    /// Lengths of the fine, coarse and observation views, concatenated in
    /// that order.
    sizes: [usize; 3],
    has_coarse: bool,
    obs_values: Vec<f64>,
    r22: Option<Cholesky<f64, nalgebra::Dyn>>,
}

/// Kriging weights `P = R12 R22⁻¹` and conditional mean from assembled
/// blocks. `exact[i] = Some(j)` marks node `i` as observation `j`; its
/// weight row is set to the `j`-th basis vector.
pub fn build_operator(
    blocks: &CovBlocks,
    obs_values: &[f64],
    p: &CovarianceParams,
    exact: &[Option<usize>],
) -> Result<ConditioningOperator> {
    let n_obs = obs_values.len();
    let nodes = blocks.r12.nrows();
    if blocks.r22.nrows() != n_obs || blocks.r12.ncols() != n_obs {
        return Err(Error::DimensionMismatch {
            context: "build_operator",
            expected: n_obs,
            actual: blocks.r22.nrows(),
        });
    }
    if exact.len() != nodes {
        return Err(Error::DimensionMismatch {
            context: "build_operator exact rows",
            expected: nodes,
            actual: exact.len(),
        });
    }
    let chol = Cholesky::new(blocks.r22.clone()).ok_or(Error::ObservationCovarianceNotPd)?;
    // R22 Pᵀ = R12ᵀ
    let pt: DMatrix<f64> = chol.solve(&blocks.r12.transpose());
    let innovation: Vec<f64> = obs_values.iter().map(|z| z - p.mean).collect();
    let mut weights = vec![0.0; nodes * n_obs];
    let mut cond_mean = vec![0.0; nodes];
    for i in 0..nodes {
        let row = &mut weights[i * n_obs..(i + 1) * n_obs];
        match exact[i] {
            Some(j) => {
                row[j] = 1.0;
                cond_mean[i] = obs_values[j];
            }
            None => {
                let mut m = p.mean;
                for (j, w) in row.iter_mut().enumerate() {
                    *w = pt[(j, i)];
                    m += *w * innovation[j];
                }
                cond_mean[i] = m;
            }
        }
    }
    Ok(ConditioningOperator {
        n_obs,
        mean: p.mean,
        weights,
        cond_mean,
        sizes: [nodes, 0, 0],
        has_coarse: false,
        obs_values: obs_values.to_vec(),
        r22: Some(chol),
    })
}

impl ConditioningOperator {
    /// Operator for one level: conditions the fine, coarse and observation
    /// views of [`FieldSample`]s drawn through `map` on `lattice`.
    pub fn for_level(
        lattice: &AuxLattice,
        map: &ViewMap,
        obs_values: &[f64],
        p: &CovarianceParams,
    ) -> Result<Self> {
        if map.obs.len() != obs_values.len() {
            return Err(Error::DimensionMismatch {
                context: "conditioning observations",
                expected: map.obs.len(),
                actual: obs_values.len(),
            });
        }
        let coarse: &[usize] = map.coarse.as_deref().unwrap_or(&[]);
        let all: Vec<usize> = map.fine.iter().chain(coarse).chain(&map.obs).copied().collect();
        let n = lattice.nodes_per_dir();
        let point = |idx: usize| lattice.node(idx % n + 1, idx / n + 1);
        let nodes: Vec<Point> = all.iter().map(|&i| point(i)).collect();
        let obs_pts: Vec<Point> = map.obs.iter().map(|&i| point(i)).collect();
        let exact: Vec<Option<usize>> = all.iter().map(|i| map.obs.iter().position(|o| o == i)).collect();
        let blocks = assemble_obs_blocks(&nodes, &obs_pts, p);
        let mut op = build_operator(&blocks, obs_values, p, &exact)?;
        op.sizes = [map.fine.len(), coarse.len(), map.obs.len()];
        op.has_coarse = map.coarse.is_some();
        Ok(op)
    }

    /// No observations: the conditional mean is the prior mean and the
    /// kriging error is the zero-mean draw itself.
    pub fn unconditional(map: &ViewMap, mean: f64) -> Self {
        let coarse = map.coarse.as_ref().map_or(0, Vec::len);
        let nodes = map.fine.len() + coarse;
        Self {
            n_obs: 0,
            mean,
            weights: Vec::new(),
            cond_mean: vec![mean; nodes],
            sizes: [map.fine.len(), coarse, 0],
            has_coarse: map.coarse.is_some(),
            obs_values: Vec::new(),
            r22: None,
        }
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_nodes(&self) -> usize {
        self.cond_mean.len()
    }

    /// Kriging weight row of node `i`.
    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n_obs..(i + 1) * self.n_obs]
    }

    /// Conditional mean over all nodes (fine, coarse, observation order).
    pub fn conditional_mean(&self) -> &[f64] {
        &self.cond_mean
    }

    pub fn fine_mean(&self) -> &[f64] {
        &self.cond_mean[..self.sizes[0]]
    }

    /// Conditional variance `σ² − P_i R12_iᵀ` at every node.
    pub fn conditional_variance(&self, blocks_r12: &DMatrix<f64>, variance: f64) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|i| {
                let w = self.weights(i);
                let reduction: f64 = w.iter().enumerate().map(|(j, wj)| wj * blocks_r12[(i, j)]).sum();
                (variance - reduction).max(0.0)
            })
            .collect()
    }

    /// Cholesky factor of the observation covariance, when there is one.
    pub fn factorization(&self) -> Option<&Cholesky<f64, nalgebra::Dyn>> {
        self.r22.as_ref()
    }

    pub fn observation_values(&self) -> &[f64] {
        &self.obs_values
    }
}

/// A conditioned realization stored as conditional mean plus signed
/// kriging error, so that flipping the sign twice is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalSample {
    values: Vec<f64>,
    residual: Vec<f64>,
    sizes: [usize; 3],
    has_coarse: bool,
    pub antithetic: bool,
}

impl ConditionalSample {
    pub fn fine(&self) -> &[f64] {
        &self.values[..self.sizes[0]]
    }

    pub fn coarse(&self) -> Option<&[f64]> {
        self.has_coarse
            .then(|| &self.values[self.sizes[0]..self.sizes[0] + self.sizes[1]])
    }

    pub fn obs(&self) -> &[f64] {
        &self.values[self.sizes[0] + self.sizes[1]..]
    }

    /// Kriging error over all nodes.
    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Condition an unconditional realization with `op`.
pub fn condition(sample: &FieldSample, op: &ConditioningOperator) -> Result<ConditionalSample> {
    let coarse: &[f64] = sample.coarse.as_deref().unwrap_or(&[]);
    let got = [sample.fine.len(), coarse.len(), sample.obs.len()];
    if got != op.sizes || sample.coarse.is_some() != op.has_coarse {
        return Err(Error::DimensionMismatch {
            context: "condition",
            expected: op.sizes.iter().sum(),
            actual: got.iter().sum(),
        });
    }
    let z_obs: Vec<f64> = sample.obs.iter().map(|z| z - op.mean).collect();
    let mut residual = Vec::with_capacity(op.n_nodes());
    for (i, z) in sample.fine.iter().chain(coarse).chain(&sample.obs).enumerate() {
        let w = &op.weights[i * op.n_obs..(i + 1) * op.n_obs];
        let kriged: f64 = w.iter().zip(&z_obs).map(|(a, b)| a * b).sum();
        residual.push((z - op.mean) - kriged);
    }
    // Rows of observation nodes are exact basis vectors, so their residual
    // is exactly zero and the value exactly the datum.
    let values = op.cond_mean.iter().zip(&residual).map(|(m, r)| m + r).collect();
    Ok(ConditionalSample {
        values,
        residual,
        sizes: op.sizes,
        has_coarse: op.has_coarse,
        antithetic: false,
    })
}

/// The antithetic partner `μ̃ − (Z⁰₁ − P Z⁰₂)`. Applying it twice returns
/// the original sample bit for bit.
pub fn antithetic(sample: &ConditionalSample, op: &ConditioningOperator) -> ConditionalSample {
    let residual: Vec<f64> = sample.residual.iter().map(|r| -r).collect();
    let values = op.cond_mean.iter().zip(&residual).map(|(m, r)| m + r).collect();
    ConditionalSample {
        values,
        residual,
        sizes: sample.sizes,
        has_coarse: sample.has_coarse,
        antithetic: !sample.antithetic,
    }
}
