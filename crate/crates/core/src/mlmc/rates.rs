//! Sample allocation, convergence-rate regression and the asymptotic cost
//! model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `N_ℓ = ⌈(2/ε²) √(V_ℓ/C_ℓ) Σ_k √(V_k C_k)⌉`, at least two per level, which
/// keeps `Σ V_ℓ/N_ℓ ≤ ε²/2` at minimal modelled cost.
pub fn optimal_allocation(v: &[f64], c: &[f64], eps: f64) -> Result<Vec<u64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", format!("must be positive, got {eps}")));
    }
    if v.len() != c.len() {
        return Err(Error::DimensionMismatch {
            context: "optimal_allocation",
            expected: v.len(),
            actual: c.len(),
        });
    }
    if v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(Error::invalid("variance", "level variances must be finite and non-negative"));
    }
    if c.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::invalid("cost", "level costs must be positive"));
    }
    let sum: f64 = v.iter().zip(c).map(|(v, c)| (v * c).sqrt()).sum();
    let scale = 2.0 / (eps * eps) * sum;
    Ok(v.iter()
        .zip(c)
        .map(|(v, c)| {
            let x = scale * (v / c).sqrt();
            // absorb round-off on exact integers before rounding up
            ((x * (1.0 - 1e-12)).ceil() as u64).max(2)
        })
        .collect())
}

/// Samples and standardized cost of a single-level estimator at level cost
/// `c`: `N = ⌈2V/ε²⌉` (at least two) and `N·c`.
pub fn mc_standardized_cost(v: f64, c: f64, eps: f64) -> Result<(u64, f64)> {
    let n = optimal_allocation(&[v], &[c], eps)?[0];
    Ok((n, n as f64 * c))
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Decay rates with respect to the number of cells `M` (and, for a 2-D grid,
/// twice those with respect to the mesh width `h`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// `|E[Y_ℓ]| ~ M^{−α}`
    pub alpha: f64,
    /// `V[Y_ℓ] ~ M^{−β}`
    pub beta: f64,
    /// `C_ℓ ~ M^{γ}`
    pub gamma: f64,
    pub alpha_h: f64,
    pub beta_h: f64,
    pub gamma_h: f64,
}

/// Slope of `log |v|` against `log M` over the entries with `v ≠ 0`.
pub fn log_slope(cells: &[f64], values: &[f64]) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = cells
        .iter()
        .zip(values)
        .filter(|(_, v)| v.abs() > 0.0 && v.is_finite())
        .map(|(m, v)| (m.ln(), v.abs().ln()))
        .unzip();
    if x.len() < 2 {
        return Err(Error::TooFewLevels {
            needed: 2,
            available: x.len(),
        });
    }
    Ok(fit_slope(&x, &y))
}

/// Fit rates from per-level cells `M_ℓ`, means and variances of `Y_ℓ` and
/// costs. Levels with a zero mean or variance are skipped for the
/// corresponding slope.
pub fn fit_rates(cells: &[f64], mean_y: &[f64], var_y: &[f64], cost: &[f64]) -> Result<Rates> {
    let alpha = -log_slope(cells, mean_y)?;
    let beta = -log_slope(cells, var_y)?;
    let gamma = log_slope(cells, cost)?;
    Ok(Rates {
        alpha,
        beta,
        gamma,
        alpha_h: 2.0 * alpha,
        beta_h: 2.0 * beta,
        gamma_h: 2.0 * gamma,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Mc,
    Mlmc,
}

/// Cost `~ ε^{exponent}`, times `(log ε)²` when `log_squared` is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostExponent {
    pub exponent: f64,
    pub log_squared: bool,
}

/// Asymptotic ε-cost order of the standard and multilevel estimators. The
/// rates must satisfy `α ≥ ½ min(β, γ)`.
pub fn predicted_cost_exponent(model: &CostModel, estimator: Estimator) -> Result<CostExponent> {
    let CostModel { alpha, beta, gamma } = *model;
    if !(alpha > 0.0 && beta > 0.0 && gamma > 0.0) || alpha < 0.5 * beta.min(gamma) {
        return Err(Error::CostTheoremCondition { alpha, beta, gamma });
    }
    Ok(match estimator {
        Estimator::Mc => CostExponent {
            exponent: -2.0 - gamma / alpha,
            log_squared: false,
        },
        Estimator::Mlmc if beta > gamma => CostExponent {
            exponent: -2.0,
            log_squared: false,
        },
        Estimator::Mlmc if beta == gamma => CostExponent {
            exponent: -2.0,
            log_squared: true,
        },
        Estimator::Mlmc => CostExponent {
            exponent: -2.0 - (gamma - beta) / alpha,
            log_squared: false,
        },
    })
}
