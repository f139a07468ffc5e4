//! One-dimensional lognormal test functional with a known mean:
//! `Q = ∫₀¹ exp(σ Z x) dx`, `Z ~ N(0, 1)`, approximated on level `ℓ` by the
//! midpoint rule with `2^{ℓ+1}` intervals.

use rand_distr::{Distribution, StandardNormal};

use super::{LevelSampler, Outcome, PairParts, SampleKind, Variant};
use crate::error::Result;
use crate::stream::StreamId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LognormalToy {
    pub sigma: f64,
    pub max_level: usize,
}

impl LognormalToy {
    pub fn new(sigma: f64) -> Self {
        Self { sigma, max_level: 20 }
    }

    pub fn intervals(level: usize) -> usize {
        2 << level
    }

    /// Midpoint approximation of `∫₀¹ exp(σ z x) dx` on level `level`.
    pub fn evaluate(&self, level: usize, z: f64) -> f64 {
        let m = Self::intervals(level);
        let h = 1.0 / m as f64;
        (0..m).map(|k| (self.sigma * z * (k as f64 + 0.5) * h).exp()).sum::<f64>() * h
    }
}

impl LevelSampler for LognormalToy {
    fn max_level(&self) -> usize {
        self.max_level
    }

    fn cells(&self, level: usize) -> f64 {
        Self::intervals(level) as f64
    }

    fn sample_block(&self, level: usize, kind: SampleKind, block: StreamId, seed: u64) -> Vec<Result<Outcome>> {
        let z: f64 = StandardNormal.sample(&mut block.rng(seed));
        let eval = |z: f64| {
            let q = self.evaluate(level, z);
            let y = match kind {
                SampleKind::Coupled(_) if level > 0 => q - self.evaluate(level - 1, z),
                _ => q,
            };
            (y, q)
        };
        let (y, q) = eval(z);
        let out = match kind.variant() {
            Variant::Plain => Outcome { y, q, parts: None },
            Variant::Antithetic => {
                let (ya, qa) = eval(-z);
                Outcome {
                    y: (y + ya) / 2.0,
                    q: (q + qa) / 2.0,
                    parts: Some(PairParts { y: [y, ya], q: [q, qa] }),
                }
            }
        };
        vec![Ok(out)]
    }
}
