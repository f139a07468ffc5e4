//! Streaming moment accumulators (Welford / Chan updates).

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    /// Sum of squared deviations from the running mean.
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    /// Unbiased sample variance, `None` below two samples.
    pub fn variance(&self) -> Option<f64> {
        (self.n >= 2).then(|| (self.m2 / (self.n - 1) as f64).max(0.0))
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> Option<f64> {
        self.variance().map(|v| (v / self.n as f64).sqrt())
    }
}

/// Joint moments of paired samples `(a, b)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairMoments {
    pub n: u64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub c_aa: f64,
    pub c_bb: f64,
    pub c_ab: f64,
}

impl PairMoments {
    pub fn push(&mut self, a: f64, b: f64) {
        self.n += 1;
        let n = self.n as f64;
        let da = a - self.mean_a;
        let db = b - self.mean_b;
        self.mean_a += da / n;
        self.mean_b += db / n;
        self.c_aa += da * (a - self.mean_a);
        self.c_bb += db * (b - self.mean_b);
        self.c_ab += da * (b - self.mean_b);
    }

    fn scale(&self) -> Option<f64> {
        (self.n >= 2).then(|| 1.0 / (self.n - 1) as f64)
    }

    pub fn var_a(&self) -> Option<f64> {
        self.scale().map(|s| self.c_aa * s)
    }

    pub fn var_b(&self) -> Option<f64> {
        self.scale().map(|s| self.c_bb * s)
    }

    pub fn covariance(&self) -> Option<f64> {
        self.scale().map(|s| self.c_ab * s)
    }

    pub fn correlation(&self) -> Option<f64> {
        Some(self.covariance()? / (self.var_a()? * self.var_b()?).sqrt())
    }

    /// Variance of `(a + b)/2` from the joint moments.
    pub fn var_of_average(&self) -> Option<f64> {
        Some((self.var_a()? + self.var_b()? + 2.0 * self.covariance()?) / 4.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_pass(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn fewer_than_two_samples_has_no_variance() {
        let mut m = Moments::default();
        assert_eq!(m.variance(), None);
        m.push(3.0);
        assert_eq!(m.variance(), None);
        m.push(5.0);
        assert_eq!(m.variance(), Some(2.0));
    }

    proptest! {
        #[test]
        fn matches_two_pass(xs in prop::collection::vec(-1e3f64..1e3, 2..200), split in 0usize..200) {
            let mut all = Moments::default();
            xs.iter().for_each(|&x| all.push(x));
            let (m, v) = two_pass(&xs);
            prop_assert!((all.mean - m).abs() <= 1e-9 * (1.0 + m.abs()));
            prop_assert!((all.variance().unwrap() - v).abs() <= 1e-9 * (1.0 + v));

            let k = split.min(xs.len());
            let (mut a, mut b) = (Moments::default(), Moments::default());
            xs[..k].iter().for_each(|&x| a.push(x));
            xs[k..].iter().for_each(|&x| b.push(x));
            a.merge(&b);
            prop_assert_eq!(a.n, all.n);
            prop_assert!((a.mean - all.mean).abs() <= 1e-9 * (1.0 + m.abs()));
            prop_assert!((a.variance().unwrap() - v).abs() <= 1e-8 * (1.0 + v));
        }

        #[test]
        fn average_variance_identity(pairs in prop::collection::vec((-50f64..50.0, -50f64..50.0), 2..100)) {
            let mut pm = PairMoments::default();
            let mut avg = Moments::default();
            for &(a, b) in &pairs {
                pm.push(a, b);
                avg.push((a + b) / 2.0);
            }
            let direct = avg.variance().unwrap();
            prop_assert!((pm.var_of_average().unwrap() - direct).abs() <= 1e-9 * (1.0 + direct));
        }
    }
}
