use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, stderr: f64::NAN, samples: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, stderr, samples: n }
    }

    pub fn variance(&self) -> f64 {
        self.stderr * self.stderr * self.samples as f64
    }

    /// `|mean - target|` in units of the standard error. A zero standard
    /// error is replaced by `floor` so deterministic estimates compare sanely.
    pub fn sigmas_from(&self, target: f64, floor: f64) -> f64 {
        (self.mean - target).abs() / self.stderr.max(floor)
    }

    pub fn within(&self, target: f64, sigmas: f64, floor: f64) -> bool {
        (self.mean - target).abs() <= sigmas * self.stderr.max(floor)
    }
}

/// Bernoulli success-rate estimate.
pub fn rate(successes: usize, trials: usize) -> Estimate {
    let p = successes as f64 / trials.max(1) as f64;
    Estimate {
        mean: p,
        stderr: (p * (1.0 - p) / trials.max(1) as f64).sqrt(),
        samples: trials,
    }
}

/// Shannon entropy in bits; zero weights are skipped.
pub fn shannon_bits(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_stats() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert!((e.mean - 2.5).abs() < 1e-15);
        // sample variance 5/3, stderr sqrt(5/12)
        assert!((e.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!((e.variance() - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn binary_entropy() {
        assert!((shannon_bits(&[0.5, 0.5]) - 1.0).abs() < 1e-15);
        assert_eq!(shannon_bits(&[1.0, 0.0]), 0.0);
    }

    #[test]
    fn rate_estimate() {
        let r = rate(30, 100);
        assert!((r.mean - 0.3).abs() < 1e-15);
        assert!((r.stderr - (0.21f64 / 100.0).sqrt()).abs() < 1e-15);
    }
}
