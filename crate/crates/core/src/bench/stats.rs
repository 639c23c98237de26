use serde::{Deserialize, Serialize};

use super::BenchError;

/// Mean and population standard deviation (divisor `n`), one pass.
pub fn stats(samples: &[f64]) -> Result<(f64, f64), BenchError> {
    if samples.is_empty() {
        return Err(BenchError::EmptySamples);
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    Ok((mean, (m2 / samples.len() as f64).sqrt()))
}

/// Drops the first 5% of the samples (rounded down).
pub fn discard_warmup<T>(samples: &[T]) -> &[T] {
    &samples[samples.len() * 5 / 100..]
}

/// Durations in nanoseconds with their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub n: usize,
    pub t_avg: f64,
    pub sigma: f64,
    pub samples: Vec<u64>,
}

impl Measurement {
    pub fn from_samples(samples: Vec<u64>) -> Result<Self, BenchError> {
        let xs: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
        let (t_avg, sigma) = stats(&xs)?;
        Ok(Measurement {
            n: samples.len(),
            t_avg,
            sigma,
            samples,
        })
    }

    /// Summary of the samples left after warm-up.
    pub fn steady_state(samples: &[u64]) -> Result<Self, BenchError> {
        Self::from_samples(discard_warmup(samples).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples() {
        assert_eq!(stats(&[2.0, 2.0, 2.0]).unwrap(), (2.0, 0.0));
    }

    #[test]
    fn two_samples() {
        assert_eq!(stats(&[1.0, 3.0]).unwrap(), (2.0, 1.0));
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(stats(&[]), Err(BenchError::EmptySamples)));
    }

    #[test]
    fn single_rep() {
        let m = Measurement::steady_state(&[40]).unwrap();
        assert_eq!((m.n, m.t_avg, m.sigma), (1, 40.0, 0.0));
    }

    #[test]
    fn warmup_drops_five_percent() {
        let xs: Vec<u32> = (0..1000).collect();
        assert_eq!(discard_warmup(&xs).len(), 950);
        assert_eq!(discard_warmup(&xs)[0], 50);
        assert_eq!(discard_warmup(&xs[..19]).len(), 19);
        assert_eq!(discard_warmup(&xs[..20]).len(), 19);
    }
}
