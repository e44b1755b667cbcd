//! Seeded Monte-Carlo means. Draws are split into fixed-size batches; batch
//! `b` uses ChaCha stream `b` of the seed, and batch statistics are merged in
//! batch order, so the estimate does not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::par::{map_indexed, Execution};

pub const BATCH: usize = 8192;

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub draws: usize,
}

impl Estimate {
    /// `|mean - target| <= k * std_err`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_err
    }
}

#[derive(Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }
}

/// Stream-seeded generator for batch `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean of `sample` over `draws` independent draws.
pub fn estimate<F>(draws: usize, seed: u64, exec: Execution, sample: F) -> Estimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync + Send,
{
    assert!(draws >= 2, "need at least two draws");
    let batches = draws.div_ceil(BATCH);
    let parts = map_indexed(exec, batches, |b| {
        let mut rng = stream_rng(seed, b as u64);
        let count = BATCH.min(draws - b * BATCH);
        let mut m = Moments { n: 0.0, mean: 0.0, m2: 0.0 };
        for _ in 0..count {
            let x = sample(&mut rng);
            m.n += 1.0;
            let d = x - m.mean;
            m.mean += d / m.n;
            m.m2 += d * (x - m.mean);
        }
        m
    });
    let total = parts
        .into_iter()
        .fold(Moments { n: 0.0, mean: 0.0, m2: 0.0 }, Moments::merge);
    let var = total.m2 / (total.n - 1.0);
    Estimate {
        mean: total.mean,
        std_err: (var / total.n).sqrt(),
        draws,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn uniform_mean() {
        let e = estimate(100_000, 1, Execution::Parallel, |r| r.random::<f64>());
        assert!(e.within(0.5, 4.0), "{e:?}");
        assert!((e.std_err - (1.0f64 / 12.0 / 1e5).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn execution_mode_does_not_change_result() {
        let f = |r: &mut ChaCha8Rng| r.random::<f64>().powi(3);
        let a = estimate(50_001, 9, Execution::Parallel, f);
        let b = estimate(50_001, 9, Execution::Sequential, f);
        assert_eq!(a, b);
    }
}
