//! Poisson counting noise and seeded drift.
//!
//! Every bin gets its own ChaCha stream derived from `(seed, bin index)`, so
//! a sampled trace does not depend on the order in which bins are drawn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{FringeTrace, NoiseMeta};
use crate::error::{Error, Result};

/// Counter-based generator for bin `index` under `seed`.
pub fn bin_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn poisson_draw<R: Rng>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    // mean > 0 and finite here, so construction cannot fail
    Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0)
}

/// Replace each bin's expected counts by a Poisson draw with that mean.
pub fn apply_shot_noise(trace: &FringeTrace, seed: u64) -> Result<FringeTrace> {
    if trace.counts.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("counts"));
    }
    let counts = trace
        .counts
        .iter()
        .enumerate()
        .map(|(i, &mean)| poisson_draw(mean, &mut bin_rng(seed, i as u64)))
        .collect();
    let mut meta = trace.meta.clone();
    if let Some(m) = meta.as_mut() {
        m.shot_noise = Some(NoiseMeta { seed });
    }
    Ok(FringeTrace {
        freq: trace.freq.clone(),
        counts,
        meta,
    })
}

/// Gaussian random walk starting at zero.
pub(crate) fn random_walk(n: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("random-walk sigma must be >= 0, got {sigma}")));
    }
    let step = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    Ok((0..n)
        .map(|k| {
            if k > 0 {
                acc += step.sample(&mut rng);
            }
            acc
        })
        .collect())
}
