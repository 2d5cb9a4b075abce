//! Seeded Monte Carlo oracles.
//!
//! Work is split into fixed chunks whose generators are derived from the
//! base seed and the chunk index, so results do not depend on the number
//! of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared as ChiSquaredDensity, Continuous};

use super::InfoError;

pub const CHUNK: usize = 10_000;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Generator for chunk `chunk` of a stream seeded by `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Estimates `E[f(X)]` from `samples` draws, where `draw` produces one
/// value of `f(X)` from a generator.
pub fn mc_mean<F>(samples: usize, seed: u64, draw: F) -> Result<Estimate, InfoError>
where
    F: Fn(&mut ChaCha20Rng) -> f64 + Sync,
{
    if samples < 2 {
        return Err(InfoError::InsufficientSamples { needed: 2, got: samples });
    }
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(samples - c * CHUNK);
            let mut rng = chunk_rng(seed, c as u64);
            // Welford within the chunk
            let (mut mean, mut m2) = (0.0, 0.0);
            for i in 0..len {
                let v = draw(&mut rng);
                let delta = v - mean;
                mean += delta / (i + 1) as f64;
                m2 += delta * (v - mean);
            }
            (mean, m2, len)
        })
        .collect();
    let (mut mean, mut m2, mut count) = (0.0, 0.0, 0usize);
    for (pm, pm2, pc) in partial {
        let total = count + pc;
        let delta = pm - mean;
        mean += delta * pc as f64 / total as f64;
        m2 += pm2 + delta * delta * (count * pc) as f64 / total as f64;
        count = total;
    }
    if !mean.is_finite() {
        return Err(InfoError::PrecisionLoss("Monte Carlo mean is not finite".into()));
    }
    let var = m2 / (count - 1) as f64;
    Ok(Estimate { mean, stderr: (var / count as f64).sqrt() })
}

/// Draws `sum_k (Z_k + nu_k)^2` with all the non-centrality on one axis.
pub fn sample_ncx2(d: usize, tau: f64, rng: &mut ChaCha20Rng) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    let head = (z + tau.sqrt()).powi(2);
    if d == 1 {
        head
    } else {
        head + ChiSquared::new((d - 1) as f64).expect("positive dof").sample(rng)
    }
}

/// `E[ln X]`, `X ~ ncchi2(d, tau)`, built from explicit normal coordinates.
pub fn mc_expected_log_ncx2(d: usize, tau: f64, samples: usize, seed: u64) -> Result<Estimate, InfoError> {
    if d == 0 || !(tau >= 0.0) {
        return Err(InfoError::Domain(format!("ncchi2(d = {d}, tau = {tau})")));
    }
    let shift = (tau / d as f64).sqrt();
    let normal = Normal::new(shift, 1.0).expect("unit variance");
    mc_mean(samples, seed, |rng| {
        let x: f64 = (0..d).map(|_| normal.sample(rng).powi(2)).sum();
        x.ln()
    })
}

/// Differential entropy `-E[ln f(X)]` of `chi2(d)`, with the density taken
/// from an independent implementation.
pub fn mc_chi2_entropy(d: usize, samples: usize, seed: u64) -> Result<Estimate, InfoError> {
    if d == 0 {
        return Err(InfoError::Domain("chi2 needs d >= 1".into()));
    }
    let density = ChiSquaredDensity::new(d as f64).map_err(|e| InfoError::Domain(e.to_string()))?;
    let sampler = ChiSquared::new(d as f64).map_err(|e| InfoError::Domain(e.to_string()))?;
    mc_mean(samples, seed, |rng| -density.ln_pdf(sampler.sample(rng)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_count_does_not_change_result() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_expected_log_ncx2(3, 1.0, 35_000, 9).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn uniform_mean_and_error() {
        use rand::Rng;
        let e = mc_mean(200_000, 1, |rng| rng.random::<f64>()).unwrap();
        assert!((e.mean - 0.5).abs() < 4.0 * e.stderr);
        assert!((e.stderr - (1.0 / 12.0f64 / 200_000.0).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn ncx2_sampler_has_right_mean() {
        let e = mc_mean(100_000, 2, |rng| sample_ncx2(5, 3.0, rng)).unwrap();
        assert!((e.mean - 8.0).abs() < 4.0 * e.stderr);
    }
}
