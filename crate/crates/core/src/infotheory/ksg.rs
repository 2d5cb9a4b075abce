//! Nearest-neighbour estimators under the max-norm: the first
//! Kraskov-Stoegbauer-Grassberger mutual information estimator and the
//! Kozachenko-Leonenko entropy estimator.
//!
//! Neighbour search is brute force. Sample sizes here are a few thousand,
//! where a quadratic scan parallelized over query points is fast enough
//! and exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::special::digamma;
use super::InfoError;

pub const MIN_SAMPLES: usize = 100;
const JITTER: f64 = 1e-10;

/// Row-major sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    dim: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, InfoError> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(InfoError::Domain("samples must be non-empty rows of equal length".into()));
        }
        let data: Vec<f64> = rows.concat();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(InfoError::Domain("samples must be finite".into()));
        }
        Ok(Self { dim, data })
    }

    /// Scalars replicated `copies` times per row.
    pub fn replicated(values: &[f64], copies: usize) -> Result<Self, InfoError> {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v; copies.max(1)]).collect();
        Self::from_rows(&rows)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.row(i).iter().zip(self.row(j)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    fn has_duplicates(&self) -> bool {
        let mut rows: Vec<&[f64]> = (0..self.len()).map(|i| self.row(i)).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        rows.windows(2).any(|w| w[0] == w[1])
    }

    /// Adds uniform noise of relative size `1e-10` when rows repeat.
    fn jittered(&self, seed: u64) -> Self {
        if !self.has_duplicates() {
            return self.clone();
        }
        log::debug!("duplicate samples found, applying jitter");
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0) * JITTER;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let data = self.data.iter().map(|v| v + scale * rng.random_range(-1.0..1.0)).collect();
        Self { dim: self.dim, data }
    }
}

fn check(n: usize, k: usize) -> Result<(), InfoError> {
    if n < MIN_SAMPLES {
        return Err(InfoError::InsufficientSamples { needed: MIN_SAMPLES, got: n });
    }
    if k == 0 || k >= n {
        return Err(InfoError::BadConfig(format!("k = {k} must be in 1..{n}")));
    }
    Ok(())
}

/// Distance from each point to its `k`-th nearest neighbour.
fn kth_distances(s: &Samples, k: usize) -> Vec<f64> {
    let n = s.len();
    (0..n)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            buf.clear();
            buf.extend((0..n).filter(|&j| j != i).map(|j| s.dist(i, j)));
            *buf.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b)).1
        })
        .collect()
}

/// KSG estimator (variant 1) of `I(X; Y)` in nats.
pub fn ksg_mi(x: &Samples, y: &Samples, k: usize) -> Result<f64, InfoError> {
    if x.len() != y.len() {
        return Err(InfoError::Domain(format!("{} x-samples but {} y-samples", x.len(), y.len())));
    }
    let n = x.len();
    check(n, k)?;
    let x = x.jittered(0x6b73_6778);
    let y = y.jittered(0x6b73_6779);
    let counts: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |buf: &mut Vec<(f64, f64)>, i| {
            buf.clear();
            buf.extend((0..n).filter(|&j| j != i).map(|j| (x.dist(i, j), y.dist(i, j))));
            let eps = {
                let (_, kth, _) = buf.select_nth_unstable_by(k - 1, |a, b| a.0.max(a.1).total_cmp(&b.0.max(b.1)));
                kth.0.max(kth.1)
            };
            let nx = buf.iter().filter(|p| p.0 < eps).count();
            let ny = buf.iter().filter(|p| p.1 < eps).count();
            (nx, ny)
        })
        .collect();
    let degenerate = counts.iter().filter(|&&(a, b)| a + 1 == k && b + 1 == k).count();
    if degenerate * 10 > n * 9 {
        log::warn!("KSG neighbourhoods coincide in both margins; Y looks like a deterministic copy of X");
    }
    let mut marginal = 0.0;
    for &(nx, ny) in &counts {
        marginal += digamma((nx + 1) as f64)? + digamma((ny + 1) as f64)?;
    }
    Ok(digamma(k as f64)? + digamma(n as f64)? - marginal / n as f64)
}

/// Kozachenko-Leonenko differential entropy estimate in nats.
pub fn kl_entropy(x: &Samples, k: usize) -> Result<f64, InfoError> {
    let n = x.len();
    check(n, k)?;
    let x = x.jittered(0x6b6c_656e);
    let eps = kth_distances(&x, k);
    let log_sum: f64 = eps.iter().map(|e| (2.0 * e).ln()).sum();
    Ok(digamma(n as f64)? - digamma(k as f64)? + x.dim() as f64 * log_sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn rejects_small_samples() {
        let x = Samples::from_rows(&normals(50, 1, 1)).unwrap();
        assert!(matches!(ksg_mi(&x, &x, 3), Err(InfoError::InsufficientSamples { .. })));
        assert!(matches!(kl_entropy(&x, 3), Err(InfoError::InsufficientSamples { .. })));
    }

    #[test]
    fn duplicates_are_jittered() {
        let mut rows = normals(200, 2, 3);
        rows[5] = rows[4].clone();
        let x = Samples::from_rows(&rows).unwrap();
        assert!(x.has_duplicates());
        assert!(!x.jittered(1).has_duplicates());
        assert!(kl_entropy(&x, 3).unwrap().is_finite());
    }

    #[test]
    fn copy_grows_with_sample_size() {
        let est = |n| {
            let x = Samples::from_rows(&normals(n, 1, 5)).unwrap();
            ksg_mi(&x, &x, 3).unwrap()
        };
        let (small, large) = (est(200), est(2000));
        assert!(large > small + 2.0, "{small} then {large}");
    }

    #[test]
    fn gaussian_entropy() {
        let x = Samples::from_rows(&normals(2000, 2, 7)).unwrap();
        let want = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((kl_entropy(&x, 3).unwrap() - want).abs() < 0.1);
    }
}
