//! Dimension reduction of personalized prompts.
//!
//! Clustering compares reduced prompts of different users, so every user
//! projects onto the same basis. The default basis is a seeded Gaussian
//! matrix with orthonormalized rows; alternatively the server can derive it
//! from the leading right singular vectors of the initial global prompt.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReduceError {
    #[error("rank {rank} exceeds the available dimension {dim}")]
    RankExceeded { rank: usize, dim: usize },
    #[error("shape mismatch: expected {expected} entries, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("prompt contains non-finite entries")]
    NonFinite,
    #[error("SVD did not reach the residual bound (relative residual {residual:e})")]
    ConvergenceFailure { residual: f64 },
}

/// A `k_tokens x d_embed` soft prompt, stored token-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptMatrix {
    k_tokens: usize,
    d_embed: usize,
    data: Vec<f64>,
}

impl PromptMatrix {
    pub fn zeros(k_tokens: usize, d_embed: usize) -> Self {
        Self { k_tokens, d_embed, data: vec![0.0; k_tokens * d_embed] }
    }

    pub fn from_vec(k_tokens: usize, d_embed: usize, data: Vec<f64>) -> Result<Self, ReduceError> {
        if data.len() != k_tokens * d_embed {
            return Err(ReduceError::ShapeMismatch { expected: k_tokens * d_embed, got: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ReduceError::NonFinite);
        }
        Ok(Self { k_tokens, d_embed, data })
    }

    pub fn filled(k_tokens: usize, d_embed: usize, value: f64) -> Self {
        Self { k_tokens, d_embed, data: vec![value; k_tokens * d_embed] }
    }

    pub fn k_tokens(&self) -> usize {
        self.k_tokens
    }
    pub fn d_embed(&self) -> usize {
        self.d_embed
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Token-major flattening.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, token: usize, col: usize) -> f64 {
        self.data[token * self.d_embed + col]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.k_tokens == other.k_tokens && self.d_embed == other.d_embed
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert!(self.same_shape(other));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self { data, ..*self }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert!(self.same_shape(other));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self { data, ..*self }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { data: self.data.iter().map(|a| a * s).collect(), ..*self }
    }

    /// `self -= s * other`
    pub fn axpy_neg(&mut self, s: f64, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= s * b;
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Element-wise mean of a non-empty set of equally shaped prompts.
    pub fn mean<'a, I: IntoIterator<Item = &'a PromptMatrix>>(items: I) -> Option<Self> {
        let mut it = items.into_iter();
        let first = it.next()?;
        let mut acc = first.clone();
        let mut count = 1usize;
        for p in it {
            for (a, b) in acc.data.iter_mut().zip(&p.data) {
                *a += b;
            }
            count += 1;
        }
        Some(acc.scale(1.0 / count as f64))
    }
}

/// Reduced representation of a prompt in a shared basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedPrompt {
    pub coords: Vec<f64>,
    pub basis_id: String,
}

/// Row-orthonormal projection matrix shared by all users of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedBasis {
    id: String,
    rank: usize,
    dim: usize,
    rows: Vec<f64>,
}

impl SharedBasis {
    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn rank(&self) -> usize {
        self.rank
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Basis that maps `P` to `P V_r` (token-major), where `V_r` holds the
    /// top-`r` right singular vectors of `reference`. The reduced dimension is
    /// `k_tokens * r`.
    pub fn from_reference_svd(reference: &PromptMatrix, r: usize) -> Result<Self, ReduceError> {
        let svd = truncated_svd(reference, r)?;
        let (k, d) = (reference.k_tokens, reference.d_embed);
        let rank = k * r;
        let dim = k * d;
        let mut rows = vec![0.0; rank * dim];
        for token in 0..k {
            for (c, v) in svd.right.iter().enumerate() {
                let row = token * r + c;
                rows[row * dim + token * d..row * dim + (token + 1) * d].copy_from_slice(v);
            }
        }
        Ok(Self { id: format!("svd-{k}x{d}-r{r}"), rank, dim, rows })
    }
}

/// Deterministic basis of `r` orthonormal rows in `R^d_total`, obtained by
/// orthonormalizing seeded Gaussian draws.
pub fn make_shared_basis(seed: u64, d_total: usize, r: usize) -> Result<SharedBasis, ReduceError> {
    if r > d_total || r == 0 {
        return Err(ReduceError::RankExceeded { rank: r, dim: d_total });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(r);
    while rows.len() < r {
        let mut v: Vec<f64> = (0..d_total).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm0 = norm(&v);
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for u in &rows {
                let proj = dot(&v, u);
                for (a, b) in v.iter_mut().zip(u) {
                    *a -= proj * b;
                }
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 * norm0 {
            rows.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    Ok(SharedBasis {
        id: format!("gauss-{seed:016x}-{r}x{d_total}"),
        rank: r,
        dim: d_total,
        rows: rows.concat(),
    })
}

/// `coords = basis * flatten(P)`.
pub fn reduce_prompt(p: &PromptMatrix, basis: &SharedBasis) -> Result<ReducedPrompt, ReduceError> {
    if p.len() != basis.dim {
        return Err(ReduceError::ShapeMismatch { expected: basis.dim, got: p.len() });
    }
    let coords = (0..basis.rank).map(|i| dot(basis.row(i), p.as_slice())).collect();
    Ok(ReducedPrompt { coords, basis_id: basis.id.clone() })
}

/// Leading singular triplets of a prompt matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub singular_values: Vec<f64>,
    /// Left singular vectors, each of length `k_tokens`.
    pub left: Vec<Vec<f64>>,
    /// Right singular vectors, each of length `d_embed`.
    pub right: Vec<Vec<f64>>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self, k_tokens: usize, d_embed: usize) -> PromptMatrix {
        let mut out = PromptMatrix::zeros(k_tokens, d_embed);
        for ((s, u), v) in self.singular_values.iter().zip(&self.left).zip(&self.right) {
            for i in 0..k_tokens {
                for j in 0..d_embed {
                    out.data[i * d_embed + j] += s * u[i] * v[j];
                }
            }
        }
        out
    }
}

const SVD_RESIDUAL_BOUND: f64 = 1e-8;
const MAX_SWEEPS: usize = 80;

/// Top-`r` singular triplets via one-sided Jacobi rotations on the smaller
/// side of the matrix.
pub fn truncated_svd(p: &PromptMatrix, r: usize) -> Result<TruncatedSvd, ReduceError> {
    let (k, d) = (p.k_tokens, p.d_embed);
    if r > k.min(d) {
        return Err(ReduceError::RankExceeded { rank: r, dim: k.min(d) });
    }
    // Columns to orthogonalize: rows of P when k <= d (work on P^T), else columns.
    let transpose = k <= d;
    let (ncols, len) = if transpose { (k, d) } else { (d, k) };
    let mut cols: Vec<Vec<f64>> = (0..ncols)
        .map(|c| {
            (0..len).map(|i| if transpose { p.get(c, i) } else { p.get(i, c) }).collect()
        })
        .collect();
    let mut vmat: Vec<Vec<f64>> =
        (0..ncols).map(|c| (0..ncols).map(|i| if i == c { 1.0 } else { 0.0 }).collect()).collect();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for a in 0..ncols {
            for b in a + 1..ncols {
                let alpha = dot(&cols[a], &cols[a]);
                let beta = dot(&cols[b], &cols[b]);
                let gamma = dot(&cols[a], &cols[b]);
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, a, b, c, s);
                rotate(&mut vmat, a, b, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }

    let mut triplets: Vec<(f64, Vec<f64>, Vec<f64>)> = cols
        .into_iter()
        .zip(vmat)
        .map(|(c, v)| {
            let s = norm(&c);
            let u = if s > 0.0 { c.iter().map(|x| x / s).collect() } else { vec![0.0; len] };
            (s, u, v)
        })
        .collect();
    triplets.sort_by(|x, y| y.0.total_cmp(&x.0));

    // Full-rank residual check.
    let total = p.frobenius_sq().sqrt();
    let (sv, us, vs): (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) = triplets.into_iter().fold(
        (Vec::new(), Vec::new(), Vec::new()),
        |(mut a, mut b, mut c), (s, u, v)| {
            a.push(s);
            b.push(u);
            c.push(v);
            (a, b, c)
        },
    );
    let (left_all, right_all) = if transpose { (vs, us) } else { (us, vs) };
    let full = TruncatedSvd { singular_values: sv, left: left_all, right: right_all };
    let residual = if total > 0.0 {
        full.reconstruct(k, d).sub(p).frobenius_sq().sqrt() / total
    } else {
        0.0
    };
    if !converged || residual > SVD_RESIDUAL_BOUND {
        return Err(ReduceError::ConvergenceFailure { residual });
    }
    Ok(TruncatedSvd {
        singular_values: full.singular_values[..r].to_vec(),
        left: full.left[..r].to_vec(),
        right: full.right[..r].to_vec(),
    })
}

fn rotate(cols: &mut [Vec<f64>], a: usize, b: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(b);
    for (x, y) in lo[a].iter_mut().zip(hi[0].iter_mut()) {
        let (xa, yb) = (*x, *y);
        *x = c * xa - s * yb;
        *y = s * xa + c * yb;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_prompt(seed: u64, k: usize, d: usize) -> PromptMatrix {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let data = (0..k * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        PromptMatrix::from_vec(k, d, data).unwrap()
    }

    #[test]
    fn basis_rows_are_orthonormal() {
        let b = make_shared_basis(9, 120, 8).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let g = dot(b.row(i), b.row(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-10, "gram[{i}][{j}] = {g}");
            }
        }
    }

    #[test]
    fn basis_is_deterministic() {
        let a = make_shared_basis(42, 30, 5).unwrap();
        let b = make_shared_basis(42, 30, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, make_shared_basis(43, 30, 5).unwrap());
        assert!(matches!(make_shared_basis(1, 4, 5), Err(ReduceError::RankExceeded { .. })));
    }

    #[test]
    fn full_rank_basis_is_isometry() {
        let basis = make_shared_basis(3, 12, 12).unwrap();
        let p1 = random_prompt(1, 3, 4);
        let p2 = random_prompt(2, 3, 4);
        let r1 = reduce_prompt(&p1, &basis).unwrap();
        let r2 = reduce_prompt(&p2, &basis).unwrap();
        let dr: f64 = r1.coords.iter().zip(&r2.coords).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((dr - p1.sub(&p2).frobenius_sq()).abs() < 1e-10);
    }

    #[test]
    fn zero_prompt_reduces_to_zero() {
        let basis = make_shared_basis(3, 12, 4).unwrap();
        let r = reduce_prompt(&PromptMatrix::zeros(3, 4), &basis).unwrap();
        assert_eq!(r.coords, vec![0.0; 4]);
        assert!(matches!(
            reduce_prompt(&PromptMatrix::zeros(2, 4), &basis),
            Err(ReduceError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn svd_of_rank_one() {
        let u = [1.0, 2.0, -1.0];
        let v = [0.5, 0.0, 3.0, 1.0];
        let data = u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
        let p = PromptMatrix::from_vec(3, 4, data).unwrap();
        let svd = truncated_svd(&p, 3).unwrap();
        assert!(svd.singular_values[1].abs() < 1e-12 && svd.singular_values[2].abs() < 1e-12);
        let one = truncated_svd(&p, 1).unwrap();
        assert!(one.reconstruct(3, 4).sub(&p).frobenius_sq() < 1e-20);
    }

    #[test]
    fn svd_of_diagonal() {
        let p = PromptMatrix::from_vec(3, 3, vec![3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0])
            .unwrap();
        let svd = truncated_svd(&p, 2).unwrap();
        assert!((svd.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((svd.singular_values[1] - 2.0).abs() < 1e-12);
        let resid = svd.reconstruct(3, 3).sub(&p).frobenius_sq().sqrt();
        assert!((resid - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reference_basis_projects_onto_right_factors() {
        let g = random_prompt(5, 4, 10);
        let basis = SharedBasis::from_reference_svd(&g, 3).unwrap();
        assert_eq!(basis.rank(), 12);
        for i in 0..12 {
            for j in 0..12 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(basis.row(i), basis.row(j)) - want).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn projection_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, s1 in 0u64..1000, s2 in 0u64..1000) {
            let basis = make_shared_basis(77, 20, 6).unwrap();
            let p1 = random_prompt(s1, 4, 5);
            let p2 = random_prompt(s2 + 1000, 4, 5);
            let lhs = reduce_prompt(&p1.scale(a).add(&p2.scale(b)), &basis).unwrap();
            let r1 = reduce_prompt(&p1, &basis).unwrap();
            let r2 = reduce_prompt(&p2, &basis).unwrap();
            for i in 0..6 {
                prop_assert!((lhs.coords[i] - (a * r1.coords[i] + b * r2.coords[i])).abs() < 1e-9);
            }
        }
    }
}
