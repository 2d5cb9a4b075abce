//! Lagrange coded computing over a prime field.
//!
//! A batch of `ell` secret vectors is encoded, coordinate by coordinate, as a
//! polynomial `u` of degree `ell + t - 1` with `u(beta_k) = secret_k` for
//! `k < ell` and `u(beta_{ell+k}) = pad_k` for `t` uniform pads. Holder `j`
//! receives `u(alpha_j)`. Any coordinate-wise polynomial `f` applied to the
//! shares yields shares of `f(secret_k)` on the composite polynomial `f(u)`,
//! which has degree `deg(f) * (ell + t - 1)` and is decoded by interpolation
//! ([`recon`]) or by Gao's Reed-Solomon decoder when some results are wrong
//! ([`recon_robust`]).

pub(crate) mod poly;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldElement, PrimeField};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LccError {
    #[error("bad LCC parameters: {0}")]
    BadParams(String),
    #[error("expected {expected} secret slices of equal dimension, got {got}")]
    SecretShape { expected: usize, got: String },
    #[error("need at least {needed} shares from distinct holders, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("holder {0} appears more than once")]
    DuplicateHolder(usize),
    #[error("holder {0} is outside the configured holder range")]
    UnknownHolder(usize),
    #[error("share vectors have mismatched dimensions")]
    ShapeMismatch,
    #[error("share from holder {holder} is inconsistent with a degree-{degree} polynomial")]
    DegreeMismatch { holder: usize, degree: usize },
    #[error("no codeword of degree {degree} within {budget} errors (coordinate {coordinate})")]
    DecodingFailure { degree: usize, budget: usize, coordinate: usize },
}

/// Code parameters and the evaluation/interpolation points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LccParams {
    field: PrimeField,
    n: usize,
    t: usize,
    ell: usize,
    deg_cap: usize,
    interp_points: Vec<FieldElement>,
    eval_points: Vec<FieldElement>,
    #[serde(skip)]
    encode: Vec<Vec<FieldElement>>,
}

impl LccParams {
    /// Standard point layout: `beta = 1..=ell+t`, `alpha = ell+t+1..=ell+t+n`.
    pub fn new(
        field: PrimeField,
        n: usize,
        t: usize,
        ell: usize,
        deg_cap: usize,
    ) -> Result<Self, LccError> {
        let k = ell + t;
        if (k + n) as u128 >= field.modulus() as u128 {
            return Err(LccError::BadParams(format!(
                "field of size {} cannot hold {} distinct points",
                field.modulus(),
                k + n
            )));
        }
        let interp = (1..=k as u64).map(|v| field.elem(v)).collect();
        let eval = (k as u64 + 1..=(k + n) as u64).map(|v| field.elem(v)).collect();
        Self::with_points(field, n, t, ell, deg_cap, interp, eval)
    }

    /// Custom point sets. All points must be pairwise distinct.
    pub fn with_points(
        field: PrimeField,
        n: usize,
        t: usize,
        ell: usize,
        deg_cap: usize,
        interp_points: Vec<FieldElement>,
        eval_points: Vec<FieldElement>,
    ) -> Result<Self, LccError> {
        if ell == 0 {
            return Err(LccError::BadParams("ell must be at least 1".into()));
        }
        if deg_cap == 0 {
            return Err(LccError::BadParams("degree cap must be at least 1".into()));
        }
        if interp_points.len() != ell + t || eval_points.len() != n {
            return Err(LccError::BadParams(format!(
                "expected {} interpolation and {} evaluation points",
                ell + t,
                n
            )));
        }
        let needed = deg_cap * (ell + t - 1) + 1;
        if needed > n {
            return Err(LccError::BadParams(format!(
                "degree-{deg_cap} decoding needs {deg_cap}*(ell+t-1)+1 = {needed} holders but n = {n} \
                 (ell = {ell}, t = {t})"
            )));
        }
        let mut all: Vec<u64> =
            interp_points.iter().chain(&eval_points).map(|p| p.value()).collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(LccError::BadParams("interpolation and evaluation points collide".into()));
        }
        let encode = lagrange_matrix(&field, &interp_points, &eval_points);
        Ok(Self { field, n, t, ell, deg_cap, interp_points, eval_points, encode })
    }

    /// `max(1, floor((n - 2t + 1) / 2))`, the largest `ell` for which degree-2
    /// results remain decodable from all `n` holders.
    pub fn default_ell(n: usize, t: usize) -> usize {
        ((n + 1).saturating_sub(2 * t) / 2).max(1)
    }

    /// `floor((n - t) / 2)`; only valid for degree-1 computations when `t > 1`.
    pub fn half_ell(n: usize, t: usize) -> usize {
        (n.saturating_sub(t) / 2).max(1)
    }

    /// Privacy threshold `floor(alpha * n)`.
    pub fn threshold(n: usize, alpha: f64) -> usize {
        (alpha * n as f64 + 1e-9).floor() as usize
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn ell(&self) -> usize {
        self.ell
    }
    pub fn deg_cap(&self) -> usize {
        self.deg_cap
    }
    pub fn interp_points(&self) -> &[FieldElement] {
        &self.interp_points
    }
    pub fn eval_points(&self) -> &[FieldElement] {
        &self.eval_points
    }

    /// Degree of the encoding polynomial, `ell + t - 1`.
    pub fn code_degree(&self) -> usize {
        self.ell + self.t - 1
    }

    /// Decoding degree after applying a polynomial of degree `comp_degree`.
    pub fn recon_degree(&self, comp_degree: usize) -> usize {
        comp_degree * self.code_degree()
    }

    fn encode_matrix(&self) -> std::borrow::Cow<'_, Vec<Vec<FieldElement>>> {
        if self.encode.is_empty() {
            // deserialized params carry no cached matrix
            std::borrow::Cow::Owned(lagrange_matrix(&self.field, &self.interp_points, &self.eval_points))
        } else {
            std::borrow::Cow::Borrowed(&self.encode)
        }
    }
}

/// One holder's coded share.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareBundle {
    pub holder: usize,
    pub share: Vec<FieldElement>,
}

/// `M[j][h] = L_h(targets[j])`, the Lagrange basis over `nodes` evaluated at
/// each target.
pub(crate) fn lagrange_matrix(
    f: &PrimeField,
    nodes: &[FieldElement],
    targets: &[FieldElement],
) -> Vec<Vec<FieldElement>> {
    let m = nodes.len();
    // barycentric weights w_h = 1 / prod_{k != h} (x_h - x_k)
    let denoms: Vec<FieldElement> = (0..m)
        .map(|h| {
            (0..m)
                .filter(|&k| k != h)
                .fold(f.one(), |acc, k| f.mul(acc, f.sub(nodes[h], nodes[k])))
        })
        .collect();
    let weights = f.batch_inv(&denoms).expect("nodes are distinct");
    targets
        .iter()
        .map(|&y| {
            if let Some(pos) = nodes.iter().position(|&x| x == y) {
                let mut row = vec![f.zero(); m];
                row[pos] = f.one();
                return row;
            }
            let diffs: Vec<FieldElement> = nodes.iter().map(|&x| f.sub(y, x)).collect();
            let full = diffs.iter().fold(f.one(), |acc, &d| f.mul(acc, d));
            let inv = f.batch_inv(&diffs).expect("target differs from every node");
            (0..m).map(|h| f.mul(full, f.mul(weights[h], inv[h]))).collect()
        })
        .collect()
}

/// Encodes `ell` equal-length secret vectors into `n` shares.
pub fn share<R: Rng + ?Sized>(
    secrets: &[Vec<FieldElement>],
    params: &LccParams,
    rng: &mut R,
) -> Result<Vec<ShareBundle>, LccError> {
    let f = params.field;
    let dim = secrets.first().map_or(0, |s| s.len());
    if secrets.len() != params.ell || secrets.iter().any(|s| s.len() != dim) {
        return Err(LccError::SecretShape {
            expected: params.ell,
            got: format!("{:?}", secrets.iter().map(Vec::len).collect::<Vec<_>>()),
        });
    }
    let pads: Vec<Vec<FieldElement>> =
        (0..params.t).map(|_| (0..dim).map(|_| f.random(rng)).collect()).collect();
    let words: Vec<&Vec<FieldElement>> = secrets.iter().chain(pads.iter()).collect();
    let encode = params.encode_matrix();
    Ok(encode
        .iter()
        .enumerate()
        .map(|(holder, row)| {
            let mut share = vec![f.zero(); dim];
            for (coef, word) in row.iter().zip(&words) {
                for (acc, &w) in share.iter_mut().zip(word.iter()) {
                    *acc = f.add(*acc, f.mul(*coef, w));
                }
            }
            ShareBundle { holder, share }
        })
        .collect())
}

/// Slices `v` into `ell` pieces and shares them.
pub fn share_vector<R: Rng + ?Sized>(
    v: &[FieldElement],
    params: &LccParams,
    rng: &mut R,
) -> Result<Vec<ShareBundle>, LccError> {
    share(&slice_vector(v, params.ell), params, rng)
}

fn validate_holders(shares: &[ShareBundle], params: &LccParams) -> Result<usize, LccError> {
    let dim = shares.first().map_or(0, |s| s.share.len());
    let mut seen = vec![false; params.n];
    for s in shares {
        if s.holder >= params.n {
            return Err(LccError::UnknownHolder(s.holder));
        }
        if std::mem::replace(&mut seen[s.holder], true) {
            return Err(LccError::DuplicateHolder(s.holder));
        }
        if s.share.len() != dim {
            return Err(LccError::ShapeMismatch);
        }
    }
    Ok(dim)
}

/// Erasure decoding: interpolates the degree-`degree` polynomial through the
/// first `degree + 1` shares and returns its values at the `ell` secret
/// points. Any further shares are checked against the interpolant.
pub fn recon(
    shares: &[ShareBundle],
    degree: usize,
    params: &LccParams,
) -> Result<Vec<Vec<FieldElement>>, LccError> {
    let f = params.field;
    let dim = validate_holders(shares, params)?;
    if shares.len() < degree + 1 {
        return Err(LccError::InsufficientShares { needed: degree + 1, got: shares.len() });
    }
    let (basis, extra) = shares.split_at(degree + 1);
    let nodes: Vec<FieldElement> = basis.iter().map(|s| params.eval_points[s.holder]).collect();
    let targets = &params.interp_points[..params.ell];
    let coeffs = lagrange_matrix(&f, &nodes, targets);
    let combine = |row: &[FieldElement], c: usize| {
        row.iter().zip(basis).fold(f.zero(), |acc, (w, s)| f.add(acc, f.mul(*w, s.share[c])))
    };
    if !extra.is_empty() {
        let checks: Vec<FieldElement> = extra.iter().map(|s| params.eval_points[s.holder]).collect();
        let check_rows = lagrange_matrix(&f, &nodes, &checks);
        for (row, s) in check_rows.iter().zip(extra) {
            if (0..dim).any(|c| combine(row, c) != s.share[c]) {
                return Err(LccError::DegreeMismatch { holder: s.holder, degree });
            }
        }
    }
    Ok(coeffs.iter().map(|row| (0..dim).map(|c| combine(row, c)).collect()).collect())
}

/// Reconstructs and concatenates the slices back into a vector of length `dim`.
pub fn recon_vector(
    shares: &[ShareBundle],
    degree: usize,
    params: &LccParams,
    dim: usize,
) -> Result<Vec<FieldElement>, LccError> {
    Ok(unslice(&recon(shares, degree, params)?, dim))
}

/// Result of [`recon_robust`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RobustRecon {
    pub secrets: Vec<Vec<FieldElement>>,
    /// Holders whose share disagreed with the decoded codeword in at least one
    /// coordinate, ascending.
    pub corrupted: Vec<usize>,
}

/// Reed-Solomon decoding with Gao's algorithm. With `m` shares, up to
/// `floor((m - degree - 1) / 2)` wrong values per coordinate are corrected.
pub fn recon_robust(
    shares: &[ShareBundle],
    degree: usize,
    params: &LccParams,
) -> Result<RobustRecon, LccError> {
    let f = params.field;
    let dim = validate_holders(shares, params)?;
    let m = shares.len();
    if m < degree + 1 {
        return Err(LccError::InsufficientShares { needed: degree + 1, got: m });
    }
    let budget = (m - degree - 1) / 2;
    let xs: Vec<FieldElement> = shares.iter().map(|s| params.eval_points[s.holder]).collect();
    let targets = &params.interp_points[..params.ell];

    // Fast path: interpolate through the first degree+1 shares and keep the
    // result for every coordinate on which all remaining shares agree.
    let nodes = &xs[..degree + 1];
    let to_targets = lagrange_matrix(&f, nodes, targets);
    let to_rest = lagrange_matrix(&f, nodes, &xs[degree + 1..]);
    let g0 = poly::from_roots(&f, &xs);

    let mut secrets = vec![vec![f.zero(); dim]; params.ell];
    let mut corrupted = vec![false; m];
    for c in 0..dim {
        let ys: Vec<FieldElement> = shares.iter().map(|s| s.share[c]).collect();
        let clean = to_rest.iter().enumerate().all(|(r, row)| f.dot(row, &ys[..degree + 1]) == ys[degree + 1 + r]);
        if clean {
            for (k, row) in to_targets.iter().enumerate() {
                secrets[k][c] = f.dot(row, &ys[..degree + 1]);
            }
            continue;
        }
        let msg = gao_decode(&f, &xs, &ys, &g0, degree)
            .ok_or(LccError::DecodingFailure { degree, budget, coordinate: c })?;
        let mut errors = 0;
        for (i, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
            if poly::eval(&f, &msg, x) != y {
                corrupted[i] = true;
                errors += 1;
            }
        }
        if errors > budget {
            return Err(LccError::DecodingFailure { degree, budget, coordinate: c });
        }
        for (k, &b) in targets.iter().enumerate() {
            secrets[k][c] = poly::eval(&f, &msg, b);
        }
    }
    let mut corrupted: Vec<usize> =
        shares.iter().zip(&corrupted).filter(|(_, &bad)| bad).map(|(s, _)| s.holder).collect();
    corrupted.sort_unstable();
    Ok(RobustRecon { secrets, corrupted })
}

/// Gao's decoder for a Reed-Solomon code with message polynomials of degree
/// at most `degree`, evaluated at the distinct points `xs`.
fn gao_decode(
    f: &PrimeField,
    xs: &[FieldElement],
    ys: &[FieldElement],
    g0: &poly::Poly,
    degree: usize,
) -> Option<poly::Poly> {
    let m = xs.len();
    let k = degree + 1;
    let g1 = poly::interpolate(f, xs, ys);
    // Partial extended Euclid on (g0, g1) tracking the g1 cofactor.
    let (mut r_prev, mut r_cur) = (g0.clone(), g1);
    let (mut v_prev, mut v_cur): (poly::Poly, poly::Poly) = (Vec::new(), vec![f.one()]);
    let stop = (m + k) / 2; // continue while deg r >= (m + k) / 2
    while poly::degree(&r_cur).is_some_and(|d| d >= stop) {
        let (q, r) = poly::divrem(f, &r_prev, &r_cur);
        let v_next = poly::sub(f, &v_prev, &poly::mul(f, &q, &v_cur));
        r_prev = std::mem::replace(&mut r_cur, r);
        v_prev = std::mem::replace(&mut v_cur, v_next);
    }
    poly::degree(&v_cur)?;
    let (msg, rem) = poly::divrem(f, &r_cur, &v_cur);
    if poly::degree(&rem).is_some() || poly::degree(&msg).is_some_and(|d| d > degree) {
        return None;
    }
    Some(msg)
}

/// Splits `v` into `ell` contiguous pieces of length `ceil(len / ell)`,
/// zero-padding the tail.
pub fn slice_vector<T: Copy + Default>(v: &[T], ell: usize) -> Vec<Vec<T>> {
    let ell = ell.max(1);
    let width = v.len().div_ceil(ell).max(1);
    (0..ell)
        .map(|k| {
            let mut piece: Vec<T> = v.iter().skip(k * width).take(width).copied().collect();
            piece.resize(width, T::default());
            piece
        })
        .collect()
}

/// Inverse of [`slice_vector`]: concatenates and truncates to `dim`.
pub fn unslice<T: Copy>(slices: &[Vec<T>], dim: usize) -> Vec<T> {
    slices.iter().flatten().copied().take(dim).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn f97() -> PrimeField {
        PrimeField::new(97).unwrap()
    }

    fn big() -> PrimeField {
        PrimeField::new(crate::field::next_prime_above(10_000_000_000)).unwrap()
    }

    fn elems(f: &PrimeField, v: &[u64]) -> Vec<FieldElement> {
        v.iter().map(|&x| f.elem(x)).collect()
    }

    #[test]
    fn no_privacy_shares_equal_secret() {
        let f = f97();
        let p = LccParams::new(f, 4, 0, 1, 1).unwrap();
        let shares = share(&[elems(&f, &[42, 7])], &p, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        for s in shares {
            assert_eq!(s.share, elems(&f, &[42, 7]));
        }
    }

    #[test]
    fn any_two_shares_recover_secret() {
        let f = f97();
        let p = LccParams::new(f, 3, 1, 1, 1).unwrap();
        let shares = share(&[elems(&f, &[5])], &p, &mut ChaCha20Rng::seed_from_u64(7)).unwrap();
        for (a, b) in [(0, 1), (0, 2), (1, 2), (2, 0)] {
            let pair = vec![shares[a].clone(), shares[b].clone()];
            assert_eq!(recon(&pair, 1, &p).unwrap(), vec![elems(&f, &[5])]);
        }
    }

    #[test]
    fn squared_shares_decode_to_square() {
        let f = f97();
        let p = LccParams::new(f, 5, 1, 1, 2).unwrap();
        let shares = share(&[elems(&f, &[3])], &p, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        let squared: Vec<ShareBundle> = shares
            .iter()
            .map(|s| ShareBundle { holder: s.holder, share: vec![f.mul(s.share[0], s.share[0])] })
            .collect();
        assert_eq!(recon(&squared, p.recon_degree(2), &p).unwrap(), vec![elems(&f, &[9])]);
    }

    #[test]
    fn erasures_do_not_change_output() {
        let f = big();
        let p = LccParams::new(f, 11, 2, 3, 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let secrets: Vec<Vec<FieldElement>> =
            (0..3).map(|_| (0..4).map(|_| f.random(&mut rng)).collect()).collect();
        let shares = share(&secrets, &p, &mut rng).unwrap();
        let d = p.code_degree();
        let full = recon(&shares, d, &p).unwrap();
        assert_eq!(full, secrets);
        let kept: Vec<ShareBundle> = shares.iter().rev().take(d + 1).cloned().collect();
        assert_eq!(recon(&kept, d, &p).unwrap(), full);
    }

    #[test]
    fn recon_checks_extra_shares() {
        let f = big();
        let p = LccParams::new(f, 7, 1, 2, 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut shares = share(&[vec![f.elem(1)], vec![f.elem(2)]], &p, &mut rng).unwrap();
        shares[5].share[0] = f.add(shares[5].share[0], f.one());
        assert_eq!(
            recon(&shares, p.code_degree(), &p),
            Err(LccError::DegreeMismatch { holder: 5, degree: 2 })
        );
        assert!(matches!(
            recon(&shares[..2], p.code_degree(), &p),
            Err(LccError::InsufficientShares { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn rejects_bad_params() {
        let f = big();
        // degree-2 with ell + t - 1 = 3 needs 7 holders
        assert!(matches!(LccParams::new(f, 6, 2, 2, 2), Err(LccError::BadParams(_))));
        assert!(LccParams::new(f, 7, 2, 2, 2).is_ok());
        let pts = elems(&f, &[1, 2, 3]);
        assert!(matches!(
            LccParams::with_points(f, 3, 1, 2, 1, pts.clone(), elems(&f, &[3, 4, 5])),
            Err(LccError::BadParams(_))
        ));
        assert!(matches!(LccParams::new(f97(), 90, 5, 5, 1), Err(LccError::BadParams(_))));
    }

    #[test]
    fn robust_decoding_locates_single_error() {
        let f = big();
        let p = LccParams::new(f, 9, 1, 2, 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        let secrets: Vec<Vec<FieldElement>> =
            (0..2).map(|_| (0..6).map(|_| f.random(&mut rng)).collect()).collect();
        let shares = share(&secrets, &p, &mut rng).unwrap();
        let d = p.code_degree();
        // m = d + 3 shares, one corrupted
        let mut subset: Vec<ShareBundle> = shares[..d + 3].to_vec();
        subset[1].share[4] = f.add(subset[1].share[4], f.elem(12345));
        let out = recon_robust(&subset, d, &p).unwrap();
        assert_eq!(out.secrets, secrets);
        assert_eq!(out.secrets, recon(&shares, d, &p).unwrap());
        assert_eq!(out.corrupted, vec![subset[1].holder]);
    }

    #[test]
    fn robust_decoding_without_errors_matches_recon() {
        let f = big();
        let p = LccParams::new(f, 9, 2, 2, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let secrets = vec![vec![f.elem(10), f.elem(20)], vec![f.elem(30), f.elem(40)]];
        let shares = share(&secrets, &p, &mut rng).unwrap();
        let out = recon_robust(&shares, p.code_degree(), &p).unwrap();
        assert_eq!(out.secrets, recon(&shares, p.code_degree(), &p).unwrap());
        assert!(out.corrupted.is_empty());
    }

    #[test]
    fn robust_decoding_fails_over_budget() {
        let f = big();
        let p = LccParams::new(f, 9, 1, 1, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        let shares = share(&[vec![f.elem(77)]], &p, &mut rng).unwrap();
        let d = p.code_degree();
        // m = d + 3 tolerates one error; inject two
        let mut subset = shares[..d + 3].to_vec();
        subset[0].share[0] = f.add(subset[0].share[0], f.elem(3));
        subset[2].share[0] = f.add(subset[2].share[0], f.elem(9));
        assert!(matches!(
            recon_robust(&subset, d, &p),
            Err(LccError::DecodingFailure { .. })
        ));
    }

    #[test]
    fn slicing_examples() {
        let v: Vec<u32> = (1..=6).collect();
        assert_eq!(slice_vector(&v, 2), vec![vec![1, 2, 3], vec![4, 5, 6]]);
        let v: Vec<u32> = (1..=5).collect();
        assert_eq!(slice_vector(&v, 2), vec![vec![1, 2, 3], vec![4, 5, 0]]);
        assert_eq!(unslice(&slice_vector(&v, 2), 5), v);
    }

    #[test]
    fn default_ell_respects_degree_two_bound() {
        for n in 2..60 {
            for t in 1..=n / 2 {
                let ell = LccParams::default_ell(n, t);
                if 2 * t <= n {
                    let ok = 2 * (ell + t - 1) < n;
                    assert!(ok || ell == 1, "n={n} t={t} ell={ell}");
                }
            }
        }
        assert_eq!(LccParams::default_ell(20, 6), 4);
        assert_eq!(LccParams::half_ell(20, 6), 7);
    }

    proptest! {
        #[test]
        fn slice_round_trip(v in proptest::collection::vec(any::<u32>(), 1..40), ell in 1usize..6) {
            let s = slice_vector(&v, ell);
            prop_assert_eq!(s.len(), ell);
            prop_assert!(s.iter().all(|p| p.len() == s[0].len()));
            prop_assert_eq!(unslice(&s, v.len()), v);
        }

        #[test]
        fn linearity_of_shares(a in proptest::collection::vec(0u64..1_000_000, 4), b in proptest::collection::vec(0u64..1_000_000, 4), seed in any::<u64>()) {
            let f = big();
            let p = LccParams::new(f, 8, 2, 2, 2).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let va = elems(&f, &a);
            let vb = elems(&f, &b);
            let sa = share_vector(&va, &p, &mut rng).unwrap();
            let sb = share_vector(&vb, &p, &mut rng).unwrap();
            let summed: Vec<ShareBundle> = sa.iter().zip(&sb).map(|(x, y)| {
                let mut share = x.share.clone();
                f.add_assign_vec(&mut share, &y.share);
                ShareBundle { holder: x.holder, share }
            }).collect();
            let out = recon_vector(&summed, p.code_degree(), &p, 4).unwrap();
            let expect: Vec<_> = va.iter().zip(&vb).map(|(x, y)| f.add(*x, *y)).collect();
            prop_assert_eq!(out, expect);
        }
    }
}
