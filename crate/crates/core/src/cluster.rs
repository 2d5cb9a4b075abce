//! Secure one-shot adaptive clustering of reduced prompts.
//!
//! Every holder `j` owns one coded share of each user's sliced, quantized
//! reduced prompt. For the previous assignment `S` a holder computes, on its
//! shares only,
//!
//! - the coded cluster sums `[mu_s]_j = sum_{i in s} [p_i]_j`,
//! - the coded scaled distances `||[mu_s]_j - |s| [p_i]_j||^2` for every user
//!   and cluster,
//! - the coded scaled center gaps `|| |s'| [mu_s]_j - |s| [mu_s']_j ||^2`.
//!
//! These are degree-2 polynomials in the shares, so the server decodes them at
//! degree `2 (ell + t - 1)`, sums the per-slice partials and rescales by
//! `|s|^2` (respectively `(|s| |s'|)^2`) to get real squared distances. The
//! server then runs [`adaptive_update`] on the decoded tables.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{quantize, FieldElement, FieldError, PrimeField, QuantConfig};
use crate::lcc::{self, LccError, LccParams, ShareBundle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error(transparent)]
    Decoding(#[from] LccError),
    #[error("decoded {what} value {value} lies in the upper half of the field; the modulus is too small")]
    OverflowDetected { what: &'static str, value: u64 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid cluster assignment: {0}")]
    BadAssignment(String),
    #[error("invalid adaptive config: {0}")]
    BadConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Partition of users `0..n` into non-empty clusters. Members of each cluster
/// are kept in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    n: usize,
    clusters: Vec<Vec<usize>>,
}

impl ClusterAssignment {
    pub fn new(n: usize, clusters: Vec<Vec<usize>>) -> Result<Self, ClusterError> {
        let mut seen = vec![false; n];
        let mut clusters = clusters;
        for c in &mut clusters {
            if c.is_empty() {
                return Err(ClusterError::BadAssignment("empty cluster".into()));
            }
            c.sort_unstable();
            for &i in c.iter() {
                if i >= n {
                    return Err(ClusterError::BadAssignment(format!("user {i} out of range")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(ClusterError::BadAssignment(format!("user {i} assigned twice")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(ClusterError::BadAssignment(format!("user {i} unassigned")));
        }
        Ok(Self { n, clusters })
    }

    /// All users in one cluster.
    pub fn single(n: usize) -> Self {
        Self { n, clusters: vec![(0..n).collect()] }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn len(&self) -> usize {
        self.clusters.len()
    }
    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }
    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }

    /// Cluster index of every user.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n];
        for (s, c) in self.clusters.iter().enumerate() {
            for &i in c {
                labels[i] = s;
            }
        }
        labels
    }

    /// The partition as a set of sets, ignoring cluster order.
    pub fn canonical(&self) -> BTreeSet<Vec<usize>> {
        self.clusters.iter().cloned().collect()
    }
}

/// Real squared distances `d[i, s] = ||p_i - mu_s / |s| ||^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceTable {
    n: usize,
    k: usize,
    d: Vec<f64>,
    sizes: Vec<usize>,
}

impl DistanceTable {
    pub fn new(n: usize, sizes: Vec<usize>, d: Vec<f64>) -> Result<Self, ClusterError> {
        let k = sizes.len();
        if d.len() != n * k {
            return Err(ClusterError::Shape(format!("{} distances for {n} x {k}", d.len())));
        }
        if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ClusterError::Shape("distances must be finite and non-negative".into()));
        }
        Ok(Self { n, k, d, sizes })
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn get(&self, user: usize, cluster: usize) -> f64 {
        self.d[user * self.k + cluster]
    }
    pub fn row(&self, user: usize) -> &[f64] {
        &self.d[user * self.k..(user + 1) * self.k]
    }
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }
}

/// Symmetric table of squared gaps between cluster centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    k: usize,
    /// Upper triangle, row-major over `a < b`.
    upper: Vec<f64>,
}

impl GapTable {
    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let upper = pairs(k).map(|(a, b)| f(a, b)).collect();
        Self { k, upper }
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn get(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.upper[pair_index(self.k, a, b)]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.upper
    }
}

fn pairs(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |a| (a + 1..k).map(move |b| (a, b)))
}

fn pair_index(k: usize, a: usize, b: usize) -> usize {
    // rows 0..a contribute (k-1) + (k-2) + ... + (k-a) entries
    a * (2 * k - a - 1) / 2 + (b - a - 1)
}

/// Spawn or merge threshold: a fixed value or derived from the round's
/// distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThresholdRepr", into = "ThresholdRepr")]
pub enum Threshold {
    Fixed(f64),
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ThresholdRepr {
    Value(f64),
    Keyword(String),
}

impl TryFrom<ThresholdRepr> for Threshold {
    type Error = String;
    fn try_from(r: ThresholdRepr) -> Result<Self, String> {
        match r {
            ThresholdRepr::Value(v) => Ok(Threshold::Fixed(v)),
            ThresholdRepr::Keyword(s) if s == "auto" => Ok(Threshold::Auto),
            ThresholdRepr::Keyword(s) => Err(format!("threshold must be a number or \"auto\", got {s:?}")),
        }
    }
}

impl From<Threshold> for ThresholdRepr {
    fn from(t: Threshold) -> Self {
        match t {
            Threshold::Fixed(v) => ThresholdRepr::Value(v),
            Threshold::Auto => ThresholdRepr::Keyword("auto".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveConfig {
    pub theta_spawn: Threshold,
    pub theta_merge: Threshold,
    pub auto_factor_spawn: f64,
    pub auto_factor_merge: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            theta_spawn: Threshold::Auto,
            theta_merge: Threshold::Auto,
            auto_factor_spawn: 4.0,
            auto_factor_merge: 0.5,
        }
    }
}

impl AdaptiveConfig {
    pub fn fixed(theta_spawn: f64, theta_merge: f64) -> Self {
        Self {
            theta_spawn: Threshold::Fixed(theta_spawn),
            theta_merge: Threshold::Fixed(theta_merge),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        for (name, t) in [("theta_spawn", self.theta_spawn), ("theta_merge", self.theta_merge)] {
            if let Threshold::Fixed(v) = t {
                if !(v.is_finite() && v > 0.0) {
                    return Err(ClusterError::BadConfig(format!("{name} must be positive, got {v}")));
                }
            }
        }
        for (name, v) in
            [("auto_factor_spawn", self.auto_factor_spawn), ("auto_factor_merge", self.auto_factor_merge)]
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(ClusterError::BadConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn resolve(&self, mean_assigned: f64) -> (f64, f64) {
        let pick = |t: Threshold, factor: f64| match t {
            Threshold::Fixed(v) => v,
            Threshold::Auto => factor * mean_assigned,
        };
        (
            pick(self.theta_spawn, self.auto_factor_spawn),
            pick(self.theta_merge, self.auto_factor_merge),
        )
    }
}

/// One pass of reassignment, spawning and merging.
///
/// 1. Each user moves to its nearest center; ties go to the lowest index.
///    Clusters left empty are dropped.
/// 2. Users (ascending) whose nearest distance exceeds the spawn threshold
///    leave their cluster and found singletons appended at the end.
/// 3. Surviving clusters of `s` whose center gap is below the merge threshold
///    are merged transitively into the lowest-indexed one. Singletons born in
///    this round have no decoded gap yet and are left alone.
///
/// `auto` thresholds scale the mean nearest distance after step 1.
pub fn adaptive_update(
    d: &DistanceTable,
    gaps: &GapTable,
    s: &ClusterAssignment,
    cfg: &AdaptiveConfig,
) -> ClusterAssignment {
    let (n, k) = (d.n, d.k);
    debug_assert_eq!(k, s.len());
    debug_assert_eq!(gaps.k, k);

    let mut nearest = vec![0usize; n];
    let mut min_d = vec![0.0f64; n];
    for i in 0..n {
        let row = d.row(i);
        let mut best = 0;
        for c in 1..k {
            if row[c] < row[best] {
                best = c;
            }
        }
        nearest[i] = best;
        min_d[i] = row[best];
    }
    let mean = if n == 0 { 0.0 } else { min_d.iter().sum::<f64>() / n as f64 };
    let (theta_spawn, theta_merge) = cfg.resolve(mean);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut spawned = Vec::new();
    for i in 0..n {
        if min_d[i] > theta_spawn {
            spawned.push(vec![i]);
        } else {
            members[nearest[i]].push(i);
        }
    }

    // union-find over surviving clusters, roots are the lowest index
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut y = x;
        while parent[y] != r {
            let next = parent[y];
            parent[y] = r;
            y = next;
        }
        r
    }
    for (a, b) in pairs(k) {
        if members[a].is_empty() || members[b].is_empty() || gaps.get(a, b) >= theta_merge {
            continue;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut merged: Vec<Vec<usize>> = vec![Vec::new(); k];
    for c in 0..k {
        let root = find(&mut parent, c);
        let taken = std::mem::take(&mut members[c]);
        merged[root].extend(taken);
    }
    let mut clusters: Vec<Vec<usize>> = merged.into_iter().filter(|c| !c.is_empty()).collect();
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters.extend(spawned);
    ClusterAssignment { n, clusters }
}

/// Smallest gap between any quantity [`adaptive_update`] compares and the
/// value it is compared against: second-nearest minus nearest distance, the
/// nearest distance against the spawn threshold and every center gap against
/// the merge threshold. Tables perturbed by less than half this amount lead
/// to the same assignment, provided `auto` thresholds move by less as well.
pub fn decision_margin(d: &DistanceTable, gaps: &GapTable, cfg: &AdaptiveConfig) -> f64 {
    let (n, k) = (d.n, d.k);
    let mut margin = f64::INFINITY;
    let mut min_d = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = d.row(i).to_vec();
        row.sort_by(f64::total_cmp);
        if k > 1 {
            margin = margin.min(row[1] - row[0]);
        }
        min_d.push(row[0]);
    }
    let mean = if n == 0 { 0.0 } else { min_d.iter().sum::<f64>() / n as f64 };
    let (spawn, merge) = cfg.resolve(mean);
    for m in min_d {
        margin = margin.min((m - spawn).abs());
    }
    for (a, b) in pairs(k) {
        margin = margin.min((gaps.get(a, b) - merge).abs());
    }
    margin
}

/// Plaintext reference: real-arithmetic distances and gaps for `s`, followed
/// by the same [`adaptive_update`].
pub fn plaintext_oracle(
    reduced: &[Vec<f64>],
    s: &ClusterAssignment,
    cfg: &AdaptiveConfig,
) -> (ClusterAssignment, DistanceTable, GapTable) {
    let (d, gaps) = plaintext_tables(reduced, s);
    let next = adaptive_update(&d, &gaps, s, cfg);
    (next, d, gaps)
}

/// Distances and centroid gaps computed in the clear.
pub fn plaintext_tables(reduced: &[Vec<f64>], s: &ClusterAssignment) -> (DistanceTable, GapTable) {
    let n = reduced.len();
    let dim = reduced.first().map_or(0, Vec::len);
    let centroids: Vec<Vec<f64>> = s
        .clusters
        .iter()
        .map(|c| {
            let mut m = vec![0.0; dim];
            for &i in c {
                for (a, b) in m.iter_mut().zip(&reduced[i]) {
                    *a += b;
                }
            }
            m.iter().map(|v| v / c.len() as f64).collect()
        })
        .collect();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut d = Vec::with_capacity(n * s.len());
    for p in reduced {
        for c in &centroids {
            d.push(sq(p, c));
        }
    }
    let gaps = GapTable::from_fn(s.len(), |a, b| sq(&centroids[a], &centroids[b]));
    (DistanceTable { n, k: s.len(), d, sizes: s.sizes() }, gaps)
}

/// The shares one holder keeps after phase 1: one coded slice per user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolderShares {
    pub holder: usize,
    pub per_user: Vec<Vec<FieldElement>>,
}

/// What a holder sends to the server in phase 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolderMessage {
    pub holder: usize,
    /// Coded scaled distances, row-major over (user, cluster).
    pub distances: Vec<FieldElement>,
    /// Coded scaled center gaps over cluster pairs `a < b`.
    pub gaps: Vec<FieldElement>,
}

/// Quantizes and shares every user's reduced prompt, returning user-major
/// bundles: `out[i][j]` is the share user `i` sends to holder `j`.
pub fn share_reduced<R: Rng + ?Sized>(
    reduced: &[Vec<f64>],
    params: &LccParams,
    quant: &QuantConfig,
    rng: &mut R,
) -> Result<Vec<Vec<ShareBundle>>, ClusterError> {
    reduced
        .iter()
        .map(|p| {
            let q = quantize(p, quant, params.field())?;
            Ok(lcc::share_vector(&q, params, rng)?)
        })
        .collect()
}

/// Regroups user-major bundles into holder-major share sets.
pub fn to_holders(bundles: &[Vec<ShareBundle>], n_holders: usize) -> Vec<HolderShares> {
    (0..n_holders)
        .map(|j| HolderShares {
            holder: j,
            per_user: bundles.iter().map(|b| b[j].share.clone()).collect(),
        })
        .collect()
}

fn coded_sums(f: &PrimeField, shares: &HolderShares, s: &ClusterAssignment) -> Vec<Vec<FieldElement>> {
    let width = shares.per_user.first().map_or(0, Vec::len);
    s.clusters
        .iter()
        .map(|c| {
            let mut acc = vec![f.zero(); width];
            for &i in c {
                f.add_assign_vec(&mut acc, &shares.per_user[i]);
            }
            acc
        })
        .collect()
}

/// Phase 2 at one holder.
pub fn holder_compute(f: &PrimeField, shares: &HolderShares, s: &ClusterAssignment) -> HolderMessage {
    let sums = coded_sums(f, shares, s);
    let sizes: Vec<FieldElement> = s.clusters.iter().map(|c| f.elem(c.len() as u64)).collect();
    let mut distances = Vec::with_capacity(shares.per_user.len() * sums.len());
    for p in &shares.per_user {
        for (mu, &size) in sums.iter().zip(&sizes) {
            distances.push(f.squared_distance_scaled(mu, size, p));
        }
    }
    let gaps = pairs(sums.len())
        .map(|(a, b)| {
            let lhs = f.scale_vec(&sums[a], sizes[b]);
            f.squared_distance_scaled(&lhs, sizes[a], &sums[b])
        })
        .collect();
    HolderMessage { holder: shares.holder, distances, gaps }
}

/// Magnitude bounds on the decoded integers, given a bound `value_bound` on
/// every reduced coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeBounds {
    pub distance: f64,
    pub gap: f64,
}

impl DecodeBounds {
    /// `4 r n^2 (lambda B + 1)^2` for distances and `r n^4 (lambda B + 1)^2 / 4`
    /// for gaps, where `r` is the reduced dimension.
    pub fn new(n: usize, reduced_dim: usize, lambda: u64, value_bound: f64) -> Self {
        let m = lambda as f64 * value_bound + 1.0;
        let (n, r) = (n as f64, reduced_dim as f64);
        Self { distance: 4.0 * r * n * n * m * m, gap: r * n.powi(4) * m * m / 4.0 }
    }

    /// Smallest modulus for which decoding can never wrap.
    pub fn min_modulus(&self) -> u128 {
        (2.0 * self.distance.max(self.gap)).ceil() as u128 + 1
    }
}

/// Which holders' values a reconstruction used, and at what degree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructionInfo {
    pub what: String,
    pub degree: usize,
    pub holders: Vec<usize>,
}

/// Phase 3 decoding: reconstructs the ell per-slice partials of every
/// distance and gap, sums them and rescales to real squared distances.
pub fn server_decode(
    messages: &[HolderMessage],
    s: &ClusterAssignment,
    params: &LccParams,
    quant: &QuantConfig,
) -> Result<(DistanceTable, GapTable, Vec<ReconstructionInfo>), ClusterError> {
    let f = params.field();
    let degree = params.recon_degree(2);
    let k = s.len();
    let n_users = s.n();
    let holders: Vec<usize> = messages.iter().map(|m| m.holder).collect();

    let decode = |what: &'static str, pick: &dyn Fn(&HolderMessage) -> &Vec<FieldElement>| {
        let bundles: Vec<ShareBundle> = messages
            .iter()
            .map(|m| ShareBundle { holder: m.holder, share: pick(m).clone() })
            .collect();
        let slices = lcc::recon(&bundles, degree, params)?;
        let width = slices.first().map_or(0, Vec::len);
        let lambda_sq = (quant.lambda() as f64).powi(2);
        (0..width)
            .map(|c| {
                let total = slices.iter().fold(f.zero(), |acc, sl| f.add(acc, sl[c]));
                if total.value() >= f.half() {
                    return Err(ClusterError::OverflowDetected { what, value: total.value() });
                }
                Ok(total.value() as f64 / lambda_sq)
            })
            .collect::<Result<Vec<f64>, ClusterError>>()
    };

    let sizes = s.sizes();
    let raw = decode("distance", &|m| &m.distances)?;
    if raw.len() != n_users * k {
        return Err(ClusterError::Shape(format!("{} decoded distances", raw.len())));
    }
    let d = raw
        .iter()
        .enumerate()
        .map(|(idx, v)| v / (sizes[idx % k] as f64).powi(2))
        .collect();
    let mut log = vec![ReconstructionInfo { what: "distance".into(), degree, holders: holders.clone() }];
    let gaps = if k > 1 {
        let raw_gaps = decode("center-gap", &|m| &m.gaps)?;
        log.push(ReconstructionInfo { what: "center-gap".into(), degree, holders });
        let mut it = raw_gaps.into_iter();
        GapTable::from_fn(k, |a, b| {
            it.next().unwrap_or(0.0) / ((sizes[a] * sizes[b]) as f64).powi(2)
        })
    } else {
        GapTable::from_fn(k, |_, _| 0.0)
    };
    Ok((DistanceTable { n: n_users, k, d, sizes }, gaps, log))
}

/// Output of one secure clustering round.
#[derive(Debug, Clone, PartialEq)]
pub struct SecpcOutcome {
    pub assignment: ClusterAssignment,
    pub distances: DistanceTable,
    pub gaps: GapTable,
    pub messages: Vec<HolderMessage>,
    pub reconstructions: Vec<ReconstructionInfo>,
}

/// Phases 2 and 3 over the holders that respond this round. Erasure decoding
/// needs `2 (ell + t - 1) + 1` of them.
pub fn secpc_round(
    holders: &[HolderShares],
    s: &ClusterAssignment,
    params: &LccParams,
    quant: &QuantConfig,
    cfg: &AdaptiveConfig,
) -> Result<SecpcOutcome, ClusterError> {
    let f = *params.field();
    let messages: Vec<HolderMessage> =
        holders.par_iter().map(|h| holder_compute(&f, h, s)).collect();
    let (distances, gaps, reconstructions) = server_decode(&messages, s, params, quant)?;
    let assignment = adaptive_update(&distances, &gaps, s, cfg);
    Ok(SecpcOutcome { assignment, distances, gaps, messages, reconstructions })
}

/// Centroid gap `||mu_a/|a| - mu_b/|b| ||^2` of two clusters of `s` decoded
/// from the holders' coded sums alone.
pub fn coded_center_gap(
    holders: &[HolderShares],
    s: &ClusterAssignment,
    a: usize,
    b: usize,
    params: &LccParams,
    quant: &QuantConfig,
) -> Result<f64, ClusterError> {
    if a >= s.len() || b >= s.len() {
        return Err(ClusterError::Shape(format!("cluster index out of range ({a}, {b})")));
    }
    if a == b {
        return Ok(0.0);
    }
    let pair = ClusterAssignment { n: s.n, clusters: vec![s.clusters[a].clone(), s.clusters[b].clone()] };
    // restrict to the two clusters: other users contribute nothing to their sums
    let f = *params.field();
    let messages: Vec<HolderMessage> = holders
        .iter()
        .map(|h| {
            let sums = coded_sums(&f, h, &pair);
            let (sa, sb) = (f.elem(pair.clusters[0].len() as u64), f.elem(pair.clusters[1].len() as u64));
            let lhs = f.scale_vec(&sums[0], sb);
            HolderMessage {
                holder: h.holder,
                distances: Vec::new(),
                gaps: vec![f.squared_distance_scaled(&lhs, sa, &sums[1])],
            }
        })
        .collect();
    let degree = params.recon_degree(2);
    let bundles: Vec<ShareBundle> =
        messages.iter().map(|m| ShareBundle { holder: m.holder, share: m.gaps.clone() }).collect();
    let slices = lcc::recon(&bundles, degree, params)?;
    let total = slices.iter().fold(f.zero(), |acc, sl| f.add(acc, sl[0]));
    if total.value() >= f.half() {
        return Err(ClusterError::OverflowDetected { what: "center-gap", value: total.value() });
    }
    let scale = (quant.lambda() as f64).powi(2) * ((pair.clusters[0].len() * pair.clusters[1].len()) as f64).powi(2);
    Ok(total.value() as f64 / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PrimeField;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn table(n: usize, sizes: Vec<usize>, d: Vec<f64>) -> DistanceTable {
        DistanceTable::new(n, sizes, d).unwrap()
    }

    #[test]
    fn decision_margin_picks_the_tightest_comparison() {
        let d = table(2, vec![1, 1], vec![1.0, 4.0, 5.0, 2.0]);
        let cfg = AdaptiveConfig::fixed(3.0, 6.0);
        let margin = |gap: f64| decision_margin(&d, &GapTable::from_fn(2, |_, _| gap), &cfg);
        assert_eq!(margin(7.0), 1.0);
        assert_eq!(margin(6.25), 0.25);
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

        #[test]
        fn perturbation_below_half_margin_keeps_the_update(seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (n, k) = (rng.random_range(2..8usize), rng.random_range(1..4usize));
            let k = k.min(n);
            let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
            let s = ClusterAssignment::new(n, (0..k).map(|c| (0..n).filter(|&i| labels[i] == c).collect()).collect()).unwrap();
            let sizes = s.clusters().iter().map(Vec::len).collect::<Vec<_>>();
            let raw: Vec<f64> = (0..n * k).map(|_| rng.random_range(1.0..10.0)).collect();
            let gap_raw: Vec<f64> = (0..k * k).map(|_| rng.random_range(1.0..10.0)).collect();
            let cfg = AdaptiveConfig::fixed(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
            let d = table(n, sizes.clone(), raw.clone());
            let gaps = GapTable::from_fn(k, |a, b| gap_raw[a * k + b]);
            let margin = decision_margin(&d, &gaps, &cfg);
            prop_assume!(margin > 1e-6 && margin < 1.0);
            let eps = 0.49 * margin;
            let jitter: Vec<f64> = (0..n * k + k * k).map(|_| rng.random_range(-eps..eps)).collect();
            let d2 = table(n, sizes, raw.iter().zip(&jitter).map(|(x, j)| x + j).collect());
            let gaps2 = GapTable::from_fn(k, |a, b| gap_raw[a * k + b] + jitter[n * k + a * k + b]);
            prop_assert_eq!(adaptive_update(&d, &gaps, &s, &cfg), adaptive_update(&d2, &gaps2, &s, &cfg));
        }
    }

    #[test]
    fn pair_index_is_dense() {
        for k in 1..7 {
            let idx: Vec<usize> = pairs(k).map(|(a, b)| pair_index(k, a, b)).collect();
            assert_eq!(idx, (0..k * (k - 1) / 2).collect::<Vec<_>>());
        }
    }

    #[test]
    fn outlier_spawns_singleton() {
        let s = ClusterAssignment::single(3);
        let d = table(3, vec![3], vec![0.1, 0.2, 9.0]);
        let gaps = GapTable::from_fn(1, |_, _| 0.0);
        let next = adaptive_update(&d, &gaps, &s, &AdaptiveConfig::fixed(4.0, 0.1));
        assert_eq!(next.clusters(), &[vec![0, 1], vec![2]]);
    }

    #[test]
    fn below_thresholds_is_fixed_point() {
        let s = ClusterAssignment::single(4);
        let d = table(4, vec![4], vec![0.1, 0.3, 0.2, 0.1]);
        let gaps = GapTable::from_fn(1, |_, _| 0.0);
        assert_eq!(adaptive_update(&d, &gaps, &s, &AdaptiveConfig::fixed(4.0, 0.1)), s);
        assert_eq!(adaptive_update(&d, &gaps, &s, &AdaptiveConfig::default()), s);
    }

    #[test]
    fn close_centers_merge() {
        let s = ClusterAssignment::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let d = table(4, vec![2, 2], vec![0.1, 0.2, 0.2, 0.1, 0.2, 0.1, 0.1, 0.2]);
        let gaps = GapTable::from_fn(2, |_, _| 0.01);
        let next = adaptive_update(&d, &gaps, &s, &AdaptiveConfig::fixed(4.0, 0.1));
        assert_eq!(next.clusters(), &[vec![0, 1, 2, 3]]);
    }

    #[test]
    fn merging_is_transitive_and_keeps_lowest_index() {
        let s = ClusterAssignment::new(3, vec![vec![0], vec![1], vec![2]]).unwrap();
        let d = table(3, vec![1, 1, 1], vec![0.0, 5.0, 9.0, 5.0, 0.0, 5.0, 9.0, 5.0, 0.0]);
        // 0~1 and 1~2 close, 0~2 far
        let gaps = GapTable::from_fn(3, |a, b| if b - a == 1 { 0.05 } else { 0.2 });
        let next = adaptive_update(&d, &gaps, &s, &AdaptiveConfig::fixed(10.0, 0.1));
        assert_eq!(next.clusters(), &[vec![0, 1, 2]]);
    }

    #[test]
    fn ties_go_to_lowest_index_and_empty_clusters_drop() {
        let s = ClusterAssignment::new(2, vec![vec![0], vec![1]]).unwrap();
        let d = table(2, vec![1, 1], vec![1.0, 1.0, 1.0, 1.0]);
        let gaps = GapTable::from_fn(2, |_, _| 1.0);
        let next = adaptive_update(&d, &gaps, &s, &AdaptiveConfig::fixed(4.0, 0.1));
        assert_eq!(next.clusters(), &[vec![0, 1]]);
    }

    #[test]
    fn threshold_serde() {
        let cfg: AdaptiveConfig =
            serde_json::from_str(r#"{"theta_spawn": 2.5, "theta_merge": "auto"}"#).unwrap();
        assert_eq!(cfg.theta_spawn, Threshold::Fixed(2.5));
        assert_eq!(cfg.theta_merge, Threshold::Auto);
        assert_eq!(cfg.auto_factor_spawn, 4.0);
        assert!(serde_json::from_str::<AdaptiveConfig>(r#"{"theta_spawn": "sometimes"}"#).is_err());
        assert!(AdaptiveConfig::fixed(-1.0, 1.0).validate().is_err());
    }

    #[test]
    fn assignment_validation() {
        assert!(ClusterAssignment::new(3, vec![vec![0, 1]]).is_err());
        assert!(ClusterAssignment::new(2, vec![vec![0, 1], vec![1]]).is_err());
        assert!(ClusterAssignment::new(2, vec![vec![0, 1], vec![]]).is_err());
        let s = ClusterAssignment::new(3, vec![vec![2, 0], vec![1]]).unwrap();
        assert_eq!(s.labels(), vec![0, 1, 0]);
    }

    fn setup(n: usize, t: usize, dim: usize, bound: f64) -> (LccParams, QuantConfig) {
        let b = DecodeBounds::new(n, dim, 1000, bound);
        let field = PrimeField::above(b.min_modulus().max(10_000_000_000)).unwrap();
        let ell = LccParams::default_ell(n, t);
        (LccParams::new(field, n, t, ell, 2).unwrap(), QuantConfig::new(1000, bound).unwrap())
    }

    #[test]
    fn two_user_example() {
        let (params, quant) = setup(5, 1, 2, 10.0);
        let reduced = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![3.0, 4.0], vec![3.0, 4.0], vec![3.0, 4.0]];
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let holders = to_holders(&share_reduced(&reduced, &params, &quant, &mut rng).unwrap(), 5);
        let s = ClusterAssignment::new(5, vec![vec![0, 1], vec![2], vec![3, 4]]).unwrap();
        let out = secpc_round(&holders, &s, &params, &quant, &AdaptiveConfig::fixed(100.0, 1e-9)).unwrap();
        assert!((out.distances.get(0, 0) - 2.0).abs() < 1e-9);
        assert!(out.distances.get(2, 1).abs() < 1e-12);
        let gap = coded_center_gap(&holders, &s, 1, 0, &params, &quant).unwrap();
        // centroid of {0,1} is [2,3], user 2 sits at [3,4]
        assert!((gap - 2.0).abs() < 1e-9);
        let singles = ClusterAssignment::new(5, vec![vec![0], vec![1], vec![2, 3, 4]]).unwrap();
        let g = coded_center_gap(&holders, &singles, 0, 1, &params, &quant).unwrap();
        assert!((g - 8.0).abs() < 1e-9);
        assert_eq!(coded_center_gap(&holders, &singles, 2, 2, &params, &quant).unwrap(), 0.0);
    }

    #[test]
    fn tiny_modulus_reports_overflow() {
        let field = PrimeField::new(1_000_003).unwrap();
        let params = LccParams::new(field, 3, 0, 1, 2).unwrap();
        let quant = QuantConfig::new(100, 4.0).unwrap();
        let reduced = vec![vec![3.0], vec![-3.0], vec![0.0]];
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let holders = to_holders(&share_reduced(&reduced, &params, &quant, &mut rng).unwrap(), 3);
        let err = secpc_round(&holders, &ClusterAssignment::single(3), &params, &quant, &AdaptiveConfig::default());
        assert!(matches!(err, Err(ClusterError::OverflowDetected { .. })), "{err:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn secure_tables_match_plaintext(seed in 0u64..10_000, n in 3usize..9, dim in 1usize..7) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let reduced: Vec<Vec<f64>> =
                (0..n).map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let clusters: Vec<Vec<usize>> = (0..3)
                .map(|c| (0..n).filter(|&i| labels[i] == c).collect::<Vec<_>>())
                .filter(|c| !c.is_empty())
                .collect();
            let s = ClusterAssignment::new(n, clusters).unwrap();
            let (params, quant) = setup(n, 1, dim, 5.0);
            let holders = to_holders(&share_reduced(&reduced, &params, &quant, &mut rng).unwrap(), n);
            let cfg = AdaptiveConfig::default();
            let out = secpc_round(&holders, &s, &params, &quant, &cfg).unwrap();
            let (d, gaps) = plaintext_tables(&reduced, &s);
            // floor quantization moves each coordinate by at most 1/lambda
            let tol = |x: f64| 4.0 * (dim as f64).sqrt() * 1e-3 * (x.sqrt() + 1e-3 * (dim as f64).sqrt()) + 1e-9;
            for (a, b) in out.distances.as_slice().iter().zip(d.as_slice()) {
                prop_assert!((a - b).abs() <= tol(*b), "{a} vs {b}");
            }
            for (a, b) in out.gaps.as_slice().iter().zip(gaps.as_slice()) {
                prop_assert!((a - b).abs() <= tol(*b), "{a} vs {b}");
            }
        }

        #[test]
        fn update_is_permutation_consistent(seed in 0u64..10_000, n in 2usize..12) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let reduced: Vec<Vec<f64>> =
                (0..n).map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let k = rng.random_range(1..=n.min(4));
            let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
            let clusters: Vec<Vec<usize>> = (0..k).map(|c| (0..n).filter(|&i| labels[i] == c).collect()).collect();
            let s = ClusterAssignment::new(n, clusters.clone()).unwrap();
            let cfg = AdaptiveConfig::fixed(rng.random_range(0.5..8.0), rng.random_range(0.1..3.0));
            let (base, _, _) = plaintext_oracle(&reduced, &s, &cfg);

            let mut perm: Vec<usize> = (0..n).collect();
            perm.reverse();
            let mut permuted = vec![Vec::new(); n];
            for i in 0..n {
                permuted[perm[i]] = reduced[i].clone();
            }
            let ps = ClusterAssignment::new(
                n,
                clusters.iter().map(|c| c.iter().map(|&i| perm[i]).collect()).collect(),
            ).unwrap();
            let (moved, _, _) = plaintext_oracle(&permuted, &ps, &cfg);
            let expect: BTreeSet<Vec<usize>> = base
                .clusters()
                .iter()
                .map(|c| { let mut v: Vec<usize> = c.iter().map(|&i| perm[i]).collect(); v.sort_unstable(); v })
                .collect();
            prop_assert_eq!(moved.canonical(), expect);
        }
    }
}
