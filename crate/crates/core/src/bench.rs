//! Per-phase cost measurement of one clustering and aggregation round.
//!
//! User-side phases report the time of a single user. Server phases report
//! the whole server step. Byte counts are taken from the sizes of the
//! vectors that would be sent, eight bytes per field element.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{
    adaptive_update, holder_compute, server_decode, share_reduced, to_holders, AdaptiveConfig, ClusterAssignment,
    DecodeBounds,
};
use crate::field::{PrimeField, QuantConfig};
use crate::lcc::LccParams;
use crate::protocol::{decode_aggregates, holder_aggregate};

const ELEMENT_BYTES: u64 = 8;
pub const MIN_REPEATS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("bad benchmark configuration: {0}")]
    BadConfig(String),
    #[error("round failed: {0}")]
    Round(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Share,
    Distance,
    Decode,
    Aggregate,
    ServerCluster,
}

impl Phase {
    pub const ALL: [Phase; 5] = [Phase::Share, Phase::Distance, Phase::Decode, Phase::Aggregate, Phase::ServerCluster];

    pub fn is_user_side(self) -> bool {
        matches!(self, Phase::Share | Phase::Distance | Phase::Aggregate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    pub d: usize,
    pub phase: Phase,
    /// Median over repeats, in seconds.
    pub wall_time: f64,
    /// Bytes one user sends in this phase; the server sends nothing.
    pub bytes_sent: u64,
}

fn default_ns() -> Vec<usize> {
    vec![10, 20, 40]
}
fn default_ds() -> Vec<usize> {
    vec![150, 500, 1000, 2000, 4000]
}
fn default_k() -> usize {
    2
}
fn default_repeats() -> usize {
    MIN_REPEATS
}
fn default_alpha() -> f64 {
    1.0 / 3.0
}
fn default_lambda() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "default_ds")]
    pub ds: Vec<usize>,
    /// Clusters in the assignment the round starts from.
    #[serde(default = "default_k")]
    pub clusters: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lambda")]
    pub lambda: u64,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(ns: Vec<usize>, ds: Vec<usize>, seed: u64) -> Self {
        Self {
            ns,
            ds,
            clusters: default_k(),
            repeats: default_repeats(),
            alpha: default_alpha(),
            lambda: default_lambda(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let mut errs = Vec::new();
        if self.ns.is_empty() || self.ds.is_empty() {
            errs.push("ns and ds must be non-empty".to_string());
        }
        if self.ns.iter().any(|&n| n < 2) {
            errs.push("every n >= 2 (a single user has nobody to federate with)".to_string());
        }
        if self.ds.contains(&0) {
            errs.push("every d >= 1".to_string());
        }
        if self.clusters == 0 || self.ns.iter().any(|&n| n < self.clusters) {
            errs.push("1 <= clusters <= n".to_string());
        }
        if self.repeats < MIN_REPEATS {
            errs.push(format!("repeats >= {MIN_REPEATS}"));
        }
        if !(0.0..0.5).contains(&self.alpha) {
            errs.push("alpha in [0, 1/2)".to_string());
        }
        if self.lambda == 0 {
            errs.push("lambda >= 1".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(BenchError::BadConfig(errs.join("; ")))
        }
    }
}

/// Exact per-user bytes of the share and distance uploads:
/// `8 ((n - 1) ceil(d / ell) + k n)`.
pub fn expected_user_bytes(n: usize, d: usize, ell: usize, k: usize) -> u64 {
    ELEMENT_BYTES * ((n as u64 - 1) * d.div_ceil(ell) as u64 + (k * n) as u64)
}

/// Ordinary least squares `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LinearFit { intercept, slope, r_squared }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    /// User share plus distance time against `n d`.
    pub user_fit: LinearFit,
    /// Server decode time against `k n^2 log^2 n`.
    pub server_fit: LinearFit,
    /// Whether every measured upload matched [`expected_user_bytes`].
    pub bytes_match: bool,
}

impl BenchReport {
    pub fn record(&self, n: usize, d: usize, phase: Phase) -> Option<&BenchRecord> {
        self.records.iter().find(|r| r.n == n && r.d == d && r.phase == phase)
    }

    pub fn to_csv(&self) -> Result<String, BenchError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).map_err(|e| BenchError::Round(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| BenchError::Round(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn median(mut v: Vec<Duration>) -> f64 {
    v.sort();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m].as_secs_f64()
    } else {
        (v[m - 1].as_secs_f64() + v[m].as_secs_f64()) / 2.0
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

/// Measures one grid point.
pub fn bench_point(n: usize, d: usize, cfg: &BenchConfig) -> Result<(Vec<BenchRecord>, bool), BenchError> {
    let err = |e: &dyn std::fmt::Display| BenchError::Round(e.to_string());
    let t = LccParams::threshold(n, cfg.alpha);
    let ell = LccParams::default_ell(n, t);
    let bound = 1.0;
    let field = PrimeField::above(DecodeBounds::new(n, d, cfg.lambda, bound).min_modulus().max(1 << 40))
        .map_err(|e| err(&e))?;
    let params = LccParams::new(field, n, t, ell, 2).map_err(|e| err(&e))?;
    let quant = QuantConfig::new(cfg.lambda, bound).map_err(|e| err(&e))?;
    let k = cfg.clusters;
    let s = ClusterAssignment::new(n, (0..k).map(|c| (c..n).step_by(k).collect()).collect()).map_err(|e| err(&e))?;
    let adaptive = AdaptiveConfig::default();

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ ((n as u64) << 32) ^ d as u64);
    let prompts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-bound..bound)).collect()).collect();

    let mut times: Vec<Vec<Duration>> = vec![Vec::new(); Phase::ALL.len()];
    let mut bytes = [0u64; 5];
    for _ in 0..cfg.repeats {
        // user 0 shares alone; the others' shares are produced untimed
        let (own, dt) = timed(|| share_reduced(&prompts[..1], &params, &quant, &mut rng));
        let own = own.map_err(|e| err(&e))?;
        times[0].push(dt);
        let mut bundles = own;
        bundles.extend(share_reduced(&prompts[1..], &params, &quant, &mut rng).map_err(|e| err(&e))?);
        let holders = to_holders(&bundles, n);
        bytes[0] = bundles[0].iter().filter(|b| b.holder != 0).map(|b| b.share.len() as u64).sum::<u64>()
            * ELEMENT_BYTES;

        let (own_msg, dt) = timed(|| holder_compute(params.field(), &holders[0], &s));
        times[1].push(dt);
        bytes[1] = own_msg.distances.len() as u64 * ELEMENT_BYTES;
        let messages: Vec<_> = std::iter::once(own_msg)
            .chain(holders[1..].iter().map(|h| holder_compute(params.field(), h, &s)))
            .collect();

        let (decoded, dt) = timed(|| server_decode(&messages, &s, &params, &quant));
        let (table, gaps, _) = decoded.map_err(|e| err(&e))?;
        times[2].push(dt);

        // the clustered prompts double as the gradients that get averaged
        let (own_agg, dt) = timed(|| holder_aggregate(&params, &holders[0], &s));
        times[3].push(dt);
        bytes[3] = own_agg.share.len() as u64 * ELEMENT_BYTES;
        let aggs: Vec<_> = std::iter::once(own_agg)
            .chain(holders[1..].iter().map(|h| holder_aggregate(&params, h, &s)))
            .collect();
        decode_aggregates(&aggs, &s, &params, &quant, d).map_err(|e| err(&e))?;

        let (_, dt) = timed(|| adaptive_update(&table, &gaps, &s, &adaptive));
        times[4].push(dt);
    }
    let matches = bytes[0] + bytes[1] == expected_user_bytes(n, d, ell, k);
    let records = Phase::ALL
        .iter()
        .zip(times)
        .zip(bytes)
        .map(|((&phase, t), b)| {
            let wall_time = median(t);
            if wall_time < 1e-6 {
                log::warn!("phase {phase:?} at n = {n}, d = {d} took {wall_time:e} s, near timer resolution");
            }
            BenchRecord { n, d, phase, wall_time, bytes_sent: b }
        })
        .collect();
    Ok((records, matches))
}

/// Runs the whole grid and fits the cost models.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut bytes_match = true;
    for &n in &cfg.ns {
        for &d in &cfg.ds {
            log::info!("benchmark grid point n = {n}, d = {d}");
            let (r, ok) = bench_point(n, d, cfg)?;
            bytes_match &= ok;
            records.extend(r);
        }
    }
    let (mut ux, mut uy, mut sx, mut sy) = (vec![], vec![], vec![], vec![]);
    for &n in &cfg.ns {
        for &d in &cfg.ds {
            let get = |p| records.iter().find(|r: &&BenchRecord| r.n == n && r.d == d && r.phase == p).map_or(0.0, |r| r.wall_time);
            ux.push((n * d) as f64);
            uy.push(get(Phase::Share) + get(Phase::Distance));
            let ln = (n as f64).ln();
            sx.push(cfg.clusters as f64 * (n * n) as f64 * ln * ln);
            sy.push(get(Phase::Decode));
        }
    }
    Ok(BenchReport { records, user_fit: linear_fit(&ux, &uy), server_fit: linear_fit(&sx, &sy), bytes_match })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refuses_single_user() {
        let cfg = BenchConfig::new(vec![1], vec![8], 0);
        assert!(cfg.validate().unwrap_err().to_string().contains("n >= 2"));
        let mut cfg = BenchConfig::new(vec![4], vec![8], 0);
        cfg.repeats = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn byte_accounting_is_exact() {
        let cfg = BenchConfig::new(vec![6, 9], vec![7, 20], 1);
        let report = run_bench(&cfg).unwrap();
        assert!(report.bytes_match);
        let r = report.record(9, 20, Phase::Share).unwrap();
        let ell = LccParams::default_ell(9, 3);
        assert_eq!(r.bytes_sent, 8 * 8 * 20u64.div_ceil(ell as u64));
        assert_eq!(report.record(9, 20, Phase::Distance).unwrap().bytes_sent, 8 * 2 * 9);
        let csv = report.to_csv().unwrap();
        assert!(csv.starts_with("n,d,phase,wall_time,bytes_sent\n"));
        assert_eq!(csv.lines().count(), 1 + 4 * Phase::ALL.len());
    }
}
