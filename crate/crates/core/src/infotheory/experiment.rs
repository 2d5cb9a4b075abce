//! Leakage experiments: the closed-form mutual information between a prompt
//! and its distance to a cluster center, and the estimator sweep over
//! cluster size and prompt dimension.

use std::f64::consts::{E, PI};

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::chi2::{chi2_entropy, expected_log_ncx2, ncx2_entropy, Chebyshev};
use super::ksg::{kl_entropy, ksg_mi, Samples};
use super::mc::{chunk_rng, Estimate, CHUNK};
use super::InfoError;
use crate::protocol::derive_seed;

pub const MIN_SAMPLE_COUNT: usize = 1000;
const CHEBYSHEV_NODES: usize = 48;

fn default_sample_count() -> usize {
    MIN_SAMPLE_COUNT
}
fn default_k() -> usize {
    3
}
fn default_sigma() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_outer() -> usize {
    10_000
}

/// One prompt against one cluster. Prompt coordinates are i.i.d.
/// `N(mu, sigma^2)`. Inside the cluster every member shares that law; an
/// outside cluster has members `N(cluster_mu, cluster_sigma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiExperimentConfig {
    pub d: usize,
    pub n: usize,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    #[serde(default = "default_k")]
    pub k_neighbors: usize,
    #[serde(default)]
    pub mu: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_true")]
    pub inside_cluster: bool,
    #[serde(default)]
    pub cluster_mu: f64,
    #[serde(default = "default_sigma")]
    pub cluster_sigma: f64,
    /// Draws of the prompt used for the outer expectation.
    #[serde(default = "default_outer")]
    pub outer_samples: usize,
    pub seed: u64,
}

impl MiExperimentConfig {
    pub fn new(d: usize, n: usize, seed: u64) -> Self {
        Self {
            d,
            n,
            sample_count: default_sample_count(),
            k_neighbors: default_k(),
            mu: 0.0,
            sigma: 1.0,
            inside_cluster: true,
            cluster_mu: 0.0,
            cluster_sigma: 1.0,
            outer_samples: default_outer(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), InfoError> {
        let mut errs = Vec::new();
        if self.d == 0 {
            errs.push("d >= 1".to_string());
        }
        if self.n < 2 {
            errs.push("n >= 2".to_string());
        }
        if self.sample_count < MIN_SAMPLE_COUNT {
            errs.push(format!("sample_count >= {MIN_SAMPLE_COUNT}"));
        }
        if self.k_neighbors == 0 {
            errs.push("k_neighbors >= 1".to_string());
        }
        if !(self.sigma > 0.0) || !(self.cluster_sigma > 0.0) {
            errs.push("sigma > 0 and cluster_sigma > 0".to_string());
        }
        if !self.mu.is_finite() || !self.cluster_mu.is_finite() {
            errs.push("mu and cluster_mu finite".to_string());
        }
        if self.outer_samples < 2 {
            errs.push("outer_samples >= 2".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(InfoError::BadConfig(errs.join("; ")))
        }
    }
}

/// Both evaluations of the closed-form leakage.
///
/// `literal` adds the expected-logarithm expressions exactly as the closed
/// form is written, with standardized non-centrality. `entropy_based`
/// replaces each expected logarithm by the differential entropy of the
/// corresponding (scaled) noncentral chi-squared law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremMi {
    pub literal: Estimate,
    pub entropy_based: Estimate,
}

fn summarize(values: &[f64]) -> Result<Estimate, InfoError> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    if !mean.is_finite() {
        return Err(InfoError::PrecisionLoss("non-finite outer expectation".into()));
    }
    Ok(Estimate { mean, stderr: (var / n).sqrt() })
}

/// Draws `||p - center||^2` for `outer_samples` prompts.
fn squared_offsets(cfg: &MiExperimentConfig, center: f64) -> Vec<f64> {
    let normal = Normal::new(cfg.mu, cfg.sigma).expect("validated sigma");
    let chunks = cfg.outer_samples.div_ceil(CHUNK);
    (0..chunks)
        .flat_map(|c| {
            let len = CHUNK.min(cfg.outer_samples - c * CHUNK);
            let mut rng = chunk_rng(cfg.seed, c as u64);
            (0..len)
                .map(|_| (0..cfg.d).map(|_| (normal.sample(&mut rng) - center).powi(2)).sum::<f64>())
                .collect::<Vec<_>>()
        })
        .collect()
}

/// `h(ncchi2(d, tau))` over a range of `tau`, interpolated in `ln(1 + tau)`.
fn entropy_curve(d: usize, taus: &[f64]) -> Result<impl Fn(f64) -> f64, InfoError> {
    let lo = taus.iter().cloned().fold(f64::INFINITY, f64::min).ln_1p();
    let hi = taus.iter().cloned().fold(0.0, f64::max).ln_1p();
    let mut failure = None;
    let cheb = Chebyshev::fit(
        |u| match ncx2_entropy(d, u.exp_m1().max(0.0)) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        CHEBYSHEV_NODES,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(move |tau: f64| cheb.eval(tau.ln_1p()))
}

/// Mutual information between a prompt and its squared distance to the
/// cluster center, in nats.
pub fn theorem1_mi(cfg: &MiExperimentConfig) -> Result<TheoremMi, InfoError> {
    cfg.validate()?;
    let d = cfg.d;
    let n = cfg.n as f64;
    let head = chi2_entropy(d)?;
    if cfg.inside_cluster {
        let var = cfg.sigma * cfg.sigma;
        let taus: Vec<f64> = squared_offsets(cfg, cfg.mu).into_iter().map(|s| s / var).collect();
        let c = 2.0 * ((n - 1.0) / n).ln();
        let literal = taus
            .iter()
            .map(|&t| Ok(head + expected_log_ncx2(d, t)? + c))
            .collect::<Result<Vec<_>, InfoError>>()?;
        let scaled: Vec<f64> = taus.iter().map(|t| (n - 1.0) * t).collect();
        let curve = entropy_curve(d, &scaled)?;
        let entropy: Vec<f64> = scaled.iter().map(|&t| head + n.ln() - curve(t)).collect();
        return Ok(TheoremMi { literal: summarize(&literal)?, entropy_based: summarize(&entropy)? });
    }
    let offsets = squared_offsets(cfg, cfg.cluster_mu);
    let center_var = cfg.cluster_sigma.powi(2) / n;
    let tau_i = d as f64 * cfg.mu * cfg.mu;
    let marginal_literal = expected_log_ncx2(d, tau_i)?;
    let cond_var = cfg.sigma.powi(2);
    let literal = offsets
        .iter()
        .map(|&s| Ok(marginal_literal + expected_log_ncx2(d, s / cond_var)?))
        .collect::<Result<Vec<_>, InfoError>>()?;

    let diff_var = cfg.sigma.powi(2) + center_var;
    let shift = d as f64 * (cfg.mu - cfg.cluster_mu).powi(2) / diff_var;
    let marginal = ncx2_entropy(d, shift)? + diff_var.ln();
    let scaled: Vec<f64> = offsets.iter().map(|s| s / center_var).collect();
    let curve = entropy_curve(d, &scaled)?;
    let entropy: Vec<f64> = scaled.iter().map(|&t| marginal - curve(t) - center_var.ln()).collect();
    Ok(TheoremMi { literal: summarize(&literal)?, entropy_based: summarize(&entropy)? })
}

/// Closed-form `I(P_i; P_avg)` for a prompt inside an i.i.d. Gaussian cluster.
pub fn mi_prompt_average_inside(d: usize, n: usize) -> f64 {
    -(d as f64) / 2.0 * (1.0 - 1.0 / n as f64).ln()
}

/// Entropy of `N(mu, sigma^2 I_d)`.
pub fn gaussian_entropy(d: usize, sigma: f64) -> f64 {
    d as f64 / 2.0 * (2.0 * PI * E * sigma * sigma).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// KSG applied to `(P, P)`; diverges with the sample count.
    SelfMiKsg,
    /// Kozachenko-Leonenko estimate of `h(P)`.
    EntropyKl,
    MiAvgInside,
    MiAvgOutside,
    MiDistanceKsg,
    MiDistanceTheoremA,
    MiDistanceTheoremB,
}

impl Quantity {
    pub const ALL: [Quantity; 7] = [
        Quantity::SelfMiKsg,
        Quantity::EntropyKl,
        Quantity::MiAvgInside,
        Quantity::MiAvgOutside,
        Quantity::MiDistanceKsg,
        Quantity::MiDistanceTheoremA,
        Quantity::MiDistanceTheoremB,
    ];
}

fn default_ns() -> Vec<usize> {
    vec![20]
}
fn default_ds() -> Vec<usize> {
    vec![8]
}
fn default_replicates() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure3Config {
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "default_ds")]
    pub ds: Vec<usize>,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    #[serde(default = "default_k")]
    pub k_neighbors: usize,
    /// Independent repetitions behind each estimator row.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_true")]
    pub theorem: bool,
    #[serde(default = "default_outer")]
    pub outer_samples: usize,
    pub seed: u64,
}

impl Figure3Config {
    pub fn new(ns: Vec<usize>, ds: Vec<usize>, seed: u64) -> Self {
        Self {
            ns,
            ds,
            sample_count: default_sample_count(),
            k_neighbors: default_k(),
            replicates: default_replicates(),
            theorem: true,
            outer_samples: default_outer(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), InfoError> {
        let mut errs = Vec::new();
        if self.ns.is_empty() || self.ns.iter().any(|&n| !(2..=200).contains(&n)) {
            errs.push("every n in [2, 200]".to_string());
        }
        if self.ds.is_empty() || self.ds.iter().any(|&d| !(2..=512).contains(&d)) {
            errs.push("every d in [2, 512]".to_string());
        }
        if self.sample_count < MIN_SAMPLE_COUNT {
            errs.push(format!("sample_count >= {MIN_SAMPLE_COUNT}"));
        }
        if self.k_neighbors == 0 {
            errs.push("k_neighbors >= 1".to_string());
        }
        if self.replicates < 2 {
            errs.push("replicates >= 2".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(InfoError::BadConfig(errs.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure3Row {
    pub n: usize,
    pub d: usize,
    pub quantity: Quantity,
    pub estimate: f64,
    pub stderr: f64,
}

/// Standard-normal prompt draws for one replicate: the prompt, the center
/// of a cluster containing it, the center of an unrelated cluster, and the
/// squared distance to the containing center.
struct Draws {
    prompts: Vec<Vec<f64>>,
    inside: Vec<Vec<f64>>,
    outside: Vec<Vec<f64>>,
    distances: Vec<f64>,
}

fn draw(n: usize, d: usize, count: usize, seed: u64) -> Draws {
    let mut rng = chunk_rng(seed, 0);
    let mut out = Draws { prompts: vec![], inside: vec![], outside: vec![], distances: vec![] };
    for _ in 0..count {
        let mut gauss = || -> Vec<f64> { (0..d).map(|_| StandardNormal.sample(&mut rng)).collect() };
        let p = gauss();
        let mut inside = p.clone();
        for _ in 1..n {
            for (a, b) in inside.iter_mut().zip(gauss()) {
                *a += b;
            }
        }
        let mut outside = vec![0.0; d];
        for _ in 0..n {
            for (a, b) in outside.iter_mut().zip(gauss()) {
                *a += b;
            }
        }
        inside.iter_mut().chain(outside.iter_mut()).for_each(|v| *v /= n as f64);
        out.distances.push(p.iter().zip(&inside).map(|(a, b)| (a - b).powi(2)).sum());
        out.prompts.push(p);
        out.inside.push(inside);
        out.outside.push(outside);
    }
    out
}

fn estimate_point(cfg: &Figure3Config, n: usize, d: usize) -> Result<Vec<Figure3Row>, InfoError> {
    let k = cfg.k_neighbors;
    let mut per_quantity: Vec<Vec<f64>> = vec![Vec::new(); 5];
    for r in 0..cfg.replicates {
        let seed = derive_seed(cfg.seed, &format!("figure3:n{n}:d{d}"), r, 0);
        let draws = draw(n, d, cfg.sample_count, seed);
        let p = Samples::from_rows(&draws.prompts)?;
        let values = [
            ksg_mi(&p, &p, k)?,
            kl_entropy(&p, k)?,
            ksg_mi(&p, &Samples::from_rows(&draws.inside)?, k)?,
            ksg_mi(&p, &Samples::from_rows(&draws.outside)?, k)?,
            ksg_mi(&p, &Samples::replicated(&draws.distances, d)?, k)?,
        ];
        for (acc, v) in per_quantity.iter_mut().zip(values) {
            acc.push(v);
        }
    }
    let mut rows: Vec<Figure3Row> = Quantity::ALL[..5]
        .iter()
        .zip(&per_quantity)
        .map(|(&quantity, vals)| {
            let e = summarize(vals)?;
            Ok(Figure3Row { n, d, quantity, estimate: e.mean, stderr: e.stderr })
        })
        .collect::<Result<_, InfoError>>()?;
    if cfg.theorem {
        let mut mi_cfg = MiExperimentConfig::new(d, n, derive_seed(cfg.seed, "figure3:theorem", n, d));
        mi_cfg.outer_samples = cfg.outer_samples;
        let th = theorem1_mi(&mi_cfg)?;
        for (quantity, e) in [(Quantity::MiDistanceTheoremA, th.literal), (Quantity::MiDistanceTheoremB, th.entropy_based)] {
            rows.push(Figure3Row { n, d, quantity, estimate: e.mean, stderr: e.stderr });
        }
    }
    Ok(rows)
}

/// Runs every grid point, `n` outermost.
pub fn figure3_experiment(cfg: &Figure3Config) -> Result<Vec<Figure3Row>, InfoError> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        for &d in &cfg.ds {
            log::info!("mutual information grid point n = {n}, d = {d}");
            rows.extend(estimate_point(cfg, n, d)?);
        }
    }
    Ok(rows)
}

/// CSV with header `n,d,quantity,estimate,stderr`.
pub fn rows_to_csv(rows: &[Figure3Row]) -> Result<String, InfoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| InfoError::BadConfig(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| InfoError::BadConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// The row for `(n, d, quantity)`, if present.
pub fn lookup(rows: &[Figure3Row], n: usize, d: usize, quantity: Quantity) -> Option<&Figure3Row> {
    rows.iter().find(|r| r.n == n && r.d == d && r.quantity == quantity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = MiExperimentConfig::new(4, 10, 1);
        assert!(c.validate().is_ok());
        c.sample_count = 999;
        c.k_neighbors = 0;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("sample_count") && msg.contains("k_neighbors"));
        let bad: Result<MiExperimentConfig, _> = serde_json::from_str(r#"{"d": 2, "n": 3, "seed": 1, "extra": 0}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn constant_vanishes_for_large_clusters() {
        // As n grows the literal reading loses its additive constant and
        // both readings stay finite.
        let mut c = MiExperimentConfig::new(4, 10_000, 3);
        c.outer_samples = 2000;
        let big = theorem1_mi(&c).unwrap();
        c.n = 10;
        let small = theorem1_mi(&c).unwrap();
        let shift = 2.0 * (0.9f64.ln() - 0.9999f64.ln());
        assert!((small.literal.mean - big.literal.mean - shift).abs() < 1e-5);
        assert!(big.entropy_based.mean.is_finite());
    }

    #[test]
    fn outside_with_matching_law_has_no_marginal_shift() {
        let mut c = MiExperimentConfig::new(3, 8, 4);
        c.inside_cluster = false;
        c.outer_samples = 500;
        let r = theorem1_mi(&c).unwrap();
        assert!(r.literal.mean.is_finite() && r.entropy_based.mean > 0.0);
    }

    #[test]
    fn csv_layout() {
        let rows = vec![Figure3Row { n: 5, d: 8, quantity: Quantity::EntropyKl, estimate: 1.5, stderr: 0.25 }];
        assert_eq!(rows_to_csv(&rows).unwrap(), "n,d,quantity,estimate,stderr\n5,8,entropy_kl,1.5,0.25\n");
    }
}
