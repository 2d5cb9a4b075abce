use serde::{Deserialize, Serialize};

use crate::cluster::AdaptiveConfig;
use crate::lcc::LccParams;

/// How personalized prompts are projected before clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisMode {
    /// Seeded Gaussian rows, orthonormalized; reduced dimension `r_reduced`.
    Gaussian,
    /// Top right singular vectors of the initial global prompt; reduced
    /// dimension `k_tokens * r_reduced`.
    GlobalSvd,
}

/// Whether the run uses coded computation or the plaintext shadow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecutionMode {
    Secure,
    Plaintext,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusteringMode {
    Adaptive,
    /// Ablation: one global prompt shared by every user, no clustering.
    SingleGlobal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub domains: usize,
    /// Entry magnitude of the per-domain global targets.
    pub domain_scale: f64,
    /// Standard deviation of the per-user local targets.
    pub local_scale: f64,
    pub noise_sigma: f64,
    /// Standard deviation of the initial global prompt entries.
    pub init_scale: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self { domains: 2, domain_scale: 1.0, local_scale: 0.1, noise_sigma: 0.01, init_scale: 0.1 }
    }
}

/// Test hook: the named user additionally sends its quantized prompt to the
/// server in the clear every round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakInjection {
    pub user: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "defaults::n")]
    pub n: usize,
    #[serde(default = "defaults::rounds")]
    pub rounds: usize,
    #[serde(default = "defaults::eta")]
    pub eta: f64,
    #[serde(default = "defaults::local_epochs")]
    pub local_epochs: usize,
    #[serde(default = "defaults::k_tokens")]
    pub k_tokens: usize,
    #[serde(default = "defaults::d_embed")]
    pub d_embed: usize,
    #[serde(default = "defaults::r_reduced")]
    pub r_reduced: usize,
    #[serde(default = "defaults::lambda")]
    pub lambda: u64,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    /// Slices per secret; `None` uses the largest value that keeps degree-2
    /// results decodable from all users.
    #[serde(default)]
    pub ell: Option<usize>,
    /// Bound on the magnitude of any reduced coordinate.
    #[serde(default = "defaults::value_bound")]
    pub reduced_bound: f64,
    /// Bound on the magnitude of any gradient entry.
    #[serde(default = "defaults::value_bound")]
    pub gradient_bound: f64,
    #[serde(default = "defaults::basis")]
    pub basis: BasisMode,
    #[serde(default = "defaults::mode")]
    pub mode: ExecutionMode,
    #[serde(default = "defaults::clustering")]
    pub clustering: ClusteringMode,
    /// Per-round probability that a holder fails to answer the server.
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub adaptive: AdaptiveConfig,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub inject_leak: Option<LeakInjection>,
}

mod defaults {
    use super::*;
    pub fn n() -> usize {
        20
    }
    pub fn rounds() -> usize {
        100
    }
    pub fn eta() -> f64 {
        0.001
    }
    pub fn local_epochs() -> usize {
        10
    }
    pub fn k_tokens() -> usize {
        4
    }
    pub fn d_embed() -> usize {
        16
    }
    pub fn r_reduced() -> usize {
        8
    }
    pub fn lambda() -> u64 {
        crate::field::DEFAULT_LAMBDA
    }
    pub fn alpha() -> f64 {
        1.0 / 3.0
    }
    pub fn value_bound() -> f64 {
        64.0
    }
    pub fn basis() -> BasisMode {
        BasisMode::Gaussian
    }
    pub fn mode() -> ExecutionMode {
        ExecutionMode::Secure
    }
    pub fn clustering() -> ClusteringMode {
        ClusteringMode::Adaptive
    }
}

impl RunConfig {
    /// Defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults deserialize")
    }

    /// Privacy threshold `floor(alpha * n)`.
    pub fn t(&self) -> usize {
        LccParams::threshold(self.n, self.alpha)
    }

    pub fn ell(&self) -> usize {
        self.ell.unwrap_or_else(|| LccParams::default_ell(self.n, self.t()))
    }

    pub fn reduced_dim(&self) -> usize {
        match self.basis {
            BasisMode::Gaussian => self.r_reduced,
            BasisMode::GlobalSvd => self.k_tokens * self.r_reduced,
        }
    }

    /// Collects every violated constraint.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        check(self.n >= 2, format!("n: need at least 2 users for federation, got {}", self.n));
        check(self.rounds >= 1, "rounds: must be at least 1".into());
        check(self.eta.is_finite() && self.eta >= 0.0, format!("eta: must be finite and >= 0, got {}", self.eta));
        check(self.local_epochs >= 1, "local_epochs: must be at least 1".into());
        check(self.k_tokens >= 1 && self.d_embed >= 1, "k_tokens, d_embed: must be positive".into());
        check(self.r_reduced >= 1, "r_reduced: must be positive".into());
        match self.basis {
            BasisMode::Gaussian => check(
                self.r_reduced <= self.k_tokens * self.d_embed,
                format!("r_reduced: {} exceeds k_tokens*d_embed = {}", self.r_reduced, self.k_tokens * self.d_embed),
            ),
            BasisMode::GlobalSvd => check(
                self.r_reduced <= self.k_tokens.min(self.d_embed),
                format!("r_reduced: {} exceeds min(k_tokens, d_embed) for global-svd", self.r_reduced),
            ),
        }
        check(self.lambda >= 1, "lambda: must be at least 1".into());
        check(
            self.alpha.is_finite() && (0.0..1.0).contains(&self.alpha),
            format!("alpha: must lie in [0, 1), got {}", self.alpha),
        );
        check(
            self.alpha * self.n as f64 >= 1.0 - 1e-9,
            format!("alpha: alpha*n = {} must be at least 1", self.alpha * self.n as f64),
        );
        if let Some(ell) = self.ell {
            check(ell >= 1, "ell: must be at least 1".into());
            let needed = 2 * (ell + self.t()).saturating_sub(1) + 1;
            check(
                needed <= self.n,
                format!(
                    "ell: degree-2 decoding needs 2*(ell+t-1)+1 = {needed} <= n = {} (ell = {ell}, t = {})",
                    self.n,
                    self.t()
                ),
            );
        } else {
            let needed = 2 * (self.ell() + self.t()).saturating_sub(1) + 1;
            check(
                needed <= self.n,
                format!("alpha: t = {} leaves no decodable ell for n = {}", self.t(), self.n),
            );
        }
        for (name, v) in [("reduced_bound", self.reduced_bound), ("gradient_bound", self.gradient_bound)] {
            check(v.is_finite() && v > 0.0, format!("{name}: must be positive, got {v}"));
        }
        check(
            self.dropout.is_finite() && (0.0..1.0).contains(&self.dropout),
            format!("dropout: must lie in [0, 1), got {}", self.dropout),
        );
        if let Err(e) = self.adaptive.validate() {
            check(false, format!("adaptive: {e}"));
        }
        let t = &self.task;
        check(
            t.domains >= 1 && t.domains <= self.n,
            format!("task.domains: must lie in [1, n], got {}", t.domains),
        );
        for (name, v) in [
            ("task.domain_scale", t.domain_scale),
            ("task.local_scale", t.local_scale),
            ("task.noise_sigma", t.noise_sigma),
            ("task.init_scale", t.init_scale),
        ] {
            check(v.is_finite() && v >= 0.0, format!("{name}: must be finite and >= 0, got {v}"));
        }
        if let Some(leak) = self.inject_leak {
            check(leak.user < self.n, format!("inject_leak.user: {} out of range", leak.user));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}
