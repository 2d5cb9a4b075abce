//! Round loop of secure federated prompt personalization.
//!
//! Each user holds `P_i = P_{G,s} + P_{L,i}`. A round performs local steps,
//! reduces the personalized prompts, clusters them through coded distances,
//! averages gradients cluster-wise through coded sums and updates the
//! cluster globals. Every transfer is appended to a [`Transcript`].

mod aggregate;
mod config;
mod task;
mod transcript;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use aggregate::{decode_aggregates, holder_aggregate, secure_aggregate};
pub use config::{BasisMode, ClusteringMode, ExecutionMode, LeakInjection, RunConfig, TaskConfig};
pub use task::{local_step, Objective, SyntheticTask};
pub use transcript::{
    audit_transcript, digest, AuditReport, MessageKind, MessageRecord, Party, ReconPolicy,
    ReconstructionRecord, Transcript, Violation,
};

use crate::cluster::{
    self, adaptive_update, plaintext_oracle, server_decode, share_reduced, to_holders,
    ClusterAssignment, ClusterError, DecodeBounds, HolderShares,
};
use crate::field::{quantize, FieldError, PrimeField, QuantConfig, DEFAULT_MODULUS_FLOOR};
use crate::lcc::{LccError, LccParams};
use crate::reduce::{make_shared_basis, reduce_prompt, PromptMatrix, ReduceError, SharedBasis};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    BadConfig(Vec<String>),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Lcc(#[from] LccError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
}

/// Hierarchical prompt state. Globals are indexed like the current
/// [`ClusterAssignment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptState {
    pub global_per_cluster: Vec<PromptMatrix>,
    pub local_per_user: Vec<PromptMatrix>,
    pub personalized: Vec<PromptMatrix>,
}

impl PromptState {
    fn recompose(&mut self, s: &ClusterAssignment) {
        for (c, members) in s.clusters().iter().enumerate() {
            for &i in members {
                self.personalized[i] = self.global_per_cluster[c].add(&self.local_per_user[i]);
            }
        }
    }
}

/// Wall-clock seconds per protocol phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub local: f64,
    pub share: f64,
    pub distance: f64,
    pub decode: f64,
    pub server_cluster: f64,
    pub aggregate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub losses: Vec<f64>,
    pub mean_loss: f64,
    pub clusters: usize,
    pub assignment: Vec<usize>,
    pub phase_seconds: PhaseTimes,
}

/// A seeded protocol run.
pub struct Simulation {
    cfg: RunConfig,
    params: LccParams,
    quant_reduced: QuantConfig,
    quant_grad: QuantConfig,
    basis: SharedBasis,
    task: SyntheticTask,
    state: PromptState,
    assignment: ClusterAssignment,
    transcript: Transcript,
    round: usize,
    metrics: Vec<RoundMetrics>,
}

/// Deterministic sub-seed for a purpose, round and party.
pub fn derive_seed(seed: u64, purpose: &str, round: usize, party: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    h.update((round as u64).to_le_bytes());
    h.update((party as u64).to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

/// Field large enough for every decoded quantity of the run.
pub fn select_field(cfg: &RunConfig) -> Result<PrimeField, ProtocolError> {
    let bounds = DecodeBounds::new(cfg.n, cfg.reduced_dim(), cfg.lambda, cfg.reduced_bound);
    let lam = cfg.lambda as f64;
    let agg = 2.0 * (cfg.n as f64) * (lam * cfg.gradient_bound + 1.0) + 1.0;
    let quant = 2.0 * lam * cfg.reduced_bound.max(cfg.gradient_bound) + 1.0;
    let lower = bounds.min_modulus().max(agg.ceil() as u128).max(quant.ceil() as u128).max(DEFAULT_MODULUS_FLOOR);
    PrimeField::above(lower).map_err(|e| {
        ProtocolError::BadConfig(vec![format!(
            "lambda/reduced_bound: decoded values need a modulus above {lower}, which is not available ({e})"
        )])
    })
}

impl Simulation {
    /// Single cluster, identical globals, zero local components.
    pub fn init(cfg: RunConfig) -> Result<Self, ProtocolError> {
        cfg.validate().map_err(ProtocolError::BadConfig)?;
        let field = select_field(&cfg)?;
        let t = cfg.t();
        let params = LccParams::new(field, cfg.n, t, cfg.ell(), 2)?;
        let quant_reduced = QuantConfig::new(cfg.lambda, cfg.reduced_bound)?;
        let quant_grad = QuantConfig::new(cfg.lambda, cfg.gradient_bound)?;

        let (k, d) = (cfg.k_tokens, cfg.d_embed);
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, "init-global", 0, 0));
        let global0 = PromptMatrix::from_vec(
            k,
            d,
            (0..k * d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    cfg.task.init_scale * z
                })
                .collect(),
        )?;
        let basis = match cfg.basis {
            BasisMode::Gaussian => make_shared_basis(derive_seed(cfg.seed, "basis", 0, 0), k * d, cfg.r_reduced)?,
            BasisMode::GlobalSvd => SharedBasis::from_reference_svd(&global0, cfg.r_reduced)?,
        };
        let task = SyntheticTask::generate(cfg.n, k, d, &cfg.task, derive_seed(cfg.seed, "task", 0, 0));
        let state = PromptState {
            global_per_cluster: vec![global0.clone()],
            local_per_user: vec![PromptMatrix::zeros(k, d); cfg.n],
            personalized: vec![global0; cfg.n],
        };
        let transcript = Transcript::new(ReconPolicy { code_degree: params.code_degree(), n: cfg.n });
        Ok(Self {
            assignment: ClusterAssignment::single(cfg.n),
            cfg,
            params,
            quant_reduced,
            quant_grad,
            basis,
            task,
            state,
            transcript,
            round: 0,
            metrics: Vec::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }
    pub fn params(&self) -> &LccParams {
        &self.params
    }
    pub fn state(&self) -> &PromptState {
        &self.state
    }
    pub fn assignment(&self) -> &ClusterAssignment {
        &self.assignment
    }
    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
    pub fn task(&self) -> &SyntheticTask {
        &self.task
    }
    pub fn metrics(&self) -> &[RoundMetrics] {
        &self.metrics
    }
    pub fn rounds_done(&self) -> usize {
        self.round
    }

    pub fn losses(&self) -> Vec<f64> {
        (0..self.cfg.n).map(|i| self.task.loss(i, &self.state.personalized[i])).collect()
    }

    pub fn mean_loss(&self) -> f64 {
        let l = self.losses();
        l.iter().sum::<f64>() / l.len() as f64
    }

    /// Holders answering the server this round. At most as many drop out as
    /// degree-2 decoding tolerates.
    fn responders(&self) -> Vec<usize> {
        let n = self.cfg.n;
        if self.cfg.dropout == 0.0 {
            return (0..n).collect();
        }
        let tolerance = n - (self.params.recon_degree(2) + 1);
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(self.cfg.seed, "dropout", self.round, 0));
        let mut dropped = 0;
        (0..n)
            .filter(|_| {
                let drop = rng.random::<f64>() < self.cfg.dropout && dropped < tolerance;
                dropped += drop as usize;
                !drop
            })
            .collect()
    }

    fn share_all(
        &mut self,
        vectors: &[Vec<f64>],
        quant: &QuantConfig,
        purpose: &str,
        kind: MessageKind,
    ) -> Result<Vec<HolderShares>, ProtocolError> {
        let (round, seed, n) = (self.round, self.cfg.seed, self.cfg.n);
        let params = &self.params;
        let bundles = vectors
            .par_iter()
            .enumerate()
            .map(|(i, v)| {
                let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, purpose, round, i));
                share_reduced(std::slice::from_ref(v), params, quant, &mut rng).map(|mut b| b.remove(0))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (i, v) in vectors.iter().enumerate() {
            self.transcript.register_secret(&quantize(v, quant, params.field())?);
            for (j, b) in bundles[i].iter().enumerate() {
                if j != i {
                    self.transcript.record(round, Party::User(i), Party::User(j), kind, &b.share);
                }
            }
        }
        Ok(to_holders(&bundles, n))
    }

    /// One communication round.
    pub fn step(&mut self) -> Result<&RoundMetrics, ProtocolError> {
        let mut times = PhaseTimes::default();
        let n = self.cfg.n;
        let round = self.round;
        let secure = self.cfg.mode == ExecutionMode::Secure;

        // local updates with the global component frozen
        let clock = Instant::now();
        let labels = self.assignment.labels();
        let (eta, epochs) = (self.cfg.eta, self.cfg.local_epochs);
        let updates: Vec<(PromptMatrix, PromptMatrix)> = (0..n)
            .into_par_iter()
            .map(|i| {
                local_step(
                    i,
                    &self.state.global_per_cluster[labels[i]],
                    &self.state.local_per_user[i],
                    &self.task,
                    eta,
                    epochs,
                )
            })
            .collect();
        let mut grads = Vec::with_capacity(n);
        for (i, (local, grad)) in updates.into_iter().enumerate() {
            self.state.local_per_user[i] = local;
            grads.push(grad.as_slice().to_vec());
        }
        // distances use the stale global component
        self.state.recompose(&self.assignment);
        times.local = clock.elapsed().as_secs_f64();

        let reduced: Vec<Vec<f64>> = self
            .state
            .personalized
            .iter()
            .map(|p| reduce_prompt(p, &self.basis).map(|r| r.coords))
            .collect::<Result<_, _>>()?;

        let responders = self.responders();
        let previous = self.assignment.clone();
        let next = match (self.cfg.clustering, secure) {
            (ClusteringMode::SingleGlobal, _) => previous.clone(),
            (ClusteringMode::Adaptive, true) => {
                let clock = Instant::now();
                let quant = self.quant_reduced;
                let holders = self.share_all(&reduced, &quant, "prompt", MessageKind::PromptShare)?;
                times.share = clock.elapsed().as_secs_f64();

                let clock = Instant::now();
                let f = *self.params.field();
                let messages: Vec<cluster::HolderMessage> = responders
                    .par_iter()
                    .map(|&j| cluster::holder_compute(&f, &holders[j], &previous))
                    .collect();
                times.distance = clock.elapsed().as_secs_f64();
                for m in &messages {
                    let from = Party::User(m.holder);
                    self.transcript.record(round, from, Party::Server, MessageKind::DistanceShare, &m.distances);
                    if !m.gaps.is_empty() {
                        self.transcript.record(round, from, Party::Server, MessageKind::CenterGapShare, &m.gaps);
                    }
                }

                let clock = Instant::now();
                let (dist, gaps, log) = server_decode(&messages, &previous, &self.params, &self.quant_reduced)?;
                times.decode = clock.elapsed().as_secs_f64();
                for r in log {
                    self.transcript.record_reconstruction(round, &r.what, r.degree, r.holders);
                }
                let clock = Instant::now();
                let next = adaptive_update(&dist, &gaps, &previous, &self.cfg.adaptive);
                times.server_cluster = clock.elapsed().as_secs_f64();
                next
            }
            (ClusteringMode::Adaptive, false) => {
                for (i, v) in reduced.iter().enumerate() {
                    let q = quantize(v, &self.quant_reduced, self.params.field())?;
                    self.transcript.record(round, Party::User(i), Party::Server, MessageKind::PlainPrompt, &q);
                }
                let clock = Instant::now();
                let (next, _, _) = plaintext_oracle(&reduced, &previous, &self.cfg.adaptive);
                times.server_cluster = clock.elapsed().as_secs_f64();
                next
            }
        };
        if let Some(leak) = self.cfg.inject_leak {
            let q = quantize(&reduced[leak.user], &self.quant_reduced, self.params.field())?;
            self.transcript.record(round, Party::User(leak.user), Party::Server, MessageKind::PlainPrompt, &q);
        }

        // assignment broadcast and acknowledgements
        let next_labels = next.labels();
        for i in 0..n {
            let label = [self.params.field().elem(next_labels[i] as u64)];
            self.transcript.record(round, Party::Server, Party::User(i), MessageKind::Assignment, &label);
            self.transcript.record(round, Party::User(i), Party::Server, MessageKind::AssignmentAck, &label);
        }

        // new clusters inherit the mean of their members' previous globals
        let globals: Vec<PromptMatrix> = next
            .clusters()
            .iter()
            .map(|members| {
                let first = labels[members[0]];
                if members.iter().all(|&i| labels[i] == first) {
                    // same source cluster: copy to keep the value bit-exact
                    return self.state.global_per_cluster[first].clone();
                }
                PromptMatrix::mean(members.iter().map(|&i| &self.state.global_per_cluster[labels[i]]))
                    .expect("clusters are non-empty")
            })
            .collect();
        self.state.global_per_cluster = globals;

        let clock = Instant::now();
        let dim = self.cfg.k_tokens * self.cfg.d_embed;
        let means: Vec<Vec<f64>> = if secure {
            let quant = self.quant_grad;
            let holders = self.share_all(&grads, &quant, "gradient", MessageKind::GradientShare)?;
            let bundles: Vec<_> =
                responders.iter().map(|&j| holder_aggregate(&self.params, &holders[j], &next)).collect();
            for b in &bundles {
                self.transcript.record(round, Party::User(b.holder), Party::Server, MessageKind::AggregateShare, &b.share);
            }
            let (means, info) = decode_aggregates(&bundles, &next, &self.params, &self.quant_grad, dim)?;
            self.transcript.record_reconstruction(round, &info.what, info.degree, info.holders);
            means
        } else {
            for (i, g) in grads.iter().enumerate() {
                let q = quantize(g, &self.quant_grad, self.params.field())?;
                self.transcript.record(round, Party::User(i), Party::Server, MessageKind::PlainGradient, &q);
            }
            next.clusters()
                .iter()
                .map(|members| {
                    let mut acc = vec![0.0; dim];
                    for &i in members {
                        for (a, g) in acc.iter_mut().zip(&grads[i]) {
                            *a += g;
                        }
                    }
                    acc.into_iter().map(|v| v / members.len() as f64).collect()
                })
                .collect()
        };
        times.aggregate = clock.elapsed().as_secs_f64();

        for (c, mean) in means.iter().enumerate() {
            let step = PromptMatrix::from_vec(self.cfg.k_tokens, self.cfg.d_embed, mean.clone())?;
            self.state.global_per_cluster[c].axpy_neg(eta, &step);
            let quantized = quantize(mean, &self.quant_grad, self.params.field())?;
            for &i in &next.clusters()[c] {
                self.transcript.record(round, Party::Server, Party::User(i), MessageKind::GlobalUpdate, &quantized);
            }
        }
        self.state.recompose(&next);
        self.assignment = next;
        self.round += 1;

        let losses = self.losses();
        let mean_loss = losses.iter().sum::<f64>() / n as f64;
        self.metrics.push(RoundMetrics {
            round,
            losses,
            mean_loss,
            clusters: self.assignment.len(),
            assignment: self.assignment.labels(),
            phase_seconds: times,
        });
        Ok(self.metrics.last().expect("just pushed"))
    }

    /// Runs the configured number of rounds.
    pub fn run(&mut self) -> Result<(), ProtocolError> {
        while self.round < self.cfg.rounds {
            self.step()?;
        }
        Ok(())
    }

    pub fn audit(&self) -> AuditReport {
        audit_transcript(&self.transcript)
    }

    /// Expected bytes user `i` sends in the clustering phase of a round that
    /// started with `k` clusters: `(n - 1)` prompt shares of `ceil(r/ell)`
    /// elements plus `k * n` coded distances.
    pub fn expected_cluster_bytes(&self, k: usize) -> usize {
        let n = self.cfg.n;
        let width = self.cfg.reduced_dim().div_ceil(self.params.ell());
        crate::field::ELEMENT_BYTES * ((n - 1) * width + k * n)
    }
}

/// Whether the assignment groups users exactly by domain.
pub fn matches_partition(s: &ClusterAssignment, domain_of: &[usize]) -> bool {
    let domains = domain_of.iter().max().map_or(0, |m| m + 1);
    let truth: Vec<Vec<usize>> =
        (0..domains).map(|d| (0..domain_of.len()).filter(|&i| domain_of[i] == d).collect()).collect();
    let truth = ClusterAssignment::new(domain_of.len(), truth.into_iter().filter(|c| !c.is_empty()).collect());
    truth.is_ok_and(|t| t.canonical() == s.canonical())
}
