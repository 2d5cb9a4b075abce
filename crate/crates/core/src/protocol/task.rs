use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::TaskConfig;
use crate::reduce::PromptMatrix;

/// A per-user differentiable objective on the personalized prompt.
pub trait Objective {
    fn loss(&self, user: usize, prompt: &PromptMatrix) -> f64;
    fn gradient(&self, user: usize, prompt: &PromptMatrix) -> PromptMatrix;
}

/// Quadratic stand-in task: user `i` wants its prompt to equal
/// `T_i = G*_{dom(i)} + L*_i + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub domain_of: Vec<usize>,
    pub domain_targets: Vec<PromptMatrix>,
    pub targets: Vec<PromptMatrix>,
    pub noise_sigma: f64,
}

impl SyntheticTask {
    /// Users are dealt to domains round-robin. Domain 0 targets the constant
    /// `+scale` matrix, domain 1 the constant `-scale` matrix, further domains
    /// random sign patterns of magnitude `scale`.
    pub fn generate(n: usize, k_tokens: usize, d_embed: usize, cfg: &TaskConfig, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let len = k_tokens * d_embed;
        let domain_targets: Vec<PromptMatrix> = (0..cfg.domains)
            .map(|dom| {
                let data = match dom {
                    0 => vec![cfg.domain_scale; len],
                    1 => vec![-cfg.domain_scale; len],
                    _ => (0..len)
                        .map(|_| if rng.random::<bool>() { cfg.domain_scale } else { -cfg.domain_scale })
                        .collect(),
                };
                PromptMatrix::from_vec(k_tokens, d_embed, data).expect("finite targets")
            })
            .collect();
        let domain_of: Vec<usize> = (0..n).map(|i| i % cfg.domains).collect();
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
        let targets = domain_of
            .iter()
            .map(|&dom| {
                let data = domain_targets[dom]
                    .as_slice()
                    .iter()
                    .map(|g| {
                        let local: f64 = StandardNormal.sample(&mut rng);
                        g + cfg.local_scale * local + noise.sample(&mut rng)
                    })
                    .collect();
                PromptMatrix::from_vec(k_tokens, d_embed, data).expect("finite targets")
            })
            .collect();
        Self { domain_of, domain_targets, targets, noise_sigma: cfg.noise_sigma }
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }
}

impl Objective for SyntheticTask {
    fn loss(&self, user: usize, prompt: &PromptMatrix) -> f64 {
        0.5 * prompt.sub(&self.targets[user]).frobenius_sq()
    }

    fn gradient(&self, user: usize, prompt: &PromptMatrix) -> PromptMatrix {
        prompt.sub(&self.targets[user])
    }
}

/// Runs `epochs` gradient steps on the local component with the global one
/// frozen. Returns the updated local component and the last gradient, which
/// is also the gradient with respect to the global component.
pub fn local_step<O: Objective + ?Sized>(
    user: usize,
    global: &PromptMatrix,
    local: &PromptMatrix,
    objective: &O,
    eta: f64,
    epochs: usize,
) -> (PromptMatrix, PromptMatrix) {
    let mut local = local.clone();
    let mut grad = PromptMatrix::zeros(local.k_tokens(), local.d_embed());
    for _ in 0..epochs {
        grad = objective.gradient(user, &global.add(&local));
        local.axpy_neg(eta, &grad);
    }
    (local, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_task(target: f64) -> SyntheticTask {
        let t = PromptMatrix::from_vec(1, 1, vec![target]).unwrap();
        SyntheticTask { domain_of: vec![0], domain_targets: vec![t.clone()], targets: vec![t], noise_sigma: 0.0 }
    }

    #[test]
    fn scalar_hand_example() {
        let task = scalar_task(2.0);
        let zero = PromptMatrix::zeros(1, 1);
        let (local, grad) = local_step(0, &zero, &zero, &task, 0.1, 1);
        assert!((local.get(0, 0) - 0.2).abs() < 1e-15);
        assert_eq!(grad.get(0, 0), -2.0);
    }

    #[test]
    fn optimum_is_stationary() {
        let task = scalar_task(2.0);
        let g = PromptMatrix::from_vec(1, 1, vec![1.5]).unwrap();
        let l = PromptMatrix::from_vec(1, 1, vec![0.5]).unwrap();
        let (local, grad) = local_step(0, &g, &l, &task, 0.1, 5);
        assert_eq!(local, l);
        assert_eq!(grad.get(0, 0), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = TaskConfig::default();
        let task = SyntheticTask::generate(3, 2, 3, &cfg, 7);
        let p = PromptMatrix::from_vec(2, 3, vec![0.3, -1.2, 0.8, 2.0, 0.1, -0.4]).unwrap();
        let grad = task.gradient(1, &p);
        let h = 1e-5;
        for idx in 0..6 {
            let mut plus = p.clone();
            plus.as_mut_slice()[idx] += h;
            let mut minus = p.clone();
            minus.as_mut_slice()[idx] -= h;
            let fd = (task.loss(1, &plus) - task.loss(1, &minus)) / (2.0 * h);
            let g = grad.as_slice()[idx];
            assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "{fd} vs {g}");
        }
    }

    #[test]
    fn domains_are_dealt_round_robin() {
        let task = SyntheticTask::generate(5, 1, 2, &TaskConfig::default(), 1);
        assert_eq!(task.domain_of, vec![0, 1, 0, 1, 0]);
        assert_eq!(task.domain_targets[0].as_slice(), &[1.0, 1.0]);
        assert_eq!(task.domain_targets[1].as_slice(), &[-1.0, -1.0]);
    }
}
