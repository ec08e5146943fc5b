use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::error::{Error, Result};

/// Categorical distribution over the unmasked actions. Masked logits are
/// treated as −∞: their probability and log-probability gradient are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedCategorical {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub mask: Vec<bool>,
}

impl MaskedCategorical {
    pub fn new(logits: &[f64], mask: &[bool]) -> Result<Self> {
        assert_eq!(logits.len(), mask.len(), "mask width");
        let max = logits
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(l, _)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::AllMasked);
        }
        let sum: f64 = logits
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(l, _)| (l - max).exp())
            .sum();
        let lse = max + sum.ln();
        let log_probs: Vec<f64> = logits
            .iter()
            .zip(mask)
            .map(|(l, &m)| if m { l - lse } else { f64::NEG_INFINITY })
            .collect();
        let probs = log_probs.iter().map(|lp| lp.exp()).collect();
        Ok(Self {
            probs,
            log_probs,
            mask: mask.to_vec(),
        })
    }

    /// Inverse-CDF sample restricted to unmasked actions.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, (&p, &m)) in self.probs.iter().zip(&self.mask).enumerate() {
            if !m {
                continue;
            }
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
        last
    }

    /// Most probable unmasked action, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = None;
        for (i, (&p, &m)) in self.probs.iter().zip(&self.mask).enumerate() {
            if m && best.is_none_or(|b: usize| p > self.probs[b]) {
                best = Some(i);
            }
        }
        best.expect("at least one unmasked action")
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.log_probs[action]
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.log_probs)
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|((p, lp), _)| if *p > 0.0 { -p * lp } else { 0.0 })
            .sum()
    }
}

/// Per-sample clipped surrogate `min(r·A, clip(r, 1−ε, 1+ε)·A)`.
pub fn clipped_objective(ratio: f64, adv: f64, clip: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - clip, 1.0 + clip) * adv)
}

/// Generalized advantage estimates. `dones[t]` marks that the episode ended
/// after step `t` (its successor is not bootstrapped); `last_value` is the
/// critic's value of the state following the final step.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    assert!(rewards.len() == values.len() && values.len() == dones.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    adv
}

/// One minibatch of transitions for an update.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    /// Negative mean policy entropy (logged, never optimized).
    pub entropy_loss: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCoefs {
    pub clip: f64,
    pub vf_coef: f64,
    /// Normalize advantages within the minibatch.
    pub normalize_advantages: bool,
}

/// Clipped-surrogate loss plus weighted value MSE, with analytic gradients
/// for actor and critic parameters.
pub fn clipped_loss(
    actor: &Mlp,
    critic: &Mlp,
    batch: &Batch,
    coefs: &LossCoefs,
) -> Result<(LossStats, Vec<f64>, Vec<f64>)> {
    let m = batch.len();
    if m == 0 {
        return Ok((
            LossStats::default(),
            vec![0.0; actor.params.len()],
            vec![0.0; critic.params.len()],
        ));
    }
    let n = m as f64;
    let adv = if coefs.normalize_advantages && m > 1 {
        let mean = batch.advantages.iter().sum::<f64>() / n;
        let var = batch
            .advantages
            .iter()
            .map(|a| (a - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        let std = var.sqrt();
        batch
            .advantages
            .iter()
            .map(|a| (a - mean) / (std + 1e-8))
            .collect()
    } else {
        batch.advantages.clone()
    };

    let mut ga = vec![0.0; actor.params.len()];
    let mut gc = vec![0.0; critic.params.len()];
    let mut stats = LossStats::default();
    let mut clipped = 0usize;
    for i in 0..m {
        let cache = actor.forward(&batch.obs[i]);
        let dist = MaskedCategorical::new(cache.output(), &batch.masks[i])?;
        let a = batch.actions[i];
        let ratio = (dist.log_prob(a) - batch.old_log_probs[i]).exp();
        let obj = clipped_objective(ratio, adv[i], coefs.clip);
        stats.policy -= obj / n;
        stats.entropy_loss -= dist.entropy() / n;
        if (ratio - 1.0).abs() > coefs.clip {
            clipped += 1;
        }
        // The unclipped branch is the active one whenever it is the minimum.
        let d_logp = if ratio * adv[i] <= obj {
            -adv[i] * ratio / n
        } else {
            0.0
        };
        if d_logp != 0.0 {
            let d_logits: Vec<f64> = dist
                .probs
                .iter()
                .zip(&dist.mask)
                .enumerate()
                .map(|(k, (p, &ok))| {
                    if !ok {
                        0.0
                    } else {
                        d_logp * (f64::from(u8::from(k == a)) - p)
                    }
                })
                .collect();
            actor.backward(&cache, &d_logits, &mut ga);
        }

        let vc = critic.forward(&batch.obs[i]);
        let v = vc.output()[0];
        let err = v - batch.returns[i];
        stats.value += err * err / n;
        critic.backward(&vc, &[coefs.vf_coef * 2.0 * err / n], &mut gc);
    }
    stats.total = stats.policy + coefs.vf_coef * stats.value;
    stats.clip_fraction = clipped as f64 / n;
    if !stats.total.is_finite() {
        return Err(Error::NonFinite(format!("ppo loss {stats:?}")));
    }
    Ok((stats, ga, gc))
}

/// Adam over one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Scales all gradients together so their joint L2 norm is at most `max_norm`.
/// Returns the norm before scaling.
pub fn clip_grad_norm(grads: &mut [&mut Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / (norm + 1e-6);
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clip_arithmetic() {
        assert_eq!(clipped_objective(1.5, 1.0, 0.2), 1.2);
        assert_eq!(clipped_objective(1.0, 0.7, 0.2), 0.7);
        assert_eq!(clipped_objective(0.5, -1.0, 0.2), -0.8);
    }

    #[test]
    fn masked_softmax_examples() {
        let mut mask = vec![false; 9];
        mask[2] = true;
        mask[7] = true;
        let d = MaskedCategorical::new(&[0.0; 9], &mask).unwrap();
        assert_eq!(d.probs[2], 0.5);
        assert_eq!(d.probs[7], 0.5);
        assert_eq!(d.probs.iter().sum::<f64>(), 1.0);
        let d = MaskedCategorical::new(&[3.0, -1.0], &[false, true]).unwrap();
        assert_eq!(d.probs, vec![0.0, 1.0]);
        assert!(matches!(
            MaskedCategorical::new(&[1.0, 2.0], &[false, false]),
            Err(Error::AllMasked)
        ));
    }

    #[test]
    fn sampling_skips_masked_actions() {
        let d = MaskedCategorical::new(&[5.0, 0.0, 0.0, 9.0], &[false, true, true, false]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[d.sample(&mut rng)] += 1;
        }
        assert_eq!(counts[0] + counts[3], 0);
        assert!(counts[1] > 4_000 && counts[2] > 4_000);
    }

    #[test]
    fn gae_limits() {
        assert_eq!(gae(&[1.0], &[0.0], &[true], 5.0, 0.99, 0.95), vec![1.0]);
        let r = [1.0, 2.0, 3.0];
        let v = [0.5, 0.1, -0.2];
        let a = gae(&r, &v, &[false, false, false], 0.7, 0.0, 0.95);
        for t in 0..3 {
            assert_eq!(a[t], r[t] - v[t]);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut opt = Adam::new(2, 0.1);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[0.5, -2.0]);
        assert!((p[0] - 0.9).abs() < 1e-4);
        assert!((p[1] + 0.9).abs() < 1e-4);
    }

    #[test]
    fn grad_norm_clipping() {
        let mut a = vec![3.0];
        let mut b = vec![4.0];
        let norm = clip_grad_norm(&mut [&mut a, &mut b], 0.5);
        assert_eq!(norm, 5.0);
        assert!(((a[0] * a[0] + b[0] * b[0]).sqrt() - 0.5).abs() < 1e-6);
    }
}
