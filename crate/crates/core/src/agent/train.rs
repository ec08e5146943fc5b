use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mlp::Mlp;
use super::ppo::{clip_grad_norm, clipped_loss, gae, Adam, Batch, LossCoefs, MaskedCategorical};
use crate::battery::{ActionSpace, BatteryModel, ChargeTarget};
use crate::engine::{ChargingPolicy, DecisionRequest, SimConfig, Simulation};
use crate::error::{Error, Result};
use crate::orders::OrderStream;
use crate::rlenv::{observe, Env, FeatureCaps};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub eval_every: u64,
    pub n_steps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub lr: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 400_000,
            eval_every: 200_000,
            n_steps: 2048,
            batch_size: 64,
            epochs: 10,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            lr: 3e-4,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train.{m}")));
        if self.n_steps == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("n_steps, batch_size and epochs must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        if !(self.lr > 0.0 && self.clip > 0.0 && self.max_grad_norm > 0.0) {
            return bad("lr, clip and max_grad_norm must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        Ok(())
    }
}

/// Separate actor (logits) and critic (state value) networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
    pub action_space: ActionSpace,
}

impl ActorCritic {
    pub fn new<R: Rng>(obs_len: usize, space: ActionSpace, hidden: &[usize], rng: &mut R) -> Self {
        let sizes = |out: usize| {
            let mut s = vec![obs_len];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        let sqrt2 = std::f64::consts::SQRT_2;
        Self {
            actor: Mlp::orthogonal(&sizes(space.len()), sqrt2, 0.01, rng),
            critic: Mlp::orthogonal(&sizes(1), sqrt2, 1.0, rng),
            action_space: space,
        }
    }

    pub fn dist(&self, obs: &[f64], mask: &[bool]) -> Result<MaskedCategorical> {
        MaskedCategorical::new(&self.actor.predict(obs), mask)
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.critic.predict(obs)[0]
    }
}

/// Greedy (argmax) policy usable wherever a strategy is.
#[derive(Debug, Clone)]
pub struct PolicyAgent {
    pub model: ActorCritic,
    pub caps: FeatureCaps,
}

impl ChargingPolicy for PolicyAgent {
    fn decide(&mut self, sim: &Simulation, _req: &DecisionRequest) -> Result<ChargeTarget> {
        let mask = sim.pending_mask().ok_or(Error::NoPendingDecision)?;
        let d = self.model.dist(&observe(sim, &self.caps), &mask)?;
        Ok(self.model.action_space.target(d.argmax()))
    }
}

#[derive(Serialize)]
struct HashInput<'a> {
    amrs: usize,
    stations: usize,
    obs_len: usize,
    action_space: ActionSpace,
    battery: &'a BatteryModel,
    hidden: &'a [usize],
}

/// Digest of everything the network's input and output layout depends on.
pub fn policy_hash(sim: &SimConfig, stations: usize, hidden: &[usize]) -> String {
    let input = HashInput {
        amrs: sim.amrs,
        stations,
        obs_len: crate::rlenv::observation_len(sim.amrs, stations),
        action_space: sim.action_space,
        battery: &sim.battery,
        hidden,
    };
    let bytes = serde_json::to_vec(&input).expect("plain data");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub step: u64,
    pub model: ActorCritic,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    /// Mean evaluation service time of this model, if it was evaluated.
    pub eval_service_time: Option<f64>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let c: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                c.version
            )));
        }
        Ok(c)
    }

    /// Fails unless the checkpoint was trained for the same policy layout.
    pub fn check_hash(&self, expected: &str) -> Result<()> {
        if self.config_hash != expected {
            return Err(Error::Checkpoint(format!(
                "config hash mismatch: checkpoint {} vs run {expected}",
                self.config_hash
            )));
        }
        Ok(())
    }
}

/// One CSV row of the training log. Update rows carry the training reward
/// and entropy loss; evaluation rows carry the evaluation columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogRow {
    pub step: u64,
    pub mean_episode_reward: Option<f64>,
    pub entropy_loss: Option<f64>,
    pub eval_service_time: Option<f64>,
    pub eval_episode_reward: Option<f64>,
}

pub const LOG_HEADER: &str =
    "step,mean_episode_reward,entropy_loss,eval_service_time,eval_episode_reward";

impl LogRow {
    pub fn csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.step,
            f(self.mean_episode_reward),
            f(self.entropy_loss),
            f(self.eval_service_time),
            f(self.eval_episode_reward)
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub obs: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn batch(&self, idx: &[usize]) -> Batch {
        Batch {
            obs: idx.iter().map(|&i| self.obs[i].clone()).collect(),
            masks: idx.iter().map(|&i| self.masks[i].clone()).collect(),
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            old_log_probs: idx.iter().map(|&i| self.log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

/// The most recent update's inputs, kept for auditing the logged statistics.
#[derive(Debug, Clone)]
pub struct UpdateRecord {
    /// Policy that collected `rollout`.
    pub behaviour: ActorCritic,
    pub rollout: RolloutBuffer,
    pub entropy_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub log: Vec<LogRow>,
    pub last_update: Option<UpdateRecord>,
}

/// Greedy evaluation over `weeks`: (mean avg service time, mean episode return).
pub fn evaluate(
    env: &mut Env,
    model: &ActorCritic,
    weeks: &[Arc<OrderStream>],
) -> Result<(f64, f64)> {
    let (mut st, mut ret) = (0.0, 0.0);
    for w in weeks {
        let mut out = env.reset(w.clone())?;
        let mut total = 0.0;
        while !out.done {
            let a = model.dist(&out.obs, &out.mask)?.argmax();
            out = env.step_index(a)?;
            total += out.reward;
        }
        st += env.sim().expect("episode ran").metrics().avg_service_time;
        ret += total;
    }
    let n = weeks.len().max(1) as f64;
    Ok((st / n, ret / n))
}

/// Masked PPO on episodes drawn uniformly from `weeks`. Evaluates greedily
/// at the start and whenever the step counter passes a multiple of
/// `eval_every`, keeping the model with the lowest mean service time.
pub fn train(
    env: &mut Env,
    weeks: &[Arc<OrderStream>],
    cfg: &TrainConfig,
    config_hash: &str,
    resume: Option<Checkpoint>,
    mut on_log: impl FnMut(&LogRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if weeks.is_empty() {
        return Err(Error::Config("training needs at least one week".into()));
    }
    let space = env.action_space();
    let (mut model, mut actor_opt, mut critic_opt, mut step) = match resume {
        Some(c) => {
            c.check_hash(config_hash)?;
            (c.model, c.actor_opt, c.critic_opt, c.step)
        }
        None => {
            let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let m = ActorCritic::new(env.obs_len(), space, &cfg.hidden, &mut init_rng);
            let (na, nc) = (m.actor.params.len(), m.critic.params.len());
            (m, Adam::new(na, cfg.lr), Adam::new(nc, cfg.lr), 0)
        }
    };
    // Distinct stream per resume point keeps resumed runs deterministic.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(step.wrapping_mul(0x9E37_79B9)));
    let coefs = LossCoefs {
        clip: cfg.clip,
        vf_coef: cfg.vf_coef,
        normalize_advantages: true,
    };
    let snapshot =
        |model: &ActorCritic, a: &Adam, c: &Adam, step: u64, st: Option<f64>| Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.to_string(),
            step,
            model: model.clone(),
            actor_opt: a.clone(),
            critic_opt: c.clone(),
            eval_service_time: st,
        };

    let mut log = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut next_eval = step.div_ceil(cfg.eval_every) * cfg.eval_every;
    // Evaluation runs on its own copy so the training episode survives it.
    let mut eval_env = env.clone();
    let run_eval = |env: &mut Env,
                    model: &ActorCritic,
                    a: &Adam,
                    c: &Adam,
                    step: u64,
                    best: &mut Option<Checkpoint>|
     -> Result<LogRow> {
        let (st, ret) = evaluate(env, model, weeks)?;
        let row = LogRow {
            step,
            eval_service_time: Some(st),
            eval_episode_reward: Some(ret),
            ..LogRow::default()
        };
        if best
            .as_ref()
            .is_none_or(|b| b.eval_service_time.is_none_or(|bst| st < bst))
        {
            *best = Some(snapshot(model, a, c, step, Some(st)));
        }
        Ok(row)
    };
    if step == next_eval {
        let row = run_eval(
            &mut eval_env,
            &model,
            &actor_opt,
            &critic_opt,
            step,
            &mut best,
        )?;
        on_log(&row);
        log.push(row);
        next_eval += cfg.eval_every;
    }

    let pick_week = |rng: &mut ChaCha8Rng| weeks[rng.random_range(0..weeks.len())].clone();
    let mut out = env.reset(pick_week(&mut rng))?;
    if out.done {
        return Err(Error::Config(
            "training week yields no charging decisions".into(),
        ));
    }
    let mut ep_return = 0.0;
    let mut last_update = None;

    while step < cfg.total_steps {
        let mut buf = RolloutBuffer::default();
        let mut finished = Vec::new();
        let mut entropy_sum = 0.0;
        for _ in 0..cfg.n_steps {
            let d = model.dist(&out.obs, &out.mask)?;
            let a = d.sample(&mut rng);
            entropy_sum += d.entropy();
            buf.obs.push(out.obs.clone());
            buf.masks.push(out.mask.clone());
            buf.actions.push(a);
            buf.log_probs.push(d.log_prob(a));
            buf.values.push(model.value(&out.obs));
            out = env.step_index(a)?;
            buf.rewards.push(out.reward);
            buf.dones.push(out.done);
            ep_return += out.reward;
            if out.done {
                finished.push(ep_return);
                ep_return = 0.0;
                out = env.reset(pick_week(&mut rng))?;
            }
        }
        step += cfg.n_steps as u64;
        let last_value = model.value(&out.obs);
        buf.advantages = gae(
            &buf.rewards,
            &buf.values,
            &buf.dones,
            last_value,
            cfg.gamma,
            cfg.gae_lambda,
        );
        buf.returns = buf
            .advantages
            .iter()
            .zip(&buf.values)
            .map(|(a, v)| a + v)
            .collect();
        let entropy_loss = -entropy_sum / buf.len() as f64;
        let behaviour = model.clone();

        let mut idx: Vec<usize> = (0..buf.len()).collect();
        for _ in 0..cfg.epochs {
            idx.shuffle(&mut rng);
            for chunk in idx.chunks(cfg.batch_size) {
                let batch = buf.batch(chunk);
                let (_, mut ga, mut gc) =
                    clipped_loss(&model.actor, &model.critic, &batch, &coefs)?;
                clip_grad_norm(&mut [&mut ga, &mut gc], cfg.max_grad_norm);
                actor_opt.step(&mut model.actor.params, &ga);
                critic_opt.step(&mut model.critic.params, &gc);
            }
        }
        if model
            .actor
            .params
            .iter()
            .chain(&model.critic.params)
            .any(|p| !p.is_finite())
        {
            return Err(Error::NonFinite(format!(
                "network weights after update at step {step}"
            )));
        }

        let row = LogRow {
            step,
            mean_episode_reward: (!finished.is_empty())
                .then(|| finished.iter().sum::<f64>() / finished.len() as f64),
            entropy_loss: Some(entropy_loss),
            ..LogRow::default()
        };
        on_log(&row);
        log.push(row);
        last_update = Some(UpdateRecord {
            behaviour,
            rollout: buf,
            entropy_loss,
        });

        if step >= next_eval {
            let row = run_eval(
                &mut eval_env,
                &model,
                &actor_opt,
                &critic_opt,
                step,
                &mut best,
            )?;
            on_log(&row);
            log.push(row);
            while next_eval <= step {
                next_eval += cfg.eval_every;
            }
        }
    }

    let last = snapshot(&model, &actor_opt, &critic_opt, step, None);
    Ok(TrainOutcome {
        best: best.unwrap_or_else(|| last.clone()),
        last,
        log,
        last_update,
    })
}
