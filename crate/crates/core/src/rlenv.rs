//! Decision-process surface: observations, action masks, rewards and the
//! step/reset environment, plus a line protocol for out-of-process agents.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::battery::{ActionSpace, ChargeTarget};
use crate::engine::{SimConfig, Simulation, Step};
use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::orders::{DAY_S, HOUR_S};
use crate::strategies::MANDATORY_PCT;
use crate::warehouse::{AmrStatus, Sku};

/// Valid actions for an AMR at `battery_pct`: a charge target is valid iff it
/// exceeds the current level; not charging is valid iff the level is above
/// the mandatory floor.
pub fn action_mask(battery_pct: f64, space: ActionSpace) -> Vec<bool> {
    space
        .targets()
        .iter()
        .map(|&t| {
            if t == 0 {
                battery_pct > MANDATORY_PCT
            } else {
                f64::from(t) > battery_pct
            }
        })
        .collect()
}

pub fn observation_len(amrs: usize, stations: usize) -> usize {
    18 + amrs + 2 * stations
}

/// Divisors for the travel statistics; values above a cap are clipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureCaps {
    pub travel_time_s: f64,
    pub distance_m: f64,
}

impl FeatureCaps {
    pub fn from_layout(layout: &Layout) -> Self {
        let d = layout.diameter().max(layout.cell_size);
        Self {
            travel_time_s: layout.travel_time(d),
            distance_m: d,
        }
    }
}

/// Builds the feature vector for the current simulation state.
pub fn observe(sim: &Simulation, caps: &FeatureCaps) -> Vec<f64> {
    let st = sim.state();
    let cfg = sim.config();
    let b = cfg.battery.capacity_ah;
    let now = sim.clock();
    let n_v = st.amrs.len() as f64;
    let n_c = st.stations.len() as f64;

    let mut live: Vec<f64> = st.amrs.iter().map(|a| a.battery_ah).collect();
    let mut plugged = vec![0.0; st.stations.len()];
    for (i, s) in st.stations.iter().enumerate() {
        if let Some(o) = &s.occupant {
            let level = o.level_at(now, &cfg.battery);
            live[o.amr] = level;
            plugged[i] = level / b;
        }
    }
    let busy = |s: AmrStatus| !matches!(s, AmrStatus::Free | AmrStatus::Depleted);
    let n_busy = st.amrs.iter().filter(|a| busy(a.status)).count();
    let busy_sum: f64 = st
        .amrs
        .iter()
        .zip(&live)
        .filter(|(a, _)| busy(a.status))
        .map(|(_, l)| l / b)
        .sum();
    let frac = |s: AmrStatus| st.count_status(s) as f64 / n_v;

    let mut obs = Vec::with_capacity(observation_len(st.amrs.len(), st.stations.len()));
    // Fleet batteries.
    obs.push(live.iter().map(|l| l / b).sum::<f64>() / n_v);
    obs.push(if n_busy == 0 {
        0.0
    } else {
        busy_sum / n_busy as f64
    });
    obs.extend(&plugged);
    obs.extend(live.iter().map(|l| l / b));
    // Fleet status.
    obs.push(frac(AmrStatus::Depleted));
    obs.push(frac(AmrStatus::Free));
    obs.push(n_busy as f64 / n_v);
    obs.push(n_busy as f64 / n_v);
    // Storage and queues.
    obs.push(1.0 - st.inventory.fill_level());
    obs.extend(st.stations.iter().map(|s| s.queue.len() as f64 / n_v));
    obs.push(st.queues.retrieval.len() as f64 / cfg.retrieval_cap.max(1) as f64);
    obs.push(st.queues.delivery.len() as f64 / cfg.delivery_cap.max(1) as f64);
    // Time.
    let hour = now.rem_euclid(DAY_S) / HOUR_S;
    let angle = std::f64::consts::TAU * hour / 24.0;
    obs.push((angle.sin() + 1.0) / 2.0);
    obs.push((angle.cos() + 1.0) / 2.0);
    let day = (now / DAY_S).floor().rem_euclid(7.0) + 1.0;
    obs.push(day / 7.0);
    // Stations, lane order, trips.
    obs.push(st.stations.iter().filter(|s| s.is_free()).count() as f64 / n_c);
    let n_skus = st.inventory.n_skus();
    obs.push(if n_skus > 1 {
        (st.inventory.mean_entropy() / (n_skus as f64).ln()).min(1.0)
    } else {
        0.0
    });
    let clip = |x: f64, cap: f64| (x / cap).clamp(0.0, 1.0);
    obs.push(clip(st.stats.retrieval.mean_time(), caps.travel_time_s));
    obs.push(clip(st.stats.delivery.mean_time(), caps.travel_time_s));
    obs.push(clip(st.stats.retrieval.mean_distance(), caps.distance_m));
    obs.push(clip(st.stats.delivery.mean_distance(), caps.distance_m));
    obs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    ServiceTime,
    Queue,
    Composite,
    Shaped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSpec {
    pub kind: RewardKind,
    /// Service-time normalizer (s).
    pub st_cap: f64,
    /// Weight of the free-AMR bonus in the composite reward.
    pub beta: f64,
    pub penalty: f64,
    pub bonus: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            kind: RewardKind::Queue,
            st_cap: 3600.0,
            beta: 1.0,
            penalty: 1.0,
            bonus: 1.0,
        }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.st_cap > 0.0 && self.st_cap.is_finite()) {
            return Err(Error::Config(
                "reward.st_cap must be positive and finite".into(),
            ));
        }
        if ![self.beta, self.penalty, self.bonus]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(Error::Config("reward magnitudes must be finite".into()));
        }
        Ok(())
    }
}

/// Circumstances of the charging action that led to the current step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActionContext {
    pub charged: bool,
    /// A station was available when the action was taken.
    pub station_available: bool,
    /// Queued orders when the action was taken.
    pub queued_before: usize,
    /// Free AMRs and queued orders right after the action took effect.
    pub free_after: usize,
    pub queued_after: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardContext {
    pub st_avg: f64,
    pub q_r: usize,
    pub q_d: usize,
    pub retrieval_cap: usize,
    pub delivery_cap: usize,
    pub free_amrs: usize,
    pub n_amrs: usize,
    pub action: Option<ActionContext>,
}

impl RewardContext {
    pub fn of(sim: &Simulation, action: Option<ActionContext>) -> Self {
        let st = sim.state();
        Self {
            st_avg: st.stats.avg_service_time(),
            q_r: st.queues.retrieval.len(),
            q_d: st.queues.delivery.len(),
            retrieval_cap: sim.config().retrieval_cap,
            delivery_cap: sim.config().delivery_cap,
            free_amrs: st.free_amrs(),
            n_amrs: st.amrs.len(),
            action,
        }
    }
}

pub fn reward(spec: &RewardSpec, ctx: &RewardContext) -> f64 {
    let queue = -(ctx.q_r as f64 / ctx.retrieval_cap.max(1) as f64
        + ctx.q_d as f64 / ctx.delivery_cap.max(1) as f64);
    let service = -ctx.st_avg / spec.st_cap;
    match spec.kind {
        RewardKind::ServiceTime => service,
        RewardKind::Queue => queue,
        RewardKind::Composite => {
            let free = if ctx.q_r + ctx.q_d > 0 {
                spec.beta * ctx.free_amrs as f64 / ctx.n_amrs.max(1) as f64
            } else {
                0.0
            };
            queue + service + free
        }
        RewardKind::Shaped => {
            let mut r = queue;
            if let Some(a) = ctx.action.filter(|a| a.charged) {
                if !a.station_available {
                    r -= spec.penalty;
                }
                if a.free_after == 0 && a.queued_after > 0 {
                    r -= spec.penalty;
                }
                if a.queued_before == 0 {
                    r += spec.bonus;
                }
                if a.station_available {
                    r += spec.bonus;
                }
            }
            r
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOut {
    pub obs: Vec<f64>,
    pub mask: Vec<bool>,
    pub reward: f64,
    pub done: bool,
}

/// One simulation wrapped as an episodic environment.
#[derive(Debug, Clone)]
pub struct Env {
    layout: Arc<Layout>,
    sim_cfg: SimConfig,
    reward: RewardSpec,
    caps: FeatureCaps,
    fill: Arc<Vec<(Sku, usize)>>,
    sim: Option<Simulation>,
}

impl Env {
    pub fn new(
        layout: Arc<Layout>,
        sim_cfg: SimConfig,
        reward: RewardSpec,
        fill: Arc<Vec<(Sku, usize)>>,
    ) -> Result<Self> {
        sim_cfg.validate()?;
        reward.validate()?;
        Ok(Self {
            caps: FeatureCaps::from_layout(&layout),
            layout,
            sim_cfg,
            reward,
            fill,
            sim: None,
        })
    }

    pub fn action_space(&self) -> ActionSpace {
        self.sim_cfg.action_space
    }

    pub fn obs_len(&self) -> usize {
        observation_len(self.sim_cfg.amrs, self.layout.stations.len())
    }

    pub fn sim(&self) -> Option<&Simulation> {
        self.sim.as_ref()
    }

    pub fn caps(&self) -> &FeatureCaps {
        &self.caps
    }

    /// Starts a fresh episode on `stream` and runs to the first decision.
    pub fn reset(&mut self, stream: Arc<crate::orders::OrderStream>) -> Result<StepOut> {
        let sim = Simulation::new(
            self.layout.clone(),
            self.sim_cfg.clone(),
            stream,
            &self.fill,
        )?;
        self.sim = Some(sim);
        self.advance(0.0)
    }

    /// Applies a charge target to the pending decision.
    pub fn step(&mut self, action: ChargeTarget) -> Result<StepOut> {
        let sim = self.sim.as_mut().ok_or(Error::NoPendingDecision)?;
        let before = sim.state();
        let station_available = before.available_stations() > 0;
        let queued_before = before.queues.total();
        sim.resume_with(action)?;
        let after = sim.state();
        let ctx = ActionContext {
            charged: action.is_charge(),
            station_available,
            queued_before,
            free_after: after.free_amrs(),
            queued_after: after.queues.total(),
        };
        sim.run_until_decision()?;
        let r = reward(&self.reward, &RewardContext::of(sim, Some(ctx)));
        self.advance(r)
    }

    pub fn step_index(&mut self, index: usize) -> Result<StepOut> {
        let space = self.sim_cfg.action_space;
        if index >= space.len() {
            return Err(Error::MaskedAction {
                action: index as u32,
                battery_pct: f64::NAN,
            });
        }
        self.step(space.target(index))
    }

    fn advance(&mut self, reward: f64) -> Result<StepOut> {
        let sim = self.sim.as_mut().expect("episode started");
        let step = sim.run_until_decision()?;
        let obs = observe(sim, &self.caps);
        let done = step == Step::End;
        let mask = match sim.pending_mask() {
            Some(m) => m,
            // Past the end only "do nothing" remains.
            None => self
                .sim_cfg
                .action_space
                .targets()
                .iter()
                .map(|&t| t == 0)
                .collect(),
        };
        Ok(StepOut {
            obs,
            mask,
            reward,
            done,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResetArgs {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    week: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepArgs {
    action: u32,
}

/// Serves the line protocol: `reset {"seed":s,"week":w}`, `step {"action":t}`,
/// `metrics`, `quit`. Every request gets exactly one JSON line back; errors
/// come back as `{"error": ...}` and leave the session usable.
pub fn serve<R: BufRead, W: Write>(
    env: &mut Env,
    weeks: impl Fn(u64, usize) -> Result<Arc<crate::orders::OrderStream>>,
    input: R,
    mut output: W,
) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (cmd, arg) = line.split_once(' ').unwrap_or((line, "{}"));
        let reply = match cmd {
            "reset" => serde_json::from_str::<ResetArgs>(arg)
                .map_err(Error::from)
                .and_then(|a| env.reset(weeks(a.seed, a.week)?))
                .map(|s| {
                    json!({
                        "obs": s.obs,
                        "mask": s.mask,
                        "done": s.done,
                        "actions": env.action_space().targets(),
                    })
                }),
            "step" => serde_json::from_str::<StepArgs>(arg)
                .map_err(Error::from)
                .and_then(|a| env.step(ChargeTarget(a.action)))
                .map(|s| serde_json::to_value(s).expect("plain data")),
            "metrics" => env
                .sim()
                .map(|s| serde_json::to_value(s.metrics()).expect("plain data"))
                .ok_or_else(|| Error::Protocol("no episode started".into())),
            "quit" => break,
            other => Err(Error::Protocol(format!("unknown command {other:?}"))),
        };
        let v = reply.unwrap_or_else(|e| json!({ "error": e.to_string() }));
        writeln!(output, "{v}")?;
        output.flush()?;
    }
    Ok(())
}
