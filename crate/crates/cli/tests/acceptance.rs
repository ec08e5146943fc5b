//! Acceptance checks, one test per criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line straight to stderr so it shows up
//! even when test output is captured.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use stackcharge::agent::{
    self, clipped_loss, gae, Batch, LossCoefs, MaskedCategorical, Mlp, PolicyAgent, TrainConfig,
};
use stackcharge::battery::{ActionSpace, BatteryModel, ChargeTarget};
use stackcharge::layout::Place;
use stackcharge::orders::{OrderSpec, OrderStream};
use stackcharge::rlenv::{action_mask, observe, FeatureCaps};
use stackcharge::{
    run_episode, ChargingPolicy, Env, EpisodeMetrics, Heuristic, Layout, OrderKind, RewardKind,
    RewardSpec, RunConfig, SimConfig, Simulation, Step, StrategyConfig,
};

const BIN: &str = env!("CARGO_BIN_EXE_stackcharge");

fn report(n: u32, pass: bool, detail: impl std::fmt::Display) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n:>2}: {verdict} {detail}");
    pass
}

/// Default layout and fleet with one generated week.
struct Week {
    cfg: RunConfig,
    layout: Arc<Layout>,
    fill: Vec<(u32, usize)>,
    stream: Arc<OrderStream>,
}

/// AMR speed used by every acceptance run.
const SPEED_MPS: f64 = 1.5;

fn week(seed: u64, scale: f64) -> Week {
    let mut cfg = RunConfig::default();
    cfg.layout.speed_mps = Some(SPEED_MPS);
    cfg.orders.generator.scale = scale;
    let layout = Arc::new(cfg.layout.build().unwrap());
    let fill = cfg.initial_fill(&layout).unwrap();
    let stream = cfg.week_streams(&layout, &fill, seed).unwrap().remove(0);
    Week {
        cfg,
        layout,
        fill,
        stream,
    }
}

impl Week {
    fn sim(&self, interrupt: bool) -> Simulation {
        let mut c = self.cfg.sim_config();
        c.interrupt = interrupt;
        Simulation::new(self.layout.clone(), c, self.stream.clone(), &self.fill).unwrap()
    }

    fn run(&self, strat: StrategyConfig) -> EpisodeMetrics {
        let mut sim = self.sim(strat.interrupt);
        let mut h = Heuristic::new(strat).unwrap();
        run_episode(&mut sim, &mut h).unwrap()
    }
}

/// One AMR, one station, one lane and six orders.
mod toy {
    use super::*;

    /// ```text
    /// I.O    input dock, aisle, output dock
    /// .S.    one storage lane
    /// C..    charging station
    /// ```
    /// 45 m cells at 1 m/s keep every time and charge amount dyadic.
    pub const GRID: &str = "cell_size = 45\nspeed = 1\ntiers = 6\nI.O\n.S.\nC..\n";
    pub const HANDLING_S: f64 = 10.0;
    pub const STEP_S: f64 = 45.0;

    pub fn layout() -> Arc<Layout> {
        Arc::new(Layout::from_grid_text(GRID).unwrap())
    }

    pub fn battery() -> BatteryModel {
        BatteryModel {
            capacity_ah: 8.0,
            draw_loaded_a: 15.0,
            draw_unloaded_a: 10.0,
            full_charge_s: 1800.0,
        }
    }

    pub fn sim_config() -> SimConfig {
        SimConfig {
            amrs: 1,
            handling_s: HANDLING_S,
            battery: battery(),
            retrieval_cap: 1,
            delivery_cap: 1,
            initial_battery_pct: 43.75,
            action_space: ActionSpace::Binary,
            interrupt: false,
            ..SimConfig::default()
        }
    }

    pub fn fill() -> Vec<(u32, usize)> {
        vec![(0, 3)]
    }

    /// Two bursts of three orders with a long gap between them.
    pub fn orders() -> Vec<(f64, OrderKind)> {
        use OrderKind::*;
        vec![
            (0.0, Retrieval),
            (210.0, Delivery),
            (420.0, Retrieval),
            (2400.0, Delivery),
            (2610.0, Retrieval),
            (2820.0, Delivery),
        ]
    }

    pub fn stream() -> Arc<OrderStream> {
        let l = layout();
        let input = l.input_docks().next().unwrap().id;
        let output = l.output_docks().next().unwrap().id;
        Arc::new(OrderStream::new(
            orders()
                .into_iter()
                .map(|(t, kind)| OrderSpec {
                    arrival_s: t,
                    kind,
                    sku: 0,
                    dock: if kind == OrderKind::Delivery {
                        input
                    } else {
                        output
                    },
                })
                .collect(),
        ))
    }

    #[derive(Clone, Copy, PartialEq, Eq, Debug)]
    pub enum Spot {
        In,
        Out,
        Lane,
        Station,
    }

    /// Hand-counted grid steps between the four points of interest.
    pub fn steps(a: Spot, b: Spot) -> u32 {
        use Spot::*;
        match (a, b) {
            _ if a == b => 0,
            (In, Lane) | (Lane, In) => 2,
            (Out, Lane) | (Lane, Out) => 2,
            (In, Out) | (Out, In) => 2,
            (Station, In) | (In, Station) => 2,
            (Station, Lane) | (Lane, Station) => 2,
            (Station, Out) | (Out, Station) => 4,
            _ => unreachable!(),
        }
    }

    /// Sequential replay of one AMR serving the toy orders first come first
    /// served, charging to full when `charge[k]` is set at decision `k`.
    /// Returns the total service time, or `None` when the sequence breaks
    /// the charging rules or strands the AMR.
    pub fn oracle(charge: &[bool]) -> Option<f64> {
        let b = battery();
        let cap = b.capacity_ah;
        let mut ah = cap * 43.75 / 100.0;
        let mut pos = Spot::In;
        let mut free_at = 0.0f64;
        let mut total = 0.0;
        let drive = |ah: &mut f64, pos: &mut Spot, to: Spot, loaded: bool| -> Option<f64> {
            let t = f64::from(steps(*pos, to)) * STEP_S;
            let amps = if loaded {
                b.draw_loaded_a
            } else {
                b.draw_unloaded_a
            };
            let need = amps * t / 3600.0;
            if need > *ah {
                return None;
            }
            *ah -= need;
            *pos = to;
            Some(t)
        };
        for (k, (arrival, kind)) in orders().into_iter().enumerate() {
            let start = free_at.max(arrival);
            let (pickup, drop) = match kind {
                OrderKind::Delivery => (Spot::In, Spot::Lane),
                OrderKind::Retrieval => (Spot::Lane, Spot::Out),
            };
            let t1 = drive(&mut ah, &mut pos, pickup, false)?;
            let t2 = drive(&mut ah, &mut pos, drop, true)?;
            let done = start + t1 + HANDLING_S + t2 + HANDLING_S;
            total += done - arrival;
            let pct = ah / cap * 100.0;
            let want = *charge.get(k)?;
            if (want && pct >= 100.0) || (!want && pct <= 20.0) {
                return None;
            }
            free_at = done;
            if want {
                let t = drive(&mut ah, &mut pos, Spot::Station, false)?;
                let at = ah / cap * 100.0;
                free_at = done + t + (100.0 - at) / 100.0 * b.full_charge_s;
                ah = cap;
            }
        }
        Some(total)
    }

    /// Runs the engine with a fixed decision sequence.
    pub fn replay(charge: &[bool]) -> stackcharge::EpisodeMetrics {
        let mut sim = Simulation::new(layout(), sim_config(), stream(), &fill()).unwrap();
        let mut k = 0;
        while let Step::Decision(_) = sim.run_until_decision().unwrap() {
            let t = if charge[k] { 100 } else { 0 };
            sim.resume_with(ChargeTarget(t)).unwrap();
            k += 1;
        }
        assert_eq!(k, charge.len());
        sim.metrics()
    }
}

fn run_cli(args: &[&str]) -> Duration {
    let t = Instant::now();
    let out = Command::new(BIN).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "stackcharge {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    t.elapsed()
}

#[test]
fn criterion_01_determinism_and_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("week.toml");
    std::fs::write(&cfg, format!("[layout]\nspeed_mps = {SPEED_MPS:?}\n")).unwrap();
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let secs = run_cli(&[
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                "11",
                "--strategy",
                "fixed:40",
                "--trace",
                "--out",
                out.to_str().unwrap(),
            ]);
            (out, secs)
        })
        .collect();
    let read = |p: &Path, f: &str| std::fs::read(p.join(f)).unwrap();
    let same_metrics = read(&runs[0].0, "metrics.json") == read(&runs[1].0, "metrics.json");
    let same_trace = read(&runs[0].0, "trace.log") == read(&runs[1].0, "trace.log");
    let m: Value = serde_json::from_slice(&read(&runs[0].0, "metrics.json")).unwrap();
    let orders = m["aggregate"]["orders_completed"].as_u64().unwrap()
        + m["aggregate"]["truncated_orders"].as_u64().unwrap();
    let slowest = runs.iter().map(|r| r.1).max().unwrap();
    let pass = same_metrics
        && same_trace
        && slowest < Duration::from_secs(60)
        && (25_000..40_000).contains(&orders);
    assert!(report(
        1,
        pass,
        format!(
            "identical metrics={same_metrics} trace={same_trace}; {orders} orders, 40 AMRs, 3 stations, slowest run {:.2}s (< 60s)",
            slowest.as_secs_f64()
        )
    ));
}

/// Steps the engine one event at a time, checking every AMR's battery.
fn ledger_run(w: &Week, strat: StrategyConfig) -> (usize, f64, f64, f64) {
    let cap = w.cfg.battery.capacity_ah;
    let mut sim = w.sim(strat.interrupt);
    let mut h = Heuristic::new(strat).unwrap();
    let (mut events, mut lo, mut hi) = (0usize, f64::INFINITY, f64::NEG_INFINITY);
    loop {
        let step = sim.step_event().unwrap();
        events += 1;
        for a in &sim.state().amrs {
            lo = lo.min(a.battery_ah);
            hi = hi.max(a.battery_ah);
        }
        match step {
            None => {}
            Some(Step::Decision(req)) => {
                let t = h.decide(&sim, &req).unwrap();
                sim.resume_with(t).unwrap();
            }
            Some(Step::End) => break,
        }
    }
    let worst = sim
        .state()
        .amrs
        .iter()
        .map(|a| (a.battery_ah - (a.initial_ah - a.drawn_ah + a.charged_ah)).abs())
        .fold(0.0, f64::max);
    assert!(hi <= cap);
    (events, lo, hi, worst)
}

#[test]
fn criterion_02_battery_ledger() {
    let normal = week(5, 1.0);
    let busy = week(5, 3.0);
    let a = ledger_run(&normal, StrategyConfig::fixed(40));
    let b = ledger_run(&busy, StrategyConfig::fixed(100).with_interrupt(true));
    let cap = normal.cfg.battery.capacity_ah;
    let ok = |r: &(usize, f64, f64, f64)| r.3 <= 1e-9 && r.1 >= 0.0 && r.2 <= cap;
    let pass = ok(&a) && ok(&b);
    assert!(report(
        2,
        pass,
        format!(
            "max |final - (initial - drawn + charged)| = {:.3e} / {:.3e} Ah (<= 1e-9); battery range [{:.4}, {:.4}] / [{:.4}, {:.4}] Ah within [0, {cap}] over {} / {} events",
            a.3, b.3, a.1, a.2, b.1, b.2, a.0, b.0
        )
    ));
}

#[test]
fn criterion_03_charge_math() {
    let b = BatteryModel::default();
    let full = b.charge_duration(0.0, 100.0).unwrap();
    let part = b.charge_duration(20.0, 60.0).unwrap();
    let drain = b.consume(b.capacity_ah, 360.0, true);
    let used = b.capacity_ah - drain.level_ah;
    let pass = full == 1800.0 && part == 720.0 && used == 1.5 && drain.drawn_ah == 1.5;
    assert!(report(
        3,
        pass,
        format!(
            "charge 0->100 = {full} s, 20->60 = {part} s, loaded 360 s draws {used} Ah (exact)"
        )
    ));
}

#[test]
fn criterion_04_mask_oracle() {
    let mut cases = 0;
    let mut mismatches = 0;
    for pct in 0..=100u32 {
        for space in [ActionSpace::Full, ActionSpace::Binary] {
            let targets: &[u32] = match space {
                ActionSpace::Full => &[0, 30, 40, 50, 60, 70, 80, 90, 100],
                ActionSpace::Binary => &[0, 100],
            };
            let want: Vec<bool> = targets
                .iter()
                .map(|&t| if t == 0 { pct > 20 } else { t > pct })
                .collect();
            cases += 1;
            if action_mask(f64::from(pct), space) != want {
                mismatches += 1;
            }
        }
    }
    assert!(report(
        4,
        cases == 202 && mismatches == 0,
        format!("{cases} cases, {mismatches} mismatches")
    ));
}

#[test]
fn criterion_05_feature_bounds() {
    let w = week(9, 1.0);
    let caps = FeatureCaps::from_layout(&w.layout);
    let strat = StrategyConfig::fixed(40);
    let mut seen = 0usize;
    let mut bad = 0usize;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut policy = |sim: &Simulation, req: &stackcharge::DecisionRequest| {
        for v in observe(sim, &caps) {
            seen += 1;
            lo = lo.min(v);
            hi = hi.max(v);
            if !(0.0..=1.0).contains(&v) {
                bad += 1;
            }
        }
        stackcharge::strategies::fixed_decide(req.battery_pct, &strat)
    };
    let mut sim = w.sim(false);
    let m = run_episode(&mut sim, &mut policy).unwrap();
    let obs = m.decisions as usize;
    assert!(report(
        5,
        bad == 0 && obs >= 10_000,
        format!("{obs} observations ({seen} components), {bad} outside [0,1]; observed range [{lo}, {hi}]")
    ));
}

#[test]
fn criterion_06_heuristic_direction() {
    // Three times the reference weekly volume saturates the fleet.
    const SCALE: f64 = 3.0;
    let cells = [
        StrategyConfig::fixed(40),
        StrategyConfig::fixed(100),
        StrategyConfig::fixed(100).with_interrupt(true),
        StrategyConfig::highlow(20.0, 40),
    ];
    let weeks: Vec<Week> = (1..=5).map(|s| week(s, SCALE)).collect();
    let jobs: Vec<(usize, usize)> = (0..weeks.len())
        .flat_map(|w| (0..cells.len()).map(move |c| (w, c)))
        .collect();
    let results: Vec<EpisodeMetrics> = jobs
        .par_iter()
        .map(|&(w, c)| weeks[w].run(cells[c].clone()))
        .collect();
    let mean = |c: usize, f: fn(&EpisodeMetrics) -> f64| {
        let v: Vec<f64> = jobs
            .iter()
            .zip(&results)
            .filter(|((_, cc), _)| *cc == c)
            .map(|(_, m)| f(m))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let st = |c| mean(c, |m| m.avg_service_time);
    let q = |c| mean(c, |m| m.max_retrieval_queue);
    let (f40, f100, f100i, hl40) = (st(0), st(1), st(2), st(3));
    let a = f100 > f40;
    let st_cut = (f100 - f100i) / f100;
    let q_cut = (q(1) - q(2)) / q(1);
    let b = st_cut >= 0.10 && q_cut >= 0.10;
    let c = hl40 <= f40 * 1.05;
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    assert!(report(
        6,
        a && b && c,
        format!(
            "5 seeds at {SCALE}x volume: (a) {} fixed u100 {f100:.1}s vs u40 {f40:.1}s; (b) {} interrupt cuts service time {:.1}% and max queue {:.1}% (>= 10%); (c) {} highlow u40 {hl40:.1}s vs fixed u40 {f40:.1}s (+5% allowed)",
            mark(a),
            mark(b),
            100.0 * st_cut,
            100.0 * q_cut,
            mark(c)
        )
    ));
}

fn toy_env(kind: RewardKind) -> Env {
    Env::new(
        toy::layout(),
        toy::sim_config(),
        RewardSpec {
            kind,
            ..RewardSpec::default()
        },
        Arc::new(toy::fill()),
    )
    .unwrap()
}

/// At most 100k environment steps, in whole rollouts.
fn toy_train_config() -> TrainConfig {
    TrainConfig {
        total_steps: 48 * 2048,
        eval_every: 4 * 2048,
        n_steps: 2048,
        seed: 7,
        ..TrainConfig::default()
    }
}

#[test]
fn criterion_07_micro_instance_optimality() {
    let l = toy::layout();
    use toy::Spot;
    let place = |s: Spot| match s {
        Spot::In => Place::Dock(l.input_docks().next().unwrap().id),
        Spot::Out => Place::Dock(l.output_docks().next().unwrap().id),
        Spot::Lane => Place::Lane(0),
        Spot::Station => Place::Station(0),
    };
    let spots = [Spot::In, Spot::Out, Spot::Lane, Spot::Station];
    for a in spots {
        for b in spots {
            let d = f64::from(toy::steps(a, b)) * toy::STEP_S;
            assert_eq!(l.distance(place(a), place(b)), d, "{a:?} -> {b:?}");
        }
    }

    let n = toy::orders().len();
    let mut feasible = 0;
    let mut best: Option<(f64, Vec<bool>)> = None;
    for bits in 0u32..1 << n {
        let seq: Vec<bool> = (0..n).map(|k| bits >> k & 1 == 1).collect();
        if let Some(cost) = toy::oracle(&seq) {
            feasible += 1;
            if best.as_ref().is_none_or(|b| cost < b.0) {
                best = Some((cost, seq));
            }
        }
    }
    let (opt, seq) = best.expect("some sequence is feasible");
    let replayed = toy::replay(&seq);
    let replay_exact =
        replayed.avg_service_time == opt / n as f64 && replayed.orders_completed == n as u64;

    let mut env = toy_env(RewardKind::ServiceTime);
    let cfg = toy_train_config();
    let out = agent::train(&mut env, &[toy::stream()], &cfg, "toy", None, |_| {}).unwrap();
    let mut sim = Simulation::new(
        toy::layout(),
        toy::sim_config(),
        toy::stream(),
        &toy::fill(),
    )
    .unwrap();
    let mut policy = PolicyAgent {
        model: out.best.model.clone(),
        caps: FeatureCaps::from_layout(&toy::layout()),
    };
    let m = run_episode(&mut sim, &mut policy).unwrap();
    let trained = m.avg_service_time * n as f64;
    let gap = (trained - opt) / opt;
    let pass =
        replay_exact && m.orders_completed == n as u64 && gap <= 0.10 && out.last.step <= 100_000;
    assert!(report(
        7,
        pass,
        format!(
            "{feasible}/{} feasible sequences, optimum {opt} s total at {seq:?}; engine replay exact={replay_exact}; agent after {} steps {trained} s (gap {:.2}% <= 10%)",
            1 << n,
            out.last.step,
            100.0 * gap
        )
    ));
}

/// Loss of `clipped_loss` as a function of the flattened actor and critic
/// parameters.
fn loss_at(actor: &Mlp, critic: &Mlp, batch: &Batch, coefs: &LossCoefs) -> f64 {
    clipped_loss(actor, critic, batch, coefs).unwrap().0.total
}

/// Direct sum of discounted temporal differences, cut after terminal steps.
fn gae_oracle(r: &[f64], v: &[f64], done: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let value = |k: usize| if k < n { v[k] } else { last };
    let delta = |k: usize| r[k] + if done[k] { 0.0 } else { gamma * value(k + 1) } - v[k];
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for k in t..n {
                sum += (gamma * lambda).powi((k - t) as i32) * delta(k);
                if done[k] {
                    break;
                }
            }
            sum
        })
        .collect()
}

#[test]
fn criterion_08_ppo_numerics() {
    // Gradient check on a 4-action problem with one action masked and a mix
    // of clipped and unclipped samples.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let actor = Mlp::orthogonal(&[3, 6, 4], 1.0, 1.0, &mut rng);
    let critic = Mlp::orthogonal(&[3, 6, 1], 1.0, 1.0, &mut rng);
    let obs = vec![
        vec![0.2, -0.5, 0.9],
        vec![-0.7, 0.1, 0.4],
        vec![0.5, 0.5, -0.3],
        vec![0.0, -0.9, 0.8],
    ];
    let masks = vec![vec![true, true, false, true]; 4];
    let actions = vec![0, 1, 3, 1];
    let shifts = [0.05, -0.6, 0.4, 0.0];
    let old_log_probs: Vec<f64> = obs
        .iter()
        .zip(&masks)
        .zip(&actions)
        .zip(shifts)
        .map(|(((o, m), &a), s)| {
            MaskedCategorical::new(&actor.predict(o), m)
                .unwrap()
                .log_prob(a)
                + s
        })
        .collect();
    let batch = Batch {
        obs,
        masks,
        actions,
        old_log_probs,
        advantages: vec![1.0, -0.5, 2.0, -1.5],
        returns: vec![0.3, -0.2, 1.1, 0.0],
    };
    let coefs = LossCoefs {
        clip: 0.2,
        vf_coef: 0.5,
        normalize_advantages: true,
    };
    let (_, ga, gc) = clipped_loss(&actor, &critic, &batch, &coefs).unwrap();
    let h = 1e-6;
    let (mut diff, mut norm_a, mut norm_f) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..actor.params.len() + critic.params.len() {
        let (mut a, mut c) = (actor.clone(), critic.clone());
        let (an, slot): (f64, &mut f64) = if i < actor.params.len() {
            (ga[i], &mut a.params[i])
        } else {
            let j = i - actor.params.len();
            (gc[j], &mut c.params[j])
        };
        let base = *slot;
        *slot = base + h;
        let up = loss_at(&a, &c, &batch, &coefs);
        let (mut a2, mut c2) = (a.clone(), c.clone());
        if i < actor.params.len() {
            a2.params[i] = base - h;
        } else {
            c2.params[i - actor.params.len()] = base - h;
        }
        let down = loss_at(&a2, &c2, &batch, &coefs);
        let fd = (up - down) / (2.0 * h);
        diff += (fd - an).powi(2);
        norm_a += an * an;
        norm_f += fd * fd;
    }
    let grad_rel = diff.sqrt() / norm_a.sqrt().max(norm_f.sqrt());

    let dist = MaskedCategorical::new(&[0.3, -0.2, 1.0, 0.5], &[true, false, true, false]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut masked_draws = 0;
    for _ in 0..100_000 {
        let a = dist.sample(&mut rng);
        if !dist.mask[a] {
            masked_draws += 1;
        }
    }

    let cases: [(&[f64], &[f64], &[bool], f64, f64, f64); 4] = [
        (
            &[1.0, 0.5, -0.25],
            &[0.2, 0.4, -0.1],
            &[false, false, false],
            0.7,
            0.99,
            0.95,
        ),
        (
            &[1.0, 0.5, -0.25],
            &[0.2, 0.4, -0.1],
            &[false, true, false],
            0.7,
            0.99,
            0.95,
        ),
        (
            &[0.0, 2.0, 1.0],
            &[1.5, -0.5, 0.25],
            &[false, false, true],
            3.0,
            0.9,
            0.5,
        ),
        (
            &[-1.0, 0.3, 0.8],
            &[0.0, 0.0, 0.0],
            &[true, true, true],
            9.0,
            0.97,
            1.0,
        ),
    ];
    let mut gae_err = 0.0f64;
    for (r, v, d, last, g, l) in cases {
        let got = gae(r, v, d, last, g, l);
        let want = gae_oracle(r, v, d, last, g, l);
        for (x, y) in got.iter().zip(&want) {
            gae_err = gae_err.max((x - y).abs());
        }
    }
    let pass = grad_rel < 1e-4 && masked_draws == 0 && gae_err <= 1e-12;
    assert!(report(
        8,
        pass,
        format!(
            "gradient rel. error {grad_rel:.2e} (< 1e-4); masked draws {masked_draws}/100000; GAE max error {gae_err:.1e} (<= 1e-12)"
        )
    ));
}

/// Mean entropy of a masked softmax over `logits`, computed from scratch.
fn mean_entropy(model: &agent::ActorCritic, obs: &[Vec<f64>], masks: &[Vec<bool>]) -> f64 {
    let mut total = 0.0;
    for (o, m) in obs.iter().zip(masks) {
        let z = model.actor.predict(o);
        let top = z
            .iter()
            .zip(m)
            .filter(|(_, &ok)| ok)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z
            .iter()
            .zip(m)
            .map(|(v, &ok)| if ok { (v - top).exp() } else { 0.0 })
            .collect();
        let s: f64 = e.iter().sum();
        total -= e
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|x| (x / s) * (x / s).ln())
            .sum::<f64>();
    }
    total / obs.len() as f64
}

#[test]
fn criterion_09_learning_signal() {
    let mut env = toy_env(RewardKind::Queue);
    let cfg = toy_train_config();
    let out = agent::train(&mut env, &[toy::stream()], &cfg, "toy", None, |_| {}).unwrap();
    let evals: Vec<f64> = out
        .log
        .iter()
        .filter_map(|r| r.eval_episode_reward)
        .collect();
    let first = evals[0];
    let best = evals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let improvement = (best - first) / first.abs();

    let rec = out.last_update.expect("at least one update");
    let direct = -mean_entropy(&rec.behaviour, &rec.rollout.obs, &rec.rollout.masks);
    let logged = out.log.iter().rev().find_map(|r| r.entropy_loss).unwrap();
    let rel = (logged - direct).abs() / direct.abs();
    let pass = first < 0.0 && improvement >= 0.20 && rel < 1e-10 && logged == rec.entropy_loss;
    assert!(report(
        9,
        pass,
        format!(
            "eval reward {first} -> best {best} ({:.1}% >= 20%); entropy loss {logged:.12} vs direct {direct:.12} (rel. error {rel:.1e} < 1e-10)",
            100.0 * improvement
        )
    ));
}

#[test]
fn criterion_10_protocol_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let w = week(13, 1.0);
    let orders = OrderStream::new(w.stream.orders[..100].to_vec());
    let orders_path = dir.path().join("orders.csv");
    orders.save(&orders_path).unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(
        &cfg_path,
        format!("[layout]\nspeed_mps = {SPEED_MPS:?}\n[fleet]\ninitial_battery_pct = 25.0\n[orders]\npath = \"orders.csv\"\n"),
    )
    .unwrap();

    let mut child = Command::new(BIN)
        .args(["serve", "--config", cfg_path.to_str().unwrap()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut input = child.stdin.take().unwrap();
    let mut output = BufReader::new(child.stdout.take().unwrap());
    let mut ask = |line: String| -> Value {
        writeln!(input, "{line}").unwrap();
        input.flush().unwrap();
        let mut reply = String::new();
        output.read_line(&mut reply).unwrap();
        serde_json::from_str(&reply).unwrap()
    };

    // Echo agent: keep working while allowed, otherwise charge to full.
    let mut reply = ask(format!("reset {}", json!({"seed": 0, "week": 0})));
    let actions: Vec<u64> = reply["actions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a.as_u64().unwrap())
        .collect();
    let mut steps = 0u64;
    while !reply["done"].as_bool().unwrap() {
        let mask: Vec<bool> = reply["mask"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| m.as_bool().unwrap())
            .collect();
        let zero = actions.iter().position(|&a| a == 0).unwrap();
        let pick = if mask[zero] { 0 } else { 100 };
        reply = ask(format!("step {}", json!({ "action": pick })));
        assert!(reply.get("error").is_none(), "{reply}");
        steps += 1;
    }
    let remote = ask("metrics".into());
    writeln!(input, "quit").unwrap();
    drop(input);
    assert!(child.wait().unwrap().success());

    let local_cfg = RunConfig::load(&cfg_path).unwrap();
    let layout = Arc::new(local_cfg.layout.build().unwrap());
    let fill = local_cfg.initial_fill(&layout).unwrap();
    let mut sim = Simulation::new(layout, local_cfg.sim_config(), Arc::new(orders), &fill).unwrap();
    let mut h = Heuristic::new(StrategyConfig::fixed(100)).unwrap();
    let local = serde_json::to_value(run_episode(&mut sim, &mut h).unwrap()).unwrap();
    if remote != local {
        eprintln!("remote {remote}\nlocal  {local}");
    }
    let pass = remote == local
        && local["orders_completed"] == json!(100)
        && local["decisions"] == json!(steps);
    assert!(report(
        10,
        pass,
        format!(
            "{steps} remote decisions over 100 orders; metrics identical={} (service time {} s)",
            remote == local,
            local["avg_service_time"]
        )
    ));
}
