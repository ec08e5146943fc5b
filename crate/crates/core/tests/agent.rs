use std::sync::Arc;

use serde_json::Value;
use stackcharge::agent::{self, policy_hash, Checkpoint, TrainConfig};
use stackcharge::{ChargeTarget, Env, Error, OrderStream, RewardKind, RewardSpec, RunConfig};

fn toy_env(kind: RewardKind) -> (Env, Vec<Arc<OrderStream>>, String) {
    let mut cfg = RunConfig::default();
    cfg.layout.preset = "toy".into();
    cfg.fleet.amrs = 2;
    cfg.orders.generator.weekly_orders = 1500.0;
    cfg.orders.generator.skus = 3;
    let layout = Arc::new(cfg.layout.build().unwrap());
    let fill = cfg.initial_fill(&layout).unwrap();
    let weeks = cfg.week_streams(&layout, &fill, 2).unwrap();
    let sim = cfg.sim_config();
    let hash = policy_hash(&sim, layout.stations.len(), &[16, 16]);
    let reward = RewardSpec {
        kind,
        ..RewardSpec::default()
    };
    (
        Env::new(layout, sim, reward, Arc::new(fill)).unwrap(),
        weeks,
        hash,
    )
}

fn short() -> TrainConfig {
    TrainConfig {
        total_steps: 1024,
        eval_every: 512,
        n_steps: 256,
        batch_size: 64,
        epochs: 2,
        hidden: vec![16, 16],
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_reproducible() {
    let run = || {
        let (mut env, weeks, hash) = toy_env(RewardKind::Composite);
        agent::train(&mut env, &weeks, &short(), &hash, None, |_| {}).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.log, b.log);
    assert_eq!(a.last, b.last);
    assert_eq!(a.best, b.best);
    assert_eq!(a.last.step, 1024);
}

#[test]
fn log_rows_stream_in_step_order() {
    let (mut env, weeks, hash) = toy_env(RewardKind::Shaped);
    let mut seen = Vec::new();
    let out = agent::train(&mut env, &weeks, &short(), &hash, None, |r| {
        seen.push(r.clone())
    })
    .unwrap();
    assert_eq!(seen, out.log);
    assert!(seen.windows(2).all(|w| w[0].step <= w[1].step));
    let evals = seen
        .iter()
        .filter(|r| r.eval_service_time.is_some())
        .count();
    // Before training, then at 512 and 1024 steps.
    assert_eq!(evals, 3);
    assert!(seen.iter().any(|r| r.entropy_loss.is_some()));
}

#[test]
fn resume_continues_the_step_counter() {
    let (mut env, weeks, hash) = toy_env(RewardKind::Queue);
    let first = agent::train(
        &mut env,
        &weeks,
        &TrainConfig {
            total_steps: 512,
            ..short()
        },
        &hash,
        None,
        |_| {},
    )
    .unwrap();
    assert_eq!(first.last.step, 512);
    let more = agent::train(
        &mut env,
        &weeks,
        &short(),
        &hash,
        Some(first.last.clone()),
        |_| {},
    )
    .unwrap();
    assert_eq!(more.last.step, 1024);
    assert!(more.log.iter().all(|r| r.step >= 512));
}

#[test]
fn checkpoints_round_trip_and_check_their_hash() {
    let (mut env, weeks, hash) = toy_env(RewardKind::ServiceTime);
    let out = agent::train(
        &mut env,
        &weeks,
        &TrainConfig {
            total_steps: 256,
            ..short()
        },
        &hash,
        None,
        |_| {},
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    out.last.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, out.last);
    back.check_hash(&hash).unwrap();
    assert!(matches!(
        back.check_hash("other"),
        Err(Error::Checkpoint(_))
    ));

    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["version"] = Value::from(999);
    std::fs::write(&path, v.to_string()).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
}

#[test]
fn masked_actions_are_rejected() {
    let (mut env, weeks, _) = toy_env(RewardKind::Queue);
    let out = env.reset(weeks[0].clone()).unwrap();
    assert!(!out.done);
    let targets = env.action_space().targets();
    let masked = targets.iter().zip(&out.mask).find(|(_, ok)| !**ok);
    // Full batteries cannot charge to any target at or below their level.
    let (&t, _) = masked.expect("a full battery masks some targets");
    assert!(env.step(ChargeTarget(t)).is_err());
    let ok = targets
        .iter()
        .zip(&out.mask)
        .find(|(_, ok)| **ok)
        .unwrap()
        .0;
    env.step(ChargeTarget(*ok)).unwrap();
}

#[test]
fn serve_reports_errors_and_keeps_going() {
    let (mut env, weeks, _) = toy_env(RewardKind::Queue);
    let week = weeks[0].clone();
    let input = "step {\"action\":0}\nbogus\nreset {\"seed\":0,\"week\":0}\nstep {\"nope\":1}\nstep {\"action\":0}\nmetrics\nquit\nmetrics\n";
    let mut out = Vec::new();
    stackcharge::rlenv::serve(
        &mut env,
        |_, _| Ok(week.clone()),
        input.as_bytes(),
        &mut out,
    )
    .unwrap();
    let replies: Vec<Value> = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(replies.len(), 6, "one reply per request up to quit");
    assert!(replies[0].get("error").is_some());
    assert!(replies[1].get("error").is_some());
    assert!(replies[2]["mask"].is_array());
    assert!(replies[3].get("error").is_some());
    assert!(replies[4]["reward"].is_number());
    assert!(replies[5]["decisions"].as_u64().unwrap() >= 1);
}
