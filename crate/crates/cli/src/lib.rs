//! Command implementations behind the `stackcharge` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde_json::json;
use stackcharge::agent::{self, policy_hash, Checkpoint, PolicyAgent, TrainOutcome, LOG_HEADER};
use stackcharge::layout::Layout;
use stackcharge::metrics::CSV_HEADER;
use stackcharge::orders::OrderStream;
use stackcharge::rlenv::FeatureCaps;
use stackcharge::strategies::sweep_grid;
use stackcharge::{
    run_episode, ChargingPolicy, Env, EpisodeMetrics, Heuristic, RunConfig, SimConfig, Simulation,
    StrategyConfig, StrategyKind,
};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub strategy: Option<String>,
    pub interrupt: Option<bool>,
    pub weeks: Option<Vec<usize>>,
    pub trace: bool,
}

/// Loads the config (or defaults), applies overrides and validates.
pub fn resolve(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(s) = &ov.strategy {
        cfg.strategy = parse_strategy(s, &cfg.strategy)?;
    }
    if let Some(i) = ov.interrupt {
        cfg.strategy.interrupt = i;
    }
    if let Some(w) = &ov.weeks {
        cfg.weeks = w.clone();
    }
    cfg.trace |= ov.trace;
    cfg.apply_rl_preset();
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `kind[:th_upper]` or `highlow:th_lower:th_upper`, keeping the
/// remaining fields of `base`.
pub fn parse_strategy(s: &str, base: &StrategyConfig) -> Result<StrategyConfig> {
    let mut parts = s.split(':');
    let kind = StrategyKind::parse(parts.next().unwrap_or_default())?;
    let nums: Vec<&str> = parts.collect();
    let mut out = StrategyConfig {
        kind,
        ..base.clone()
    };
    let upper = |t: &str| {
        t.parse::<u32>()
            .with_context(|| format!("strategy {s:?}: bad th_upper {t:?}"))
    };
    match nums.as_slice() {
        [] => {}
        [u] => out.th_upper = upper(u)?,
        [l, u] if kind == StrategyKind::HighLow => {
            out.th_lower = l
                .parse()
                .with_context(|| format!("strategy {s:?}: bad th_lower {l:?}"))?;
            out.th_upper = upper(u)?;
        }
        _ => bail!("strategy {s:?}: expected kind[:th_upper] or highlow:th_lower:th_upper"),
    }
    Ok(out)
}

/// Worker pool capped by `BSC_THREADS` when set.
pub fn pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("BSC_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("BSC_THREADS: bad value {v:?}"))?;
        b = b.num_threads(n.max(1));
    }
    Ok(b.build()?)
}

/// Everything an episode needs besides the policy.
pub struct Scenario {
    pub layout: Arc<Layout>,
    pub fill: Arc<Vec<(u32, usize)>>,
    pub weeks: Vec<Arc<OrderStream>>,
}

impl Scenario {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let layout = Arc::new(cfg.layout.build()?);
        let fill = cfg.initial_fill(&layout)?;
        let weeks = cfg.week_streams(&layout, &fill, cfg.seed)?;
        Ok(Self {
            layout,
            fill: Arc::new(fill),
            weeks,
        })
    }
}

/// Simulator settings for a learned policy: the configured action space.
pub fn rl_sim_config(cfg: &RunConfig) -> SimConfig {
    SimConfig {
        action_space: cfg.rl.action_space,
        ..cfg.sim_config()
    }
}

fn load_checkpoint(
    path: &Path,
    sim: &SimConfig,
    stations: usize,
    cfg: &RunConfig,
) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    ck.check_hash(&policy_hash(sim, stations, &cfg.train.hidden))?;
    Ok(ck)
}

/// One episode; returns its metrics and, if enabled, its trace.
pub fn run_week(
    sc: &Scenario,
    sim_cfg: SimConfig,
    week: usize,
    policy: &mut dyn ChargingPolicy,
    trace: bool,
) -> Result<(EpisodeMetrics, Vec<String>)> {
    let mut sim = Simulation::new(sc.layout.clone(), sim_cfg, sc.weeks[week].clone(), &sc.fill)?;
    if trace {
        sim.enable_trace();
    }
    let m = run_episode(&mut sim, policy)?;
    Ok((m, sim.take_trace()))
}

fn make_policy(
    cfg: &RunConfig,
    sc: &Scenario,
) -> Result<(SimConfig, Box<dyn ChargingPolicy + Send>)> {
    if cfg.strategy.kind == StrategyKind::Rl {
        let sim_cfg = rl_sim_config(cfg);
        let path = cfg
            .rl
            .checkpoint
            .as_deref()
            .context("rl.checkpoint: the rl strategy needs a checkpoint")?;
        let ck = load_checkpoint(path, &sim_cfg, sc.layout.stations.len(), cfg)?;
        let agent = PolicyAgent {
            model: ck.model,
            caps: FeatureCaps::from_layout(&sc.layout),
        };
        Ok((sim_cfg, Box::new(agent)))
    } else {
        Ok((
            cfg.sim_config(),
            Box::new(Heuristic::new(cfg.strategy.clone())?),
        ))
    }
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.resolved"), cfg.to_toml())?;
    Ok(())
}

fn write_lines(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Per-week metrics of a simulate run, plus their aggregate.
#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub weeks: Vec<(usize, EpisodeMetrics)>,
    pub aggregate: EpisodeMetrics,
}

/// Runs the configured strategy on every selected week.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateReport> {
    prepare_out(out, cfg)?;
    let sc = Scenario::build(cfg)?;
    let results: Vec<Result<(EpisodeMetrics, Vec<String>)>> = pool()?.install(|| {
        (0..sc.weeks.len())
            .into_par_iter()
            .map(|i| {
                let (sim_cfg, mut policy) = make_policy(cfg, &sc)?;
                run_week(&sc, sim_cfg, i, policy.as_mut(), cfg.trace)
            })
            .collect()
    });
    let mut weeks = Vec::new();
    let mut rows = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (m, trace) = r?;
        let w = cfg.weeks[i];
        if cfg.trace {
            let name = if cfg.weeks.len() == 1 {
                "trace.log".to_string()
            } else {
                format!("trace_week{w}.log")
            };
            let mut text = trace.join("\n");
            text.push('\n');
            fs::write(out.join(name), text)?;
        }
        rows.push(m.csv_row(&format!("week{w}")));
        weeks.push((w, m));
    }
    let all: Vec<EpisodeMetrics> = weeks.iter().map(|(_, m)| m.clone()).collect();
    let aggregate = EpisodeMetrics::aggregate(&all);
    rows.push(aggregate.csv_row("aggregate"));
    write_lines(&out.join("table.csv"), CSV_HEADER, &rows)?;
    let doc = json!({
        "strategy": cfg.strategy.label(),
        "weeks": weeks.iter().map(|(w, m)| json!({"week": w, "metrics": m})).collect::<Vec<_>>(),
        "aggregate": aggregate,
    });
    fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&doc)? + "\n",
    )?;
    Ok(SimulateReport { weeks, aggregate })
}

/// One sweep cell aggregated over the selected weeks.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub strategy: StrategyConfig,
    pub metrics: EpisodeMetrics,
}

/// Runs the strategy grid, grouped by interrupt and sorted by service time.
pub fn sweep(cfg: &RunConfig, interrupt: Option<bool>, out: &Path) -> Result<Vec<SweepRow>> {
    prepare_out(out, cfg)?;
    let sc = Scenario::build(cfg)?;
    let s = &cfg.sweep;
    let interrupts = interrupt.map_or_else(|| s.interrupt.clone(), |i| vec![i]);
    let mut cells = sweep_grid(&s.kinds, &s.th_upper, &s.th_lower, &interrupts);
    for c in &mut cells {
        c.th_interrupt = cfg.strategy.th_interrupt;
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..sc.weeks.len()).map(move |w| (c, w)))
        .collect();
    let results: Vec<Result<EpisodeMetrics>> = pool()?.install(|| {
        jobs.par_iter()
            .map(|&(c, w)| {
                let strat = cells[c].clone();
                let sim_cfg = SimConfig {
                    interrupt: strat.interrupt,
                    interrupt_pct: strat.th_interrupt,
                    ..cfg.sim_config()
                };
                let mut h = Heuristic::new(strat)?;
                Ok(run_week(&sc, sim_cfg, w, &mut h, false)?.0)
            })
            .collect()
    });
    let mut per_cell: Vec<Vec<EpisodeMetrics>> = vec![Vec::new(); cells.len()];
    for (&(c, _), r) in jobs.iter().zip(results) {
        per_cell[c].push(r?);
    }
    let mut rows: Vec<SweepRow> = cells
        .into_iter()
        .zip(per_cell)
        .map(|(strategy, ms)| SweepRow {
            strategy,
            metrics: EpisodeMetrics::aggregate(&ms),
        })
        .collect();
    rows.sort_by(|a, b| {
        a.strategy
            .interrupt
            .cmp(&b.strategy.interrupt)
            .then(
                a.metrics
                    .avg_service_time
                    .total_cmp(&b.metrics.avg_service_time),
            )
            .then_with(|| a.strategy.label().cmp(&b.strategy.label()))
    });
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{}",
                r.strategy.interrupt,
                r.metrics.csv_row(&r.strategy.label())
            )
        })
        .collect();
    write_lines(
        &out.join("table.csv"),
        &format!("interrupt,{CSV_HEADER}"),
        &lines,
    )?;
    let doc: Vec<_> = rows
        .iter()
        .map(|r| json!({"strategy": r.strategy, "label": r.strategy.label(), "metrics": r.metrics}))
        .collect();
    fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&doc)? + "\n",
    )?;
    Ok(rows)
}

/// Training environment for `cfg`: the preset decides whether the
/// interrupt heuristic runs during training.
pub fn train_env(cfg: &RunConfig, sc: &Scenario) -> Result<(Env, SimConfig)> {
    let interrupt = match cfg.rl.preset {
        Some(p) => p.setup().2,
        None => cfg.strategy.interrupt,
    };
    let sim_cfg = SimConfig {
        interrupt,
        ..rl_sim_config(cfg)
    };
    let env = Env::new(
        sc.layout.clone(),
        sim_cfg.clone(),
        cfg.rl.reward.clone(),
        sc.fill.clone(),
    )?;
    Ok((env, sim_cfg))
}

/// Trains a policy; writes `best.ckpt.json`, `last.ckpt.json` and `train_log.csv`.
pub fn train(cfg: &RunConfig, resume: Option<&Path>, out: &Path) -> Result<TrainOutcome> {
    prepare_out(out, cfg)?;
    let sc = Scenario::build(cfg)?;
    let (mut env, sim_cfg) = train_env(cfg, &sc)?;
    let hash = policy_hash(&sim_cfg, sc.layout.stations.len(), &cfg.train.hidden);
    let resume = resume
        .map(|p| Checkpoint::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let log_path = out.join("train_log.csv");
    let mut log = std::io::BufWriter::new(fs::File::create(&log_path)?);
    writeln!(log, "{LOG_HEADER}")?;
    let mut io_err = None;
    let outcome = agent::train(&mut env, &sc.weeks, &cfg.train, &hash, resume, |row| {
        if let Err(e) = writeln!(log, "{}", row.csv()).and_then(|_| log.flush()) {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e).with_context(|| format!("writing {}", log_path.display()));
    }
    outcome.best.save(&out.join("best.ckpt.json"))?;
    outcome.last.save(&out.join("last.ckpt.json"))?;
    Ok(outcome)
}

/// Evaluation rows: per week, then the aggregate, for each interrupt setting.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub interrupt: bool,
    pub label: String,
    pub metrics: EpisodeMetrics,
}

/// Greedy evaluation of a checkpoint on the selected weeks.
pub fn evaluate(
    cfg: &RunConfig,
    checkpoint: &Path,
    interrupt: Option<bool>,
    out: &Path,
) -> Result<Vec<EvalRow>> {
    prepare_out(out, cfg)?;
    let sc = Scenario::build(cfg)?;
    let base = rl_sim_config(cfg);
    let ck = load_checkpoint(checkpoint, &base, sc.layout.stations.len(), cfg)?;
    let groups = interrupt.map_or_else(|| vec![false, true], |i| vec![i]);
    let jobs: Vec<(bool, usize)> = groups
        .iter()
        .flat_map(|&g| (0..sc.weeks.len()).map(move |w| (g, w)))
        .collect();
    let results: Vec<Result<EpisodeMetrics>> = pool()?.install(|| {
        jobs.par_iter()
            .map(|&(g, w)| {
                let mut agent = PolicyAgent {
                    model: ck.model.clone(),
                    caps: FeatureCaps::from_layout(&sc.layout),
                };
                let sim_cfg = SimConfig {
                    interrupt: g,
                    ..base.clone()
                };
                Ok(run_week(&sc, sim_cfg, w, &mut agent, false)?.0)
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut it = jobs.iter().zip(results);
    for &g in &groups {
        let mut ms = Vec::new();
        for _ in 0..sc.weeks.len() {
            let (&(_, w), r) = it.next().expect("one result per job");
            let m = r?;
            rows.push(EvalRow {
                interrupt: g,
                label: format!("week{}", cfg.weeks[w]),
                metrics: m.clone(),
            });
            ms.push(m);
        }
        rows.push(EvalRow {
            interrupt: g,
            label: "aggregate".into(),
            metrics: EpisodeMetrics::aggregate(&ms),
        });
    }
    let lines: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{}", r.interrupt, r.metrics.csv_row(&r.label)))
        .collect();
    write_lines(
        &out.join("table.csv"),
        &format!("interrupt,{CSV_HEADER}"),
        &lines,
    )?;
    let doc: Vec<_> = rows
        .iter()
        .map(|r| json!({"interrupt": r.interrupt, "label": r.label, "metrics": r.metrics}))
        .collect();
    fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&doc)? + "\n",
    )?;
    Ok(rows)
}

/// Writes the configured order stream and initial fill as CSV files.
pub fn gen_orders(cfg: &RunConfig, out: &Path) -> Result<(PathBuf, PathBuf)> {
    prepare_out(out, cfg)?;
    let layout = cfg.layout.build()?;
    let fill = cfg.initial_fill(&layout)?;
    let stream = cfg.order_stream(&layout, &fill, cfg.seed)?;
    let orders = out.join("orders.csv");
    stream.save(&orders)?;
    let fill_path = out.join("fill.csv");
    let rows: Vec<String> = fill.iter().map(|(s, n)| format!("{s},{n}")).collect();
    write_lines(&fill_path, "sku,count", &rows)?;
    Ok((orders, fill_path))
}

/// Serves the environment's line protocol over the given streams.
pub fn serve(cfg: &RunConfig, input: impl std::io::BufRead, output: impl Write) -> Result<()> {
    let layout = Arc::new(cfg.layout.build()?);
    let fill = Arc::new(cfg.initial_fill(&layout)?);
    let mut env = Env::new(
        layout.clone(),
        rl_sim_config(cfg),
        cfg.rl.reward.clone(),
        fill.clone(),
    )?;
    let weeks = |seed: u64, week: usize| {
        let mut c = cfg.clone();
        c.weeks = vec![week];
        Ok(c.week_streams(&layout, &fill, seed)?.remove(0))
    };
    stackcharge::rlenv::serve(&mut env, weeks, input, output)?;
    Ok(())
}
