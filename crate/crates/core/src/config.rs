//! Run configuration: one TOML file with nested sections, all keys optional.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::TrainConfig;
use crate::battery::{ActionSpace, BatteryModel};
use crate::engine::SimConfig;
use crate::error::{Error, Result};
use crate::layout::{Layout, LayoutSpec};
use crate::orders::{
    generate, parse_fill, zipf_fill, ArrivalProfile, GeneratorConfig, OrderStream,
};
use crate::rlenv::{RewardKind, RewardSpec};
use crate::strategies::StrategyConfig;
use crate::warehouse::Sku;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    /// `wepa` or `toy`; ignored when `path` or `spec` is given.
    pub preset: String,
    /// Plain-text grid file.
    pub path: Option<PathBuf>,
    /// Full generator parameters instead of a preset.
    pub spec: Option<LayoutSpec>,
    pub stations: Option<usize>,
    pub speed_mps: Option<f64>,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            preset: "wepa".into(),
            path: None,
            spec: None,
            stations: None,
            speed_mps: None,
        }
    }
}

impl LayoutConfig {
    pub fn build(&self) -> Result<Layout> {
        let mut layout = if let Some(p) = &self.path {
            if self.stations.is_some() {
                return Err(Error::Config(
                    "layout.stations cannot override a grid file; edit the file".into(),
                ));
            }
            Layout::load(p)
                .map_err(|e| Error::Config(format!("layout.path {}: {e}", p.display())))?
        } else {
            let mut spec = match &self.spec {
                Some(s) => s.clone(),
                None => match self.preset.as_str() {
                    "wepa" => LayoutSpec::wepa(),
                    "toy" => LayoutSpec::toy(),
                    other => {
                        return Err(Error::Config(format!(
                            "layout.preset: unknown preset {other:?} (wepa, toy)"
                        )))
                    }
                },
            };
            if let Some(n) = self.stations {
                spec.stations = n;
            }
            spec.build()
                .map_err(|e| Error::Config(format!("layout: {e}")))?
        };
        if let Some(v) = self.speed_mps {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config("layout.speed_mps must be positive".into()));
            }
            layout.speed = v;
        }
        Ok(layout)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub amrs: usize,
    pub handling_s: f64,
    pub initial_battery_pct: f64,
    pub retrieval_cap: usize,
    pub delivery_cap: usize,
}

impl Default for FleetConfig {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            amrs: s.amrs,
            handling_s: s.handling_s,
            initial_battery_pct: s.initial_battery_pct,
            retrieval_cap: s.retrieval_cap,
            delivery_cap: s.delivery_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrdersConfig {
    /// Order file; when absent, orders are generated.
    pub path: Option<PathBuf>,
    pub generator: GeneratorConfig,
    /// Initial stock file with `sku,count` rows.
    pub fill_path: Option<PathBuf>,
    /// Share of storage filled at start when no fill file is given.
    pub fill_fraction: f64,
}

impl Default for OrdersConfig {
    fn default() -> Self {
        Self {
            path: None,
            generator: GeneratorConfig::default(),
            fill_path: None,
            fill_fraction: 0.5,
        }
    }
}

/// Names of the four reinforcement-learning setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RlPreset {
    Basic1,
    Basic2,
    LightShaped,
    FullyShaped,
}

impl RlPreset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "Basic1" => Ok(Self::Basic1),
            "Basic2" => Ok(Self::Basic2),
            "LightShaped" => Ok(Self::LightShaped),
            "FullyShaped" => Ok(Self::FullyShaped),
            _ => Err(Error::Config(format!(
                "rl.preset: unknown setup {s:?} (Basic1, Basic2, LightShaped, FullyShaped)"
            ))),
        }
    }

    /// Reward kind, action space and whether interrupt is on during training.
    pub fn setup(self) -> (RewardKind, ActionSpace, bool) {
        match self {
            Self::Basic1 => (RewardKind::ServiceTime, ActionSpace::Full, false),
            Self::Basic2 => (RewardKind::Queue, ActionSpace::Full, false),
            Self::LightShaped => (RewardKind::Composite, ActionSpace::Full, false),
            Self::FullyShaped => (RewardKind::Shaped, ActionSpace::Binary, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    /// Overrides `action_space`, `reward.kind` and the training interrupt flag.
    pub preset: Option<RlPreset>,
    pub action_space: ActionSpace,
    pub reward: RewardSpec,
    /// Checkpoint for `strategy.kind = "rl"` and `evaluate`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            preset: None,
            action_space: ActionSpace::Full,
            reward: RewardSpec::default(),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub kinds: Vec<crate::strategies::StrategyKind>,
    pub th_upper: Vec<u32>,
    pub th_lower: Vec<f64>,
    pub interrupt: Vec<bool>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        use crate::strategies::StrategyKind::*;
        Self {
            kinds: vec![Fixed, HighLow, Opportunity],
            th_upper: (3..=10).map(|i| i * 10).collect(),
            th_lower: vec![20.0],
            interrupt: vec![false, true],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Week indices to simulate or evaluate.
    pub weeks: Vec<usize>,
    pub trace: bool,
    pub layout: LayoutConfig,
    pub fleet: FleetConfig,
    pub battery: BatteryModel,
    pub orders: OrdersConfig,
    pub strategy: StrategyConfig,
    pub sweep: SweepConfig,
    pub rl: RlConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            weeks: vec![0],
            trace: false,
            layout: LayoutConfig::default(),
            fleet: FleetConfig::default(),
            battery: BatteryModel::default(),
            orders: OrdersConfig::default(),
            strategy: StrategyConfig::default(),
            sweep: SweepConfig::default(),
            rl: RlConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut cfg.layout.path);
        fix(&mut cfg.orders.path);
        fix(&mut cfg.orders.fill_path);
        fix(&mut cfg.rl.checkpoint);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies an RL preset to the action space and reward kind.
    pub fn apply_rl_preset(&mut self) {
        if let Some(p) = self.rl.preset {
            let (kind, space, _) = p.setup();
            self.rl.reward.kind = kind;
            self.rl.action_space = space;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fleet.amrs == 0 {
            return Err(Error::Config("fleet.amrs must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.orders.fill_fraction) {
            return Err(Error::Config(
                "orders.fill_fraction must lie in [0, 1]".into(),
            ));
        }
        for (key, p) in [
            ("layout.path", &self.layout.path),
            ("orders.path", &self.orders.path),
            ("orders.fill_path", &self.orders.fill_path),
            ("rl.checkpoint", &self.rl.checkpoint),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{key}: {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        self.battery
            .validate()
            .map_err(|e| Error::Config(format!("battery: {e}")))?;
        self.rl.reward.validate()?;
        self.sim_config().validate()
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            amrs: self.fleet.amrs,
            handling_s: self.fleet.handling_s,
            battery: self.battery,
            retrieval_cap: self.fleet.retrieval_cap,
            delivery_cap: self.fleet.delivery_cap,
            initial_battery_pct: self.fleet.initial_battery_pct,
            action_space: ActionSpace::Full,
            interrupt: self.strategy.interrupt,
            interrupt_pct: self.strategy.th_interrupt,
        }
    }

    /// Initial stock per SKU: the fill file, or a Zipf split of
    /// `fill_fraction` of the layout's capacity.
    pub fn initial_fill(&self, layout: &Layout) -> Result<Vec<(Sku, usize)>> {
        match &self.orders.fill_path {
            Some(p) => parse_fill(&std::fs::read_to_string(p)?),
            None => {
                let total =
                    (layout.total_capacity() as f64 * self.orders.fill_fraction).floor() as usize;
                let g = &self.orders.generator;
                Ok(zipf_fill(total, g.skus, g.zipf_s))
            }
        }
    }

    /// The full order stream (all generated or loaded weeks).
    pub fn order_stream(
        &self,
        layout: &Layout,
        fill: &[(Sku, usize)],
        seed: u64,
    ) -> Result<OrderStream> {
        match &self.orders.path {
            Some(p) => OrderStream::load(p),
            None => {
                let g = &self.orders.generator;
                let profile = ArrivalProfile::from_config(g);
                let mut stock = vec![0usize; g.skus];
                for &(s, n) in fill {
                    if let Some(v) = stock.get_mut(s as usize) {
                        *v += n;
                    }
                }
                let inputs: Vec<usize> = layout.input_docks().map(|d| d.id).collect();
                let outputs: Vec<usize> = layout.output_docks().map(|d| d.id).collect();
                generate(&profile, g.weeks, seed, &stock, &inputs, &outputs)
            }
        }
    }

    /// Week-long streams selected by `weeks`, rebased to start at zero.
    pub fn week_streams(
        &self,
        layout: &Layout,
        fill: &[(Sku, usize)],
        seed: u64,
    ) -> Result<Vec<Arc<OrderStream>>> {
        let all = self.order_stream(layout, fill, seed)?.split_weeks();
        self.weeks
            .iter()
            .map(|&w| {
                all.get(w).cloned().map(Arc::new).ok_or_else(|| {
                    Error::Config(format!(
                        "weeks: week {w} not in stream ({} weeks)",
                        all.len()
                    ))
                })
            })
            .collect()
    }
}
