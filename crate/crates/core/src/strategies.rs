//! Heuristic charging strategies and the interrupt rule.

use serde::{Deserialize, Serialize};

use crate::battery::{BatteryModel, ChargeTarget, ChargingStation};
use crate::engine::{ChargingPolicy, DecisionRequest, Simulation};
use crate::error::{Error, Result};

/// Level at or below which charging is mandatory for every strategy.
pub const MANDATORY_PCT: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Fixed,
    Opportunity,
    HighLow,
    Rl,
}

impl StrategyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" => Ok(Self::Fixed),
            "opportunity" => Ok(Self::Opportunity),
            "highlow" => Ok(Self::HighLow),
            "rl" => Ok(Self::Rl),
            _ => Err(Error::Config(format!(
                "strategy.kind: unknown strategy {s:?} (fixed, opportunity, highlow, rl)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Fixed => "fixed",
            Self::Opportunity => "opportunity",
            Self::HighLow => "highlow",
            Self::Rl => "rl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub th_lower: f64,
    pub th_upper: u32,
    pub th_interrupt: f64,
    pub interrupt: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            kind: StrategyKind::Fixed,
            th_lower: 20.0,
            th_upper: 100,
            th_interrupt: 50.0,
            interrupt: false,
        }
    }
}

impl StrategyConfig {
    pub fn fixed(th_upper: u32) -> Self {
        Self {
            th_upper,
            ..Self::default()
        }
    }

    pub fn opportunity() -> Self {
        Self {
            kind: StrategyKind::Opportunity,
            ..Self::default()
        }
    }

    pub fn highlow(th_lower: f64, th_upper: u32) -> Self {
        Self {
            kind: StrategyKind::HighLow,
            th_lower,
            th_upper,
            ..Self::default()
        }
    }

    pub fn with_interrupt(mut self, on: bool) -> Self {
        self.interrupt = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let upper = f64::from(self.th_upper);
        if !(self.th_lower >= 0.0 && self.th_lower < upper && self.th_upper <= 100) {
            return Err(Error::Config(format!(
                "strategy: need 0 <= th_lower < th_upper <= 100, got {} and {}",
                self.th_lower, self.th_upper
            )));
        }
        if !self.th_upper.is_multiple_of(10) || self.th_upper < 30 {
            return Err(Error::Config(format!(
                "strategy.th_upper: {} is not a charging target (30..=100 in steps of 10)",
                self.th_upper
            )));
        }
        if !(self.th_interrupt > self.th_lower && self.th_interrupt <= 100.0) {
            return Err(Error::Config(format!(
                "strategy.th_interrupt: {} must lie in (th_lower, 100]",
                self.th_interrupt
            )));
        }
        Ok(())
    }

    /// Short row label such as `fixed_u40_int`.
    pub fn label(&self) -> String {
        let mut s = match self.kind {
            StrategyKind::Fixed => format!("fixed_u{}", self.th_upper),
            StrategyKind::HighLow => format!("highlow_l{}_u{}", self.th_lower, self.th_upper),
            k => k.name().to_string(),
        };
        if self.interrupt {
            s.push_str("_int");
        }
        s
    }
}

/// Charge to `th_upper` once the battery is at or below `th_lower`.
pub fn fixed_decide(battery_pct: f64, cfg: &StrategyConfig) -> ChargeTarget {
    if battery_pct <= cfg.th_lower || battery_pct <= MANDATORY_PCT {
        ChargeTarget(cfg.th_upper)
    } else {
        ChargeTarget::NONE
    }
}

/// Charge fully whenever a station is available and no work is pending.
pub fn opportunity_decide(
    battery_pct: f64,
    station_available: bool,
    q_r: usize,
    q_d: usize,
) -> ChargeTarget {
    let idle = station_available && q_r == 0 && q_d == 0 && battery_pct < 100.0;
    if idle || battery_pct <= MANDATORY_PCT {
        ChargeTarget::FULL
    } else {
        ChargeTarget::NONE
    }
}

/// Like fixed, but only charge to `th_upper` while retrievals wait; fully otherwise.
pub fn highlow_decide(battery_pct: f64, q_r: usize, cfg: &StrategyConfig) -> ChargeTarget {
    if battery_pct <= cfg.th_lower || battery_pct <= MANDATORY_PCT {
        if q_r > 0 {
            ChargeTarget(cfg.th_upper)
        } else {
            ChargeTarget::FULL
        }
    } else {
        ChargeTarget::NONE
    }
}

/// Station occupants to release: every charging AMR above `th_interrupt`
/// that is not already being released. Returns `(station, amr)` pairs.
pub fn interrupt_scan(
    stations: &[ChargingStation],
    now: f64,
    model: &BatteryModel,
    th_interrupt: f64,
) -> Vec<(usize, usize)> {
    stations
        .iter()
        .filter_map(|s| {
            let o = s.occupant.as_ref()?;
            let live = model.pct(o.level_at(now, model));
            (!o.interrupt_pending && live > th_interrupt).then_some((s.id, o.amr))
        })
        .collect()
}

/// A heuristic strategy bound to its configuration.
#[derive(Debug, Clone)]
pub struct Heuristic {
    pub cfg: StrategyConfig,
}

impl Heuristic {
    pub fn new(cfg: StrategyConfig) -> Result<Self> {
        if cfg.kind == StrategyKind::Rl {
            return Err(Error::Config(
                "strategy.kind = rl needs a checkpoint".into(),
            ));
        }
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl ChargingPolicy for Heuristic {
    fn decide(&mut self, sim: &Simulation, req: &DecisionRequest) -> Result<ChargeTarget> {
        let st = sim.state();
        let (q_r, q_d) = (st.queues.retrieval.len(), st.queues.delivery.len());
        Ok(match self.cfg.kind {
            StrategyKind::Fixed => fixed_decide(req.battery_pct, &self.cfg),
            StrategyKind::Opportunity => {
                opportunity_decide(req.battery_pct, st.available_stations() > 0, q_r, q_d)
            }
            StrategyKind::HighLow => highlow_decide(req.battery_pct, q_r, &self.cfg),
            StrategyKind::Rl => unreachable!("rejected in Heuristic::new"),
        })
    }
}

/// Strategy grid: fixed over `th_uppers`, highlow over `th_lowers × th_uppers`,
/// and opportunity, each with and without interrupt as requested.
pub fn sweep_grid(
    kinds: &[StrategyKind],
    th_uppers: &[u32],
    th_lowers: &[f64],
    interrupts: &[bool],
) -> Vec<StrategyConfig> {
    let mut out = Vec::new();
    for &interrupt in interrupts {
        for &kind in kinds {
            match kind {
                StrategyKind::Fixed => out.extend(
                    th_uppers
                        .iter()
                        .map(|&u| StrategyConfig::fixed(u).with_interrupt(interrupt)),
                ),
                StrategyKind::HighLow => {
                    for &l in th_lowers {
                        out.extend(
                            th_uppers
                                .iter()
                                .filter(|&&u| f64::from(u) > l)
                                .map(|&u| StrategyConfig::highlow(l, u).with_interrupt(interrupt)),
                        );
                    }
                }
                StrategyKind::Opportunity => {
                    out.push(StrategyConfig::opportunity().with_interrupt(interrupt))
                }
                StrategyKind::Rl => {}
            }
        }
    }
    out
}
