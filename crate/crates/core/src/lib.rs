//! Discrete-event simulation of a block stacking warehouse served by a
//! battery-powered AMR fleet, with heuristic and learned charging policies.

pub mod agent;
pub mod battery;
pub mod config;
pub mod engine;
pub mod error;
pub mod layout;
pub mod metrics;
pub mod orders;
pub mod rlenv;
pub mod strategies;
pub mod warehouse;

pub use battery::{ActionSpace, BatteryModel, ChargeTarget, ChargingStation};
pub use config::RunConfig;
pub use engine::{run_episode, ChargingPolicy, DecisionRequest, SimConfig, Simulation, Step};
pub use error::{Error, Result};
pub use layout::{Layout, LayoutSpec, Place};
pub use metrics::EpisodeMetrics;
pub use orders::{OrderSpec, OrderStream};
pub use rlenv::{Env, RewardKind, RewardSpec};
pub use strategies::{Heuristic, StrategyConfig, StrategyKind};
pub use warehouse::{OrderKind, WarehouseState};
