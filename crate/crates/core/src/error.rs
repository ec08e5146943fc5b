use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("event scheduled at {at}s before the current clock {clock}s")]
    Causality { at: f64, clock: f64 },

    #[error("layout: {0}")]
    Layout(String),

    #[error("no route from {from:?} to {to:?}")]
    Unreachable {
        from: (usize, usize),
        to: (usize, usize),
    },

    #[error("warehouse is full")]
    WarehouseFull,

    #[error("sku {0} is out of stock or not accessible")]
    OutOfStock(u32),

    #[error("order {0} completed twice")]
    DoubleCompletion(u64),

    #[error("invalid charge request: target {target}% with battery at {current}%")]
    InvalidCharge { current: f64, target: f64 },

    #[error("amr {amr} does not occupy station {station}")]
    NotOccupant { amr: usize, station: usize },

    #[error("action {action} is masked out for battery {battery_pct:.3}%")]
    MaskedAction { action: u32, battery_pct: f64 },

    #[error("no decision is pending")]
    NoPendingDecision,

    #[error("all actions are masked")]
    AllMasked,

    #[error("order file line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("order profile is infeasible: {0}")]
    InfeasibleProfile(String),

    #[error("config: {0}")]
    Config(String),

    #[error("training diverged: {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("protocol: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
