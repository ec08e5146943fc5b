//! Episode-level evaluation metrics.

use serde::{Deserialize, Serialize};

/// Outcome of one simulated episode (or an aggregate of several).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Mean of completion minus arrival time over completed orders (s).
    pub avg_service_time: f64,
    pub max_retrieval_queue: f64,
    /// Time-weighted mean of the pending retrieval count.
    pub mean_retrieval_queue: f64,
    /// Time-weighted mean of the fleet's mean battery level (%).
    pub mean_battery_pct: f64,
    pub mean_travel_km_per_amr: f64,
    pub constraint_violations: u64,
    pub orders_completed: u64,
    /// Orders that arrived but were not completed when the episode ended.
    pub truncated_orders: u64,
    pub charge_interruptions: u64,
    pub stranded_amrs: u64,
    pub decisions: u64,
    pub duration_s: f64,
}

pub const CSV_HEADER: &str = "label,avg_service_time,max_retrieval_queue,mean_retrieval_queue,\
mean_battery_pct,mean_travel_km_per_amr,constraint_violations,orders_completed,truncated_orders,\
charge_interruptions,stranded_amrs,decisions,duration_s";

impl EpisodeMetrics {
    /// Column means of the rate metrics; counts are summed.
    pub fn aggregate(rows: &[EpisodeMetrics]) -> EpisodeMetrics {
        if rows.is_empty() {
            return EpisodeMetrics::default();
        }
        let n = rows.len() as f64;
        let mean = |f: fn(&EpisodeMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let sum = |f: fn(&EpisodeMetrics) -> u64| rows.iter().map(f).sum::<u64>();
        EpisodeMetrics {
            avg_service_time: mean(|m| m.avg_service_time),
            max_retrieval_queue: mean(|m| m.max_retrieval_queue),
            mean_retrieval_queue: mean(|m| m.mean_retrieval_queue),
            mean_battery_pct: mean(|m| m.mean_battery_pct),
            mean_travel_km_per_amr: mean(|m| m.mean_travel_km_per_amr),
            constraint_violations: sum(|m| m.constraint_violations),
            orders_completed: sum(|m| m.orders_completed),
            truncated_orders: sum(|m| m.truncated_orders),
            charge_interruptions: sum(|m| m.charge_interruptions),
            stranded_amrs: sum(|m| m.stranded_amrs),
            decisions: sum(|m| m.decisions),
            duration_s: mean(|m| m.duration_s),
        }
    }

    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{label},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.avg_service_time,
            self.max_retrieval_queue,
            self.mean_retrieval_queue,
            self.mean_battery_pct,
            self.mean_travel_km_per_amr,
            self.constraint_violations,
            self.orders_completed,
            self.truncated_orders,
            self.charge_interruptions,
            self.stranded_amrs,
            self.decisions,
            self.duration_s
        )
    }
}
