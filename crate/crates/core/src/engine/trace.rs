//! Event trace replay: recomputes episode metrics from trace lines alone.

use std::collections::HashMap;

use super::event::EventKind;
use crate::error::{Error, Result};
use crate::metrics::EpisodeMetrics;

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn field<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| bad(line, format!("bad value for {key}: {v:?}")))
}

fn header(text: &str) -> Result<HashMap<&str, &str>> {
    let body = text
        .strip_prefix('#')
        .ok_or_else(|| bad(1, "missing trace header"))?;
    Ok(body
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .collect())
}

/// Recomputes the metrics an engine reported, using only its trace.
pub fn replay(lines: &[String]) -> Result<EpisodeMetrics> {
    let first = lines.first().ok_or_else(|| bad(1, "empty trace"))?;
    let h = header(first)?;
    let get = |k: &str| {
        h.get(k)
            .copied()
            .ok_or_else(|| bad(1, format!("header lacks {k}")))
    };
    let amrs: usize = field(1, "amrs", get("amrs")?)?;
    let capacity: f64 = field(1, "capacity_ah", get("capacity_ah")?)?;
    let mut fleet_ah: f64 = field(1, "fleet_ah", get("fleet_ah")?)?;
    let rcap: usize = field(1, "retrieval_cap", get("retrieval_cap")?)?;
    let dcap: usize = field(1, "delivery_cap", get("delivery_cap")?)?;

    let mut arrivals: HashMap<u64, f64> = HashMap::new();
    let mut odo = vec![0.0_f64; amrs];
    let mut m = EpisodeMetrics::default();
    let (mut last_t, mut qr, mut max_qr) = (0.0_f64, 0usize, 0usize);
    let (mut qr_int, mut fleet_int, mut st_sum) = (0.0_f64, 0.0_f64, 0.0_f64);

    for (i, line) in lines.iter().enumerate().skip(1) {
        let n = i + 1;
        let mut parts = line.splitn(3, '\t');
        let t: f64 = field(n, "time", parts.next().unwrap_or(""))?;
        let kind = parts
            .next()
            .and_then(EventKind::from_name)
            .ok_or_else(|| bad(n, "unknown event kind"))?;
        let rest = parts.next().unwrap_or("");

        let dt = t - last_t;
        qr_int += qr as f64 * dt;
        fleet_int += fleet_ah * dt;
        last_t = t;

        let mut order = None;
        let mut qd = 0usize;
        for kv in rest.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(n, format!("token {kv:?}")))?;
            match k {
                "order" => order = Some(field::<u64>(n, k, v)?),
                "leg" => {
                    let (a, d) = v
                        .split_once(':')
                        .ok_or_else(|| bad(n, "leg needs amr:dist"))?;
                    let a: usize = field(n, k, a)?;
                    *odo.get_mut(a)
                        .ok_or_else(|| bad(n, "leg amr out of range"))? += field::<f64>(n, k, d)?;
                }
                "strand" => m.stranded_amrs += 1,
                "qr" => qr = field(n, k, v)?,
                "qd" => qd = field(n, k, v)?,
                "fleet_ah" => fleet_ah = field(n, k, v)?,
                _ => {}
            }
        }
        max_qr = max_qr.max(qr);

        match kind {
            EventKind::OrderArrival => {
                let id = order.ok_or_else(|| bad(n, "arrival without order"))?;
                arrivals.insert(id, t);
                if qr > rcap || qd > dcap {
                    m.constraint_violations += 1;
                }
            }
            EventKind::AmrReleased => {
                let id = order.ok_or_else(|| bad(n, "release without order"))?;
                let arrived = arrivals
                    .get(&id)
                    .ok_or_else(|| bad(n, format!("order {id} completed before arriving")))?;
                st_sum += t - arrived;
                m.orders_completed += 1;
            }
            EventKind::ChargeInterrupted => m.charge_interruptions += 1,
            EventKind::DecisionRequest => m.decisions += 1,
            _ => {}
        }
    }

    let v = amrs as f64;
    let (mean_qr, mean_fleet) = if last_t > 0.0 {
        (qr_int / last_t, fleet_int / last_t)
    } else {
        (qr as f64, fleet_ah)
    };
    m.avg_service_time = if m.orders_completed == 0 {
        0.0
    } else {
        st_sum / m.orders_completed as f64
    };
    m.max_retrieval_queue = max_qr as f64;
    m.mean_retrieval_queue = mean_qr;
    m.mean_battery_pct = mean_fleet / (v * capacity) * 100.0;
    m.mean_travel_km_per_amr = odo.iter().sum::<f64>() / v / 1000.0;
    m.truncated_orders = arrivals.len() as u64 - m.orders_completed;
    m.duration_s = last_t;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_missing_header() {
        assert!(replay(&["0\tOrderArrival\torder=0".to_string()]).is_err());
        assert!(replay(&[]).is_err());
    }

    #[test]
    fn replays_hand_trace() {
        let lines: Vec<String> = [
            "# amrs=1 capacity_ah=52 fleet_ah=52 retrieval_cap=330 delivery_cap=240",
            "0\tOrderArrival\torder=0 kind=D sku=0 dock=0 assign=0:0 leg=0:0 qr=0 qd=0 fleet_ah=52",
            "10\tAMRArrivedAtDock\tamr=0 order=0 lane=3 leg=0:15 qr=0 qd=0 fleet_ah=51",
            "30\tAMRArrivedAtLane\tamr=0 order=0 lane=3 qr=0 qd=0 fleet_ah=51",
            "40\tAMRReleased\tamr=0 order=0 st=40 qr=0 qd=0 fleet_ah=51",
            "40\tDecisionRequest\tamr=0 bat=98 action=0 qr=0 qd=0 fleet_ah=51",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let m = replay(&lines).unwrap();
        assert_eq!(m.avg_service_time, 40.0);
        assert_eq!(m.orders_completed, 1);
        assert_eq!(m.decisions, 1);
        assert_eq!(m.mean_travel_km_per_amr, 0.015);
        // 52 Ah for 10 s, then 51 Ah for 30 s.
        assert_eq!(
            m.mean_battery_pct,
            (52.0 * 10.0 + 51.0 * 30.0) / 40.0 / 52.0 * 100.0
        );
    }
}
