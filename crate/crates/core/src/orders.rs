//! Synthetic order streams and the order file format.
//!
//! Arrivals are drawn hour by hour from a per-hour-of-week intensity profile
//! (an inhomogeneous Poisson process with piecewise-constant rate). Deliveries
//! arrive around the clock; retrievals only while outbound trucks are served,
//! 06:00 to 22:00, with a morning and an afternoon peak. SKUs follow a Zipf
//! popularity law and a retrieval only names a SKU that is in stock at that
//! moment according to the stream itself.

use std::fmt::Write as _;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::warehouse::{OrderKind, Sku};

pub const HOUR_S: f64 = 3600.0;
pub const DAY_S: f64 = 24.0 * HOUR_S;
pub const WEEK_S: f64 = 7.0 * DAY_S;
pub const HOURS_PER_WEEK: usize = 168;

/// Orders per week in the reference data set, scaled from its totals.
pub const REFERENCE_WEEKLY_ORDERS: f64 = 400_000.0 / 89.0 * 7.0;

pub const ORDER_FILE_HEADER: &str = "arrival_s,kind,sku,dock";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderSpec {
    pub arrival_s: f64,
    pub kind: OrderKind,
    pub sku: Sku,
    pub dock: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrderStream {
    pub orders: Vec<OrderSpec>,
    pub horizon_days: f64,
    pub seed: Option<u64>,
}

impl OrderStream {
    pub fn new(orders: Vec<OrderSpec>) -> Self {
        let horizon_days = orders.last().map_or(0.0, |o| (o.arrival_s / DAY_S).ceil());
        Self {
            orders,
            horizon_days,
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    /// Checks ordering and that every dock matches its order kind.
    pub fn validate(&self, input_docks: &[usize], output_docks: &[usize]) -> Result<()> {
        let mut last = 0.0;
        for (i, o) in self.orders.iter().enumerate() {
            let line = i + 2;
            if !(o.arrival_s >= last) {
                return Err(Error::Parse {
                    line,
                    msg: "arrival times must be non-negative and non-decreasing".into(),
                });
            }
            last = o.arrival_s;
            let docks = match o.kind {
                OrderKind::Delivery => input_docks,
                OrderKind::Retrieval => output_docks,
            };
            if !docks.contains(&o.dock) {
                return Err(Error::Parse {
                    line,
                    msg: format!("dock {} is not a valid {:?} dock", o.dock, o.kind),
                });
            }
        }
        Ok(())
    }

    /// Splits into consecutive weeks, each rebased to start at time zero.
    pub fn split_weeks(&self) -> Vec<OrderStream> {
        let n_weeks = self
            .orders
            .last()
            .map_or(0, |o| (o.arrival_s / WEEK_S).floor() as usize + 1)
            .max((self.horizon_days / 7.0).ceil() as usize);
        let mut weeks: Vec<Vec<OrderSpec>> = vec![Vec::new(); n_weeks];
        for o in &self.orders {
            let w = (o.arrival_s / WEEK_S).floor() as usize;
            let start = w as f64 * WEEK_S;
            weeks[w].push(OrderSpec {
                arrival_s: o.arrival_s - start,
                ..*o
            });
        }
        weeks
            .into_iter()
            .map(|orders| OrderStream {
                orders,
                horizon_days: 7.0,
                seed: self.seed,
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * self.orders.len() + 32);
        out.push_str(ORDER_FILE_HEADER);
        out.push('\n');
        for o in &self.orders {
            writeln!(
                out,
                "{},{},{},{}",
                o.arrival_s,
                o.kind.code(),
                o.sku,
                o.dock
            )
            .unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<OrderStream> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == ORDER_FILE_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header `{ORDER_FILE_HEADER}`"),
                })
            }
        }
        let mut orders = Vec::new();
        let mut last = 0.0;
        for (i, raw) in lines {
            let line = i + 1;
            let row = raw.trim();
            if row.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse {
                line,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = row.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err("expected 4 fields"));
            }
            let arrival_s: f64 = fields[0].parse().map_err(|_| err("bad arrival time"))?;
            if !arrival_s.is_finite() || arrival_s < 0.0 {
                return Err(err("arrival time must be a non-negative number"));
            }
            if arrival_s < last {
                return Err(err("arrival times must be non-decreasing"));
            }
            last = arrival_s;
            let kind = match fields[1] {
                "D" => OrderKind::Delivery,
                "R" => OrderKind::Retrieval,
                _ => return Err(err("kind must be D or R")),
            };
            let sku = fields[2].parse().map_err(|_| err("bad sku"))?;
            let dock = fields[3].parse().map_err(|_| err("bad dock"))?;
            orders.push(OrderSpec {
                arrival_s,
                kind,
                sku,
                dock,
            });
        }
        Ok(OrderStream::new(orders))
    }

    pub fn load(path: &Path) -> Result<OrderStream> {
        OrderStream::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Per-hour-of-week arrival intensities (orders per hour) and SKU mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalProfile {
    pub delivery: Vec<f64>,
    pub retrieval: Vec<f64>,
    pub skus: usize,
    pub zipf_s: f64,
}

/// Knobs for the default profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub weeks: usize,
    /// Orders per week before scaling.
    pub weekly_orders: f64,
    /// Share of retrievals among all orders.
    pub retrieval_share: f64,
    /// Multiplies all intensities.
    pub scale: f64,
    pub skus: usize,
    pub zipf_s: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            weeks: 1,
            weekly_orders: REFERENCE_WEEKLY_ORDERS,
            retrieval_share: 0.5,
            scale: 1.0,
            skus: 20,
            zipf_s: 1.0,
        }
    }
}

/// Outbound trucks are served from 06:00 to 22:00.
pub fn outbound_open(hour_of_day: usize) -> bool {
    (6..22).contains(&hour_of_day)
}

impl ArrivalProfile {
    pub fn zero(skus: usize) -> Self {
        Self {
            delivery: vec![0.0; HOURS_PER_WEEK],
            retrieval: vec![0.0; HOURS_PER_WEEK],
            skus,
            zipf_s: 1.0,
        }
    }

    /// Uniform deliveries; bimodal retrievals inside outbound hours.
    pub fn from_config(cfg: &GeneratorConfig) -> Self {
        let total = cfg.weekly_orders * cfg.scale;
        let deliveries = total * (1.0 - cfg.retrieval_share);
        let retrievals = total * cfg.retrieval_share;
        let shape = |h: usize| {
            if !outbound_open(h) {
                return 0.0;
            }
            let x = h as f64 + 0.5;
            let bump = |mu: f64| (-((x - mu) / 2.5).powi(2)).exp();
            0.3 + bump(10.0) + bump(17.0)
        };
        let day_weight: f64 = (0..24).map(shape).sum();
        let delivery = vec![deliveries / HOURS_PER_WEEK as f64; HOURS_PER_WEEK];
        let retrieval = (0..HOURS_PER_WEEK)
            .map(|h| retrievals / 7.0 * shape(h % 24) / day_weight)
            .collect();
        Self {
            delivery,
            retrieval,
            skus: cfg.skus,
            zipf_s: cfg.zipf_s,
        }
    }

    pub fn weekly_totals(&self) -> (f64, f64) {
        (self.delivery.iter().sum(), self.retrieval.iter().sum())
    }

    fn validate(&self) -> Result<()> {
        if self.delivery.len() != HOURS_PER_WEEK || self.retrieval.len() != HOURS_PER_WEEK {
            return Err(Error::InfeasibleProfile(
                "profile needs 168 hourly intensities".into(),
            ));
        }
        if self
            .delivery
            .iter()
            .chain(&self.retrieval)
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::InfeasibleProfile(
                "intensities must be finite and >= 0".into(),
            ));
        }
        if self.skus == 0 {
            return Err(Error::InfeasibleProfile("need at least one sku".into()));
        }
        Ok(())
    }

    pub fn zipf_weights(&self) -> Vec<f64> {
        (0..self.skus)
            .map(|k| 1.0 / ((k + 1) as f64).powf(self.zipf_s))
            .collect()
    }
}

/// Splits `total` pallets over SKUs by Zipf weight (largest remainder).
pub fn zipf_fill(total: usize, skus: usize, zipf_s: f64) -> Vec<(Sku, usize)> {
    let w: Vec<f64> = (0..skus)
        .map(|k| 1.0 / ((k + 1) as f64).powf(zipf_s))
        .collect();
    let sum: f64 = w.iter().sum();
    let mut counts: Vec<usize> = w
        .iter()
        .map(|x| (x / sum * total as f64).floor() as usize)
        .collect();
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..skus).collect();
    order.sort_by(|&a, &b| {
        let ra = w[a] / sum * total as f64 - counts[a] as f64;
        let rb = w[b] / sum * total as f64 - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[k] += 1;
        rest -= 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (k as Sku, c))
        .collect()
}

/// Draws `weeks` weeks of orders.
///
/// `initial_stock` is the pallet count per SKU at time zero; retrievals are
/// thinned away whenever the stream's own running stock has nothing left.
pub fn generate(
    profile: &ArrivalProfile,
    weeks: usize,
    seed: u64,
    initial_stock: &[usize],
    input_docks: &[usize],
    output_docks: &[usize],
) -> Result<OrderStream> {
    profile.validate()?;
    let (d_week, r_week) = profile.weekly_totals();
    let initial: usize = initial_stock.iter().sum();
    if r_week * weeks as f64 > initial as f64 + d_week * weeks as f64 {
        return Err(Error::InfeasibleProfile(format!(
            "expected retrievals {:.0} exceed initial stock {} plus deliveries {:.0}",
            r_week * weeks as f64,
            initial,
            d_week * weeks as f64
        )));
    }
    if (d_week > 0.0 && input_docks.is_empty()) || (r_week > 0.0 && output_docks.is_empty()) {
        return Err(Error::InfeasibleProfile(
            "no dock for an order kind with positive intensity".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = profile.zipf_weights();
    let sku_dist =
        WeightedIndex::new(&weights).map_err(|e| Error::InfeasibleProfile(e.to_string()))?;
    let mut stock: Vec<usize> = (0..profile.skus)
        .map(|k| initial_stock.get(k).copied().unwrap_or(0))
        .collect();

    let mut orders = Vec::new();
    let mut bucket: Vec<(f64, OrderKind)> = Vec::new();
    for w in 0..weeks {
        for h in 0..HOURS_PER_WEEK {
            let start = w as f64 * WEEK_S + h as f64 * HOUR_S;
            bucket.clear();
            for (kind, rate) in [
                (OrderKind::Delivery, profile.delivery[h]),
                (OrderKind::Retrieval, profile.retrieval[h]),
            ] {
                if rate <= 0.0 {
                    continue;
                }
                let n: f64 = Poisson::new(rate)
                    .map_err(|e| Error::InfeasibleProfile(e.to_string()))?
                    .sample(&mut rng);
                for _ in 0..n as usize {
                    bucket.push((start + rng.random::<f64>() * HOUR_S, kind));
                }
            }
            bucket.sort_by(|a, b| a.0.total_cmp(&b.0));
            for &(t, kind) in &bucket {
                let (sku, dock) = match kind {
                    OrderKind::Delivery => {
                        let sku = sku_dist.sample(&mut rng);
                        stock[sku] += 1;
                        (sku, input_docks[rng.random_range(0..input_docks.len())])
                    }
                    OrderKind::Retrieval => {
                        let avail: Vec<f64> = weights
                            .iter()
                            .zip(&stock)
                            .map(|(w, &s)| if s > 0 { *w } else { 0.0 })
                            .collect();
                        let Ok(d) = WeightedIndex::new(&avail) else {
                            continue;
                        };
                        let sku = d.sample(&mut rng);
                        stock[sku] -= 1;
                        (sku, output_docks[rng.random_range(0..output_docks.len())])
                    }
                };
                orders.push(OrderSpec {
                    arrival_s: t,
                    kind,
                    sku: sku as Sku,
                    dock,
                });
            }
        }
    }
    Ok(OrderStream {
        orders,
        horizon_days: weeks as f64 * 7.0,
        seed: Some(seed),
    })
}

/// Parses an initial fill file with `sku,count` rows (optional header).
pub fn parse_fill(text: &str) -> Result<Vec<(Sku, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let row = raw.trim();
        if row.is_empty() || row.starts_with('#') || (i == 0 && row == "sku,count") {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        let (s, c) = row
            .split_once(',')
            .ok_or_else(|| err("expected sku,count"))?;
        out.push((
            s.trim().parse().map_err(|_| err("bad sku"))?,
            c.trim().parse().map_err(|_| err("bad count"))?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const IN: [usize; 4] = [0, 1, 2, 3];
    const OUT: [usize; 10] = [4, 5, 6, 7, 8, 9, 10, 11, 12, 13];

    fn week(seed: u64) -> OrderStream {
        let cfg = GeneratorConfig::default();
        let p = ArrivalProfile::from_config(&cfg);
        let fill: Vec<usize> = zipf_fill(5000, cfg.skus, 1.0)
            .into_iter()
            .map(|(_, c)| c)
            .collect();
        generate(&p, 1, seed, &fill, &IN, &OUT).unwrap()
    }

    #[test]
    fn no_retrievals_outside_outbound_hours() {
        let s = week(3);
        for o in s.orders.iter().filter(|o| o.kind == OrderKind::Retrieval) {
            let hour = ((o.arrival_s % DAY_S) / HOUR_S).floor() as usize;
            assert!(outbound_open(hour), "retrieval at {}", o.arrival_s);
        }
        assert!(s.orders.iter().any(|o| o.kind == OrderKind::Delivery
            && !outbound_open(((o.arrival_s % DAY_S) / HOUR_S) as usize)));
    }

    #[test]
    fn zero_intensity_gives_empty_stream() {
        let p = ArrivalProfile::zero(5);
        let s = generate(&p, 2, 1, &[], &IN, &OUT).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn weekly_volume_matches_reference() {
        let s = week(11);
        let target = 400_000.0 / 89.0 * 7.0;
        let n = s.len() as f64;
        assert!((n - target).abs() / target < 0.10, "{n} orders");
    }

    #[test]
    fn deterministic_for_seed() {
        assert_eq!(week(5), week(5));
        assert_ne!(week(5).orders, week(6).orders);
    }

    #[test]
    fn infeasible_profile_rejected() {
        let mut p = ArrivalProfile::zero(3);
        p.retrieval[10] = 50.0;
        assert!(matches!(
            generate(&p, 1, 0, &[10, 0, 0], &IN, &OUT),
            Err(Error::InfeasibleProfile(_))
        ));
    }

    #[test]
    fn stock_never_negative() {
        let s = week(9);
        let cfg = GeneratorConfig::default();
        let mut stock: Vec<i64> = zipf_fill(5000, cfg.skus, 1.0)
            .into_iter()
            .map(|(_, c)| c as i64)
            .collect();
        for o in &s.orders {
            let d = if o.kind == OrderKind::Delivery { 1 } else { -1 };
            stock[o.sku as usize] += d;
            assert!(stock[o.sku as usize] >= 0);
        }
    }

    #[test]
    fn docks_match_kind() {
        let s = week(2);
        s.validate(&IN, &OUT).unwrap();
    }

    #[test]
    fn csv_roundtrip() {
        let s = week(4);
        let back = OrderStream::from_csv(&s.to_csv()).unwrap();
        assert_eq!(back.orders, s.orders);
    }

    #[test]
    fn header_only_file_is_empty() {
        let s = OrderStream::from_csv("arrival_s,kind,sku,dock\n").unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn bad_rows_report_line() {
        let text = "arrival_s,kind,sku,dock\n1.5,D,0,0\n-3,R,1,4\n";
        match OrderStream::from_csv(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "arrival_s,kind,sku,dock\n1.5,X,0,0\n";
        assert!(matches!(
            OrderStream::from_csv(text),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(OrderStream::from_csv("a,b\n").is_err());
    }

    #[test]
    fn zipf_fill_sums() {
        let f = zipf_fill(1001, 7, 1.0);
        assert_eq!(f.iter().map(|(_, c)| c).sum::<usize>(), 1001);
        assert!(f[0].1 > f[6].1);
    }

    #[test]
    fn fill_file() {
        let f = parse_fill("sku,count\n0,10\n3, 4\n").unwrap();
        assert_eq!(f, vec![(0, 10), (3, 4)]);
        assert!(parse_fill("0;1\n").is_err());
    }
}
