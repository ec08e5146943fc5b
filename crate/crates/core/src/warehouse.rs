//! Operational warehouse state and the fixed sub-problem heuristics:
//! closest-open-pure-lane storage assignment, LIFO unit-load selection and
//! nearest-vehicle dispatching.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::battery::ChargingStation;
use crate::error::{Error, Result};
use crate::layout::{Layout, Place};

pub type Sku = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrderKind {
    #[serde(rename = "D")]
    Delivery,
    #[serde(rename = "R")]
    Retrieval,
}

impl OrderKind {
    pub fn code(self) -> char {
        match self {
            OrderKind::Delivery => 'D',
            OrderKind::Retrieval => 'R',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Order {
    pub id: u64,
    pub kind: OrderKind,
    pub sku: Sku,
    pub arrival_time: f64,
    pub dock: usize,
    pub completion_time: Option<f64>,
    /// Travel time of the service trip (approach plus loaded leg).
    pub travel_time: f64,
    pub travel_distance: f64,
    /// Lane the pallet goes to or comes from, once decided.
    pub lane: Option<usize>,
    pub pallet: Option<Pallet>,
}

impl Order {
    pub fn new(id: u64, kind: OrderKind, sku: Sku, arrival_time: f64, dock: usize) -> Self {
        Self {
            id,
            kind,
            sku,
            arrival_time,
            dock,
            completion_time: None,
            travel_time: 0.0,
            travel_distance: 0.0,
            lane: None,
            pallet: None,
        }
    }

    pub fn service_time(&self) -> Option<f64> {
        self.completion_time.map(|c| c - self.arrival_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmrStatus {
    Free,
    Busy,
    TravellingToStation,
    QueuedAtStation,
    Charging,
    Depleted,
}

/// What a busy AMR is doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Order(u64),
    /// Finished a task and waits for a charging decision.
    Decision,
    Charge {
        station: usize,
        target_pct: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Amr {
    pub id: usize,
    pub place: Place,
    pub battery_ah: f64,
    pub status: AmrStatus,
    pub task: Option<Task>,
    pub odometer_m: f64,
    pub initial_ah: f64,
    pub drawn_ah: f64,
    pub charged_ah: f64,
}

impl Amr {
    pub fn new(id: usize, place: Place, battery_ah: f64) -> Self {
        Self {
            id,
            place,
            battery_ah,
            status: AmrStatus::Free,
            task: None,
            odometer_m: 0.0,
            initial_ah: battery_ah,
            drawn_ah: 0.0,
            charged_ah: 0.0,
        }
    }

    /// Residual of `final = initial - drawn + charged`.
    pub fn ledger_error(&self) -> f64 {
        (self.initial_ah - self.drawn_ah + self.charged_ah - self.battery_ah).abs()
    }
}

/// Pending (not yet dispatched) orders per kind with their caps.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderQueues {
    pub retrieval: VecDeque<u64>,
    pub delivery: VecDeque<u64>,
    pub retrieval_cap: usize,
    pub delivery_cap: usize,
    /// Times at which a cap was exceeded.
    pub violation_log: Vec<f64>,
}

impl OrderQueues {
    pub fn new(retrieval_cap: usize, delivery_cap: usize) -> Self {
        Self {
            retrieval: VecDeque::new(),
            delivery: VecDeque::new(),
            retrieval_cap,
            delivery_cap,
            violation_log: Vec::new(),
        }
    }

    pub fn push(&mut self, kind: OrderKind, id: u64) {
        match kind {
            OrderKind::Delivery => self.delivery.push_back(id),
            OrderKind::Retrieval => self.retrieval.push_back(id),
        }
    }

    pub fn is_violated(&self) -> bool {
        self.retrieval.len() > self.retrieval_cap || self.delivery.len() > self.delivery_cap
    }

    /// Logs a violation at `now` if a cap is currently exceeded.
    pub fn check_caps(&mut self, now: f64) -> bool {
        let v = self.is_violated();
        if v {
            self.violation_log.push(now);
        }
        v
    }

    pub fn total(&self) -> usize {
        self.retrieval.len() + self.delivery.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pallet {
    pub id: u64,
    pub sku: Sku,
    /// When the pallet arrived at the warehouse.
    pub arrival: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LaneStock {
    /// Bottom first; the last element faces the aisle.
    pub stack: Vec<Pallet>,
    /// Slots reserved by deliveries on their way.
    pub incoming: usize,
    /// SKU counts over stored and incoming pallets.
    committed: Vec<(Sku, usize)>,
    /// SKU counts over stored pallets.
    stored: Vec<(Sku, usize)>,
    entropy: f64,
}

fn bump(counts: &mut Vec<(Sku, usize)>, sku: Sku, up: bool) {
    match counts.iter().position(|(s, _)| *s == sku) {
        Some(i) if up => counts[i].1 += 1,
        Some(i) => {
            counts[i].1 -= 1;
            if counts[i].1 == 0 {
                counts.swap_remove(i);
            }
        }
        None if up => counts.push((sku, 1)),
        None => panic!("sku {sku} not counted"),
    }
}

impl LaneStock {
    pub fn top(&self) -> Option<&Pallet> {
        self.stack.last()
    }

    pub fn is_empty(&self) -> bool {
        self.committed.is_empty()
    }

    /// Holds (or expects) only pallets of `sku`.
    pub fn is_pure(&self, sku: Sku) -> bool {
        self.committed.len() == 1 && self.committed[0].0 == sku
    }

    pub fn used(&self) -> usize {
        self.stack.len() + self.incoming
    }

    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    fn refresh_entropy(&mut self) {
        let n: usize = self.stored.iter().map(|(_, c)| c).sum();
        self.entropy = if n == 0 {
            0.0
        } else {
            let n = n as f64;
            -self
                .stored
                .iter()
                .map(|&(_, c)| {
                    let p = c as f64 / n;
                    p * p.ln()
                })
                .sum::<f64>()
        };
    }
}

/// Stored pallets per lane plus the aggregate counters the features need.
#[derive(Debug, Clone, PartialEq)]
pub struct Inventory {
    pub lanes: Vec<LaneStock>,
    capacities: Vec<usize>,
    /// Occupied storage locations.
    pub occupied: usize,
    /// Total storage locations.
    pub total: usize,
    /// Deliveries dispatched but not yet assigned a lane.
    pub unassigned: usize,
    incoming: usize,
    /// Pallets per SKU currently stored.
    pub stock: Vec<usize>,
    /// Lanes whose aisle-end pallet has the SKU.
    accessible: Vec<usize>,
    entropy_sum: f64,
    next_pallet: u64,
}

impl Inventory {
    pub fn new(layout: &Layout, n_skus: usize) -> Self {
        let capacities: Vec<usize> = layout.lanes.iter().map(|l| l.capacity).collect();
        Self {
            lanes: vec![LaneStock::default(); capacities.len()],
            total: capacities.iter().sum(),
            capacities,
            occupied: 0,
            unassigned: 0,
            incoming: 0,
            stock: vec![0; n_skus],
            accessible: vec![0; n_skus],
            entropy_sum: 0.0,
            next_pallet: 0,
        }
    }

    pub fn n_skus(&self) -> usize {
        self.stock.len()
    }

    /// Storage locations neither occupied nor promised to a delivery.
    pub fn free_slots(&self) -> usize {
        self.total - self.occupied - self.incoming - self.unassigned
    }

    pub fn is_full(&self) -> bool {
        self.free_slots() == 0
    }

    pub fn fill_level(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.occupied as f64 / self.total as f64
        }
    }

    pub fn mean_entropy(&self) -> f64 {
        if self.lanes.is_empty() {
            0.0
        } else {
            (self.entropy_sum / self.lanes.len() as f64).max(0.0)
        }
    }

    /// True if some lane offers `sku` at its aisle end.
    pub fn is_accessible(&self, sku: Sku) -> bool {
        self.accessible.get(sku as usize).copied().unwrap_or(0) > 0
    }

    pub fn new_pallet(&mut self, sku: Sku, arrival: f64) -> Pallet {
        let p = Pallet {
            id: self.next_pallet,
            sku,
            arrival,
        };
        self.next_pallet += 1;
        p
    }

    fn ensure_sku(&mut self, sku: Sku) {
        let need = sku as usize + 1;
        if self.stock.len() < need {
            self.stock.resize(need, 0);
            self.accessible.resize(need, 0);
        }
    }

    /// Closest lane holding only `sku` with room left; otherwise the closest
    /// empty lane; otherwise the closest lane with any room. Distance is
    /// measured from `from` (the delivery's input dock); ties go to the lower id.
    pub fn slap_assign(&self, sku: Sku, from: Place, layout: &Layout) -> Result<usize> {
        let mut best: [Option<(f64, usize)>; 3] = [None; 3];
        for (id, lane) in self.lanes.iter().enumerate() {
            if lane.used() >= self.capacities[id] {
                continue;
            }
            let tier = if lane.is_pure(sku) {
                0
            } else if lane.is_empty() {
                1
            } else {
                2
            };
            let d = layout.distance(from, Place::Lane(id));
            let slot = &mut best[tier];
            if slot.is_none_or(|(bd, _)| d < bd) {
                *slot = Some((d, id));
            }
        }
        best.iter()
            .flatten()
            .next()
            .map(|&(_, id)| id)
            .ok_or(Error::WarehouseFull)
    }

    /// Promises a slot in `lane` to an incoming pallet of `sku`.
    pub fn reserve(&mut self, lane: usize, sku: Sku) {
        self.ensure_sku(sku);
        let l = &mut self.lanes[lane];
        assert!(
            l.used() < self.capacities[lane],
            "lane {lane} over capacity"
        );
        l.incoming += 1;
        bump(&mut l.committed, sku, true);
        self.incoming += 1;
    }

    /// Puts a pallet on top of `lane`. With `reserved` the slot was promised earlier.
    pub fn place(&mut self, lane: usize, pallet: Pallet, reserved: bool) {
        self.ensure_sku(pallet.sku);
        let l = &mut self.lanes[lane];
        if reserved {
            assert!(l.incoming > 0, "no reservation on lane {lane}");
            l.incoming -= 1;
            self.incoming -= 1;
        } else {
            assert!(
                l.used() < self.capacities[lane],
                "lane {lane} over capacity"
            );
            bump(&mut l.committed, pallet.sku, true);
        }
        if let Some(top) = l.stack.last() {
            self.accessible[top.sku as usize] -= 1;
        }
        l.stack.push(pallet);
        self.accessible[pallet.sku as usize] += 1;
        bump(&mut l.stored, pallet.sku, true);
        self.entropy_sum -= l.entropy;
        l.refresh_entropy();
        self.entropy_sum += l.entropy;
        self.occupied += 1;
        self.stock[pallet.sku as usize] += 1;
    }

    /// Among aisle-end pallets of `sku`, the one that arrived last
    /// (ties by pallet id). Returns its lane.
    pub fn ulsp_select(&self, sku: Sku) -> Result<usize> {
        if !self.is_accessible(sku) {
            return Err(Error::OutOfStock(sku));
        }
        self.lanes
            .iter()
            .enumerate()
            .filter_map(|(id, l)| l.top().filter(|p| p.sku == sku).map(|p| (id, p)))
            .max_by(|(_, a), (_, b)| a.arrival.total_cmp(&b.arrival).then(a.id.cmp(&b.id)))
            .map(|(id, _)| id)
            .ok_or(Error::OutOfStock(sku))
    }

    /// Removes the aisle-end pallet of `lane`.
    pub fn take(&mut self, lane: usize) -> Pallet {
        let l = &mut self.lanes[lane];
        let p = l.stack.pop().expect("take from empty lane");
        self.accessible[p.sku as usize] -= 1;
        if let Some(top) = l.stack.last() {
            self.accessible[top.sku as usize] += 1;
        }
        bump(&mut l.committed, p.sku, false);
        bump(&mut l.stored, p.sku, false);
        self.entropy_sum -= l.entropy;
        l.refresh_entropy();
        self.entropy_sum += l.entropy;
        self.occupied -= 1;
        self.stock[p.sku as usize] -= 1;
        p
    }
}

/// Free AMR nearest to `target`; ties go to the lower id.
pub fn dispatch(amrs: &[Amr], target: Place, layout: &Layout) -> Option<usize> {
    amrs.iter()
        .filter(|a| a.status == AmrStatus::Free)
        .map(|a| (layout.distance(a.place, target), a.id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

/// Running service-time statistics over completed orders.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServiceStats {
    pub completed: u64,
    pub service_time_sum: f64,
    pub retrieval: TripStats,
    pub delivery: TripStats,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripStats {
    pub count: u64,
    pub time_sum: f64,
    pub distance_sum: f64,
}

impl TripStats {
    pub fn mean_time(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.time_sum / self.count as f64
        }
    }

    pub fn mean_distance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.distance_sum / self.count as f64
        }
    }
}

impl ServiceStats {
    pub fn avg_service_time(&self) -> f64 {
        if self.completed == 0 {
            0.0
        } else {
            self.service_time_sum / self.completed as f64
        }
    }
}

/// Marks `order` complete at `now` and folds it into `stats`.
pub fn record_completion(order: &mut Order, now: f64, stats: &mut ServiceStats) -> Result<f64> {
    if order.completion_time.is_some() {
        return Err(Error::DoubleCompletion(order.id));
    }
    order.completion_time = Some(now);
    let st = now - order.arrival_time;
    stats.completed += 1;
    stats.service_time_sum += st;
    let trips = match order.kind {
        OrderKind::Retrieval => &mut stats.retrieval,
        OrderKind::Delivery => &mut stats.delivery,
    };
    trips.count += 1;
    trips.time_sum += order.travel_time;
    trips.distance_sum += order.travel_distance;
    Ok(st)
}

/// Everything the event handlers mutate.
#[derive(Debug, Clone)]
pub struct WarehouseState {
    /// Orders that have arrived so far, indexed by id.
    pub orders: Vec<Order>,
    pub amrs: Vec<Amr>,
    pub queues: OrderQueues,
    pub inventory: Inventory,
    pub stations: Vec<ChargingStation>,
    pub stats: ServiceStats,
}

impl WarehouseState {
    pub fn count_status(&self, status: AmrStatus) -> usize {
        self.amrs.iter().filter(|a| a.status == status).count()
    }

    pub fn free_amrs(&self) -> usize {
        self.count_status(AmrStatus::Free)
    }

    pub fn in_service(&self) -> usize {
        self.orders
            .iter()
            .filter(|o| o.completion_time.is_none())
            .count()
            - self.queues.total()
    }

    pub fn fleet_ah(&self) -> f64 {
        self.amrs.iter().map(|a| a.battery_ah).sum()
    }

    pub fn available_stations(&self) -> usize {
        self.stations.iter().filter(|s| s.is_available()).count()
    }
}
