use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::event::{EventKind, EventQueue, Payload, SimEvent};
use crate::battery::{select_station, ActionSpace, BatteryModel, ChargeTarget, ChargingStation};
use crate::error::{Error, Result};
use crate::layout::{DockKind, Layout, Place};
use crate::metrics::EpisodeMetrics;
use crate::orders::OrderStream;
use crate::rlenv::action_mask;
use crate::strategies::interrupt_scan;
use crate::warehouse::{
    dispatch, record_completion, Amr, AmrStatus, Inventory, Order, OrderKind, OrderQueues,
    ServiceStats, Sku, Task, WarehouseState,
};

/// Fleet, battery and rule parameters of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub amrs: usize,
    /// Pallet pick or drop time.
    pub handling_s: f64,
    pub battery: BatteryModel,
    pub retrieval_cap: usize,
    pub delivery_cap: usize,
    pub initial_battery_pct: f64,
    pub action_space: ActionSpace,
    pub interrupt: bool,
    pub interrupt_pct: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            amrs: 40,
            handling_s: 10.0,
            battery: BatteryModel::default(),
            retrieval_cap: 330,
            delivery_cap: 240,
            initial_battery_pct: 100.0,
            action_space: ActionSpace::Full,
            interrupt: false,
            interrupt_pct: 50.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.amrs == 0 {
            return Err(Error::Config("fleet.amrs must be at least 1".into()));
        }
        if !(self.handling_s >= 0.0 && self.handling_s.is_finite()) {
            return Err(Error::Config("handling_s must be finite and >= 0".into()));
        }
        if !(0.0..=100.0).contains(&self.initial_battery_pct) {
            return Err(Error::Config(
                "initial_battery_pct must be in [0, 100]".into(),
            ));
        }
        self.battery.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionKind {
    Charging,
}

/// The simulation is paused until this decision is answered.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRequest {
    pub kind: DecisionKind,
    pub amr: usize,
    pub time: f64,
    pub battery_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Decision(DecisionRequest),
    End,
}

#[derive(Debug, Clone, Default)]
struct Accum {
    last_t: f64,
    qr: usize,
    fleet_ah: f64,
    qr_integral: f64,
    fleet_integral: f64,
    max_qr: usize,
    interruptions: u64,
    stranded: u64,
    decisions: u64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    layout: Arc<Layout>,
    cfg: SimConfig,
    stream: Arc<OrderStream>,
    next_arrival: usize,
    queue: EventQueue,
    state: WarehouseState,
    pending: Option<DecisionRequest>,
    next_session: u64,
    acc: Accum,
    trace: Option<Vec<String>>,
    line: String,
    ended: bool,
}

impl Simulation {
    /// Builds the initial state: AMRs parked round-robin at the docks with the
    /// configured charge, and the initial fill stored through the regular
    /// storage-assignment rule from the first input dock.
    pub fn new(
        layout: Arc<Layout>,
        cfg: SimConfig,
        stream: Arc<OrderStream>,
        initial_fill: &[(Sku, usize)],
    ) -> Result<Self> {
        cfg.validate()?;
        let inputs: Vec<usize> = layout.input_docks().map(|d| d.id).collect();
        let outputs: Vec<usize> = layout.output_docks().map(|d| d.id).collect();
        stream.validate(&inputs, &outputs)?;
        let Some(&fill_dock) = inputs.first() else {
            return Err(Error::Layout("layout has no input dock".into()));
        };

        let n_skus = initial_fill
            .iter()
            .map(|(s, _)| *s as usize + 1)
            .chain(stream.orders.iter().map(|o| o.sku as usize + 1))
            .max()
            .unwrap_or(1);
        let mut inventory = Inventory::new(&layout, n_skus);
        for &(sku, count) in initial_fill {
            for _ in 0..count {
                let lane = inventory
                    .slap_assign(sku, Place::Dock(fill_dock), &layout)
                    .map_err(|_| Error::Config("initial fill exceeds warehouse capacity".into()))?;
                let p = inventory.new_pallet(sku, 0.0);
                inventory.place(lane, p, false);
            }
        }

        let level = cfg.battery.ah(cfg.initial_battery_pct);
        let amrs = (0..cfg.amrs)
            .map(|j| Amr::new(j, Place::Dock(j % layout.docks.len()), level))
            .collect();
        let stations = (0..layout.stations.len())
            .map(|i| ChargingStation::new(i, Place::Station(i)))
            .collect();
        let state = WarehouseState {
            orders: Vec::with_capacity(stream.len()),
            amrs,
            queues: OrderQueues::new(cfg.retrieval_cap, cfg.delivery_cap),
            inventory,
            stations,
            stats: ServiceStats::default(),
        };

        let mut sim = Simulation {
            layout,
            cfg,
            stream,
            next_arrival: 0,
            queue: EventQueue::new(),
            state,
            pending: None,
            next_session: 0,
            acc: Accum::default(),
            trace: None,
            line: String::new(),
            ended: false,
        };
        sim.acc.fleet_ah = sim.state.fleet_ah();
        sim.schedule_next_arrival()?;
        Ok(sim)
    }

    /// Records one line per processed event from now on.
    pub fn enable_trace(&mut self) {
        if self.trace.is_none() {
            self.trace = Some(vec![format!(
                "# amrs={} capacity_ah={} fleet_ah={} retrieval_cap={} delivery_cap={}",
                self.cfg.amrs,
                self.cfg.battery.capacity_ah,
                self.acc.fleet_ah,
                self.cfg.retrieval_cap,
                self.cfg.delivery_cap
            )]);
        }
    }

    pub fn take_trace(&mut self) -> Vec<String> {
        self.trace.take().unwrap_or_default()
    }

    pub fn trace(&self) -> Option<&[String]> {
        self.trace.as_deref()
    }

    pub fn state(&self) -> &WarehouseState {
        &self.state
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn clock(&self) -> f64 {
        self.queue.clock()
    }

    pub fn pending(&self) -> Option<&DecisionRequest> {
        self.pending.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.ended
    }

    pub fn arrived(&self) -> usize {
        self.state.orders.len()
    }

    pub fn stream_len(&self) -> usize {
        self.stream.len()
    }

    pub fn battery_pct(&self, amr: usize) -> f64 {
        self.cfg.battery.pct(self.state.amrs[amr].battery_ah)
    }

    fn schedule_next_arrival(&mut self) -> Result<()> {
        if let Some(o) = self.stream.orders.get(self.next_arrival) {
            self.queue.schedule(
                o.arrival_s,
                EventKind::OrderArrival,
                Payload::order(self.next_arrival as u64),
            )?;
            self.next_arrival += 1;
        }
        Ok(())
    }

    /// Processes events until an AMR needs a charging decision or nothing is left.
    pub fn run_until_decision(&mut self) -> Result<Step> {
        loop {
            if let Some(step) = self.step_event()? {
                return Ok(step);
            }
        }
    }

    /// Processes at most one event. Returns the step reached, or `None` when
    /// the simulation can continue without a decision.
    pub fn step_event(&mut self) -> Result<Option<Step>> {
        if let Some(req) = &self.pending {
            return Ok(Some(Step::Decision(req.clone())));
        }
        if self.ended {
            return Ok(Some(Step::End));
        }
        let Some(ev) = self.queue.pop() else {
            self.ended = true;
            return Ok(Some(Step::End));
        };
        if self.is_stale(&ev) {
            return Ok(None);
        }
        self.integrate(ev.time);
        if self.trace.is_some() {
            self.line.clear();
            write!(self.line, "{}\t{}\t", ev.time, ev.kind).unwrap();
        }
        if ev.kind == EventKind::DecisionRequest {
            let amr = ev.payload.amr.expect("decision names an amr");
            let req = DecisionRequest {
                kind: DecisionKind::Charging,
                amr,
                time: ev.time,
                battery_pct: self.battery_pct(amr),
            };
            self.pending = Some(req.clone());
            return Ok(Some(Step::Decision(req)));
        }
        self.handle(&ev)?;
        self.dispatch()?;
        if ev.kind == EventKind::OrderArrival {
            self.state.queues.check_caps(ev.time);
        }
        self.finish_event();
        Ok(None)
    }

    /// Mask of the pending decision over the active action space.
    pub fn pending_mask(&self) -> Option<Vec<bool>> {
        self.pending
            .as_ref()
            .map(|r| action_mask(r.battery_pct, self.cfg.action_space))
    }

    /// Answers the pending decision. `0` frees the AMR; any other target
    /// sends it to a charging station.
    pub fn resume_with(&mut self, action: ChargeTarget) -> Result<()> {
        let req = self.pending.clone().ok_or(Error::NoPendingDecision)?;
        let allowed = self
            .cfg
            .action_space
            .index_of(action)
            .is_some_and(|i| action_mask(req.battery_pct, self.cfg.action_space)[i]);
        if !allowed {
            return Err(Error::MaskedAction {
                action: action.0,
                battery_pct: req.battery_pct,
            });
        }
        self.pending = None;
        self.acc.decisions += 1;
        let now = self.clock();
        let amr = req.amr;
        self.note(format_args!(
            "amr={amr} bat={} action={}",
            req.battery_pct, action.0
        ));
        if !action.is_charge() {
            let a = &mut self.state.amrs[amr];
            a.status = AmrStatus::Free;
            a.task = None;
        } else {
            let from = self.state.amrs[amr].place;
            let layout = &self.layout;
            let station = select_station(&self.state.stations, |p| layout.distance(from, p));
            self.note(format_args!(" station={station}"));
            self.state.stations[station].inbound += 1;
            let a = &mut self.state.amrs[amr];
            a.status = AmrStatus::TravellingToStation;
            a.task = Some(Task::Charge {
                station,
                target_pct: action.0,
            });
            match self.start_leg(amr, Place::Station(station), false, None) {
                Some(t) => {
                    self.queue.schedule(
                        now + t,
                        EventKind::AmrArrivedAtStation,
                        Payload::charge(amr, station, 0),
                    )?;
                }
                None => self.state.stations[station].inbound -= 1,
            }
        }
        self.dispatch()?;
        self.finish_event();
        Ok(())
    }

    fn is_stale(&self, ev: &SimEvent) -> bool {
        match ev.kind {
            EventKind::ChargeComplete | EventKind::ChargeInterrupted => {
                let s = ev.payload.station.expect("charge event names a station");
                !self.state.stations[s]
                    .occupant
                    .as_ref()
                    .is_some_and(|o| o.session == ev.payload.session)
            }
            _ => false,
        }
    }

    fn integrate(&mut self, t: f64) {
        let dt = t - self.acc.last_t;
        self.acc.qr_integral += self.acc.qr as f64 * dt;
        self.acc.fleet_integral += self.acc.fleet_ah * dt;
        self.acc.last_t = t;
    }

    fn finish_event(&mut self) {
        self.acc.qr = self.state.queues.retrieval.len();
        self.acc.fleet_ah = self.state.fleet_ah();
        self.acc.max_qr = self.acc.max_qr.max(self.acc.qr);
        if let Some(trace) = &mut self.trace {
            write!(
                self.line,
                " qr={} qd={} fleet_ah={}",
                self.acc.qr,
                self.state.queues.delivery.len(),
                self.acc.fleet_ah
            )
            .unwrap();
            trace.push(std::mem::take(&mut self.line));
        }
    }

    fn note(&mut self, args: std::fmt::Arguments<'_>) {
        if self.trace.is_some() {
            self.line.write_fmt(args).unwrap();
        }
    }

    /// Moves `amr` to `to`, draining its battery. Returns the travel time, or
    /// `None` if the battery ran dry on the way and the AMR is stranded.
    fn start_leg(
        &mut self,
        amr: usize,
        to: Place,
        loaded: bool,
        order: Option<u64>,
    ) -> Option<f64> {
        let from = self.state.amrs[amr].place;
        let d = self.layout.distance(from, to);
        let t = self.layout.travel_time(d);
        let drain = self
            .cfg
            .battery
            .consume(self.state.amrs[amr].battery_ah, t, loaded);
        let moved = d * drain.completed;
        let a = &mut self.state.amrs[amr];
        a.battery_ah = drain.level_ah;
        a.drawn_ah += drain.drawn_ah;
        a.odometer_m += moved;
        self.note(format_args!(" leg={amr}:{moved}"));
        if drain.depleted {
            let a = &mut self.state.amrs[amr];
            a.status = AmrStatus::Depleted;
            self.acc.stranded += 1;
            self.note(format_args!(" strand={amr}"));
            return None;
        }
        if let Some(id) = order {
            let o = &mut self.state.orders[id as usize];
            o.travel_time += t;
            o.travel_distance += d;
        }
        Some(t)
    }

    fn handle(&mut self, ev: &SimEvent) -> Result<()> {
        let now = ev.time;
        let h = self.cfg.handling_s;
        match ev.kind {
            EventKind::OrderArrival => {
                let id = ev.payload.order.expect("arrival names an order");
                let spec = self.stream.orders[id as usize];
                self.note(format_args!(
                    "order={id} kind={} sku={} dock={}",
                    spec.kind.code(),
                    spec.sku,
                    spec.dock
                ));
                debug_assert_eq!(self.state.orders.len() as u64, id);
                self.state.orders.push(Order::new(
                    id,
                    spec.kind,
                    spec.sku,
                    spec.arrival_s,
                    spec.dock,
                ));
                self.state.queues.push(spec.kind, id);
                self.schedule_next_arrival()?;
            }
            EventKind::AmrArrivedAtDock => {
                let (amr, id) = (ev.payload.amr.unwrap(), ev.payload.order.unwrap());
                let order = self.state.orders[id as usize].clone();
                self.state.amrs[amr].place = Place::Dock(order.dock);
                self.note(format_args!("amr={amr} order={id}"));
                match order.kind {
                    OrderKind::Delivery => {
                        let lane = self.state.inventory.slap_assign(
                            order.sku,
                            Place::Dock(order.dock),
                            &self.layout,
                        )?;
                        self.state.inventory.reserve(lane, order.sku);
                        self.state.inventory.unassigned -= 1;
                        let pallet = self
                            .state
                            .inventory
                            .new_pallet(order.sku, order.arrival_time);
                        let o = &mut self.state.orders[id as usize];
                        o.lane = Some(lane);
                        o.pallet = Some(pallet);
                        self.note(format_args!(" lane={lane}"));
                        if let Some(t) = self.start_leg(amr, Place::Lane(lane), true, Some(id)) {
                            self.queue.schedule(
                                now + h + t,
                                EventKind::AmrArrivedAtLane,
                                Payload::amr_order(amr, id),
                            )?;
                        }
                    }
                    OrderKind::Retrieval => {
                        self.queue.schedule(
                            now + h,
                            EventKind::AmrReleased,
                            Payload::amr_order(amr, id),
                        )?;
                    }
                }
            }
            EventKind::AmrArrivedAtLane => {
                let (amr, id) = (ev.payload.amr.unwrap(), ev.payload.order.unwrap());
                let order = &self.state.orders[id as usize];
                let lane = order.lane.expect("lane decided before arrival");
                let (kind, dock) = (order.kind, order.dock);
                self.state.amrs[amr].place = Place::Lane(lane);
                self.note(format_args!("amr={amr} order={id} lane={lane}"));
                match kind {
                    OrderKind::Delivery => {
                        self.queue.schedule(
                            now + h,
                            EventKind::AmrReleased,
                            Payload::amr_order(amr, id),
                        )?;
                    }
                    OrderKind::Retrieval => {
                        if let Some(t) = self.start_leg(amr, Place::Dock(dock), true, Some(id)) {
                            self.queue.schedule(
                                now + h + t,
                                EventKind::AmrArrivedAtDock,
                                Payload::amr_order(amr, id),
                            )?;
                        }
                    }
                }
            }
            EventKind::AmrReleased => {
                let (amr, id) = (ev.payload.amr.unwrap(), ev.payload.order.unwrap());
                let order = &mut self.state.orders[id as usize];
                if order.kind == OrderKind::Delivery {
                    let (lane, pallet) = (order.lane.unwrap(), order.pallet.unwrap());
                    self.state.inventory.place(lane, pallet, true);
                }
                let order = &mut self.state.orders[id as usize];
                let st = record_completion(order, now, &mut self.state.stats)?;
                self.note(format_args!("amr={amr} order={id} st={st}"));
                let a = &mut self.state.amrs[amr];
                a.task = Some(Task::Decision);
                self.queue
                    .schedule(now, EventKind::DecisionRequest, Payload::amr(amr))?;
            }
            EventKind::AmrArrivedAtStation => {
                let (amr, station) = (ev.payload.amr.unwrap(), ev.payload.station.unwrap());
                let Some(Task::Charge { target_pct, .. }) = self.state.amrs[amr].task else {
                    unreachable!("amr {amr} travels to a station without a charge task");
                };
                let level = self.state.amrs[amr].battery_ah;
                let target_ah = self.cfg.battery.ah(f64::from(target_pct));
                self.state.amrs[amr].place = Place::Station(station);
                let session = self.next_session;
                self.next_session += 1;
                let plugged =
                    self.state.stations[station].arrive(amr, level, target_ah, now, session);
                self.note(format_args!(
                    "amr={amr} station={station} plugged={}",
                    u8::from(plugged.is_some())
                ));
                if plugged.is_some() {
                    self.state.amrs[amr].status = AmrStatus::Charging;
                    self.schedule_charge_complete(amr, station, level, target_pct, session, now)?;
                } else {
                    self.state.amrs[amr].status = AmrStatus::QueuedAtStation;
                }
            }
            EventKind::ChargeComplete | EventKind::ChargeInterrupted => {
                let full = ev.kind == EventKind::ChargeComplete;
                let (amr, station) = (ev.payload.amr.unwrap(), ev.payload.station.unwrap());
                let session = self.next_session;
                let amrs = &self.state.amrs;
                let release = self.state.stations[station].release(
                    amr,
                    now,
                    full,
                    &self.cfg.battery,
                    session,
                    |q| amrs[q].battery_ah,
                )?;
                if !full {
                    self.acc.interruptions += 1;
                }
                let a = &mut self.state.amrs[amr];
                a.battery_ah = release.level_ah;
                a.charged_ah += release.gained_ah;
                a.status = AmrStatus::Free;
                a.task = None;
                self.note(format_args!(
                    "amr={amr} station={station} bat={}",
                    self.cfg.battery.pct(release.level_ah)
                ));
                if let Some(p) = release.promoted {
                    self.next_session += 1;
                    let Some(Task::Charge { target_pct, .. }) = self.state.amrs[p.amr].task else {
                        unreachable!("queued amr without a charge task");
                    };
                    self.state.amrs[p.amr].status = AmrStatus::Charging;
                    self.note(format_args!(" promoted={}", p.amr));
                    self.schedule_charge_complete(
                        p.amr, station, p.start_ah, target_pct, p.session, now,
                    )?;
                }
            }
            EventKind::DecisionRequest => unreachable!("handled by the run loop"),
        }
        Ok(())
    }

    fn schedule_charge_complete(
        &mut self,
        amr: usize,
        station: usize,
        level_ah: f64,
        target_pct: u32,
        session: u64,
        now: f64,
    ) -> Result<()> {
        let current = self.cfg.battery.pct(level_ah);
        let dur = self
            .cfg
            .battery
            .charge_duration(current, f64::from(target_pct))
            .unwrap_or(0.0);
        self.queue.schedule(
            now + dur,
            EventKind::ChargeComplete,
            Payload::charge(amr, station, session),
        )?;
        Ok(())
    }

    /// First pending order (by arrival) that can be served right now.
    fn next_serviceable(&self) -> Option<(OrderKind, usize)> {
        let q = &self.state.queues;
        let inv = &self.state.inventory;
        let orders = &self.state.orders;
        let mut r = q
            .retrieval
            .iter()
            .enumerate()
            .filter(|(_, &id)| inv.is_accessible(orders[id as usize].sku));
        let d = (!inv.is_full())
            .then(|| q.delivery.front().map(|&id| (0usize, id)))
            .flatten();
        match (r.next(), d) {
            (Some((ri, &rid)), Some((di, did))) => {
                if (orders[rid as usize].arrival_time, rid)
                    <= (orders[did as usize].arrival_time, did)
                {
                    Some((OrderKind::Retrieval, ri))
                } else {
                    Some((OrderKind::Delivery, di))
                }
            }
            (Some((ri, _)), None) => Some((OrderKind::Retrieval, ri)),
            (None, Some((di, _))) => Some((OrderKind::Delivery, di)),
            (None, None) => None,
        }
    }

    /// Assigns pending orders to the nearest free AMRs, then checks whether
    /// charging AMRs must be interrupted.
    fn dispatch(&mut self) -> Result<()> {
        let now = self.clock();
        while self.state.amrs.iter().any(|a| a.status == AmrStatus::Free) {
            let Some((kind, pos)) = self.next_serviceable() else {
                break;
            };
            let id = match kind {
                OrderKind::Retrieval => self.state.queues.retrieval.remove(pos),
                OrderKind::Delivery => self.state.queues.delivery.remove(pos),
            }
            .expect("position from scan");
            let target = match kind {
                OrderKind::Delivery => {
                    self.state.inventory.unassigned += 1;
                    Place::Dock(self.state.orders[id as usize].dock)
                }
                OrderKind::Retrieval => {
                    let sku = self.state.orders[id as usize].sku;
                    let lane = self.state.inventory.ulsp_select(sku)?;
                    let pallet = self.state.inventory.take(lane);
                    let o = &mut self.state.orders[id as usize];
                    o.lane = Some(lane);
                    o.pallet = Some(pallet);
                    Place::Lane(lane)
                }
            };
            let amr = dispatch(&self.state.amrs, target, &self.layout).expect("a free amr exists");
            let a = &mut self.state.amrs[amr];
            a.status = AmrStatus::Busy;
            a.task = Some(Task::Order(id));
            self.note(format_args!(" assign={amr}:{id}"));
            if let Some(t) = self.start_leg(amr, target, false, Some(id)) {
                let kind = match target {
                    Place::Dock(_) => EventKind::AmrArrivedAtDock,
                    _ => EventKind::AmrArrivedAtLane,
                };
                self.queue
                    .schedule(now + t, kind, Payload::amr_order(amr, id))?;
            }
        }

        if self.cfg.interrupt
            && !self.state.queues.retrieval.is_empty()
            && self.state.free_amrs() == 0
        {
            for (station, amr) in interrupt_scan(
                &self.state.stations,
                now,
                &self.cfg.battery,
                self.cfg.interrupt_pct,
            ) {
                let occ = self.state.stations[station]
                    .occupant
                    .as_mut()
                    .expect("scan returns occupants");
                occ.interrupt_pending = true;
                let session = occ.session;
                self.note(format_args!(" interrupt={amr}"));
                self.queue.schedule(
                    now,
                    EventKind::ChargeInterrupted,
                    Payload::charge(amr, station, session),
                )?;
            }
        }
        Ok(())
    }

    pub fn metrics(&self) -> EpisodeMetrics {
        let a = &self.acc;
        let v = self.cfg.amrs as f64;
        let b = self.cfg.battery.capacity_ah;
        let dur = a.last_t;
        let (mean_qr, mean_fleet_ah) = if dur > 0.0 {
            (a.qr_integral / dur, a.fleet_integral / dur)
        } else {
            (a.qr as f64, a.fleet_ah)
        };
        let odo: f64 = self.state.amrs.iter().map(|x| x.odometer_m).sum();
        let completed = self.state.stats.completed;
        EpisodeMetrics {
            avg_service_time: self.state.stats.avg_service_time(),
            max_retrieval_queue: a.max_qr as f64,
            mean_retrieval_queue: mean_qr,
            mean_battery_pct: mean_fleet_ah / (v * b) * 100.0,
            mean_travel_km_per_amr: odo / v / 1000.0,
            constraint_violations: self.state.queues.violation_log.len() as u64,
            orders_completed: completed,
            truncated_orders: self.state.orders.len() as u64 - completed,
            charge_interruptions: a.interruptions,
            stranded_amrs: a.stranded,
            decisions: a.decisions,
            duration_s: dur,
        }
    }

    /// Dock ids by kind, for generators that need them.
    pub fn dock_ids(layout: &Layout, kind: DockKind) -> Vec<usize> {
        layout
            .docks
            .iter()
            .filter(|d| d.kind == kind)
            .map(|d| d.id)
            .collect()
    }
}
