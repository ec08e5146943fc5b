//! Battery arithmetic: consumption while moving, linear recharge, and the
//! occupancy/queue bookkeeping of charging stations.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::Place;

/// Capacity, current draws and recharge speed of one AMR battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryModel {
    pub capacity_ah: f64,
    /// Current drawn while carrying a pallet (A).
    pub draw_loaded_a: f64,
    /// Current drawn while driving empty (A).
    pub draw_unloaded_a: f64,
    /// Time for an empty battery to reach 100 %.
    pub full_charge_s: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        Self {
            capacity_ah: 52.0,
            draw_loaded_a: 15.0,
            draw_unloaded_a: 10.0,
            full_charge_s: 1800.0,
        }
    }
}

/// Outcome of draining a battery over one travel leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drain {
    pub level_ah: f64,
    pub drawn_ah: f64,
    /// Fraction of the leg completed before the battery ran dry (1.0 if it did not).
    pub completed: f64,
    pub depleted: bool,
}

impl BatteryModel {
    pub fn validate(&self) -> Result<()> {
        let ok = [
            self.capacity_ah,
            self.draw_loaded_a,
            self.draw_unloaded_a,
            self.full_charge_s,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "battery parameters must be finite and positive".into(),
            ))
        }
    }

    /// Recharge rate in Ah per second.
    pub fn charge_rate(&self) -> f64 {
        self.capacity_ah / self.full_charge_s
    }

    pub fn pct(&self, level_ah: f64) -> f64 {
        level_ah / self.capacity_ah * 100.0
    }

    pub fn ah(&self, pct: f64) -> f64 {
        pct / 100.0 * self.capacity_ah
    }

    /// Charge drawn by `travel_s` seconds of movement.
    pub fn demand(&self, travel_s: f64, loaded: bool) -> f64 {
        let draw = if loaded {
            self.draw_loaded_a
        } else {
            self.draw_unloaded_a
        };
        draw * travel_s / 3600.0
    }

    /// Drains `level_ah` by a leg of `travel_s` seconds, flooring at zero.
    pub fn consume(&self, level_ah: f64, travel_s: f64, loaded: bool) -> Drain {
        let demand = self.demand(travel_s, loaded);
        if demand <= level_ah {
            return Drain {
                level_ah: level_ah - demand,
                drawn_ah: demand,
                completed: 1.0,
                depleted: false,
            };
        }
        Drain {
            level_ah: 0.0,
            drawn_ah: level_ah,
            completed: if demand > 0.0 { level_ah / demand } else { 1.0 },
            depleted: true,
        }
    }

    /// Seconds needed to charge linearly from `current_pct` to `target_pct`.
    pub fn charge_duration(&self, current_pct: f64, target_pct: f64) -> Result<f64> {
        if !(target_pct > current_pct) || target_pct > 100.0 {
            return Err(Error::InvalidCharge {
                current: current_pct,
                target: target_pct,
            });
        }
        Ok((target_pct - current_pct) / 100.0 * self.full_charge_s)
    }
}

/// Charging target in percent; `0` means "do not charge".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChargeTarget(pub u32);

impl ChargeTarget {
    pub const NONE: ChargeTarget = ChargeTarget(0);
    pub const FULL: ChargeTarget = ChargeTarget(100);

    pub fn is_charge(self) -> bool {
        self.0 > 0
    }

    pub fn pct(self) -> f64 {
        f64::from(self.0)
    }
}

/// The discrete charging targets an agent can choose from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    Full,
    Binary,
}

const FULL_TARGETS: [u32; 9] = [0, 30, 40, 50, 60, 70, 80, 90, 100];
const BINARY_TARGETS: [u32; 2] = [0, 100];

impl ActionSpace {
    pub fn targets(self) -> &'static [u32] {
        match self {
            ActionSpace::Full => &FULL_TARGETS,
            ActionSpace::Binary => &BINARY_TARGETS,
        }
    }

    pub fn len(self) -> usize {
        self.targets().len()
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn target(self, index: usize) -> ChargeTarget {
        ChargeTarget(self.targets()[index])
    }

    pub fn index_of(self, target: ChargeTarget) -> Option<usize> {
        self.targets().iter().position(|&t| t == target.0)
    }

    pub fn contains(self, target: ChargeTarget) -> bool {
        self.index_of(target).is_some()
    }
}

/// The AMR currently plugged into a station.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupant {
    pub amr: usize,
    pub since: f64,
    pub start_ah: f64,
    pub target_ah: f64,
    /// Identifies this charging session so stale completion events can be ignored.
    pub session: u64,
    pub interrupt_pending: bool,
}

impl Occupant {
    /// Charge level after `now - since` seconds plugged in.
    pub fn level_at(&self, now: f64, model: &BatteryModel) -> f64 {
        let gained = (now - self.since).max(0.0) * model.charge_rate();
        (self.start_ah + gained)
            .min(self.target_ah)
            .min(model.capacity_ah)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueuedAmr {
    pub amr: usize,
    pub target_ah: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargingStation {
    pub id: usize,
    pub place: Place,
    pub occupant: Option<Occupant>,
    pub queue: VecDeque<QueuedAmr>,
    /// AMRs that chose this station and are still driving to it.
    pub inbound: usize,
}

/// What happened when an occupant left a station.
#[derive(Debug, Clone, PartialEq)]
pub struct Release {
    pub level_ah: f64,
    pub gained_ah: f64,
    /// Queue head promoted to occupant, if any.
    pub promoted: Option<Occupant>,
}

impl ChargingStation {
    pub fn new(id: usize, place: Place) -> Self {
        Self {
            id,
            place,
            occupant: None,
            queue: VecDeque::new(),
            inbound: 0,
        }
    }

    /// True when nobody charges, waits or is on the way.
    pub fn is_available(&self) -> bool {
        self.occupant.is_none() && self.queue.is_empty() && self.inbound == 0
    }

    pub fn is_free(&self) -> bool {
        self.occupant.is_none()
    }

    /// Queue length used when choosing among busy stations.
    pub fn load(&self) -> usize {
        self.queue.len() + self.inbound
    }

    /// Plugs in `amr` or queues it. Returns the new occupant when it was plugged in.
    pub fn arrive(
        &mut self,
        amr: usize,
        level_ah: f64,
        target_ah: f64,
        now: f64,
        session: u64,
    ) -> Option<Occupant> {
        self.inbound = self.inbound.saturating_sub(1);
        if self.occupant.is_none() {
            debug_assert!(self.queue.is_empty());
            let occ = Occupant {
                amr,
                since: now,
                start_ah: level_ah,
                target_ah,
                session,
                interrupt_pending: false,
            };
            self.occupant = Some(occ.clone());
            Some(occ)
        } else {
            self.queue.push_back(QueuedAmr { amr, target_ah });
            None
        }
    }

    /// Unplugs `amr` at `now` and promotes the queue head at the same instant.
    ///
    /// `full_dwell` marks a regular completion; the battery then lands exactly
    /// on the target instead of on the accumulated floating-point estimate.
    /// The promoted occupant starts with `queued_level_ah` looked up by the caller.
    pub fn release(
        &mut self,
        amr: usize,
        now: f64,
        full_dwell: bool,
        model: &BatteryModel,
        next_session: u64,
        queued_level_ah: impl Fn(usize) -> f64,
    ) -> Result<Release> {
        let occ = match &self.occupant {
            Some(o) if o.amr == amr => self.occupant.take().expect("checked"),
            _ => {
                return Err(Error::NotOccupant {
                    amr,
                    station: self.id,
                })
            }
        };
        let level_ah = if full_dwell {
            occ.target_ah.min(model.capacity_ah)
        } else {
            occ.level_at(now, model)
        };
        let gained_ah = level_ah - occ.start_ah;
        let promoted = self.queue.pop_front().map(|q| {
            let o = Occupant {
                amr: q.amr,
                since: now,
                start_ah: queued_level_ah(q.amr),
                target_ah: q.target_ah,
                session: next_session,
                interrupt_pending: false,
            };
            self.occupant = Some(o.clone());
            o
        });
        Ok(Release {
            level_ah,
            gained_ah,
            promoted,
        })
    }
}

/// Picks the nearest available station; if none is available, the one with
/// the shortest queue. Remaining ties break by distance, then id.
pub fn select_station(stations: &[ChargingStation], distance: impl Fn(Place) -> f64) -> usize {
    assert!(
        !stations.is_empty(),
        "at least one charging station is required"
    );
    let key = |s: &ChargingStation| {
        let load = if s.is_available() { 0 } else { 1 + s.load() };
        (load, distance(s.place), s.id)
    };
    stations
        .iter()
        .min_by(|a, b| {
            let (la, da, ia) = key(a);
            let (lb, db, ib) = key(b);
            la.cmp(&lb).then(da.total_cmp(&db)).then(ia.cmp(&ib))
        })
        .map(|s| s.id)
        .expect("non-empty")
}
