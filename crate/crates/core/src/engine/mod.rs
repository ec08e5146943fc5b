//! Discrete-event core: event queue, event chains and decision hooks.

mod event;
mod sim;
pub mod trace;

pub use event::{EventKind, EventQueue, Payload, SimEvent};
pub use sim::{DecisionKind, DecisionRequest, SimConfig, Simulation, Step};

use crate::battery::ChargeTarget;
use crate::error::Result;
use crate::metrics::EpisodeMetrics;

/// Anything that answers charging decisions: heuristics, a trained agent,
/// or a scripted sequence.
pub trait ChargingPolicy {
    fn decide(&mut self, sim: &Simulation, req: &DecisionRequest) -> Result<ChargeTarget>;
}

impl<F> ChargingPolicy for F
where
    F: FnMut(&Simulation, &DecisionRequest) -> ChargeTarget,
{
    fn decide(&mut self, sim: &Simulation, req: &DecisionRequest) -> Result<ChargeTarget> {
        Ok(self(sim, req))
    }
}

/// Runs `sim` to the end, asking `policy` at every decision.
pub fn run_episode<P: ChargingPolicy + ?Sized>(
    sim: &mut Simulation,
    policy: &mut P,
) -> Result<EpisodeMetrics> {
    while let Step::Decision(req) = sim.run_until_decision()? {
        let action = policy.decide(sim, &req)?;
        sim.resume_with(action)?;
    }
    Ok(sim.metrics())
}
