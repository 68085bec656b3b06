//! Replays a trace against a setpoint that each applied `increase` raises
//! and each `decrease` lowers by a fixed step.

use crate::detector::{Conflict, Detector};
use crate::error::Result;
use crate::model::{DetectorConfig, EventId, RuleSet};
use crate::trace::ticks;

#[derive(Debug, Clone, PartialEq)]
pub struct SetpointReplay {
    pub setpoint: f64,
    pub applied: usize,
    pub suppressed: usize,
    pub conflicts: Vec<Conflict>,
}

/// Feeds `events` through the detector, adjusting `start` by `step` for each
/// increase or decrease issued to `actuator`. With `suppress_duplicates`,
/// actions of the later event of each C7 pair are dropped.
pub fn replay_setpoint(
    rs: &RuleSet,
    cfg: &DetectorConfig,
    events: &[crate::model::Event],
    actuator: &str,
    start: f64,
    step: f64,
    suppress_duplicates: bool,
) -> Result<SetpointReplay> {
    let mut detector = Detector::new(rs, cfg)?;
    let mut out = SetpointReplay {
        setpoint: start,
        applied: 0,
        suppressed: 0,
        conflicts: Vec::new(),
    };
    for (tick, batch) in ticks(events) {
        let outcome = detector.process_tick(tick, batch)?;
        let dropped: Vec<EventId> = if suppress_duplicates {
            outcome
                .conflicts
                .iter()
                .filter_map(Conflict::suppressible)
                .filter(|e| e.time == tick)
                .map(|e| e.id)
                .collect()
        } else {
            Vec::new()
        };
        for ta in outcome.actions.iter().filter(|ta| ta.action.actuator.as_str() == actuator) {
            if dropped.contains(&ta.event.id) {
                out.suppressed += 1;
                continue;
            }
            match ta.action.action.as_str() {
                "increase" => out.setpoint += step,
                "decrease" => out.setpoint -= step,
                _ => continue,
            }
            out.applied += 1;
        }
        out.conflicts.extend(outcome.conflicts);
    }
    Ok(out)
}
