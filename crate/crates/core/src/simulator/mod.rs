//! Deterministic smart-home simulator: a lumped thermal, humidity and light
//! model driven by seeded event sources, with the detector in the loop.

mod output;
pub mod physics;
mod run;
mod scenario;
mod setpoint;

pub use output::{
    summary_means, write_room_trace, write_summary, SummaryRow, ROOM_TRACE_HEADER, SUMMARY_HEADER,
};
pub use physics::{
    humidity_step, luminance_of, step_house, thermal_step, HouseModel, Outdoor, RoomParams,
    RoomState, ThermostatMode, COMFORT_LUX,
};
pub use run::{run, run_paired, run_scenario, Command, PairedRun, TraceReport};
pub use scenario::{
    builtin_scenario, builtin_scenarios, merge_tables, DeviceConfig, Enforcement, HouseConfig,
    Pairing, RoomConfig, Scenario, SourceSpec, HOUSE_BASE,
};
pub use setpoint::{replay_setpoint, SetpointReplay};
