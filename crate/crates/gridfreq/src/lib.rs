//! Desk-scale power-system frequency-control simulation.
//!
//! A single-bus (center-of-inertia) grid model with:
//!
//! - swing dynamics driven by the net MW imbalance ([`grid`]),
//! - primary frequency control with deadbands, droops and piecewise
//!   response products ([`pfc`]),
//! - a single-area integral AGC ([`agc`]),
//! - a 5-minute real-time energy market with PFC-reserve co-optimization
//!   ([`market`]),
//! - seeded stochastic load disturbances ([`disturbance`]),
//! - frequency-quality metrics ([`metrics`]), and
//! - a deterministic scenario runner with four shipped presets comparing
//!   hierarchical control (PFC + AGC) against a flattened architecture
//!   (PFC + real-time market) ([`scenario`], [`sim`]).
//!
//! Start from the runnable programs in `examples/`; each one demonstrates a
//! capability end to end. The `gridfreq` binary exposes `run`, `compare`,
//! `reserve-calc` and `analyze` on the command line.
//!
//! Conventions: powers are MW, frequency deviation is Hz internally and mHz
//! in reports, and every run is bit-reproducible from its seed and config.

pub mod agc;
pub mod disturbance;
pub mod error;
pub mod grid;
pub mod market;
pub mod metrics;
pub mod pfc;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use agc::{agc_step, resolve_participation, AgcSettings};
pub use disturbance::{
    ou_step, ramp_value, DisturbanceSample, DisturbanceState, JumpParams, JumpProcess, OuParams,
    RampEvent, TripEvent,
};
pub use error::{Error, Result};
pub use grid::{
    aggregate_inertia, apply_trip, step_coi, GridState, Integrator, Resource, ResourceKind,
    SystemParams,
};
pub use market::{
    clear_market, forecast_demand, ramp_setpoints, CostCurve, DispatchEntry, DispatchSchedule,
    ForecastModel, Infeasibility, MarketSettings, ReserveRule,
};
pub use metrics::{
    compute_sigma, nadir_zenith, pct_out_of_range, recovery_time, skewness, time_error,
    FrequencyTrace, Histogram, MetricsReport,
};
pub use pfc::{
    adaptive_deadband_switch, apply_deadband, pfc_response, piecewise_response, reserve_calc,
    DeadbandMode, PfcSettings, PiecewiseResponseCurve,
};
pub use scenario::{preset, Scenario, ScenarioSpec, PRESET_NAMES};
pub use sim::{compare_scenarios, run_scenario, simulate, Comparison, RunResult, SimResult};
