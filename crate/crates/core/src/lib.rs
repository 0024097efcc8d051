//! Exact mean Age-of-Information analysis for a status-update system in
//! which every source owns a dedicated server and all sources share one
//! more server, together with optimal probabilistic scheduling, cyclic
//! schedule construction and a discrete-event simulator.
//!
//! Sources are numbered `1..=N` wherever they appear inside a
//! [`CyclicSchedule`]; per-source vectors (`mu_dedicated`, `weights`, pmf
//! entries, results) are indexed `0..N`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod cs;
pub mod error;
pub mod optimizer;
pub mod ps;
pub mod schedulers;
pub mod sim;
pub mod system;

pub use chain::{
    mean_aoi, stationary_distribution, validate_chain, AbsorbingChain, Absorption, ChainBuilder,
    RecurrentChain, ValidationReport, Violation,
};
pub use cs::{
    build_cs_amc, cs_initial_vector, cs_mean_aoi, cs_packet_rate, cs_per_source_aoi,
    cs_rmc_stationary, cs_weighted_aoi, project_pattern, BinaryPattern, CsLayout, CsStationary,
    CyclicSchedule, Slot,
};
pub use error::{AoiError, Result};
pub use optimizer::{
    cardano_positive_root, kkt_residual, objective_terms, optimize_ps, waterfill, ObjectiveTerms,
    WaterfillState, DEFAULT_EPSILON,
};
pub use ps::{
    build_ps_amc, ps_closed_form, ps_mean_aoi_numeric, ps_per_source_aoi, ps_rmc_stationary,
    ps_weighted_aoi,
};
pub use schedulers::{
    drr_spread, insertion_search, pac_build, pac_schedule, round_robin_schedule, uniform_pattern,
    uniform_pmf, ScheduleBuildReport, TraceEntry,
};
pub use sim::{
    device_rate, simulate, simulate_replication, Horizon, Policy, Replication, SimConfig,
    SimEstimate,
};
pub use system::{Pmf, SystemSpec};
