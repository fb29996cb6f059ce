//! Scenarios, closed-loop trials, Monte Carlo campaigns and CSV output.

mod campaign;
mod export;
mod scenario;
mod trial;

pub use campaign::{run_campaign, Campaign, CampaignSummary, TrialResult};
pub use export::{
    audit_path, audit_record, export_audit_csv, export_csv, format_significant, read_record_csv,
    record_path, write_campaign, AuditReport, RecordRow, AUDIT_HEADER, GENERATOR_TOLERANCE,
    RECORD_HEADER, SUMMARY_HEADER,
};
pub use scenario::{
    builtin_scenario, tangent_wall, InitialState, InputLimit, PreInputSchedule, Scenario,
    SimulationMode, BUILTIN_NAMES,
};
pub use trial::{run_trial, Outcome, TickRow, TrialRecord};
