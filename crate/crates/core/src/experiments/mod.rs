//! Rare-event estimation: plain Monte Carlo and importance sampling of endpoint
//! tail events, compared against the optimized rate, plus report emission.

mod event;
mod ldp;
mod report;

pub use event::TailEvent;
pub use ldp::{
    is_tail_estimate, ldp_tail_estimate, neg_eps_log, LdpRow, LdpTable, Method, RateReference, BOOTSTRAP_RESAMPLES,
};
pub use report::{emit_report, Artifact, Manifest, ReportTable, REPORT_SCHEMA};
