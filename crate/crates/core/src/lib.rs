//! Difference-in-differences on panels where the policy decision `P` is
//! distinct from its implementation `A`.
//!
//! * [`panel`]: long-format panel loading, group inference and audits.
//! * [`scm`]: structural causal models, sampling and `do` surgery.
//! * [`estimators`]: the two-period and group-time functionals.
//! * [`oracle`]: brute-force counterfactual estimands and identification checks.
//! * [`exec`]: deterministic seeding and sequential or parallel execution.

pub mod estimators;
pub mod exec;
pub mod oracle;
pub mod panel;
pub mod scm;

pub use estimators::{
    bootstrap_ci, did_classic, did_classic_as, group_time_att, BootstrapCi, BootstrapConfig, ControlGroup, Estimand,
    EstimateError, EstimateReport, GroupTimeQuery, Reading,
};
pub use exec::Execution;
pub use panel::{
    audit_assumptions, infer_groups, load_panel, save_panel, Group, GroupAssignment, PanelAudit, PanelDataset,
    PanelError, PanelSchema,
};
pub use scm::{Intervention, Scm, ScmDocument, ScmError};
