mod driver;
mod lambda;
mod surrogate;

pub use driver::{
    run_balancing, run_gupenmm, run_upenmm, ConvergenceTrace, MMConfig, MMResult, StopReason, TildeRule, TraceRecord,
    EXACT_FIT_THRESHOLD,
};
pub use lambda::{
    balancing_from_psi, balancing_update, check_stopping, initial_iterate, initial_lambda, tilde_from_parts,
    tilde_update, ups_update, LambdaVector, NumeratorConvention, TildeDenominator,
};
pub use surrogate::{
    phi_gamma_direct, phi_gamma_log, surrogate_scaled_log, surrogate_scaled_log_gamma, SurrogateValue,
    DIRECT_FORM_MAX_P,
};
