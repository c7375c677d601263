//! Numerical checks of the attention-as-PCA view and of the optimization
//! and concentration claims, plus the token-similarity probe used on trained
//! backbones.

mod concentration;
mod jacobian;
mod maxent;
mod pca;
mod sgd;
mod similarity;
mod sweep;

pub use concentration::{attention_mean_convergence, ols_slope, ConvergencePoint, ConvergenceReport, HeadWeights};
pub use jacobian::{jacobian_audit, jacobian_bound_check, JacobianAudit, JacobianCase, self_attention_map, JacobianBound, MAX_JACOBIAN_DIM};
pub use maxent::{maxent_closed_form, maxent_dual_solve, MAXENT_TOL};
pub use pca::{
    attention_objective, attention_objective_squared_trace, attention_objective_trace, brute_force_low_rank,
    optimal_pca_attention, PcaAttentionSolution,
};
pub use sgd::{
    conditioned_regression, sgd_conditioning_check, sgd_rate_audit, SgdAudit, SgdAuditRow, SgdAuditSpec, SgdCriterion,
    SgdRateReport,
};
pub use similarity::{token_similarity, token_similarity_batch, TokenSimilarityProfile, SIMILARITY_BINS};
pub use sweep::{forecast_token_similarity, mixed_weights_similarity_sweep, SweepOptions, SweepRow, SweepTable};
