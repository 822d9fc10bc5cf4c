//! Estimation: binary-response MLE and least squares with fixed effects,
//! cluster-robust covariance, shift-share instruments, recursive joint MLE,
//! marginal effects, matching, winsorisation and group-difference tests.

pub mod bartik;
pub mod chow;
pub mod design;
pub mod fit;
pub mod glm;
pub mod margins;
pub mod normal;
pub mod psm;
pub mod recursive;
pub mod vcov;
pub mod winsor;

pub use bartik::{append_bartik_iv, build_bartik_iv, BartikConfig, BartikInstrument, Shock};
pub use chow::{chow_test, interaction_name, permutation_test, ChowResult, PermutationResult, PermutationTerm};
pub use design::{cluster_ids, complete_rows, Design, Family, FixedEffectLevels, ModelSpec, INTERCEPT};
pub use fit::{CoefRow, FitResult};
pub use glm::{binary_loglik, binary_score, fit, fit_logit, fit_ols, fit_probit};
pub use margins::{average_marginal_effects, EffectKind, MarginalEffect};
pub use psm::{propensity_match, BalanceRow, MatchResult, MatchedPair};
pub use recursive::{fit_recursive_joint, FirstStage, RecursiveFit};
pub use vcov::{cluster_robust_vcov, hc0_vcov, VcovKind};
pub use winsor::{clip, percentile, winsorize, Winsorized};
