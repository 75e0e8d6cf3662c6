//! Jump integral: Gauss–Hermite rules on the eigen-axes of the jump covariance
//! and the trained surrogate network.

pub mod hermite;
pub mod operator;
pub mod rule;
pub mod surrogate;

pub use hermite::{hermite_rule_1d, normal_rule_1d};
pub use operator::{integral_operator_gh, JumpOperator};
pub use rule::{build_rule, jump_axes, AxesMode, QuadratureRule, RuleSpec};
pub use surrogate::{fit_surrogate, integral_operator_ann, IntegralSurrogate, SurrogateConfig};
