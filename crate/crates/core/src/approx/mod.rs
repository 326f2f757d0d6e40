//! Small dense networks: MLPs with manual backprop, Adam, and the
//! tanh-squashed Gaussian policy head.

mod adam;
mod gaussian;
mod matrix;
mod mlp;

pub use adam::{AdamConfig, AdamState, StepOutcome};
pub use gaussian::{
    deterministic_action, gaussian_policy_sample, log_one_minus_tanh_sq, log_prob_of_action,
    SquashedSample, ACTION_LIMIT, LOG_STD_MAX, LOG_STD_MIN,
};
pub use matrix::Matrix;
pub use mlp::{Head, MlpCache, MlpSpec, ParamBlock, ParamVector};

/// `target ← (1 - tau) · target + tau · source`.
pub fn polyak_update(target: &mut ParamVector, source: &ParamVector, tau: f64) -> crate::Result<()> {
    if !target.same_layout(source) {
        return Err(crate::Error::dims("polyak update", target.len(), source.len()));
    }
    for (t, s) in target.values_mut().iter_mut().zip(source.values()) {
        *t = (1.0 - tau) * *t + tau * s;
    }
    Ok(())
}
