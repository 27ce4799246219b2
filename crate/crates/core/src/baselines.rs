//! Reference predictors: a first-order IIR low-pass filter over past
//! measurements, and the genie that knows the realised interference.

use crate::error::{invalid, Result};
use crate::forecast::TrainValSplit;

#[derive(Debug, Clone, PartialEq)]
pub struct IirParams {
    /// Forgetting factor, the weight of the newest measurement.
    pub alpha: f64,
    /// Starting estimate; the first sample of the trace when `None`.
    pub init_estimate: Option<f64>,
    /// Form the estimate for slot `t` from the measurement of `t - 2`
    /// instead of `t - 1`, i.e. `I_hat[t+1] = a I[t-1] + (1-a) I_hat[t]`
    /// read literally.
    pub literal_index: bool,
}

impl Default for IirParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            init_estimate: None,
            literal_index: false,
        }
    }
}

impl IirParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("IIR alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Run the filter over the whole trace and return the estimates for the
/// validation slots `P..T`. The estimate for slot `t` only uses samples
/// before `t`.
pub fn iir_forecast(trace: &[f64], split: &TrainValSplit, params: &IirParams) -> Result<Vec<f64>> {
    params.validate()?;
    split.check_len(trace.len())?;
    if trace.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid("IIR input must be finite and non-negative"));
    }
    let lag = if params.literal_index { 2 } else { 1 };
    let alpha = params.alpha;
    let mut estimate = params.init_estimate.unwrap_or(trace[0]);
    let mut out = Vec::with_capacity(split.val_len);
    for t in 0..trace.len() {
        if t >= lag {
            estimate = alpha * trace[t - lag] + (1.0 - alpha) * estimate;
        }
        if t >= split.train_len {
            out.push(estimate);
        }
    }
    Ok(out)
}

/// The realised validation samples.
pub fn genie_forecast(trace: &[f64], split: &TrainValSplit) -> Result<Vec<f64>> {
    split.check_len(trace.len())?;
    Ok(trace[split.train_len..].to_vec())
}
