//! Finite-blocklength channel-use allocation.
//!
//! Uses the normal approximation of the maximal coding rate of an AWGN
//! channel with the `O(log2 R)` term dropped:
//!
//! ```text
//! D = R C(g) - Qinv(eps) sqrt(R V(g))
//! C(g) = log2(1 + g)
//! V(g) = (1 - 1 / (1 + g)^2) / ln(2)^2
//! ```
//!
//! Solving for `R` (a quadratic in `sqrt(R)`) gives the allocation rule and
//! solving for `eps` gives the achieved error under the realised SINR.

use std::f64::consts::{LN_2, SQRT_2};

use crate::error::{invalid, Error, Result};

/// Shannon capacity `log2(1 + gamma)` in bits per channel use.
pub fn shannon_capacity(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(gamma.ln_1p() / LN_2)
}

/// Channel dispersion in squared bits per channel use.
pub fn channel_dispersion(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let r = 1.0 / (1.0 + gamma);
    Ok((1.0 - r * r) / (LN_2 * LN_2))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("SINR must be non-negative, got {gamma}")))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("error probability must lie in (0, 1), got {eps}")))
    }
}

/// Gaussian tail probability `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

// Rational approximation of the standard normal quantile (P. J. Acklam),
// relative error below 1.2e-9 before refinement.
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155211027e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const P_LOW: f64 = 0.02425;

/// Lower-tail normal quantile: `z` with `Phi(z) = p`.
fn normal_quantile(p: f64) -> f64 {
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let z = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (-p).ln_1p()).sqrt())
    };
    // One Halley step against the exact CDF. Work in whichever tail keeps
    // the residual small relative to the probability.
    let (cdf_err, sign) = if z <= 0.0 {
        (q_function(-z) - p, 1.0)
    } else {
        (q_function(z) - (1.0 - p), -1.0)
    };
    let u = sign * cdf_err * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * z * z).exp();
    z - u / (1.0 + 0.5 * z * u)
}

/// Inverse Gaussian tail: the `x` with `Q(x) = eps`.
pub fn q_inv(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if eps == 0.5 {
        return Ok(0.0);
    }
    // Q(x) = eps  <=>  Phi(-x) = eps
    Ok(-normal_quantile(eps))
}

/// Channel uses needed to carry `d_bits` at target error `eps` when the SINR
/// is `gamma_hat`. For `eps >= 0.5` the quantile is non-positive and the
/// dispersion term is dropped, giving `D / C`.
pub fn required_channel_uses(d_bits: f64, gamma_hat: f64, eps: f64) -> Result<f64> {
    if !(d_bits >= 1.0) {
        return Err(invalid(format!("payload must be at least 1 bit, got {d_bits}")));
    }
    check_eps(eps)?;
    if gamma_hat == 0.0 {
        return Err(Error::NoCapacity);
    }
    let c = shannon_capacity(gamma_hat)?;
    let v = channel_dispersion(gamma_hat)?;
    let q = q_inv(eps)?;
    if q <= 0.0 {
        return Ok(d_bits / c);
    }
    let qqv = q * q * v;
    Ok(d_bits / c + qqv / (2.0 * c * c) * (1.0 + (1.0 + 4.0 * d_bits * c / qqv).sqrt()))
}

/// Bits deliverable in `r` channel uses at SINR `gamma` and error `eps`.
/// Can be negative for very small `r`.
pub fn achievable_bits(r: f64, gamma: f64, eps: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid(format!("channel uses must be positive, got {r}")));
    }
    check_eps(eps)?;
    let c = shannon_capacity(gamma)?;
    let v = channel_dispersion(gamma)?;
    Ok(r * c - q_inv(eps)? * (r * v).sqrt())
}

/// Block error probability when `d_bits` are sent over `r` channel uses at
/// realised SINR `gamma`. Zero SINR (and, outside the valid domain,
/// non-positive `r`) yields certain failure.
pub fn achieved_error(r: f64, d_bits: f64, gamma: f64) -> f64 {
    if !(gamma > 0.0) || !(r > 0.0) {
        return 1.0;
    }
    let c = gamma.ln_1p() / LN_2;
    let inv = 1.0 / (1.0 + gamma);
    let v = (1.0 - inv * inv) / (LN_2 * LN_2);
    let z = (r * c - d_bits) / (r * v).sqrt();
    q_function(z).clamp(0.0, 1.0)
}

/// `S / (I + N0)`.
pub fn sinr(signal: f64, interference: f64, noise: f64) -> Result<f64> {
    if !(noise > 0.0) {
        return Err(invalid(format!("noise power must be positive, got {noise}")));
    }
    if !(signal >= 0.0) || !(interference >= 0.0) {
        return Err(invalid("signal and interference powers must be non-negative"));
    }
    Ok(signal / (interference + noise))
}

/// One allocation at step `t`: channel uses picked from the predicted SINR,
/// error evaluated at the realised SINR.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationRecord {
    pub t: usize,
    pub predicted_interference: f64,
    pub predicted_sinr: f64,
    pub channel_uses: f64,
    pub target_eps: f64,
    pub actual_interference: f64,
    pub actual_sinr: f64,
    pub achieved_eps: f64,
}

/// Inputs shared by every allocation of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationParams {
    pub payload_bits: f64,
    pub noise_power: f64,
    /// Round channel uses up to an integer before evaluating the error.
    pub integer_r: bool,
}

impl AllocationRecord {
    /// Allocate for one step. A negative predicted interference is clamped
    /// to zero; the second return value reports whether that happened.
    pub fn evaluate(
        t: usize,
        signal: f64,
        predicted_interference: f64,
        actual_interference: f64,
        target_eps: f64,
        params: &AllocationParams,
    ) -> Result<(Self, bool)> {
        let clamped = predicted_interference < 0.0;
        let predicted_interference = predicted_interference.max(0.0);
        let predicted_sinr = sinr(signal, predicted_interference, params.noise_power)?;
        let mut channel_uses =
            required_channel_uses(params.payload_bits, predicted_sinr, target_eps)?;
        if params.integer_r {
            channel_uses = channel_uses.ceil();
        }
        let actual_sinr = sinr(signal, actual_interference, params.noise_power)?;
        let achieved_eps = achieved_error(channel_uses, params.payload_bits, actual_sinr);
        Ok((
            Self {
                t,
                predicted_interference,
                predicted_sinr,
                channel_uses,
                target_eps,
                actual_interference,
                actual_sinr,
                achieved_eps,
            },
            clamped,
        ))
    }
}
