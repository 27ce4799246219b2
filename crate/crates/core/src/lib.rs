//! Interference prediction with empirical mode decomposition and
//! finite-blocklength channel-use allocation for a URLLC downlink.
//!
//! The pipeline is:
//!
//! 1. [`chan_sim`] draws Rayleigh block-faded interference power traces.
//! 2. [`emd`] splits a trace into intrinsic mode functions and a residual.
//! 3. [`forecast`] predicts each component one step ahead (autoregressive or
//!    LSTM predictors) and sums the component forecasts.
//! 4. [`baselines`] provides the IIR moving-average and genie predictors.
//! 5. [`fbl_alloc`] turns predicted SINR into channel uses and evaluates the
//!    achieved block error rate under the realised interference.
//! 6. [`harness`] runs seeded Monte-Carlo experiments and writes reports.

pub mod baselines;
pub mod chan_sim;
pub mod emd;
pub mod error;
pub mod fbl_alloc;
pub mod forecast;
pub mod harness;
pub mod trace_io;

pub use error::{Error, Result};
