//! Rayleigh block-fading power traces for the desired link and for `N`
//! non-cooperating interferers.
//!
//! Powers are linear and normalised to the noise power. The squared
//! magnitude of a Rayleigh fading coefficient is exponential, so every block
//! draws one `Exp(1)` variate scaled by the configured mean.
//!
//! # Random streams
//!
//! Every trace is generated from a `ChaCha12` generator seeded with
//! [`LinkConfig::rng_seed`]. Streams are split with `set_stream`:
//!
//! | stream | use                      |
//! |--------|--------------------------|
//! | 0      | desired link (faded mode) |
//! | `i+1`  | interferer `i`           |
//!
//! so adding or removing an interferer never perturbs the others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::Exp1;

use crate::error::{invalid, Result};

/// Convert decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Parameters of the simulated downlink.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub n_interferers: usize,
    /// Mean INR of each interferer in dB, one entry per interferer.
    pub interferer_mean_inr_db: Vec<f64>,
    /// Mean SNR of the desired link in dB.
    pub desired_mean_snr_db: f64,
    pub noise_power: f64,
    pub n_samples: usize,
    /// Samples per fading block; 1 gives i.i.d. fading per TTI.
    pub coherence_block_len: usize,
    pub rng_seed: u64,
    /// Apply block Rayleigh fading to the desired power instead of holding
    /// it at its mean.
    pub faded_desired: bool,
}

impl Default for LinkConfig {
    /// Five interferers at [5, 3, 0, -2, -5] dB INR, 20 dB desired SNR.
    fn default() -> Self {
        Self {
            n_interferers: 5,
            interferer_mean_inr_db: vec![5.0, 3.0, 0.0, -2.0, -5.0],
            desired_mean_snr_db: 20.0,
            noise_power: 1.0,
            n_samples: 1000,
            coherence_block_len: 1,
            rng_seed: 1,
            faded_desired: false,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_interferers < 1 {
            return Err(invalid("n_interferers must be at least 1"));
        }
        if self.interferer_mean_inr_db.len() != self.n_interferers {
            return Err(invalid(format!(
                "{} interferer INRs given for {} interferers",
                self.interferer_mean_inr_db.len(),
                self.n_interferers
            )));
        }
        if self.n_samples < 2 {
            return Err(invalid("n_samples must be at least 2"));
        }
        if self.coherence_block_len < 1 {
            return Err(invalid("coherence_block_len must be at least 1"));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(invalid("noise_power must be finite and positive"));
        }
        if !self.desired_mean_snr_db.is_finite()
            || self.interferer_mean_inr_db.iter().any(|v| !v.is_finite())
        {
            return Err(invalid("link powers must be finite"));
        }
        let max_inr = self
            .interferer_mean_inr_db
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if max_inr >= self.desired_mean_snr_db {
            return Err(invalid(format!(
                "strongest interferer ({max_inr} dB) must be weaker than the desired link ({} dB)",
                self.desired_mean_snr_db
            )));
        }
        Ok(())
    }

    /// Mean linear power of each interferer.
    pub fn interferer_mean_powers(&self) -> Vec<f64> {
        self.interferer_mean_inr_db
            .iter()
            .map(|&db| self.noise_power * db_to_linear(db))
            .collect()
    }

    pub fn desired_mean_power(&self) -> f64 {
        self.noise_power * db_to_linear(self.desired_mean_snr_db)
    }
}

/// Aggregate interference power seen at the UE.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceTrace {
    pub samples: Vec<f64>,
    /// `per_interferer[i][t]`, kept when the trace was simulated.
    pub per_interferer: Option<Vec<Vec<f64>>>,
}

impl InterferenceTrace {
    pub fn from_total(samples: Vec<f64>) -> Self {
        Self {
            samples,
            per_interferer: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Desired received power `S` per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredTrace {
    pub samples: Vec<f64>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn block_rayleigh(mean_power: f64, n: usize, block_len: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let e: f64 = rng.sample(Exp1);
        let value = mean_power * e;
        let take = block_len.min(n - out.len());
        out.extend(std::iter::repeat_n(value, take));
    }
    out
}

fn check_block_args(mean_power: f64, n: usize, block_len: usize) -> Result<()> {
    if !(mean_power.is_finite() && mean_power > 0.0) {
        return Err(invalid(format!("mean power must be positive, got {mean_power}")));
    }
    if n == 0 || block_len == 0 {
        return Err(invalid("sample count and block length must be positive"));
    }
    Ok(())
}

/// Draw `n` block-faded powers with mean `mean_power`, constant over blocks
/// of `block_len` samples. Uses stream 0 of `seed`.
pub fn gen_block_rayleigh_powers(
    mean_power: f64,
    n: usize,
    block_len: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_block_args(mean_power, n, block_len)?;
    Ok(block_rayleigh(mean_power, n, block_len, &mut rng_for(seed, 0)))
}

/// Simulate every interferer on its own stream and sum them.
pub fn gen_interference_trace(config: &LinkConfig) -> Result<InterferenceTrace> {
    config.validate()?;
    let per_interferer = config
        .interferer_mean_powers()
        .into_iter()
        .enumerate()
        .map(|(i, mean)| {
            check_block_args(mean, config.n_samples, config.coherence_block_len)?;
            let mut rng = rng_for(config.rng_seed, i as u64 + 1);
            Ok(block_rayleigh(
                mean,
                config.n_samples,
                config.coherence_block_len,
                &mut rng,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let samples = (0..config.n_samples)
        .map(|t| per_interferer.iter().map(|row| row[t]).sum())
        .collect();
    Ok(InterferenceTrace {
        samples,
        per_interferer: Some(per_interferer),
    })
}

/// Desired power trace. Constant at the mean unless `faded_desired` is set.
pub fn gen_desired_trace(config: &LinkConfig) -> Result<DesiredTrace> {
    config.validate()?;
    let mean = config.desired_mean_power();
    let samples = if config.faded_desired {
        block_rayleigh(
            mean,
            config.n_samples,
            config.coherence_block_len,
            &mut rng_for(config.rng_seed, 0),
        )
    } else {
        vec![mean; config.n_samples]
    };
    Ok(DesiredTrace { samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn exponential_mean_within_three_sigma() {
        let n = 100_000;
        let v = gen_block_rayleigh_powers(1.0, n, 1, 7).unwrap();
        let sigma = 1.0 / (n as f64).sqrt();
        assert!((mean(&v) - 1.0).abs() < 3.0 * sigma, "mean {}", mean(&v));
    }

    #[test]
    fn exponential_variance_is_mean_squared() {
        let v = gen_block_rayleigh_powers(2.0, 100_000, 1, 11).unwrap();
        let m = mean(&v);
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        assert!((var - 4.0).abs() < 0.2, "variance {var}");
    }

    #[test]
    fn blocks_are_constant() {
        let v = gen_block_rayleigh_powers(1.0, 23, 5, 3).unwrap();
        for block in v.chunks(5) {
            assert!(block.iter().all(|&x| x == block[0]));
        }
        assert_ne!(v[0], v[5]);
        assert_eq!(v.len(), 23);
    }

    #[test]
    fn rejects_bad_block_args() {
        assert!(gen_block_rayleigh_powers(0.0, 10, 1, 0).is_err());
        assert!(gen_block_rayleigh_powers(-1.0, 10, 1, 0).is_err());
        assert!(gen_block_rayleigh_powers(1.0, 0, 1, 0).is_err());
        assert!(gen_block_rayleigh_powers(1.0, 10, 0, 0).is_err());
    }

    #[test]
    fn single_interferer_mean_is_noise_power() {
        let cfg = LinkConfig {
            n_interferers: 1,
            interferer_mean_inr_db: vec![0.0],
            n_samples: 100_000,
            ..LinkConfig::default()
        };
        let tr = gen_interference_trace(&cfg).unwrap();
        let sigma = 1.0 / (cfg.n_samples as f64).sqrt();
        assert!((mean(&tr.samples) - 1.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn five_interferer_mean() {
        // 10^0.5 + 10^0.3 + 1 + 10^-0.2 + 10^-0.5
        let expected = 7.1046;
        let cfg = LinkConfig {
            n_samples: 100_000,
            ..LinkConfig::default()
        };
        let tr = gen_interference_trace(&cfg).unwrap();
        let m = mean(&tr.samples);
        assert!((m - expected).abs() / expected < 0.05, "mean {m}");

        let per = tr.per_interferer.as_ref().unwrap();
        for (row, want) in per.iter().zip(cfg.interferer_mean_powers()) {
            assert!((mean(row) - want).abs() / want < 0.05);
        }
    }

    #[test]
    fn aggregate_is_row_sum_and_deterministic() {
        let cfg = LinkConfig {
            n_samples: 500,
            coherence_block_len: 4,
            ..LinkConfig::default()
        };
        let a = gen_interference_trace(&cfg).unwrap();
        let b = gen_interference_trace(&cfg).unwrap();
        assert_eq!(a, b);
        let per = a.per_interferer.as_ref().unwrap();
        for t in 0..cfg.n_samples {
            let s: f64 = per.iter().map(|r| r[t]).sum();
            assert!((s - a.samples[t]).abs() <= 1e-12 * s.abs());
            assert!(a.samples[t] >= 0.0);
        }
        let other = gen_interference_trace(&LinkConfig {
            rng_seed: cfg.rng_seed + 1,
            ..cfg.clone()
        })
        .unwrap();
        assert_ne!(a.samples, other.samples);
    }

    #[test]
    fn desired_trace_constant_mode() {
        let d = gen_desired_trace(&LinkConfig::default()).unwrap();
        assert!(d.samples.iter().all(|&s| (s - 100.0).abs() < 1e-12));

        let cfg = LinkConfig {
            desired_mean_snr_db: 10.0,
            interferer_mean_inr_db: vec![0.0],
            n_interferers: 1,
            ..LinkConfig::default()
        };
        assert!(gen_desired_trace(&cfg).unwrap().samples.iter().all(|&s| (s - 10.0).abs() < 1e-12));
    }

    #[test]
    fn desired_trace_zero_db_is_noise_power() {
        let cfg = LinkConfig {
            desired_mean_snr_db: 0.0,
            interferer_mean_inr_db: vec![-3.0],
            n_interferers: 1,
            ..LinkConfig::default()
        };
        assert!(gen_desired_trace(&cfg).unwrap().samples.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn desired_trace_faded_mode_mean() {
        let cfg = LinkConfig {
            faded_desired: true,
            n_samples: 100_000,
            ..LinkConfig::default()
        };
        let d = gen_desired_trace(&cfg).unwrap();
        assert!((mean(&d.samples) - 100.0).abs() / 100.0 < 0.05);
    }

    #[test]
    fn config_validation() {
        let ok = LinkConfig::default();
        assert!(ok.validate().is_ok());
        let bad = [
            LinkConfig { n_interferers: 0, interferer_mean_inr_db: vec![], ..ok.clone() },
            LinkConfig { n_interferers: 4, ..ok.clone() },
            LinkConfig { n_samples: 1, ..ok.clone() },
            LinkConfig { coherence_block_len: 0, ..ok.clone() },
            LinkConfig { noise_power: 0.0, ..ok.clone() },
            LinkConfig { desired_mean_snr_db: 5.0, ..ok.clone() },
            LinkConfig { desired_mean_snr_db: f64::NAN, ..ok.clone() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
