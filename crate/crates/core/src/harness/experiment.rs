//! Monte-Carlo driver: traces, predictions, allocations and aggregates.

use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::baselines::{genie_forecast, iir_forecast};
use crate::chan_sim::{gen_desired_trace, gen_interference_trace, LinkConfig};
use crate::error::{Error, Result};
use crate::fbl_alloc::{AllocationParams, AllocationRecord};
use crate::forecast::{direct_forecast, emd_forecast, rmse, Method, Predictor, TrainValSplit};

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Per-method aggregates. Curves hold one `(target_eps, value)` point per
/// configured target, in ascending target order.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub rmse: Stat,
    pub outage_curve: Vec<(f64, f64)>,
    pub resource_curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedFailure {
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub methods: Vec<MethodSummary>,
    pub target_eps: Vec<f64>,
    /// Link seeds whose results enter the aggregates.
    pub seeds: Vec<u64>,
    pub failures: Vec<SeedFailure>,
    /// Negative predictions raised to zero before allocation, all seeds.
    pub clamped_predictions: usize,
    /// Canonical config text, as written to the manifest.
    pub config_echo: String,
}

impl ExperimentReport {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    /// Mean achieved error of `m` at a configured target.
    pub fn achieved(&self, m: Method, target: f64) -> Option<f64> {
        self.method(m)?
            .outage_curve
            .iter()
            .find(|(e, _)| *e == target)
            .map(|(_, v)| *v)
    }
}

/// What one seed contributes.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    /// Indexed like the config's method list.
    pub rmse: Vec<f64>,
    /// `[method][eps]` mean achieved error over validation steps.
    pub mean_eps: Vec<Vec<f64>>,
    /// `[method][eps]` mean channel uses over validation steps.
    pub mean_r: Vec<Vec<f64>>,
    pub clamped: usize,
}

/// Link configuration of the `index`-th Monte-Carlo repetition.
pub fn seed_link(cfg: &ExperimentConfig, index: usize) -> LinkConfig {
    LinkConfig {
        rng_seed: cfg.link.rng_seed.wrapping_add(index as u64),
        ..cfg.link.clone()
    }
}

/// Seed of the recurrent models trained on the trace with `link_seed`.
pub fn rnn_seed(link_seed: u64) -> u64 {
    link_seed ^ 0x5DEE_CE66_D1CE_4E5B
}

/// Validation-window predictions of one method.
pub fn predict_method(
    method: Method,
    trace: &[f64],
    split: &TrainValSplit,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let ar = Predictor::Ar(cfg.arima.clone());
    let rnn = Predictor::Rnn {
        spec: cfg.rnn.clone(),
        seed,
    };
    Ok(match method {
        Method::ArEmd => emd_forecast(trace, split, &ar, &cfg.sift)?.predictions,
        Method::ArDirect => direct_forecast(trace, split, &ar)?.predictions,
        Method::RnnEmd => emd_forecast(trace, split, &rnn, &cfg.sift)?.predictions,
        Method::RnnDirect => direct_forecast(trace, split, &rnn)?.predictions,
        Method::Iir => iir_forecast(trace, split, &cfg.iir)?,
        Method::Genie => genie_forecast(trace, split)?,
    })
}

/// Every configured method's predictions, in config order.
pub fn predict_all(
    trace: &[f64],
    split: &TrainValSplit,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<(Method, Vec<f64>)>> {
    cfg.methods
        .par_iter()
        .map(|&m| {
            predict_method(m, trace, split, cfg, seed).map(|p| (m, p))
        })
        .collect()
}

/// Allocate every validation step for one target. Returns the records and
/// the number of clamped negative predictions.
pub fn allocate_window(
    signal: &[f64],
    trace: &[f64],
    predictions: &[f64],
    split: &TrainValSplit,
    target_eps: f64,
    params: &AllocationParams,
) -> Result<(Vec<AllocationRecord>, usize)> {
    split.check_len(trace.len())?;
    if signal.len() != trace.len() || predictions.len() != split.val_len {
        return Err(Error::InvalidArgument(format!(
            "allocation needs {} signal samples and {} predictions, got {} and {}",
            trace.len(),
            split.val_len,
            signal.len(),
            predictions.len()
        )));
    }
    let mut clamped = 0;
    let records = predictions
        .iter()
        .enumerate()
        .map(|(k, &pred)| {
            let t = split.train_len + k;
            let (rec, c) =
                AllocationRecord::evaluate(t, signal[t], pred, trace[t], target_eps, params)
                    .map_err(|e| e.at_step(t))?;
            clamped += c as usize;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((records, clamped))
}

pub fn allocation_params(cfg: &ExperimentConfig) -> AllocationParams {
    AllocationParams {
        payload_bits: cfg.payload_bits,
        noise_power: cfg.link.noise_power,
        integer_r: cfg.integer_r,
    }
}

/// Full pipeline for the `index`-th repetition.
pub fn run_seed(cfg: &ExperimentConfig, index: usize) -> Result<SeedResult> {
    let link = seed_link(cfg, index);
    let split = cfg.split()?;
    let trace = gen_interference_trace(&link)?.samples;
    let signal = gen_desired_trace(&link)?.samples;
    let actual = &trace[split.train_len..];
    let params = allocation_params(cfg);
    let predictions = predict_all(&trace, &split, cfg, rnn_seed(link.rng_seed))?;

    let mut result = SeedResult {
        seed: link.rng_seed,
        rmse: Vec::new(),
        mean_eps: Vec::new(),
        mean_r: Vec::new(),
        clamped: 0,
    };
    let m = split.val_len as f64;
    for (_, pred) in &predictions {
        result.rmse.push(rmse(pred, actual)?);
        let mut eps_row = Vec::new();
        let mut r_row = Vec::new();
        for &eps in &cfg.target_eps_list {
            let (records, clamped) = allocate_window(&signal, &trace, pred, &split, eps, &params)?;
            // Clamping does not depend on the target; count it once.
            if eps == cfg.target_eps_list[0] {
                result.clamped += clamped;
            }
            eps_row.push(records.iter().map(|r| r.achieved_eps).sum::<f64>() / m);
            r_row.push(records.iter().map(|r| r.channel_uses).sum::<f64>() / m);
        }
        result.mean_eps.push(eps_row);
        result.mean_r.push(r_row);
    }
    Ok(result)
}

/// Run all seeds in parallel and aggregate. Seeds that fail are listed in
/// the report; more than 20% failures abort the experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let outcomes: Vec<(u64, Result<SeedResult>)> = (0..cfg.n_seeds)
        .into_par_iter()
        .map(|i| (seed_link(cfg, i).rng_seed, run_seed(cfg, i)))
        .collect();

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(r) => ok.push(r),
            Err(e) => {
                log::warn!("seed {seed} failed: {e}");
                failures.push(SeedFailure {
                    seed,
                    message: e.to_string(),
                })
            }
        }
    }
    if ok.is_empty() || failures.len() * 5 > cfg.n_seeds {
        return Err(Error::ExperimentFailed {
            failed: failures.len(),
            total: cfg.n_seeds,
        });
    }
    Ok(aggregate(cfg, &ok, failures))
}

/// Combine per-seed results; every mean is over the same seed set.
pub fn aggregate(
    cfg: &ExperimentConfig,
    seeds: &[SeedResult],
    failures: Vec<SeedFailure>,
) -> ExperimentReport {
    let n = seeds.len() as f64;
    let methods = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let rmses: Vec<f64> = seeds.iter().map(|s| s.rmse[mi]).collect();
            let curve = |pick: fn(&SeedResult) -> &Vec<Vec<f64>>| {
                cfg.target_eps_list
                    .iter()
                    .enumerate()
                    .map(|(ei, &eps)| (eps, seeds.iter().map(|s| pick(s)[mi][ei]).sum::<f64>() / n))
                    .collect()
            };
            MethodSummary {
                method,
                rmse: Stat::of(&rmses),
                outage_curve: curve(|s| &s.mean_eps),
                resource_curve: curve(|s| &s.mean_r),
            }
        })
        .collect();
    ExperimentReport {
        methods,
        target_eps: cfg.target_eps_list.clone(),
        seeds: seeds.iter().map(|s| s.seed).collect(),
        failures,
        clamped_predictions: seeds.iter().map(|s| s.clamped).sum(),
        config_echo: cfg.experiment_kv(),
    }
}
