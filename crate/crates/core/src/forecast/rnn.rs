//! One-step LSTM predictor trained on sliding windows of a min-max
//! normalised series.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lstm::{Adam, AdamConfig, CellActivation, LstmNet};
use crate::error::{invalid, Error, Result};

/// How the model is updated between rolling forecast steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RnnRefit {
    /// Keep the initially trained weights.
    Frozen,
    /// Run `epochs` more epochs over the `recent_pairs` newest training
    /// pairs after every observed sample.
    FineTune { epochs: usize, recent_pairs: usize },
    /// Retrain from scratch on the whole history every step.
    Retrain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentSpec {
    pub layers: usize,
    pub units: usize,
    pub epochs: usize,
    /// Input sequence length.
    pub window: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Nonlinearity of the candidate input and cell output; gates stay
    /// logistic and the output unit is linear.
    pub cell_activation: CellActivation,
    pub refit: RnnRefit,
}

impl Default for RecurrentSpec {
    fn default() -> Self {
        Self {
            layers: 2,
            units: 100,
            epochs: 100,
            window: 30,
            batch_size: 32,
            adam: AdamConfig::default(),
            cell_activation: CellActivation::Tanh,
            refit: RnnRefit::FineTune {
                epochs: 5,
                recent_pairs: 32,
            },
        }
    }
}

impl RecurrentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 || self.units < 1 || self.epochs < 1 || self.window < 1 {
            return Err(invalid("recurrent layers, units, epochs and window must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        if let RnnRefit::FineTune { recent_pairs, .. } = self.refit {
            if recent_pairs < 1 {
                return Err(invalid("fine-tune needs at least one recent pair"));
            }
        }
        Ok(())
    }
}

/// Affine map of the training range onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub scale: f64,
}

impl MinMax {
    pub fn fit(series: &[f64]) -> Self {
        let min = series.iter().copied().fold(f64::INFINITY, f64::min);
        let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        Self {
            min,
            scale: if span > 0.0 { span } else { 1.0 },
        }
    }

    pub fn forward(&self, x: f64) -> f64 {
        (x - self.min) / self.scale
    }

    pub fn inverse(&self, y: f64) -> f64 {
        y * self.scale + self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    pub net: LstmNet,
    pub norm: MinMax,
    pub spec: RecurrentSpec,
    optimizer: Adam,
    seed: u64,
}

/// Train a fresh model on `series`. The normalisation is fitted to `series`
/// and kept for later predictions.
pub fn train_rnn(series: &[f64], spec: &RecurrentSpec, seed: u64) -> Result<RnnModel> {
    spec.validate()?;
    if series.len() < spec.window + 1 {
        return Err(invalid(format!(
            "recurrent training needs at least {} samples, got {}",
            spec.window + 1,
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(invalid("training series contains non-finite values"));
    }
    let net = LstmNet::new(spec.layers, spec.units, spec.cell_activation, seed);
    let optimizer = Adam::new(spec.adam, net.n_params());
    let mut model = RnnModel {
        net,
        norm: MinMax::fit(series),
        spec: spec.clone(),
        optimizer,
        seed,
    };
    let pairs = model.pair_targets(series.len(), series.len() - spec.window);
    model.run_epochs(series, &pairs, spec.epochs, seed)?;
    Ok(model)
}

impl RnnModel {
    /// Targets of the `count` newest (window -> next value) pairs in a
    /// history of length `len`.
    fn pair_targets(&self, len: usize, count: usize) -> Vec<usize> {
        let first = len - count;
        (first.max(self.spec.window)..len).collect()
    }

    fn run_epochs(&mut self, series: &[f64], targets: &[usize], epochs: usize, seed: u64) -> Result<()> {
        let w = self.spec.window;
        let norm: Vec<f64> = series.iter().map(|&x| self.norm.forward(x)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5DEECE66D);
        let mut order = targets.to_vec();
        let mut inputs = Vec::with_capacity(self.spec.batch_size * w);
        let mut ys = Vec::with_capacity(self.spec.batch_size);
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(self.spec.batch_size) {
                inputs.clear();
                ys.clear();
                for &t in chunk {
                    inputs.extend_from_slice(&norm[t - w..t]);
                    ys.push(norm[t]);
                }
                let (loss, grads) = self.net.loss_and_grad(&inputs, &ys, w);
                if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                    return Err(Error::TrainingDiverged { epoch });
                }
                epoch_loss += loss;
                self.optimizer.update(&mut self.net.params, &grads);
            }
            if !epoch_loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
        }
        Ok(())
    }

    /// Forecast the sample following `history` from its last `window`
    /// samples.
    pub fn predict_next(&self, history: &[f64]) -> Result<f64> {
        let w = self.spec.window;
        if history.len() < w {
            return Err(invalid(format!("need {w} samples of history, got {}", history.len())));
        }
        let input: Vec<f64> = history[history.len() - w..]
            .iter()
            .map(|&x| self.norm.forward(x))
            .collect();
        Ok(self.norm.inverse(self.net.predict(&input)))
    }

    /// Update the model after `history` grew by one observed sample,
    /// according to the refit policy. `step` seeds the shuffling.
    pub fn refit(&mut self, history: &[f64], step: usize) -> Result<()> {
        let step_seed = self.seed.wrapping_add((step as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        match self.spec.refit {
            RnnRefit::Frozen => Ok(()),
            RnnRefit::FineTune {
                epochs,
                recent_pairs,
            } => {
                let available = history.len() - self.spec.window;
                let targets = self.pair_targets(history.len(), recent_pairs.min(available));
                self.run_epochs(history, &targets, epochs, step_seed)
            }
            RnnRefit::Retrain => {
                *self = train_rnn(history, &self.spec, self.seed)?;
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> RecurrentSpec {
        RecurrentSpec {
            layers: 1,
            units: 8,
            epochs: 60,
            window: 10,
            batch_size: 16,
            adam: AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
            ..RecurrentSpec::default()
        }
    }

    #[test]
    fn constant_series_is_reproduced() {
        let s = vec![7.5; 120];
        let model = train_rnn(&s, &small_spec(), 1).unwrap();
        let pred = model.predict_next(&s).unwrap();
        assert!((pred - 7.5).abs() < 0.075, "{pred}");
    }

    #[test]
    fn training_is_deterministic() {
        let s: Vec<f64> = (0..80).map(|t| (t as f64 * 0.3).sin()).collect();
        let spec = RecurrentSpec { epochs: 3, ..small_spec() };
        let a = train_rnn(&s, &spec, 42).unwrap();
        let b = train_rnn(&s, &spec, 42).unwrap();
        assert_eq!(a.net.params, b.net.params);
        let c = train_rnn(&s, &spec, 43).unwrap();
        assert_ne!(a.net.params, c.net.params);
    }

    #[test]
    fn rejects_short_series() {
        let spec = small_spec();
        assert!(train_rnn(&[1.0; 10], &spec, 0).is_err());
        assert!(train_rnn(&[1.0; 11], &spec, 0).is_ok());
    }

    #[test]
    fn divergence_is_reported() {
        let s: Vec<f64> = (0..40).map(|t| (t % 5) as f64).collect();
        let spec = RecurrentSpec {
            epochs: 5,
            adam: AdamConfig {
                learning_rate: f64::INFINITY,
                ..AdamConfig::default()
            },
            ..small_spec()
        };
        assert!(matches!(
            train_rnn(&s, &spec, 0),
            Err(Error::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn minmax_round_trip() {
        let m = MinMax::fit(&[2.0, 6.0, 4.0]);
        assert_eq!(m.forward(2.0), 0.0);
        assert_eq!(m.forward(6.0), 1.0);
        assert_eq!(m.inverse(0.5), 4.0);
        let flat = MinMax::fit(&[3.0, 3.0]);
        assert_eq!(flat.inverse(flat.forward(3.0)), 3.0);
    }
}
