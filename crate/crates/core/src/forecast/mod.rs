//! Rolling one-step forecasting of the interference trace, either directly
//! or component-wise on its empirical mode decomposition.

pub mod ar;
pub mod lstm;
pub mod rnn;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

pub use ar::{fit_ar, predict_one_ar, ArimaModel, ArimaSpec};
pub use lstm::{AdamConfig, CellActivation};
pub use rnn::{train_rnn, RecurrentSpec, RnnModel, RnnRefit};

use crate::emd::{decompose, SiftParams};
use crate::error::{invalid, Result};

/// Split of a length-`T` series into `P` training and `M` validation
/// samples, `T = P + M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainValSplit {
    pub train_len: usize,
    pub val_len: usize,
}

impl TrainValSplit {
    pub fn new(train_len: usize, val_len: usize) -> Result<Self> {
        if val_len < 1 {
            return Err(invalid("validation length must be at least 1"));
        }
        Ok(Self { train_len, val_len })
    }

    /// `P = floor(fraction * T)`.
    pub fn from_fraction(total: usize, train_fraction: f64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(invalid(format!("train fraction must lie in (0, 1), got {train_fraction}")));
        }
        let train_len = (train_fraction * total as f64).floor() as usize;
        Self::new(train_len, total.saturating_sub(train_len))
    }

    pub fn total(&self) -> usize {
        self.train_len + self.val_len
    }

    pub fn train_fraction(&self) -> f64 {
        self.train_len as f64 / self.total() as f64
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len != self.total() {
            return Err(invalid(format!(
                "series has {len} samples but the split expects {} + {}",
                self.train_len, self.val_len
            )));
        }
        Ok(())
    }
}

/// Prediction methods compared by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    ArEmd,
    ArDirect,
    RnnEmd,
    RnnDirect,
    Iir,
    Genie,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::ArEmd,
        Method::ArDirect,
        Method::RnnEmd,
        Method::RnnDirect,
        Method::Iir,
        Method::Genie,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ArEmd => "AR_EMD",
            Method::ArDirect => "AR_DIRECT",
            Method::RnnEmd => "RNN_EMD",
            Method::RnnDirect => "RNN_DIRECT",
            Method::Iir => "IIR",
            Method::Genie => "GENIE",
        }
    }

    /// Column name in the prediction CSV.
    pub fn column(self) -> &'static str {
        match self {
            Method::ArEmd => "pred_ar_emd",
            Method::ArDirect => "pred_ar_direct",
            Method::RnnEmd => "pred_rnn_emd",
            Method::RnnDirect => "pred_rnn_direct",
            Method::Iir => "pred_iir",
            Method::Genie => "pred_genie",
        }
    }

    pub fn from_column(col: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.column() == col)
    }

    pub fn uses_emd(self) -> bool {
        matches!(self, Method::ArEmd | Method::RnnEmd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown method '{s}'")))
    }
}

/// A model family plus its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Ar(ArimaSpec),
    Rnn { spec: RecurrentSpec, seed: u64 },
}

impl Predictor {
    fn min_history(&self) -> usize {
        match self {
            Predictor::Ar(spec) => spec.min_len(),
            Predictor::Rnn { spec, .. } => spec.window + 1,
        }
    }

    fn with_seed_offset(&self, offset: u64) -> Predictor {
        match self {
            Predictor::Ar(_) => self.clone(),
            Predictor::Rnn { spec, seed } => Predictor::Rnn {
                spec: spec.clone(),
                seed: splitmix(seed.wrapping_add(offset)),
            },
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub method: Method,
    /// One prediction per validation step.
    pub predictions: Vec<f64>,
    pub rmse: f64,
    /// Predictions of each IMF and then the residual, for EMD methods.
    pub per_component: Option<Vec<Vec<f64>>>,
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(invalid(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            pred.len(),
            actual.len()
        )));
    }
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Walk-forward forecast of `series[P..T]`. Before predicting step `t` the
/// model has seen exactly `series[..t]`; the true value is appended after
/// each prediction.
pub fn rolling_forecast(series: &[f64], split: &TrainValSplit, predictor: &Predictor) -> Result<Vec<f64>> {
    split.check_len(series.len())?;
    let p = split.train_len;
    if p < predictor.min_history() {
        return Err(invalid(format!(
            "training region of {p} samples is shorter than the {} the predictor needs",
            predictor.min_history()
        )));
    }
    match predictor {
        Predictor::Ar(spec) => (p..series.len())
            .map(|t| predict_one_ar(&series[..t], spec).map_err(|e| e.at_step(t)))
            .collect(),
        Predictor::Rnn { spec, seed } => {
            let mut model = train_rnn(&series[..p], spec, *seed).map_err(|e| e.at_step(p))?;
            let mut out = Vec::with_capacity(split.val_len);
            for t in p..series.len() {
                out.push(model.predict_next(&series[..t]).map_err(|e| e.at_step(t))?);
                if t + 1 < series.len() {
                    model.refit(&series[..=t], t).map_err(|e| e.at_step(t))?;
                }
            }
            Ok(out)
        }
    }
}

fn method_for(predictor: &Predictor, emd: bool) -> Method {
    match (predictor, emd) {
        (Predictor::Ar(_), true) => Method::ArEmd,
        (Predictor::Ar(_), false) => Method::ArDirect,
        (Predictor::Rnn { .. }, true) => Method::RnnEmd,
        (Predictor::Rnn { .. }, false) => Method::RnnDirect,
    }
}

/// Forecast the raw series without decomposition.
pub fn direct_forecast(series: &[f64], split: &TrainValSplit, predictor: &Predictor) -> Result<ForecastResult> {
    let predictions = rolling_forecast(series, split, &predictor.with_seed_offset(0))?;
    let rmse = rmse(&predictions, &series[split.train_len..])?;
    Ok(ForecastResult {
        method: method_for(predictor, false),
        predictions,
        rmse,
        per_component: None,
    })
}

/// Decompose the whole series once, forecast every component separately
/// and sum the component forecasts step by step.
pub fn emd_forecast(
    series: &[f64],
    split: &TrainValSplit,
    predictor: &Predictor,
    sift: &SiftParams,
) -> Result<ForecastResult> {
    split.check_len(series.len())?;
    let imfs = decompose(series, sift)?;
    let components: Vec<&[f64]> = imfs.components().collect();
    let per_component = components
        .par_iter()
        .enumerate()
        .map(|(i, comp)| rolling_forecast(comp, split, &predictor.with_seed_offset(i as u64 + 1)))
        .collect::<Result<Vec<_>>>()?;
    let predictions: Vec<f64> = (0..split.val_len)
        .map(|t| per_component.iter().map(|c| c[t]).sum())
        .collect();
    let rmse = rmse(&predictions, &series[split.train_len..])?;
    Ok(ForecastResult {
        method: method_for(predictor, true),
        predictions,
        rmse,
        per_component: Some(per_component),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn tiny_rnn() -> RecurrentSpec {
        RecurrentSpec {
            layers: 1,
            units: 6,
            epochs: 3,
            window: 8,
            batch_size: 8,
            refit: RnnRefit::FineTune {
                epochs: 1,
                recent_pairs: 4,
            },
            ..RecurrentSpec::default()
        }
    }

    #[test]
    fn split_from_fraction() {
        let s = TrainValSplit::from_fraction(1000, 0.8).unwrap();
        assert_eq!((s.train_len, s.val_len), (800, 200));
        assert_eq!(s.total(), 1000);
        assert!(TrainValSplit::from_fraction(10, 1.0).is_err());
        assert!(TrainValSplit::new(10, 0).is_err());
    }

    #[test]
    fn rmse_values() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn single_step_equals_single_prediction() {
        let s: Vec<f64> = (0..60).map(|t| ((t * 13) % 7) as f64).collect();
        let spec = ArimaSpec { p: 3, window: 3, ..ArimaSpec::default() };
        let split = TrainValSplit::new(59, 1).unwrap();
        let out = rolling_forecast(&s, &split, &Predictor::Ar(spec.clone())).unwrap();
        assert_eq!(out, vec![predict_one_ar(&s[..59], &spec).unwrap()]);
    }

    #[test]
    fn ar_beats_persistence_bound_on_random_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut x = 0.0;
        let s: Vec<f64> = (0..400)
            .map(|_| {
                x += rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let split = TrainValSplit::from_fraction(s.len(), 0.8).unwrap();
        let pred = rolling_forecast(&s, &split, &Predictor::Ar(ArimaSpec::default())).unwrap();
        let actual = &s[split.train_len..];
        let naive = &s[split.train_len - 1..s.len() - 1];
        let ar = rmse(&pred, actual).unwrap();
        let persistence = rmse(naive, actual).unwrap();
        assert!(ar <= 1.5 * persistence, "ar {ar} vs naive {persistence}");
    }

    #[test]
    fn affine_series_predicted_exactly() {
        let s: Vec<f64> = (0..100).map(|t| 5.0 - 0.25 * t as f64).collect();
        let split = TrainValSplit::new(40, 60).unwrap();
        let pred = rolling_forecast(&s, &split, &Predictor::Ar(ArimaSpec::default())).unwrap();
        for (p, a) in pred.iter().zip(&s[40..]) {
            assert!((p - a).abs() < 1e-8);
        }
    }

    #[test]
    fn too_short_training_region() {
        let s = vec![1.0; 40];
        let split = TrainValSplit::new(20, 20).unwrap();
        assert!(rolling_forecast(&s, &split, &Predictor::Ar(ArimaSpec::default())).is_err());
        assert!(rolling_forecast(&s[..39], &split, &Predictor::Ar(ArimaSpec::default())).is_err());
    }

    #[test]
    fn rnn_rolling_is_deterministic_and_causal() {
        let s: Vec<f64> = (0..60).map(|t| (t as f64 * 0.4).sin() + 0.1 * t as f64).collect();
        let pred = Predictor::Rnn { spec: tiny_rnn(), seed: 9 };
        let split = TrainValSplit::new(48, 12).unwrap();
        let a = rolling_forecast(&s, &split, &pred).unwrap();
        let b = rolling_forecast(&s, &split, &pred).unwrap();
        assert_eq!(a, b);
        // truncating the future does not change earlier predictions
        let short = TrainValSplit::new(48, 6).unwrap();
        let c = rolling_forecast(&s[..54], &short, &pred).unwrap();
        assert_eq!(&a[..6], &c[..]);
    }

    #[test]
    fn emd_prediction_is_component_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..10.0)).collect();
        let split = TrainValSplit::from_fraction(300, 0.8).unwrap();
        let res = emd_forecast(&s, &split, &Predictor::Ar(ArimaSpec::default()), &SiftParams::default()).unwrap();
        assert_eq!(res.method, Method::ArEmd);
        let comps = res.per_component.as_ref().unwrap();
        assert!(comps.len() >= 2);
        for t in 0..split.val_len {
            let sum: f64 = comps.iter().map(|c| c[t]).sum();
            assert!((sum - res.predictions[t]).abs() <= 1e-12 * sum.abs().max(1.0));
        }
        assert_eq!(res.rmse, rmse(&res.predictions, &s[240..]).unwrap());
    }

    #[test]
    fn monotone_series_emd_equals_direct() {
        let s: Vec<f64> = (0..120).map(|t| (t as f64).sqrt()).collect();
        let split = TrainValSplit::new(100, 20).unwrap();
        let pred = Predictor::Ar(ArimaSpec::default());
        let emd = emd_forecast(&s, &split, &pred, &SiftParams::default()).unwrap();
        let direct = direct_forecast(&s, &split, &pred).unwrap();
        assert_eq!(emd.per_component.as_ref().unwrap().len(), 1);
        assert_eq!(emd.predictions, direct.predictions);
        assert_eq!(direct.method, Method::ArDirect);
        assert!(direct.per_component.is_none());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(Method::from_column(m.column()), Some(m));
        }
        assert!("SVM".parse::<Method>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rmse_scale_equivariant(
            a in prop::collection::vec(-1e3f64..1e3, 1..50),
            c in -10.0f64..10.0,
        ) {
            let b: Vec<f64> = a.iter().map(|x| x * 0.5 + 1.0).collect();
            let ca: Vec<f64> = a.iter().map(|x| c * x).collect();
            let cb: Vec<f64> = b.iter().map(|x| c * x).collect();
            let base = rmse(&a, &b).unwrap();
            prop_assert!(base >= 0.0);
            prop_assert!((rmse(&ca, &cb).unwrap() - c.abs() * base).abs() <= 1e-9 * (1.0 + base * c.abs()));
        }

        #[test]
        fn ar_rolling_is_causal(
            s in prop::collection::vec(0.0f64..20.0, 60..90),
            cut in 1usize..10,
        ) {
            let spec = ArimaSpec { p: 4, window: 4, ..ArimaSpec::default() };
            let split = TrainValSplit::new(50, s.len() - 50).unwrap();
            let full = rolling_forecast(&s, &split, &Predictor::Ar(spec.clone())).unwrap();
            let m = cut.min(split.val_len);
            let short = TrainValSplit::new(50, m).unwrap();
            let trunc = rolling_forecast(&s[..50 + m], &short, &Predictor::Ar(spec)).unwrap();
            prop_assert_eq!(&full[..m], &trunc[..]);
        }
    }
}
