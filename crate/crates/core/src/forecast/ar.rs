//! Integrated autoregressive predictor, ARIMA(p, d, 0), fitted by least
//! squares on the differenced series.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Ridge weight, relative to the mean diagonal of the normal matrix, used
/// when the lagged design is rank deficient.
const RIDGE_LAMBDA: f64 = 1e-8;
/// Cholesky pivots below this ratio (squared, relative to the largest)
/// count as rank deficient.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ArimaSpec {
    pub p: usize,
    pub d: usize,
    /// Moving-average order; only `q = 0` is supported.
    pub q: usize,
    /// Lag span of the differenced samples that feed one prediction.
    pub window: usize,
    /// Fit on at most this many most recent samples; all history if `None`.
    pub fit_len: Option<usize>,
}

impl Default for ArimaSpec {
    fn default() -> Self {
        Self {
            p: 30,
            d: 1,
            q: 0,
            window: 30,
            fit_len: None,
        }
    }
}

impl ArimaSpec {
    pub fn validate(&self) -> Result<()> {
        if self.q != 0 {
            return Err(invalid("moving-average terms (q > 0) are not supported"));
        }
        if self.window < self.p {
            return Err(invalid(format!(
                "AR window {} is shorter than the order p = {}",
                self.window, self.p
            )));
        }
        Ok(())
    }

    /// Shortest series the model can be fitted on: one regression row.
    pub fn min_len(&self) -> usize {
        self.window.max(1) + self.d + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArimaModel {
    /// `coeffs[k]` multiplies the differenced sample `k + 1` steps back.
    pub coeffs: Vec<f64>,
    pub d: usize,
    /// The most recent `p` differenced samples, oldest first.
    recent: Vec<f64>,
    /// Last sample of the series differenced `k` times, for `k < d`.
    last_levels: Vec<f64>,
    /// The normal equations were rank deficient and a ridge term was added.
    pub ridge_used: bool,
}

fn difference(series: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut cur = series.to_vec();
    let mut last_levels = Vec::with_capacity(d);
    for _ in 0..d {
        last_levels.push(*cur.last().unwrap());
        cur = cur.windows(2).map(|w| w[1] - w[0]).collect();
    }
    (cur, last_levels)
}

/// Fit AR(p) coefficients to the `d`-times differenced series.
pub fn fit_ar(series: &[f64], spec: &ArimaSpec) -> Result<ArimaModel> {
    spec.validate()?;
    if series.len() < spec.min_len() {
        return Err(invalid(format!(
            "AR fit needs at least {} samples, got {}",
            spec.min_len(),
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(invalid("AR input contains non-finite values"));
    }
    let series = match spec.fit_len {
        Some(n) if n < series.len() => &series[series.len() - n.max(spec.min_len())..],
        _ => series,
    };
    let (z, last_levels) = difference(series, spec.d);
    let p = spec.p;
    if p == 0 {
        return Ok(ArimaModel {
            coeffs: Vec::new(),
            d: spec.d,
            recent: Vec::new(),
            last_levels,
            ridge_used: false,
        });
    }

    let rows = z.len() - p;
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for r in 0..rows {
        let target = z[p + r];
        // lag k + 1 for column k
        let lags = |k: usize| z[p + r - 1 - k];
        for i in 0..p {
            let xi = lags(i);
            xty[i] += xi * target;
            for j in 0..=i {
                xtx[(i, j)] += xi * lags(j);
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            xtx[(j, i)] = xtx[(i, j)];
        }
    }

    let well_conditioned = xtx.clone().cholesky().filter(|ch| {
        let l = ch.l_dirty();
        let diag: Vec<f64> = (0..p).map(|i| l[(i, i)] * l[(i, i)]).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        max > 0.0 && min / max > RANK_TOL
    });
    let (coeffs, ridge_used) = match well_conditioned {
        Some(ch) => (ch.solve(&xty), false),
        None => {
            let mean_diag = xtx.trace() / p as f64;
            let lambda = RIDGE_LAMBDA * if mean_diag > 0.0 { mean_diag } else { 1.0 };
            let mut reg = xtx;
            for i in 0..p {
                reg[(i, i)] += lambda;
            }
            let solved = reg
                .cholesky()
                .map(|ch| ch.solve(&xty))
                .unwrap_or_else(|| DVector::zeros(p));
            (solved, true)
        }
    };

    Ok(ArimaModel {
        coeffs: coeffs.iter().copied().collect(),
        d: spec.d,
        recent: z[z.len() - p..].to_vec(),
        last_levels,
        ridge_used,
    })
}

impl ArimaModel {
    /// One-step forecast, integrated back to the level of the input series.
    pub fn predict_one(&self) -> f64 {
        let p = self.coeffs.len();
        let mut next: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * self.recent[p - 1 - k])
            .sum();
        for level in self.last_levels.iter().rev() {
            next += level;
        }
        next
    }
}

/// Fit on `series` and forecast the next sample.
pub fn predict_one_ar(series: &[f64], spec: &ArimaSpec) -> Result<f64> {
    Ok(fit_ar(series, spec)?.predict_one())
}
