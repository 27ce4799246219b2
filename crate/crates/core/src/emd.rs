//! Empirical mode decomposition.
//!
//! A signal is split into intrinsic mode functions (IMFs) plus a residual by
//! repeated sifting: subtract the mean of the upper and lower cubic-spline
//! envelopes until the candidate is an IMF, remove it, and continue on what
//! is left until the remainder has too few extrema to sift.
//!
//! The IMFs and the residual always sum back to the input; each remainder is
//! computed as `signal - imf`, so the identity holds to rounding error.

use log::debug;

use crate::error::{invalid, Error, Result};

/// How envelopes are extended past the first and last extremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// Reflect the two extrema nearest each end about that end point.
    #[default]
    Mirror,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplineKind {
    #[default]
    NaturalCubic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftParams {
    /// Sifting stops once `sum((h_prev - h)^2) / sum(h_prev^2)` falls below
    /// this value and the candidate satisfies the IMF extrema condition.
    pub sd_threshold: f64,
    pub max_sift_iters: usize,
    pub max_imfs: usize,
    pub boundary_mode: BoundaryMode,
    pub spline: SplineKind,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            sd_threshold: 0.2,
            max_sift_iters: 100,
            max_imfs: 12,
            boundary_mode: BoundaryMode::Mirror,
            spline: SplineKind::NaturalCubic,
        }
    }
}

impl SiftParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sd_threshold.is_finite() && self.sd_threshold > 0.0) {
            return Err(invalid("sd_threshold must be positive"));
        }
        if self.max_sift_iters < 1 || self.max_imfs < 1 {
            return Err(invalid("max_sift_iters and max_imfs must be at least 1"));
        }
        Ok(())
    }
}

/// Output of [`decompose`]: `L - 1` IMFs ordered from fastest to slowest,
/// plus the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ImfSet {
    pub imfs: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
    pub source_len: usize,
}

impl ImfSet {
    /// Number of components `L` (IMFs plus the residual).
    pub fn n_components(&self) -> usize {
        self.imfs.len() + 1
    }

    /// IMFs in order, followed by the residual.
    pub fn components(&self) -> impl Iterator<Item = &[f64]> {
        self.imfs
            .iter()
            .map(Vec::as_slice)
            .chain(std::iter::once(self.residual.as_slice()))
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.residual.clone();
        for imf in &self.imfs {
            for (o, v) in out.iter_mut().zip(imf) {
                *o += v;
            }
        }
        out
    }
}

/// Indices of the interior local maxima and minima.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Extrema {
    pub maxima: Vec<usize>,
    pub minima: Vec<usize>,
}

impl Extrema {
    pub fn count(&self) -> usize {
        self.maxima.len() + self.minima.len()
    }
}

/// Strict interior extrema. A flat run counts once, at its midpoint, when
/// both neighbours are on the same side of it; runs touching either end of
/// the signal are not interior.
pub fn find_extrema(signal: &[f64]) -> Result<Extrema> {
    let n = signal.len();
    if n < 3 {
        return Err(invalid(format!("need at least 3 samples to find extrema, got {n}")));
    }
    let mut ext = Extrema::default();
    let mut i = 1;
    while i < n - 1 {
        let v = signal[i];
        let mut j = i + 1;
        while j < n && signal[j] == v {
            j += 1;
        }
        if j == n {
            break;
        }
        let (left, right) = (signal[i - 1], signal[j]);
        let mid = (i + j - 1) / 2;
        if v > left && v > right {
            ext.maxima.push(mid);
        } else if v < left && v < right {
            ext.minima.push(mid);
        }
        i = j;
    }
    Ok(ext)
}

/// Number of sign changes, skipping exact zeros.
pub fn count_zero_crossings(signal: &[f64]) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for &v in signal {
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = v;
    }
    count
}

/// IMF condition: extrema and zero crossings differ by at most one.
pub fn is_imf(signal: &[f64]) -> bool {
    match find_extrema(signal) {
        Ok(ext) => ext.count().abs_diff(count_zero_crossings(signal)) <= 1,
        Err(_) => false,
    }
}

/// Natural cubic spline through strictly increasing knots.
struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for the interior second derivatives,
            // solved with the Thomas algorithm.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Self { x, y, m }
    }

    /// Evaluate at `0, 1, ..., n - 1`.
    fn sample_grid(&self, n: usize) -> Vec<f64> {
        let mut seg = 0;
        (0..n)
            .map(|t| {
                let t = t as f64;
                while seg + 2 < self.x.len() && t > self.x[seg + 1] {
                    seg += 1;
                }
                let (x0, x1) = (self.x[seg], self.x[seg + 1]);
                let (y0, y1) = (self.y[seg], self.y[seg + 1]);
                let (m0, m1) = (self.m[seg], self.m[seg + 1]);
                let h = x1 - x0;
                let a = (x1 - t) / h;
                let b = (t - x0) / h;
                a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
            })
            .collect()
    }
}

/// Knots for one envelope: the extrema plus up to two mirrored extrema on
/// each side.
fn mirrored_knots(signal: &[f64], idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let last = (signal.len() - 1) as f64;
    let k = idx.len().min(2);
    let mut x = Vec::with_capacity(idx.len() + 2 * k);
    let mut y = Vec::with_capacity(idx.len() + 2 * k);
    for &i in idx[..k].iter().rev() {
        x.push(-(i as f64));
        y.push(signal[i]);
    }
    for &i in idx {
        x.push(i as f64);
        y.push(signal[i]);
    }
    for &i in idx[idx.len() - k..].iter().rev() {
        x.push(2.0 * last - i as f64);
        y.push(signal[i]);
    }
    (x, y)
}

/// Upper and lower envelopes through the maxima and minima.
///
/// Returns [`Error::MonotoneResidual`] when either set of extrema is empty.
/// The envelopes may cross; no ordering between them is enforced.
pub fn envelopes(signal: &[f64], params: &SiftParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let ext = find_extrema(signal)?;
    envelopes_from(signal, &ext, params)
}

fn envelopes_from(
    signal: &[f64],
    ext: &Extrema,
    params: &SiftParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if ext.maxima.is_empty() || ext.minima.is_empty() {
        return Err(Error::MonotoneResidual);
    }
    let BoundaryMode::Mirror = params.boundary_mode;
    let SplineKind::NaturalCubic = params.spline;
    let envelope = |idx: &[usize]| {
        let (x, y) = mirrored_knots(signal, idx);
        NaturalSpline::new(x, y).sample_grid(signal.len())
    };
    Ok((envelope(&ext.maxima), envelope(&ext.minima)))
}

/// Extract one IMF. Returns `(imf, signal - imf)`.
pub fn sift_one_imf(signal: &[f64], params: &SiftParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut h = signal.to_vec();
    let mut converged = false;
    for iter in 0..params.max_sift_iters {
        let ext = find_extrema(&h)?;
        let (upper, lower) = match envelopes_from(&h, &ext, params) {
            Ok(env) => env,
            Err(Error::MonotoneResidual) if iter > 0 => {
                converged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let mut diff_sq = 0.0;
        let mut prev_sq = 0.0;
        for ((v, u), l) in h.iter_mut().zip(&upper).zip(&lower) {
            let mean = 0.5 * (u + l);
            diff_sq += mean * mean;
            prev_sq += *v * *v;
            *v -= mean;
        }
        if prev_sq == 0.0 || (diff_sq / prev_sq < params.sd_threshold && is_imf(&h)) {
            converged = true;
            break;
        }
    }
    if !converged {
        debug!("sifting stopped at max_sift_iters={}", params.max_sift_iters);
    }
    let remainder = signal.iter().zip(&h).map(|(s, v)| s - v).collect();
    Ok((h, remainder))
}

/// Remainders whose range is below this fraction of the input's range are
/// treated as constant.
const FLAT_TOL: f64 = 1e-10;

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Decompose `signal` into IMFs and a residual. The number of IMFs depends
/// on the data; sifting stops when the remainder has no maxima or no minima,
/// is constant up to rounding, or after `max_imfs` IMFs.
pub fn decompose(signal: &[f64], params: &SiftParams) -> Result<ImfSet> {
    params.validate()?;
    if signal.len() < 4 {
        return Err(invalid(format!(
            "need at least 4 samples to decompose, got {}",
            signal.len()
        )));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(invalid("signal contains non-finite values"));
    }
    let (lo, hi) = min_max(signal);
    let flat_tol = FLAT_TOL * (hi - lo);
    let mut imfs: Vec<Vec<f64>> = Vec::new();
    let mut remainder = signal.to_vec();
    while imfs.len() < params.max_imfs {
        let (r_lo, r_hi) = min_max(&remainder);
        if r_hi - r_lo <= flat_tol {
            // Only rounding noise is left: move it into the last IMF so
            // the residual is exactly constant.
            if let Some(last) = imfs.last_mut() {
                let mean = remainder.iter().sum::<f64>() / remainder.len() as f64;
                for (v, r) in last.iter_mut().zip(remainder.iter_mut()) {
                    *v += *r - mean;
                    *r = mean;
                }
            }
            break;
        }
        match sift_one_imf(&remainder, params) {
            Ok((imf, rest)) => {
                imfs.push(imf);
                remainder = rest;
            }
            Err(Error::MonotoneResidual) => break,
            Err(e) => return Err(e),
        }
    }
    if imfs.len() == params.max_imfs {
        debug!("decomposition stopped at max_imfs={}", params.max_imfs);
    }
    Ok(ImfSet {
        imfs,
        residual: remainder,
        source_len: signal.len(),
    })
}
