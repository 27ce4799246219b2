//! Stacked LSTM regressor with a linear output unit, trained by
//! backpropagation through time and Adam.
//!
//! Every parameter lives in one flat vector so the optimiser and the
//! finite-difference checks can treat the network uniformly. Per layer the
//! layout is the gate weight matrix `[(input + hidden) x 4 hidden]`
//! (row-major, gate columns ordered input, forget, candidate, output)
//! followed by the gate biases; the output unit's weights and bias come
//! last.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Nonlinearity of the candidate cell input and of the cell output.
/// The gates are always logistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellActivation {
    #[default]
    Tanh,
    Relu,
}

impl CellActivation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            CellActivation::Tanh => x.tanh(),
            CellActivation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    #[inline]
    fn grad(self, x: f64, y: f64) -> f64 {
        match self {
            CellActivation::Tanh => 1.0 - y * y,
            CellActivation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step);
        let bc2 = 1.0 - beta2.powi(self.step);
        let lr = learning_rate * bc2.sqrt() / bc1;
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * *m / (v.sqrt() + epsilon);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerShape {
    input: usize,
    hidden: usize,
    w_off: usize,
    b_off: usize,
}

impl LayerShape {
    fn cols(&self) -> usize {
        self.input + self.hidden
    }
}

/// Names and index ranges of every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorInfo {
    pub name: String,
    pub range: std::ops::Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmNet {
    layers: Vec<LayerShape>,
    head_off: usize,
    pub activation: CellActivation,
    pub params: Vec<f64>,
}

/// Activations kept from the forward pass.
struct LayerCache {
    /// `[steps][batch x cols]`: layer input concatenated with previous h.
    xh: Vec<Vec<f64>>,
    /// `[steps][batch x 4 hidden]`: gate outputs after their nonlinearity.
    gates: Vec<Vec<f64>>,
    /// `[steps + 1][batch x hidden]`, index 0 is the zero initial state.
    cell: Vec<Vec<f64>>,
    /// `[steps][batch x hidden]`: activation of the cell state.
    cell_act: Vec<Vec<f64>>,
    /// `[steps][batch x hidden]`: hidden outputs.
    h_out: Vec<Vec<f64>>,
}

pub struct ForwardCache {
    batch: usize,
    layers: Vec<LayerCache>,
    /// Final hidden state of the top layer, `batch x hidden`.
    top: Vec<f64>,
}

/// `c = a * b` (`accumulate` adds to `c`), row-major, `a: m x k`,
/// `b: k x n`; transposes are expressed through strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_rs: isize,
    a_cs: isize,
    b: &[f64],
    b_rs: isize,
    b_cs: isize,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides describe in-bounds views of `a`, `b` and `c`,
    // which are checked by the callers' shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_rs,
            a_cs,
            b.as_ptr(),
            b_rs,
            b_cs,
            if accumulate { 1.0 } else { 0.0 },
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl LstmNet {
    /// Build a network with scalar input. Weights are uniform in
    /// `+-1/sqrt(fan_in)`, gate biases zero except the forget gate at 1.
    pub fn new(n_layers: usize, hidden: usize, activation: CellActivation, seed: u64) -> Self {
        let mut layers = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            let input = if l == 0 { 1 } else { hidden };
            let w_off = off;
            off += (input + hidden) * 4 * hidden;
            let b_off = off;
            off += 4 * hidden;
            layers.push(LayerShape {
                input,
                hidden,
                w_off,
                b_off,
            });
        }
        let head_off = off;
        off += hidden + 1;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; off];
        for shape in &layers {
            let bound = 1.0 / (shape.cols() as f64).sqrt();
            for w in &mut params[shape.w_off..shape.b_off] {
                *w = rng.random_range(-bound..bound);
            }
            for b in &mut params[shape.b_off + hidden..shape.b_off + 2 * hidden] {
                *b = 1.0;
            }
        }
        let bound = 1.0 / (hidden as f64).sqrt();
        for w in &mut params[head_off..head_off + hidden] {
            *w = rng.random_range(-bound..bound);
        }
        Self {
            layers,
            head_off,
            activation,
            params,
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn tensors(&self) -> Vec<TensorInfo> {
        let mut out = Vec::new();
        for (l, s) in self.layers.iter().enumerate() {
            out.push(TensorInfo {
                name: format!("layer{l}.weight"),
                range: s.w_off..s.b_off,
            });
            out.push(TensorInfo {
                name: format!("layer{l}.bias"),
                range: s.b_off..s.b_off + 4 * s.hidden,
            });
        }
        let h = self.hidden();
        out.push(TensorInfo {
            name: "head.weight".into(),
            range: self.head_off..self.head_off + h,
        });
        out.push(TensorInfo {
            name: "head.bias".into(),
            range: self.head_off + h..self.head_off + h + 1,
        });
        out
    }

    /// Forward pass. `inputs` is `batch x steps`, row-major.
    pub fn forward(&self, inputs: &[f64], batch: usize, steps: usize) -> (Vec<f64>, ForwardCache) {
        assert_eq!(inputs.len(), batch * steps);
        let act = self.activation;
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        for (l, shape) in self.layers.iter().enumerate() {
            let (nin, h, cols) = (shape.input, shape.hidden, shape.cols());
            let w = &self.params[shape.w_off..shape.b_off];
            let bias = &self.params[shape.b_off..shape.b_off + 4 * h];
            let mut cache = LayerCache {
                xh: Vec::with_capacity(steps),
                gates: Vec::with_capacity(steps),
                cell: Vec::with_capacity(steps + 1),
                cell_act: Vec::with_capacity(steps),
                h_out: Vec::with_capacity(steps),
            };
            cache.cell.push(vec![0.0; batch * h]);
            let mut h_prev = vec![0.0; batch * h];
            for t in 0..steps {
                let mut xh = vec![0.0; batch * cols];
                for b in 0..batch {
                    let row = &mut xh[b * cols..(b + 1) * cols];
                    if l == 0 {
                        row[0] = inputs[b * steps + t];
                    } else {
                        let below = &caches[l - 1].h_out[t];
                        row[..nin].copy_from_slice(&below[b * nin..(b + 1) * nin]);
                    }
                    row[nin..].copy_from_slice(&h_prev[b * h..(b + 1) * h]);
                }
                let mut z = vec![0.0; batch * 4 * h];
                for b in 0..batch {
                    z[b * 4 * h..(b + 1) * 4 * h].copy_from_slice(bias);
                }
                gemm(
                    batch, cols, 4 * h, &xh, cols as isize, 1, w, 4 * h as isize, 1, &mut z, true,
                );
                let c_prev = &cache.cell[t];
                let mut c_new = vec![0.0; batch * h];
                let mut c_act = vec![0.0; batch * h];
                for b in 0..batch {
                    let zr = &mut z[b * 4 * h..(b + 1) * 4 * h];
                    for j in 0..h {
                        let i_g = sigmoid(zr[j]);
                        let f_g = sigmoid(zr[h + j]);
                        let g_g = act.apply(zr[2 * h + j]);
                        let o_g = sigmoid(zr[3 * h + j]);
                        zr[j] = i_g;
                        zr[h + j] = f_g;
                        zr[2 * h + j] = g_g;
                        zr[3 * h + j] = o_g;
                        let c = f_g * c_prev[b * h + j] + i_g * g_g;
                        let ca = act.apply(c);
                        c_new[b * h + j] = c;
                        c_act[b * h + j] = ca;
                        h_prev[b * h + j] = o_g * ca;
                    }
                }
                cache.xh.push(xh);
                cache.gates.push(z);
                cache.cell.push(c_new);
                cache.cell_act.push(c_act);
                cache.h_out.push(h_prev.clone());
            }
            caches.push(cache);
        }

        let h = self.hidden();
        let top = caches.last().unwrap().h_out[steps - 1].clone();
        let head_w = &self.params[self.head_off..self.head_off + h];
        let head_b = self.params[self.head_off + h];
        let out = (0..batch)
            .map(|b| {
                head_b
                    + top[b * h..(b + 1) * h]
                        .iter()
                        .zip(head_w)
                        .map(|(x, w)| x * w)
                        .sum::<f64>()
            })
            .collect();
        (
            out,
            ForwardCache {
                batch,
                layers: caches,
                top,
            },
        )
    }

    /// Gradient of the loss with respect to every parameter, given the
    /// gradient `d_out` with respect to each output.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64]) -> Vec<f64> {
        let batch = cache.batch;
        let steps = cache.layers[0].xh.len();
        let act = self.activation;
        let mut grads = vec![0.0; self.params.len()];
        let h_top = self.hidden();

        let head_w = &self.params[self.head_off..self.head_off + h_top];
        for b in 0..batch {
            let top = &cache.top[b * h_top..(b + 1) * h_top];
            for j in 0..h_top {
                grads[self.head_off + j] += d_out[b] * top[j];
            }
            grads[self.head_off + h_top] += d_out[b];
        }

        // gradient flowing into each layer's hidden outputs, per step
        let mut d_hidden_in: Vec<Vec<f64>> = vec![vec![0.0; batch * h_top]; steps];
        for b in 0..batch {
            for j in 0..h_top {
                d_hidden_in[steps - 1][b * h_top + j] = d_out[b] * head_w[j];
            }
        }

        for (l, shape) in self.layers.iter().enumerate().rev() {
            let (nin, h, cols) = (shape.input, shape.hidden, shape.cols());
            let w = &self.params[shape.w_off..shape.b_off];
            let lc = &cache.layers[l];
            let mut d_below: Vec<Vec<f64>> = if l > 0 {
                vec![vec![0.0; batch * nin]; steps]
            } else {
                Vec::new()
            };
            let mut dh_next = vec![0.0; batch * h];
            let mut dc_next = vec![0.0; batch * h];
            let mut dz = vec![0.0; batch * 4 * h];
            let mut dxh = vec![0.0; batch * cols];
            let (gw, rest) = grads[shape.w_off..].split_at_mut(shape.b_off - shape.w_off);
            let gb = &mut rest[..4 * h];
            for t in (0..steps).rev() {
                let gates = &lc.gates[t];
                let c_prev = &lc.cell[t];
                let c_raw = &lc.cell[t + 1];
                let c_act = &lc.cell_act[t];
                for b in 0..batch {
                    for j in 0..h {
                        let k = b * h + j;
                        let gr = b * 4 * h;
                        let (i_g, f_g, g_g, o_g) = (
                            gates[gr + j],
                            gates[gr + h + j],
                            gates[gr + 2 * h + j],
                            gates[gr + 3 * h + j],
                        );
                        let dh = d_hidden_in[t][k] + dh_next[k];
                        let dc = dc_next[k] + dh * o_g * act.grad(c_raw[k], c_act[k]);
                        let d_o = dh * c_act[k];
                        let d_i = dc * g_g;
                        let d_g = dc * i_g;
                        let d_f = dc * c_prev[k];
                        dc_next[k] = dc * f_g;
                        dz[gr + j] = d_i * i_g * (1.0 - i_g);
                        dz[gr + h + j] = d_f * f_g * (1.0 - f_g);
                        // for ReLU the sign of the output equals that of the input
                        dz[gr + 2 * h + j] = d_g * act.grad(g_g, g_g);
                        dz[gr + 3 * h + j] = d_o * o_g * (1.0 - o_g);
                    }
                }
                for b in 0..batch {
                    for (acc, v) in gb.iter_mut().zip(&dz[b * 4 * h..(b + 1) * 4 * h]) {
                        *acc += v;
                    }
                }
                // dW += xh^T dz
                gemm(
                    cols,
                    batch,
                    4 * h,
                    &lc.xh[t],
                    1,
                    cols as isize,
                    &dz,
                    4 * h as isize,
                    1,
                    gw,
                    true,
                );
                // dxh = dz W^T
                gemm(
                    batch,
                    4 * h,
                    cols,
                    &dz,
                    4 * h as isize,
                    1,
                    w,
                    1,
                    4 * h as isize,
                    &mut dxh,
                    false,
                );
                for b in 0..batch {
                    let row = &dxh[b * cols..(b + 1) * cols];
                    if l > 0 {
                        d_below[t][b * nin..(b + 1) * nin].copy_from_slice(&row[..nin]);
                    }
                    dh_next[b * h..(b + 1) * h].copy_from_slice(&row[nin..]);
                }
            }
            if l > 0 {
                d_hidden_in = d_below;
            }
        }
        grads
    }

    /// Mean squared error over the batch and its gradient.
    pub fn loss_and_grad(&self, inputs: &[f64], targets: &[f64], steps: usize) -> (f64, Vec<f64>) {
        let batch = targets.len();
        let (out, cache) = self.forward(inputs, batch, steps);
        let mut loss = 0.0;
        let d_out: Vec<f64> = out
            .iter()
            .zip(targets)
            .map(|(y, t)| {
                let e = y - t;
                loss += e * e;
                2.0 * e / batch as f64
            })
            .collect();
        (loss / batch as f64, self.backward(&cache, &d_out))
    }

    pub fn loss(&self, inputs: &[f64], targets: &[f64], steps: usize) -> f64 {
        let (out, _) = self.forward(inputs, targets.len(), steps);
        out.iter()
            .zip(targets)
            .map(|(y, t)| (y - t) * (y - t))
            .sum::<f64>()
            / targets.len() as f64
    }

    pub fn predict(&self, window: &[f64]) -> f64 {
        self.forward(window, 1, window.len()).0[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_batch(batch: usize, steps: usize) -> (Vec<f64>, Vec<f64>) {
        let inputs: Vec<f64> = (0..batch * steps)
            .map(|i| ((i as f64) * 0.37 + 0.5).sin())
            .collect();
        let targets: Vec<f64> = (0..batch).map(|b| 0.3 * b as f64 - 0.4).collect();
        (inputs, targets)
    }

    /// Fourth-order central difference of the loss in every parameter.
    fn finite_difference_grads(net: &LstmNet, inputs: &[f64], targets: &[f64], steps: usize) -> Vec<f64> {
        let h = 1e-4;
        (0..net.n_params())
            .map(|i| {
                let at = |delta: f64| {
                    let mut n = net.clone();
                    n.params[i] += delta;
                    n.loss(inputs, targets, steps)
                };
                (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
            })
            .collect()
    }

    fn max_rel_error(net: &LstmNet, inputs: &[f64], targets: &[f64], steps: usize) -> f64 {
        let (_, grads) = net.loss_and_grad(inputs, targets, steps);
        let fd = finite_difference_grads(net, inputs, targets, steps);
        grads
            .iter()
            .zip(&fd)
            .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(1e-8))
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let net = LstmNet::new(2, 5, CellActivation::Tanh, 3);
        let (inputs, targets) = toy_batch(3, 6);
        let err = max_rel_error(&net, &inputs, &targets, 6);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn relu_gradient_matches_away_from_kinks() {
        let net = LstmNet::new(1, 4, CellActivation::Relu, 9);
        let (inputs, targets) = toy_batch(2, 4);
        let err = max_rel_error(&net, &inputs, &targets, 4);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn tensors_cover_all_parameters() {
        let net = LstmNet::new(2, 7, CellActivation::Tanh, 0);
        let t = net.tensors();
        assert_eq!(t.len(), 6);
        assert_eq!(t[0].range.start, 0);
        for w in t.windows(2) {
            assert_eq!(w[0].range.end, w[1].range.start);
        }
        assert_eq!(t.last().unwrap().range.end, net.n_params());
        // layer 0: (1 + 7) x 28 + 28, layer 1: (7 + 7) x 28 + 28, head: 8
        assert_eq!(net.n_params(), 8 * 28 + 28 + 14 * 28 + 28 + 8);
    }

    #[test]
    fn batch_rows_are_independent() {
        let net = LstmNet::new(2, 6, CellActivation::Tanh, 1);
        let (inputs, _) = toy_batch(4, 5);
        let (out, _) = net.forward(&inputs, 4, 5);
        for b in 0..4 {
            let single = net.predict(&inputs[b * 5..(b + 1) * 5]);
            assert!((single - out[b]).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_reduces_quadratic() {
        let mut params = vec![3.0, -2.0];
        let mut adam = Adam::new(AdamConfig { learning_rate: 0.1, ..AdamConfig::default() }, 2);
        for _ in 0..500 {
            let grads: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
            adam.update(&mut params, &grads);
        }
        assert!(params.iter().all(|p| p.abs() < 1e-2), "{params:?}");
    }
}
