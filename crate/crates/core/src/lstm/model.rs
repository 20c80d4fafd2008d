use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LstmError;
use crate::nn::ParamBuffer;
use crate::scalar::{axpy, dot, sigmoid, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Drop probability on hidden outputs fed to the next layer.
    pub dropout: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self { input: crate::workload::FEATURE_COUNT, hidden: 128, layers: 3, dropout: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerIdx {
    wx: usize,
    wh: usize,
    b: usize,
    inp: usize,
}

/// Stacked LSTM with a scalar linear readout of the last hidden state.
///
/// Per layer `l` the buffer holds `l{l}.wx` `[input][4H]`, `l{l}.wh`
/// `[H][4H]` and `l{l}.b` `[4H]`, gate blocks ordered input, forget,
/// candidate, output; then `readout.w` `[H]` and `readout.b` `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<T> {
    pub config: LstmConfig,
    pub params: ParamBuffer<T>,
    layers: Vec<LayerIdx>,
    ro_w: usize,
    ro_b: usize,
}

/// Activations of a batched forward pass. Per-layer tensors are
/// time-major `[t][b][·]`.
#[derive(Debug, Clone, Default)]
pub struct LstmCache<T> {
    pub seq_len: usize,
    pub batch: usize,
    inputs: Vec<Vec<T>>,
    masks: Vec<Vec<T>>,
    gates: Vec<Vec<T>>,
    cells: Vec<Vec<T>>,
    tanh_c: Vec<Vec<T>>,
    hidden: Vec<Vec<T>>,
    pub outputs: Vec<T>,
}

impl<T: Scalar> LstmCache<T> {
    /// Gate activations of `layer` at step `t` for sample `b`: `[i, f, g, o]` blocks.
    pub fn gates(&self, layer: usize, t: usize, b: usize, hidden: usize) -> &[T] {
        let g4 = 4 * hidden;
        &self.gates[layer][(t * self.batch + b) * g4..][..g4]
    }

    pub fn cell(&self, layer: usize, t: usize, b: usize, hidden: usize) -> &[T] {
        &self.cells[layer][(t * self.batch + b) * hidden..][..hidden]
    }

    pub fn hidden(&self, layer: usize, t: usize, b: usize, hidden: usize) -> &[T] {
        &self.hidden[layer][(t * self.batch + b) * hidden..][..hidden]
    }

    /// Dropout multipliers applied to the input of `layer` (empty when off).
    pub fn mask(&self, layer: usize) -> &[T] {
        &self.masks[layer]
    }
}

impl<T: Scalar> Lstm<T> {
    /// Zero-initialized model.
    pub fn new(config: LstmConfig) -> Self {
        let mut params = ParamBuffer::new();
        let h = config.hidden;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let inp = if l == 0 { config.input } else { h };
            let wx = params.add(format!("l{l}.wx"), &[inp, 4 * h]);
            let wh = params.add(format!("l{l}.wh"), &[h, 4 * h]);
            let b = params.add(format!("l{l}.b"), &[4 * h]);
            layers.push(LayerIdx { wx, wh, b, inp });
        }
        let ro_w = params.add("readout.w", &[h]);
        let ro_b = params.add("readout.b", &[1]);
        Self { config, params, layers, ro_w, ro_b }
    }

    /// Uniform ±1/sqrt(fan-in) weights and forget-gate bias 1.
    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let h = self.config.hidden;
        for l in 0..self.config.layers {
            let inp = self.layers[l].inp;
            let bound = 1.0 / ((inp + h) as f64).sqrt();
            self.params.fill_uniform(&format!("l{l}.wx"), bound, rng);
            self.params.fill_uniform(&format!("l{l}.wh"), bound, rng);
            let name = format!("l{l}.b");
            self.params.fill(&name, 0.0);
            let b = self.params.tensor_mut(&name).expect("bias");
            b[h..2 * h].iter_mut().for_each(|x| *x = T::one());
        }
        self.params.fill_uniform("readout.w", 1.0 / (h as f64).sqrt(), rng);
        self.params.fill("readout.b", 0.0);
    }

    pub fn layer_weights(&self, l: usize) -> (&[T], &[T], &[T]) {
        let li = self.layers[l];
        let g4 = 4 * self.config.hidden;
        let p = &self.params.data;
        (&p[li.wx..li.wx + li.inp * g4], &p[li.wh..li.wh + self.config.hidden * g4], &p[li.b..li.b + g4])
    }

    pub fn readout(&self) -> (&[T], T) {
        let h = self.config.hidden;
        (&self.params.data[self.ro_w..self.ro_w + h], self.params.data[self.ro_b])
    }

    /// Runs the batch `x` (time-major `[seq_len][batch][input]`). With a
    /// generator, hidden outputs passed between layers are dropped with
    /// probability `dropout` and the survivors scaled by `1/(1-dropout)`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &[T],
        seq_len: usize,
        batch: usize,
        mut dropout: Option<&mut R>,
    ) -> Result<LstmCache<T>, LstmError> {
        if seq_len == 0 || batch == 0 {
            return Err(LstmError::EmptyBatch);
        }
        let f = self.config.input;
        if x.len() != seq_len * batch * f {
            return Err(LstmError::Width { expected: f, found: x.len() / (seq_len * batch) });
        }
        let h = self.config.hidden;
        let g4 = 4 * h;
        let nl = self.config.layers;
        let rows = seq_len * batch;
        let p = &self.params.data;
        let mut cache = LstmCache { seq_len, batch, ..Default::default() };
        let keep = 1.0 - self.config.dropout;
        for l in 0..nl {
            let li = self.layers[l];
            let mut mask = Vec::new();
            let input = if l == 0 {
                x.to_vec()
            } else {
                let mut u = cache.hidden[l - 1].clone();
                if let Some(rng) = dropout.as_deref_mut() {
                    if self.config.dropout > 0.0 {
                        let scale = T::lit(1.0 / keep);
                        mask = (0..u.len())
                            .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                            .collect();
                        u.iter_mut().zip(&mask).for_each(|(a, &m)| *a *= m);
                    }
                }
                u
            };
            let mut gates = vec![T::zero(); rows * g4];
            let mut cells = vec![T::zero(); rows * h];
            let mut tanh_c = vec![T::zero(); rows * h];
            let mut hidden = vec![T::zero(); rows * h];
            let wx = &p[li.wx..li.wx + li.inp * g4];
            let wh = &p[li.wh..li.wh + h * g4];
            let bias = &p[li.b..li.b + g4];
            for t in 0..seq_len {
                for b in 0..batch {
                    let r = t * batch + b;
                    let z = &mut gates[r * g4..(r + 1) * g4];
                    z.copy_from_slice(bias);
                    let u = &input[r * li.inp..(r + 1) * li.inp];
                    for (i, &ui) in u.iter().enumerate() {
                        if ui != T::zero() {
                            axpy(ui, &wx[i * g4..(i + 1) * g4], z);
                        }
                    }
                    if t > 0 {
                        let rp = (t - 1) * batch + b;
                        let hp = &hidden[rp * h..(rp + 1) * h];
                        for (j, &hj) in hp.iter().enumerate() {
                            axpy(hj, &wh[j * g4..(j + 1) * g4], z);
                        }
                    }
                    for k in 0..h {
                        let i = sigmoid(z[k]);
                        let fg = sigmoid(z[h + k]);
                        let g = z[2 * h + k].tanh();
                        let o = sigmoid(z[3 * h + k]);
                        z[k] = i;
                        z[h + k] = fg;
                        z[2 * h + k] = g;
                        z[3 * h + k] = o;
                        let c_prev = if t > 0 { cells[((t - 1) * batch + b) * h + k] } else { T::zero() };
                        let c = fg * c_prev + i * g;
                        let tc = c.tanh();
                        cells[r * h + k] = c;
                        tanh_c[r * h + k] = tc;
                        hidden[r * h + k] = o * tc;
                    }
                }
            }
            if !cells.iter().all(|v| v.is_finite()) || !hidden.iter().all(|v| v.is_finite()) {
                return Err(LstmError::NonFinite { layer: l });
            }
            cache.inputs.push(input);
            cache.masks.push(mask);
            cache.gates.push(gates);
            cache.cells.push(cells);
            cache.tanh_c.push(tanh_c);
            cache.hidden.push(hidden);
        }
        let (ro_w, ro_b) = self.readout();
        let top = &cache.hidden[nl - 1];
        cache.outputs = (0..batch)
            .map(|b| {
                let r = (seq_len - 1) * batch + b;
                ro_b + dot(ro_w, &top[r * h..(r + 1) * h])
            })
            .collect();
        if !cache.outputs.iter().all(|v| v.is_finite()) {
            return Err(LstmError::NonFinite { layer: nl });
        }
        Ok(cache)
    }

    /// Inference on one sequence given as `[seq_len][input]` rows.
    pub fn predict(&self, seq: &[T], seq_len: usize) -> Result<T, LstmError> {
        Ok(self.forward::<crate::rng::SimRng>(seq, seq_len, 1, None)?.outputs[0])
    }

    /// Gradients of `Σ_b dout[b]·output[b]` with respect to all parameters.
    pub fn backward(&self, cache: &LstmCache<T>, dout: &[T]) -> Vec<T> {
        let h = self.config.hidden;
        let g4 = 4 * h;
        let (seq_len, batch) = (cache.seq_len, cache.batch);
        let nl = self.config.layers;
        let p = &self.params.data;
        let mut g = vec![T::zero(); p.len()];

        let (ro_w, _) = self.readout();
        let mut dh_above = vec![T::zero(); seq_len * batch * h];
        let top = &cache.hidden[nl - 1];
        for b in 0..batch {
            let r = (seq_len - 1) * batch + b;
            let d = dout[b];
            g[self.ro_b] += d;
            axpy(d, &top[r * h..(r + 1) * h], &mut g[self.ro_w..self.ro_w + h]);
            axpy(d, ro_w, &mut dh_above[r * h..(r + 1) * h]);
        }

        let mut dz = vec![T::zero(); g4];
        for l in (0..nl).rev() {
            let li = self.layers[l];
            let input = &cache.inputs[l];
            let gates = &cache.gates[l];
            let cells = &cache.cells[l];
            let tanh_c = &cache.tanh_c[l];
            let hidden = &cache.hidden[l];
            let wx = &p[li.wx..li.wx + li.inp * g4];
            let wh = &p[li.wh..li.wh + h * g4];
            let mut du = if l > 0 { vec![T::zero(); seq_len * batch * li.inp] } else { Vec::new() };
            let mut dh_next = vec![T::zero(); batch * h];
            let mut dc_next = vec![T::zero(); batch * h];
            for t in (0..seq_len).rev() {
                for b in 0..batch {
                    let r = t * batch + b;
                    let gt = &gates[r * g4..(r + 1) * g4];
                    for k in 0..h {
                        let (i, f, gg, o) = (gt[k], gt[h + k], gt[2 * h + k], gt[3 * h + k]);
                        let tc = tanh_c[r * h + k];
                        let dh = dh_above[r * h + k] + dh_next[b * h + k];
                        let dc = dc_next[b * h + k] + dh * o * (T::one() - tc * tc);
                        let c_prev = if t > 0 { cells[((t - 1) * batch + b) * h + k] } else { T::zero() };
                        dz[k] = dc * gg * i * (T::one() - i);
                        dz[h + k] = dc * c_prev * f * (T::one() - f);
                        dz[2 * h + k] = dc * i * (T::one() - gg * gg);
                        dz[3 * h + k] = dh * tc * o * (T::one() - o);
                        dc_next[b * h + k] = dc * f;
                    }
                    axpy(T::one(), &dz, &mut g[li.b..li.b + g4]);
                    let u = &input[r * li.inp..(r + 1) * li.inp];
                    for i in 0..li.inp {
                        if u[i] != T::zero() {
                            axpy(u[i], &dz, &mut g[li.wx + i * g4..li.wx + (i + 1) * g4]);
                        }
                        if l > 0 {
                            du[r * li.inp + i] = dot(&wx[i * g4..(i + 1) * g4], &dz);
                        }
                    }
                    if t > 0 {
                        let rp = (t - 1) * batch + b;
                        let hp = &hidden[rp * h..(rp + 1) * h];
                        for j in 0..h {
                            if hp[j] != T::zero() {
                                axpy(hp[j], &dz, &mut g[li.wh + j * g4..li.wh + (j + 1) * g4]);
                            }
                            dh_next[b * h + j] = dot(&wh[j * g4..(j + 1) * g4], &dz);
                        }
                    }
                }
            }
            if l > 0 {
                let mask = &cache.masks[l];
                if !mask.is_empty() {
                    du.iter_mut().zip(mask).for_each(|(d, &m)| *d *= m);
                }
                dh_above = du;
            }
        }
        g
    }

    /// Mean squared error over the batch and its gradient.
    pub fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        x: &[T],
        seq_len: usize,
        targets: &[T],
        dropout: Option<&mut R>,
    ) -> Result<(T, Vec<T>), LstmError> {
        let batch = targets.len();
        let cache = self.forward(x, seq_len, batch, dropout)?;
        let n = T::from_usize_lossy(batch);
        let mut loss = T::zero();
        let dout: Vec<T> = cache
            .outputs
            .iter()
            .zip(targets)
            .map(|(&y, &t)| {
                let e = y - t;
                loss += e * e;
                T::lit(2.0) * e / n
            })
            .collect();
        Ok((loss / n, self.backward(&cache, &dout)))
    }
}
