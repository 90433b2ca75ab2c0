//! Fixed layer set with cached forward passes and hand-written backward passes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::store::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::noise::RngSeed;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Layer kind and hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    /// Valid-padding cross-correlation over `[B, C, L]`.
    Conv1d {
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    /// Normalizes `[B, C]` or `[B, C, L]` per channel.
    BatchNorm1d { features: usize },
    Relu,
    Tanh,
    MaxPool1d { kernel: usize, stride: usize },
    /// Inverted dropout, active only in training.
    Dropout { p: f64 },
    Dense { inputs: usize, outputs: usize },
    /// Softmax over the last axis.
    Softmax,
    /// `[B, ...]` to `[B, n]`.
    Flatten,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Conv1d {
                in_channels,
                filters,
                kernel,
                stride,
            } => in_channels > 0 && filters > 0 && kernel > 0 && stride > 0,
            LayerSpec::BatchNorm1d { features } => features > 0,
            LayerSpec::MaxPool1d { kernel, stride } => kernel > 0 && stride > 0,
            LayerSpec::Dropout { p } => (0.0..1.0).contains(&p),
            LayerSpec::Dense { inputs, outputs } => inputs > 0 && outputs > 0,
            LayerSpec::Relu | LayerSpec::Tanh | LayerSpec::Softmax | LayerSpec::Flatten => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid layer hyperparameters {self:?}")))
        }
    }

    /// Output length of a valid window of `kernel` every `stride` over `len` samples.
    pub fn windowed_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
        (len >= kernel).then(|| (len - kernel) / stride + 1)
    }
}

#[derive(Debug, Clone)]
enum Cache {
    Input(Tensor),
    Output(Tensor),
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Mask(Vec<f64>),
    Norm { xhat: Tensor, inv_std: Vec<f64>, batch_stats: bool },
    Shape(Vec<usize>),
}

/// A layer instance bound to parameters in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Layer {
    spec: LayerSpec,
    params: Vec<ParamId>,
    cache: Option<Cache>,
    rng: ChaCha8Rng,
}

impl Layer {
    /// Registers parameters under `name.*` in `store`.
    pub fn new(spec: LayerSpec, name: &str, store: &mut ParamStore, seed: RngSeed) -> Result<Self> {
        spec.validate()?;
        let params = match spec {
            LayerSpec::Conv1d {
                in_channels,
                filters,
                kernel,
                ..
            } => vec![
                store.add_he(
                    &format!("{name}.weight"),
                    &[filters, in_channels, kernel],
                    in_channels * kernel,
                    seed.derive(0x5EED),
                ),
                store.add(&format!("{name}.bias"), Tensor::zeros(&[filters]), true),
            ],
            LayerSpec::Dense { inputs, outputs } => vec![
                store.add_he(&format!("{name}.weight"), &[outputs, inputs], inputs, seed.derive(0x5EED)),
                store.add(&format!("{name}.bias"), Tensor::zeros(&[outputs]), true),
            ],
            LayerSpec::BatchNorm1d { features } => vec![
                store.add(&format!("{name}.gamma"), Tensor::filled(&[features], 1.0), true),
                store.add(&format!("{name}.beta"), Tensor::zeros(&[features]), true),
                store.add(&format!("{name}.running_mean"), Tensor::zeros(&[features]), false),
                store.add(&format!("{name}.running_var"), Tensor::filled(&[features], 1.0), false),
            ],
            _ => Vec::new(),
        };
        Ok(Self {
            spec,
            params,
            cache: None,
            rng: seed.rng(),
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn param_ids(&self) -> &[ParamId] {
        &self.params
    }

    /// Restarts the dropout mask stream.
    pub fn reseed(&mut self, seed: RngSeed) {
        self.rng = seed.rng();
    }

    /// Forward pass that caches what [`Layer::backward`] needs. In training mode
    /// batch normalization also updates its running statistics.
    pub fn forward(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match (self.spec, mode) {
            (LayerSpec::BatchNorm1d { features }, Mode::Train) => {
                let (y, xhat, inv_std, mean, var) = self.batchnorm_train(store, x, features)?;
                let count = (x.len() / features) as f64;
                let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
                let rm = store.value_mut(self.params[2]).data_mut();
                for c in 0..features {
                    rm[c] = (1.0 - BN_MOMENTUM) * rm[c] + BN_MOMENTUM * mean[c];
                }
                let rv = store.value_mut(self.params[3]).data_mut();
                for c in 0..features {
                    rv[c] = (1.0 - BN_MOMENTUM) * rv[c] + BN_MOMENTUM * var[c] * unbias;
                }
                self.cache = Some(Cache::Norm {
                    xhat,
                    inv_std,
                    batch_stats: true,
                });
                Ok(y)
            }
            (LayerSpec::BatchNorm1d { features }, Mode::Eval) => {
                let inv_std: Vec<f64> = store
                    .value(self.params[3])
                    .data()
                    .iter()
                    .map(|v| 1.0 / (v + BN_EPS).sqrt())
                    .collect();
                let mean = store.value(self.params[2]).data().to_vec();
                let xhat = map_channels(x, features, |c, v| (v - mean[c]) * inv_std[c])?;
                let y = self.infer(store, x)?;
                self.cache = Some(Cache::Norm {
                    xhat,
                    inv_std,
                    batch_stats: false,
                });
                Ok(y)
            }
            (LayerSpec::Dropout { p }, Mode::Train) => {
                let keep = 1.0 - p;
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let data = x.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
                self.cache = Some(Cache::Mask(mask));
                Tensor::new(x.shape().to_vec(), data)
            }
            (LayerSpec::Dropout { .. }, Mode::Eval) => {
                self.cache = Some(Cache::Mask(vec![1.0; x.len()]));
                Ok(x.clone())
            }
            (LayerSpec::MaxPool1d { kernel, stride }, _) => {
                let (y, argmax) = maxpool(x, kernel, stride)?;
                self.cache = Some(Cache::Pool {
                    input_shape: x.shape().to_vec(),
                    argmax,
                });
                Ok(y)
            }
            (LayerSpec::Relu, _) | (LayerSpec::Conv1d { .. }, _) | (LayerSpec::Dense { .. }, _) => {
                let y = self.infer(store, x)?;
                self.cache = Some(Cache::Input(x.clone()));
                Ok(y)
            }
            (LayerSpec::Tanh, _) | (LayerSpec::Softmax, _) => {
                let y = self.infer(store, x)?;
                self.cache = Some(Cache::Output(y.clone()));
                Ok(y)
            }
            (LayerSpec::Flatten, _) => {
                self.cache = Some(Cache::Shape(x.shape().to_vec()));
                self.infer(store, x)
            }
        }
    }

    /// Evaluation-mode forward pass without caching.
    pub fn infer(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        match self.spec {
            LayerSpec::Conv1d {
                in_channels,
                filters,
                kernel,
                stride,
            } => conv1d(
                x,
                store.value(self.params[0]),
                store.value(self.params[1]),
                in_channels,
                filters,
                kernel,
                stride,
            ),
            LayerSpec::Dense { inputs, outputs } => dense(
                x,
                store.value(self.params[0]),
                store.value(self.params[1]),
                inputs,
                outputs,
            ),
            LayerSpec::BatchNorm1d { features } => {
                let mean = store.value(self.params[2]).data();
                let var = store.value(self.params[3]).data();
                let gamma = store.value(self.params[0]).data();
                let beta = store.value(self.params[1]).data();
                map_channels(x, features, |c, v| {
                    gamma[c] * (v - mean[c]) / (var[c] + BN_EPS).sqrt() + beta[c]
                })
            }
            LayerSpec::Relu => elementwise(x, |v| v.max(0.0)),
            LayerSpec::Tanh => elementwise(x, f64::tanh),
            LayerSpec::Dropout { .. } => Ok(x.clone()),
            LayerSpec::MaxPool1d { kernel, stride } => maxpool(x, kernel, stride).map(|r| r.0),
            LayerSpec::Softmax => {
                let n = *x.shape().last().ok_or_else(|| Error::shape("softmax of a scalar"))?;
                let mut data = x.data().to_vec();
                for row in data.chunks_mut(n) {
                    softmax_in_place(row);
                }
                Tensor::new(x.shape().to_vec(), data)
            }
            LayerSpec::Flatten => {
                if x.ndim() < 1 {
                    return Err(Error::shape("cannot flatten a scalar"));
                }
                let b = x.shape()[0];
                x.clone().reshape(&[b, x.len() / b.max(1)])
            }
        }
    }

    /// Propagates `grad` (w.r.t. this layer's output) to the input, accumulating
    /// parameter gradients into `store`. Consumes the cached forward pass.
    pub fn backward(&mut self, store: &mut ParamStore, grad: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State(format!("backward without a cached forward pass ({:?})", self.spec)))?;
        match (self.spec, cache) {
            (
                LayerSpec::Conv1d {
                    in_channels,
                    filters,
                    kernel,
                    stride,
                },
                Cache::Input(x),
            ) => {
                let w = store.value(self.params[0]).clone();
                let (dx, dw, db) = conv1d_backward(&x, &w, grad, in_channels, filters, kernel, stride)?;
                accumulate(store, self.params[0], &dw);
                accumulate(store, self.params[1], &db);
                Ok(dx)
            }
            (LayerSpec::Dense { inputs, outputs }, Cache::Input(x)) => {
                let w = store.value(self.params[0]).clone();
                let rows = x.len() / inputs;
                check_len(grad, rows * outputs)?;
                let mut dx = vec![0.0; x.len()];
                let mut dw = vec![0.0; outputs * inputs];
                let mut db = vec![0.0; outputs];
                for r in 0..rows {
                    let xr = &x.data()[r * inputs..(r + 1) * inputs];
                    let gr = &grad.data()[r * outputs..(r + 1) * outputs];
                    let dxr = &mut dx[r * inputs..(r + 1) * inputs];
                    for (o, &g) in gr.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        db[o] += g;
                        let wo = &w.data()[o * inputs..(o + 1) * inputs];
                        let dwo = &mut dw[o * inputs..(o + 1) * inputs];
                        for j in 0..inputs {
                            dwo[j] += g * xr[j];
                            dxr[j] += g * wo[j];
                        }
                    }
                }
                accumulate_slice(store, self.params[0], &dw);
                accumulate_slice(store, self.params[1], &db);
                Tensor::new(x.shape().to_vec(), dx)
            }
            (LayerSpec::BatchNorm1d { features }, Cache::Norm { xhat, inv_std, batch_stats }) => {
                check_len(grad, xhat.len())?;
                let gamma = store.value(self.params[0]).data().to_vec();
                let per = channel_layout(&xhat, features)?;
                let mut dgamma = vec![0.0; features];
                let mut dbeta = vec![0.0; features];
                for_each_channel(&per, |idx, c| {
                    dgamma[c] += grad.data()[idx] * xhat.data()[idx];
                    dbeta[c] += grad.data()[idx];
                });
                let mut dx = vec![0.0; xhat.len()];
                if batch_stats {
                    let count = (xhat.len() / features) as f64;
                    for_each_channel(&per, |idx, c| {
                        let dxhat = grad.data()[idx] * gamma[c];
                        dx[idx] = inv_std[c] / count
                            * (count * dxhat - gamma[c] * dbeta[c] - xhat.data()[idx] * gamma[c] * dgamma[c]);
                    });
                } else {
                    for_each_channel(&per, |idx, c| {
                        dx[idx] = grad.data()[idx] * gamma[c] * inv_std[c];
                    });
                }
                accumulate_slice(store, self.params[0], &dgamma);
                accumulate_slice(store, self.params[1], &dbeta);
                Tensor::new(xhat.shape().to_vec(), dx)
            }
            (LayerSpec::Relu, Cache::Input(x)) => {
                check_len(grad, x.len())?;
                let data = x
                    .data()
                    .iter()
                    .zip(grad.data())
                    .map(|(v, g)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                Tensor::new(x.shape().to_vec(), data)
            }
            (LayerSpec::Tanh, Cache::Output(y)) => {
                check_len(grad, y.len())?;
                let data = y
                    .data()
                    .iter()
                    .zip(grad.data())
                    .map(|(t, g)| g * (1.0 - t * t))
                    .collect();
                Tensor::new(y.shape().to_vec(), data)
            }
            (LayerSpec::Softmax, Cache::Output(y)) => {
                check_len(grad, y.len())?;
                let n = *y.shape().last().unwrap();
                let mut dx = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.data().chunks(n).zip(grad.data().chunks(n)).zip(dx.chunks_mut(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                Tensor::new(y.shape().to_vec(), dx)
            }
            (LayerSpec::Dropout { .. }, Cache::Mask(mask)) => {
                check_len(grad, mask.len())?;
                let data = grad.data().iter().zip(&mask).map(|(g, m)| g * m).collect();
                Tensor::new(grad.shape().to_vec(), data)
            }
            (LayerSpec::MaxPool1d { .. }, Cache::Pool { input_shape, argmax }) => {
                check_len(grad, argmax.len())?;
                let mut dx = Tensor::zeros(&input_shape);
                for (g, &src) in grad.data().iter().zip(&argmax) {
                    dx.data_mut()[src] += g;
                }
                Ok(dx)
            }
            (LayerSpec::Flatten, Cache::Shape(shape)) => grad.clone().reshape(&shape),
            (spec, _) => Err(Error::State(format!("cache does not match layer {spec:?}"))),
        }
    }

    fn affine_norm(&self, store: &ParamStore, xhat: &Tensor, features: usize) -> Result<Tensor> {
        let gamma = store.value(self.params[0]).data();
        let beta = store.value(self.params[1]).data();
        map_channels(xhat, features, |c, v| gamma[c] * v + beta[c])
    }

    #[allow(clippy::type_complexity)]
    fn batchnorm_train(
        &self,
        store: &ParamStore,
        x: &Tensor,
        features: usize,
    ) -> Result<(Tensor, Tensor, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let per = channel_layout(x, features)?;
        let count = (x.len() / features) as f64;
        let mut mean = vec![0.0; features];
        for_each_channel(&per, |idx, c| mean[c] += x.data()[idx]);
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; features];
        for_each_channel(&per, |idx, c| {
            let d = x.data()[idx] - mean[c];
            var[c] += d * d;
        });
        var.iter_mut().for_each(|v| *v /= count);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let xhat = map_channels(x, features, |c, v| (v - mean[c]) * inv_std[c])?;
        let y = self.affine_norm(store, &xhat, features)?;
        Ok((y, xhat, inv_std, mean, var))
    }
}

/// `(batch, channels, length)` view used by batch normalization.
#[derive(Debug, Clone, Copy)]
struct ChannelLayout {
    batch: usize,
    channels: usize,
    length: usize,
}

fn channel_layout(x: &Tensor, features: usize) -> Result<ChannelLayout> {
    match x.shape() {
        [b, c] if *c == features => Ok(ChannelLayout {
            batch: *b,
            channels: *c,
            length: 1,
        }),
        [b, c, l] if *c == features => Ok(ChannelLayout {
            batch: *b,
            channels: *c,
            length: *l,
        }),
        s => Err(Error::shape(format!(
            "batch norm over {features} features cannot take shape {s:?}"
        ))),
    }
}

fn for_each_channel(layout: &ChannelLayout, mut f: impl FnMut(usize, usize)) {
    for b in 0..layout.batch {
        for c in 0..layout.channels {
            let base = (b * layout.channels + c) * layout.length;
            for l in 0..layout.length {
                f(base + l, c);
            }
        }
    }
}

fn map_channels(x: &Tensor, features: usize, f: impl Fn(usize, f64) -> f64) -> Result<Tensor> {
    let layout = channel_layout(x, features)?;
    let mut out = vec![0.0; x.len()];
    for_each_channel(&layout, |idx, c| out[idx] = f(c, x.data()[idx]));
    Tensor::new(x.shape().to_vec(), out)
}

fn elementwise(x: &Tensor, f: impl Fn(f64) -> f64) -> Result<Tensor> {
    Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
}

fn check_len(t: &Tensor, n: usize) -> Result<()> {
    if t.len() != n {
        return Err(Error::shape(format!(
            "upstream gradient has {} values, expected {n}",
            t.len()
        )));
    }
    Ok(())
}

fn accumulate(store: &mut ParamStore, id: ParamId, delta: &Tensor) {
    accumulate_slice(store, id, delta.data());
}

fn accumulate_slice(store: &mut ParamStore, id: ParamId, delta: &[f64]) {
    for (g, d) in store.grad_mut(id).data_mut().iter_mut().zip(delta) {
        *g += d;
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

fn conv_dims(x: &Tensor, in_channels: usize, kernel: usize, stride: usize) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [b, c, l] if *c == in_channels => {
            let out = LayerSpec::windowed_len(*l, kernel, stride).ok_or_else(|| {
                Error::shape(format!("sequence length {l} shorter than kernel {kernel}"))
            })?;
            Ok((*b, *l, out))
        }
        s => Err(Error::shape(format!(
            "conv over {in_channels} channels cannot take shape {s:?}"
        ))),
    }
}

fn conv1d(
    x: &Tensor,
    w: &Tensor,
    bias: &Tensor,
    in_channels: usize,
    filters: usize,
    kernel: usize,
    stride: usize,
) -> Result<Tensor> {
    let (batch, len, out_len) = conv_dims(x, in_channels, kernel, stride)?;
    let mut out = vec![0.0; batch * filters * out_len];
    let xd = x.data();
    let wd = w.data();
    for b in 0..batch {
        for o in 0..filters {
            let row = &mut out[(b * filters + o) * out_len..(b * filters + o + 1) * out_len];
            row.iter_mut().for_each(|v| *v = bias.data()[o]);
            for i in 0..in_channels {
                let xr = &xd[(b * in_channels + i) * len..(b * in_channels + i + 1) * len];
                for k in 0..kernel {
                    let wv = wd[(o * in_channels + i) * kernel + k];
                    if stride == 1 {
                        for (r, xv) in row.iter_mut().zip(&xr[k..k + out_len]) {
                            *r += wv * xv;
                        }
                    } else {
                        for (t, r) in row.iter_mut().enumerate() {
                            *r += wv * xr[t * stride + k];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![batch, filters, out_len], out)
}

#[allow(clippy::type_complexity)]
fn conv1d_backward(
    x: &Tensor,
    w: &Tensor,
    grad: &Tensor,
    in_channels: usize,
    filters: usize,
    kernel: usize,
    stride: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (batch, len, out_len) = conv_dims(x, in_channels, kernel, stride)?;
    check_len(grad, batch * filters * out_len)?;
    let xd = x.data();
    let wd = w.data();
    let gd = grad.data();
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; filters];
    for b in 0..batch {
        for o in 0..filters {
            let gr = &gd[(b * filters + o) * out_len..(b * filters + o + 1) * out_len];
            db[o] += gr.iter().sum::<f64>();
            for i in 0..in_channels {
                let base = (b * in_channels + i) * len;
                for k in 0..kernel {
                    let widx = (o * in_channels + i) * kernel + k;
                    let wv = wd[widx];
                    if stride == 1 {
                        let xr = &xd[base + k..base + k + out_len];
                        dw[widx] += dot(gr, xr);
                        for (d, g) in dx[base + k..base + k + out_len].iter_mut().zip(gr) {
                            *d += wv * g;
                        }
                    } else {
                        for (t, g) in gr.iter().enumerate() {
                            dw[widx] += g * xd[base + t * stride + k];
                            dx[base + t * stride + k] += wv * g;
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(w.shape().to_vec(), dw)?,
        Tensor::new(vec![filters], db)?,
    ))
}

fn dense(x: &Tensor, w: &Tensor, bias: &Tensor, inputs: usize, outputs: usize) -> Result<Tensor> {
    if x.ndim() < 2 || *x.shape().last().unwrap() != inputs {
        return Err(Error::shape(format!(
            "dense layer with {inputs} inputs cannot take shape {:?}",
            x.shape()
        )));
    }
    let rows = x.len() / inputs;
    let mut out = Vec::with_capacity(rows * outputs);
    for r in 0..rows {
        let xr = &x.data()[r * inputs..(r + 1) * inputs];
        for o in 0..outputs {
            let wo = &w.data()[o * inputs..(o + 1) * inputs];
            out.push(bias.data()[o] + wo.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>());
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = outputs;
    Tensor::new(shape, out)
}

fn maxpool(x: &Tensor, kernel: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    let (batch, channels, len) = match x.shape() {
        [b, c, l] => (*b, *c, *l),
        s => return Err(Error::shape(format!("max pool needs [B, C, L], got {s:?}"))),
    };
    let out_len = LayerSpec::windowed_len(len, kernel, stride)
        .ok_or_else(|| Error::shape(format!("sequence length {len} shorter than pool {kernel}")))?;
    let mut out = Vec::with_capacity(batch * channels * out_len);
    let mut argmax = Vec::with_capacity(out.capacity());
    for row in 0..batch * channels {
        let base = row * len;
        let xr = &x.data()[base..base + len];
        for t in 0..out_len {
            let start = t * stride;
            let mut best = start;
            for j in start + 1..start + kernel {
                if xr[j] > xr[best] {
                    best = j;
                }
            }
            out.push(xr[best]);
            argmax.push(base + best);
        }
    }
    Ok((Tensor::new(vec![batch, channels, out_len], out)?, argmax))
}

/// Ordered stack of layers.
#[derive(Debug, Clone, Default)]
pub struct Sequential {
    layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn push(&mut self, layer: Layer) {
        self.layers.push(layer);
    }

    pub fn forward(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.forward_until(store, x, mode, self.layers.len())
    }

    /// Runs the first `n` layers.
    pub fn forward_until(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode, n: usize) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &mut self.layers[..n] {
            h = layer.forward(store, &h, mode)?;
        }
        Ok(h)
    }

    pub fn infer(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        self.infer_range(store, x, 0..self.layers.len())
    }

    pub fn infer_range(&self, store: &ParamStore, x: &Tensor, range: std::ops::Range<usize>) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers[range] {
            h = layer.infer(store, &h)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, store: &mut ParamStore, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(store, &g)?;
        }
        Ok(g)
    }

    pub fn reseed(&mut self, seed: RngSeed) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.reseed(seed.derive(i as u64));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_forward() {
        let mut store = ParamStore::new();
        let mut l = Layer::new(LayerSpec::Relu, "r", &mut store, RngSeed(0)).unwrap();
        let y = l.forward(&mut store, &t(&[1, 3], &[-1.0, 0.0, 2.0]), Mode::Train).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_gradient_mask() {
        let mut store = ParamStore::new();
        let mut l = Layer::new(LayerSpec::Relu, "r", &mut store, RngSeed(0)).unwrap();
        l.forward(&mut store, &t(&[1, 4], &[-0.5, 0.02, -0.01, 3.0]), Mode::Train).unwrap();
        let g = l.backward(&mut store, &t(&[1, 4], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 2.0, 0.0, 4.0]);
    }

    #[test]
    fn maxpool_hand_case() {
        let mut store = ParamStore::new();
        let mut l = Layer::new(LayerSpec::MaxPool1d { kernel: 3, stride: 2 }, "p", &mut store, RngSeed(0)).unwrap();
        let y = l
            .forward(&mut store, &t(&[1, 1, 5], &[1.0, 5.0, 2.0, 4.0, 3.0]), Mode::Eval)
            .unwrap();
        assert_eq!(y.data(), &[5.0, 4.0]);
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut store = ParamStore::new();
        let mut l = Layer::new(LayerSpec::Dropout { p: 0.0 }, "d", &mut store, RngSeed(0)).unwrap();
        let x = t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]);
        assert_eq!(l.forward(&mut store, &x, Mode::Train).unwrap(), x);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut store = ParamStore::new();
        let mut l = Layer::new(LayerSpec::Dropout { p: 0.5 }, "d", &mut store, RngSeed(0)).unwrap();
        let x = t(&[1, 4], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(l.forward(&mut store, &x, Mode::Eval).unwrap(), x);
        let y = l.forward(&mut store, &Tensor::filled(&[1, 1000], 1.0), Mode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut store = ParamStore::new();
        let mut l = Layer::new(LayerSpec::Tanh, "t", &mut store, RngSeed(0)).unwrap();
        assert!(matches!(
            l.backward(&mut store, &Tensor::zeros(&[1, 1])),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn shape_errors() {
        let mut store = ParamStore::new();
        let mut conv = Layer::new(
            LayerSpec::Conv1d {
                in_channels: 2,
                filters: 3,
                kernel: 3,
                stride: 1,
            },
            "c",
            &mut store,
            RngSeed(0),
        )
        .unwrap();
        assert!(matches!(
            conv.forward(&mut store, &Tensor::zeros(&[1, 1, 10]), Mode::Eval),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            conv.forward(&mut store, &Tensor::zeros(&[1, 2, 2]), Mode::Eval),
            Err(Error::Shape(_))
        ));
        assert!(LayerSpec::Dropout { p: 1.0 }.validate().is_err());
        assert!(LayerSpec::Conv1d {
            in_channels: 1,
            filters: 1,
            kernel: 0,
            stride: 1
        }
        .validate()
        .is_err());
    }

    #[test]
    fn batchnorm_uses_running_stats_in_eval() {
        let mut store = ParamStore::new();
        let mut bn = Layer::new(LayerSpec::BatchNorm1d { features: 2 }, "bn", &mut store, RngSeed(0)).unwrap();
        let x = t(&[3, 2], &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0]);
        let y = bn.forward(&mut store, &x, Mode::Train).unwrap();
        // batch statistics: each column standardized
        let col0: Vec<f64> = y.data().iter().step_by(2).copied().collect();
        assert!(col0.iter().sum::<f64>().abs() < 1e-12);
        let rm = store.value(store.id("bn.running_mean").unwrap()).data().to_vec();
        assert!((rm[0] - 0.2).abs() < 1e-12 && (rm[1] - 2.0).abs() < 1e-12);
        let e1 = bn.forward(&mut store, &x, Mode::Eval).unwrap();
        let e2 = bn.infer(&store, &x).unwrap();
        assert_eq!(e1, e2);
        assert_ne!(e1, y);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut store = ParamStore::new();
        let l = Layer::new(LayerSpec::Softmax, "s", &mut store, RngSeed(0)).unwrap();
        let y = l.infer(&store, &t(&[2, 3], &[1.0, 2.0, 3.0, 1000.0, -1000.0, 0.0])).unwrap();
        for row in y.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p >= 0.0 && p <= 1.0));
        }
    }
}
