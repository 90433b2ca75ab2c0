//! The dual-branch fusion classifier.
//!
//! * Spectral branch: three Conv1D blocks over the standardized serialized vector
//!   (expansion 512·s, compression 256·s, abstraction 128·s filters), then a
//!   Dense → ReLU → BatchNorm projection to a `512·s` embedding.
//! * Temporal branch: a per-frame affine + tanh encoder over each frame's
//!   descriptors, pooled by attentive (or mean) temporal pooling.
//! * Head: concatenation → Dense → ReLU → Dropout(0.5) → Dense → softmax.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::pooling::{PoolingKind, TemporalPooling};
use crate::emotion::EmotionClass;
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureVector};
use crate::nn::{checkpoint, softmax, Layer, LayerSpec, Mode, ParamStore, Sequential, Tensor};
use crate::noise::RngSeed;

/// Index of the layer after the last convolution's ReLU in the spectral stack.
const LAST_CONV_ACTIVATION: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Variant {
    SpectralOnly,
    TemporalOnly,
    /// Both branches, temporal states mean-pooled.
    SimpleConcat,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::SpectralOnly,
        Variant::TemporalOnly,
        Variant::SimpleConcat,
        Variant::Full,
    ];

    pub fn has_spectral(self) -> bool {
        self != Variant::TemporalOnly
    }

    pub fn has_temporal(self) -> bool {
        self != Variant::SpectralOnly
    }

    pub fn pooling(self) -> PoolingKind {
        if self == Variant::SimpleConcat {
            PoolingKind::Mean
        } else {
            PoolingKind::Attentive
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::SpectralOnly => "spectral-only",
            Variant::TemporalOnly => "temporal-only",
            Variant::SimpleConcat => "simple-concat",
            Variant::Full => "full",
        }
    }

    /// Row letter in the ablation table.
    pub fn row(self) -> char {
        match self {
            Variant::SpectralOnly => 'A',
            Variant::TemporalOnly => 'B',
            Variant::SimpleConcat => 'C',
            Variant::Full => 'D',
        }
    }

    fn code(self) -> f64 {
        self as u8 as f64
    }

    fn from_code(code: f64) -> Result<Self> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.code() == code)
            .ok_or_else(|| Error::Checkpoint(format!("unknown variant code {code}")))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::param(format!("unknown variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelConfig {
    pub features: FeatureConfig,
    /// Width multiplier `s ∈ (0, 1]`; 1 gives 512/256/128 filters.
    pub width_scale: f64,
    /// Width of the per-frame hidden states.
    pub hidden: usize,
    /// Width of the attention projection `W_a`.
    pub attention: usize,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            width_scale: 0.125,
            hidden: 64,
            attention: 64,
            variant: Variant::Full,
        }
    }
}

fn scaled(base: usize, s: f64) -> usize {
    ((base as f64 * s).round() as usize).max(1)
}

impl ModelConfig {
    pub fn expansion_filters(&self) -> usize {
        scaled(512, self.width_scale)
    }

    pub fn compression_filters(&self) -> usize {
        scaled(256, self.width_scale)
    }

    pub fn abstraction_filters(&self) -> usize {
        scaled(128, self.width_scale)
    }

    pub fn embedding(&self) -> usize {
        scaled(512, self.width_scale)
    }

    /// Width of the fusion head's hidden Dense layer.
    pub fn head_hidden(&self) -> usize {
        scaled(256, self.width_scale)
    }

    /// Sequence lengths after each spectral block, or `None` if the input is too
    /// short for the valid-padding stack.
    pub fn spectral_lengths(&self) -> Option<[usize; 3]> {
        let l = self.features.vector_len();
        let a = LayerSpec::windowed_len(LayerSpec::windowed_len(l, 5, 1)?, 5, 2)?;
        let b = LayerSpec::windowed_len(LayerSpec::windowed_len(a, 5, 1)?, 5, 2)?;
        let c = LayerSpec::windowed_len(LayerSpec::windowed_len(b, 3, 1)?, 3, 2)?;
        Some([a, b, c])
    }

    pub fn fusion_width(&self) -> usize {
        let mut w = 0;
        if self.variant.has_temporal() {
            w += self.hidden;
        }
        if self.variant.has_spectral() {
            w += self.embedding();
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        if !(self.width_scale > 0.0 && self.width_scale <= 1.0) {
            return Err(Error::param(format!(
                "width scale {} must lie in (0, 1]",
                self.width_scale
            )));
        }
        if self.hidden == 0 || self.attention == 0 {
            return Err(Error::param("hidden and attention widths must be positive"));
        }
        if self.variant.has_spectral() && self.spectral_lengths().is_none() {
            return Err(Error::param(format!(
                "feature vector of length {} is too short for the spectral branch",
                self.features.vector_len()
            )));
        }
        Ok(())
    }

    fn to_meta(self, fitted: bool) -> Tensor {
        let f = self.features;
        let values = vec![
            f.frame_length as f64,
            f.hop as f64,
            f.num_mel as f64,
            f.num_mfcc as f64,
            f.target_frames as f64,
            f.sample_rate as f64,
            self.width_scale,
            self.hidden as f64,
            self.attention as f64,
            self.variant.code(),
            if fitted { 1.0 } else { 0.0 },
        ];
        Tensor::new(vec![values.len()], values).expect("meta shape")
    }

    fn from_meta(t: &Tensor) -> Result<(Self, bool)> {
        let v = t.data();
        if v.len() != 11 {
            return Err(Error::Checkpoint(format!("meta tensor has {} entries, expected 11", v.len())));
        }
        let features = FeatureConfig {
            frame_length: v[0] as usize,
            hop: v[1] as usize,
            num_mel: v[2] as usize,
            num_mfcc: v[3] as usize,
            target_frames: v[4] as usize,
            sample_rate: v[5] as u32,
        };
        let config = ModelConfig {
            features,
            width_scale: v[6],
            hidden: v[7] as usize,
            attention: v[8] as usize,
            variant: Variant::from_code(v[9])?,
        };
        config.validate()?;
        Ok((config, v[10] == 1.0))
    }
}

const META_NAME: &str = "meta.config";

/// Per-descriptor standardization (ZCR, RMSE and each coefficient) applied before
/// both branches. Statistics are fitted on training data.
#[derive(Debug, Clone)]
struct Standardizer {
    mean: crate::nn::ParamId,
    std: crate::nn::ParamId,
}

#[derive(Debug, Clone)]
struct TemporalBranch {
    encoder: Sequential,
    pooling: TemporalPooling,
}

/// Trainable fusion network with its parameters.
#[derive(Debug, Clone)]
pub struct FusionModel {
    config: ModelConfig,
    store: ParamStore,
    standardizer: Standardizer,
    spectral: Option<Sequential>,
    temporal: Option<TemporalBranch>,
    head: Sequential,
    fitted: bool,
}

/// Descriptor channel of serialized index `i`.
fn channel_of(i: usize, t: usize, k: usize) -> usize {
    if i < t {
        0
    } else if i < 2 * t {
        1
    } else {
        2 + (i - 2 * t) % k
    }
}

impl FusionModel {
    pub fn new(config: ModelConfig, seed: RngSeed) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let per_frame = config.features.per_frame();
        let standardizer = Standardizer {
            mean: store.add("input.mean", Tensor::zeros(&[per_frame]), false),
            std: store.add("input.std", Tensor::filled(&[per_frame], 1.0), false),
        };

        let spectral = if config.variant.has_spectral() {
            let s = seed.derive(1);
            let (c1, c2, c3) = (
                config.expansion_filters(),
                config.compression_filters(),
                config.abstraction_filters(),
            );
            let [_, _, l3] = config.spectral_lengths().expect("validated");
            let specs: Vec<(&str, LayerSpec)> = vec![
                ("spec.conv1", LayerSpec::Conv1d { in_channels: 1, filters: c1, kernel: 5, stride: 1 }),
                ("spec.bn1", LayerSpec::BatchNorm1d { features: c1 }),
                ("spec.relu1", LayerSpec::Relu),
                ("spec.pool1", LayerSpec::MaxPool1d { kernel: 5, stride: 2 }),
                ("spec.conv2", LayerSpec::Conv1d { in_channels: c1, filters: c2, kernel: 5, stride: 1 }),
                ("spec.bn2", LayerSpec::BatchNorm1d { features: c2 }),
                ("spec.relu2", LayerSpec::Relu),
                ("spec.pool2", LayerSpec::MaxPool1d { kernel: 5, stride: 2 }),
                ("spec.drop2", LayerSpec::Dropout { p: 0.2 }),
                ("spec.conv3", LayerSpec::Conv1d { in_channels: c2, filters: c3, kernel: 3, stride: 1 }),
                ("spec.bn3", LayerSpec::BatchNorm1d { features: c3 }),
                ("spec.relu3", LayerSpec::Relu),
                ("spec.pool3", LayerSpec::MaxPool1d { kernel: 3, stride: 2 }),
                ("spec.drop3", LayerSpec::Dropout { p: 0.2 }),
                ("spec.flatten", LayerSpec::Flatten),
                ("spec.proj", LayerSpec::Dense { inputs: c3 * l3, outputs: config.embedding() }),
                ("spec.proj_relu", LayerSpec::Relu),
                ("spec.proj_bn", LayerSpec::BatchNorm1d { features: config.embedding() }),
            ];
            Some(build(&specs, &mut store, s)?)
        } else {
            None
        };

        let temporal = if config.variant.has_temporal() {
            let s = seed.derive(2);
            let encoder = build(
                &[
                    ("temporal.encoder", LayerSpec::Dense { inputs: per_frame, outputs: config.hidden }),
                    ("temporal.tanh", LayerSpec::Tanh),
                ],
                &mut store,
                s,
            )?;
            let pooling = TemporalPooling::new(
                config.variant.pooling(),
                config.hidden,
                config.attention,
                "temporal.pool",
                &mut store,
                seed.derive(3),
            );
            Some(TemporalBranch { encoder, pooling })
        } else {
            None
        };

        let head = build(
            &[
                ("head.dense", LayerSpec::Dense { inputs: config.fusion_width(), outputs: config.head_hidden() }),
                ("head.relu", LayerSpec::Relu),
                ("head.dropout", LayerSpec::Dropout { p: 0.5 }),
                ("head.out", LayerSpec::Dense { inputs: config.head_hidden(), outputs: EmotionClass::COUNT }),
            ],
            &mut store,
            seed.derive(4),
        )?;

        Ok(Self {
            config,
            store,
            standardizer,
            spectral,
            temporal,
            head,
            fitted: false,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// True once input statistics have been fitted (by training or loading).
    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_trainable()
    }

    /// Sets the standardization statistics from training vectors.
    pub fn fit_standardizer(&mut self, data: &[&[f64]]) -> Result<()> {
        if data.is_empty() {
            return Err(Error::param("cannot fit input statistics on no data"));
        }
        let f = self.config.features;
        let (t, k, c) = (f.target_frames, f.num_mfcc, f.per_frame());
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let mut count = vec![0usize; c];
        for x in data {
            self.check_len(x)?;
            for (i, &v) in x.iter().enumerate() {
                let ch = channel_of(i, t, k);
                sum[ch] += v;
                sq[ch] += v * v;
                count[ch] += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect();
        let std: Vec<f64> = sq
            .iter()
            .zip(&count)
            .zip(&mean)
            .map(|((q, &n), m)| (q / n as f64 - m * m).max(0.0).sqrt().max(1e-3))
            .collect();
        *self.store.value_mut(self.standardizer.mean) = Tensor::new(vec![c], mean)?;
        *self.store.value_mut(self.standardizer.std) = Tensor::new(vec![c], std)?;
        self.fitted = true;
        Ok(())
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        let expected = self.config.features.vector_len();
        if x.len() != expected {
            return Err(Error::shape(format!(
                "feature vector has {} values, model expects {expected}",
                x.len()
            )));
        }
        Ok(())
    }

    fn standardize(&self, batch: &[&[f64]]) -> Result<Tensor> {
        let f = self.config.features;
        let (t, k) = (f.target_frames, f.num_mfcc);
        let mean = self.store.value(self.standardizer.mean).data();
        let std = self.store.value(self.standardizer.std).data();
        let l = f.vector_len();
        let mut out = Vec::with_capacity(batch.len() * l);
        for x in batch {
            self.check_len(x)?;
            out.extend(x.iter().enumerate().map(|(i, v)| {
                let ch = channel_of(i, t, k);
                (v - mean[ch]) / std[ch]
            }));
        }
        Tensor::new(vec![batch.len(), l], out)
    }

    /// Regroups standardized `[B, L]` into per-frame rows `[B·T, K+2]`.
    fn frame_rows(&self, z: &Tensor) -> Result<Tensor> {
        let f = self.config.features;
        let (t, k) = (f.target_frames, f.num_mfcc);
        let batch = z.shape()[0];
        let mut out = Vec::with_capacity(z.len());
        for b in 0..batch {
            let row = z.row(b);
            for frame in 0..t {
                out.push(row[frame]);
                out.push(row[t + frame]);
                out.extend_from_slice(&row[2 * t + frame * k..2 * t + (frame + 1) * k]);
            }
        }
        Tensor::new(vec![batch * t, k + 2], out)
    }

    fn temporal_states_shape(&self, batch: usize) -> [usize; 3] {
        [batch, self.config.features.target_frames, self.config.hidden]
    }

    fn fuse(&self, ctx: Option<Tensor>, spec: Option<Tensor>) -> Result<Tensor> {
        match (ctx, spec) {
            (Some(c), Some(s)) => Tensor::concat_cols(&c, &s),
            (Some(c), None) => Ok(c),
            (None, Some(s)) => Ok(s),
            (None, None) => Err(Error::State("model has no branches".into())),
        }
    }

    /// Training-path forward returning logits `[B, 7]` and caching activations.
    pub fn forward(&mut self, batch: &[&[f64]], mode: Mode) -> Result<Tensor> {
        let z = self.standardize(batch)?;
        let n = batch.len();
        let l = self.config.features.vector_len();
        let spec = match &mut self.spectral {
            Some(seq) => Some(seq.forward(&mut self.store, &z.clone().reshape(&[n, 1, l])?, mode)?),
            None => None,
        };
        let ctx = match self.temporal.is_some() {
            true => {
                let rows = self.frame_rows(&z)?;
                let shape = self.temporal_states_shape(n);
                let branch = self.temporal.as_mut().expect("checked");
                let h = branch.encoder.forward(&mut self.store, &rows, mode)?.reshape(&shape)?;
                Some(branch.pooling.forward(&self.store, &h)?)
            }
            false => None,
        };
        let fused = self.fuse(ctx, spec)?;
        self.head.forward(&mut self.store, &fused, mode)
    }

    /// Backpropagates `d loss / d logits` through the cached forward pass,
    /// accumulating parameter gradients.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<()> {
        let d_fused = self.head.backward(&mut self.store, grad_logits)?;
        let batch = d_fused.shape()[0];
        let (d_ctx, d_spec) = match (self.temporal.is_some(), self.spectral.is_some()) {
            (true, true) => {
                let (a, b) = d_fused.split_cols(self.config.hidden)?;
                (Some(a), Some(b))
            }
            (true, false) => (Some(d_fused), None),
            (false, true) => (None, Some(d_fused)),
            (false, false) => return Err(Error::State("model has no branches".into())),
        };
        if let (Some(g), Some(seq)) = (d_spec, self.spectral.as_mut()) {
            seq.backward(&mut self.store, &g)?;
        }
        if let (Some(g), Some(branch)) = (d_ctx, self.temporal.as_mut()) {
            let dh = branch.pooling.backward(&mut self.store, &g)?;
            let rows = batch * self.config.features.target_frames;
            let dh = dh.reshape(&[rows, self.config.hidden])?;
            branch.encoder.backward(&mut self.store, &dh)?;
        }
        Ok(())
    }

    /// Restarts every dropout mask stream.
    pub fn reseed_dropout(&mut self, seed: RngSeed) {
        if let Some(seq) = &mut self.spectral {
            seq.reseed(seed.derive(1));
        }
        self.head.reseed(seed.derive(2));
    }

    /// Evaluation-mode logits for a batch. Pure in `(parameters, input)`.
    pub fn logits(&self, batch: &[&[f64]]) -> Result<Tensor> {
        Ok(self.infer_parts(batch)?.0)
    }

    /// Logits plus attention weights `[B, T]` (empty for models without attention).
    fn infer_parts(&self, batch: &[&[f64]]) -> Result<(Tensor, Vec<f64>)> {
        let z = self.standardize(batch)?;
        let n = batch.len();
        let l = self.config.features.vector_len();
        let spec = match &self.spectral {
            Some(seq) => Some(seq.infer(&self.store, &z.clone().reshape(&[n, 1, l])?)?),
            None => None,
        };
        let mut alpha = Vec::new();
        let ctx = match &self.temporal {
            Some(branch) => {
                let rows = self.frame_rows(&z)?;
                let h = branch
                    .encoder
                    .infer(&self.store, &rows)?
                    .reshape(&self.temporal_states_shape(n))?;
                let (v, a) = branch.pooling.infer(&self.store, &h)?;
                alpha = a;
                Some(v)
            }
            None => None,
        };
        let fused = self.fuse(ctx, spec)?;
        Ok((self.head.infer(&self.store, &fused)?, alpha))
    }

    /// Class probabilities for one vector.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let logits = self.logits(&[x])?;
        Ok(softmax(logits.row(0)))
    }

    pub fn predict_proba_batch(&self, batch: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let logits = self.logits(batch)?;
        Ok((0..batch.len()).map(|b| softmax(logits.row(b))).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<EmotionClass> {
        let p = self.predict_proba(x)?;
        EmotionClass::from_code(argmax(&p))
    }

    /// Probabilities for a [`FeatureVector`], checking its configuration.
    pub fn forward_fusion(&self, fv: &FeatureVector) -> Result<Vec<f64>> {
        if fv.config != self.config.features {
            return Err(Error::shape("feature configuration differs from the model's"));
        }
        self.predict_proba(&fv.values)
    }

    /// Attention weights over frames (uniform for mean pooling).
    pub fn attention_weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.temporal.is_none() {
            return Err(Error::State("variant has no temporal branch".into()));
        }
        Ok(self.infer_parts(&[x])?.1)
    }

    /// Probabilities with the spectral embedding replaced by zeros.
    pub fn predict_proba_without_spectral(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (Some(_), Some(branch)) = (&self.spectral, &self.temporal) else {
            return Err(Error::State("ablating the spectral stream needs both branches".into()));
        };
        let z = self.standardize(&[x])?;
        let rows = self.frame_rows(&z)?;
        let h = branch
            .encoder
            .infer(&self.store, &rows)?
            .reshape(&self.temporal_states_shape(1))?;
        let (ctx, _) = branch.pooling.infer(&self.store, &h)?;
        let fused = Tensor::concat_cols(&ctx, &Tensor::zeros(&[1, self.config.embedding()]))?;
        Ok(softmax(self.head.infer(&self.store, &fused)?.row(0)))
    }

    /// Post-ReLU activations of the last convolution (one row per filter) for
    /// one input vector.
    pub fn last_conv_maps(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let seq = self
            .spectral
            .as_ref()
            .ok_or_else(|| Error::State("variant has no spectral branch".into()))?;
        let z = self.standardize(&[x])?;
        let l = self.config.features.vector_len();
        let a = seq.infer_range(&self.store, &z.reshape(&[1, 1, l])?, 0..LAST_CONV_ACTIVATION)?;
        let (c, len) = (a.shape()[1], a.shape()[2]);
        Ok((0..c).map(|k| a.data()[k * len..(k + 1) * len].to_vec()).collect())
    }

    pub fn has_spectral(&self) -> bool {
        self.spectral.is_some()
    }

    /// Serializes parameters and architecture into checkpoint bytes.
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let mut tensors = vec![(META_NAME.to_string(), self.config.to_meta(self.fitted))];
        tensors.extend(self.store.named_tensors());
        checkpoint::encode(&tensors)
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let tensors = checkpoint::decode(bytes)?;
        let meta = tensors
            .iter()
            .find(|(n, _)| n == META_NAME)
            .ok_or_else(|| Error::Checkpoint(format!("missing '{META_NAME}'")))?;
        let (config, fitted) = ModelConfig::from_meta(&meta.1)?;
        let mut model = FusionModel::new(config, RngSeed(0))?;
        model.store.load_named(&tensors)?;
        model.fitted = fitted;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn build(specs: &[(&str, LayerSpec)], store: &mut ParamStore, seed: RngSeed) -> Result<Sequential> {
    let mut seq = Sequential::default();
    for (i, (name, spec)) in specs.iter().enumerate() {
        seq.push(Layer::new(*spec, name, store, seed.derive(i as u64))?);
    }
    Ok(seq)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}
