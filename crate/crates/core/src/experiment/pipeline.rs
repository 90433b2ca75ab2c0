use rayon::prelude::*;
use serde::Serialize;

use crate::augment::{augment_dataset, QuadrupletConfig};
use crate::corruption::{inject_discrete, NoiseSource, DISCRETE_LEVELS};
use crate::emotion::EmotionClass;
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureExtractor};
use crate::fusion::{train, Example, FusionModel, History, ModelConfig, TrainConfig, Variant};
use crate::noise::{NoiseColor, RngSeed};
use crate::signal::Waveform;

pub type Labeled = (Waveform, EmotionClass);

/// Everything needed to train and evaluate one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Expand the training split with noisy and pitch-shifted copies.
    pub augment: bool,
    pub augment_noises: Vec<NoiseColor>,
    /// Discrete levels of the noisy evaluation set used by ablations.
    pub noisy_levels: Vec<f64>,
}

impl Default for ExperimentConfig {
    /// Desk profile: 3 s covered by 30 frames (hop 1536), narrow network.
    fn default() -> Self {
        Self {
            model: ModelConfig {
                features: FeatureConfig::for_duration(3.0, 2048, 1536),
                width_scale: 0.0625,
                hidden: 32,
                attention: 16,
                variant: Variant::Full,
            },
            train: TrainConfig { epochs: 25, ..TrainConfig::default() },
            augment: true,
            augment_noises: NoiseColor::ALL.to_vec(),
            noisy_levels: DISCRETE_LEVELS.to_vec(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::param(format!("invalid value '{value}' for '{key}'")))
}

impl ExperimentConfig {
    /// Applies `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut seconds = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::param(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let f = &mut c.model.features;
            match key {
                "frame_length" => f.frame_length = parse(key, value)?,
                "hop" => f.hop = parse(key, value)?,
                "num_mel" => f.num_mel = parse(key, value)?,
                "num_mfcc" => f.num_mfcc = parse(key, value)?,
                "target_frames" => f.target_frames = parse(key, value)?,
                "seconds" => seconds = Some(parse::<f64>(key, value)?),
                "width_scale" => c.model.width_scale = parse(key, value)?,
                "hidden" => c.model.hidden = parse(key, value)?,
                "attention" => c.model.attention = parse(key, value)?,
                "variant" => c.model.variant = value.parse()?,
                "epochs" => c.train.epochs = parse(key, value)?,
                "batch_size" => c.train.batch_size = parse(key, value)?,
                "learning_rate" => c.train.learning_rate = parse(key, value)?,
                "augment" => c.augment = parse(key, value)?,
                "augment_noises" => {
                    c.augment_noises = value
                        .split(',')
                        .map(|s| s.trim().parse())
                        .collect::<Result<_>>()?
                }
                "noisy_levels" => {
                    c.noisy_levels = value
                        .split(',')
                        .map(|s| parse(key, s.trim()))
                        .collect::<Result<_>>()?
                }
                other => return Err(Error::param(format!("unknown config key '{other}'"))),
            }
        }
        if let Some(s) = seconds {
            let f = &mut c.model.features;
            let (n, h, m, k) = (f.frame_length, f.hop, f.num_mel, f.num_mfcc);
            *f = FeatureConfig::for_duration(s, n, h);
            f.num_mel = m;
            f.num_mfcc = k;
        }
        c.model.validate()?;
        Ok(c)
    }
}

/// Extracts features for every clip, in input order.
pub fn featurize(items: &[Labeled], config: &FeatureConfig) -> Result<Vec<Example>> {
    let extractor = FeatureExtractor::new(*config)?;
    items
        .par_iter()
        .map(|(w, label)| Ok(Example::new(extractor.extract(w)?.values, *label)))
        .collect()
}

/// Adds peak-normalized `color` noise at discrete level `alpha` to every clip.
/// `alpha == 0` returns the clips unchanged.
pub fn corrupt_set(items: &[Labeled], color: NoiseColor, alpha: f64, seed: RngSeed) -> Result<Vec<Labeled>> {
    if alpha == 0.0 {
        return Ok(items.to_vec());
    }
    items
        .par_iter()
        .enumerate()
        .map(|(i, (w, label))| {
            let noise = color.generate(w.len(), w.sample_rate(), seed.derive(i as u64))?;
            Ok((inject_discrete(w, &noise, alpha)?, *label))
        })
        .collect()
}

/// The noisy evaluation set: one copy of each clip per noise color and level.
pub fn noisy_set(items: &[Labeled], levels: &[f64], seed: RngSeed) -> Result<Vec<Labeled>> {
    let mut out = Vec::with_capacity(items.len() * NoiseColor::ALL.len() * levels.len());
    for (c, color) in NoiseColor::ALL.iter().enumerate() {
        for (l, &alpha) in levels.iter().enumerate() {
            out.extend(corrupt_set(items, *color, alpha, seed.derive(c as u64).derive(l as u64))?);
        }
    }
    Ok(out)
}

/// Training examples, four-fold augmented when configured.
pub fn training_examples(items: &[Labeled], config: &ExperimentConfig, seed: RngSeed) -> Result<Vec<Example>> {
    if !config.augment {
        return featurize(items, &config.model.features);
    }
    let noises: Vec<NoiseSource> = config.augment_noises.iter().map(|&c| NoiseSource::Color(c)).collect();
    let expanded = augment_dataset(items, &noises, &QuadrupletConfig::default(), seed)?;
    featurize(&expanded, &config.model.features)
}

/// Trains a fresh model of `config.model` on prepared examples.
pub fn train_model(
    examples: &[Example],
    validation: Option<&[Example]>,
    config: &ExperimentConfig,
    seed: RngSeed,
) -> Result<(FusionModel, History)> {
    let mut model = FusionModel::new(config.model, seed.derive(0x30DE1))?;
    let tc = TrainConfig { seed: seed.derive(0x7EA1), ..config.train };
    let history = train(&mut model, examples, validation, &tc)?;
    Ok((model, history))
}
