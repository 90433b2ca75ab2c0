//! Pitch shifting and the four-way quadruplet expansion.

use rand::Rng;

use crate::corruption::{inject_stochastic, LambdaDistribution, NoiseSource, LAMBDA_MAX};
use crate::emotion::EmotionClass;
use crate::error::{Error, Result};
use crate::noise::RngSeed;
use crate::signal::{fit_len, Waveform};

/// Shift used for the pitched quadruplet members.
pub const DEFAULT_SEMITONES: f64 = 0.7;

/// Minimum input length for [`pitch_shift`].
pub const MIN_PITCH_LEN: usize = 2048;

/// Moves spectral content by `2^(semitones/12)` while keeping the duration:
/// linear-interpolation resampling followed by pad/truncate to the input length.
pub fn pitch_shift(w: &Waveform, semitones: f64) -> Result<Waveform> {
    if !semitones.is_finite() {
        return Err(Error::param(format!("semitones must be finite, got {semitones}")));
    }
    if w.len() < MIN_PITCH_LEN {
        return Err(Error::param(format!(
            "pitch shift needs at least {MIN_PITCH_LEN} samples, got {}",
            w.len()
        )));
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let x = w.samples();
    let last = (x.len() - 1) as f64;
    let out_len = (last / ratio).floor() as usize + 1;
    let resampled: Vec<f64> = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let j = pos.floor() as usize;
            let frac = pos - j as f64;
            if j + 1 >= x.len() {
                x[x.len() - 1]
            } else {
                x[j] + frac * (x[j + 1] - x[j])
            }
        })
        .collect();
    Ok(Waveform::from_trusted(fit_len(&resampled, w.len()), w.sample_rate()))
}

/// The four training instances derived from one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadruplet {
    pub original: Waveform,
    pub noisy: Waveform,
    pub pitched: Waveform,
    pub pitched_noisy: Waveform,
    pub label: EmotionClass,
    /// Mixing factors used for the noisy and pitched-noisy members.
    pub lambdas: [f64; 2],
}

impl Quadruplet {
    pub fn members(&self) -> [&Waveform; 4] {
        [&self.original, &self.noisy, &self.pitched, &self.pitched_noisy]
    }

    pub fn into_labeled(self) -> [(Waveform, EmotionClass); 4] {
        let label = self.label;
        [
            (self.original, label),
            (self.noisy, label),
            (self.pitched, label),
            (self.pitched_noisy, label),
        ]
    }
}

/// Settings for [`make_quadruplet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrupletConfig {
    pub semitones: f64,
    pub lambda: LambdaDistribution,
}

impl Default for QuadrupletConfig {
    fn default() -> Self {
        Self {
            semitones: DEFAULT_SEMITONES,
            lambda: LambdaDistribution::Continuous,
        }
    }
}

fn draw_open_lambda<R: Rng>(dist: LambdaDistribution, rng: &mut R) -> f64 {
    match dist {
        // strictly inside (0, 0.75)
        LambdaDistribution::Continuous => loop {
            let l = rng.gen_range(0.0..LAMBDA_MAX);
            if l > 0.0 {
                break l;
            }
        },
        LambdaDistribution::DiscreteSet => dist.sample(rng),
    }
}

/// Builds `{x, x+n, P(x), P(x)+n}` with independently drawn noise and mixing
/// factors for the two noisy members.
pub fn make_quadruplet(
    w: &Waveform,
    label: EmotionClass,
    noise: &NoiseSource,
    config: &QuadrupletConfig,
    seed: RngSeed,
) -> Result<Quadruplet> {
    let mut rng = seed.rng();
    let lambda_a = draw_open_lambda(config.lambda, &mut rng);
    let lambda_b = draw_open_lambda(config.lambda, &mut rng);
    let len = w.len();
    let rate = w.sample_rate();

    let noise_a = noise.realize(len, rate, seed.derive(1))?;
    let (noisy, _) = inject_stochastic(w, &noise_a, lambda_a)?;
    let pitched = pitch_shift(w, config.semitones)?;
    let noise_b = noise.realize(len, rate, seed.derive(2))?;
    let (pitched_noisy, _) = inject_stochastic(&pitched, &noise_b, lambda_b)?;

    Ok(Quadruplet {
        original: w.clone(),
        noisy: Waveform::from_trusted(fit_len(noisy.samples(), len), rate),
        pitched: Waveform::from_trusted(fit_len(pitched.samples(), len), rate),
        pitched_noisy: Waveform::from_trusted(fit_len(pitched_noisy.samples(), len), rate),
        label,
        lambdas: [lambda_a, lambda_b],
    })
}

/// Expands a labeled dataset four-fold. Noise sources are cycled per item.
pub fn augment_dataset(
    items: &[(Waveform, EmotionClass)],
    noises: &[NoiseSource],
    config: &QuadrupletConfig,
    seed: RngSeed,
) -> Result<Vec<(Waveform, EmotionClass)>> {
    if noises.is_empty() {
        return Err(Error::param("at least one noise source is required"));
    }
    let mut out = Vec::with_capacity(items.len() * 4);
    for (i, (w, label)) in items.iter().enumerate() {
        let q = make_quadruplet(w, *label, &noises[i % noises.len()], config, seed.derive(i as u64))?;
        out.extend(q.into_labeled());
    }
    Ok(out)
}
