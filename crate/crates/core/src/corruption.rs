//! Noise injection protocols: peak-relative stochastic mixing and discrete-level
//! stationary mixing.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::{NoiseColor, RngSeed};
use crate::signal::{fit_len, peak_of, Waveform};

/// Mixing coefficients allowed by the discrete protocol.
pub const DISCRETE_LEVELS: [f64; 3] = [0.25, 0.50, 0.75];

/// Upper bound of the continuous stochastic mixing factor.
pub const LAMBDA_MAX: f64 = 0.75;

/// The discrete alternative reading of the stochastic factor's support.
pub const LAMBDA_SET: [f64; 3] = [0.0, 0.5, 0.75];

/// Where interference comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSource {
    Color(NoiseColor),
    /// An external recording.
    Clip { name: String, audio: Waveform },
}

impl NoiseSource {
    pub fn label(&self) -> String {
        match self {
            NoiseSource::Color(c) => c.name().to_string(),
            NoiseSource::Clip { name, .. } => name.clone(),
        }
    }

    /// Produces `len` samples of noise. Synthesized colors are generated fresh from
    /// `seed`; clips longer than `len` start at a seeded random offset, shorter
    /// ones are zero-padded.
    pub fn realize(&self, len: usize, sample_rate: u32, seed: RngSeed) -> Result<Waveform> {
        match self {
            NoiseSource::Color(color) => {
                let gen_len = len.max(crate::noise::MIN_COLORED_LEN);
                let w = color.generate(gen_len, sample_rate, seed)?;
                Ok(align_noise(&w, len))
            }
            NoiseSource::Clip { audio, .. } => {
                audio.ensure_rate(sample_rate)?;
                if audio.is_empty() {
                    return Err(Error::param("noise clip is empty"));
                }
                let offset = if audio.len() > len {
                    seed.rng().gen_range(0..=audio.len() - len)
                } else {
                    0
                };
                Ok(Waveform::from_trusted(
                    fit_len(&audio.samples()[offset..], len),
                    sample_rate,
                ))
            }
        }
    }
}

/// How the mixing factor of a [`NoiseSpec`] is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Intensity {
    /// Peak-relative factor lambda >= 0 (stochastic protocol).
    Stochastic(f64),
    /// One of [`DISCRETE_LEVELS`] (stationary protocol).
    Discrete(f64),
}

impl Intensity {
    pub fn stochastic(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Intensity::Stochastic(lambda))
    }

    pub fn discrete(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Intensity::Discrete(alpha))
    }

    pub fn value(self) -> f64 {
        match self {
            Intensity::Stochastic(v) | Intensity::Discrete(v) => v,
        }
    }
}

/// A complete description of one corruption.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub source: NoiseSource,
    pub intensity: Intensity,
    pub seed: RngSeed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixReport {
    pub lambda_or_alpha: f64,
    pub noise_peak_applied: f64,
    pub aligned_len: usize,
}

/// Distribution of the stochastic mixing factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaDistribution {
    /// Uniform on `[0, 0.75]`.
    #[default]
    Continuous,
    /// Uniform over `{0, 0.5, 0.75}`.
    DiscreteSet,
}

impl LambdaDistribution {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            LambdaDistribution::Continuous => rng.gen_range(0.0..=LAMBDA_MAX),
            LambdaDistribution::DiscreteSet => LAMBDA_SET[rng.gen_range(0..LAMBDA_SET.len())],
        }
    }
}

/// Draws a mixing factor uniformly from `[0, 0.75]`.
pub fn sample_lambda(seed: RngSeed) -> f64 {
    LambdaDistribution::Continuous.sample(&mut seed.rng())
}

/// Truncates (keeping the head) or zero-pads noise to `target_len`. Never loops.
pub fn align_noise(n: &Waveform, target_len: usize) -> Waveform {
    crate::signal::fit_duration(n, target_len)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !DISCRETE_LEVELS.contains(&alpha) {
        return Err(Error::param(format!(
            "alpha {alpha} is not one of the discrete levels {DISCRETE_LEVELS:?}"
        )));
    }
    Ok(())
}

/// Divides by the peak so the result has peak exactly 1.
pub fn normalize_noise(n: &[f64]) -> Result<Vec<f64>> {
    let p = peak_of(n);
    if p == 0.0 {
        return Err(Error::Normalization("noise signal is identically zero".into()));
    }
    Ok(n.iter().map(|v| v / p).collect())
}

/// Adds `lambda * peak(s)` times the peak-normalized noise to `s`.
pub fn inject_stochastic(s: &Waveform, n: &Waveform, lambda: f64) -> Result<(Waveform, MixReport)> {
    check_lambda(lambda)?;
    n.ensure_rate(s.sample_rate())?;
    let aligned = align_noise(n, s.len());
    let unit = normalize_noise(aligned.samples())?;
    let amplitude = lambda * peak_of(s.samples());
    let out = s
        .samples()
        .iter()
        .zip(&unit)
        .map(|(x, v)| x + amplitude * v)
        .collect();
    Ok((
        Waveform::new(out, s.sample_rate())?,
        MixReport {
            lambda_or_alpha: lambda,
            noise_peak_applied: amplitude,
            aligned_len: s.len(),
        },
    ))
}

/// Adds `alpha` times the peak-normalized noise, alpha from [`DISCRETE_LEVELS`].
pub fn inject_discrete(x_clean: &Waveform, v: &Waveform, alpha: f64) -> Result<Waveform> {
    check_alpha(alpha)?;
    mix_absolute(x_clean, v, alpha)
}

/// Discrete-protocol mixing without the level-set restriction.
pub(crate) fn mix_absolute(x_clean: &Waveform, v: &Waveform, alpha: f64) -> Result<Waveform> {
    v.ensure_rate(x_clean.sample_rate())?;
    let aligned = align_noise(v, x_clean.len());
    let unit = normalize_noise(aligned.samples())?;
    let out = x_clean
        .samples()
        .iter()
        .zip(&unit)
        .map(|(x, n)| x + alpha * n)
        .collect();
    Waveform::new(out, x_clean.sample_rate())
}

/// Realizes the noise described by `spec` and mixes it into `s`.
pub fn corrupt(s: &Waveform, spec: &NoiseSpec) -> Result<(Waveform, MixReport)> {
    let noise = spec.source.realize(s.len(), s.sample_rate(), spec.seed)?;
    match spec.intensity {
        Intensity::Stochastic(lambda) => inject_stochastic(s, &noise, lambda),
        Intensity::Discrete(alpha) => {
            let out = inject_discrete(s, &noise, alpha)?;
            Ok((
                out,
                MixReport {
                    lambda_or_alpha: alpha,
                    noise_peak_applied: alpha,
                    aligned_len: s.len(),
                },
            ))
        }
    }
}
