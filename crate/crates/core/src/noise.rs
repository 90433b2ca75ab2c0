//! Stationary colored-noise synthesis (white, pink, brown) and a Welch-based
//! estimator of the spectral decay exponent.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{peak_of, Waveform};

/// Minimum length accepted by the shaped generators.
pub const MIN_COLORED_LEN: usize = 1024;

/// Welch segment length used by [`psd_slope`].
pub const WELCH_SEGMENT: usize = 4096;

/// Seed for every stochastic operation. Equal seeds give bit-identical output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent child seed for sub-stream `stream` (splitmix64 finalizer).
    pub fn derive(self, stream: u64) -> RngSeed {
        let mut z = self
            .0
            .wrapping_add(0x9E37_79B9_7F4A_7C15_u64.wrapping_mul(stream.wrapping_add(1)));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RngSeed(z ^ (z >> 31))
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseColor {
    White,
    Pink,
    Brown,
}

impl NoiseColor {
    pub const ALL: [NoiseColor; 3] = [NoiseColor::White, NoiseColor::Pink, NoiseColor::Brown];

    /// Exponent of the `1/f^beta` power law.
    pub fn beta(self) -> f64 {
        match self {
            NoiseColor::White => 0.0,
            NoiseColor::Pink => 1.0,
            NoiseColor::Brown => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseColor::White => "white",
            NoiseColor::Pink => "pink",
            NoiseColor::Brown => "brown",
        }
    }

    /// Generates `len` samples of this color. White noise has unit standard
    /// deviation; pink and brown are peak-normalized.
    pub fn generate(self, len: usize, sample_rate: u32, seed: RngSeed) -> Result<Waveform> {
        match self {
            NoiseColor::White => white_noise(len, 1.0, sample_rate, seed),
            NoiseColor::Pink => pink_noise(len, sample_rate, seed),
            NoiseColor::Brown => brown_noise(len, sample_rate, seed),
        }
    }
}

impl fmt::Display for NoiseColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseColor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "white" => Ok(NoiseColor::White),
            "pink" => Ok(NoiseColor::Pink),
            "brown" | "brownian" | "red" => Ok(NoiseColor::Brown),
            other => Err(Error::param(format!("unknown noise color '{other}'"))),
        }
    }
}

fn gaussian(len: usize, sigma: f64, seed: RngSeed) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect()
}

/// I.i.d. Gaussian samples with standard deviation `sigma`.
pub fn white_noise(len: usize, sigma: f64, sample_rate: u32, seed: RngSeed) -> Result<Waveform> {
    if len == 0 {
        return Err(Error::param("noise length must be positive"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    Waveform::new(gaussian(len, sigma, seed), sample_rate)
}

/// White noise shaped in the frequency domain by `1/sqrt(f)` (DC removed),
/// then peak-normalized to 1.
pub fn pink_noise(len: usize, sample_rate: u32, seed: RngSeed) -> Result<Waveform> {
    if len < MIN_COLORED_LEN {
        return Err(Error::param(format!(
            "pink noise needs at least {MIN_COLORED_LEN} samples, got {len}"
        )));
    }
    let mut spectrum: Vec<Complex<f64>> = gaussian(len, 1.0, seed)
        .into_iter()
        .map(|v| Complex::new(v, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut spectrum);
    let bin_hz = sample_rate as f64 / len as f64;
    spectrum[0] = Complex::new(0.0, 0.0);
    for (k, bin) in spectrum.iter_mut().enumerate().skip(1) {
        // Mirror bins share the gain of their positive-frequency partner.
        let f = k.min(len - k) as f64 * bin_hz;
        *bin *= 1.0 / f.sqrt();
    }
    planner.plan_fft_inverse(len).process(&mut spectrum);
    let samples: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    peak_normalize(remove_mean(samples), sample_rate)
}

/// Cumulative sum of white noise with the mean removed, peak-normalized to 1.
pub fn brown_noise(len: usize, sample_rate: u32, seed: RngSeed) -> Result<Waveform> {
    if len < MIN_COLORED_LEN {
        return Err(Error::param(format!(
            "brown noise needs at least {MIN_COLORED_LEN} samples, got {len}"
        )));
    }
    peak_normalize(remove_mean(random_walk(len, seed)), sample_rate)
}

/// The un-normalized walk underlying [`brown_noise`].
pub(crate) fn random_walk(len: usize, seed: RngSeed) -> Vec<f64> {
    let mut acc = 0.0;
    gaussian(len, 1.0, seed)
        .into_iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn remove_mean(mut samples: Vec<f64>) -> Vec<f64> {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.iter_mut().for_each(|s| *s -= mean);
    samples
}

fn peak_normalize(mut samples: Vec<f64>, sample_rate: u32) -> Result<Waveform> {
    let p = peak_of(&samples);
    if p == 0.0 {
        return Err(Error::Normalization("generated noise is identically zero".into()));
    }
    samples.iter_mut().for_each(|s| *s /= p);
    Waveform::new(samples, sample_rate)
}

/// Welch power spectral density (segment 4096, 50% overlap, periodic Hann taper).
/// Returns `(frequencies, power)` for the one-sided spectrum.
pub fn welch_psd(w: &Waveform) -> Result<(Vec<f64>, Vec<f64>)> {
    let seg = WELCH_SEGMENT;
    if w.len() < seg {
        return Err(Error::param(format!(
            "Welch estimate needs at least {seg} samples, got {}",
            w.len()
        )));
    }
    let hop = seg / 2;
    let window: Vec<f64> = (0..seg)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / seg as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let bins = seg / 2 + 1;
    let mut power = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    let samples = w.samples();
    let mut segments = 0usize;
    let mut start = 0;
    while start + seg <= samples.len() {
        for ((b, &x), &win) in buf.iter_mut().zip(&samples[start..start + seg]).zip(&window) {
            *b = Complex::new(x * win, 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf[..bins]) {
            *p += c.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    power.iter_mut().for_each(|p| *p /= segments as f64);
    let bin_hz = w.sample_rate() as f64 / seg as f64;
    let freqs = (0..bins).map(|k| k as f64 * bin_hz).collect();
    Ok((freqs, power))
}

/// Negated least-squares slope of `log S(f)` against `log f` over `[f_lo, f_hi]`,
/// so white noise gives about 0, pink about 1 and brown about 2.
pub fn psd_slope(w: &Waveform, f_lo: f64, f_hi: f64) -> Result<f64> {
    let nyquist = w.sample_rate() as f64 / 2.0;
    if !(f_lo < f_hi && f_hi <= nyquist && f_lo >= 0.0) {
        return Err(Error::param(format!(
            "invalid band [{f_lo}, {f_hi}] Hz for Nyquist {nyquist} Hz"
        )));
    }
    let min_len = 16 * WELCH_SEGMENT;
    if w.len() < min_len {
        return Err(Error::param(format!(
            "slope fit needs at least {min_len} samples, got {}",
            w.len()
        )));
    }
    let (freqs, power) = welch_psd(w)?;
    let points: Vec<(f64, f64)> = freqs
        .iter()
        .zip(&power)
        .filter(|(&f, &p)| f > 0.0 && f >= f_lo && f <= f_hi && p > 0.0)
        .map(|(&f, &p)| (f.log10(), p.log10()))
        .collect();
    if points.len() < 2 {
        return Err(Error::param(format!(
            "band [{f_lo}, {f_hi}] Hz contains fewer than two spectral bins"
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in &points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    Ok(-(sxy / sxx))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SR: u32 = 16_000;

    #[test]
    fn white_noise_moments() {
        let w = white_noise(1_000_000, 1.0, SR, RngSeed(7)).unwrap();
        let n = w.len() as f64;
        let mean = w.samples().iter().sum::<f64>() / n;
        let var = w.samples().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn generators_are_deterministic() {
        for color in NoiseColor::ALL {
            let a = color.generate(4096, SR, RngSeed(3)).unwrap();
            let b = color.generate(4096, SR, RngSeed(3)).unwrap();
            let c = color.generate(4096, SR, RngSeed(4)).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn shaped_noise_is_normalized_and_centered() {
        for color in [NoiseColor::Pink, NoiseColor::Brown] {
            let w = color.generate(8192, SR, RngSeed(11)).unwrap();
            assert_eq!(peak_of(w.samples()), 1.0);
            let mean = w.samples().iter().sum::<f64>() / w.len() as f64;
            assert!(mean.abs() < 1e-9, "{color} mean {mean}");
        }
    }

    #[test]
    fn brown_increments_are_white_samples() {
        let seed = RngSeed(21);
        let walk = random_walk(2048, seed);
        let white = gaussian(2048, 1.0, seed);
        assert_eq!(walk[0], white[0]);
        for n in 1..walk.len() {
            assert!((walk[n] - walk[n - 1] - white[n]).abs() < 1e-9);
        }
    }

    #[test]
    fn short_lengths_rejected() {
        assert!(matches!(pink_noise(512, SR, RngSeed(0)), Err(Error::Param(_))));
        assert!(matches!(brown_noise(1023, SR, RngSeed(0)), Err(Error::Param(_))));
        assert!(white_noise(0, 1.0, SR, RngSeed(0)).is_err());
        assert!(white_noise(10, 0.0, SR, RngSeed(0)).is_err());
    }

    #[test]
    fn fitted_slopes_follow_the_color() {
        let bands = [
            (NoiseColor::White, -0.15, 0.15),
            (NoiseColor::Pink, 0.8, 1.2),
            (NoiseColor::Brown, 1.7, 2.3),
        ];
        let mut previous = f64::NEG_INFINITY;
        for (color, lo, hi) in bands {
            let w = color.generate(1 << 18, SR, RngSeed(5)).unwrap();
            let beta = psd_slope(&w, 20.0, 6000.0).unwrap();
            assert!((lo..=hi).contains(&beta), "{color}: {beta}");
            assert!(beta > previous);
            previous = beta;
        }
    }

    #[test]
    fn slope_rejects_bad_bands() {
        let w = white_noise(1 << 16, 1.0, SR, RngSeed(1)).unwrap();
        assert!(psd_slope(&w, 100.0, 50.0).is_err());
        assert!(psd_slope(&w, 100.0, 9000.0).is_err());
        assert!(psd_slope(&w, 1000.0, 1001.0).is_err());
        let short = white_noise(1 << 15, 1.0, SR, RngSeed(1)).unwrap();
        assert!(psd_slope(&short, 20.0, 6000.0).is_err());
    }

    #[test]
    fn color_parsing() {
        assert_eq!("Pink".parse::<NoiseColor>().unwrap(), NoiseColor::Pink);
        assert!("blue".parse::<NoiseColor>().is_err());
    }
}
