//! Frame-level acoustic descriptors (zero-crossing rate, RMS energy, MFCC) and the
//! serialized `[ZCR ‖ RMSE ‖ MFCC]` feature vector with its index mapping.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{fit_len, frame_samples, Waveform, DEFAULT_SAMPLE_RATE};

/// Floor applied to filterbank energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub frame_length: usize,
    pub hop: usize,
    pub num_mel: usize,
    pub num_mfcc: usize,
    pub target_frames: usize,
    pub sample_rate: u32,
}

impl Default for FeatureConfig {
    /// 2048/512 framing, 40 mel bands, 40 coefficients, 3 s at 16 kHz (90 frames).
    fn default() -> Self {
        Self::for_duration(3.0, 2048, 512)
    }
}

impl FeatureConfig {
    /// Configuration whose fixed frame count covers `seconds` of 16 kHz audio.
    pub fn for_duration(seconds: f64, frame_length: usize, hop: usize) -> Self {
        let len = (seconds * DEFAULT_SAMPLE_RATE as f64).round() as usize;
        let target_frames = if len <= frame_length {
            1
        } else {
            1 + (len - frame_length) / hop
        };
        Self {
            frame_length,
            hop,
            num_mel: 40,
            num_mfcc: 40,
            target_frames,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.frame_length.is_power_of_two() || self.frame_length < 4 {
            return Err(Error::param(format!(
                "frame length {} must be a power of two >= 4",
                self.frame_length
            )));
        }
        if self.hop == 0 || self.hop > self.frame_length {
            return Err(Error::param(format!("hop {} must lie in 1..=frame length", self.hop)));
        }
        if self.num_mel < 2 {
            return Err(Error::param("at least two mel filters are required"));
        }
        if self.num_mfcc == 0 || self.num_mfcc > self.num_mel {
            return Err(Error::param(format!(
                "coefficient count {} must lie in 1..={}",
                self.num_mfcc, self.num_mel
            )));
        }
        if self.target_frames == 0 {
            return Err(Error::param("target frame count must be at least 1"));
        }
        if self.sample_rate == 0 {
            return Err(Error::param("sample rate must be positive"));
        }
        Ok(())
    }

    /// Descriptors per frame: ZCR, RMSE and the coefficients.
    pub fn per_frame(&self) -> usize {
        self.num_mfcc + 2
    }

    /// Serialized vector length `T·(K+2)`.
    pub fn vector_len(&self) -> usize {
        self.target_frames * self.per_frame()
    }

    /// Samples covered by exactly `target_frames` frames.
    pub fn target_samples(&self) -> usize {
        self.frame_length + (self.target_frames - 1) * self.hop
    }

    pub fn num_bins(&self) -> usize {
        self.frame_length / 2 + 1
    }

    /// Start time of frame `t` in seconds.
    pub fn frame_time(&self, t: usize) -> f64 {
        (t * self.hop) as f64 / self.sample_rate as f64
    }
}

fn sgn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Zero-crossing rate `1/(2(N-1)) Σ |sgn x[n] − sgn x[n−1]|`, with `sgn(0) = +1`.
pub fn zcr(frame: &[f64]) -> f64 {
    if frame.len() < 2 {
        return 0.0;
    }
    let changes: f64 = frame
        .windows(2)
        .map(|p| (sgn(p[1]) - sgn(p[0])).abs())
        .sum();
    changes / (2.0 * (frame.len() - 1) as f64)
}

/// Root-mean-square energy of a frame.
pub fn rmse(frame: &[f64]) -> f64 {
    if frame.is_empty() {
        return 0.0;
    }
    (frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64).sqrt()
}

/// Periodic Hann taper of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided power spectrum `|X(k)|²`, `k = 0..=N/2`, of the windowed frame.
pub fn stft_power(frame: &[f64], window: &[f64]) -> Result<Vec<f64>> {
    let n = frame.len();
    if !n.is_power_of_two() || window.len() != n {
        return Err(Error::param(format!(
            "frame length {n} must be a power of two matching the window ({})",
            window.len()
        )));
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    Ok(power_with(&*fft, frame, window, &mut Vec::new()))
}

fn power_with(fft: &dyn Fft<f64>, frame: &[f64], window: &[f64], buf: &mut Vec<Complex<f64>>) -> Vec<f64> {
    buf.clear();
    buf.extend(frame.iter().zip(window).map(|(x, w)| Complex::new(x * w, 0.0)));
    fft.process(buf);
    buf[..frame.len() / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with centers equally spaced on the mel scale from 0 Hz to
/// Nyquist. Triangle corners are snapped to FFT bins, so each filter is exactly 1
/// at its center bin and 0 at its neighbors' centers.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
    centers_hz: Vec<f64>,
    edges: Vec<usize>,
}

impl MelFilterbank {
    pub fn new(config: &FeatureConfig) -> Result<Self> {
        config.validate()?;
        let m = config.num_mel;
        let nyquist = config.sample_rate as f64 / 2.0;
        let mel_hi = hz_to_mel(nyquist);
        let points_hz: Vec<f64> = (0..m + 2)
            .map(|j| mel_to_hz(mel_hi * j as f64 / (m + 1) as f64))
            .collect();
        let n = config.frame_length as f64;
        let edges: Vec<usize> = points_hz
            .iter()
            .map(|f| (f * n / config.sample_rate as f64).round() as usize)
            .collect();
        if edges.windows(2).any(|e| e[1] <= e[0]) {
            return Err(Error::param(format!(
                "{m} mel filters do not fit a {}-point spectrum",
                config.frame_length
            )));
        }
        let bins = config.num_bins();
        let weights = (1..=m)
            .map(|j| {
                let (lo, c, hi) = (edges[j - 1], edges[j], edges[j + 1]);
                (0..bins)
                    .map(|k| {
                        if k > lo && k <= c {
                            (k - lo) as f64 / (c - lo) as f64
                        } else if k > c && k < hi {
                            (hi - k) as f64 / (hi - c) as f64
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            weights,
            centers_hz: points_hz[1..=m].to_vec(),
            edges,
        })
    }

    /// `M × (N/2+1)` weight matrix.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn center_frequencies(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn center_bins(&self) -> &[usize] {
        &self.edges[1..self.edges.len() - 1]
    }

    pub fn energies(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(power).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Orthonormal DCT-II, first `k` coefficients.
pub fn dct2_orthonormal(input: &[f64], k: usize) -> Vec<f64> {
    let m = input.len() as f64;
    (0..k)
        .map(|c| {
            let scale = if c == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            scale
                * input
                    .iter()
                    .enumerate()
                    .map(|(j, e)| e * (std::f64::consts::PI * c as f64 * (j as f64 + 0.5) / m).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Reusable extraction pipeline for one [`FeatureConfig`]. Read-only after
/// construction and safe to share between threads.
#[derive(Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureExtractor").field("config", &self.config).finish()
    }
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        let filterbank = MelFilterbank::new(&config)?;
        Ok(Self {
            window: hann_window(config.frame_length),
            fft: FftPlanner::new().plan_fft_forward(config.frame_length),
            filterbank,
            config,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Power spectrum, mel energies, floored log and DCT for one frame.
    pub fn mfcc(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() != self.config.frame_length {
            return Err(Error::shape(format!(
                "frame has {} samples, expected {}",
                frame.len(),
                self.config.frame_length
            )));
        }
        Ok(self.mfcc_unchecked(frame, &mut Vec::new()))
    }

    fn mfcc_unchecked(&self, frame: &[f64], buf: &mut Vec<Complex<f64>>) -> Vec<f64> {
        let power = power_with(&*self.fft, frame, &self.window, buf);
        let log_energies: Vec<f64> = self
            .filterbank
            .energies(&power)
            .into_iter()
            .map(|e| e.max(LOG_FLOOR).ln())
            .collect();
        dct2_orthonormal(&log_energies, self.config.num_mfcc)
    }

    /// Fits the waveform to the configured frame count and serializes
    /// `[ZCR frames ‖ RMSE frames ‖ MFCC frames×coeffs]`.
    pub fn extract(&self, w: &Waveform) -> Result<FeatureVector> {
        w.ensure_rate(self.config.sample_rate)?;
        let c = &self.config;
        let fitted = fit_len(w.samples(), c.target_samples());
        let frames = frame_samples(&fitted, c.frame_length, c.hop)?;
        debug_assert_eq!(frames.len(), c.target_frames);
        let t_count = c.target_frames;
        let mut values = vec![0.0; c.vector_len()];
        let mut buf = Vec::with_capacity(c.frame_length);
        for (t, frame) in frames.iter().enumerate() {
            values[t] = zcr(frame);
            values[t_count + t] = rmse(frame);
            let coeffs = self.mfcc_unchecked(frame, &mut buf);
            let base = 2 * t_count + t * c.num_mfcc;
            values[base..base + c.num_mfcc].copy_from_slice(&coeffs);
        }
        Ok(FeatureVector { values, config: *c })
    }
}

/// Convenience wrapper building a one-off extractor.
pub fn extract(w: &Waveform, config: &FeatureConfig) -> Result<FeatureVector> {
    FeatureExtractor::new(*config)?.extract(w)
}

/// Computes MFCCs of one frame under `config`.
pub fn mfcc(frame: &[f64], config: &FeatureConfig) -> Result<Vec<f64>> {
    FeatureExtractor::new(*config)?.mfcc(frame)
}

/// Serialized descriptor vector of length `T·(K+2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub config: FeatureConfig,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, config: FeatureConfig) -> Result<Self> {
        if values.len() != config.vector_len() {
            return Err(Error::shape(format!(
                "feature vector has {} values, config expects {}",
                values.len(),
                config.vector_len()
            )));
        }
        Ok(Self { values, config })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zcr_block(&self) -> &[f64] {
        &self.values[..self.config.target_frames]
    }

    pub fn rmse_block(&self) -> &[f64] {
        let t = self.config.target_frames;
        &self.values[t..2 * t]
    }

    pub fn mfcc_block(&self) -> &[f64] {
        &self.values[2 * self.config.target_frames..]
    }
}

/// What a serialized index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    Zcr { frame: usize },
    Rmse { frame: usize },
    Mfcc { frame: usize, coeff: usize },
}

impl FeatureKind {
    pub fn frame(&self) -> usize {
        match *self {
            FeatureKind::Zcr { frame } | FeatureKind::Rmse { frame } | FeatureKind::Mfcc { frame, .. } => {
                frame
            }
        }
    }

    pub fn coeff(&self) -> Option<usize> {
        match *self {
            FeatureKind::Mfcc { coeff, .. } => Some(coeff),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FeatureKind::Zcr { .. } => "zcr",
            FeatureKind::Rmse { .. } => "rmse",
            FeatureKind::Mfcc { .. } => "mfcc",
        }
    }

    /// Inverse of [`map_index`].
    pub fn index(&self, config: &FeatureConfig) -> Result<usize> {
        let t = config.target_frames;
        let k = config.num_mfcc;
        let frame = self.frame();
        if frame >= t {
            return Err(Error::Bounds { index: frame, len: t });
        }
        Ok(match *self {
            FeatureKind::Zcr { frame } => frame,
            FeatureKind::Rmse { frame } => t + frame,
            FeatureKind::Mfcc { frame, coeff } => {
                if coeff >= k {
                    return Err(Error::Bounds { index: coeff, len: k });
                }
                2 * t + frame * k + coeff
            }
        })
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::Zcr { frame } => write!(f, "ZCR@{frame}"),
            FeatureKind::Rmse { frame } => write!(f, "RMSE@{frame}"),
            FeatureKind::Mfcc { frame, coeff } => write!(f, "MFCC{coeff}@{frame}"),
        }
    }
}

/// Maps a serialized index to its descriptor.
pub fn map_index(i: usize, config: &FeatureConfig) -> Result<FeatureKind> {
    let t = config.target_frames;
    let k = config.num_mfcc;
    let len = config.vector_len();
    if i >= len {
        return Err(Error::Bounds { index: i, len });
    }
    Ok(if i < t {
        FeatureKind::Zcr { frame: i }
    } else if i < 2 * t {
        FeatureKind::Rmse { frame: i - t }
    } else {
        let j = i - 2 * t;
        FeatureKind::Mfcc {
            frame: j / k,
            coeff: j % k,
        }
    })
}

/// Serialized indices belonging to frame `t`.
pub fn frame_indices(t: usize, config: &FeatureConfig) -> Vec<usize> {
    let tc = config.target_frames;
    let k = config.num_mfcc;
    let mut idx = vec![t, tc + t];
    idx.extend(2 * tc + t * k..2 * tc + (t + 1) * k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zcr_cases() {
        assert_eq!(zcr(&[0.3; 16]), 0.0);
        let alt: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        assert_eq!(zcr(&alt), 1.0);
        assert!((zcr(&[1.0, 1.0, -1.0, -1.0]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(zcr(&[0.0; 8]), 0.0);
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[0.0; 4]), 0.0);
        assert!((rmse(&[-0.7; 9]) - 0.7).abs() < 1e-15);
        assert!((rmse(&[3.0, 4.0]) - (12.5f64).sqrt()).abs() < 1e-15);
        assert!((rmse(&[3.0, 4.0]) - 3.5355).abs() < 1e-4);
    }

    #[test]
    fn config_defaults() {
        let c = FeatureConfig::default();
        assert_eq!((c.frame_length, c.hop, c.num_mel, c.num_mfcc), (2048, 512, 40, 40));
        assert_eq!(c.target_frames, 90);
        assert_eq!(c.vector_len(), 90 * 42);
        c.validate().unwrap();
        let bad = FeatureConfig { num_mfcc: 41, ..c };
        assert!(bad.validate().is_err());
        let bad = FeatureConfig { frame_length: 1000, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn filterbank_geometry() {
        let c = FeatureConfig::default();
        let fb = MelFilterbank::new(&c).unwrap();
        let centers = fb.center_frequencies();
        assert_eq!(centers.len(), 40);
        assert!(centers[0] > 0.0);
        assert!(*centers.last().unwrap() < 8000.0);
        assert!(centers.windows(2).all(|w| w[1] > w[0]));
        let bins = fb.center_bins();
        for (m, row) in fb.weights().iter().enumerate() {
            assert_eq!(row.len(), 1025);
            assert!(row.iter().all(|&w| w >= 0.0));
            assert_eq!(row[bins[m]], 1.0);
            if m > 0 {
                assert_eq!(row[bins[m - 1]], 0.0);
            }
            if m + 1 < bins.len() {
                assert_eq!(row[bins[m + 1]], 0.0);
            }
        }
    }

    #[test]
    fn too_many_filters_rejected() {
        let c = FeatureConfig {
            frame_length: 64,
            num_mel: 60,
            num_mfcc: 13,
            ..FeatureConfig::default()
        };
        assert!(MelFilterbank::new(&c).is_err());
    }

    #[test]
    fn zero_frame_has_zero_power() {
        let p = stft_power(&[0.0; 64], &hann_window(64)).unwrap();
        assert_eq!(p.len(), 33);
        assert!(p.iter().all(|&v| v == 0.0));
        assert!(stft_power(&[0.0; 60], &hann_window(60)).is_err());
    }

    #[test]
    fn bin_aligned_tone_concentrates() {
        let n = 256;
        let frame: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / n as f64).cos())
            .collect();
        let p = stft_power(&frame, &vec![1.0; n]).unwrap();
        let total: f64 = p.iter().sum();
        assert!(p[10] / total > 0.99);
    }

    #[test]
    fn silence_mfcc_is_constant_cepstrum() {
        let c = FeatureConfig::default();
        let coeffs = mfcc(&vec![0.0; 2048], &c).unwrap();
        let expected_c0 = (40f64).sqrt() * LOG_FLOOR.ln();
        assert!((coeffs[0] - expected_c0).abs() < 1e-9);
        assert!(coeffs[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn map_index_cases() {
        let c = FeatureConfig {
            target_frames: 10,
            ..FeatureConfig::default()
        };
        assert_eq!(c.vector_len(), 420);
        assert_eq!(map_index(0, &c).unwrap(), FeatureKind::Zcr { frame: 0 });
        assert_eq!(map_index(10, &c).unwrap(), FeatureKind::Rmse { frame: 0 });
        assert_eq!(map_index(20 + 85, &c).unwrap(), FeatureKind::Mfcc { frame: 2, coeff: 5 });
        assert!(matches!(map_index(420, &c), Err(Error::Bounds { .. })));
    }

    #[test]
    fn frame_indices_map_back() {
        let c = FeatureConfig {
            target_frames: 7,
            ..FeatureConfig::default()
        };
        for t in 0..7 {
            let idx = frame_indices(t, &c);
            assert_eq!(idx.len(), 42);
            assert!(idx.iter().all(|&i| map_index(i, &c).unwrap().frame() == t));
        }
    }

    #[test]
    fn silent_extraction() {
        let c = FeatureConfig {
            target_frames: 10,
            ..FeatureConfig::default()
        };
        let fv = extract(&Waveform::zeros(3000, 16_000), &c).unwrap();
        assert_eq!(fv.len(), 420);
        assert!(fv.zcr_block().iter().all(|&v| v == 0.0));
        assert!(fv.rmse_block().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn extraction_rejects_other_rates() {
        let c = FeatureConfig::default();
        let w = Waveform::zeros(3000, 8000);
        assert!(matches!(extract(&w, &c), Err(Error::Param(_))));
    }

    proptest::proptest! {
        #[test]
        fn map_index_round_trips(t in 1usize..40, k in 1usize..48, pick in 0.0f64..1.0) {
            let c = FeatureConfig {
                target_frames: t,
                num_mfcc: k,
                num_mel: k.max(8),
                ..FeatureConfig::default()
            };
            let i = ((c.vector_len() as f64 * pick) as usize).min(c.vector_len() - 1);
            let kind = map_index(i, &c).unwrap();
            proptest::prop_assert_eq!(kind.index(&c).unwrap(), i);
        }
    }
}
