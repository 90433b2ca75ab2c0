//! Audio representation, WAV I/O and short-time framing.

use std::path::Path;

use crate::error::{Error, Result};

/// Canonical working sample rate in Hz.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Amplitude of one 16-bit quantization step.
pub const PCM16_STEP: f64 = 1.0 / 32768.0;

/// Mono sampled audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::param("sample rate must be positive"));
        }
        if let Some(pos) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("non-finite sample at index {pos}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    /// Builds a waveform from samples already known to be finite.
    pub(crate) fn from_trusted(samples: Vec<f64>, sample_rate: u32) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(self.samples.iter().map(|s| s * gain).collect(), self.sample_rate)
    }

    pub(crate) fn ensure_rate(&self, expected: u32) -> Result<()> {
        if self.sample_rate != expected {
            return Err(Error::param(format!(
                "sample rate {} Hz does not match expected {} Hz (resampling is not supported)",
                self.sample_rate, expected
            )));
        }
        Ok(())
    }
}

/// Reads a PCM 16-bit RIFF/WAVE file. Stereo (or wider) input is averaged to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Unsupported(format!(
            "{}: floating-point samples (only PCM 16-bit is supported)",
            path.display()
        )));
    }
    if spec.bits_per_sample != 16 {
        return Err(Error::Unsupported(format!(
            "{}: {}-bit samples (only PCM 16-bit is supported)",
            path.display(),
            spec.bits_per_sample
        )));
    }
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format(format!("{}: zero channels", path.display())));
    }
    let raw = reader
        .into_samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_hound(path, e))?;
    let samples = raw
        .chunks(channels)
        .map(|frame| frame.iter().map(|&v| v as f64 * PCM16_STEP).sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Writes mono PCM 16-bit. Samples are clamped to [-1, 1] before quantization.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &w.samples {
        writer
            .write_sample(quantize(s))
            .map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

fn quantize(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * 32768.0)
        .round()
        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => {
            Error::Unsupported(format!("{}: encoding not supported", path.display()))
        }
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Largest absolute sample value; zero for empty input.
pub fn peak(w: &Waveform) -> f64 {
    peak_of(&w.samples)
}

pub(crate) fn peak_of(samples: &[f64]) -> f64 {
    samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
}

/// Geometry of left-aligned framing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGrid {
    pub frame_length: usize,
    pub hop: usize,
    pub num_frames: usize,
}

impl FrameGrid {
    /// Grid for a signal of `len` samples. Inputs shorter than one frame count as one
    /// (zero-padded) frame.
    pub fn new(frame_length: usize, hop: usize, len: usize) -> Result<Self> {
        if frame_length == 0 || hop == 0 {
            return Err(Error::param("frame length and hop must be non-zero"));
        }
        if hop > frame_length {
            return Err(Error::param(format!(
                "hop {hop} exceeds frame length {frame_length}"
            )));
        }
        let num_frames = if len <= frame_length {
            1
        } else {
            1 + (len - frame_length) / hop
        };
        Ok(Self {
            frame_length,
            hop,
            num_frames,
        })
    }

    pub fn start(&self, frame: usize) -> usize {
        frame * self.hop
    }

    /// Samples needed to hold exactly `num_frames` frames.
    pub fn span(&self) -> usize {
        self.frame_length + (self.num_frames - 1) * self.hop
    }
}

/// Splits `w` into frames of `frame_length` samples every `hop` samples.
pub fn frames(w: &Waveform, frame_length: usize, hop: usize) -> Result<Vec<Vec<f64>>> {
    frame_samples(&w.samples, frame_length, hop)
}

pub(crate) fn frame_samples(samples: &[f64], frame_length: usize, hop: usize) -> Result<Vec<Vec<f64>>> {
    let grid = FrameGrid::new(frame_length, hop, samples.len())?;
    Ok((0..grid.num_frames)
        .map(|m| {
            let start = grid.start(m);
            let mut frame = vec![0.0; frame_length];
            let end = (start + frame_length).min(samples.len());
            if start < end {
                frame[..end - start].copy_from_slice(&samples[start..end]);
            }
            frame
        })
        .collect())
}

/// Truncates or right-zero-pads to exactly `target_len` samples.
pub fn fit_duration(w: &Waveform, target_len: usize) -> Waveform {
    Waveform::from_trusted(fit_len(&w.samples, target_len), w.sample_rate)
}

pub(crate) fn fit_len(samples: &[f64], target_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; target_len];
    let n = samples.len().min(target_len);
    out[..n].copy_from_slice(&samples[..n]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wf(samples: &[f64]) -> Waveform {
        Waveform::new(samples.to_vec(), DEFAULT_SAMPLE_RATE).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(Waveform::new(vec![0.0], 0), Err(Error::Param(_))));
        assert!(matches!(
            Waveform::new(vec![0.0, f64::NAN], 16_000),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn peak_cases() {
        assert_eq!(peak(&wf(&[0.1, -0.4, 0.2])), 0.4);
        assert_eq!(peak(&wf(&[0.0; 8])), 0.0);
        assert_eq!(peak(&wf(&[])), 0.0);
    }

    #[test]
    fn frame_counts() {
        let w = Waveform::zeros(2048, 16_000);
        assert_eq!(frames(&w, 2048, 512).unwrap().len(), 1);
        let w = Waveform::zeros(4096, 16_000);
        assert_eq!(frames(&w, 2048, 512).unwrap().len(), 5);
    }

    #[test]
    fn short_input_is_padded() {
        let w = wf(&vec![0.25; 1000]);
        let f = frames(&w, 2048, 512).unwrap();
        assert_eq!(f.len(), 1);
        assert!(f[0][..1000].iter().all(|&s| s == 0.25));
        assert!(f[0][1000..].iter().all(|&s| s == 0.0));
        assert_eq!(f[0].len() - 1000, 1048);
    }

    #[test]
    fn frames_reject_zero_params() {
        let w = Waveform::zeros(10, 16_000);
        assert!(matches!(frames(&w, 0, 1), Err(Error::Param(_))));
        assert!(matches!(frames(&w, 4, 0), Err(Error::Param(_))));
        assert!(matches!(frames(&w, 4, 5), Err(Error::Param(_))));
    }

    #[test]
    fn frame_starts_follow_hop() {
        let samples: Vec<f64> = (0..5000).map(|i| i as f64 / 5000.0).collect();
        let w = wf(&samples);
        let f = frames(&w, 1024, 300).unwrap();
        let grid = FrameGrid::new(1024, 300, 5000).unwrap();
        assert_eq!(f.len(), grid.num_frames);
        for (m, frame) in f.iter().enumerate() {
            assert_eq!(frame[0], samples[m * 300]);
            assert!(m * 300 + 1024 <= 5000);
        }
    }

    #[test]
    fn fit_duration_cases() {
        let w = wf(&(0..10).map(|i| i as f64 / 10.0).collect::<Vec<_>>());
        assert_eq!(fit_duration(&w, 4).samples(), &w.samples()[..4]);
        let short = wf(&[0.1, 0.2, 0.3, 0.4]);
        let padded = fit_duration(&short, 10);
        assert_eq!(&padded.samples()[..4], short.samples());
        assert!(padded.samples()[4..].iter().all(|&s| s == 0.0));
        assert_eq!(fit_duration(&w, 10), w);
    }

    #[test]
    fn quantize_extremes() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(-1.0), i16::MIN);
        assert_eq!(quantize(1.0), i16::MAX);
        assert_eq!(quantize(3.0), i16::MAX);
    }
}
