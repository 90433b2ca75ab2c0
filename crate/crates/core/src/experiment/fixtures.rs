//! Synthetic seven-class corpus of tone bursts. These are parametric
//! archetypes, not speech: each class differs in pitch, harmonic richness,
//! loudness and modulation, and every clip is silent except for a voiced
//! segment near the middle third.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;

use super::manifest::{Manifest, ManifestRow, Split};
use crate::emotion::EmotionClass;
use crate::error::{Error, Result};
use crate::noise::RngSeed;
use crate::signal::{write_wav, Waveform, DEFAULT_SAMPLE_RATE};

pub const FIXTURE_SECONDS: f64 = 3.0;
pub const TRAIN_FRACTION: f64 = 0.8;

struct Archetype {
    f0: f64,
    /// End pitch of a linear glide, if any.
    glide_to: Option<f64>,
    harmonics: usize,
    /// Amplitude ratio between successive harmonics.
    rolloff: f64,
    amplitude: f64,
    /// Amplitude-modulation rate and depth.
    tremolo: (f64, f64),
    /// Frequency-modulation rate and relative depth.
    vibrato: (f64, f64),
    /// Share of broadband noise in the voiced segment.
    breath: f64,
}

fn archetype(class: EmotionClass) -> Archetype {
    let base = Archetype {
        f0: 170.0,
        glide_to: None,
        harmonics: 5,
        rolloff: 0.6,
        amplitude: 0.4,
        tremolo: (0.0, 0.0),
        vibrato: (0.0, 0.0),
        breath: 0.0,
    };
    match class {
        EmotionClass::Happy => Archetype { f0: 260.0, harmonics: 6, rolloff: 0.7, amplitude: 0.6, vibrato: (5.0, 0.03), ..base },
        EmotionClass::Angry => Archetype { f0: 190.0, harmonics: 12, rolloff: 0.9, amplitude: 0.8, ..base },
        EmotionClass::Fear => Archetype { f0: 330.0, harmonics: 4, amplitude: 0.35, tremolo: (9.0, 0.8), ..base },
        EmotionClass::Sad => Archetype { f0: 130.0, harmonics: 3, rolloff: 0.4, amplitude: 0.25, ..base },
        EmotionClass::Surprised => Archetype { f0: 200.0, glide_to: Some(460.0), rolloff: 0.7, amplitude: 0.55, ..base },
        EmotionClass::Disgust => Archetype { f0: 115.0, amplitude: 0.4, breath: 0.35, ..base },
        EmotionClass::Neutral => base,
    }
}

/// One clip of `class`; `seed` controls pitch, level, onset and phase jitter.
pub fn synthesize(class: EmotionClass, seed: RngSeed) -> Waveform {
    let sr = DEFAULT_SAMPLE_RATE as f64;
    let len = (FIXTURE_SECONDS * sr).round() as usize;
    let a = archetype(class);
    let mut rng = seed.rng();
    let pitch = rng.gen_range(0.95..1.05);
    let level = rng.gen_range(0.85..1.15) * a.amplitude;
    let third = len / 3;
    let onset = third as i64 + rng.gen_range(-800..=800);
    let duration = third as i64 + rng.gen_range(-800..=800);
    let (start, end) = (onset as usize, (onset + duration) as usize);
    let phases: Vec<f64> = (0..a.harmonics).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let norm: f64 = (0..a.harmonics).map(|h| a.rolloff.powi(h as i32)).sum();
    let fade = (0.02 * sr) as usize;

    let mut out = vec![0.0; len];
    let mut phase = 0.0;
    for (i, sample) in out.iter_mut().enumerate().take(end).skip(start) {
        let t = (i - start) as f64 / sr;
        let progress = (i - start) as f64 / (end - start) as f64;
        let mut f0 = pitch * match a.glide_to {
            Some(to) => a.f0 + (to - a.f0) * progress,
            None => a.f0,
        };
        f0 *= 1.0 + a.vibrato.1 * (2.0 * PI * a.vibrato.0 * t).sin();
        phase += 2.0 * PI * f0 / sr;
        let tone: f64 = (0..a.harmonics)
            .map(|h| a.rolloff.powi(h as i32) * ((h + 1) as f64 * phase + phases[h]).sin())
            .sum::<f64>()
            / norm;
        let breath: f64 = if a.breath > 0.0 { rng.sample::<f64, _>(StandardNormal) * 0.3 } else { 0.0 };
        let voiced = (1.0 - a.breath) * tone + a.breath * breath;
        let tremolo = 1.0 - a.tremolo.1 * 0.5 * (1.0 - (2.0 * PI * a.tremolo.0 * t).cos());
        let edge = (i - start).min(end - 1 - i);
        let ramp = if edge < fade { 0.5 * (1.0 - (PI * edge as f64 / fade as f64).cos()) } else { 1.0 };
        *sample = (level * voiced * tremolo * ramp).clamp(-1.0, 1.0);
    }
    Waveform::new(out, DEFAULT_SAMPLE_RATE).expect("finite synthesized samples")
}

/// Seed of item `index` of `class` under corpus seed `seed`.
pub fn item_seed(seed: RngSeed, class: EmotionClass, index: usize) -> RngSeed {
    seed.derive(class.code() as u64).derive(index as u64)
}

/// Writes `per_class` clips for each class plus `manifest.csv` into `out_dir`.
/// The first 80% of each class's items are tagged `train`, the rest `test`.
pub fn gen_fixtures(out_dir: impl AsRef<Path>, per_class: usize, seed: RngSeed) -> Result<Manifest> {
    let dir = out_dir.as_ref();
    if per_class == 0 {
        return Err(Error::param("at least one item per class is required"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let train_count = ((per_class as f64 * TRAIN_FRACTION).round() as usize).clamp(1.min(per_class), per_class);
    let mut rows = Vec::with_capacity(per_class * EmotionClass::COUNT);
    for class in EmotionClass::ALL {
        for i in 0..per_class {
            let name = format!("{}_{i:03}.wav", class.name());
            write_wav(&synthesize(class, item_seed(seed, class, i)), dir.join(&name))?;
            let split = if i < train_count { Split::Train } else { Split::Test };
            rows.push(ManifestRow { path: PathBuf::from(name), label: class, split: Some(split) });
        }
    }
    let manifest = Manifest { rows, base_dir: dir.to_path_buf() };
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest.to_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
