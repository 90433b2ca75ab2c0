use std::fmt::Write;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::pipeline::{corrupt_set, featurize, noisy_set, train_model, ExperimentConfig, Labeled};
use crate::corruption::DISCRETE_LEVELS;
use crate::error::{Error, Result};
use crate::fusion::{evaluate, Example, FusionModel, Metrics, Variant};
use crate::noise::{NoiseColor, RngSeed};

/// Noise colors × discrete intensities × repeat seeds. Intensity 0 is a
/// clean control.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub noises: Vec<NoiseColor>,
    pub intensities: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            noises: NoiseColor::ALL.to_vec(),
            intensities: std::iter::once(0.0).chain(DISCRETE_LEVELS).collect(),
            seeds: vec![0, 1, 2],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.noises.is_empty() || self.intensities.is_empty() || self.seeds.is_empty() {
            return Err(Error::param("grid needs at least one noise, intensity and seed"));
        }
        for &a in &self.intensities {
            if a != 0.0 && !DISCRETE_LEVELS.contains(&a) {
                return Err(Error::param(format!(
                    "grid intensity {a} must be 0 or one of {DISCRETE_LEVELS:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.noises.len() * self.intensities.len()
    }
}

/// Mean and sample standard deviation (n − 1); the deviation of one value is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub mean: f64,
    pub sd: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub noise: NoiseColor,
    pub intensity: f64,
    pub runs: usize,
    pub accuracy: Spread,
    pub precision: Spread,
    pub recall: Spread,
    pub f1: Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
    pub clean: Metrics,
}

fn spread_of(metrics: &[Metrics], f: impl Fn(&Metrics) -> f64) -> Spread {
    Spread::of(&metrics.iter().map(f).collect::<Vec<_>>())
}

fn noise_seed(seed: u64, color: NoiseColor) -> RngSeed {
    RngSeed(seed).derive(color as u64)
}

/// Corrupts the test clips for every grid cell and seed, evaluates `model`,
/// and aggregates per cell. Rows come out noise-major in the spec's order.
pub fn run_grid(model: &FusionModel, test: &[Labeled], grid: &GridSpec) -> Result<GridReport> {
    grid.validate()?;
    if test.is_empty() {
        return Err(Error::param("test split is empty"));
    }
    let features = model.config().features;
    let clean = evaluate(model, &featurize(test, &features)?)?;
    let jobs: Vec<(NoiseColor, f64, u64)> = grid
        .noises
        .iter()
        .flat_map(|&n| grid.intensities.iter().flat_map(move |&a| grid.seeds.iter().map(move |&s| (n, a, s))))
        .collect();
    let results: Vec<Metrics> = jobs
        .par_iter()
        .map(|&(noise, alpha, seed)| {
            if alpha == 0.0 {
                return Ok(clean.clone());
            }
            let corrupted = corrupt_set(test, noise, alpha, noise_seed(seed, noise))?;
            evaluate(model, &featurize(&corrupted, &features)?)
        })
        .collect::<Result<_>>()?;
    let rows = results
        .chunks(grid.seeds.len())
        .zip(jobs.chunks(grid.seeds.len()))
        .map(|(m, j)| GridRow {
            noise: j[0].0,
            intensity: j[0].1,
            runs: m.len(),
            accuracy: spread_of(m, |x| x.accuracy),
            precision: spread_of(m, |x| x.macro_precision),
            recall: spread_of(m, |x| x.macro_recall),
            f1: spread_of(m, |x| x.macro_f1),
        })
        .collect();
    Ok(GridReport { rows, clean })
}

impl GridReport {
    /// Deterministic CSV: one row per cell, mean and sd per metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "noise,intensity,runs,accuracy_mean,accuracy_sd,precision_mean,precision_sd,recall_mean,recall_sd,f1_mean,f1_sd\n",
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.2},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.noise,
                r.intensity,
                r.runs,
                r.accuracy.mean,
                r.accuracy.sd,
                r.precision.mean,
                r.precision.sd,
                r.recall.mean,
                r.recall.sd,
                r.f1.mean,
                r.f1.sd
            )
            .expect("string write");
        }
        out
    }

    pub fn row(&self, noise: NoiseColor, intensity: f64) -> Option<&GridRow> {
        self.rows.iter().find(|r| r.noise == noise && r.intensity == intensity)
    }
}

/// One variant's scores, averaged over training repeats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub row: char,
    pub variant: Variant,
    pub parameters: usize,
    pub runs: usize,
    pub clean_accuracy: f64,
    pub clean_f1: f64,
    pub noisy_accuracy: Spread,
    pub noisy_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "row,variant,parameters,runs,clean_accuracy,clean_f1,noisy_accuracy_mean,noisy_accuracy_sd,noisy_f1\n",
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.row,
                r.variant,
                r.parameters,
                r.runs,
                r.clean_accuracy,
                r.clean_f1,
                r.noisy_accuracy.mean,
                r.noisy_accuracy.sd,
                r.noisy_f1
            )
            .expect("string write");
        }
        out
    }

    pub fn get(&self, variant: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

/// Trains all four variants on the same examples, once per repeat with
/// training seed `seed.derive(r)`, and scores each on the clean test split and
/// on one fixed noisy copy of it (every color at every configured level).
/// Metrics are means over repeats; variants share seeds within a repeat.
pub fn run_ablation(
    train_examples: &[Example],
    test: &[Labeled],
    config: &ExperimentConfig,
    seed: RngSeed,
    repeats: usize,
) -> Result<AblationReport> {
    if repeats == 0 {
        return Err(Error::param("ablation needs at least one repeat"));
    }
    let features = config.model.features;
    let clean = featurize(test, &features)?;
    let noisy = featurize(&noisy_set(test, &config.noisy_levels, seed.derive(0xA0))?, &features)?;
    let jobs: Vec<(Variant, usize)> = Variant::ALL
        .iter()
        .flat_map(|&v| (0..repeats).map(move |r| (v, r)))
        .collect();
    let scored: Vec<(usize, Metrics, Metrics)> = jobs
        .par_iter()
        .map(|&(variant, r)| {
            let mut c = config.clone();
            c.model.variant = variant;
            let (model, _) = train_model(train_examples, None, &c, seed.derive(r as u64))?;
            Ok((model.num_parameters(), evaluate(&model, &clean)?, evaluate(&model, &noisy)?))
        })
        .collect::<Result<_>>()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let rows = Variant::ALL
        .iter()
        .zip(scored.chunks(repeats))
        .map(|(&variant, runs)| {
            let pick = |f: &dyn Fn(&(usize, Metrics, Metrics)) -> f64| runs.iter().map(f).collect::<Vec<f64>>();
            AblationRow {
                row: variant.row(),
                variant,
                parameters: runs[0].0,
                runs: repeats,
                clean_accuracy: mean(&pick(&|s| s.1.accuracy)),
                clean_f1: mean(&pick(&|s| s.1.macro_f1)),
                noisy_accuracy: Spread::of(&pick(&|s| s.2.accuracy)),
                noisy_f1: mean(&pick(&|s| s.2.macro_f1)),
            }
        })
        .collect();
    Ok(AblationReport { rows })
}

/// Hex SHA-256 of checkpoint bytes.
pub fn checkpoint_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
