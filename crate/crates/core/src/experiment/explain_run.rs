use std::fmt::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::emotion::EmotionClass;
use crate::error::{Error, Result};
use crate::explain::{
    attribution_csv, attribution_summary, counterfactual_mask, occlusion_sensitivity, overlay_text, saliency_csv,
    score_cam, shapley_exact, shapley_sampled, Explainable, Groups, MaskOrder,
};
use crate::features::{FeatureConfig, FeatureExtractor};
use crate::fusion::FusionModel;
use crate::noise::RngSeed;
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplainMethod {
    Shap,
    ScoreCam,
    Occlusion,
    Counterfactual,
}

impl FromStr for ExplainMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "shap" => Ok(Self::Shap),
            "scorecam" | "score-cam" => Ok(Self::ScoreCam),
            "occlusion" => Ok(Self::Occlusion),
            "counterfactual" => Ok(Self::Counterfactual),
            other => Err(Error::param(format!(
                "unknown explain method '{other}' (expected shap, scorecam, occlusion or counterfactual)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOptions {
    pub target: Option<EmotionClass>,
    /// Exact enumeration instead of permutation sampling.
    pub exact: bool,
    /// Number of contiguous time segments used as Shapley units; `None` uses
    /// one unit per frame.
    pub segments: Option<usize>,
    pub permutations: usize,
    pub window: usize,
    pub stride: usize,
    pub fraction: f64,
    pub order: MaskOrder,
    pub top_k: usize,
    pub seed: RngSeed,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self {
            target: None,
            exact: false,
            segments: None,
            permutations: 200,
            window: 3,
            stride: 1,
            fraction: 0.2,
            order: MaskOrder::Top,
            top_k: 10,
            seed: RngSeed(0),
        }
    }
}

/// Report files produced by one explanation, as `(file name, contents)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOutput {
    pub target: EmotionClass,
    pub files: Vec<(String, String)>,
}

/// Center time of frame `t` in seconds.
fn frame_center(config: &FeatureConfig, t: usize) -> f64 {
    config.frame_time(t) + config.frame_length as f64 / (2.0 * config.sample_rate as f64)
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable report") + "\n"
}

#[derive(Serialize)]
struct SaliencySummary {
    target: EmotionClass,
    confidence: f64,
    frame_scores: Vec<f64>,
    map_weights: Vec<f64>,
}

/// Runs `method` on one clip and renders its reports.
pub fn explain_audio(
    model: &FusionModel,
    audio: &Waveform,
    method: ExplainMethod,
    options: &ExplainOptions,
) -> Result<ExplainOutput> {
    let config = model.config().features;
    let x = FeatureExtractor::new(config)?.extract(audio)?.values;
    let target = match options.target {
        Some(t) => t,
        None => model.predict(&x)?,
    };
    let baseline = vec![0.0; x.len()];
    let frames = Groups::per_frame(&config)?;
    let times: Vec<f64> = (0..config.target_frames).map(|t| frame_center(&config, t)).collect();
    let mut files = Vec::new();
    match method {
        ExplainMethod::Shap => {
            let groups = match options.segments {
                Some(m) => Groups::time_segments(&config, m)?,
                None => frames,
            };
            let f = |v: &[f64]| model.class_score(v, target);
            let attribution = if options.exact {
                shapley_exact(f, &x, &baseline, &groups)?
            } else {
                shapley_sampled(f, &x, &baseline, &groups, options.permutations, options.seed)?
            }
            .with_target(target);
            let unit_times: Vec<f64> = groups
                .labels()
                .iter()
                .map(|l| frame_center(&config, l.frame.unwrap_or(0)))
                .collect();
            files.push(("attribution.csv".into(), attribution_csv(&attribution, &groups)?));
            files.push(("summary.json".into(), json(&attribution_summary(&attribution, &groups, options.top_k))));
            files.push(("overlay.txt".into(), overlay_text(&unit_times, &attribution.phi)?));
        }
        ExplainMethod::ScoreCam => {
            let map = score_cam(model, &x, target)?;
            let per_frame = frames.aggregate(&map.scores)?;
            files.push(("saliency.csv".into(), saliency_csv(&map, &config)?));
            files.push((
                "summary.json".into(),
                json(&SaliencySummary {
                    target,
                    confidence: model.class_score(&x, target)?,
                    frame_scores: per_frame.clone(),
                    map_weights: map.map_weights.clone(),
                }),
            ));
            files.push(("overlay.txt".into(), overlay_text(&times, &per_frame)?));
        }
        ExplainMethod::Occlusion => {
            let curve = occlusion_sensitivity(model, &x, &baseline, &frames, target, options.window, options.stride)?;
            let mut csv = String::from("start_frame,end_frame,drop\n");
            for p in &curve {
                writeln!(csv, "{},{},{}", p.start, p.end, p.drop).expect("string write");
            }
            let starts: Vec<f64> = curve.iter().map(|p| frame_center(&config, p.start)).collect();
            let drops: Vec<f64> = curve.iter().map(|p| p.drop).collect();
            files.push(("occlusion.csv".into(), csv));
            files.push(("overlay.txt".into(), overlay_text(&starts, &drops)?));
        }
        ExplainMethod::Counterfactual => {
            let map = score_cam(model, &x, target)?;
            let per_frame = frames.aggregate(&map.scores)?;
            let cf = counterfactual_mask(model, &x, &per_frame, &frames, target, options.fraction, options.order)?;
            files.push(("counterfactual.json".into(), json(&cf)));
            files.push(("overlay.txt".into(), overlay_text(&times, &per_frame)?));
        }
    }
    Ok(ExplainOutput { target, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_parse() {
        assert_eq!("scorecam".parse::<ExplainMethod>().unwrap(), ExplainMethod::ScoreCam);
        assert!("lime".parse::<ExplainMethod>().is_err());
    }
}
