//! Attribution for trained classifiers: Shapley values over index groups,
//! Score-CAM saliency over the spectral branch, and perturbation tests.

mod perturb;
mod report;
mod scorecam;
mod shapley;

pub use perturb::{counterfactual_mask, occlusion_sensitivity, Counterfactual, MaskOrder, OcclusionPoint};
pub use report::{attribution_csv, attribution_summary, overlay_text, saliency_csv, AttributionSummary};
pub use scorecam::{min_max_normalize, score_cam, upsample_linear, SaliencyMap};
pub use shapley::{shapley_exact, shapley_sampled, Attribution, MAX_EXACT_GROUPS};

use serde::Serialize;

use crate::emotion::EmotionClass;
use crate::error::{Error, Result};
use crate::features::{frame_indices, map_index, FeatureConfig};
use crate::fusion::FusionModel;

/// A classifier that can be probed with masked inputs.
pub trait Explainable {
    fn input_len(&self) -> usize;

    /// Target-class confidence for each input.
    fn class_scores(&self, inputs: &[Vec<f64>], target: EmotionClass) -> Result<Vec<f64>>;

    /// Activations of the last convolution, one row per feature map.
    fn activation_maps(&self, x: &[f64]) -> Result<Vec<Vec<f64>>>;

    fn class_score(&self, x: &[f64], target: EmotionClass) -> Result<f64> {
        Ok(self.class_scores(&[x.to_vec()], target)?[0])
    }
}

impl Explainable for FusionModel {
    fn input_len(&self) -> usize {
        self.config().features.vector_len()
    }

    /// Softmax probability of `target`.
    fn class_scores(&self, inputs: &[Vec<f64>], target: EmotionClass) -> Result<Vec<f64>> {
        if !self.is_fitted() {
            return Err(Error::State("model has not been trained".into()));
        }
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(32) {
            let refs: Vec<&[f64]> = chunk.iter().map(|v| v.as_slice()).collect();
            for p in self.predict_proba_batch(&refs)? {
                out.push(p[target.code()]);
            }
        }
        Ok(out)
    }

    fn activation_maps(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if !self.is_fitted() {
            return Err(Error::State("model has not been trained".into()));
        }
        self.last_conv_maps(x)
    }
}

/// Describes one attribution unit for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitLabel {
    pub kind: String,
    pub frame: Option<usize>,
    pub coeff: Option<usize>,
}

impl UnitLabel {
    fn new(kind: &str, frame: Option<usize>, coeff: Option<usize>) -> Self {
        Self { kind: kind.to_string(), frame, coeff }
    }
}

/// A partition of `[0, len)` into attribution units.
#[derive(Debug, Clone, PartialEq)]
pub struct Groups {
    members: Vec<Vec<usize>>,
    labels: Vec<UnitLabel>,
    len: usize,
}

impl Groups {
    pub fn new(members: Vec<Vec<usize>>, labels: Vec<UnitLabel>, len: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::param("at least one group is required"));
        }
        if labels.len() != members.len() {
            return Err(Error::param("one label per group is required"));
        }
        let mut seen = vec![false; len];
        for &i in members.iter().flatten() {
            if i >= len {
                return Err(Error::Bounds { index: i, len });
            }
            if seen[i] {
                return Err(Error::param(format!("index {i} belongs to two groups")));
            }
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::param(format!("index {missing} belongs to no group")));
        }
        Ok(Self { members, labels, len })
    }

    /// One group per index.
    pub fn singletons(len: usize) -> Result<Self> {
        Self::new(
            (0..len).map(|i| vec![i]).collect(),
            (0..len).map(|i| UnitLabel::new("index", None, Some(i))).collect(),
            len,
        )
    }

    /// One group per index, labelled by descriptor.
    pub fn per_index(config: &FeatureConfig) -> Result<Self> {
        let len = config.vector_len();
        let labels = (0..len)
            .map(|i| {
                let kind = map_index(i, config)?;
                Ok(UnitLabel::new(kind.kind_name(), Some(kind.frame()), kind.coeff()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new((0..len).map(|i| vec![i]).collect(), labels, len)
    }

    /// One group per frame: its ZCR, RMSE and coefficients.
    pub fn per_frame(config: &FeatureConfig) -> Result<Self> {
        let t = config.target_frames;
        Self::new(
            (0..t).map(|f| frame_indices(f, config)).collect(),
            (0..t).map(|f| UnitLabel::new("frame", Some(f), None)).collect(),
            config.vector_len(),
        )
    }

    /// `segments` contiguous runs of whole frames; labels carry the first frame.
    pub fn time_segments(config: &FeatureConfig, segments: usize) -> Result<Self> {
        let t = config.target_frames;
        if segments == 0 || segments > t {
            return Err(Error::param(format!("segment count must lie in 1..={t}")));
        }
        let mut members = Vec::with_capacity(segments);
        let mut labels = Vec::with_capacity(segments);
        for s in 0..segments {
            let (lo, hi) = (s * t / segments, (s + 1) * t / segments);
            members.push((lo..hi).flat_map(|f| frame_indices(f, config)).collect());
            labels.push(UnitLabel::new("segment", Some(lo), None));
        }
        Self::new(members, labels, config.vector_len())
    }

    /// Three groups: the ZCR, RMSE and coefficient blocks.
    pub fn per_block(config: &FeatureConfig) -> Result<Self> {
        let t = config.target_frames;
        let len = config.vector_len();
        Self::new(
            vec![(0..t).collect(), (t..2 * t).collect(), (2 * t..len).collect()],
            vec![
                UnitLabel::new("zcr", None, None),
                UnitLabel::new("rmse", None, None),
                UnitLabel::new("mfcc", None, None),
            ],
            len,
        )
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.len
    }

    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn labels(&self) -> &[UnitLabel] {
        &self.labels
    }

    /// Sums per-index `values` within each group.
    pub fn aggregate(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.len {
            return Err(Error::shape(format!("{} values for {} indices", values.len(), self.len)));
        }
        Ok(self.members.iter().map(|g| g.iter().map(|&i| values[i]).sum()).collect())
    }

    /// Copies the indices of group `g` from `src` into `dst`.
    pub(crate) fn copy_group(&self, g: usize, src: &[f64], dst: &mut [f64]) {
        for &i in &self.members[g] {
            dst[i] = src[i];
        }
    }
}

/// Per-index mean of a background set, or zeros when it is empty.
pub fn background_baseline(background: &[&[f64]], len: usize) -> Result<Vec<f64>> {
    let mut mean = vec![0.0; len];
    if background.is_empty() {
        return Ok(mean);
    }
    for row in background {
        if row.len() != len {
            return Err(Error::shape(format!("background row has {} values, expected {len}", row.len())));
        }
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    let n = background.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

pub(crate) fn check_pair(x: &[f64], baseline: &[f64], groups: &Groups) -> Result<()> {
    if x.len() != groups.input_len() || baseline.len() != groups.input_len() {
        return Err(Error::shape(format!(
            "input ({}) and baseline ({}) must both have {} values",
            x.len(),
            baseline.len(),
            groups.input_len()
        )));
    }
    Ok(())
}
