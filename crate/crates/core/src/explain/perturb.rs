use serde::Serialize;

use super::{check_pair, Explainable, Groups};
use crate::emotion::EmotionClass;
use crate::error::{Error, Result};

/// Confidence drop from occluding units `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OcclusionPoint {
    pub start: usize,
    pub end: usize,
    pub drop: f64,
}

/// Slides a window of `window` units with step `stride`, replacing the covered
/// units with baseline values, and records `F(x) − F(occluded)`.
pub fn occlusion_sensitivity<M: Explainable + ?Sized>(
    model: &M,
    x: &[f64],
    baseline: &[f64],
    groups: &Groups,
    target: EmotionClass,
    window: usize,
    stride: usize,
) -> Result<Vec<OcclusionPoint>> {
    check_pair(x, baseline, groups)?;
    if window == 0 || stride == 0 {
        return Err(Error::param("window and stride must be at least 1"));
    }
    let units = groups.len();
    let window = window.min(units);
    let starts: Vec<usize> = (0..=units - window).step_by(stride).collect();
    let mut inputs = vec![x.to_vec()];
    for &s in &starts {
        let mut v = x.to_vec();
        for g in s..s + window {
            groups.copy_group(g, baseline, &mut v);
        }
        inputs.push(v);
    }
    let scores = model.class_scores(&inputs, target)?;
    Ok(starts
        .iter()
        .zip(&scores[1..])
        .map(|(&s, occluded)| OcclusionPoint { start: s, end: s + window, drop: scores[0] - occluded })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MaskOrder {
    /// Mask the most salient units.
    Top,
    /// Mask the least salient units.
    Bottom,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterfactual {
    #[serde(skip)]
    pub masked: Vec<f64>,
    pub masked_units: Vec<usize>,
    pub before: f64,
    pub after: f64,
    pub target: EmotionClass,
}

impl Counterfactual {
    pub fn drop(&self) -> f64 {
        self.before - self.after
    }
}

/// Zeroes the `floor(fraction · units)` units with the highest (or lowest)
/// `unit_scores` and reports the target confidence before and after.
pub fn counterfactual_mask<M: Explainable + ?Sized>(
    model: &M,
    x: &[f64],
    unit_scores: &[f64],
    groups: &Groups,
    target: EmotionClass,
    fraction: f64,
    order: MaskOrder,
) -> Result<Counterfactual> {
    if x.len() != groups.input_len() {
        return Err(Error::shape("input length differs from the grouping"));
    }
    if unit_scores.len() != groups.len() {
        return Err(Error::shape(format!("{} scores for {} units", unit_scores.len(), groups.len())));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::param(format!("mask fraction {fraction} must lie in (0, 1)")));
    }
    let count = (fraction * groups.len() as f64).floor() as usize;
    let mut ranked: Vec<usize> = (0..groups.len()).collect();
    ranked.sort_by(|&a, &b| {
        let by = unit_scores[b].total_cmp(&unit_scores[a]);
        match order {
            MaskOrder::Top => by,
            MaskOrder::Bottom => by.reverse(),
        }
        .then(a.cmp(&b))
    });
    let mut masked_units: Vec<usize> = ranked[..count].to_vec();
    masked_units.sort_unstable();
    let mut masked = x.to_vec();
    for &g in &masked_units {
        for &i in &groups.members()[g] {
            masked[i] = 0.0;
        }
    }
    let scores = model.class_scores(&[x.to_vec(), masked.clone()], target)?;
    Ok(Counterfactual {
        masked,
        masked_units,
        before: scores[0],
        after: scores[1],
        target,
    })
}
