use serde::Serialize;

use super::Explainable;
use crate::emotion::EmotionClass;
use crate::error::{Error, Result};

/// Per-index saliency for one target class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaliencyMap {
    /// Rectified weighted sum of upsampled activation maps; nonnegative.
    pub scores: Vec<f64>,
    /// `scores` min-max normalized to [0, 1].
    pub normalized: Vec<f64>,
    /// Confidence increase attributed to each activation map.
    pub map_weights: Vec<f64>,
    pub target: EmotionClass,
}

/// Linear interpolation of `map` onto `len` points with aligned end points.
pub fn upsample_linear(map: &[f64], len: usize) -> Vec<f64> {
    match (map.len(), len) {
        (_, 0) => Vec::new(),
        (0, _) => vec![0.0; len],
        (1, _) => vec![map[0]; len],
        (_, 1) => vec![map[0]],
        (n, _) => (0..len)
            .map(|i| {
                let pos = i as f64 * (n - 1) as f64 / (len - 1) as f64;
                let lo = (pos.floor() as usize).min(n - 2);
                let frac = pos - lo as f64;
                map[lo] + frac * (map[lo + 1] - map[lo])
            })
            .collect(),
    }
}

/// Rescales to [0, 1]. A constant input, or one whose spread is only rounding
/// noise, maps to all zeros.
pub fn min_max_normalize(v: &[f64]) -> Vec<f64> {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    if !(range > 1e-12 * lo.abs().max(hi.abs())) || !range.is_finite() {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / range).collect()
}

/// Score-CAM: each activation map, upsampled and normalized, masks the input;
/// its weight is the target confidence gained over an all-zero input. The
/// saliency is the rectified weighted sum of the upsampled maps.
pub fn score_cam<M: Explainable + ?Sized>(model: &M, x: &[f64], target: EmotionClass) -> Result<SaliencyMap> {
    let len = model.input_len();
    if x.len() != len {
        return Err(Error::shape(format!("input has {} values, model expects {len}", x.len())));
    }
    let maps = model.activation_maps(x)?;
    let upsampled: Vec<Vec<f64>> = maps.iter().map(|a| upsample_linear(a, len)).collect();
    let mut inputs = Vec::with_capacity(maps.len() + 1);
    inputs.push(vec![0.0; len]);
    for up in &upsampled {
        let mask = min_max_normalize(up);
        inputs.push(x.iter().zip(&mask).map(|(a, m)| a * m).collect());
    }
    let scores = model.class_scores(&inputs, target)?;
    let base = scores[0];
    let map_weights: Vec<f64> = scores[1..].iter().map(|s| s - base).collect();

    let mut sal = vec![0.0; len];
    for (w, up) in map_weights.iter().zip(&upsampled) {
        for (s, a) in sal.iter_mut().zip(up) {
            *s += w * a;
        }
    }
    sal.iter_mut().for_each(|s| *s = s.max(0.0));
    if sal.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite saliency".into()));
    }
    Ok(SaliencyMap {
        normalized: min_max_normalize(&sal),
        scores: sal,
        map_weights,
        target,
    })
}
