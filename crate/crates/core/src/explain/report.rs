use std::fmt::Write;

use serde::Serialize;

use super::{Attribution, Groups, SaliencyMap, UnitLabel};
use crate::error::{Error, Result};
use crate::features::{map_index, FeatureConfig};

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with columns `unit,kind,frame,coeff,value`.
pub fn attribution_csv(attribution: &Attribution, groups: &Groups) -> Result<String> {
    if attribution.phi.len() != groups.len() {
        return Err(Error::shape("attribution and grouping disagree on unit count"));
    }
    let mut out = String::from("unit,kind,frame,coeff,value\n");
    for (u, (phi, label)) in attribution.phi.iter().zip(groups.labels()).enumerate() {
        writeln!(out, "{u},{},{},{},{phi}", label.kind, opt(label.frame), opt(label.coeff)).expect("string write");
    }
    Ok(out)
}

/// Per-index saliency CSV with the same columns, labelled by descriptor.
pub fn saliency_csv(map: &SaliencyMap, config: &FeatureConfig) -> Result<String> {
    let mut out = String::from("unit,kind,frame,coeff,value\n");
    for (i, s) in map.scores.iter().enumerate() {
        let kind = map_index(i, config)?;
        writeln!(out, "{i},{},{},{},{s}", kind.kind_name(), kind.frame(), opt(kind.coeff())).expect("string write");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedUnit {
    pub unit: usize,
    #[serde(flatten)]
    pub label: UnitLabel,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionSummary {
    pub phi0: f64,
    pub fx: f64,
    pub target: Option<crate::emotion::EmotionClass>,
    pub top: Vec<RankedUnit>,
}

/// Base value, output and the `k` units with largest `|phi|`.
pub fn attribution_summary(attribution: &Attribution, groups: &Groups, k: usize) -> AttributionSummary {
    let top = attribution
        .ranking()
        .into_iter()
        .take(k)
        .map(|u| RankedUnit { unit: u, label: groups.labels()[u].clone(), value: attribution.phi[u] })
        .collect();
    AttributionSummary {
        phi0: attribution.phi0,
        fx: attribution.fx,
        target: attribution.target,
        top,
    }
}

/// Two whitespace-separated columns, `time score`, one row per point.
pub fn overlay_text(times: &[f64], scores: &[f64]) -> Result<String> {
    if times.len() != scores.len() {
        return Err(Error::shape("overlay needs one score per time point"));
    }
    let mut out = String::new();
    for (t, s) in times.iter().zip(scores) {
        writeln!(out, "{t} {s}").expect("string write");
    }
    Ok(out)
}
