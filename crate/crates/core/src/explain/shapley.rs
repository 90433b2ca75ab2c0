use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::{check_pair, Groups};
use crate::emotion::EmotionClass;
use crate::error::{Error, Result};
use crate::noise::RngSeed;

/// Largest group count accepted by exact enumeration (2^M coalitions).
pub const MAX_EXACT_GROUPS: usize = 20;

/// Per-group Shapley values with the decomposition `phi0 + Σ phi = fx`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attribution {
    pub phi: Vec<f64>,
    /// Output with every group taken from the baseline.
    pub phi0: f64,
    /// Output on the explained input.
    pub fx: f64,
    pub target: Option<EmotionClass>,
}

impl Attribution {
    /// `|phi0 + Σ phi − fx|`.
    pub fn efficiency_gap(&self) -> f64 {
        (self.phi0 + self.phi.iter().sum::<f64>() - self.fx).abs()
    }

    /// Unit indices ordered by decreasing `|phi|`.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.phi.len()).collect();
        idx.sort_by(|&a, &b| self.phi[b].abs().total_cmp(&self.phi[a].abs()).then(a.cmp(&b)));
        idx
    }

    pub fn with_target(mut self, target: EmotionClass) -> Self {
        self.target = Some(target);
        self
    }
}

fn coalition_input(mask: u64, x: &[f64], baseline: &[f64], groups: &Groups) -> Vec<f64> {
    let mut v = baseline.to_vec();
    for g in 0..groups.len() {
        if mask & (1 << g) != 0 {
            groups.copy_group(g, x, &mut v);
        }
    }
    v
}

/// Exact Shapley values by enumerating all `2^M` coalitions. Out-of-coalition
/// groups take baseline values.
pub fn shapley_exact<F>(f: F, x: &[f64], baseline: &[f64], groups: &Groups) -> Result<Attribution>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    check_pair(x, baseline, groups)?;
    let m = groups.len();
    if m > MAX_EXACT_GROUPS {
        return Err(Error::Tractability(format!(
            "exact Shapley over {m} groups exceeds the {MAX_EXACT_GROUPS}-group cap; use sampling or coarser groups"
        )));
    }
    let values: Vec<f64> = (0..1u64 << m)
        .into_par_iter()
        .map(|mask| f(&coalition_input(mask, x, baseline, groups)))
        .collect::<Result<_>>()?;

    // w(s) = s!(M−s−1)!/M! = 1 / (M · C(M−1, s))
    let mut weights = vec![0.0; m];
    let mut binom = 1.0;
    for (s, w) in weights.iter_mut().enumerate() {
        *w = 1.0 / (m as f64 * binom);
        binom = binom * (m - 1 - s) as f64 / (s + 1) as f64;
    }
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1u64 << i;
        *p = (0..1u64 << m)
            .filter(|mask| mask & bit == 0)
            .map(|mask| weights[mask.count_ones() as usize] * (values[(mask | bit) as usize] - values[mask as usize]))
            .sum();
    }
    Ok(Attribution {
        phi,
        phi0: values[0],
        fx: values[values.len() - 1],
        target: None,
    })
}

fn factorial_at_most(m: usize, cap: usize) -> Option<usize> {
    (1..=m).try_fold(1usize, |acc, k| acc.checked_mul(k).filter(|&p| p <= cap))
}

/// Advances to the next lexicographic permutation; false after the last.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Marginal contributions along one ordering of the groups.
fn walk<F>(f: &F, order: &[usize], x: &[f64], baseline: &[f64], groups: &Groups, phi0: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut contrib = vec![0.0; groups.len()];
    let mut current = baseline.to_vec();
    let mut prev = phi0;
    for &g in order {
        groups.copy_group(g, x, &mut current);
        let next = f(&current)?;
        contrib[g] = next - prev;
        prev = next;
    }
    Ok(contrib)
}

/// Permutation-sampling Shapley estimate. When `num_permutations ≥ M!` every
/// ordering is enumerated once, giving the exact values. The small residual
/// from rounding is redistributed in proportion to `|phi|` so that
/// `phi0 + Σ phi = fx`.
pub fn shapley_sampled<F>(
    f: F,
    x: &[f64],
    baseline: &[f64],
    groups: &Groups,
    num_permutations: usize,
    seed: RngSeed,
) -> Result<Attribution>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    check_pair(x, baseline, groups)?;
    if num_permutations == 0 {
        return Err(Error::param("at least one permutation is required"));
    }
    let m = groups.len();
    let phi0 = f(baseline)?;
    let fx = f(x)?;

    let orders: Vec<Vec<usize>> = match factorial_at_most(m, num_permutations) {
        Some(_) => {
            let mut p: Vec<usize> = (0..m).collect();
            let mut all = vec![p.clone()];
            while next_permutation(&mut p) {
                all.push(p.clone());
            }
            all
        }
        None => {
            let mut rng = seed.rng();
            (0..num_permutations)
                .map(|_| {
                    let mut p: Vec<usize> = (0..m).collect();
                    p.shuffle(&mut rng);
                    p
                })
                .collect()
        }
    };
    let contributions: Vec<Vec<f64>> = orders
        .par_iter()
        .map(|order| walk(&f, order, x, baseline, groups, phi0))
        .collect::<Result<_>>()?;
    let n = orders.len() as f64;
    let mut phi = vec![0.0; m];
    for c in &contributions {
        for (p, v) in phi.iter_mut().zip(c) {
            *p += v;
        }
    }
    phi.iter_mut().for_each(|p| *p /= n);

    let residual = fx - phi0 - phi.iter().sum::<f64>();
    let mass: f64 = phi.iter().map(|p| p.abs()).sum();
    if mass > 0.0 {
        phi.iter_mut().for_each(|p| *p += residual * p.abs() / mass);
    } else {
        phi.iter_mut().for_each(|p| *p += residual / m as f64);
    }
    Ok(Attribution { phi, phi0, fx, target: None })
}
