use serde::Serialize;

use crate::emotion::EmotionClass;
use crate::error::{Error, Result};

const K: usize = EmotionClass::COUNT;

/// Classification metrics with macro one-vs-rest averages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: [[usize; K]; K],
    pub count: usize,
}

/// Precision, recall and F1 of one class; zero denominators give 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn class_scores(tp: usize, fp: usize, fn_: usize) -> ClassScores {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassScores { precision, recall, f1 }
}

impl Metrics {
    /// Builds metrics from `(truth, predicted)` pairs. Macro averages run over
    /// the classes that occur in either the truth or the predictions.
    pub fn from_pairs(pairs: &[(EmotionClass, EmotionClass)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::param("cannot score an empty prediction set"));
        }
        let mut confusion = [[0usize; K]; K];
        for &(t, p) in pairs {
            confusion[t.code()][p.code()] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: [[usize; K]; K]) -> Self {
        let count: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..K).map(|c| confusion[c][c]).sum();
        let mut sums = (0.0, 0.0, 0.0);
        let mut present = 0usize;
        for c in 0..K {
            let truth: usize = confusion[c].iter().sum();
            let predicted: usize = (0..K).map(|r| confusion[r][c]).sum();
            if truth == 0 && predicted == 0 {
                continue;
            }
            present += 1;
            let tp = confusion[c][c];
            let s = class_scores(tp, predicted - tp, truth - tp);
            sums.0 += s.precision;
            sums.1 += s.recall;
            sums.2 += s.f1;
        }
        let n = present.max(1) as f64;
        Self {
            accuracy: ratio(correct, count),
            macro_precision: sums.0 / n,
            macro_recall: sums.1 / n,
            macro_f1: sums.2 / n,
            confusion,
            count,
        }
    }

    pub fn class(&self, class: EmotionClass) -> ClassScores {
        let c = class.code();
        let truth: usize = self.confusion[c].iter().sum();
        let predicted: usize = (0..K).map(|r| self.confusion[r][c]).sum();
        let tp = self.confusion[c][c];
        class_scores(tp, predicted - tp, truth - tp)
    }
}
