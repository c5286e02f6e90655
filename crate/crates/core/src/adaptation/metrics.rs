use serde::{Deserialize, Serialize};

use crate::error::{RadarError, Result};
use crate::feature_io::{Class, NUM_CLASSES};

/// Accuracy, Macro-F1 and Macro-Recall over the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_recall: f64,
    pub count: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class F1 and recall use `0/0 = 0`; macro averages are unweighted
/// over both classes.
pub fn macro_metrics(preds: &[Class], labels: &[Class]) -> Result<Metrics> {
    if preds.len() != labels.len() {
        return Err(RadarError::DimensionMismatch {
            context: "predictions vs labels".into(),
            expected: labels.len(),
            actual: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(RadarError::invalid("metrics of an empty set"));
    }
    if let Some(&c) = preds.iter().chain(labels).find(|&&c| c >= NUM_CLASSES) {
        return Err(RadarError::invalid(format!("class {c} out of range")));
    }
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (&p, &y) in preds.iter().zip(labels) {
        confusion[y][p] += 1;
    }
    let (mut f1, mut recall) = (0.0, 0.0);
    for c in 0..NUM_CLASSES {
        let tp = confusion[c][c];
        let actual: usize = confusion[c].iter().sum();
        let predicted: usize = (0..NUM_CLASSES).map(|y| confusion[y][c]).sum();
        recall += ratio(tp, actual);
        f1 += ratio(2 * tp, actual + predicted);
    }
    let correct = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
    Ok(Metrics {
        accuracy: ratio(correct, preds.len()),
        macro_f1: f1 / NUM_CLASSES as f64,
        macro_recall: recall / NUM_CLASSES as f64,
        count: preds.len(),
    })
}
