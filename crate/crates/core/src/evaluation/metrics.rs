use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

/// Macro-averaged one-vs-rest metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classes: Vec<u32>,
    pub confusion: Vec<ConfusionCounts>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub f1: f64,
    pub avg_accuracy: f64,
}

/// Per-class confusion counts and their macro averages. A class with no
/// predicted positives contributes 0 to precision; one with no true
/// positives contributes 0 to recall.
pub fn compute_metrics(predictions: &[u32], truth: &[u32], classes: &[u32]) -> Result<MetricsReport> {
    if predictions.len() != truth.len() {
        return Err(ShapeError::LabelMismatch(format!(
            "{} predictions for {} true labels",
            predictions.len(),
            truth.len()
        )));
    }
    if classes.is_empty() {
        return Err(ShapeError::LabelMismatch("empty class list".into()));
    }
    if let Some(bad) = predictions.iter().chain(truth).find(|l| !classes.contains(l)) {
        return Err(ShapeError::LabelMismatch(format!("label {bad} is not in the class list")));
    }
    let n = truth.len();
    let confusion: Vec<ConfusionCounts> = classes
        .iter()
        .map(|&c| {
            let mut cc = ConfusionCounts::default();
            for (&p, &t) in predictions.iter().zip(truth) {
                match (p == c, t == c) {
                    (true, true) => cc.tp += 1,
                    (true, false) => cc.fp += 1,
                    (false, true) => cc.fn_ += 1,
                    (false, false) => cc.tn += 1,
                }
            }
            cc
        })
        .collect();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let c = classes.len() as f64;
    let macro_precision = confusion.iter().map(|x| ratio(x.tp, x.tp + x.fp)).sum::<f64>() / c;
    let macro_recall = confusion.iter().map(|x| ratio(x.tp, x.tp + x.fn_)).sum::<f64>() / c;
    let avg_accuracy = confusion.iter().map(|x| ratio(x.tp + x.tn, n)).sum::<f64>() / c;
    Ok(MetricsReport {
        classes: classes.to_vec(),
        confusion,
        macro_precision,
        macro_recall,
        f1: harmonic(macro_precision, macro_recall),
        avg_accuracy,
    })
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let t = [0, 1, 2, 1, 0];
        let m = compute_metrics(&t, &t, &[0, 1, 2]).unwrap();
        assert_eq!((m.macro_precision, m.macro_recall, m.f1, m.avg_accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn constant_predictor_on_balanced_pair() {
        let n = 7;
        let truth: Vec<u32> = (0..2 * n).map(|i| (i % 2) as u32).collect();
        let pred = vec![0; 2 * n];
        let m = compute_metrics(&pred, &truth, &[0, 1]).unwrap();
        assert_eq!(m.macro_precision, 0.25);
        assert_eq!(m.macro_recall, 0.5);
        assert_eq!(m.avg_accuracy, 0.5);
        assert!((m.f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn three_class_fixture() {
        // rows = truth, cols = prediction
        //        0  1  2
        //   0 [  5, 2, 1 ]
        //   1 [  1, 6, 0 ]
        //   2 [  0, 3, 2 ]
        let counts = [[5, 2, 1], [1, 6, 0], [0, 3, 2]];
        let (mut pred, mut truth) = (Vec::new(), Vec::new());
        for (t, row) in counts.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                for _ in 0..c {
                    truth.push(t as u32);
                    pred.push(p as u32);
                }
            }
        }
        let m = compute_metrics(&pred, &truth, &[0, 1, 2]).unwrap();
        // hand evaluation, n = 20
        // class 0: tp 5 fp 1 fn 3 tn 11; class 1: tp 6 fp 5 fn 1 tn 8; class 2: tp 2 fp 1 fn 3 tn 14
        assert_eq!(m.confusion[0], ConfusionCounts { tp: 5, fp: 1, fn_: 3, tn: 11 });
        assert_eq!(m.confusion[1], ConfusionCounts { tp: 6, fp: 5, fn_: 1, tn: 8 });
        assert_eq!(m.confusion[2], ConfusionCounts { tp: 2, fp: 1, fn_: 3, tn: 14 });
        let prec = (5.0 / 6.0 + 6.0 / 11.0 + 2.0 / 3.0) / 3.0;
        let rec = (5.0 / 8.0 + 6.0 / 7.0 + 2.0 / 5.0) / 3.0;
        let acc = (16.0 / 20.0 + 14.0 / 20.0 + 16.0 / 20.0) / 3.0;
        assert!((m.macro_precision - prec).abs() < 1e-12);
        assert!((m.macro_recall - rec).abs() < 1e-12);
        assert!((m.f1 - 2.0 * prec * rec / (prec + rec)).abs() < 1e-12);
        assert!((m.avg_accuracy - acc).abs() < 1e-12);
    }

    #[test]
    fn mismatches_are_rejected() {
        assert!(matches!(compute_metrics(&[0], &[0, 1], &[0, 1]), Err(ShapeError::LabelMismatch(_))));
        assert!(matches!(compute_metrics(&[3], &[0], &[0, 1]), Err(ShapeError::LabelMismatch(_))));
    }

    proptest! {
        #[test]
        fn metrics_are_bounded_and_consistent(pairs in proptest::collection::vec((0u32..4, 0u32..4), 1..200)) {
            let (pred, truth): (Vec<u32>, Vec<u32>) = pairs.into_iter().unzip();
            let m = compute_metrics(&pred, &truth, &[0, 1, 2, 3]).unwrap();
            for v in [m.macro_precision, m.macro_recall, m.f1, m.avg_accuracy] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            for c in &m.confusion {
                prop_assert_eq!(c.tp + c.fp + c.fn_ + c.tn, truth.len());
            }
            prop_assert!((m.f1 - harmonic(m.macro_precision, m.macro_recall)).abs() < 1e-15);
        }
    }
}
