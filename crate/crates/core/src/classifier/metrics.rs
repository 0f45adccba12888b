use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Macro precision and recall, overall accuracy (percent) and the confusion matrix with
/// rows indexed by true class and columns by predicted class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub classes: Vec<String>,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    /// `truth` and `predicted` are class positions in `classes`.
    pub fn from_predictions(classes: &[String], truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::InvalidArgument("empty test set".into()));
        }
        if truth.len() != predicted.len() {
            return Err(Error::InvalidArgument("truth and prediction lengths differ".into()));
        }
        let k = classes.len();
        let mut confusion = vec![vec![0usize; k]; k];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
        let mut precisions = Vec::with_capacity(k);
        let mut recalls = Vec::new();
        for i in 0..k {
            let predicted_i: usize = (0..k).map(|r| confusion[r][i]).sum();
            let support: usize = confusion[i].iter().sum();
            precisions.push(if predicted_i > 0 {
                confusion[i][i] as f64 / predicted_i as f64
            } else {
                0.0
            });
            if support > 0 {
                recalls.push(confusion[i][i] as f64 / support as f64);
            }
        }
        // Classes absent from the test set contribute no recall and only count towards
        // precision when something was predicted for them.
        let present: Vec<usize> = (0..k)
            .filter(|&i| confusion[i].iter().sum::<usize>() > 0 || (0..k).any(|r| confusion[r][i] > 0))
            .collect();
        let precision = present.iter().map(|&i| precisions[i]).sum::<f64>() / present.len() as f64;
        Ok(Self {
            classes: classes.to_vec(),
            precision: 100.0 * precision,
            recall: 100.0 * recalls.iter().sum::<f64>() / recalls.len() as f64,
            accuracy: 100.0 * correct as f64 / truth.len() as f64,
            confusion,
        })
    }

    /// One-decimal summary row plus the confusion matrix, column-aligned.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>10} {:>10} {:>10}", "Precision", "Recall", "Accuracy");
        let _ = writeln!(out, "{:>10.1} {:>10.1} {:>10.1}", self.precision, self.recall, self.accuracy);
        let width = self.classes.iter().map(String::len).max().unwrap_or(0).max(5);
        let _ = writeln!(out);
        let _ = write!(out, "{:>width$}", "true\\pred");
        for c in &self.classes {
            let _ = write!(out, " {c:>width$}");
        }
        let _ = writeln!(out);
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            let _ = write!(out, "{c:>width$}");
            for v in row {
                let _ = write!(out, " {v:>width$}");
            }
            let _ = writeln!(out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("room{i}")).collect()
    }

    #[test]
    fn perfect_predictions() {
        let t = [0, 1, 2, 2, 1];
        let m = Metrics::from_predictions(&names(3), &t, &t).unwrap();
        assert_eq!((m.precision, m.recall, m.accuracy), (100.0, 100.0, 100.0));
    }

    #[test]
    fn constant_predictor_on_balanced_seven_classes() {
        let truth: Vec<usize> = (0..7).flat_map(|c| std::iter::repeat(c).take(40)).collect();
        let pred = vec![3; truth.len()];
        let m = Metrics::from_predictions(&names(7), &truth, &pred).unwrap();
        // Oracle: 40 of 280 correct.
        assert!((m.accuracy - 100.0 * 40.0 / 280.0).abs() < 1e-12);
        assert_eq!(format!("{:.1}", m.accuracy), "14.3");
        assert!((m.recall - 100.0 / 7.0).abs() < 1e-12);
        assert!((m.precision - 100.0 / 7.0 / 7.0).abs() < 1e-12);
        for (i, row) in m.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), 40, "row {i}");
        }
    }

    #[test]
    fn table_has_one_decimal() {
        let m = Metrics::from_predictions(&names(2), &[0, 1, 1], &[0, 1, 0]).unwrap();
        let t = m.to_table();
        assert!(t.contains("66.7"));
        assert!(t.lines().count() >= 5);
        assert!(Metrics::from_predictions(&names(2), &[], &[]).is_err());
    }
}
