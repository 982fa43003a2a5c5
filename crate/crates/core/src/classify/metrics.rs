use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::record::Label;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// Binary classification metrics. Undefined ratios are reported as 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(flatten)]
    pub confusion: Confusion,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision,
            recall,
            f1,
            confusion: c,
        }
    }

    /// A score counts as positive when `score ≥ threshold`.
    pub fn from_scores(scored: &[(f64, Label)], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for &(p, label) in scored {
            c.record(p >= threshold, label.is_positive());
        }
        Self::from_confusion(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics always serialize")
    }
}

/// Aligned plain-text table, one row per named configuration.
pub fn render_table(rows: &[(String, Metrics)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("config".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>8}  {:>9}  {:>8}  {:>8}",
        "config", "accuracy", "precision", "recall", "f1"
    );
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.4}  {:>9.4}  {:>8.4}  {:>8.4}",
            name, m.accuracy, m.precision, m.recall, m.f1
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition_arithmetic() {
        let m = Metrics::from_confusion(Confusion {
            tp: 90,
            fp: 10,
            fn_: 5,
            tn: 95,
        });
        assert!((m.precision - 0.9).abs() < 5e-5);
        assert!((m.recall - 0.9474).abs() < 5e-5);
        assert!((m.f1 - 0.9231).abs() < 5e-5);
        assert!((m.accuracy - 0.925).abs() < 5e-5);
    }

    #[test]
    fn perfect_and_degenerate() {
        let scored = [(0.9, Label::Dealer), (0.1, Label::NonDealer)];
        let m = Metrics::from_scores(&scored, 0.5);
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));

        let none = Metrics::from_scores(&[(0.2, Label::Dealer), (0.1, Label::NonDealer)], 0.5);
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));

        let empty = Metrics::from_scores(&[], 0.5);
        assert_eq!(empty.accuracy, 0.0);
    }

    #[test]
    fn json_is_flat() {
        let m = Metrics::from_confusion(Confusion { tp: 1, fp: 0, fn_: 0, tn: 1 });
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["fn"], 0);
        assert_eq!(v["accuracy"], 1.0);
    }

    #[test]
    fn table_is_aligned() {
        let m = Metrics::from_confusion(Confusion { tp: 1, fp: 1, fn_: 1, tn: 1 });
        let t = render_table(&[("quadruple/concat".into(), m), ("decision".into(), m)]);
        let lens: Vec<usize> = t.lines().map(str::len).collect();
        assert!(lens.windows(2).all(|w| w[0] == w[1]), "{t}");
    }
}
