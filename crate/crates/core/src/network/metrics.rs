use serde::{Deserialize, Serialize};

use super::Model;
use crate::states::{Label, LabeledSample};

/// Classification metrics with "discordant" as the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Metrics {
    /// Predictions with `p >= 0.5` count as discordant.
    pub fn from_predictions(probs: &[f64], labels: &[Label]) -> Self {
        assert_eq!(probs.len(), labels.len());
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (&p, &label) in probs.iter().zip(labels) {
            match (p >= 0.5, label) {
                (true, Label::Discordant) => tp += 1,
                (true, Label::NonDiscordant) => fp += 1,
                (false, Label::NonDiscordant) => tn += 1,
                (false, Label::Discordant) => fn_ += 1,
            }
        }
        Self::from_counts(tp, fp, tn, fn_)
    }

    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            precision,
            recall,
            f1,
            tp,
            fp,
            tn,
            fn_,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Fraction of non-discordant states classified correctly.
    pub fn specificity(&self) -> f64 {
        if self.tn + self.fp == 0 {
            0.0
        } else {
            self.tn as f64 / (self.tn + self.fp) as f64
        }
    }

    /// Two-by-two confusion matrix, rows = true class, columns = predicted class.
    pub fn render_confusion(&self) -> String {
        let width = [self.tp, self.fp, self.tn, self.fn_]
            .iter()
            .map(|v| v.to_string().len())
            .max()
            .unwrap_or(1)
            .max(9);
        format!(
            "{:>17} | {:>w$} | {:>w$}\n{:>17} | {:>w$} | {:>w$}\n{:>17} | {:>w$} | {:>w$}\n",
            "true \\ predicted",
            "non-disc.",
            "discord.",
            "non-discordant",
            self.tn,
            self.fp,
            "discordant",
            self.fn_,
            self.tp,
            w = width
        )
    }
}

pub fn evaluate(model: &Model, test_set: &[LabeledSample]) -> Metrics {
    let probs = model.predict(test_set);
    let labels: Vec<Label> = test_set.iter().map(|s| s.label).collect();
    Metrics::from_predictions(&probs, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let labels = [Label::Discordant, Label::NonDiscordant, Label::Discordant];
        let m = Metrics::from_predictions(&[0.9, 0.1, 0.5], &labels);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!((m.fp, m.fn_), (0, 0));
        assert_eq!(m.f1, 1.0);
        assert_eq!(m.total(), 3);
    }

    #[test]
    fn constant_half_predicts_discordant() {
        let labels: Vec<Label> = (0..10)
            .map(|i| if i % 2 == 0 { Label::Discordant } else { Label::NonDiscordant })
            .collect();
        let m = Metrics::from_predictions(&[0.5; 10], &labels);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.tn, 0);
    }

    #[test]
    fn f1_definition() {
        let m = Metrics::from_counts(6, 2, 9, 3);
        let p = 6.0 / 8.0;
        let r = 6.0 / 9.0;
        assert!((m.f1 - 2.0 * p * r / (p + r)).abs() < 1e-15);
        assert_eq!(m.total(), 20);
        let empty = Metrics::from_counts(0, 0, 4, 0);
        assert_eq!(empty.f1, 0.0);
        assert_eq!(empty.accuracy, 1.0);
    }

    #[test]
    fn confusion_render_has_counts() {
        let text = Metrics::from_counts(11, 2, 13, 4).render_confusion();
        assert!(text.contains("13") && text.contains("11"));
        assert_eq!(text.lines().count(), 3);
    }
}
