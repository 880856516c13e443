//! Confusion counts, per-label precision / recall / F1 and macro-F1.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square count matrix indexed `[truth][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<usize>>,
    total: usize,
}

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion(preds: &[usize], truths: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let mut counts = vec![vec![0; classes]; classes];
    for (&p, &t) in preds.iter().zip(truths) {
        if p >= classes || t >= classes {
            return Err(Error::Data(format!(
                "label {} out of range for {classes} classes",
                p.max(t)
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        total: preds.len(),
    })
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn get(&self, truth: usize, pred: usize) -> usize {
        self.counts[truth][pred]
    }

    pub fn class_counts(&self, class: usize) -> ClassCounts {
        let tp = self.counts[class][class];
        let support: usize = self.counts[class].iter().sum();
        let predicted: usize = self.counts.iter().map(|row| row[class]).sum();
        let fn_ = support - tp;
        let fp = predicted - tp;
        ClassCounts {
            tp,
            fp,
            fn_,
            tn: self.total - tp - fp - fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

impl LabelMetrics {
    /// Precision and recall are 0 when their denominator is 0; F1 is 0 when `P + R = 0`.
    pub fn from_counts(c: ClassCounts) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        Self {
            precision,
            recall,
            f1: f1_score(precision, recall),
            support: c.tp + c.fn_,
        }
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Which controller slot a report fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PmRole {
    /// Trained on the hybrid data only.
    Hybrid,
    /// Trained on hybrid plus pending data.
    Pending,
    /// Held-out test evaluation.
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_label: Vec<LabelMetrics>,
    pub macro_f1: f64,
    pub role: Option<PmRole>,
}

pub fn class_metrics(cm: &ConfusionMatrix) -> Vec<LabelMetrics> {
    (0..cm.classes())
        .map(|c| LabelMetrics::from_counts(cm.class_counts(c)))
        .collect()
}

/// Unweighted mean of the per-label F1 scores (0 for an empty list).
pub fn macro_f1(per_label: &[LabelMetrics]) -> f64 {
    if per_label.is_empty() {
        return 0.0;
    }
    per_label.iter().map(|m| m.f1).sum::<f64>() / per_label.len() as f64
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Self {
        let per_label = class_metrics(cm);
        Self {
            macro_f1: macro_f1(&per_label),
            per_label,
            role: None,
        }
    }

    pub fn from_predictions(preds: &[usize], truths: &[usize], classes: usize) -> Result<Self> {
        Ok(Self::from_confusion(&confusion(preds, truths, classes)?))
    }

    pub fn with_role(mut self, role: PmRole) -> Self {
        self.role = Some(role);
        self
    }

    pub fn f1(&self, label: usize) -> f64 {
        self.per_label.get(label).map_or(0.0, |m| m.f1)
    }

    /// `label,precision,recall,f1,support` with a header row. `names` replaces
    /// numeric ids when given.
    pub fn to_csv(&self, names: Option<&[String]>) -> String {
        let mut out = String::from("label,precision,recall,f1,support\n");
        for (i, m) in self.per_label.iter().enumerate() {
            let name = names.and_then(|n| n.get(i)).cloned().unwrap_or_else(|| i.to_string());
            let _ = writeln!(out, "{name},{},{},{},{}", m.precision, m.recall, m.f1, m.support);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
