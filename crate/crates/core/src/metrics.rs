//! Binary classification metrics and displacement errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts with crossing as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(preds: &[bool], labels: &[bool]) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::shape("classification_metrics", &[preds.len()], &[labels.len()]));
        }
        let mut c = Confusion::default();
        for (&p, &y) in preds.iter().zip(labels) {
            match (p, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `(TP + TN) / total`, 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// `TP / (TP + FP)`, 0 when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `TP / (TP + FN)`, 0 when there are no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_score(self.precision(), self.recall())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Accuracy, precision, recall, F1 and the underlying counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Confusion,
}

pub fn classification_metrics(preds: &[bool], labels: &[bool]) -> Result<Classification> {
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let counts = Confusion::from_predictions(preds, labels)?;
    Ok(Classification {
        accuracy: counts.accuracy(),
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        counts,
    })
}

fn check_pair(op: &'static str, pred: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::shape(op, &[pred.len(), 2], &[truth.len(), 2]));
    }
    if pred.is_empty() {
        return Err(Error::validation(op, "empty trajectory"));
    }
    Ok(())
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Mean Euclidean distance over all predicted steps.
pub fn ade(pred: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<f64> {
    check_pair("ade", pred, truth)?;
    let sum: f64 = pred.iter().zip(truth).map(|(&p, &t)| distance(p, t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Euclidean distance at the last step.
pub fn fde(pred: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<f64> {
    check_pair("fde", pred, truth)?;
    Ok(distance(pred[pred.len() - 1], truth[truth.len() - 1]))
}

/// Outcome of an evaluation run. ADE and FDE are in the units of the
/// trajectories (pixels for scene files).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ade: f64,
    pub fde: f64,
}

impl MetricsReport {
    /// Builds a report from per-sequence decisions and trajectories; ADE and
    /// FDE are averaged over sequences.
    pub fn from_predictions(
        model: impl Into<String>,
        preds: &[bool],
        labels: &[bool],
        pred_traj: &[Vec<[f64; 2]>],
        true_traj: &[Vec<[f64; 2]>],
    ) -> Result<Self> {
        let c = classification_metrics(preds, labels)?;
        if pred_traj.len() != preds.len() || true_traj.len() != preds.len() {
            return Err(Error::shape("metrics_report", &[pred_traj.len()], &[preds.len()]));
        }
        let mut ade_sum = 0.0;
        let mut fde_sum = 0.0;
        for (p, t) in pred_traj.iter().zip(true_traj) {
            ade_sum += ade(p, t)?;
            fde_sum += fde(p, t)?;
        }
        let n = preds.len() as f64;
        Ok(MetricsReport {
            model: model.into(),
            tp: c.counts.tp,
            fp: c.counts.fp,
            fn_: c.counts.fn_,
            tn: c.counts.tn,
            accuracy: c.accuracy,
            precision: c.precision,
            recall: c.recall,
            f1: c.f1,
            ade: ade_sum / n,
            fde: fde_sum / n,
        })
    }

    pub fn counts(&self) -> Confusion {
        Confusion {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            tn: self.tn,
        }
    }

    pub const CSV_HEADER: &'static str = "model,acc,prec,rec,f1,ade,fde,tp,fp,fn,tn";

    /// One CSV row in [`Self::CSV_HEADER`] order. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{},{}",
            self.model,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.ade,
            self.fde,
            self.tp,
            self.fp,
            self.fn_,
            self.tn
        )
    }

    /// `key=value` lines, one per field.
    pub fn to_key_value(&self) -> String {
        format!(
            "model={}\naccuracy={:?}\nprecision={:?}\nrecall={:?}\nf1={:?}\nade={:?}\nfde={:?}\ntp={}\nfp={}\nfn={}\ntn={}\n",
            self.model,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.ade,
            self.fde,
            self.tp,
            self.fp,
            self.fn_,
            self.tn
        )
    }
}
