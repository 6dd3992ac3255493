use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    /// Count predictions `probability > threshold` against labels.
    pub fn from_scores(probabilities: &[f64], labels: &[u8], threshold: f64) -> Self {
        let mut c = Self::default();
        for (&p, &l) in probabilities.iter().zip(labels) {
            c.record(p > threshold, l == 1);
        }
        c
    }
}

/// Detection metrics. Precision, recall and F1 are `None` when their
/// denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ReportJson", try_from = "ReportJson")]
pub struct DetectionReport {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub threshold: f64,
}

impl DetectionReport {
    pub fn from_counts(counts: ConfusionCounts, threshold: f64) -> Result<Self> {
        let total = counts.total();
        if total == 0 {
            return Err(Error::InvalidArgument("cannot evaluate on an empty dataset".into()));
        }
        let (tp, tn, fp, fn_) = (counts.tp as f64, counts.tn as f64, counts.fp as f64, counts.fn_ as f64);
        let accuracy = (tp + tn) / total as f64;
        let precision = (counts.tp + counts.fp > 0).then(|| tp / (tp + fp));
        let recall = (counts.tp + counts.fn_ > 0).then(|| tp / (tp + fn_));
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        Ok(Self { counts, accuracy, precision, recall, f1, threshold })
    }

    pub fn from_scores(probabilities: &[f64], labels: &[u8], threshold: f64) -> Result<Self> {
        if probabilities.len() != labels.len() {
            return Err(Error::dim("evaluate", labels.len(), probabilities.len()));
        }
        Self::from_counts(ConfusionCounts::from_scores(probabilities, labels, threshold), threshold)
    }
}

#[derive(Serialize, Deserialize)]
struct ReportJson {
    counts: ConfusionCounts,
    metrics: MetricsJson,
    threshold: f64,
    undefined_flags: UndefinedFlags,
}

#[derive(Serialize, Deserialize)]
struct MetricsJson {
    accuracy: f64,
    precision: Option<f64>,
    recall: Option<f64>,
    f1: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct UndefinedFlags {
    precision: bool,
    recall: bool,
    f1: bool,
}

impl From<DetectionReport> for ReportJson {
    fn from(r: DetectionReport) -> Self {
        ReportJson {
            counts: r.counts,
            metrics: MetricsJson { accuracy: r.accuracy, precision: r.precision, recall: r.recall, f1: r.f1 },
            threshold: r.threshold,
            undefined_flags: UndefinedFlags {
                precision: r.precision.is_none(),
                recall: r.recall.is_none(),
                f1: r.f1.is_none(),
            },
        }
    }
}

impl TryFrom<ReportJson> for DetectionReport {
    type Error = String;

    fn try_from(j: ReportJson) -> std::result::Result<Self, String> {
        Ok(DetectionReport {
            counts: j.counts,
            accuracy: j.metrics.accuracy,
            precision: j.metrics.precision,
            recall: j.metrics.recall,
            f1: j.metrics.f1,
            threshold: j.threshold,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_correct() {
        let r = DetectionReport::from_counts(ConfusionCounts { tp: 5, tn: 5, fp: 0, fn_: 0 }, 0.5).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn mixed_counts() {
        let r = DetectionReport::from_counts(ConfusionCounts { tp: 3, tn: 5, fp: 1, fn_: 1 }, 0.5).unwrap();
        assert!((r.accuracy - 0.8).abs() < 1e-12);
        assert!((r.precision.unwrap() - 0.75).abs() < 1e-12);
        assert!((r.recall.unwrap() - 0.75).abs() < 1e-12);
        assert!((r.f1.unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn undefined_metrics_are_flagged() {
        let r = DetectionReport::from_counts(ConfusionCounts { tp: 0, tn: 4, fp: 0, fn_: 0 }, 0.5).unwrap();
        assert_eq!(r.precision, None);
        assert_eq!(r.recall, None);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["undefined_flags"]["precision"], true);
        assert_eq!(json["counts"]["fn"], 0);
        let back: DetectionReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
        assert!(DetectionReport::from_counts(ConfusionCounts::default(), 0.5).is_err());
    }

    proptest! {
        #[test]
        fn raising_threshold_is_monotone(scores in proptest::collection::vec((0.0f64..1.0, 0u8..2), 1..100), t1 in 0.0f64..1.0, dt in 0.0f64..0.5) {
            let (p, l): (Vec<f64>, Vec<u8>) = scores.into_iter().unzip();
            let lo = ConfusionCounts::from_scores(&p, &l, t1);
            let hi = ConfusionCounts::from_scores(&p, &l, t1 + dt);
            prop_assert!(hi.fp <= lo.fp);
            prop_assert!(hi.fn_ >= lo.fn_);
            prop_assert_eq!(lo.total(), p.len() as u64);
        }

        #[test]
        fn metrics_match_recomputation(scores in proptest::collection::vec((0.0f64..1.0, 0u8..2), 1..100)) {
            let (p, l): (Vec<f64>, Vec<u8>) = scores.into_iter().unzip();
            let r = DetectionReport::from_scores(&p, &l, 0.5).unwrap();
            let correct = p.iter().zip(&l).filter(|(&s, &y)| (s > 0.5) == (y == 1)).count();
            prop_assert!((r.accuracy - correct as f64 / p.len() as f64).abs() <= 1e-12);
            let pred_pos = p.iter().filter(|&&s| s > 0.5).count();
            let tp = p.iter().zip(&l).filter(|(&s, &y)| s > 0.5 && y == 1).count();
            if pred_pos > 0 {
                prop_assert!((r.precision.unwrap() - tp as f64 / pred_pos as f64).abs() <= 1e-12);
            }
        }
    }
}
