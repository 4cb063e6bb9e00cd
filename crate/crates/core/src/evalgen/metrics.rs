//! Detection metrics. Threat (label 1) is the positive class.

use crate::error::DataError;
use crate::params::{score, sigmoid, LabeledBatch, ParamVector};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Wall-clock timings attached to a metrics row.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timings {
    pub train_seconds: f64,
    pub detect_seconds: f64,
}

/// Accuracy and error rates. A rate whose denominator is empty is `None`,
/// never zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMetrics {
    pub accuracy: f64,
    pub false_positive_rate: Option<f64>,
    /// Missed-detection rate: threats classified as benign over all threats.
    pub false_negative_rate: Option<f64>,
    pub train_seconds: f64,
    pub detect_seconds: f64,
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionCounts, DataError> {
    if predictions.len() != labels.len() {
        return Err(DataError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(DataError::Empty);
    }
    let mut c = ConfusionCounts::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p != 0, l != 0) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, false) => c.true_neg += 1,
            (false, true) => c.false_neg += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts, timings: Timings) -> Result<DetectionMetrics, DataError> {
    let total = c.total();
    if total == 0 {
        return Err(DataError::Empty);
    }
    Ok(DetectionMetrics {
        accuracy: (c.true_pos + c.true_neg) as f64 / total as f64,
        false_positive_rate: ratio(c.false_pos, c.false_pos + c.true_neg),
        false_negative_rate: ratio(c.false_neg, c.false_neg + c.true_pos),
        train_seconds: timings.train_seconds,
        detect_seconds: timings.detect_seconds,
    })
}

/// 1 iff `sigmoid(w·x + b) >= threshold`. The boundary counts as a threat.
pub fn predict(theta: &ParamVector, x: &[f64], threshold: f64) -> u8 {
    debug_assert!(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1)");
    debug_assert_eq!(theta.dim(), x.len() + 1);
    u8::from(sigmoid(score(theta.as_slice(), x)) >= threshold)
}

/// Classifies every row of `data`, returning the counts and the time the
/// predictions took.
pub fn evaluate(theta: &ParamVector, data: &LabeledBatch, threshold: f64) -> Result<(ConfusionCounts, f64), DataError> {
    if theta.dim() != data.dim() + 1 {
        return Err(crate::error::ParamError::DimMismatch {
            expected: data.dim() + 1,
            actual: theta.dim(),
        }
        .into());
    }
    let started = Instant::now();
    let preds: Vec<u8> = (0..data.len())
        .map(|i| predict(theta, data.row(i), threshold))
        .collect();
    let elapsed = started.elapsed().as_secs_f64();
    Ok((confusion(&preds, data.labels())?, elapsed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    /// 100 samples with tp=40, fn=10, tn=45, fp=5.
    fn constructed() -> (Vec<u8>, Vec<u8>) {
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for (p, l, n) in [(1, 1, 40), (0, 1, 10), (0, 0, 45), (1, 0, 5)] {
            preds.extend(std::iter::repeat_n(p, n));
            labels.extend(std::iter::repeat_n(l, n));
        }
        (preds, labels)
    }

    #[test]
    fn confusion_examples() {
        let labels = vec![1, 0, 0, 1, 1];
        let c = confusion(&labels, &labels).unwrap();
        assert_eq!((c.false_pos, c.false_neg), (0, 0));
        let inv: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let c = confusion(&inv, &labels).unwrap();
        assert_eq!((c.true_pos, c.true_neg), (0, 0));
        let (p, l) = constructed();
        let c = confusion(&p, &l).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                true_pos: 40,
                false_pos: 5,
                true_neg: 45,
                false_neg: 10
            }
        );
        assert!(confusion(&[1], &[1, 0]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn metric_examples() {
        let (p, l) = constructed();
        let m = metrics(&confusion(&p, &l).unwrap(), Timings::default()).unwrap();
        assert!((m.accuracy - 0.85).abs() < 1e-15);
        assert!((m.false_positive_rate.unwrap() - 0.10).abs() < 1e-15);
        assert!((m.false_negative_rate.unwrap() - 0.20).abs() < 1e-15);

        let labels = vec![1, 0, 1, 0];
        let m = metrics(&confusion(&labels, &labels).unwrap(), Timings::default()).unwrap();
        assert_eq!((m.accuracy, m.false_positive_rate, m.false_negative_rate), (1.0, Some(0.0), Some(0.0)));

        let m = metrics(&confusion(&[0, 0, 0, 0], &labels).unwrap(), Timings::default()).unwrap();
        assert_eq!((m.accuracy, m.false_positive_rate, m.false_negative_rate), (0.5, Some(0.0), Some(1.0)));
    }

    #[test]
    fn undefined_rates_are_not_zero() {
        let m = metrics(&confusion(&[1, 0], &[1, 1]).unwrap(), Timings::default()).unwrap();
        assert_eq!(m.false_positive_rate, None);
        assert_eq!(m.false_negative_rate, Some(0.5));
        let m = metrics(&confusion(&[0], &[0]).unwrap(), Timings::default()).unwrap();
        assert_eq!(m.false_negative_rate, None);
        assert!(metrics(&ConfusionCounts::default(), Timings::default()).is_err());
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&ParamVector::zeros(3), &[4.0, -9.0], 0.5), 1);
        assert_eq!(predict(&pv(&[10.0, 0.0]), &[1.0], 0.5), 1);
        assert_eq!(predict(&pv(&[10.0, 0.0]), &[-1.0], 0.999), 0);
    }
}
