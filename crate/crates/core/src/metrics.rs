//! Classification metrics (confusion counts, precision, recall, ROC-AUC) and
//! training-dynamics metrics (convergence epoch, stability).

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("domain error: {0}")]
    Domain(String),
}

fn domain(msg: impl Into<String>) -> MetricsError {
    MetricsError::Domain(msg.into())
}

/// Decision threshold; scores equal to it count as positive.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationScores {
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub validation_loss: f64,
    /// Validation-set scores, when the validation set holds both classes.
    pub validation_scores: Option<ClassificationScores>,
}

/// Per-epoch losses, 0-based.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochLog {
    pub epochs: Vec<EpochRecord>,
}

impl EpochLog {
    pub fn push(&mut self, record: EpochRecord) {
        self.epochs.push(record);
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn validation_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.validation_loss).collect()
    }

    /// Builds a log from bare loss series (no per-epoch scores).
    pub fn from_losses(train: &[f64], validation: &[f64]) -> Self {
        assert_eq!(train.len(), validation.len(), "series lengths differ");
        EpochLog {
            epochs: train
                .iter()
                .zip(validation)
                .map(|(&t, &v)| EpochRecord {
                    train_loss: t,
                    validation_loss: v,
                    validation_scores: None,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// A ratio that may be undefined (0/0); reported as 0 with `degenerate` set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub value: f64,
    pub degenerate: bool,
}

fn rate(num: usize, den: usize) -> Rate {
    if den == 0 {
        Rate {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Rate {
            value: num as f64 / den as f64,
            degenerate: false,
        }
    }
}

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<(), MetricsError> {
    if y.is_empty() {
        return Err(domain("empty input"));
    }
    if y.len() != y_hat.len() {
        return Err(domain(format!("{} labels but {} scores", y.len(), y_hat.len())));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(domain(format!("label {bad} is not binary")));
    }
    if y_hat.iter().any(|s| s.is_nan()) {
        return Err(domain("NaN score"));
    }
    Ok(())
}

/// Counts with `y_hat >= threshold` predicted positive.
pub fn confusion(y: &[f64], y_hat: &[f64], threshold: f64) -> Result<ConfusionCounts, MetricsError> {
    check_pair(y, y_hat)?;
    let mut c = ConfusionCounts::default();
    for (&t, &s) in y.iter().zip(y_hat) {
        match (t == 1.0, s >= threshold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn precision(c: &ConfusionCounts) -> Rate {
    rate(c.tp, c.tp + c.fp)
}

pub fn recall(c: &ConfusionCounts) -> Rate {
    rate(c.tp, c.tp + c.fn_)
}

/// Mann-Whitney estimate of ROC-AUC: the fraction of (positive, negative)
/// pairs ranked correctly, with ties worth one half.
///
/// Runs in `O(n log n)`: scores are sorted once and each block of tied
/// scores contributes `pos * (2 * neg_below + neg_in_block)` half-pairs.
pub fn roc_auc(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y, y_hat)?;
    let n_pos = y.iter().filter(|&&v| v == 1.0).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(domain("roc_auc needs both classes"));
    }

    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y_hat[a].total_cmp(&y_hat[b]));

    let mut half_pairs: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let score = y_hat[order[i]];
        let (mut pos, mut neg) = (0u64, 0u64);
        let mut j = i;
        // -0.0 and 0.0 tie, as they do under `>`.
        while j < order.len() && y_hat[order[j]] == score {
            if y[order[j]] == 1.0 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        half_pairs += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok((half_pairs as f64 / 2.0) / (n_pos * n_neg) as f64)
}

/// Precision and recall at `threshold` plus ROC-AUC.
pub fn classification_scores(y: &[f64], y_hat: &[f64], threshold: f64) -> Result<ClassificationScores, MetricsError> {
    let c = confusion(y, y_hat, threshold)?;
    Ok(ClassificationScores {
        precision: precision(&c).value,
        recall: recall(&c).value,
        auc: roc_auc(y, y_hat)?,
    })
}

/// 0-based epoch of minimum validation loss; earliest on ties.
pub fn convergence_epoch(log: &EpochLog) -> Option<usize> {
    argmin_first(&log.validation_losses())
}

pub(crate) fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Sample standard deviation (divisor `n - 1`) of the validation losses.
pub fn stability(log: &EpochLog) -> Result<f64, MetricsError> {
    sample_std(&log.validation_losses())
}

pub fn sample_std(values: &[f64]) -> Result<f64, MetricsError> {
    if values.len() < 2 {
        return Err(domain(format!(
            "standard deviation needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((ss / (n - 1.0)).sqrt())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Definition-level oracle: enumerate every (positive, negative) pair.
    fn auc_by_pairs(y: &[f64], s: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..y.len() {
            if y[i] != 1.0 {
                continue;
            }
            for j in 0..y.len() {
                if y[j] != 0.0 {
                    continue;
                }
                pairs += 1;
                if s[i] > s[j] {
                    total += 1.0;
                } else if s[i] == s[j] {
                    total += 0.5;
                }
            }
        }
        total / pairs as f64
    }

    #[test]
    fn confusion_examples() {
        let c = confusion(&[1.0, 1.0, 0.0, 0.0], &[0.9, 0.4, 0.6, 0.1], 0.5).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 1,
                fp: 1,
                tn: 1,
                fn_: 1
            }
        );
        let y = [1.0, 0.0, 1.0];
        let c = confusion(&y, &y, 0.5).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let c = confusion(&[1.0], &[0.5], DEFAULT_THRESHOLD).unwrap();
        assert_eq!(c.tp, 1);
        assert!(confusion(&[], &[], 0.5).is_err());
    }

    #[test]
    fn precision_recall_examples() {
        let c = ConfusionCounts {
            tp: 3,
            fp: 1,
            tn: 0,
            fn_: 0,
        };
        assert_eq!(
            precision(&c),
            Rate {
                value: 0.75,
                degenerate: false
            }
        );
        let c = ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 5,
            fn_: 2,
        };
        assert_eq!(
            precision(&c),
            Rate {
                value: 0.0,
                degenerate: true
            }
        );
        let c = ConfusionCounts {
            tp: 2,
            fp: 0,
            tn: 5,
            fn_: 0,
        };
        assert_eq!(precision(&c).value, 1.0);
        assert_eq!(recall(&c).value, 1.0);
        let c = ConfusionCounts {
            tp: 4,
            fp: 0,
            tn: 0,
            fn_: 1,
        };
        assert_eq!(recall(&c).value, 0.8);
        let c = ConfusionCounts {
            tp: 0,
            fp: 3,
            tn: 2,
            fn_: 0,
        };
        assert!(recall(&c).degenerate);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[1.0, 1.0, 0.0, 0.0], &[0.9, 0.8, 0.4, 0.3]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[1.0, 0.0, 1.0, 0.0], &[0.9, 0.8, 0.4, 0.3]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[1.0, 0.0, 1.0, 0.0], &[0.2; 4]).unwrap(), 0.5);
        assert!(roc_auc(&[1.0, 1.0], &[0.1, 0.2]).is_err());
        assert!(roc_auc(&[1.0, 0.0], &[f64::NAN, 0.2]).is_err());
    }

    #[test]
    fn convergence_epoch_examples() {
        let log = EpochLog::from_losses(&[0.0; 5], &[0.7, 0.5, 0.6, 0.4, 0.45]);
        assert_eq!(convergence_epoch(&log), Some(3));
        let falling: Vec<f64> = (0..50).map(|i| 1.0 - i as f64 * 0.01).collect();
        assert_eq!(convergence_epoch(&EpochLog::from_losses(&falling, &falling)), Some(49));
        let log = EpochLog::from_losses(&[0.0; 4], &[0.5, 0.3, 0.4, 0.3]);
        assert_eq!(convergence_epoch(&log), Some(1));
        assert_eq!(convergence_epoch(&EpochLog::default()), None);
    }

    #[test]
    fn stability_examples() {
        let s = |v: &[f64]| stability(&EpochLog::from_losses(v, v));
        assert_eq!(s(&[0.5, 0.5, 0.5]).unwrap(), 0.0);
        assert!((s(&[0.4, 0.6]).unwrap() - 0.141421).abs() < 1e-6);
        let mut spike = vec![0.5; 49];
        spike.push(1.5);
        assert!(s(&spike).unwrap() > s(&[0.5; 50]).unwrap());
        assert!(s(&[0.5]).is_err());
    }

    fn labelled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..200).prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<bool>(), n),
                // Few distinct levels so ties are common.
                proptest::collection::vec(0u8..12, n),
            )
                .prop_filter_map("needs both classes", |(y, s)| {
                    let pos = y.iter().filter(|&&b| b).count();
                    (pos > 0 && pos < y.len()).then(|| {
                        (
                            y.iter().map(|&b| b as u8 as f64).collect(),
                            s.iter().map(|&v| v as f64 / 11.0).collect(),
                        )
                    })
                })
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting((y, s) in labelled_scores()) {
            prop_assert_eq!(roc_auc(&y, &s).unwrap().to_bits(), auc_by_pairs(&y, &s).to_bits());
        }

        #[test]
        fn auc_invariant_under_monotone_maps((y, s) in labelled_scores(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
            let base = roc_auc(&y, &s).unwrap();
            let mapped: Vec<f64> = s.iter().map(|v| (a * v + b).exp()).collect();
            prop_assert_eq!(roc_auc(&y, &mapped).unwrap(), base);
            let cubed: Vec<f64> = s.iter().map(|v| v * v * v + v).collect();
            prop_assert_eq!(roc_auc(&y, &cubed).unwrap(), base);
        }

        #[test]
        fn auc_reversal_symmetry((y, s) in labelled_scores()) {
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let sum = roc_auc(&y, &s).unwrap() + roc_auc(&y, &neg).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn metric_ranges((y, s) in labelled_scores()) {
            let c = confusion(&y, &s, 0.5).unwrap();
            prop_assert_eq!(c.total(), y.len());
            for r in [precision(&c), recall(&c)] {
                prop_assert!((0.0..=1.0).contains(&r.value));
            }
            let log = EpochLog::from_losses(&s, &s);
            let ce = convergence_epoch(&log).unwrap();
            prop_assert!(ce < s.len());
            prop_assert!(stability(&log).unwrap() >= 0.0);
        }
    }
}
