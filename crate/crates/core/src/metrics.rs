//! Ranking metrics for outlier detection: ROC-AUC, average precision and
//! Recall@k. Higher scores mean "more anomalous"; label `true` marks an
//! outlier.

use std::cmp::Ordering;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::shape(format!("{} labels", scores.len()), labels.len()));
        }
        if let Some(i) = scores.iter().position(|s| s.is_nan()) {
            return Err(Error::contract(format!("score {i} is NaN")));
        }
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }

    /// Indices by descending score, ties by ascending index.
    fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&i, &j| {
            self.scores[j]
                .partial_cmp(&self.scores[i])
                .unwrap_or(Ordering::Equal)
                .then(i.cmp(&j))
        });
        idx
    }

    /// Groups of tied scores in descending order, as `(positives, negatives)`.
    fn tie_groups(&self) -> Vec<(usize, usize)> {
        let order = self.order();
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut prev: Option<f64> = None;
        for i in order {
            if prev != Some(self.scores[i]) {
                groups.push((0, 0));
                prev = Some(self.scores[i]);
            }
            let g = groups.last_mut().expect("pushed above");
            if self.labels[i] {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
        }
        groups
    }
}

/// Probability that a random outlier outscores a random inlier, ties counting
/// one half.
pub fn roc_auc(ls: &LabeledScores) -> Result<f64> {
    let pos = ls.positives();
    let neg = ls.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::contract("ROC-AUC needs both outliers and inliers"));
    }
    // walk from the lowest score upwards, counting inliers already passed
    let mut below = 0usize;
    let mut wins = 0.0;
    for (p, n) in ls.tie_groups().into_iter().rev() {
        wins += p as f64 * (below as f64 + 0.5 * n as f64);
        below += n;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// `Σₙ (Rₙ − Rₙ₋₁)·Pₙ` with one threshold per distinct score.
pub fn average_precision(ls: &LabeledScores) -> Result<f64> {
    let pos = ls.positives();
    if pos == 0 {
        return Err(Error::contract("average precision needs at least one outlier"));
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for (p, n) in ls.tie_groups() {
        tp += p;
        seen += p + n;
        ap += (p as f64 / pos as f64) * (tp as f64 / seen as f64);
    }
    Ok(ap)
}

/// Fraction of outliers among the `k` highest scores, ties broken by
/// ascending index. `k = None` uses the number of outliers.
pub fn recall_at_k(ls: &LabeledScores, k: Option<usize>) -> Result<f64> {
    let pos = ls.positives();
    if pos == 0 {
        return Err(Error::contract("Recall@k needs at least one outlier"));
    }
    let k = k.unwrap_or(pos);
    if k == 0 || k > ls.len() {
        return Err(Error::contract(format!("k = {k} outside [1, {}]", ls.len())));
    }
    let hits = ls.order().into_iter().take(k).filter(|&i| ls.labels[i]).count();
    Ok(hits as f64 / pos as f64)
}

/// The three metrics of one ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub roc_auc: f64,
    pub average_precision: f64,
    pub recall_at_k: f64,
}

pub fn evaluate(ls: &LabeledScores) -> Result<Evaluation> {
    Ok(Evaluation {
        roc_auc: roc_auc(ls)?,
        average_precision: average_precision(ls)?,
        recall_at_k: recall_at_k(ls, None)?,
    })
}

/// Mean, population standard deviation and maximum.
pub fn summarize(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((mean, var.sqrt(), max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> LabeledScores {
        LabeledScores::new(vec![0.9, 0.8, 0.1, 0.0], vec![true, false, true, false]).unwrap()
    }

    #[test]
    fn fixture_values() {
        let ls = fixture();
        assert_eq!(roc_auc(&ls).unwrap(), 0.75);
        assert!((average_precision(&ls).unwrap() - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(recall_at_k(&ls, Some(2)).unwrap(), 0.5);
        assert_eq!(recall_at_k(&ls, None).unwrap(), 0.5);
    }

    #[test]
    fn boundary_cases() {
        let sep = LabeledScores::new(vec![3.0, 2.0, 1.0, 0.0], vec![true, true, false, false]).unwrap();
        assert_eq!(roc_auc(&sep).unwrap(), 1.0);
        assert_eq!(average_precision(&sep).unwrap(), 1.0);
        assert_eq!(recall_at_k(&sep, None).unwrap(), 1.0);

        let flat = LabeledScores::new(vec![1.0; 5], vec![true, false, false, true, false]).unwrap();
        assert_eq!(roc_auc(&flat).unwrap(), 0.5);
        assert_eq!(recall_at_k(&flat, Some(5)).unwrap(), 1.0);
        assert_eq!(recall_at_k(&flat, Some(1)).unwrap(), 0.5);

        let single = LabeledScores::new(vec![1.0, 2.0], vec![false, false]).unwrap();
        assert!(roc_auc(&single).is_err());
        assert!(average_precision(&single).is_err());
        assert!(recall_at_k(&fixture(), Some(5)).is_err());
        assert!(recall_at_k(&fixture(), Some(0)).is_err());
        assert!(LabeledScores::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn summary_uses_population_std() {
        let (mean, std, max) = summarize(&[1.0, 3.0]).unwrap();
        assert_eq!((mean, std, max), (2.0, 1.0, 3.0));
        assert!(summarize(&[]).is_none());
    }
}
