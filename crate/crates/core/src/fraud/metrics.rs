use serde::{Deserialize, Serialize};

use super::{verdict_for, FraudError, FraudModel, LabeledDataset, Verdict};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn record(&mut self, actual_fraud: bool, predicted_fraud: bool) {
        match (actual_fraud, predicted_fraud) {
            (true, true) => self.true_positive += 1,
            (false, true) => self.false_positive += 1,
            (false, false) => self.true_negative += 1,
            (true, false) => self.false_negative += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }

    /// 0 when nothing was flagged.
    pub fn precision(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_positive)
    }

    /// 0 when there were no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_negative)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.true_positive + self.true_negative, self.total())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    /// `None` when the data holds only one class.
    pub auc: Option<f64>,
}

/// Area under the ROC curve via the Mann–Whitney rank statistic, with tied
/// scores sharing their average rank.
pub fn auc(scores: &[f64], positives: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positives.len(), "one label per score");
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the tied block i..=j shares the mean rank.
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += order[i..=j].iter().filter(|&&k| positives[k]).count() as f64 * mean_rank;
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Some((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

pub fn evaluate(model: &FraudModel, data: &LabeledDataset) -> Result<EvalMetrics, FraudError> {
    let scores = model.scores(data)?;
    let positives: Vec<bool> = data.rows.iter().map(|(_, l)| l.is_fraud()).collect();
    let mut confusion = Confusion::default();
    for (&p, &actual) in scores.iter().zip(&positives) {
        confusion.record(actual, verdict_for(p, model.threshold()) == Verdict::Fraud);
    }
    Ok(EvalMetrics {
        precision: confusion.precision(),
        recall: confusion.recall(),
        auc: auc(&scores, &positives),
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fraud::{FeatureVector, Label};

    /// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
    fn pairwise_auc(scores: &[f64], positives: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &pi) in positives.iter().enumerate() {
            for (j, &pj) in positives.iter().enumerate() {
                if pi && !pj {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn perfect_and_constant() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(auc(&[0.5; 4], &[false, true, false, true]), Some(0.5));
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), None);
    }

    #[test]
    fn four_rows_by_hand() {
        // Pairs (pos, neg): (0.9,0.8) ok, (0.9,0.1) ok, (0.7,0.8) wrong, (0.7,0.1) ok.
        let scores = [0.9, 0.8, 0.7, 0.1];
        let pos = [true, false, true, false];
        assert_eq!(auc(&scores, &pos), Some(0.75));
        assert_eq!(pairwise_auc(&scores, &pos), 0.75);
    }

    #[test]
    fn rank_statistic_matches_pair_enumeration() {
        let scores = [0.3, 0.3, 0.9, 0.1, 0.5, 0.5, 0.5, 0.2, 0.8, 0.3];
        let pos = [true, false, true, false, false, true, true, false, false, true];
        let got = auc(&scores, &pos).unwrap();
        assert!((got - pairwise_auc(&scores, &pos)).abs() < 1e-15);
    }

    #[test]
    fn evaluate_through_a_model() {
        let model = FraudModel::raw(0.0, vec![1.0], 0.5).unwrap();
        let rows = [(2.0, Label::Fraud), (1.0, Label::Legit), (0.5, Label::Fraud), (-3.0, Label::Legit)];
        let data = LabeledDataset::new(
            rows.iter().map(|&(x, l)| (FeatureVector::new(vec![x]).unwrap(), l)).collect(),
        );
        let m = evaluate(&model, &data).unwrap();
        assert_eq!(m.auc, Some(0.75));
        assert_eq!(
            m.confusion,
            Confusion { true_positive: 2, false_positive: 1, true_negative: 1, false_negative: 0 }
        );
        assert_eq!(m.precision, 2.0 / 3.0);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn empty_ratios_are_zero() {
        let c = Confusion::default();
        assert_eq!((c.precision(), c.recall(), c.accuracy()), (0.0, 0.0, 0.0));
    }
}
