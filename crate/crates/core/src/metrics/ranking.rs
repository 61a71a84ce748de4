use crate::error::{Error, Result};
use crate::numeric::KahanSum;

/// Flattened scores with binary truth (`true` = OoD).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalPair {
    pub scores: Vec<f64>,
    pub truth: Vec<bool>,
}

impl EvalPair {
    pub fn new(scores: Vec<f64>, truth: Vec<bool>) -> Result<Self> {
        if scores.len() != truth.len() {
            return Err(Error::arg(format!(
                "{} scores but {} truth values",
                scores.len(),
                truth.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Data("non-finite score".into()));
        }
        Ok(Self { scores, truth })
    }

    /// Builds a pair from separate positive and negative score lists.
    pub fn from_groups(positives: &[f64], negatives: &[f64]) -> Result<Self> {
        let scores = positives.iter().chain(negatives).copied().collect();
        let truth = std::iter::repeat_n(true, positives.len())
            .chain(std::iter::repeat_n(false, negatives.len()))
            .collect();
        Self::new(scores, truth)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Scores sorted once and grouped into ties, descending. All three ranking
/// metrics read from the same grouping.
#[derive(Clone, Debug)]
pub struct RankedPairs {
    // (positives, negatives) per distinct score, highest score first
    groups: Vec<(u64, u64)>,
    positives: u64,
    negatives: u64,
}

impl RankedPairs {
    pub fn new(pairs: &EvalPair) -> Self {
        let mut keyed: Vec<(f64, bool)> = pairs
            .scores
            .iter()
            .copied()
            .zip(pairs.truth.iter().copied())
            .collect();
        keyed.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
        let mut groups: Vec<(u64, u64)> = Vec::new();
        let mut prev: Option<f64> = None;
        for (s, is_pos) in keyed {
            // -0.0 and 0.0 are one threshold
            if prev != Some(s) {
                groups.push((0, 0));
                prev = Some(s);
            }
            let g = groups.last_mut().expect("pushed above");
            if is_pos {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
        }
        let positives = groups.iter().map(|g| g.0).sum();
        let negatives = groups.iter().map(|g| g.1).sum();
        Self {
            groups,
            positives,
            negatives,
        }
    }

    pub fn positives(&self) -> u64 {
        self.positives
    }

    pub fn negatives(&self) -> u64 {
        self.negatives
    }

    fn need_both(&self) -> Result<()> {
        if self.positives == 0 || self.negatives == 0 {
            return Err(Error::UndefinedMetric(format!(
                "need positives and negatives, have {} and {}",
                self.positives, self.negatives
            )));
        }
        Ok(())
    }

    /// Mann-Whitney statistic with midranks, evaluated in integers:
    /// `2U = sum over positives of 2*midrank - P(P+1)`.
    pub fn auroc(&self) -> Result<f64> {
        self.need_both()?;
        let mut below: u128 = 0; // samples ranked strictly lower
        let mut twice_rank_sum: u128 = 0;
        for &(p, n) in self.groups.iter().rev() {
            let size = u128::from(p + n);
            // ranks below+1 ..= below+size, midrank*2 = 2*below + size + 1
            twice_rank_sum += u128::from(p) * (2 * below + size + 1);
            below += size;
        }
        let p = u128::from(self.positives);
        let twice_u = twice_rank_sum - p * (p + 1);
        let twice_pairs = 2 * p * u128::from(self.negatives);
        // divide the smaller side so that auroc(s) + auroc(-s) == 1 exactly
        let twice_rest = twice_pairs - twice_u;
        Ok(if twice_u <= twice_rest {
            twice_u as f64 / twice_pairs as f64
        } else {
            1.0 - twice_rest as f64 / twice_pairs as f64
        })
    }

    /// Step-wise AP over distinct thresholds, ties grouped.
    pub fn average_precision(&self) -> Result<f64> {
        if self.positives == 0 {
            return Err(Error::UndefinedMetric("average precision needs a positive".into()));
        }
        let total = self.positives as f64;
        let (mut tp, mut fp) = (0u64, 0u64);
        let mut ap = KahanSum::new();
        for &(p, n) in &self.groups {
            tp += p;
            fp += n;
            if p > 0 {
                ap.add(p as f64 / total * (tp as f64 / (tp + fp) as f64));
            }
        }
        Ok(ap.value())
    }

    /// FPR at the highest threshold whose TPR reaches `target`.
    pub fn fpr_at_tpr(&self, target: f64) -> Result<f64> {
        self.need_both()?;
        let (mut tp, mut fp) = (0u64, 0u64);
        for &(p, n) in &self.groups {
            tp += p;
            fp += n;
            if tp as f64 / self.positives as f64 >= target {
                return Ok(fp as f64 / self.negatives as f64);
            }
        }
        Ok(1.0)
    }
}

pub fn auroc(pairs: &EvalPair) -> Result<f64> {
    RankedPairs::new(pairs).auroc()
}

pub fn average_precision(pairs: &EvalPair) -> Result<f64> {
    RankedPairs::new(pairs).average_precision()
}

pub fn fpr_at_tpr(pairs: &EvalPair, target: f64) -> Result<f64> {
    RankedPairs::new(pairs).fpr_at_tpr(target)
}
