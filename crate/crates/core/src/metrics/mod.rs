//! Anomaly-segmentation metrics (AUROC, AP, FPR at a TPR target),
//! segmentation mIoU, and the OoD confusion/confidence analysis.

mod ranking;
mod segmentation;

pub use ranking::{auroc, average_precision, fpr_at_tpr, EvalPair, RankedPairs};
pub use segmentation::{
    miou, ood_confusion_analysis, ConfusionMatrix, OodConfusion, CONFIDENCE_BINS,
};

use crate::error::{Error, Result};
use crate::imagery::{LabelMap, LogitMap, ScoreMap, IGNORE_ID, OOD_ID};
use crate::scores::{self, ClasswiseStats, ScoreKind};

/// TPR target for the FPR operating point.
pub const TPR_TARGET: f64 = 0.95;

/// Ranking metrics for one set of scores.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankingMetrics {
    pub auroc: f64,
    pub ap: f64,
    pub fpr95: f64,
}

impl RankingMetrics {
    pub fn from_pairs(pairs: &EvalPair) -> Result<Self> {
        let ranked = RankedPairs::new(pairs);
        Ok(Self {
            auroc: ranked.auroc()?,
            ap: ranked.average_precision()?,
            fpr95: ranked.fpr_at_tpr(TPR_TARGET)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub score: ScoreKind,
    pub ranking: RankingMetrics,
    pub miou: f64,
    pub per_class_iou: Vec<Option<f64>>,
    pub ood_confusion: OodConfusion,
    pub pixels: usize,
    pub ood_pixels: usize,
}

/// Flattens score maps into one pair set; ignore pixels are dropped.
pub fn flatten_scores(maps: &[(&ScoreMap, &LabelMap)]) -> Result<EvalPair> {
    let mut pairs = EvalPair::default();
    for (scores, labels) in maps {
        if scores.height() != labels.height() || scores.width() != labels.width() {
            return Err(Error::arg("score map and labels differ in shape"));
        }
        for (&s, &t) in scores.data().iter().zip(labels.data()) {
            if t == IGNORE_ID {
                continue;
            }
            pairs.scores.push(s);
            pairs.truth.push(t == OOD_ID);
        }
    }
    Ok(pairs)
}

pub fn evaluate_scores(maps: &[(&ScoreMap, &LabelMap)]) -> Result<RankingMetrics> {
    RankingMetrics::from_pairs(&flatten_scores(maps)?)
}

/// Scores every pixel of the split with `kind` and computes all metrics.
pub fn evaluate_logits(
    items: &[(&LogitMap, &LabelMap)],
    kind: ScoreKind,
    stats: Option<&ClasswiseStats>,
) -> Result<EvalReport> {
    let classes = items
        .first()
        .map(|(l, _)| l.classes())
        .ok_or_else(|| Error::arg("nothing to evaluate"))?;
    let mut cm = ConfusionMatrix::new(classes);
    let mut confusion = OodConfusion::new(classes);
    let mut score_maps = Vec::with_capacity(items.len());
    for (logits, labels) in items {
        if !logits.same_grid(labels) {
            return Err(Error::arg("logits and labels differ in shape"));
        }
        cm.accumulate(&logits.predict(), labels)?;
        confusion.accumulate(logits, labels)?;
        score_maps.push(scores::compute(kind, logits, stats)?);
    }
    let paired: Vec<(&ScoreMap, &LabelMap)> =
        score_maps.iter().zip(items.iter().map(|(_, l)| *l)).collect();
    let pairs = flatten_scores(&paired)?;
    let ranking = RankingMetrics::from_pairs(&pairs)?;
    let (miou, per_class_iou) = cm.miou()?;
    Ok(EvalReport {
        score: kind,
        ranking,
        miou,
        per_class_iou,
        ood_pixels: pairs.truth.iter().filter(|&&t| t).count(),
        pixels: pairs.len(),
        ood_confusion: confusion,
    })
}

impl EvalReport {
    /// One row per metric.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in self.entries() {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }

    /// Flat `key=value` lines.
    pub fn to_key_values(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("score".to_string(), self.score.to_string()),
            ("auroc".to_string(), self.ranking.auroc.to_string()),
            ("ap".to_string(), self.ranking.ap.to_string()),
            ("fpr95".to_string(), self.ranking.fpr95.to_string()),
            ("miou".to_string(), self.miou.to_string()),
            ("pixels".to_string(), self.pixels.to_string()),
            ("ood_pixels".to_string(), self.ood_pixels.to_string()),
        ];
        for (c, iou) in self.per_class_iou.iter().enumerate() {
            let v = iou.map_or_else(|| "nan".to_string(), |v| v.to_string());
            out.push((format!("iou_{c}"), v));
        }
        out
    }
}

/// One row per score, columns in registry order of the reports given.
pub fn reports_table_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from("score,auroc,ap,fpr95,miou\n");
    for r in reports {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.score, r.ranking.auroc, r.ranking.ap, r.ranking.fpr95, r.miou
        ));
    }
    s
}
