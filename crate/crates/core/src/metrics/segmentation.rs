use crate::error::{Error, Result};
use crate::imagery::{LabelMap, LogitMap, OOD_ID};
use crate::numeric;

/// Row = truth class, column = predicted class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    /// Adds every pixel whose truth is a regular class. Sentinel truth codes
    /// are skipped; a prediction outside the class range is an error.
    pub fn accumulate(&mut self, pred: &LabelMap, truth: &LabelMap) -> Result<()> {
        if pred.height() != truth.height() || pred.width() != truth.width() {
            return Err(Error::arg("prediction and truth differ in shape"));
        }
        for (&p, &t) in pred.data().iter().zip(truth.data()) {
            let t = usize::from(t);
            if t >= self.classes {
                continue;
            }
            let p = usize::from(p);
            if p >= self.classes {
                return Err(Error::InvalidClass {
                    code: p as u8,
                    classes: self.classes,
                });
            }
            self.counts[t * self.classes + p] += 1;
        }
        Ok(())
    }

    /// IoU per class; `None` for classes absent from both truth and prediction.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let tp = self.get(c, c);
                let truth: u64 = (0..self.classes).map(|p| self.get(c, p)).sum();
                let pred: u64 = (0..self.classes).map(|t| self.get(t, c)).sum();
                let union = truth + pred - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect()
    }

    pub fn miou(&self) -> Result<(f64, Vec<Option<f64>>)> {
        let per_class = self.per_class_iou();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        if present.is_empty() {
            return Err(Error::UndefinedMetric("no labeled pixels for mIoU".into()));
        }
        Ok((numeric::sum(&present) / present.len() as f64, per_class))
    }
}

/// Mean IoU over classes present in truth or prediction; ignore and OoD
/// truth pixels are excluded.
pub fn miou(pred: &LabelMap, truth: &LabelMap, classes: usize) -> Result<(f64, Vec<Option<f64>>)> {
    let mut cm = ConfusionMatrix::new(classes);
    cm.accumulate(pred, truth)?;
    cm.miou()
}

pub const CONFIDENCE_BINS: usize = 20;

/// What the segmenter predicts on OoD pixels: argmax class counts and a
/// histogram of the winning softmax probability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OodConfusion {
    pub class_counts: Vec<u64>,
    pub confidence_counts: [u64; CONFIDENCE_BINS],
}

impl OodConfusion {
    pub fn new(classes: usize) -> Self {
        Self {
            class_counts: vec![0; classes],
            confidence_counts: [0; CONFIDENCE_BINS],
        }
    }

    pub fn total(&self) -> u64 {
        self.class_counts.iter().sum()
    }

    pub fn class_fractions(&self) -> Vec<f64> {
        let t = self.total();
        self.class_counts
            .iter()
            .map(|&c| if t == 0 { 0.0 } else { c as f64 / t as f64 })
            .collect()
    }

    pub fn confidence_fractions(&self) -> Vec<f64> {
        let t = self.total();
        self.confidence_counts
            .iter()
            .map(|&c| if t == 0 { 0.0 } else { c as f64 / t as f64 })
            .collect()
    }

    pub fn bin_of(confidence: f64) -> usize {
        ((confidence * CONFIDENCE_BINS as f64).floor() as usize).min(CONFIDENCE_BINS - 1)
    }

    pub fn accumulate(&mut self, logits: &LogitMap, truth: &LabelMap) -> Result<()> {
        if !logits.same_grid(truth) {
            return Err(Error::arg("logits and truth differ in shape"));
        }
        if logits.classes() != self.class_counts.len() {
            return Err(Error::arg("class count mismatch"));
        }
        let mut probs = vec![0.0; logits.classes()];
        for (px, &t) in logits.iter_pixels().zip(truth.data()) {
            if t != OOD_ID {
                continue;
            }
            numeric::softmax_into(px, &mut probs);
            let c = numeric::argmax(px);
            self.class_counts[c] += 1;
            self.confidence_counts[Self::bin_of(probs[c])] += 1;
        }
        Ok(())
    }

    /// Two CSV tables: per-class predictions, then confidence bins.
    pub fn to_csv(&self, class_names: &[&str]) -> String {
        let mut s = String::from("kind,bin,count,fraction\n");
        for (c, (&n, f)) in self.class_counts.iter().zip(self.class_fractions()).enumerate() {
            let name = class_names.get(c).copied().unwrap_or("?");
            s.push_str(&format!("class,{name},{n},{f:.6}\n"));
        }
        for (b, (&n, f)) in self
            .confidence_counts
            .iter()
            .zip(self.confidence_fractions())
            .enumerate()
        {
            let lo = b as f64 / CONFIDENCE_BINS as f64;
            let hi = (b + 1) as f64 / CONFIDENCE_BINS as f64;
            s.push_str(&format!("confidence,{lo:.2}-{hi:.2},{n},{f:.6}\n"));
        }
        s
    }
}

pub fn ood_confusion_analysis(logits: &LogitMap, truth: &LabelMap) -> Result<OodConfusion> {
    let mut out = OodConfusion::new(logits.classes());
    out.accumulate(logits, truth)?;
    Ok(out)
}
