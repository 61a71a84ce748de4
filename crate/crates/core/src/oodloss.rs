//! Fine-tuning losses on out-of-distribution pixels, the in-distribution
//! cross-entropy, and their weighted combination, each with its analytic
//! gradient with respect to the logits.
//!
//! Every loss comes in a batch form: pixel sets are pooled across the batch
//! and normalized once, so `|N_ood|` counts OoD pixels of the whole batch.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imagery::{LabelMap, LogitMap, IGNORE_ID, OOD_ID};
use crate::numeric::{self, KahanSum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossVariant {
    /// Softplus of the K largest logits (one-vs-rest "not this class").
    TopkOvr,
    /// One-vs-rest over every class.
    FullOvr,
    /// Cross-entropy against the uniform distribution.
    UniformCe,
    /// Log-sum-exp of the logits (maximizes the negative free energy).
    EnergyMax,
}

impl LossVariant {
    pub const ALL: [LossVariant; 4] = [
        LossVariant::TopkOvr,
        LossVariant::FullOvr,
        LossVariant::UniformCe,
        LossVariant::EnergyMax,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossVariant::TopkOvr => "topk_ovr",
            LossVariant::FullOvr => "full_ovr",
            LossVariant::UniformCe => "uniform_ce",
            LossVariant::EnergyMax => "energy_max",
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown loss variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub k: usize,
    pub slope: f64,
    pub gamma: f64,
    pub variant: LossVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            k: 5,
            slope: 2.0,
            gamma: 0.01,
            variant: LossVariant::TopkOvr,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::arg("k must be positive"));
        }
        if !(self.slope > 0.0 && self.slope.is_finite()) {
            return Err(Error::arg("slope must be positive"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::arg("gamma must be nonnegative"));
        }
        Ok(())
    }

    pub fn effective_k(&self, classes: usize) -> usize {
        self.k.min(classes)
    }
}

/// Loss value and its gradient, laid out like the input logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Batch loss: one pooled value, one gradient buffer per map.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchLoss {
    pub value: f64,
    pub grads: Vec<Vec<f64>>,
}

impl BatchLoss {
    fn into_single(mut self) -> LossResult {
        LossResult {
            value: self.value,
            grad: self.grads.pop().unwrap_or_default(),
        }
    }
}

pub type Batch<'a> = [(&'a LogitMap, &'a LabelMap)];

fn check_batch(batch: &Batch<'_>) -> Result<usize> {
    let classes = batch.first().map_or(2, |(l, _)| l.classes());
    for (logits, labels) in batch {
        if !logits.same_grid(labels) {
            return Err(Error::arg(format!(
                "logits {}x{} and labels {}x{} differ in shape",
                logits.height(),
                logits.width(),
                labels.height(),
                labels.width()
            )));
        }
        if logits.classes() != classes {
            return Err(Error::arg("batch mixes class counts"));
        }
    }
    Ok(classes)
}

/// Shared driver: `term` sees one selected pixel's logits and writes its
/// unnormalized gradient, returning its unnormalized loss.
fn pooled_loss(
    batch: &Batch<'_>,
    select: impl Fn(u8) -> bool,
    mut term: impl FnMut(&[f64], u8, &mut [f64]) -> f64,
) -> Result<BatchLoss> {
    let classes = check_batch(batch)?;
    let count: usize = batch
        .iter()
        .map(|(_, labels)| labels.data().iter().filter(|&&c| select(c)).count())
        .sum();
    let mut grads: Vec<Vec<f64>> = batch.iter().map(|(l, _)| vec![0.0; l.data().len()]).collect();
    if count == 0 {
        return Ok(BatchLoss { value: 0.0, grads });
    }
    let norm = 1.0 / count as f64;
    let mut total = KahanSum::new();
    for ((logits, labels), grad) in batch.iter().zip(grads.iter_mut()) {
        for (i, &code) in labels.data().iter().enumerate() {
            if !select(code) {
                continue;
            }
            let g = &mut grad[i * classes..(i + 1) * classes];
            total.add(term(logits.pixel(i), code, g));
            for v in g.iter_mut() {
                *v *= norm;
            }
        }
    }
    Ok(BatchLoss {
        value: total.value() * norm,
        grads,
    })
}

/// Indices of the `k` largest logits; ties go to the lower class index.
pub fn top_k_indices(logits: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.truncate(k.min(logits.len()));
    idx
}

fn ovr_batch(batch: &Batch<'_>, k: usize, slope: f64) -> Result<BatchLoss> {
    let classes = check_batch(batch)?;
    let k = k.min(classes).max(1);
    let inv_k = 1.0 / k as f64;
    pooled_loss(batch, |c| c == OOD_ID, |px, _, g| {
        let mut sum = 0.0;
        for j in top_k_indices(px, k) {
            let z = slope * px[j];
            // -log sigmoid(-z) == softplus(z)
            sum += numeric::softplus(z);
            g[j] = slope * numeric::sigmoid(z) * inv_k;
        }
        sum * inv_k
    })
}

pub fn ood_topk_ovr_batch(batch: &Batch<'_>, cfg: &LossConfig) -> Result<BatchLoss> {
    ovr_batch(batch, cfg.k, cfg.slope)
}

pub fn ood_full_ovr_batch(batch: &Batch<'_>, cfg: &LossConfig) -> Result<BatchLoss> {
    ovr_batch(batch, usize::MAX, cfg.slope)
}

pub fn ood_uniform_ce_batch(batch: &Batch<'_>) -> Result<BatchLoss> {
    pooled_loss(batch, |c| c == OOD_ID, |px, _, g| {
        let lse = numeric::softmax_into(px, g);
        let inv_c = 1.0 / px.len() as f64;
        for v in g.iter_mut() {
            *v -= inv_c;
        }
        let mean: KahanSum = px.iter().copied().collect();
        lse - mean.value() * inv_c
    })
}

pub fn ood_energy_max_batch(batch: &Batch<'_>) -> Result<BatchLoss> {
    pooled_loss(batch, |c| c == OOD_ID, |px, _, g| numeric::softmax_into(px, g))
}

/// Mean softmax cross-entropy over pixels carrying a regular class label.
pub fn id_cross_entropy_batch(batch: &Batch<'_>) -> Result<BatchLoss> {
    let classes = check_batch(batch)?;
    for (_, labels) in batch {
        if let Some(&code) = labels
            .data()
            .iter()
            .find(|&&c| usize::from(c) >= classes && c != OOD_ID && c != IGNORE_ID)
        {
            return Err(Error::InvalidClass { code, classes });
        }
    }
    pooled_loss(batch, |c| usize::from(c) < classes, |px, code, g| {
        let y = usize::from(code);
        let lse = numeric::softmax_into(px, g);
        g[y] -= 1.0;
        lse - px[y]
    })
}

pub fn ood_variant_batch(batch: &Batch<'_>, cfg: &LossConfig) -> Result<BatchLoss> {
    match cfg.variant {
        LossVariant::TopkOvr => ood_topk_ovr_batch(batch, cfg),
        LossVariant::FullOvr => ood_full_ovr_batch(batch, cfg),
        LossVariant::UniformCe => ood_uniform_ce_batch(batch),
        LossVariant::EnergyMax => ood_energy_max_batch(batch),
    }
}

pub fn ood_topk_ovr(logits: &LogitMap, labels: &LabelMap, cfg: &LossConfig) -> Result<LossResult> {
    ood_topk_ovr_batch(&[(logits, labels)], cfg).map(BatchLoss::into_single)
}

pub fn ood_full_ovr(logits: &LogitMap, labels: &LabelMap, cfg: &LossConfig) -> Result<LossResult> {
    ood_full_ovr_batch(&[(logits, labels)], cfg).map(BatchLoss::into_single)
}

pub fn ood_uniform_ce(logits: &LogitMap, labels: &LabelMap) -> Result<LossResult> {
    ood_uniform_ce_batch(&[(logits, labels)]).map(BatchLoss::into_single)
}

pub fn ood_energy_max(logits: &LogitMap, labels: &LabelMap) -> Result<LossResult> {
    ood_energy_max_batch(&[(logits, labels)]).map(BatchLoss::into_single)
}

pub fn id_cross_entropy(logits: &LogitMap, labels: &LabelMap) -> Result<LossResult> {
    id_cross_entropy_batch(&[(logits, labels)]).map(BatchLoss::into_single)
}

pub fn ood_variant(logits: &LogitMap, labels: &LabelMap, cfg: &LossConfig) -> Result<LossResult> {
    ood_variant_batch(&[(logits, labels)], cfg).map(BatchLoss::into_single)
}

/// `L_all = L_id + gamma * L_ood`, with both components and gradients kept
/// separately. Gradients are unweighted; scale `ood` by `gamma` when chaining.
#[derive(Clone, Debug, PartialEq)]
pub struct CombinedLoss {
    pub total: f64,
    pub id: BatchLoss,
    pub ood: BatchLoss,
    pub gamma: f64,
}

/// ID cross-entropy on the full-resolution maps, OoD loss on the
/// pre-upsampling maps with their downsampled labels.
pub fn combined_loss_batch(
    pre: &Batch<'_>,
    post: &Batch<'_>,
    cfg: &LossConfig,
) -> Result<CombinedLoss> {
    let id = id_cross_entropy_batch(post)?;
    let ood = ood_variant_batch(pre, cfg)?;
    Ok(CombinedLoss {
        total: id.value + cfg.gamma * ood.value,
        id,
        ood,
        gamma: cfg.gamma,
    })
}

pub fn combined_loss(
    logits_pre: &LogitMap,
    logits_post: &LogitMap,
    labels_full: &LabelMap,
    labels_pre: &LabelMap,
    cfg: &LossConfig,
) -> Result<CombinedLoss> {
    combined_loss_batch(&[(logits_pre, labels_pre)], &[(logits_post, labels_full)], cfg)
}
