use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::net::{downsample_labels, SegNet, BACKBONE_TENSORS};
use super::optim::AdamW;
use super::tensor::Tensor;
use super::upsample::upsample_transpose;
use crate::augment::{anomaly_mix, MixConfig, ObjectSource};
use crate::error::{Error, Result};
use crate::imagery::{LabelMap, LogitMap, SegSample};
use crate::metrics::ConfusionMatrix;
use crate::numeric::{mix_seed, KahanSum};
use crate::oodloss::{combined_loss_batch, id_cross_entropy_batch, LossConfig};
use crate::synth::SceneRng;

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const MIX_STREAM: u64 = 0x4d49_5845;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub loss: LossConfig,
    pub mix: MixConfig,
    pub freeze_backbone: bool,
}

impl TrainConfig {
    /// Full training of a fresh network on in-distribution data.
    pub fn pretrain() -> Self {
        Self {
            epochs: 12,
            batch_size: 4,
            seed: 0,
            lr: 2e-3,
            weight_decay: 1e-4,
            loss: LossConfig::default(),
            mix: MixConfig {
                mix_probability: 0.0,
                ..MixConfig::default()
            },
            freeze_backbone: false,
        }
    }

    /// Head-only fine-tuning with outlier mixing.
    pub fn finetune() -> Self {
        Self {
            epochs: 20,
            batch_size: 8,
            seed: 0,
            lr: 1e-5,
            weight_decay: 0.01,
            loss: LossConfig::default(),
            mix: MixConfig::default(),
            freeze_backbone: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::arg("epochs and batch_size must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::arg("lr and weight_decay must be nonnegative"));
        }
        self.loss.validate()?;
        self.mix.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub l_id: f64,
    pub l_ood: f64,
    pub val_miou: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Samples that received pasted objects, over all epochs.
    pub mixed_samples: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,l_id,l_ood,val_miou\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.lr, e.l_id, e.l_ood, e.val_miou
            ));
        }
        s
    }

    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }
}

/// Result of a training run: the log and the final optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trained {
    pub log: TrainLog,
    pub optimizer: AdamW,
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SceneRng::seed_from_u64(mix_seed(seed ^ SHUFFLE_STREAM, epoch as u64));
    order.shuffle(&mut rng);
    order
}

fn check_samples(samples: &[SegSample], classes: usize) -> Result<()> {
    for s in samples {
        s.labels.validate(classes)?;
    }
    Ok(())
}

/// mIoU of the network on `val` (empty `val` gives NaN).
pub fn validation_miou(net: &SegNet, val: &[SegSample]) -> Result<f64> {
    if val.is_empty() {
        return Ok(f64::NAN);
    }
    let mut cm = ConfusionMatrix::new(net.classes());
    for s in val {
        cm.accumulate(&net.predict(&s.image)?, &s.labels)?;
    }
    Ok(cm.miou()?.0)
}

fn miou_from_features(net: &SegNet, feats: &[Tensor], val: &[SegSample]) -> Result<f64> {
    if val.is_empty() {
        return Ok(f64::NAN);
    }
    let mut cm = ConfusionMatrix::new(net.classes());
    for (f, s) in feats.iter().zip(val) {
        let post = SegNet::upsample_logits(&net.head_logits(f));
        cm.accumulate(&post.predict(), &s.labels)?;
    }
    Ok(cm.miou()?.0)
}

fn add_into(acc: &mut [Vec<f64>], g: &[Vec<f64>]) {
    for (a, b) in acc.iter_mut().zip(g) {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
}

/// Trains with in-distribution cross-entropy only. All parameters are
/// updated unless `cfg.freeze_backbone` is set.
pub fn train(net: &mut SegNet, train: &[SegSample], val: &[SegSample], cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::arg("training split is empty"));
    }
    check_samples(train, net.classes())?;
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay, (cfg.epochs * steps_per_epoch) as u64);
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let lr = opt.current_lr();
        let mut loss = KahanSum::new();
        let order = epoch_order(train.len(), cfg.seed, epoch);
        for batch in order.chunks(cfg.batch_size) {
            let forwards = batch
                .iter()
                .map(|&i| net.forward(&train[i].image))
                .collect::<Result<Vec<_>>>()?;
            let pairs: Vec<(&LogitMap, &LabelMap)> = forwards
                .iter()
                .zip(batch)
                .map(|(f, &i)| (&f.logits_post, &train[i].labels))
                .collect();
            let id = id_cross_entropy_batch(&pairs)?;
            loss.add(id.value);
            let mut grads = net.zero_gradients();
            for (f, g) in forwards.iter().zip(&id.grads) {
                let sample_grads = net.backward(&f.cache, None, Some(g), cfg.freeze_backbone)?;
                add_into(&mut grads, &sample_grads);
            }
            let first = if cfg.freeze_backbone { BACKBONE_TENSORS } else { 0 };
            let grad_refs: Vec<&[f64]> = grads[first..].iter().map(Vec::as_slice).collect();
            let mut tensors = net.tensors_mut();
            opt.update(&mut tensors[first..], &grad_refs);
        }
        log.epochs.push(EpochLog {
            epoch: epoch + 1,
            lr,
            l_id: loss.value() / steps_per_epoch as f64,
            l_ood: 0.0,
            val_miou: validation_miou(net, val)?,
        });
    }
    Ok(Trained {
        log,
        optimizer: opt,
    })
}

/// Head-only fine-tuning with `L_id + gamma * L_ood`: the OoD term is taken
/// on pre-upsampling logits against labels downsampled by 4, the ID term on
/// the upsampled logits. Each sample is passed through [`anomaly_mix`] once
/// per epoch.
pub fn finetune(
    net: &mut SegNet,
    train: &[SegSample],
    val: &[SegSample],
    cfg: &TrainConfig,
    source: &dyn ObjectSource,
) -> Result<Trained> {
    cfg.validate()?;
    if !cfg.freeze_backbone {
        return Err(Error::arg("fine-tuning requires a frozen backbone"));
    }
    if train.is_empty() {
        return Err(Error::arg("training split is empty"));
    }
    check_samples(train, net.classes())?;
    // the backbone is frozen, so clean-sample features never change
    let cached: Vec<Tensor> = train
        .iter()
        .map(|s| net.features(&s.image))
        .collect::<Result<_>>()?;
    let val_feats: Vec<Tensor> = val
        .iter()
        .map(|s| net.features(&s.image))
        .collect::<Result<_>>()?;
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay, (cfg.epochs * steps_per_epoch) as u64);
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let lr = opt.current_lr();
        let (mut l_id, mut l_ood, mut ood_batches) = (KahanSum::new(), KahanSum::new(), 0usize);
        let order = epoch_order(train.len(), cfg.seed, epoch);
        for batch in order.chunks(cfg.batch_size) {
            let mut feats: Vec<Cow<'_, Tensor>> = Vec::with_capacity(batch.len());
            let mut labels: Vec<Cow<'_, LabelMap>> = Vec::with_capacity(batch.len());
            for &i in batch {
                let seed = mix_seed(cfg.seed ^ MIX_STREAM, (epoch * train.len() + i) as u64);
                let mixed = anomaly_mix(&train[i], &cfg.mix, source, seed);
                if mixed.fired() {
                    log.mixed_samples += 1;
                    feats.push(Cow::Owned(net.features(&mixed.sample.image)?));
                    labels.push(Cow::Owned(mixed.sample.labels));
                } else {
                    feats.push(Cow::Borrowed(&cached[i]));
                    labels.push(Cow::Borrowed(&train[i].labels));
                }
            }
            let pre: Vec<LogitMap> = feats.iter().map(|f| net.head_logits(f)).collect();
            let post: Vec<LogitMap> = pre.iter().map(SegNet::upsample_logits).collect();
            let labels_pre: Vec<LabelMap> = labels
                .iter()
                .map(|l| downsample_labels(l))
                .collect::<Result<_>>()?;
            let pre_pairs: Vec<(&LogitMap, &LabelMap)> = pre.iter().zip(&labels_pre).collect();
            let post_pairs: Vec<(&LogitMap, &LabelMap)> =
                post.iter().zip(labels.iter().map(|l| l.as_ref())).collect();
            let loss = combined_loss_batch(&pre_pairs, &post_pairs, &cfg.loss)?;
            l_id.add(loss.id.value);
            if labels_pre.iter().any(LabelMap::has_ood) {
                l_ood.add(loss.ood.value);
                ood_batches += 1;
            }
            let mut grads = net.zero_gradients();
            for (k, f) in feats.iter().enumerate() {
                let (h, w, c) = (pre[k].height(), pre[k].width(), pre[k].classes());
                let mut g = upsample_transpose(&loss.id.grads[k], h, w, c);
                for (gv, &o) in g.iter_mut().zip(&loss.ood.grads[k]) {
                    *gv += loss.gamma * o;
                }
                net.head_backward(f, &g, &mut grads, false);
            }
            let grad_refs: Vec<&[f64]> = grads[BACKBONE_TENSORS..].iter().map(Vec::as_slice).collect();
            let mut head = net.head_tensors_mut();
            opt.update(&mut head, &grad_refs);
        }
        log.epochs.push(EpochLog {
            epoch: epoch + 1,
            lr,
            l_id: l_id.value() / steps_per_epoch as f64,
            l_ood: if ood_batches == 0 {
                0.0
            } else {
                l_ood.value() / ood_batches as f64
            },
            val_miou: miou_from_features(net, &val_feats, val)?,
        });
    }
    Ok(Trained {
        log,
        optimizer: opt,
    })
}
