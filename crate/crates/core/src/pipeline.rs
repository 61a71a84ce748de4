//! End-to-end helpers shared by the command line and experiment drivers:
//! inference over a split, score statistics, and evaluation of a network.

use crate::augment::ProxyPool;
use crate::error::{Error, Result};
use crate::imagery::{LabelMap, LogitMap, SegSample};
use crate::metrics::{evaluate_logits, EvalReport};
use crate::scores::{fit_classwise_stats, ClasswiseStats, ScoreKind};
use crate::segnet::SegNet;
use crate::synth::{Corpus, GeneratedCorpus, ObjectExtent, Split, StyleDomain};

/// Default size of the proxy object pool used during fine-tuning.
pub const PROXY_POOL_SIZE: usize = 256;

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Vec<SegSample>,
    pub val: Vec<SegSample>,
    pub eval: Vec<SegSample>,
}

impl Splits {
    pub fn from_generated(corpus: &GeneratedCorpus) -> Self {
        Self {
            train: corpus.split(Split::Train),
            val: corpus.split(Split::Val),
            eval: corpus.split(Split::Eval),
        }
    }

    pub fn load(corpus: &Corpus) -> Result<Self> {
        Ok(Self {
            train: corpus.load_split(Split::Train)?,
            val: corpus.load_split(Split::Val)?,
            eval: corpus.load_split(Split::Eval)?,
        })
    }

    /// Image size shared by all samples.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.train
            .first()
            .map(|s| (s.image.height(), s.image.width()))
    }
}

/// Proxy pool sized for scenes of `dims`, optionally rendered in `style`.
pub fn proxy_pool(dims: (usize, usize), style: Option<&StyleDomain>, seed: u64) -> ProxyPool {
    ProxyPool::generate(PROXY_POOL_SIZE, ObjectExtent::for_scene(dims.0, dims.1), style, seed)
}

/// Full-resolution logits for every sample.
pub fn infer(net: &SegNet, samples: &[SegSample]) -> Result<Vec<LogitMap>> {
    samples
        .iter()
        .map(|s| Ok(net.forward(&s.image)?.logits_post))
        .collect()
}

/// Class-wise max-logit statistics over the predictions on `samples`.
pub fn fit_stats(net: &SegNet, samples: &[SegSample]) -> Result<ClasswiseStats> {
    let logits = infer(net, samples)?;
    fit_classwise_stats(&logits.iter().collect::<Vec<_>>())
}

/// Evaluates precomputed logits under each score in `kinds`.
pub fn evaluate_all(
    logits: &[LogitMap],
    labels: &[&LabelMap],
    kinds: &[ScoreKind],
    stats: Option<&ClasswiseStats>,
) -> Result<Vec<EvalReport>> {
    if logits.len() != labels.len() {
        return Err(Error::arg("logit and label counts differ"));
    }
    let items: Vec<(&LogitMap, &LabelMap)> = logits.iter().zip(labels.iter().copied()).collect();
    kinds
        .iter()
        .map(|&k| {
            let stats = if k.needs_stats() { stats } else { None };
            evaluate_logits(&items, k, stats)
        })
        .collect()
}

/// Runs `net` over `eval` and reports every score in `kinds`. Statistics for
/// standardized scores are fitted on `val`.
pub fn evaluate_net(
    net: &SegNet,
    eval: &[SegSample],
    val: &[SegSample],
    kinds: &[ScoreKind],
) -> Result<Vec<EvalReport>> {
    let stats = if kinds.iter().any(|k| k.needs_stats()) {
        Some(fit_stats(net, val)?)
    } else {
        None
    };
    let logits = infer(net, eval)?;
    let labels: Vec<&LabelMap> = eval.iter().map(|s| &s.labels).collect();
    evaluate_all(&logits, &labels, kinds, stats.as_ref())
}
