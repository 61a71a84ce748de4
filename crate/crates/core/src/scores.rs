//! Per-pixel OoD scores. Every score is oriented so that a higher value
//! means "more anomalous".

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imagery::{LogitMap, ScoreMap};
use crate::numeric::{self, KahanSum};

/// Floor for class-wise standard deviations.
pub const STATS_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    Msp,
    Entropy,
    MaxLogit,
    Energy,
    StandardizedMaxLogit,
    MaxMin,
}

impl ScoreKind {
    /// Registry order; report columns follow it.
    pub const ALL: [ScoreKind; 6] = [
        ScoreKind::Msp,
        ScoreKind::Entropy,
        ScoreKind::MaxLogit,
        ScoreKind::Energy,
        ScoreKind::StandardizedMaxLogit,
        ScoreKind::MaxMin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Msp => "msp",
            ScoreKind::Entropy => "entropy",
            ScoreKind::MaxLogit => "max_logit",
            ScoreKind::Energy => "energy",
            ScoreKind::StandardizedMaxLogit => "std_ml",
            ScoreKind::MaxMin => "max_min",
        }
    }

    pub fn needs_stats(self) -> bool {
        self == ScoreKind::StandardizedMaxLogit
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown score {s:?}")))
    }
}

fn map_pixels(logits: &LogitMap, f: impl Fn(&[f64]) -> f64) -> ScoreMap {
    let data = logits.iter_pixels().map(f).collect();
    ScoreMap::new(logits.height(), logits.width(), data).expect("finite logits give finite scores")
}

fn max_softmax(px: &[f64]) -> f64 {
    let m = numeric::max(px);
    let s: f64 = px.iter().map(|&x| (x - m).exp()).sum();
    1.0 / s
}

/// `1 - max softmax`.
pub fn score_msp(logits: &LogitMap) -> ScoreMap {
    map_pixels(logits, |px| 1.0 - max_softmax(px))
}

/// Shannon entropy (nats) of the softmax.
pub fn score_entropy(logits: &LogitMap) -> ScoreMap {
    map_pixels(logits, pixel_entropy)
}

fn pixel_entropy(px: &[f64]) -> f64 {
    // H = lse - sum p_i x_i, with p_i log p_i -> 0 handled by the weights
    let m = numeric::max(px);
    let mut z = 0.0;
    let mut weighted = 0.0;
    for &x in px {
        let e = (x - m).exp();
        z += e;
        weighted += e * (x - m);
    }
    (z.ln() - weighted / z).max(0.0)
}

/// Negated maximum logit.
pub fn score_max_logit(logits: &LogitMap) -> ScoreMap {
    map_pixels(logits, |px| -numeric::max(px))
}

/// Negative free energy at temperature 1, negated: `-logsumexp`.
pub fn score_energy(logits: &LogitMap) -> ScoreMap {
    map_pixels(logits, |px| -numeric::logsumexp(px))
}

/// Negated gap between the largest and smallest logit; at most 0.
pub fn score_max_min(logits: &LogitMap) -> ScoreMap {
    map_pixels(logits, |px| -(numeric::max(px) - numeric::min(px)))
}

/// Per-class moments of the max logit over pixels predicted as that class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClasswiseStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: Vec<usize>,
}

impl ClasswiseStats {
    pub fn neutral(classes: usize) -> Self {
        Self {
            mean: vec![0.0; classes],
            std: vec![1.0; classes],
            count: vec![0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.mean.len()
    }
}

pub fn fit_classwise_stats(maps: &[&LogitMap]) -> Result<ClasswiseStats> {
    let first = maps
        .first()
        .ok_or_else(|| Error::arg("classwise stats need at least one logit map"))?;
    let classes = first.classes();
    if maps.iter().any(|m| m.classes() != classes) {
        return Err(Error::arg("logit maps disagree on class count"));
    }
    let mut sums = vec![KahanSum::new(); classes];
    let mut count = vec![0usize; classes];
    for map in maps {
        for px in map.iter_pixels() {
            let c = numeric::argmax(px);
            sums[c].add(px[c]);
            count[c] += 1;
        }
    }
    let mean: Vec<f64> = sums
        .iter()
        .zip(&count)
        .map(|(s, &n)| if n == 0 { 0.0 } else { s.value() / n as f64 })
        .collect();
    let mut sq = vec![KahanSum::new(); classes];
    for map in maps {
        for px in map.iter_pixels() {
            let c = numeric::argmax(px);
            sq[c].add((px[c] - mean[c]).powi(2));
        }
    }
    let std = sq
        .iter()
        .zip(&count)
        .map(|(s, &n)| {
            if n == 0 {
                1.0
            } else {
                (s.value() / n as f64).sqrt().max(STATS_EPS)
            }
        })
        .collect();
    Ok(ClasswiseStats { mean, std, count })
}

/// `-(max logit - mu_c) / sigma_c` with `c` the predicted class.
pub fn score_standardized_ml(logits: &LogitMap, stats: &ClasswiseStats) -> Result<ScoreMap> {
    if stats.classes() != logits.classes() {
        return Err(Error::arg(format!(
            "stats cover {} classes, logits have {}",
            stats.classes(),
            logits.classes()
        )));
    }
    Ok(map_pixels(logits, |px| {
        let c = numeric::argmax(px);
        -(px[c] - stats.mean[c]) / stats.std[c]
    }))
}

/// Computes any registered score; `std_ml` requires `stats`.
pub fn compute(kind: ScoreKind, logits: &LogitMap, stats: Option<&ClasswiseStats>) -> Result<ScoreMap> {
    Ok(match kind {
        ScoreKind::Msp => score_msp(logits),
        ScoreKind::Entropy => score_entropy(logits),
        ScoreKind::MaxLogit => score_max_logit(logits),
        ScoreKind::Energy => score_energy(logits),
        ScoreKind::MaxMin => score_max_min(logits),
        ScoreKind::StandardizedMaxLogit => {
            let stats = stats.ok_or_else(|| Error::arg("std_ml needs fitted classwise stats"))?;
            score_standardized_ml(logits, stats)?
        }
    })
}
