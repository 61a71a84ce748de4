//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are skipped. Unknown or repeated
//! keys are rejected. [`RunConfig::render`] writes every key in a fixed order
//! and parses back to an identical value.

use std::fmt::Display;
use std::str::FromStr;

use oodseg::augment::MixConfig;
use oodseg::oodloss::{LossConfig, LossVariant};
use oodseg::scores::ScoreKind;
use oodseg::segnet::TrainConfig;
use oodseg::synth::{CorpusSpec, StyleDomain};

use crate::error::CliError;

/// Which scores an evaluation reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreSelection {
    All,
    One(ScoreKind),
}

impl ScoreSelection {
    pub fn kinds(self) -> Vec<ScoreKind> {
        match self {
            Self::All => ScoreKind::ALL.to_vec(),
            Self::One(k) => vec![k],
        }
    }
}

impl FromStr for ScoreSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(Self::All);
        }
        s.parse::<ScoreKind>()
            .map(Self::One)
            .map_err(|_| format!("unknown score {s:?}"))
    }
}

impl std::fmt::Display for ScoreSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::All => f.write_str("all"),
            Self::One(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_ood_eval: usize,
    pub style: String,

    pub train_seed: u64,
    pub pretrain_epochs: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_lr: f64,
    pub pretrain_weight_decay: f64,

    pub finetune_seed: u64,
    pub finetune_epochs: usize,
    pub finetune_batch_size: usize,
    pub finetune_lr: f64,
    pub finetune_weight_decay: f64,

    pub variant: LossVariant,
    pub k: usize,
    pub slope: f64,
    pub gamma: f64,

    pub mix_probability: f64,
    pub style_align: bool,
    pub max_objects_per_scene: usize,
    /// Style domain the proxy objects are rendered in; "none" keeps them raw.
    pub proxy_style: String,
    pub proxy_pool_size: usize,
    pub proxy_seed: u64,

    pub score: ScoreSelection,
    pub k_list: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let corpus = CorpusSpec::default();
        let pre = TrainConfig::pretrain();
        let ft = TrainConfig::finetune();
        Self {
            seed: corpus.seed,
            height: corpus.height,
            width: corpus.width,
            n_train: corpus.n_train,
            n_val: corpus.n_val,
            n_ood_eval: corpus.n_ood_eval,
            style: corpus.style.name,
            train_seed: 0,
            pretrain_epochs: pre.epochs,
            pretrain_batch_size: pre.batch_size,
            pretrain_lr: pre.lr,
            pretrain_weight_decay: pre.weight_decay,
            finetune_seed: 0,
            finetune_epochs: ft.epochs,
            finetune_batch_size: ft.batch_size,
            finetune_lr: ft.lr,
            finetune_weight_decay: ft.weight_decay,
            variant: ft.loss.variant,
            k: ft.loss.k,
            slope: ft.loss.slope,
            gamma: ft.loss.gamma,
            mix_probability: ft.mix.mix_probability,
            style_align: ft.mix.style_align,
            max_objects_per_scene: ft.mix.max_objects_per_scene,
            proxy_style: "vivid".into(),
            proxy_pool_size: oodseg::pipeline::PROXY_POOL_SIZE,
            proxy_seed: 0,
            score: ScoreSelection::All,
            k_list: vec![3, 5, 7],
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("bad value {value:?} for {key}: {e}")))
}

pub fn parse_switch(value: &str) -> Result<bool, String> {
    match value {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(format!("expected on or off, got {value:?}")),
    }
}

pub fn parse_k_list(value: &str) -> Result<Vec<usize>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|k| k.trim().parse::<usize>().map_err(|e| format!("bad K {k:?}: {e}")))
        .collect()
}

fn switch(on: bool) -> &'static str {
    if on {
        "on"
    } else {
        "off"
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 29] = [
        "seed",
        "height",
        "width",
        "n_train",
        "n_val",
        "n_ood_eval",
        "style",
        "train_seed",
        "pretrain_epochs",
        "pretrain_batch_size",
        "pretrain_lr",
        "pretrain_weight_decay",
        "finetune_seed",
        "finetune_epochs",
        "finetune_batch_size",
        "finetune_lr",
        "finetune_weight_decay",
        "variant",
        "k",
        "slope",
        "gamma",
        "mix_probability",
        "style_align",
        "max_objects_per_scene",
        "proxy_style",
        "proxy_pool_size",
        "proxy_seed",
        "score",
        "k_list",
    ];

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split_once('#').map_or(line, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(CliError::Usage(format!("line {}: repeated key {key}", n + 1)));
            }
            seen.push(key);
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value;
        match key {
            "seed" => self.seed = parse_value(key, v)?,
            "height" => self.height = parse_value(key, v)?,
            "width" => self.width = parse_value(key, v)?,
            "n_train" => self.n_train = parse_value(key, v)?,
            "n_val" => self.n_val = parse_value(key, v)?,
            "n_ood_eval" => self.n_ood_eval = parse_value(key, v)?,
            "style" => self.style = v.to_string(),
            "train_seed" => self.train_seed = parse_value(key, v)?,
            "pretrain_epochs" => self.pretrain_epochs = parse_value(key, v)?,
            "pretrain_batch_size" => self.pretrain_batch_size = parse_value(key, v)?,
            "pretrain_lr" => self.pretrain_lr = parse_value(key, v)?,
            "pretrain_weight_decay" => self.pretrain_weight_decay = parse_value(key, v)?,
            "finetune_seed" => self.finetune_seed = parse_value(key, v)?,
            "finetune_epochs" => self.finetune_epochs = parse_value(key, v)?,
            "finetune_batch_size" => self.finetune_batch_size = parse_value(key, v)?,
            "finetune_lr" => self.finetune_lr = parse_value(key, v)?,
            "finetune_weight_decay" => self.finetune_weight_decay = parse_value(key, v)?,
            "variant" => self.variant = parse_value(key, v)?,
            "k" => self.k = parse_value(key, v)?,
            "slope" => self.slope = parse_value(key, v)?,
            "gamma" => self.gamma = parse_value(key, v)?,
            "mix_probability" => self.mix_probability = parse_value(key, v)?,
            "style_align" => {
                self.style_align =
                    parse_switch(v).map_err(|e| CliError::Usage(format!("{key}: {e}")))?
            }
            "max_objects_per_scene" => self.max_objects_per_scene = parse_value(key, v)?,
            "proxy_style" => self.proxy_style = v.to_string(),
            "proxy_pool_size" => self.proxy_pool_size = parse_value(key, v)?,
            "proxy_seed" => self.proxy_seed = parse_value(key, v)?,
            "score" => {
                self.score = v.parse().map_err(|e| CliError::Usage(format!("{key}: {e}")))?
            }
            "k_list" => {
                self.k_list = parse_k_list(v).map_err(|e| CliError::Usage(format!("{key}: {e}")))?
            }
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "seed" => self.seed.to_string(),
            "height" => self.height.to_string(),
            "width" => self.width.to_string(),
            "n_train" => self.n_train.to_string(),
            "n_val" => self.n_val.to_string(),
            "n_ood_eval" => self.n_ood_eval.to_string(),
            "style" => self.style.clone(),
            "train_seed" => self.train_seed.to_string(),
            "pretrain_epochs" => self.pretrain_epochs.to_string(),
            "pretrain_batch_size" => self.pretrain_batch_size.to_string(),
            "pretrain_lr" => self.pretrain_lr.to_string(),
            "pretrain_weight_decay" => self.pretrain_weight_decay.to_string(),
            "finetune_seed" => self.finetune_seed.to_string(),
            "finetune_epochs" => self.finetune_epochs.to_string(),
            "finetune_batch_size" => self.finetune_batch_size.to_string(),
            "finetune_lr" => self.finetune_lr.to_string(),
            "finetune_weight_decay" => self.finetune_weight_decay.to_string(),
            "variant" => self.variant.to_string(),
            "k" => self.k.to_string(),
            "slope" => self.slope.to_string(),
            "gamma" => self.gamma.to_string(),
            "mix_probability" => self.mix_probability.to_string(),
            "style_align" => switch(self.style_align).to_string(),
            "max_objects_per_scene" => self.max_objects_per_scene.to_string(),
            "proxy_style" => self.proxy_style.clone(),
            "proxy_pool_size" => self.proxy_pool_size.to_string(),
            "proxy_seed" => self.proxy_seed.to_string(),
            "score" => self.score.to_string(),
            "k_list" => self
                .k_list
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
            _ => unreachable!("key table and getter disagree"),
        }
    }

    /// Every key, one per line, in [`Self::KEYS`] order.
    pub fn render(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k)))
            .collect()
    }

    fn style_domain(name: &str) -> Result<StyleDomain, CliError> {
        StyleDomain::by_name(name).ok_or_else(|| CliError::Usage(format!("unknown style {name:?}")))
    }

    pub fn corpus_spec(&self) -> Result<CorpusSpec, CliError> {
        Ok(CorpusSpec {
            height: self.height,
            width: self.width,
            n_train: self.n_train,
            n_val: self.n_val,
            n_ood_eval: self.n_ood_eval,
            style: Self::style_domain(&self.style)?,
            seed: self.seed,
        })
    }

    pub fn proxy_domain(&self) -> Result<Option<StyleDomain>, CliError> {
        if self.proxy_style == "none" {
            return Ok(None);
        }
        Self::style_domain(&self.proxy_style).map(Some)
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            k: self.k,
            slope: self.slope,
            gamma: self.gamma,
            variant: self.variant,
        }
    }

    pub fn mix(&self) -> MixConfig {
        MixConfig {
            mix_probability: self.mix_probability,
            style_align: self.style_align,
            max_objects_per_scene: self.max_objects_per_scene,
        }
    }

    pub fn pretrain(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.pretrain_epochs,
            batch_size: self.pretrain_batch_size,
            seed: self.train_seed,
            lr: self.pretrain_lr,
            weight_decay: self.pretrain_weight_decay,
            ..TrainConfig::pretrain()
        }
    }

    pub fn finetune(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.finetune_epochs,
            batch_size: self.finetune_batch_size,
            seed: self.finetune_seed,
            lr: self.finetune_lr,
            weight_decay: self.finetune_weight_decay,
            loss: self.loss(),
            mix: self.mix(),
            freeze_backbone: true,
        }
    }

    /// Range and consistency checks that do not need any data.
    pub fn validate(&self) -> Result<(), CliError> {
        self.corpus_spec()?;
        self.proxy_domain()?;
        self.pretrain().validate()?;
        self.finetune().validate()?;
        if self.proxy_pool_size == 0 {
            return Err(CliError::Usage("proxy_pool_size must be positive".into()));
        }
        Ok(())
    }
}
