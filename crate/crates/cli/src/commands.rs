use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use oodseg::augment::ProxyPool;
use oodseg::imagery::{read_logit_dump, write_heatmap};
use oodseg::metrics::{reports_table_csv, EvalReport};
use oodseg::oodloss::LossVariant;
use oodseg::pipeline::{evaluate_all, fit_stats, infer, Splits};
use oodseg::scores::{self, fit_classwise_stats, ClasswiseStats, ScoreKind};
use oodseg::segnet::{self, checkpoint, SegNet};
use oodseg::synth::{build_corpus, Corpus, ObjectExtent, Split, CLASS_NAMES, NUM_CLASSES};
use oodseg::{LabelMap, LogitMap};

use crate::config::RunConfig;
use crate::error::CliError;

pub const RESOLVED_CONFIG: &str = "resolved.cfg";
pub const MODEL_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train_log.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const ABLATION_FILE: &str = "ablate_k.csv";
pub const HEATMAP_DIR: &str = "heatmaps";

/// Scores compared across K, as in the K ablation table.
pub const ABLATION_SCORES: [ScoreKind; 3] =
    [ScoreKind::MaxLogit, ScoreKind::Energy, ScoreKind::MaxMin];

/// Where evaluation logits come from.
#[derive(Clone, Debug)]
pub enum LogitSource {
    Checkpoint(PathBuf),
    /// Directory of `NNNN.oodl` full-resolution logit dumps keyed by corpus id.
    Dumps(PathBuf),
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| oodseg::Error::io(path, e).into())
}

/// Creates `dir` if needed; its parent must already exist.
fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    match fs::create_dir(dir) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists && dir.is_dir() => Ok(()),
        Err(e) => Err(oodseg::Error::io(dir, e).into()),
    }
}

fn begin(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    ensure_out_dir(out)?;
    write(&out.join(RESOLVED_CONFIG), cfg.render())
}

fn load_checkpoint(path: &Path) -> Result<SegNet, CliError> {
    if !path.is_file() {
        return Err(CliError::State(format!(
            "checkpoint {} does not exist; run train first",
            path.display()
        )));
    }
    let net = checkpoint::load(path)?.net;
    if net.classes() != NUM_CLASSES {
        return Err(CliError::Usage(format!(
            "checkpoint has {} classes, corpus has {NUM_CLASSES}",
            net.classes()
        )));
    }
    Ok(net)
}

fn open_corpus(dir: &Path) -> Result<Corpus, CliError> {
    Ok(Corpus::open(dir)?)
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    begin(cfg, out)?;
    let entries = build_corpus(out, &cfg.corpus_spec()?)?;
    let count = |s: Split| entries.iter().filter(|e| e.split == s).count();
    let with_ood = entries.iter().filter(|e| e.has_ood).count();
    Ok(format!(
        "corpus {}: train {} val {} eval {} (with OoD {})",
        out.display(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Eval),
        with_ood
    ))
}

pub fn train(cfg: &RunConfig, corpus: &Path, out: &Path) -> Result<String, CliError> {
    begin(cfg, out)?;
    let splits = Splits::load(&open_corpus(corpus)?)?;
    let mut net = SegNet::new(NUM_CLASSES, cfg.train_seed);
    let run = segnet::train(&mut net, &splits.train, &splits.val, &cfg.pretrain())?;
    checkpoint::save(out.join(MODEL_FILE), &net, Some(&run.optimizer))?;
    write(&out.join(LOG_FILE), run.log.to_csv())?;
    let miou = run.log.last().map_or(f64::NAN, |e| e.val_miou);
    Ok(format!(
        "trained {} epochs: val mIoU {miou:.4}, parameters {}",
        run.log.epochs.len(),
        net.parameter_hash()
    ))
}

pub fn proxy_pool(cfg: &RunConfig, splits: &Splits) -> Result<ProxyPool, CliError> {
    let (h, w) = splits
        .dims()
        .ok_or_else(|| CliError::Usage("training split is empty".into()))?;
    Ok(ProxyPool::generate(
        cfg.proxy_pool_size,
        ObjectExtent::for_scene(h, w),
        cfg.proxy_domain()?.as_ref(),
        cfg.proxy_seed,
    ))
}

pub fn finetune_net(
    cfg: &RunConfig,
    pretrained: &SegNet,
    splits: &Splits,
    pool: &ProxyPool,
) -> Result<(SegNet, segnet::Trained), CliError> {
    let mut net = pretrained.clone();
    let run = segnet::finetune(&mut net, &splits.train, &splits.val, &cfg.finetune(), pool)?;
    if net.backbone_hash() != pretrained.backbone_hash() {
        return Err(CliError::State("backbone changed during fine-tuning".into()));
    }
    Ok((net, run))
}

pub fn finetune(cfg: &RunConfig, corpus: &Path, checkpoint_path: &Path, out: &Path) -> Result<String, CliError> {
    cfg.validate()?;
    let pretrained = load_checkpoint(checkpoint_path)?;
    begin(cfg, out)?;
    let splits = Splits::load(&open_corpus(corpus)?)?;
    let pool = proxy_pool(cfg, &splits)?;
    let (net, run) = finetune_net(cfg, &pretrained, &splits, &pool)?;
    checkpoint::save(out.join(MODEL_FILE), &net, Some(&run.optimizer))?;
    write(&out.join(LOG_FILE), run.log.to_csv())?;
    let miou = run.log.last().map_or(f64::NAN, |e| e.val_miou);
    Ok(format!(
        "fine-tuned {} ({} epochs, {} mixed samples): val mIoU {miou:.4}, backbone {}",
        cfg.variant,
        run.log.epochs.len(),
        run.log.mixed_samples,
        net.backbone_hash()
    ))
}

fn read_dumps(dir: &Path, ids: &[usize]) -> Result<Vec<LogitMap>, CliError> {
    ids.iter()
        .map(|id| Ok(read_logit_dump(dir.join(format!("{id:04}.oodl")))?))
        .collect()
}

struct EvalInputs {
    logits: Vec<LogitMap>,
    labels: Vec<LabelMap>,
    ids: Vec<usize>,
    stats: Option<ClasswiseStats>,
}

fn eval_inputs(corpus: &Corpus, source: &LogitSource, kinds: &[ScoreKind]) -> Result<EvalInputs, CliError> {
    let ids = corpus.ids(Split::Eval);
    let labels: Vec<LabelMap> = ids
        .iter()
        .map(|&id| Ok(corpus.load(id)?.labels))
        .collect::<Result<_, CliError>>()?;
    let needs_stats = kinds.iter().any(|k| k.needs_stats());
    let (logits, stats) = match source {
        LogitSource::Checkpoint(path) => {
            let net = load_checkpoint(path)?;
            let eval = corpus.load_split(Split::Eval)?;
            let stats = if needs_stats {
                Some(fit_stats(&net, &corpus.load_split(Split::Val)?)?)
            } else {
                None
            };
            (infer(&net, &eval)?, stats)
        }
        LogitSource::Dumps(dir) => {
            if !dir.is_dir() {
                return Err(CliError::State(format!("dump directory {} does not exist", dir.display())));
            }
            let logits = read_dumps(dir, &ids)?;
            let stats = if needs_stats {
                let val = read_dumps(dir, &corpus.ids(Split::Val)).map_err(|e| {
                    CliError::Usage(format!("std_ml needs validation dumps: {e}"))
                })?;
                Some(fit_classwise_stats(&val.iter().collect::<Vec<_>>())?)
            } else {
                None
            };
            (logits, stats)
        }
    };
    if let Some(l) = logits.first() {
        if l.classes() != NUM_CLASSES {
            return Err(CliError::Usage(format!(
                "logits have {} classes, corpus has {NUM_CLASSES}",
                l.classes()
            )));
        }
    }
    Ok(EvalInputs {
        logits,
        labels,
        ids,
        stats,
    })
}

pub fn eval(
    cfg: &RunConfig,
    corpus: &Path,
    source: &LogitSource,
    out: &Path,
    heatmaps: bool,
) -> Result<String, CliError> {
    cfg.validate()?;
    let corpus = open_corpus(corpus)?;
    let kinds = cfg.score.kinds();
    let inputs = eval_inputs(&corpus, source, &kinds)?;
    begin(cfg, out)?;
    let label_refs: Vec<&LabelMap> = inputs.labels.iter().collect();
    let reports = evaluate_all(&inputs.logits, &label_refs, &kinds, inputs.stats.as_ref())?;
    write_reports(out, &reports)?;
    if heatmaps {
        for &kind in &kinds {
            let dir = out.join(HEATMAP_DIR).join(kind.as_str());
            fs::create_dir_all(&dir).map_err(|e| oodseg::Error::io(&dir, e))?;
            for (logits, id) in inputs.logits.iter().zip(&inputs.ids) {
                let map = scores::compute(kind, logits, inputs.stats.as_ref())?;
                write_heatmap(&map, dir.join(format!("{id:04}.pgm")))?;
            }
        }
    }
    Ok(reports
        .iter()
        .map(|r| {
            format!(
                "{:<9} auroc {:.4} ap {:.4} fpr95 {:.4} miou {:.4}",
                r.score.as_str(),
                r.ranking.auroc,
                r.ranking.ap,
                r.ranking.fpr95,
                r.miou
            )
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

fn write_reports(out: &Path, reports: &[EvalReport]) -> Result<(), CliError> {
    write(&out.join(REPORT_FILE), reports_table_csv(reports))?;
    for r in reports {
        write(&out.join(format!("report_{}.csv", r.score)), r.to_csv())?;
        write(&out.join(format!("report_{}.txt", r.score)), r.to_key_values())?;
    }
    if let Some(r) = reports.first() {
        write(&out.join(CONFUSION_FILE), r.ood_confusion.to_csv(&CLASS_NAMES))?;
    }
    Ok(())
}

pub fn ablate_k(cfg: &RunConfig, corpus: &Path, checkpoint_path: &Path, out: &Path) -> Result<String, CliError> {
    if cfg.k_list.is_empty() {
        return Err(CliError::Usage("k_list is empty".into()));
    }
    if cfg.k_list.contains(&0) {
        return Err(CliError::Usage("K must be at least 1".into()));
    }
    cfg.validate()?;
    let pretrained = load_checkpoint(checkpoint_path)?;
    begin(cfg, out)?;
    let splits = Splits::load(&open_corpus(corpus)?)?;
    let pool = proxy_pool(cfg, &splits)?;
    let mut csv = String::from("k,score,auroc,ap,fpr95,miou\n");
    for &k in &cfg.k_list {
        let run_cfg = RunConfig {
            k,
            variant: LossVariant::TopkOvr,
            ..cfg.clone()
        };
        let (net, _) = finetune_net(&run_cfg, &pretrained, &splits, &pool)?;
        let logits = infer(&net, &splits.eval)?;
        let labels: Vec<&LabelMap> = splits.eval.iter().map(|s| &s.labels).collect();
        for r in evaluate_all(&logits, &labels, &ABLATION_SCORES, None)? {
            csv.push_str(&format!(
                "{k},{},{},{},{},{}\n",
                r.score, r.ranking.auroc, r.ranking.ap, r.ranking.fpr95, r.miou
            ));
        }
    }
    write(&out.join(ABLATION_FILE), &csv)?;
    Ok(csv.trim_end().to_string())
}
