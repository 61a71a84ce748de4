use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};

use super::objects::{generate_ood_object_with, Family, ObjectExtent};
use super::scene::{generate_scene, SceneSpec};
use super::{SceneRng, StyleDomain, RNG_ALGORITHM};
use crate::augment::{extract_style, paste, style_align};
use crate::error::{Error, Result};
use crate::imagery::{read_image, read_label_map, write_image, write_label_map, SegSample};
use crate::numeric::mix_seed;

pub const INDEX_FILE: &str = "index.csv";
pub const OBJECTS_FILE: &str = "objects.csv";
const INDEX_HEADER: &str = "id,split,style,has_ood,seed";
const OBJECTS_HEADER: &str = "id,split,family,shape,texture,object_seed";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Eval => "eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "eval" => Ok(Split::Eval),
            other => Err(Error::Format(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub height: usize,
    pub width: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_ood_eval: usize,
    pub style: StyleDomain,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            height: 128,
            width: 256,
            n_train: 200,
            n_val: 50,
            n_ood_eval: 50,
            style: StyleDomain::style_a(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub id: usize,
    pub split: Split,
    pub style: String,
    pub has_ood: bool,
    pub seed: u64,
}

/// One line of the object construction log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectRecord {
    pub id: usize,
    pub split: Split,
    pub family: Family,
    pub shape: &'static str,
    pub texture: &'static str,
    pub object_seed: u64,
}

/// A generated corpus held in memory.
#[derive(Clone, Debug)]
pub struct GeneratedCorpus {
    pub entries: Vec<IndexEntry>,
    pub samples: Vec<SegSample>,
    pub objects: Vec<ObjectRecord>,
}

impl GeneratedCorpus {
    pub fn split(&self, split: Split) -> Vec<SegSample> {
        self.entries
            .iter()
            .zip(&self.samples)
            .filter(|(e, _)| e.split == split)
            .map(|(_, s)| s.clone())
            .collect()
    }
}

/// Generates every split: plain train/val scenes and evaluation scenes with
/// one or two test-family objects pasted in as OoD.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<GeneratedCorpus> {
    if spec.n_train == 0 || spec.n_val == 0 || spec.n_ood_eval == 0 {
        return Err(Error::arg("every split needs at least one sample"));
    }
    let plan = std::iter::repeat_n(Split::Train, spec.n_train)
        .chain(std::iter::repeat_n(Split::Val, spec.n_val))
        .chain(std::iter::repeat_n(Split::Eval, spec.n_ood_eval));
    let extent = ObjectExtent::for_scene(spec.height, spec.width);
    let mut out = GeneratedCorpus {
        entries: Vec::new(),
        samples: Vec::new(),
        objects: Vec::new(),
    };
    for (id, split) in plan.enumerate() {
        let seed = mix_seed(spec.seed, id as u64);
        let scene = SceneSpec {
            height: spec.height,
            width: spec.width,
            style: spec.style.clone(),
            seed,
        };
        let mut sample = generate_scene(&scene)?;
        if split == Split::Eval {
            let mut rng = SceneRng::seed_from_u64(mix_seed(seed, 2000));
            let count = rng.random_range(1..=2);
            for j in 0..count {
                let object_seed = mix_seed(seed, 1000 + j);
                let obj = generate_ood_object_with(Family::Test, extent, object_seed);
                // anomalies are captured by the same camera as the scene, so
                // they carry the scene's channel statistics
                let obj = style_align(&obj, &extract_style(&sample.image, None)?);
                let row = rng.random_range(0..=spec.height - obj.height());
                let col = rng.random_range(0..=spec.width - obj.width());
                sample = paste(&sample, &obj, (row, col))?;
                out.objects.push(ObjectRecord {
                    id,
                    split,
                    family: obj.family,
                    shape: obj.shape_generator,
                    texture: obj.texture_generator,
                    object_seed,
                });
            }
        }
        out.entries.push(IndexEntry {
            id,
            split,
            style: spec.style.name.clone(),
            has_ood: sample.labels.has_ood(),
            seed,
        });
        out.samples.push(sample);
    }
    Ok(out)
}

fn image_path(root: &Path, id: usize) -> PathBuf {
    root.join("images").join(format!("{id:04}.ppm"))
}

fn label_path(root: &Path, id: usize) -> PathBuf {
    root.join("labels").join(format!("{id:04}.pgm"))
}

pub fn render_index(entries: &[IndexEntry]) -> String {
    let mut s = format!("# rng={RNG_ALGORITHM}\n{INDEX_HEADER}\n");
    for e in entries {
        s.push_str(&format!(
            "{:04},{},{},{},{}\n",
            e.id,
            e.split,
            e.style,
            u8::from(e.has_ood),
            e.seed
        ));
    }
    s
}

fn render_objects(objects: &[ObjectRecord]) -> String {
    let mut s = format!("{OBJECTS_HEADER}\n");
    for o in objects {
        s.push_str(&format!(
            "{:04},{},{},{},{},{}\n",
            o.id,
            o.split,
            o.family.as_str(),
            o.shape,
            o.texture,
            o.object_seed
        ));
    }
    s
}

/// Writes `images/NNNN.ppm`, `labels/NNNN.pgm`, `index.csv` and the object log.
pub fn build_corpus(dir: impl AsRef<Path>, spec: &CorpusSpec) -> Result<Vec<IndexEntry>> {
    let root = dir.as_ref();
    let corpus = generate_corpus(spec)?;
    for sub in ["images", "labels"] {
        let p = root.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    for (e, s) in corpus.entries.iter().zip(&corpus.samples) {
        write_image(&s.image, image_path(root, e.id))?;
        write_label_map(&s.labels, label_path(root, e.id))?;
    }
    let index = root.join(INDEX_FILE);
    fs::write(&index, render_index(&corpus.entries)).map_err(|e| Error::io(&index, e))?;
    let objects = root.join(OBJECTS_FILE);
    fs::write(&objects, render_objects(&corpus.objects)).map_err(|e| Error::io(&objects, e))?;
    Ok(corpus.entries)
}

pub fn parse_index(text: &str) -> Result<Vec<IndexEntry>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    if lines.next() != Some(INDEX_HEADER) {
        return Err(Error::Format("index.csv header mismatch".into()));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Format(format!("bad index line {line:?}"));
            if f.len() != 5 {
                return Err(bad());
            }
            Ok(IndexEntry {
                id: f[0].parse().map_err(|_| bad())?,
                split: f[1].parse()?,
                style: f[2].to_string(),
                has_ood: match f[3] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad()),
                },
                seed: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// A corpus directory on disk.
#[derive(Clone, Debug)]
pub struct Corpus {
    root: PathBuf,
    entries: Vec<IndexEntry>,
}

impl Corpus {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let root = dir.as_ref().to_path_buf();
        let index = root.join(INDEX_FILE);
        let text = fs::read_to_string(&index).map_err(|e| Error::io(&index, e))?;
        Ok(Self {
            entries: parse_index(&text)?,
            root,
        })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ids(&self, split: Split) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.id)
            .collect()
    }

    pub fn load(&self, id: usize) -> Result<SegSample> {
        let image = read_image(image_path(&self.root, id))?;
        let labels = read_label_map(label_path(&self.root, id))?;
        SegSample::new(image, labels)
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<SegSample>> {
        self.ids(split).into_iter().map(|id| self.load(id)).collect()
    }
}
