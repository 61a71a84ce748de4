//! Procedural stand-ins for a driving dataset, a proxy-outlier collection,
//! and an anomaly benchmark.

mod corpus;
mod objects;
mod scene;
mod style;

pub use corpus::{
    build_corpus, generate_corpus, parse_index, render_index, Corpus, CorpusSpec, GeneratedCorpus,
    IndexEntry, ObjectRecord, Split, INDEX_FILE, OBJECTS_FILE,
};
pub use objects::{
    generate_ood_object, generate_ood_object_with, Family, ObjectExtent, OodObject,
};
pub use scene::{
    generate_scene, SceneSpec, BUILDING, CAR, CLASS_NAMES, MIN_ROAD_FRACTION, NUM_CLASSES,
    PEDESTRIAN, ROAD, SKY, VEGETATION,
};
pub use style::StyleDomain;

/// Generator behind every seeded draw in the crate.
pub type SceneRng = rand_chacha::ChaCha8Rng;
/// Identifier of [`SceneRng`], recorded in corpus index files.
pub const RNG_ALGORITHM: &str = "chacha8";
