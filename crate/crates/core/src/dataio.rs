//! Versioned JSON formats for scenes, checkpoints and dataset directories.
//!
//! Every loader validates the full document and reports the first problem
//! with its field path. Writers go through a temporary file and a rename,
//! so a reader never observes a half-written file.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::net::{ModelConfig, ModelParams};
use crate::scene::{BoundingBox, Frame, ObjectKind, SceneObject, SceneSequence, SignalState};
use crate::synth::WorldConfig;
use crate::trainer::{Checkpoint, EpochLog, TrainConfig};

pub const SCENE_VERSION: u64 = 1;
pub const CHECKPOINT_VERSION: u64 = 1;
pub const MANIFEST_VERSION: u64 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    version: u64,
    image_dims: [f64; 2],
    /// `id` of the target pedestrian.
    target_index: u32,
    frames: Vec<FrameFile>,
    label: LabelFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameFile {
    objects: Vec<ObjectFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectFile {
    id: u32,
    kind: ObjectKind,
    bbox: [f64; 4],
    signal: SignalState,
    appearance: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelFile {
    crossing: u8,
    future: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: Option<serde_json::Value>,
}

fn check_version(text: &str, path: &Path, what: &'static str, expected: u64) -> Result<()> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| parse_error(path, e))?;
    match probe.version {
        None => Err(Error::validation("version", "missing")),
        Some(v) => match v.as_u64() {
            Some(found) if found == expected => Ok(()),
            Some(found) => Err(Error::Version { what, found, expected }),
            None => Err(Error::validation("version", format!("expected an integer, found {v}"))),
        },
    }
}

fn parse_error(path: &Path, source: serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        source,
    }
}

/// Syntax errors become [`Error::Parse`]; schema errors become
/// [`Error::Validation`] at the offending field.
fn parse_with_path<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() {
            Error::validation(field, inner.to_string())
        } else {
            parse_error(path, inner)
        }
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::validation(path.display().to_string(), "not a file path"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

pub fn scene_to_json(seq: &SceneSequence) -> Result<String> {
    seq.validate()?;
    let file = SceneFile {
        version: SCENE_VERSION,
        image_dims: seq.image_dims,
        target_index: seq.target_id,
        frames: seq
            .frames
            .iter()
            .map(|f| FrameFile {
                objects: f
                    .objects
                    .iter()
                    .map(|o| ObjectFile {
                        id: o.id,
                        kind: o.kind,
                        bbox: [o.bbox.x1, o.bbox.y1, o.bbox.x2, o.bbox.y2],
                        signal: o.signal,
                        appearance: o.appearance.clone(),
                    })
                    .collect(),
            })
            .collect(),
        label: LabelFile {
            crossing: seq.label_crossing,
            future: seq.label_future.clone(),
        },
    };
    Ok(serde_json::to_string(&file).expect("scene serialization is infallible"))
}

/// Parses and validates a scene document; `path` is only used in messages.
pub fn scene_from_json(text: &str, path: &Path) -> Result<SceneSequence> {
    check_version(text, path, "scene", SCENE_VERSION)?;
    let file: SceneFile = parse_with_path(text, path)?;
    let seq = SceneSequence {
        frames: file
            .frames
            .into_iter()
            .map(|f| Frame {
                objects: f
                    .objects
                    .into_iter()
                    .map(|o| SceneObject {
                        id: o.id,
                        kind: o.kind,
                        bbox: BoundingBox::new(o.bbox[0], o.bbox[1], o.bbox[2], o.bbox[3]),
                        signal: o.signal,
                        appearance: o.appearance,
                    })
                    .collect(),
            })
            .collect(),
        image_dims: file.image_dims,
        target_id: file.target_index,
        label_crossing: file.label.crossing,
        label_future: file.label.future,
    };
    seq.validate()?;
    Ok(seq)
}

pub fn save_scene(path: &Path, seq: &SceneSequence) -> Result<()> {
    write_atomic(path, scene_to_json(seq)?.as_bytes())
}

pub fn load_scene(path: &Path) -> Result<SceneSequence> {
    scene_from_json(&read(path)?, path)
}

#[derive(Serialize)]
struct CheckpointOut<'a> {
    version: u64,
    config: &'a ModelConfig,
    train_config: &'a TrainConfig,
    params: BTreeMap<&'a str, ParamOut>,
    epoch: usize,
    history: &'a [EpochLog],
}

#[derive(Serialize)]
struct ParamOut {
    shape: Vec<usize>,
    values: Box<RawValue>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointIn {
    #[allow(dead_code)]
    version: u64,
    config: ModelConfig,
    train_config: TrainConfig,
    params: BTreeMap<String, ParamIn>,
    epoch: usize,
    history: Vec<EpochLog>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamIn {
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// `[v0,v1,...]` with every value in 17 significant digits.
fn decimal_array(values: &[f64]) -> Box<RawValue> {
    let mut s = String::with_capacity(values.len() * 24 + 2);
    s.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!("{v:.16e}"));
    }
    s.push(']');
    RawValue::from_string(s).expect("finite decimals form valid JSON")
}

pub fn checkpoint_to_json(ckpt: &Checkpoint) -> Result<String> {
    if let Some((name, _)) = ckpt.params.iter().find(|(_, t)| !t.is_finite()) {
        return Err(Error::NonFinite(name.to_string()));
    }
    let out = CheckpointOut {
        version: CHECKPOINT_VERSION,
        config: &ckpt.config,
        train_config: &ckpt.train_config,
        params: ckpt
            .params
            .iter()
            .map(|(n, t)| {
                (
                    n,
                    ParamOut {
                        shape: t.shape().to_vec(),
                        values: decimal_array(t.data()),
                    },
                )
            })
            .collect(),
        epoch: ckpt.epoch,
        history: &ckpt.history,
    };
    Ok(serde_json::to_string_pretty(&out).expect("checkpoint serialization is infallible"))
}

pub fn checkpoint_from_json(text: &str, path: &Path) -> Result<Checkpoint> {
    check_version(text, path, "checkpoint", CHECKPOINT_VERSION)?;
    let file: CheckpointIn = parse_with_path(text, path)?;
    file.train_config.validate()?;
    let mut named = Vec::with_capacity(file.params.len());
    for (name, p) in file.params {
        let t = Tensor::new(p.shape, p.values)
            .map_err(|_| Error::validation(format!("params.{name}"), "shape does not match value count"))?;
        named.push((name, t));
    }
    let params = ModelParams::from_named(&file.config, named)?;
    Ok(Checkpoint {
        config: file.config,
        train_config: file.train_config,
        params,
        epoch: file.epoch,
        history: file.history,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, checkpoint_to_json(ckpt)?.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_json(&read(path)?, path)
}

/// Dataset partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::validation("split", format!("unknown split `{other}` (train, val, test)"))),
        }
    }
}

/// Dataset directory index: scene file names per split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u64,
    pub seed: u64,
    /// Generator settings, when the scenes are synthetic.
    pub world: Option<WorldConfig>,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Manifest {
    pub fn files(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Seeded 70/10/20 partition of `0..n` (train, val, test), each part sorted.
pub fn split_indices(n: usize, seed: u64) -> [Vec<usize>; 3] {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    idx.shuffle(&mut rng);
    let n_train = (n as f64 * 0.7).round() as usize;
    let n_val = ((n as f64 * 0.1).round() as usize).min(n - n_train);
    let mut parts = [
        idx[..n_train].to_vec(),
        idx[n_train..n_train + n_val].to_vec(),
        idx[n_train + n_val..].to_vec(),
    ];
    for p in &mut parts {
        p.sort_unstable();
    }
    parts
}

pub fn scene_file_name(i: usize) -> String {
    format!("scene_{i:05}.json")
}

/// Writes one file per scene plus [`MANIFEST_FILE`] into `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, scenes: &[SceneSequence], seed: u64, world: Option<&WorldConfig>) -> Result<Manifest> {
    if scenes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (i, seq) in scenes.iter().enumerate() {
        save_scene(&dir.join(scene_file_name(i)), seq)?;
    }
    let [train, val, test] = split_indices(scenes.len(), seed);
    let names = |ix: Vec<usize>| ix.into_iter().map(scene_file_name).collect();
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed,
        world: world.cloned(),
        train: names(train),
        val: names(val),
        test: names(test),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization is infallible");
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = read(&path)?;
    check_version(&text, &path, "manifest", MANIFEST_VERSION)?;
    parse_with_path(&text, &path)
}

/// Loads every scene of one split, in manifest order.
pub fn load_split(dir: &Path, split: Split) -> Result<Vec<SceneSequence>> {
    let manifest = load_manifest(dir)?;
    manifest
        .files(split)
        .iter()
        .map(|name| {
            let path: PathBuf = dir.join(name);
            load_scene(&path).map_err(|e| match e {
                Error::Validation { path: field, msg } => Error::validation(format!("{name}: {field}"), msg),
                other => other,
            })
        })
        .collect()
}
