use std::path::Path;

use crossing_intent::dataio::{
    checkpoint_from_json, checkpoint_to_json, load_checkpoint, load_split, save_checkpoint, scene_from_json,
    scene_to_json, split_indices, write_dataset, Split,
};
use crossing_intent::net::{ModelConfig, ModelParams};
use crossing_intent::synth::{generate_dataset, generate_scene, scene_seed, WorldConfig};
use crossing_intent::trainer::{Checkpoint, EpochLog, TrainConfig};
use crossing_intent::Error;
use serde_json::{json, Value};

fn here() -> &'static Path {
    Path::new("test.json")
}

fn scene_value(seed: u64) -> Value {
    let seq = generate_scene(&WorldConfig::default(), seed).unwrap();
    serde_json::from_str(&scene_to_json(&seq).unwrap()).unwrap()
}

fn scene_error(v: &Value) -> Error {
    scene_from_json(&v.to_string(), here()).unwrap_err()
}

fn validation_path(e: Error) -> String {
    match e {
        Error::Validation { path, .. } => path,
        other => panic!("expected a validation error, got {other}"),
    }
}

fn checkpoint(seed: u64) -> Checkpoint {
    let config = ModelConfig::default();
    Checkpoint {
        params: ModelParams::init(&config, seed).unwrap(),
        config,
        train_config: TrainConfig::short_schedule(),
        epoch: 3,
        history: vec![
            EpochLog {
                epoch: 1,
                train_loss: 0.7,
                val_loss: Some(0.69),
            },
            EpochLog {
                epoch: 2,
                train_loss: 0.1 + 0.2,
                val_loss: None,
            },
        ],
    }
}

#[test]
fn degenerate_bbox_is_reported_at_its_field() {
    let mut v = scene_value(1);
    v["frames"][3]["objects"][1]["bbox"] = json!([50.0, 40.0, 20.0, 60.0]);
    let e = scene_error(&v);
    let msg = e.to_string();
    assert_eq!(validation_path(e), "frames[3].objects[1].bbox");
    assert!(msg.contains("x1 < x2"), "{msg}");
}

#[test]
fn wrongly_typed_field_is_reported_at_its_path() {
    let mut v = scene_value(2);
    v["frames"][0]["objects"][2]["bbox"][1] = json!("ten");
    assert_eq!(validation_path(scene_error(&v)), "frames[0].objects[2].bbox[1]");

    let mut v = scene_value(2);
    v["frames"][1]["objects"][0]["kind"] = json!("bicycle");
    assert_eq!(validation_path(scene_error(&v)), "frames[1].objects[0].kind");
}

#[test]
fn missing_target_is_rejected() {
    let mut v = scene_value(3);
    v["target_index"] = json!(999);
    assert_eq!(validation_path(scene_error(&v)), "frames[0]");
}

#[test]
fn unknown_fields_are_rejected() {
    let mut v = scene_value(4);
    v["label"]["intent"] = json!(1);
    assert_eq!(validation_path(scene_error(&v)), "label.intent");
}

#[test]
fn signal_on_non_light_is_rejected() {
    let mut v = scene_value(5);
    let objects = v["frames"][0]["objects"].as_array_mut().unwrap();
    let ped = objects.iter_mut().find(|o| o["kind"] == "pedestrian").unwrap();
    ped["signal"] = json!("red");
    assert!(validation_path(scene_error(&v)).ends_with(".signal"));
}

#[test]
fn future_scene_version_is_rejected() {
    let mut v = scene_value(6);
    v["version"] = json!(2);
    match scene_error(&v) {
        Error::Version { what, found, expected } => assert_eq!((what, found, expected), ("scene", 2, 1)),
        other => panic!("{other}"),
    }
    v.as_object_mut().unwrap().remove("version");
    assert_eq!(validation_path(scene_error(&v)), "version");
}

#[test]
fn truncated_checkpoint_is_a_parse_error() {
    let text = checkpoint_to_json(&checkpoint(1)).unwrap();
    let cut = &text[..text.len() / 2];
    match checkpoint_from_json(cut, here()).unwrap_err() {
        Error::Parse { path, .. } => assert_eq!(path, here()),
        other => panic!("{other}"),
    }
}

#[test]
fn wrong_parameter_shape_names_the_parameter() {
    let mut v: Value = serde_json::from_str(&checkpoint_to_json(&checkpoint(1)).unwrap()).unwrap();
    let fcn = &mut v["params"]["fcn.weight"];
    let shape = fcn["shape"].as_array().unwrap().clone();
    let n = shape.iter().map(|d| d.as_u64().unwrap()).product::<u64>();
    fcn["shape"] = json!([n]);
    let e = checkpoint_from_json(&v.to_string(), here()).unwrap_err();
    assert_eq!(validation_path(e), "params.fcn.weight");

    let mut v: Value = serde_json::from_str(&checkpoint_to_json(&checkpoint(1)).unwrap()).unwrap();
    v["params"]["fcn.weight"]["values"].as_array_mut().unwrap().pop();
    assert_eq!(validation_path(checkpoint_from_json(&v.to_string(), here()).unwrap_err()), "params.fcn.weight");
}

#[test]
fn missing_and_unknown_parameters_are_named() {
    let base: Value = serde_json::from_str(&checkpoint_to_json(&checkpoint(1)).unwrap()).unwrap();
    let mut v = base.clone();
    let removed = v["params"].as_object_mut().unwrap().remove("lstm.weight").unwrap();
    assert_eq!(validation_path(checkpoint_from_json(&v.to_string(), here()).unwrap_err()), "params.lstm.weight");
    let mut v = base;
    v["params"]["lstm.extra"] = removed;
    assert_eq!(validation_path(checkpoint_from_json(&v.to_string(), here()).unwrap_err()), "params.lstm.extra");
}

#[test]
fn future_checkpoint_version_is_rejected() {
    let mut v: Value = serde_json::from_str(&checkpoint_to_json(&checkpoint(1)).unwrap()).unwrap();
    v["version"] = json!(7);
    assert!(matches!(
        checkpoint_from_json(&v.to_string(), here()),
        Err(Error::Version { what: "checkpoint", found: 7, .. })
    ));
}

#[test]
fn non_finite_parameters_are_not_written() {
    let mut ckpt = checkpoint(1);
    ckpt.params.get_mut("intent.bias").unwrap().data_mut()[0] = f64::NAN;
    match checkpoint_to_json(&ckpt) {
        Err(Error::NonFinite(name)) => assert_eq!(name, "intent.bias"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn scenes_round_trip_exactly() {
    let world = WorldConfig::default();
    for i in 0..100 {
        let seq = generate_scene(&world, scene_seed(77, i)).unwrap();
        let text = scene_to_json(&seq).unwrap();
        let back = scene_from_json(&text, here()).unwrap();
        assert_eq!(back, seq, "scene {i}");
        assert_eq!(scene_to_json(&back).unwrap(), text);
    }
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..100 {
        let ckpt = checkpoint(seed);
        let path = dir.path().join("c.json");
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt, "seed {seed}");
        for (a, b) in back.params.tensors().iter().zip(ckpt.params.tensors()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1, "temporary files left behind");
}

#[test]
fn dataset_directory_round_trips_by_split() {
    let dir = tempfile::tempdir().unwrap();
    let world = WorldConfig::default();
    let scenes = generate_dataset(&world, 30, 5).unwrap();
    write_dataset(dir.path(), &scenes, 8, Some(&world)).unwrap();
    let [train, val, test] = split_indices(30, 8);
    for (split, idx) in [(Split::Train, train), (Split::Val, val), (Split::Test, test)] {
        let loaded = load_split(dir.path(), split).unwrap();
        let expected: Vec<_> = idx.iter().map(|&i| scenes[i].clone()).collect();
        assert_eq!(loaded, expected);
    }
}

#[test]
fn split_is_a_seeded_partition() {
    for n in [1, 7, 10, 333] {
        let [a, b, c] = split_indices(n, 4);
        let mut all: Vec<_> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        assert_eq!(split_indices(n, 4), [a, b, c]);
    }
    assert_ne!(split_indices(100, 1), split_indices(100, 2));
    let [a, b, c] = split_indices(1000, 0);
    assert_eq!((a.len(), b.len(), c.len()), (700, 100, 200));
}

#[test]
fn bad_scene_in_a_split_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = generate_dataset(&WorldConfig::default(), 10, 5).unwrap();
    let m = write_dataset(dir.path(), &scenes, 0, None).unwrap();
    let victim = dir.path().join(&m.test[0]);
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&victim).unwrap()).unwrap();
    v["label"]["crossing"] = json!(2);
    std::fs::write(&victim, v.to_string()).unwrap();
    let path = validation_path(load_split(dir.path(), Split::Test).unwrap_err());
    assert_eq!(path, format!("{}: label.crossing", m.test[0]));
    load_split(dir.path(), Split::Train).unwrap();
}
