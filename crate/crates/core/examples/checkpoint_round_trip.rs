//! Trains briefly, saves a checkpoint, loads it back and shows that the
//! restored model predicts bit-for-bit the same thing.
//!
//!     cargo run --release --example checkpoint_round_trip

use crossing_intent::dataio::{load_checkpoint, save_checkpoint};
use crossing_intent::net::ModelConfig;
use crossing_intent::synth::{generate_dataset, WorldConfig};
use crossing_intent::trainer::{train, TrainConfig};

fn main() -> crossing_intent::Result<()> {
    let world = WorldConfig::default();
    let data = generate_dataset(&world, 64, 5)?;
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::short_schedule()
    };
    let ckpt = train(&data, &[], &ModelConfig::default(), &cfg)?;

    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().join("model.json");
    save_checkpoint(&path, &ckpt)?;
    let size = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    let restored = load_checkpoint(&path)?;
    println!(
        "{} parameters in {} tensors, {size} bytes on disk, identical after reload: {}",
        ckpt.params.num_scalars(),
        ckpt.params.len(),
        restored == ckpt
    );
    for (epoch, log) in restored.history.iter().enumerate() {
        println!("history epoch {}: train loss {:.5}", epoch + 1, log.train_loss);
    }

    let (a, b) = (ckpt.model()?, restored.model()?);
    for seq in data.iter().take(5) {
        let (p, q) = (a.forward(seq)?, b.forward(seq)?);
        println!(
            "p = {:.17}  restored = {:.17}  same bits: {}",
            p.probability,
            q.probability,
            p.probability.to_bits() == q.probability.to_bits()
        );
    }
    Ok(())
}
