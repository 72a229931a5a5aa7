//! Trains on a synthetic world and scores a held-out set, including the
//! trajectory head against a standing-still baseline.
//!
//!     cargo run --release --example train_and_evaluate -- [train] [test] [epochs] [noise]
//!
//! The short schedule is used; a full run on 2000 scenes takes about two
//! minutes on one core.

use std::time::Instant;

use crossing_intent::metrics::ade;
use crossing_intent::net::ModelConfig;
use crossing_intent::synth::{generate_dataset, WorldConfig};
use crossing_intent::trainer::{evaluate, standstill_trajectory, train_with, TrainConfig};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> crossing_intent::Result<()> {
    let world = WorldConfig {
        noise: arg(4, 0.05),
        ..WorldConfig::default()
    };
    let train = generate_dataset(&world, arg(1, 2000), 1)?;
    let test = generate_dataset(&world, arg(2, 500), 2)?;
    let cfg = TrainConfig {
        epochs: arg(3, 30),
        ..TrainConfig::short_schedule()
    };

    let start = Instant::now();
    let ckpt = train_with(&train, &[], &ModelConfig::default(), &cfg, |log| {
        println!("epoch {:>3}  loss {:.5}  ({:.1} s)", log.epoch, log.train_loss, start.elapsed().as_secs_f64());
    })?;
    let model = ckpt.model()?;
    print!("{}", evaluate(&model, &test, "full")?.to_key_value());

    let (mut model_ade, mut still_ade, mut n) = (0.0, 0.0, 0.0);
    for seq in test.iter().filter(|s| s.label_crossing == 1) {
        let pred = model.forward(seq)?.trajectory;
        model_ade += ade(&pred, &seq.label_future)?;
        still_ade += ade(&standstill_trajectory(seq, seq.label_future.len())?, &seq.label_future)?;
        n += 1.0;
    }
    println!("crossing cases: model ADE {:.2} px, standstill ADE {:.2} px", model_ade / n, still_ade / n);
    Ok(())
}
