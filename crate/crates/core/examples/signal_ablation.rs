//! Trains the same network twice, once with traffic-light states zeroed,
//! and prints both reports as CSV. In the synthetic world the label depends
//! on the light, so the ablated model should sit near chance.
//!
//!     cargo run --release --example signal_ablation -- [train] [epochs]

use crossing_intent::metrics::MetricsReport;
use crossing_intent::net::ModelConfig;
use crossing_intent::synth::{generate_dataset, WorldConfig};
use crossing_intent::trainer::{evaluate, train, TrainConfig};

fn main() -> crossing_intent::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let world = WorldConfig::default();
    let train_set = generate_dataset(&world, args.first().copied().unwrap_or(600), 1)?;
    let test_set = generate_dataset(&world, 300, 2)?;
    let cfg = TrainConfig {
        epochs: args.get(1).copied().unwrap_or(15),
        ..TrainConfig::short_schedule()
    };

    println!("{}", MetricsReport::CSV_HEADER);
    for (name, ablate_signals) in [("full", false), ("ablated", true)] {
        let model_cfg = ModelConfig {
            ablate_signals,
            ..ModelConfig::default()
        };
        let ckpt = train(&train_set, &[], &model_cfg, &cfg)?;
        println!("{}", evaluate(&ckpt.model()?, &test_set, name)?.csv_row());
    }
    Ok(())
}
