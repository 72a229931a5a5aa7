//! The command-line workflow driven in-process: generate a dataset, train,
//! evaluate and predict, all inside a temporary directory.
//!
//!     cargo run --release --example pipeline

use crossing_intent::cli::run_from;
use crossing_intent::dataio::load_manifest;
use crossing_intent::trainer::TrainConfig;

fn main() -> crossing_intent::Result<()> {
    let dir = tempfile::tempdir().expect("temporary directory");
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let mut stdout = std::io::stdout();
    let mut run = |args: &[&str]| {
        println!("\n$ crossing-intent {}", args.join(" "));
        run_from(std::iter::once("crossing-intent").chain(args.iter().copied()), &mut stdout)
    };

    run(&["gen-data", "--out", &p("data"), "--num", "300", "--seed", "1"])?;
    // The short schedule as a config file; flags still override its fields.
    let schedule = serde_json::to_string_pretty(&TrainConfig::short_schedule()).expect("serializable");
    std::fs::write(p("schedule.json"), schedule).expect("writable temp dir");
    run(&["train", "--data", &p("data"), "--config", &p("schedule.json"), "--epochs", "10", "--out", &p("model.json")])?;
    run(&["eval", "--checkpoint", &p("model.json"), "--data", &p("data"), "--report", &p("report.csv")])?;

    let scene = load_manifest(&dir.path().join("data"))?.test[0].clone();
    run(&["predict", "--checkpoint", &p("model.json"), "--scene", &p(&format!("data/{scene}"))])?;
    Ok(())
}
