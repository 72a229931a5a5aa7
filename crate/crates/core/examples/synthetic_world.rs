//! Generates a labelled synthetic dataset and summarizes it. With an output
//! directory the scenes and a split manifest are written there too.
//!
//!     cargo run --example synthetic_world -- [num] [noise] [out_dir]

use std::path::Path;

use crossing_intent::dataio::write_dataset;
use crossing_intent::scene::SignalState;
use crossing_intent::synth::{final_signal, generate_dataset, SignalFsm, WorldConfig};

fn main() -> crossing_intent::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let num = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let world = WorldConfig {
        noise: args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.05),
        ..WorldConfig::default()
    };
    world.validate()?;

    let [g, y, r] = world.signal_durations;
    let fsm = SignalFsm { green: g, yellow: y, red: r, offset: 0 };
    let strip: String = (0..fsm.cycle() as u64)
        .step_by(5)
        .map(|t| match fsm.state(t) {
            SignalState::Green => 'G',
            SignalState::Yellow => 'Y',
            _ => 'R',
        })
        .collect();
    println!("one light cycle, every 5th frame: {strip}");

    let data = generate_dataset(&world, num, 0)?;
    let positives = data.iter().filter(|s| s.label_crossing == 1).count();
    let red = data.iter().filter(|s| final_signal(s) == Some(SignalState::Red)).count();
    let flipped = data
        .iter()
        .filter(|s| (s.label_crossing == 1) != (final_signal(s) == Some(SignalState::Red)))
        .count();
    let objects: usize = data.iter().flat_map(|s| &s.frames).map(|f| f.objects.len()).sum();
    let frames: usize = data.iter().map(|s| s.len()).sum();
    println!("{num} scenes, {} frames each, {:.2} objects per frame", world.frames, objects as f64 / frames as f64);
    println!("red at the last frame: {red}; labelled crossing: {positives}; flipped labels: {flipped}");

    let s = &data[0];
    println!("\nscene 0 target centers:");
    for (t, f) in s.frames.iter().enumerate() {
        let o = f.objects.iter().find(|o| o.id == s.target_id).unwrap();
        let [x, y] = o.bbox.center();
        println!("  t={t:>2}  ({x:7.2}, {y:7.2})  height {:.2}", o.bbox.height());
    }

    if let Some(dir) = args.get(3) {
        let m = write_dataset(Path::new(dir), &data, 0, Some(&world))?;
        println!("\nwrote {dir}: train {}, val {}, test {}", m.train.len(), m.val.len(), m.test.len());
    }
    Ok(())
}
