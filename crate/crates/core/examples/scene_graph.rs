//! Lays one synthetic scene out on the slot grid and prints what the
//! network sees: slot assignment, class vectors and normalized adjacency.
//!
//!     cargo run --example scene_graph -- [seed]

use crossing_intent::graph::{build_scene_graph, GraphOptions};
use crossing_intent::scene::{CLASS_DIM, LOCATION_DIM};
use crossing_intent::synth::{generate_scene, WorldConfig};

fn main() -> crossing_intent::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let seq = generate_scene(&WorldConfig::default(), seed)?;
    let g = build_scene_graph(&seq, GraphOptions { slots: Some(8), ablate_signals: false })?;
    println!("{} frames x {} slots, label crossing = {}", g.frames, g.slots, seq.label_crossing);

    let last = g.frames - 1;
    println!("\nlast frame");
    println!("slot  id  kind            signal          class               location");
    for n in 0..g.slots {
        let Some(j) = g.slot_objects[last * g.slots + n] else {
            println!("{n:>4}  (padding)");
            continue;
        };
        let o = &seq.frames[last].objects[j];
        let cell = last * g.slots + n;
        let class = &g.class.data()[cell * CLASS_DIM..(cell + 1) * CLASS_DIM];
        let loc = &g.location.data()[cell * LOCATION_DIM..(cell + 1) * LOCATION_DIM];
        println!(
            "{n:>4} {:>3}  {:<15} {:<15} {:?}  {:.3?}",
            o.id,
            format!("{:?}", o.kind),
            format!("{:?}", o.signal),
            class.iter().map(|&v| v as u8).collect::<Vec<_>>(),
            loc
        );
    }

    let n = g.slots;
    let adj = &g.adjacency.frames.data()[last * n * n..(last + 1) * n * n];
    println!("\nnormalized adjacency (complete graph with self-loops)");
    for row in adj.chunks(n) {
        println!("{}", row.iter().map(|v| format!("{v:6.3}")).collect::<Vec<_>>().join(" "));
    }
    Ok(())
}
