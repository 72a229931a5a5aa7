//! Classification and displacement metrics on hand-made inputs.
//!
//!     cargo run --example evaluation_metrics

use crossing_intent::metrics::{ade, f1_score, fde, Confusion, MetricsReport};

fn main() -> crossing_intent::Result<()> {
    let preds = [true, true, false, true, false, false, true, false];
    let labels = [true, false, false, true, true, false, true, false];
    let c = Confusion::from_predictions(&preds, &labels)?;
    println!("tp {} fp {} fn {} tn {}", c.tp, c.fp, c.fn_, c.tn);
    println!(
        "accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4}",
        c.accuracy(),
        c.precision(),
        c.recall(),
        c.f1()
    );
    println!("f1 from precision 0.8650 and recall 0.8803: {:.4}", f1_score(0.8650, 0.8803));

    // A prediction that runs 3 px right and 4 px low at every step.
    let truth: Vec<[f64; 2]> = (0..5).map(|k| [100.0 + 6.0 * k as f64, 200.0]).collect();
    let pred: Vec<[f64; 2]> = truth.iter().map(|p| [p[0] + 3.0, p[1] + 4.0]).collect();
    println!("constant offset: ADE {} FDE {}", ade(&pred, &truth)?, fde(&pred, &truth)?);

    // Drifting prediction: the error grows, so FDE exceeds ADE.
    let drift: Vec<[f64; 2]> = truth.iter().enumerate().map(|(k, p)| [p[0] + k as f64, p[1]]).collect();
    println!("drifting: ADE {} FDE {}", ade(&drift, &truth)?, fde(&drift, &truth)?);

    // One trajectory per sequence; ADE and FDE average over sequences.
    let pred_traj = vec![pred; preds.len()];
    let true_traj = vec![truth; preds.len()];
    let report = MetricsReport::from_predictions("demo", &preds, &labels, &pred_traj, &true_traj)?;
    println!("\n{}\n{}", MetricsReport::CSV_HEADER, report.csv_row());
    Ok(())
}
