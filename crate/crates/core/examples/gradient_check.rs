//! Records a small logistic model on a tape, runs the reverse sweep and
//! compares every gradient with central differences.
//!
//!     cargo run --example gradient_check

use crossing_intent::autodiff::gradcheck::{check_gradients, GradCheckOptions};
use crossing_intent::autodiff::{lstm_cell, LstmVars, Tape, Tensor};

fn main() -> crossing_intent::Result<()> {
    let x = Tensor::matrix(&[&[0.5, -1.0, 2.0], &[1.5, 0.25, -0.75]]);
    let w = Tensor::matrix(&[&[0.1], &[-0.2], &[0.3]]);

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let wv = tape.leaf(w.clone());
    let logits = tape.matmul(xv, wv)?;
    let p = tape.sigmoid(logits);
    let loss = tape.sum_squares(p);
    let grads = tape.backward(loss)?;
    println!("loss {:.6}", tape.value(loss).item());
    println!("d loss / d w = {:?}", grads.wrt(&tape, wv).data());

    // The same function through the generic checker.
    let report = check_gradients(
        &[x, w],
        |t, v| {
            let z = t.matmul(v[0], v[1])?;
            let s = t.sigmoid(z);
            Ok(t.sum_squares(s))
        },
        &GradCheckOptions::default(),
    )?;
    println!("logistic: {} coordinates, max relative error {:.2e}", report.checked, report.max_rel_err);

    // One LSTM step: input 3, hidden 2, gates packed as [i | f | g | o].
    let inputs = vec![
        Tensor::matrix(&[&[0.3, -0.1, 0.8]]),
        Tensor::matrix(&[&[0.05, -0.2]]),
        Tensor::matrix(&[&[0.4, 0.1]]),
        Tensor::new(vec![5, 8], (0..40).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect())?,
        Tensor::new(vec![8], vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0])?,
    ];
    let report = check_gradients(
        &inputs,
        |t, v| {
            let (h, c) = lstm_cell(t, v[0], v[1], v[2], LstmVars { weight: v[3], bias: v[4] })?;
            let hc = t.concat_cols(&[h, c])?;
            Ok(t.sum_squares(hc))
        },
        &GradCheckOptions::default(),
    )?;
    println!("lstm cell: {} coordinates, max relative error {:.2e}", report.checked, report.max_rel_err);
    Ok(())
}
