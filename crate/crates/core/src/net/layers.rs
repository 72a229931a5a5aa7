//! Building blocks of the network, each recorded on a [`Tape`].
//!
//! Node features travel as `[T, N, d]` tensors (frames, node slots, channels).

use crate::autodiff::{lstm_cell, LstmVars, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::AdjacencyStack;
use crate::scene::PATCH_SIDE;

#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub conv1_w: Var,
    pub conv1_b: Var,
    pub conv2_w: Var,
    pub conv2_b: Var,
    pub proj_w: Var,
    pub proj_b: Var,
}

/// One ST-Graph layer: feature convolution, spatial then temporal message passing.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub fc_w: Var,
    pub fc_b: Var,
    pub smp_w: Var,
    pub tmp_w: Var,
}

fn dims3(tape: &Tape, x: Var, op: &'static str) -> Result<(usize, usize, usize)> {
    match *tape.shape(x) {
        [t, n, d] => Ok((t, n, d)),
        ref s => Err(Error::shape(op, s, &[0, 0, 0])),
    }
}

/// Small CNN mapping a `32 x 32` grayscale patch to an appearance vector
/// `[1, appearance_dim]`: two (3x3 conv, ReLU, 2x2 mean pool) stages and a
/// linear projection.
pub fn appearance_encoder(tape: &mut Tape, enc: &EncoderVars, patch: Var) -> Result<Var> {
    let patch = match *tape.shape(patch) {
        [n] | [1, n] if n == PATCH_SIDE * PATCH_SIDE => tape.reshape(patch, &[1, PATCH_SIDE, PATCH_SIDE])?,
        [PATCH_SIDE, PATCH_SIDE] => tape.reshape(patch, &[1, PATCH_SIDE, PATCH_SIDE])?,
        [1, PATCH_SIDE, PATCH_SIDE] => patch,
        ref s => return Err(Error::shape("appearance_encoder", s, &[PATCH_SIDE, PATCH_SIDE])),
    };
    let x = tape.conv2d(patch, enc.conv1_w, enc.conv1_b)?;
    let x = tape.relu(x);
    let x = tape.mean_pool2(x)?;
    let x = tape.conv2d(x, enc.conv2_w, enc.conv2_b)?;
    let x = tape.relu(x);
    let x = tape.mean_pool2(x)?;
    let flat = tape.value(x).numel();
    let x = tape.reshape(x, &[1, flat])?;
    let y = tape.matmul(x, enc.proj_w)?;
    tape.add_bias(y, enc.proj_b, None)
}

/// Per-node linear map `d -> d'` plus bias on real slots, then ReLU.
pub fn feature_convolution(tape: &mut Tape, x: Var, w: Var, b: Var, mask: &[bool]) -> Result<Var> {
    let (t, n, d) = dims3(tape, x, "feature_convolution")?;
    let flat = tape.reshape(x, &[t * n, d])?;
    let y = tape.matmul(flat, w)?;
    let y = tape.add_bias(y, b, Some(mask))?;
    let y = tape.relu(y);
    let d_out = tape.shape(y)[1];
    tape.reshape(y, &[t, n, d_out])
}

/// `H'_t = ReLU((W_imp ⊙ Ã_t) H_t W)` for every frame `t`.
/// `importance = None` drops the elementwise importance product.
pub fn spatial_message_pass(
    tape: &mut Tape,
    x: Var,
    adj: &AdjacencyStack,
    importance: Option<Var>,
    w: Var,
) -> Result<Var> {
    let (t, n, d) = dims3(tape, x, "spatial_message_pass")?;
    if adj.num_frames() != t || adj.num_slots() != n {
        return Err(Error::shape("spatial_message_pass", tape.shape(x), adj.frames.shape()));
    }
    let flat = tape.reshape(x, &[t * n, d])?;
    let y = tape.matmul(flat, w)?;
    let d_out = tape.shape(y)[1];
    let y = tape.reshape(y, &[t, n, d_out])?;
    let y = tape.graph_propagate(&adj.frames, importance, y)?;
    Ok(tape.relu(y))
}

/// Causal temporal convolution per node (kernel `[k, d, d]`), then ReLU.
pub fn temporal_message_pass(tape: &mut Tape, x: Var, w: Var) -> Result<Var> {
    let y = tape.temporal_conv(x, w)?;
    Ok(tape.relu(y))
}

/// Feature convolution, spatial message passing and temporal message passing, in order.
pub fn st_graph_layer(
    tape: &mut Tape,
    x: Var,
    adj: &AdjacencyStack,
    importance: Option<Var>,
    layer: &LayerVars,
) -> Result<Var> {
    let mask = adj.flat_mask();
    let h = feature_convolution(tape, x, layer.fc_w, layer.fc_b, &mask)?;
    let h = spatial_message_pass(tape, h, adj, importance, layer.smp_w)?;
    temporal_message_pass(tape, h, layer.tmp_w)
}

/// Concatenates the target's row from both streams for every frame, giving
/// `[T, d1 + d2]`.
pub fn fuse_streams(tape: &mut Tape, h_ic: Var, h_lc: Var, mask: &[Vec<bool>], target_slot: usize) -> Result<Var> {
    let (t1, n1, d1) = dims3(tape, h_ic, "fuse_streams")?;
    let (t2, n2, d2) = dims3(tape, h_lc, "fuse_streams")?;
    if (t1, n1) != (t2, n2) {
        return Err(Error::shape("fuse_streams", tape.shape(h_ic), tape.shape(h_lc)));
    }
    if target_slot >= n1 {
        return Err(Error::Param(format!("target slot {target_slot} out of {n1} slots")));
    }
    if let Some(t) = (0..t1).find(|&t| !mask.get(t).is_some_and(|m| m[target_slot])) {
        return Err(Error::validation(format!("frames[{t}]"), "target node is masked"));
    }
    let rows: Vec<usize> = (0..t1).map(|t| t * n1 + target_slot).collect();
    let a = tape.reshape(h_ic, &[t1 * n1, d1])?;
    let b = tape.reshape(h_lc, &[t2 * n2, d2])?;
    let a = tape.select_rows(a, &rows)?;
    let b = tape.select_rows(b, &rows)?;
    tape.concat_cols(&[a, b])
}

/// Unrolls the LSTM over the rows of `fused: [T, d]` from a zero state and
/// returns every hidden state `[1, d_h]`; the last one is the sequence encoding.
pub fn temporal_encoder(tape: &mut Tape, fused: Var, lstm: LstmVars) -> Result<Vec<Var>> {
    let (t_len, _) = match *tape.shape(fused) {
        [t, d] if t >= 1 => (t, d),
        ref s => return Err(Error::shape("temporal_encoder", s, &[1, 0])),
    };
    let d_h = tape.shape(lstm.weight)[1] / 4;
    let mut h = tape.leaf(Tensor::zeros(&[1, d_h]));
    let mut c = tape.leaf(Tensor::zeros(&[1, d_h]));
    let mut hidden = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let x = tape.select_rows(fused, &[t])?;
        (h, c) = lstm_cell(tape, x, h, c, lstm)?;
        hidden.push(h);
    }
    Ok(hidden)
}

/// `σ(w·h + b)` as a `[1, 1]` probability.
pub fn predict_intention(tape: &mut Tape, h: Var, w: Var, b: Var) -> Result<Var> {
    let z = tape.matmul(h, w)?;
    let z = tape.add_bias(z, b, None)?;
    Ok(tape.sigmoid(z))
}

/// `W_o h` reshaped to `[horizon, 2]` offsets.
pub fn predict_trajectory(tape: &mut Tape, h: Var, w: Var) -> Result<Var> {
    let y = tape.matmul(h, w)?;
    let n = tape.value(y).numel();
    if !n.is_multiple_of(2) {
        return Err(Error::shape("predict_trajectory", tape.shape(w), &[0, 2]));
    }
    tape.reshape(y, &[n / 2, 2])
}
