use super::{Tape, Var};
use crate::error::{Error, Result};

/// Tape handles for one LSTM cell.
///
/// `weight` is `[d_in + d_h, 4 * d_h]` acting on the row vector `[x ; h_prev]`;
/// `bias` is `[4 * d_h]`. Gate blocks along the output axis are ordered
/// input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub weight: Var,
    pub bias: Var,
}

/// One step of a standard LSTM cell:
///
/// ```text
/// i, f, o = sigmoid(W_{i,f,o} [x ; h] + b_{i,f,o})
/// g       = tanh(W_g [x ; h] + b_g)
/// c'      = f * c + i * g
/// h'      = o * tanh(c')
/// ```
///
/// `x`, `h_prev` and `c_prev` may be given as `[d]` or `[1, d]`; the returned
/// state is `[1, d_h]`.
pub fn lstm_cell(tape: &mut Tape, x: Var, h_prev: Var, c_prev: Var, params: LstmVars) -> Result<(Var, Var)> {
    let w_shape = tape.shape(params.weight).to_vec();
    let (rows, cols) = match w_shape[..] {
        [r, c] if c % 4 == 0 => (r, c),
        _ => return Err(Error::shape("lstm_cell weight", &w_shape, &[0, 0])),
    };
    let d_h = cols / 4;
    let d_in = tape.value(x).numel();
    if rows != d_in + d_h || tape.value(h_prev).numel() != d_h || tape.value(c_prev).numel() != d_h {
        return Err(Error::shape(
            "lstm_cell",
            &[d_in, tape.value(h_prev).numel(), tape.value(c_prev).numel()],
            &w_shape,
        ));
    }
    if tape.value(params.bias).numel() != cols {
        return Err(Error::shape("lstm_cell bias", &w_shape, tape.shape(params.bias)));
    }
    let x = tape.reshape(x, &[1, d_in])?;
    let h_prev = tape.reshape(h_prev, &[1, d_h])?;
    let c_prev = tape.reshape(c_prev, &[1, d_h])?;

    let xh = tape.concat_cols(&[x, h_prev])?;
    let z = tape.matmul(xh, params.weight)?;
    let z = tape.add_bias(z, params.bias, None)?;
    let zi = tape.slice_cols(z, 0, d_h)?;
    let zf = tape.slice_cols(z, d_h, d_h)?;
    let zg = tape.slice_cols(z, 2 * d_h, d_h)?;
    let zo = tape.slice_cols(z, 3 * d_h, d_h)?;
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let g = tape.tanh(zg);
    let o = tape.sigmoid(zo);

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}
