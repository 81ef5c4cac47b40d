//! Stacked LSTM over batched inputs.
//!
//! Per layer and time step:
//!
//! ```text
//! f = σ(x·W_f + h·U_f + b_f)      i = σ(x·W_i + h·U_i + b_i)
//! o = σ(x·W_o + h·U_o + b_o)      c̃ = tanh(x·W_c + h·U_c + b_c)
//! c' = f ⊙ c + i ⊙ c̃              h' = o ⊙ tanh(c')
//! ```
//!
//! The four gate matrices of a layer are stored side by side in one
//! `input x 4·hidden` matrix (and likewise `U`, `b`), columns ordered
//! `[f | i | o | c̃]`.

use crate::autodiff::{AutodiffError, ParamId, ParamStore, Tape, Tensor, Var};

use super::init::init_matrix;

#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug)]
pub struct LstmStack {
    pub layers: Vec<LstmLayer>,
    pub input_size: usize,
    pub hidden_size: usize,
}

/// Hidden and cell state of every layer.
#[derive(Clone, Debug)]
pub struct LstmState {
    pub h: Vec<Var>,
    pub c: Vec<Var>,
}

impl LstmState {
    pub fn top_hidden(&self) -> Var {
        *self.h.last().expect("at least one layer")
    }
}

/// Parameters of a stack bound onto one tape.
#[derive(Clone, Debug)]
pub struct BoundLstm {
    layers: Vec<(Var, Var, Var)>,
    hidden_size: usize,
}

pub(crate) struct InitSpec<'a> {
    pub seed: u64,
    pub scale: f64,
    /// Added to the forget-gate biases.
    pub forget_bias: f64,
    /// Keys for the rows of the first layer's input matrix.
    pub input_keys: &'a [String],
}

impl LstmStack {
    /// Registers a stack under `prefix` (`{prefix}.l{k}.w|u|b`).
    pub(crate) fn new(
        store: &mut ParamStore,
        prefix: &str,
        num_layers: usize,
        hidden_size: usize,
        init: &InitSpec<'_>,
    ) -> Self {
        let input_size = init.input_keys.len();
        let hidden_keys: Vec<String> = (0..hidden_size).map(|i| format!("h{i}")).collect();
        let layers = (0..num_layers)
            .map(|k| {
                let in_keys = if k == 0 { init.input_keys } else { hidden_keys.as_slice() };
                let mut add = |part: &str, keys: &[String]| {
                    let name = format!("{prefix}.l{k}.{part}");
                    let t = init_matrix(init.seed, &name, keys, 4 * hidden_size, init.scale);
                    store.add(name, t)
                };
                let layer = LstmLayer { w: add("w", in_keys), u: add("u", &hidden_keys), b: add("b", &["bias".to_string()]) };
                for v in &mut store.value_mut(layer.b).data_mut()[..hidden_size] {
                    *v += init.forget_bias;
                }
                layer
            })
            .collect();
        Self { layers, input_size, hidden_size }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Puts the parameters on `tape`; frozen ones receive no gradient.
    pub fn bind(&self, tape: &mut Tape, store: &ParamStore, trainable: bool) -> BoundLstm {
        let mut bind = |id| if trainable { tape.param(store, id) } else { tape.frozen_param(store, id) };
        BoundLstm {
            layers: self.layers.iter().map(|l| (bind(l.w), bind(l.u), bind(l.b))).collect(),
            hidden_size: self.hidden_size,
        }
    }
}

impl BoundLstm {
    pub fn zero_state(&self, tape: &mut Tape, batch: usize) -> LstmState {
        let mut zeros = || tape.constant(Tensor::zeros(batch, self.hidden_size));
        let n = self.layers.len();
        let h = (0..n).map(|_| zeros()).collect();
        let c = (0..n).map(|_| zeros()).collect();
        LstmState { h, c }
    }

    /// One time step through every layer.
    pub fn step(&self, tape: &mut Tape, x: Var, state: &LstmState) -> Result<LstmState, AutodiffError> {
        let mut input = x;
        let mut next = LstmState { h: Vec::with_capacity(self.layers.len()), c: Vec::with_capacity(self.layers.len()) };
        for (k, &(w, u, b)) in self.layers.iter().enumerate() {
            let (h, c) = lstm_cell(tape, (w, u, b), self.hidden_size, input, state.h[k], state.c[k])?;
            next.h.push(h);
            next.c.push(c);
            input = h;
        }
        Ok(next)
    }
}

/// Single-layer cell update; returns `(h_t, c_t)`.
pub fn lstm_cell(
    tape: &mut Tape,
    (w, u, b): (Var, Var, Var),
    hidden: usize,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var), AutodiffError> {
    let xw = tape.matmul(x, w)?;
    let hu = tape.matmul(h_prev, u)?;
    let z = tape.add(xw, hu)?;
    let z = tape.add_row(z, b)?;
    let zf = tape.slice_cols(z, 0, hidden)?;
    let zi = tape.slice_cols(z, hidden, 2 * hidden)?;
    let zo = tape.slice_cols(z, 2 * hidden, 3 * hidden)?;
    let zc = tape.slice_cols(z, 3 * hidden, 4 * hidden)?;
    let f = tape.sigmoid(zf)?;
    let i = tape.sigmoid(zi)?;
    let o = tape.sigmoid(zo)?;
    let c_tilde = tape.tanh(zc)?;
    let keep = tape.hadamard(f, c_prev)?;
    let write = tape.hadamard(i, c_tilde)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c)?;
    let h = tape.hadamard(o, tc)?;
    Ok((h, c))
}
