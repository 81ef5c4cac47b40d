//! Generator (encoder/decoder LSTM with output heads), discriminator
//! (LSTM + scoring head) and the adversarial losses.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::autodiff::{tensor::argmax, ParamId, ParamStore, Tape, Tensor, Var};
use crate::encoding::EncodingSchema;

use super::gumbel::gumbel_softmax_rows;
use super::init::{index_keys, init_matrix};
use super::lstm::{BoundLstm, InitSpec, LstmStack, LstmState};
use super::GanError;

/// Scores are clamped into `[SCORE_EPS, 1 − SCORE_EPS]` before taking logs.
pub const SCORE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub init_scale: f64,
    pub forget_bias: f64,
}

/// Vector layout facts the networks depend on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dims {
    pub num_activities: usize,
    pub attr_offset: usize,
    pub attr_width: usize,
    pub vector_width: usize,
}

impl Dims {
    pub fn of(schema: &EncodingSchema) -> Self {
        Self {
            num_activities: schema.activity_width(),
            attr_offset: schema.attribute_offset(),
            attr_width: schema.attribute_width(),
            vector_width: schema.vector_width,
        }
    }

    pub fn eos_index(&self) -> usize {
        self.vector_width - 1
    }

    pub fn elapsed_index(&self) -> usize {
        self.vector_width - 2
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    fn new(store: &mut ParamStore, name: &str, in_keys: &[String], out: usize, seed: u64, scale: f64) -> Self {
        let wn = format!("{name}.w");
        let bn = format!("{name}.b");
        let w = store.add(wn.clone(), init_matrix(seed, &wn, in_keys, out, scale));
        let b = store.add(bn.clone(), init_matrix(seed, &bn, &["bias".to_string()], out, scale));
        Self { w, b }
    }

    fn bind(&self, tape: &mut Tape, store: &ParamStore, trainable: bool) -> (Var, Var) {
        if trainable {
            (tape.param(store, self.w), tape.param(store, self.b))
        } else {
            (tape.frozen_param(store, self.w), tape.frozen_param(store, self.b))
        }
    }
}

fn apply_linear(tape: &mut Tape, (w, b): (Var, Var), x: Var) -> Result<Var, GanError> {
    let xw = tape.matmul(x, w)?;
    Ok(tape.add_row(xw, b)?)
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub params: ParamStore,
    pub encoder: LstmStack,
    pub decoder: LstmStack,
    /// hidden → activities + 1; the last class is EOS.
    pub head_activity: Linear,
    /// hidden → 1, squashed by a sigmoid: normalized elapsed time.
    pub head_elapsed: Linear,
    pub dims: Dims,
}

impl Generator {
    pub fn new(schema: &EncodingSchema, arch: Architecture, seed: u64) -> Self {
        let dims = Dims::of(schema);
        let features = schema.feature_names();
        let hidden_keys = index_keys("h", arch.hidden_size);
        let mut params = ParamStore::new();
        let spec = InitSpec { seed, scale: arch.init_scale, forget_bias: arch.forget_bias, input_keys: &features };
        let encoder = LstmStack::new(&mut params, "gen.enc", arch.num_layers, arch.hidden_size, &spec);
        let decoder = LstmStack::new(&mut params, "gen.dec", arch.num_layers, arch.hidden_size, &spec);
        let head_activity =
            Linear::new(&mut params, "gen.head_act", &hidden_keys, dims.num_activities + 1, seed, arch.init_scale);
        let head_elapsed = Linear::new(&mut params, "gen.head_time", &hidden_keys, 1, seed, arch.init_scale);
        Self { params, encoder, decoder, head_activity, head_elapsed, dims }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundGenerator {
        BoundGenerator {
            enc: self.encoder.bind(tape, &self.params, trainable),
            dec: self.decoder.bind(tape, &self.params, trainable),
            act: self.head_activity.bind(tape, &self.params, trainable),
            time: self.head_elapsed.bind(tape, &self.params, trainable),
            dims: self.dims,
        }
    }

    /// Greedy decoding for a batch of equally long prefixes. Returns, per
    /// row, the emitted activity indices and normalized elapsed values up
    /// to (not including) EOS.
    pub fn generate(&self, prefixes: &[&[Vec<f64>]], max_len: usize) -> Result<Vec<GeneratedSuffix>, GanError> {
        let Some(first) = prefixes.first() else { return Ok(Vec::new()) };
        let len = first.len();
        if len == 0 {
            return Err(GanError::EmptyPrefix);
        }
        assert!(prefixes.iter().all(|p| p.len() == len), "prefixes in a batch must share a length");
        let steps: Vec<Tensor> = (0..len)
            .map(|t| Tensor::from_rows(&prefixes.iter().map(|p| p[t].as_slice()).collect::<Vec<_>>()))
            .collect::<Result<_, _>>()?;
        let mut tape = Tape::new();
        let g = self.bind(&mut tape, false);
        let state = g.encode_prefix(&mut tape, &steps)?;
        let decoded = g.decode_suffix(&mut tape, state, &steps[len - 1], DecodeMode::Infer { max_len })?;

        let d = self.dims;
        let mut out = vec![GeneratedSuffix::default(); prefixes.len()];
        let mut done = vec![false; prefixes.len()];
        for e in &decoded.emissions {
            let v = tape.value(*e);
            for (r, row_out) in out.iter_mut().enumerate() {
                if done[r] {
                    continue;
                }
                let row = v.row(r);
                if row[d.eos_index()] >= 0.5 {
                    done[r] = true;
                    continue;
                }
                row_out.activities.push(argmax(&row[..d.num_activities]));
                row_out.elapsed.push(row[d.elapsed_index()]);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeneratedSuffix {
    pub activities: Vec<usize>,
    pub elapsed: Vec<f64>,
}

pub enum DecodeMode<'a> {
    /// Relaxed sampling; with probability `teacher_forcing_prob` per step the
    /// next decoder input is the real suffix vector instead of the emission.
    /// Decodes exactly `real_suffix.len()` steps.
    Train {
        real_suffix: &'a [Tensor],
        teacher_forcing_prob: f64,
        tau: f64,
        /// Emit the hard one-hot sample while differentiating through the
        /// relaxed one.
        straight_through: bool,
        rng: &'a mut dyn RngCore,
    },
    /// Hard argmax emissions; stops once every row has emitted EOS or after
    /// `max_len` steps.
    Infer { max_len: usize },
}

#[derive(Debug)]
pub struct Decoded {
    /// One `batch x vector_width` emission per step.
    pub emissions: Vec<Var>,
    /// The decoder input fed at each step.
    pub inputs: Vec<Var>,
}

pub struct BoundGenerator {
    enc: BoundLstm,
    dec: BoundLstm,
    act: (Var, Var),
    time: (Var, Var),
    dims: Dims,
}

impl BoundGenerator {
    /// Runs the encoder over the prefix and returns its final state.
    pub fn encode_prefix(&self, tape: &mut Tape, prefix: &[Tensor]) -> Result<LstmState, GanError> {
        let first = prefix.first().ok_or(GanError::EmptyPrefix)?;
        let mut state = self.enc.zero_state(tape, first.rows());
        for x in prefix {
            let x = tape.constant(x.clone());
            state = self.enc.step(tape, x, &state)?;
        }
        Ok(state)
    }

    /// Runs the decoder from the encoder state. `first_input` (normally the
    /// last prefix vector) is the first decoder input and the source of the
    /// object attribute block, which is carried into every emission.
    pub fn decode_suffix(
        &self,
        tape: &mut Tape,
        mut state: LstmState,
        first_input: &Tensor,
        mode: DecodeMode<'_>,
    ) -> Result<Decoded, GanError> {
        let d = self.dims;
        let batch = first_input.rows();
        let attrs = {
            let mut data = Vec::with_capacity(batch * d.attr_width);
            for r in 0..batch {
                data.extend_from_slice(&first_input.row(r)[d.attr_offset..d.attr_offset + d.attr_width]);
            }
            Tensor::new(batch, d.attr_width, data)?
        };
        let mut input = tape.constant(first_input.clone());
        let mut out = Decoded { emissions: Vec::new(), inputs: Vec::new() };

        match mode {
            DecodeMode::Train { real_suffix, teacher_forcing_prob, tau, straight_through, rng } => {
                let attrs = tape.constant(attrs);
                let ones = tape.constant(Tensor::filled(1, d.attr_width, 1.0));
                for real in real_suffix {
                    out.inputs.push(input);
                    state = self.dec.step(tape, input, &state)?;
                    let h = state.top_hidden();
                    let logits = apply_linear(tape, self.act, h)?;
                    let mut y = gumbel_softmax_rows(tape, logits, tau, rng)?;
                    if straight_through {
                        let soft = tape.value(y);
                        let mut shift = Tensor::zeros(soft.rows(), soft.cols());
                        for r in 0..soft.rows() {
                            let k = soft.argmax_row(r);
                            for c in 0..soft.cols() {
                                shift.set(r, c, f64::from(u8::from(c == k)) - soft.get(r, c));
                            }
                        }
                        let shift = tape.constant(shift);
                        y = tape.add(y, shift)?;
                    }
                    let act = tape.slice_cols(y, 0, d.num_activities)?;
                    let eos = tape.slice_cols(y, d.num_activities, d.num_activities + 1)?;
                    let t = apply_linear(tape, self.time, h)?;
                    let elapsed = tape.sigmoid(t)?;
                    let neg = tape.scale(eos, -1.0)?;
                    let keep = tape.add_scalar(neg, 1.0)?;
                    let elapsed = tape.hadamard(elapsed, keep)?;
                    let emission = if d.attr_width > 0 {
                        let mask = tape.matmul(keep, ones)?;
                        let attrs = tape.hadamard(attrs, mask)?;
                        tape.concat_cols(&[act, attrs, elapsed, eos])?
                    } else {
                        tape.concat_cols(&[act, elapsed, eos])?
                    };
                    out.emissions.push(emission);
                    let force = rng_unit(rng) < teacher_forcing_prob;
                    input = if force { tape.constant(real.clone()) } else { emission };
                }
            }
            DecodeMode::Infer { max_len } => {
                let mut finished = vec![false; batch];
                for _ in 0..max_len {
                    out.inputs.push(input);
                    state = self.dec.step(tape, input, &state)?;
                    let h = state.top_hidden();
                    let logits = apply_linear(tape, self.act, h)?;
                    let t = apply_linear(tape, self.time, h)?;
                    let elapsed = tape.sigmoid(t)?;
                    let (lv, ev) = (tape.value(logits), tape.value(elapsed));
                    let mut em = Tensor::zeros(batch, d.vector_width);
                    for r in 0..batch {
                        let k = lv.argmax_row(r);
                        if k == d.num_activities {
                            em.set(r, d.eos_index(), 1.0);
                            finished[r] = true;
                            continue;
                        }
                        em.set(r, k, 1.0);
                        for c in 0..d.attr_width {
                            em.set(r, d.attr_offset + c, attrs.get(r, c));
                        }
                        em.set(r, d.elapsed_index(), ev.get(r, 0));
                    }
                    let emission = tape.constant(em);
                    out.emissions.push(emission);
                    input = emission;
                    if finished.iter().all(|&f| f) {
                        break;
                    }
                }
            }
        }
        Ok(out)
    }
}

fn rng_unit(rng: &mut dyn RngCore) -> f64 {
    // 53 random bits → [0, 1)
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    pub params: ParamStore,
    pub lstm: LstmStack,
    pub head: Linear,
    pub dims: Dims,
}

pub struct BoundDiscriminator {
    lstm: BoundLstm,
    head: (Var, Var),
}

impl Discriminator {
    pub fn new(schema: &EncodingSchema, arch: Architecture, seed: u64) -> Self {
        let dims = Dims::of(schema);
        let features = schema.feature_names();
        let mut params = ParamStore::new();
        let spec = InitSpec { seed, scale: arch.init_scale, forget_bias: arch.forget_bias, input_keys: &features };
        let lstm = LstmStack::new(&mut params, "disc", arch.num_layers, arch.hidden_size, &spec);
        let head = Linear::new(&mut params, "disc.head", &index_keys("h", arch.hidden_size), 1, seed, arch.init_scale);
        Self { params, lstm, head, dims }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundDiscriminator {
        BoundDiscriminator {
            lstm: self.lstm.bind(tape, &self.params, trainable),
            head: self.head.bind(tape, &self.params, trainable),
        }
    }

    /// Probability that `suffix` is a real continuation of `prefix`. Vectors
    /// after the first EOS vector are ignored.
    pub fn score(&self, prefix: &[Vec<f64>], suffix: &[Vec<f64>]) -> Result<f64, GanError> {
        let eos = self.dims.eos_index();
        let cut = suffix.iter().position(|v| v[eos] == 1.0).map_or(suffix.len(), |i| i + 1);
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let steps: Vec<Var> =
            prefix.iter().chain(&suffix[..cut]).map(|v| tape.constant(Tensor::row_vector(v.clone()))).collect();
        let (_, p) = bound.score(&mut tape, &steps)?;
        Ok(tape.value(p).item())
    }
}

impl BoundDiscriminator {
    /// Runs over `steps` (prefix followed by suffix, each `batch x width`)
    /// and returns `(logit, sigmoid(logit))`, both `batch x 1`.
    pub fn score(&self, tape: &mut Tape, steps: &[Var]) -> Result<(Var, Var), GanError> {
        let first = *steps.first().ok_or(GanError::EmptySuffix)?;
        let mut state = self.lstm.zero_state(tape, tape.value(first).rows());
        for &x in steps {
            state = self.lstm.step(tape, x, &state)?;
        }
        let logit = apply_linear(tape, self.head, state.top_hidden())?;
        let p = tape.sigmoid(logit)?;
        Ok((logit, p))
    }
}

/// `mean(−log D(real) − log(1 − D(fake)))`.
pub fn discriminator_loss(tape: &mut Tape, d_real: Var, d_fake: Var) -> Result<Var, GanError> {
    let real = tape.clamp(d_real, SCORE_EPS, 1.0 - SCORE_EPS)?;
    let fake = tape.clamp(d_fake, SCORE_EPS, 1.0 - SCORE_EPS)?;
    let log_real = tape.log(real)?;
    let neg_fake = tape.scale(fake, -1.0)?;
    let one_minus_fake = tape.add_scalar(neg_fake, 1.0)?;
    let log_one_minus_fake = tape.log(one_minus_fake)?;
    let total = tape.add(log_real, log_one_minus_fake)?;
    let mean = tape.mean(total)?;
    Ok(tape.scale(mean, -1.0)?)
}

/// `mean(−log(D(fake) / (1 − D(fake))))`.
pub fn generator_loss(tape: &mut Tape, d_fake: Var) -> Result<Var, GanError> {
    let fake = tape.clamp(d_fake, SCORE_EPS, 1.0 - SCORE_EPS)?;
    let log_fake = tape.log(fake)?;
    let neg_fake = tape.scale(fake, -1.0)?;
    let one_minus_fake = tape.add_scalar(neg_fake, 1.0)?;
    let log_one_minus_fake = tape.log(one_minus_fake)?;
    let ratio = tape.sub(log_fake, log_one_minus_fake)?;
    let mean = tape.mean(ratio)?;
    Ok(tape.scale(mean, -1.0)?)
}

/// Both losses for single scores: `(L_D, L_G)`.
pub fn losses(d_real: f64, d_fake: f64) -> (f64, f64) {
    let r = d_real.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
    let f = d_fake.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
    (-r.ln() - (1.0 - f).ln(), -(f / (1.0 - f)).ln())
}
