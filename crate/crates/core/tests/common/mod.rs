#![allow(dead_code)]

pub mod edit_search;

use ocelgan::autodiff::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-5;
/// Relative errors are taken against `max(|analytic|, |numeric|, FLOOR)` so
/// that components which are zero up to rounding do not divide by zero.
pub const FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Largest relative error between the tape gradient of `f` with respect to
/// every entry of `inputs` and central finite differences.
pub fn max_rel_error(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();

    let eval = |inputs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        tape.value(loss).item()
    };
    let mut worst: f64 = 0.0;
    for k in 0..inputs.len() {
        for i in 0..inputs[k].data().len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_EPS;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_EPS;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_EPS);
            let analytic = grads.wrt(vars[k]).map_or(0.0, |g| g.data()[i]);
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    worst
}

/// Reduces any tensor to a scalar through fixed random weights, so every
/// output entry contributes to the loss with a distinct coefficient.
pub fn weighted_sum(tape: &mut Tape, x: Var, weights: &Tensor) -> Var {
    let w = tape.constant(weights.clone());
    let p = tape.hadamard(x, w).unwrap();
    tape.sum(p).unwrap()
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

/// One scenario per differentiable op, with random shapes and inputs drawn
/// from `seed`. Inputs stay away from kinks (relu at 0, clamp bounds).
pub fn op_scenarios(seed: u64) -> Vec<(&'static str, Vec<Tensor>, Build)> {
    let mut r = rng(seed);
    let (m, k, n) = (r.random_range(1..4), r.random_range(1..4), r.random_range(1..4));
    let w_mn = random_tensor(&mut r, m, n, -1.0, 1.0);
    let w_mk = random_tensor(&mut r, m, k, -1.0, 1.0);
    let w_m1 = random_tensor(&mut r, m, 1, -1.0, 1.0);
    let w_m2n = random_tensor(&mut r, m, 2 * n, -1.0, 1.0);
    let w_2mn = random_tensor(&mut r, 2 * m, n, -1.0, 1.0);
    let a = random_tensor(&mut r, m, k, -1.0, 1.0);
    let b = random_tensor(&mut r, k, n, -1.0, 1.0);
    let c = random_tensor(&mut r, m, n, -1.0, 1.0);
    let d = random_tensor(&mut r, m, n, -1.0, 1.0);
    let row = random_tensor(&mut r, 1, n, -1.0, 1.0);
    let pos = random_tensor(&mut r, m, n, 0.2, 2.0);
    // magnitudes in [0.1, 1] with random signs
    let away = Tensor::new(
        m,
        n,
        (0..m * n)
            .map(|_| r.random_range(0.1..1.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect(),
    )
    .unwrap();
    let s = r.random_range(-2.0..2.0);

    macro_rules! sc {
        ($name:expr, [$($t:expr),*], $w:expr, |$tape:ident, $v:ident| $body:expr) => {{
            let w = $w.clone();
            let f: Build = Box::new(move |$tape: &mut Tape, $v: &[Var]| {
                let out = $body;
                weighted_sum($tape, out, &w)
            });
            ($name, vec![$($t.clone()),*], f)
        }};
    }

    let s_ = s;
    vec![
        sc!("matmul", [a, b], w_mn, |t, v| t.matmul(v[0], v[1]).unwrap()),
        sc!("add", [c, d], w_mn, |t, v| t.add(v[0], v[1]).unwrap()),
        sc!("sub", [c, d], w_mn, |t, v| t.sub(v[0], v[1]).unwrap()),
        sc!("add_row", [c, row], w_mn, |t, v| t.add_row(v[0], v[1]).unwrap()),
        sc!("hadamard", [c, d], w_mn, |t, v| t.hadamard(v[0], v[1]).unwrap()),
        sc!("scale", [c], w_mn, |t, v| t.scale(v[0], s_).unwrap()),
        sc!("add_scalar", [c], w_mn, |t, v| t.add_scalar(v[0], s_).unwrap()),
        sc!("sigmoid", [c], w_mn, |t, v| t.sigmoid(v[0]).unwrap()),
        sc!("tanh", [c], w_mn, |t, v| t.tanh(v[0]).unwrap()),
        sc!("relu", [away], w_mn, |t, v| t.relu(v[0]).unwrap()),
        sc!("exp", [c], w_mn, |t, v| t.exp(v[0]).unwrap()),
        sc!("log", [pos], w_mn, |t, v| t.log(v[0]).unwrap()),
        sc!("softmax_rows", [c], w_mn, |t, v| t.softmax_rows(v[0]).unwrap()),
        sc!("concat_cols", [c, d], w_m2n, |t, v| t.concat_cols(&[v[0], v[1]]).unwrap()),
        sc!("slice_cols", [a], w_m1, |t, v| {
            let k = t.value(v[0]).cols();
            t.slice_cols(v[0], k - 1, k).unwrap()
        }),
        sc!("slice_cols_prefix", [a], w_mk, |t, v| {
            let k = t.value(v[0]).cols();
            t.slice_cols(v[0], 0, k).unwrap()
        }),
        sc!("concat_rows", [c, d], w_2mn, |t, v| t.concat_rows(&[v[0], v[1]]).unwrap()),
        sc!("slice_rows", [c, d], w_mn, |t, v| {
            let both = t.concat_rows(&[v[0], v[1]]).unwrap();
            let m = t.value(v[0]).rows();
            t.slice_rows(both, m, 2 * m).unwrap()
        }),
        sc!("sum", [c], Tensor::scalar(1.3), |t, v| t.sum(v[0]).unwrap()),
        sc!("mean", [c], Tensor::scalar(-0.7), |t, v| t.mean(v[0]).unwrap()),
        sc!("clamp", [c], w_mn, |t, v| {
            // bounds chosen so every entry is either well inside or well outside
            let x = t.scale(v[0], 1.0).unwrap();
            t.clamp(x, -1.5, 1.5).unwrap()
        }),
        sc!("clamp_active", [away], w_mn, |t, v| t.clamp(v[0], -0.05, 0.05).unwrap()),
    ]
}

/// Five chained LSTM cell updates on a batch of two.
pub fn lstm_scenario(seed: u64) -> (Vec<Tensor>, Build) {
    let mut r = rng(seed);
    let input = r.random_range(1..4);
    let hidden = r.random_range(1..4);
    let steps = 5;
    let batch = 2;
    let inputs = vec![
        random_tensor(&mut r, input, 4 * hidden, -0.8, 0.8),
        random_tensor(&mut r, hidden, 4 * hidden, -0.8, 0.8),
        random_tensor(&mut r, 1, 4 * hidden, -0.5, 0.5),
        random_tensor(&mut r, steps * batch, input, -1.0, 1.0),
        random_tensor(&mut r, batch, hidden, -0.5, 0.5),
        random_tensor(&mut r, batch, hidden, -0.5, 0.5),
    ];
    let wh = random_tensor(&mut r, batch, hidden, -1.0, 1.0);
    let wc = random_tensor(&mut r, batch, hidden, -1.0, 1.0);
    let f: Build = Box::new(move |t: &mut Tape, v: &[Var]| {
        let (mut h, mut c) = (v[4], v[5]);
        for s in 0..steps {
            let x = t.slice_rows(v[3], s * batch, (s + 1) * batch).unwrap();
            (h, c) = ocelgan::gan::lstm_cell(t, (v[0], v[1], v[2]), hidden, x, h, c).unwrap();
        }
        let lh = weighted_sum(t, h, &wh);
        let lc = weighted_sum(t, c, &wc);
        t.add(lh, lc).unwrap()
    });
    (inputs, f)
}

/// Both adversarial losses on scores produced by a sigmoid, so the scores
/// are valid probabilities for any input.
pub fn loss_scenarios(seed: u64) -> Vec<(&'static str, Vec<Tensor>, Build)> {
    let mut r = rng(seed);
    let batch = r.random_range(1..5);
    let real = random_tensor(&mut r, batch, 1, -3.0, 3.0);
    let fake = random_tensor(&mut r, batch, 1, -3.0, 3.0);
    let d: Build = Box::new(|t: &mut Tape, v: &[Var]| {
        let pr = t.sigmoid(v[0]).unwrap();
        let pf = t.sigmoid(v[1]).unwrap();
        ocelgan::gan::discriminator_loss(t, pr, pf).unwrap()
    });
    let g: Build = Box::new(|t: &mut Tape, v: &[Var]| {
        let pf = t.sigmoid(v[0]).unwrap();
        ocelgan::gan::generator_loss(t, pf).unwrap()
    });
    vec![("discriminator_loss", vec![real, fake.clone()], d), ("generator_loss", vec![fake], g)]
}

use ocelgan::autodiff::ParamStore;
use ocelgan::encoding::{cases_from_log, prepare, PreparedData};
use ocelgan::gan::{DecodeMode, TrainConfig, TrainedModel};
use ocelgan::synthgen::generate_toy_linear;

pub fn toy_data(n_cases: usize, seed: u64) -> PreparedData {
    let log = generate_toy_linear(n_cases, 600);
    prepare(cases_from_log(&log, "case", &[]).unwrap(), &[], seed).unwrap()
}

/// A two-layer, three-unit model on the toy schema.
pub fn tiny_model(seed: u64) -> (TrainedModel, PreparedData) {
    let data = toy_data(10, seed);
    let cfg = TrainConfig { seed, num_layers: 2, hidden_size: 3, init_scale: 0.5, ..Default::default() };
    (TrainedModel::new(data.schema.clone(), cfg, 8).unwrap(), data)
}

#[derive(Clone, Copy, PartialEq)]
pub enum Net {
    Generator,
    Discriminator,
}

/// `L_G` (generator trainable, discriminator frozen) or `L_D` (the reverse,
/// fakes taken as constants) for the first training partition. The Gumbel
/// noise and teacher-forcing draws come from `noise_seed`.
pub fn model_loss(model: &TrainedModel, data: &PreparedData, net: Net, noise_seed: u64) -> (Tape, Var) {
    let part = &data.bundle.train[0];
    let pairs: Vec<_> = part.pairs.iter().take(3).collect();
    let stack = |f: &dyn Fn(usize) -> Vec<Vec<f64>>| -> Vec<Tensor> {
        let seqs: Vec<Vec<Vec<f64>>> = (0..pairs.len()).map(f).collect();
        (0..seqs[0].len())
            .map(|t| Tensor::from_rows(&seqs.iter().map(|s| s[t].as_slice()).collect::<Vec<_>>()).unwrap())
            .collect()
    };
    let prefix = stack(&|i| pairs[i].prefix.clone());
    let real = stack(&|i| pairs[i].suffix.clone());
    let mut noise = rng(noise_seed);
    let mut tape = Tape::new();
    let g = model.generator.bind(&mut tape, net == Net::Generator);
    let state = g.encode_prefix(&mut tape, &prefix).unwrap();
    let mode = DecodeMode::Train {
        real_suffix: &real,
        teacher_forcing_prob: 0.5,
        tau: 0.75,
        straight_through: false,
        rng: &mut noise,
    };
    let decoded = g.decode_suffix(&mut tape, state, prefix.last().unwrap(), mode).unwrap();
    let d = model.discriminator.bind(&mut tape, net == Net::Discriminator);
    let pre: Vec<Var> = prefix.iter().map(|t| tape.constant(t.clone())).collect();
    let fake: Vec<Var> = pre.iter().copied().chain(decoded.emissions.iter().copied()).collect();
    let (_, d_fake) = d.score(&mut tape, &fake).unwrap();
    let loss = match net {
        Net::Generator => ocelgan::gan::generator_loss(&mut tape, d_fake).unwrap(),
        Net::Discriminator => {
            let real: Vec<Var> = pre.iter().copied().chain(real.iter().map(|t| tape.constant(t.clone()))).collect();
            let (_, d_real) = d.score(&mut tape, &real).unwrap();
            ocelgan::gan::discriminator_loss(&mut tape, d_real, d_fake).unwrap()
        }
    };
    (tape, loss)
}

fn store_of(model: &mut TrainedModel, net: Net) -> &mut ParamStore {
    match net {
        Net::Generator => &mut model.generator.params,
        Net::Discriminator => &mut model.discriminator.params,
    }
}

/// Finite-difference check of a full adversarial loss against the gradients
/// accumulated into the parameter store of `net`.
pub fn model_max_rel_error(seed: u64, net: Net) -> f64 {
    let (mut model, data) = tiny_model(seed);
    let (tape, loss) = model_loss(&model, &data, net, seed);
    let grads = tape.backward(loss).unwrap();
    let store = store_of(&mut model, net);
    store.zero_grad();
    grads.accumulate_into(&tape, store);
    let analytic: Vec<Tensor> = store.ids().map(|id| store.grad(id).clone()).collect();
    let ids: Vec<_> = store.ids().collect();

    let mut worst: f64 = 0.0;
    for (p, &id) in ids.iter().enumerate() {
        for i in 0..analytic[p].data().len() {
            let eval = |delta: f64| {
                let mut m = model.clone();
                store_of(&mut m, net).value_mut(id).data_mut()[i] += delta;
                let (t, l) = model_loss(&m, &data, net, seed);
                t.value(l).item()
            };
            let numeric = (eval(FD_EPS) - eval(-FD_EPS)) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(analytic[p].data()[i], numeric));
        }
    }
    worst
}
