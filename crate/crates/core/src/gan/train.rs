//! Adversarial training loop.

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{clip_grad_norm, AutodiffError, RmsProp, Tape, Tensor, Var};
use crate::encoding::{DatasetBundle, EncodingSchema, PrefixSuffixPair};
use crate::metrics::{evaluate, EvalReport};

use super::model::{discriminator_loss, generator_loss, DecodeMode};
use super::{GanError, TrainConfig, TrainedModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean over the epoch's batches.
    pub loss_d: f64,
    pub loss_g: f64,
    pub val_similarity: Option<f64>,
    pub val_mae: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,loss_d,loss_g,val_similarity,val_mae";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch,
                r.loss_d,
                r.loss_g,
                opt(r.val_similarity),
                opt(r.val_mae)
            ));
        }
        out
    }
}

/// The generator's forward pass for one batch, kept so that both update
/// steps can use it.
pub struct Forward {
    tape: Tape,
    prefix: Vec<Tensor>,
    real: Vec<Tensor>,
    emissions: Vec<Var>,
}

impl Forward {
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn emissions(&self) -> &[Var] {
        &self.emissions
    }

    /// Current values of the generated suffix, one tensor per step.
    pub fn fake(&self) -> Vec<Tensor> {
        self.emissions.iter().map(|&e| self.tape.value(e).clone()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub loss_d: f64,
    pub loss_g: f64,
}

pub struct Trainer {
    pub model: TrainedModel,
    opt_g: RmsProp,
    opt_d: RmsProp,
    rng: ChaCha8Rng,
}

fn stack(pairs: &[&PrefixSuffixPair], pick: impl Fn(&PrefixSuffixPair) -> &Vec<Vec<f64>>) -> Result<Vec<Tensor>, GanError> {
    let len = pick(pairs[0]).len();
    if pairs.iter().any(|p| pick(p).len() != len) {
        return Err(GanError::InvalidConfig("pairs in a batch must share their shape".into()));
    }
    (0..len)
        .map(|t| Ok(Tensor::from_rows(&pairs.iter().map(|p| pick(p)[t].as_slice()).collect::<Vec<_>>())?))
        .collect()
}

impl Trainer {
    pub fn new(model: TrainedModel) -> Self {
        let cfg = model.config.rmsprop();
        let opt_g = RmsProp::new(cfg, &model.generator.params);
        let opt_d = RmsProp::new(cfg, &model.discriminator.params);
        let rng = ChaCha8Rng::seed_from_u64(model.config.seed.wrapping_add(0x7261_696e));
        Self { model, opt_g, opt_d, rng }
    }

    /// Generator forward pass in training mode, with gradients enabled.
    pub fn forward(&mut self, batch: &[&PrefixSuffixPair]) -> Result<Forward, GanError> {
        if batch.is_empty() {
            return Err(GanError::EmptyBundle);
        }
        let prefix = stack(batch, |p| &p.prefix)?;
        let real = stack(batch, |p| &p.suffix)?;
        if prefix.is_empty() {
            return Err(GanError::EmptyPrefix);
        }
        if real.is_empty() {
            return Err(GanError::EmptySuffix);
        }
        let cfg = &self.model.config;
        let mut tape = Tape::new();
        let g = self.model.generator.bind(&mut tape, true);
        let state = g.encode_prefix(&mut tape, &prefix)?;
        let mode = DecodeMode::Train {
            real_suffix: &real,
            teacher_forcing_prob: cfg.teacher_forcing_prob,
            tau: cfg.gumbel_tau,
            straight_through: cfg.straight_through,
            rng: &mut self.rng,
        };
        let decoded = g.decode_suffix(&mut tape, state, prefix.last().expect("nonempty"), mode)?;
        Ok(Forward { tape, prefix, real, emissions: decoded.emissions })
    }

    /// Updates the discriminator on real suffixes versus the current fakes
    /// (taken as constants). Returns `L_D`.
    pub fn discriminator_step(&mut self, fw: &Forward) -> Result<f64, GanError> {
        let disc = &mut self.model.discriminator;
        let mut tape = Tape::new();
        let d = disc.bind(&mut tape, true);
        let prefix: Vec<Var> = fw.prefix.iter().map(|t| tape.constant(t.clone())).collect();
        let real: Vec<Var> = prefix.iter().copied().chain(fw.real.iter().map(|t| tape.constant(t.clone()))).collect();
        let fake: Vec<Var> = prefix.iter().copied().chain(fw.fake().into_iter().map(|t| tape.constant(t))).collect();
        let (_, d_real) = d.score(&mut tape, &real)?;
        let (_, d_fake) = d.score(&mut tape, &fake)?;
        let loss = discriminator_loss(&mut tape, d_real, d_fake)?;
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        disc.params.zero_grad();
        grads.accumulate_into(&tape, &mut disc.params);
        clip_grad_norm(&mut disc.params, self.model.config.clip_norm);
        self.opt_d.step(&mut disc.params)?;
        Ok(value)
    }

    /// Updates the generator through the (frozen) discriminator. Returns `L_G`.
    pub fn generator_step(&mut self, fw: Forward) -> Result<f64, GanError> {
        let Forward { mut tape, prefix, emissions, .. } = fw;
        let d = self.model.discriminator.bind(&mut tape, false);
        let steps: Vec<Var> =
            prefix.into_iter().map(|t| tape.constant(t)).chain(emissions.iter().copied()).collect();
        let (_, d_fake) = d.score(&mut tape, &steps)?;
        let loss = generator_loss(&mut tape, d_fake)?;
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        let gen = &mut self.model.generator;
        gen.params.zero_grad();
        grads.accumulate_into(&tape, &mut gen.params);
        clip_grad_norm(&mut gen.params, self.model.config.clip_norm);
        self.opt_g.step(&mut gen.params)?;
        Ok(value)
    }

    /// One full adversarial step on a batch of same-shaped pairs.
    pub fn train_batch(&mut self, batch: &[&PrefixSuffixPair]) -> Result<StepLosses, GanError> {
        let fw = self.forward(batch)?;
        let loss_d = self.discriminator_step(&fw)?;
        let loss_g = self.generator_step(fw)?;
        Ok(StepLosses { loss_d, loss_g })
    }

    /// Batches for one epoch: partitions (optionally cut into chunks of
    /// `batch_size`) in shuffled order.
    fn epoch_batches<'a>(&mut self, bundle: &'a DatasetBundle) -> Vec<Vec<&'a PrefixSuffixPair>> {
        let mut batches: Vec<Vec<&PrefixSuffixPair>> = Vec::new();
        for part in &bundle.train {
            let mut pairs: Vec<&PrefixSuffixPair> = part.pairs.iter().collect();
            match self.model.config.batch_size {
                Some(size) => {
                    pairs.shuffle(&mut self.rng);
                    batches.extend(pairs.chunks(size).map(<[_]>::to_vec));
                }
                None => batches.push(pairs),
            }
        }
        batches.retain(|b| !b.is_empty());
        batches.shuffle(&mut self.rng);
        batches
    }
}

pub struct TrainOutcome {
    /// The best model by validation similarity (ties broken by MAE), or the
    /// last one if no validation ran.
    pub model: TrainedModel,
    pub history: History,
    pub best_epoch: Option<usize>,
    pub best_validation: Option<EvalReport>,
}

pub fn train(config: &TrainConfig, schema: &EncodingSchema, bundle: &DatasetBundle) -> Result<TrainOutcome, GanError> {
    train_with_observer(config, schema, bundle, |_| ControlFlow::Continue(()))
}

fn non_finite(epoch: usize, batch: usize) -> impl Fn(GanError) -> GanError {
    move |e| match e {
        GanError::Autodiff(AutodiffError::NonFiniteValue { op }) => {
            GanError::NonFinite { epoch, batch, detail: format!("{op} produced NaN or infinity") }
        }
        other => other,
    }
}

/// Like [`train`], calling `observer` after every epoch; returning
/// `ControlFlow::Break` stops training early.
pub fn train_with_observer(
    config: &TrainConfig,
    schema: &EncodingSchema,
    bundle: &DatasetBundle,
    mut observer: impl FnMut(&EpochRecord) -> ControlFlow<()>,
) -> Result<TrainOutcome, GanError> {
    if bundle.train.iter().all(|p| p.pairs.is_empty()) {
        return Err(GanError::EmptyBundle);
    }
    let max_len = config.max_len.unwrap_or(2 * bundle.longest_train_suffix());
    let mut trainer = Trainer::new(TrainedModel::new(schema.clone(), config.clone(), max_len)?);
    let mut history = History::default();
    let mut best: Option<(usize, EvalReport, TrainedModel)> = None;

    for epoch in 1..=config.epochs {
        let batches = trainer.epoch_batches(bundle);
        let (mut sum_d, mut sum_g) = (0.0, 0.0);
        for (b, batch) in batches.iter().enumerate() {
            let step = trainer.train_batch(batch).map_err(non_finite(epoch, b))?;
            if !step.loss_d.is_finite() || !step.loss_g.is_finite() {
                return Err(GanError::NonFinite { epoch, batch: b, detail: format!("losses {step:?}") });
            }
            sum_d += step.loss_d;
            sum_g += step.loss_g;
        }
        let n = batches.len().max(1) as f64;
        let mut record =
            EpochRecord { epoch, loss_d: sum_d / n, loss_g: sum_g / n, val_similarity: None, val_mae: None };

        if epoch % config.validation_every == 0 && !bundle.validation.is_empty() {
            let report = evaluate(&trainer.model, &bundle.validation)?.summary();
            record.val_similarity = Some(report.mean_similarity);
            record.val_mae = Some(report.mae_normalized);
            // higher similarity wins; at equal similarity, lower MAE
            let better = |r: &EvalReport| {
                report.mean_similarity > r.mean_similarity
                    || (report.mean_similarity == r.mean_similarity && report.mae_normalized < r.mae_normalized)
            };
            if best.as_ref().is_none_or(|(_, r, _)| better(r)) {
                best = Some((epoch, report, trainer.model.clone()));
            }
        }
        history.epochs.push(record);
        if observer(history.epochs.last().expect("just pushed")).is_break() {
            break;
        }
    }

    Ok(match best {
        Some((epoch, report, model)) => {
            TrainOutcome { model, history, best_epoch: Some(epoch), best_validation: Some(report) }
        }
        None => TrainOutcome { model: trainer.model, history, best_epoch: None, best_validation: None },
    })
}
