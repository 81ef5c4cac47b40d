//! Gumbel-Softmax relaxation of categorical sampling.
//!
//! The hard sample is `one_hot(argmax_i (log π_i + g_i))` with
//! `g_i ~ Gumbel(0, 1)`; the relaxation replaces the argmax with
//! `softmax((log π + g) / τ)`.

use rand::Rng;
use rand_distr::{Distribution, Gumbel};

use crate::autodiff::{tensor::argmax, AutodiffError, Tape, Tensor, Var};

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("temperature must be positive, got {0}")]
pub struct NonPositiveTemperature(pub f64);

pub fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let g = Gumbel::new(0.0, 1.0).expect("standard Gumbel");
    (0..n).map(|_| g.sample(rng)).collect()
}

/// Relaxed sample for one distribution given `log π` (any additive constant
/// cancels) and pre-drawn noise.
pub fn relaxed_sample(log_probs: &[f64], noise: &[f64], tau: f64) -> Result<Vec<f64>, NonPositiveTemperature> {
    if !(tau > 0.0) {
        return Err(NonPositiveTemperature(tau));
    }
    let mut y: Vec<f64> = log_probs.iter().zip(noise).map(|(l, g)| (l + g) / tau).collect();
    crate::autodiff::tape::softmax_in_place(&mut y);
    Ok(y)
}

/// The hard Gumbel-max sample (index of the winning class).
pub fn hard_sample(log_probs: &[f64], noise: &[f64]) -> usize {
    let perturbed: Vec<f64> = log_probs.iter().zip(noise).map(|(l, g)| l + g).collect();
    argmax(&perturbed)
}

/// Draws fresh noise and returns a relaxed one-hot sample.
pub fn gumbel_softmax<R: Rng + ?Sized>(
    log_probs: &[f64],
    tau: f64,
    rng: &mut R,
) -> Result<Vec<f64>, NonPositiveTemperature> {
    let noise = gumbel_noise(rng, log_probs.len());
    relaxed_sample(log_probs, &noise, tau)
}

/// Row-wise relaxed sampling on a tape. `logits` are unnormalized log
/// probabilities; the result is differentiable with respect to them.
pub fn gumbel_softmax_rows<R: Rng + ?Sized>(
    tape: &mut Tape,
    logits: Var,
    tau: f64,
    rng: &mut R,
) -> Result<Var, AutodiffError> {
    assert!(tau > 0.0, "temperature must be positive");
    let (rows, cols) = tape.value(logits).shape();
    let noise = tape.constant(Tensor::new(rows, cols, gumbel_noise(rng, rows * cols))?);
    let perturbed = tape.add(logits, noise)?;
    let scaled = tape.scale(perturbed, 1.0 / tau)?;
    tape.softmax_rows(scaled)
}

/// Shannon entropy (nats) of a probability vector.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}
