mod common;

use common::rng;
use ocelgan::gan::gumbel::{entropy, gumbel_noise, gumbel_softmax, hard_sample, relaxed_sample};
use ocelgan::autodiff::tensor::Tensor;
use rand::Rng;

#[test]
fn relaxed_samples_sum_to_one() {
    let mut r = rng(3);
    for _ in 0..1000 {
        let n = r.random_range(2..8);
        let logits: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        let tau = r.random_range(0.01..5.0);
        let y = gumbel_softmax(&logits, tau, &mut r).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn low_temperature_recovers_the_hard_sample() {
    let mut r = rng(11);
    let logits = [0.2f64, 0.5, 0.3, 0.1].map(f64::ln);
    let mut agree = 0;
    for _ in 0..1000 {
        let g = gumbel_noise(&mut r, logits.len());
        let y = relaxed_sample(&logits, &g, 0.01).unwrap();
        let soft = Tensor::row_vector(y).argmax_row(0);
        agree += usize::from(soft == hard_sample(&logits, &g));
    }
    assert!(agree >= 990, "{agree}");
}

#[test]
fn entropy_falls_with_temperature() {
    let logits = [0.1f64, 0.2, 0.3, 0.4].map(f64::ln);
    let mean_entropy = |tau: f64| {
        let mut r = rng(5);
        (0..1000).map(|_| entropy(&gumbel_softmax(&logits, tau, &mut r).unwrap())).sum::<f64>() / 1000.0
    };
    let (h1, h05, h01) = (mean_entropy(1.0), mean_entropy(0.5), mean_entropy(0.1));
    assert!(h1 > h05 && h05 > h01, "{h1} {h05} {h01}");
}

#[test]
fn uniform_logits_give_uniform_winners() {
    let k = 4;
    let n = 10_000;
    let mut r = rng(17);
    let mut counts = vec![0usize; k];
    for _ in 0..n {
        let y = gumbel_softmax(&vec![0.0; k], 1.0, &mut r).unwrap();
        counts[Tensor::row_vector(y).argmax_row(0)] += 1;
    }
    let p = 1.0 / k as f64;
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - mean).abs() <= 3.0 * sd, "{c} vs {mean} ± {}", 3.0 * sd);
    }
}

#[test]
fn hard_sample_frequencies_follow_the_distribution() {
    let probs = [0.1f64, 0.6, 0.3];
    let logits = probs.map(f64::ln);
    let n = 20_000;
    let mut r = rng(23);
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[hard_sample(&logits, &gumbel_noise(&mut r, 3))] += 1;
    }
    for (c, p) in counts.iter().zip(probs) {
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((*c as f64 - n as f64 * p).abs() <= 4.0 * sd);
    }
}
