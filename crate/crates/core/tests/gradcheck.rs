mod common;

use common::*;

const TOL: f64 = 1e-4;

#[test]
fn every_op_matches_finite_differences() {
    for seed in 0..100 {
        for (name, inputs, f) in op_scenarios(seed) {
            let err = max_rel_error(&inputs, f);
            assert!(err < TOL, "{name} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn chained_lstm_cells_match_finite_differences() {
    for seed in 0..100 {
        let (inputs, f) = lstm_scenario(seed);
        let err = max_rel_error(&inputs, f);
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn adversarial_losses_match_finite_differences() {
    for seed in 0..100 {
        for (name, inputs, f) in loss_scenarios(seed) {
            let err = max_rel_error(&inputs, f);
            assert!(err < TOL, "{name} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn generator_loss_through_whole_model() {
    for seed in 0..10 {
        let err = model_max_rel_error(seed, Net::Generator);
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn discriminator_loss_through_whole_model() {
    for seed in 0..10 {
        let err = model_max_rel_error(seed, Net::Discriminator);
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}
