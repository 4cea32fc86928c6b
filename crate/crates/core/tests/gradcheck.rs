//! Backpropagated gradients against central finite differences in f64.

mod common;

use common::{check, single_channel, tiny};

#[test]
fn eval_mode_gradients() {
    for seed in 0..3 {
        check(tiny(0.0), seed, false, 0.0).assert_ok(&format!("seed {seed}"));
    }
}

#[test]
fn train_mode_with_dropout_and_decay() {
    for seed in 10..13 {
        check(tiny(0.3), seed, true, 5e-4).assert_ok(&format!("seed {seed}"));
    }
}

#[test]
fn single_channel_wider_net() {
    check(single_channel(), 21, false, 1e-2).assert_ok("single channel");
}
