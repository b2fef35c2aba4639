mod common;

use common::attention_suite::{one_hot_recovers_slice, weights_sum_to_one, zero_scorer_is_mean};

#[test]
fn weights_sum_to_one_over_many_forwards() {
    weights_sum_to_one(200, 1e-6).unwrap();
}

#[test]
fn one_hot_weights_select_one_step() {
    one_hot_recovers_slice(50).unwrap();
}

#[test]
fn zeroed_scorer_output_matches_mean_mode() {
    zero_scorer_is_mean(50, 1e-6).unwrap();
}
