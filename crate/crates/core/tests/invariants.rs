use cardtune_testkit::properties as p;

#[test]
fn neighbor_weights_sum_to_one() {
    p::weight_normalization(256).unwrap();
}

#[test]
fn blended_numbers_stay_within_neighbor_bounds() {
    p::blend_bounds(256).unwrap();
}

#[test]
fn singleton_blend_is_identity() {
    p::singleton_identity(256).unwrap();
}

#[test]
fn raising_a_similarity_pulls_toward_that_neighbor() {
    p::similarity_monotonicity(256).unwrap();
}

#[test]
fn positive_scaling_changes_nothing() {
    p::scaling_invariance(256).unwrap();
}

#[test]
fn tuner_respects_budget_and_never_worsens_the_seed() {
    p::tuner_laws(128).unwrap();
}
