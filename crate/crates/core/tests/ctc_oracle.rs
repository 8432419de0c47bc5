mod common;

use argus_core::ctc::collapse;

#[test]
fn loss_and_gradient_match_path_enumeration() {
    let (feasible, infeasible) = common::ctc_oracle(1000, 2024);
    assert!(feasible > 500 && infeasible > 0, "{feasible} feasible, {infeasible} infeasible");
}

#[test]
fn collapse_matches_definition_on_all_short_paths() {
    common::for_each_path(5, &[0, 1, 2], |path| {
        let mut merged = path.to_vec();
        merged.dedup();
        let expected: Vec<usize> = merged.into_iter().filter(|&k| k != 0).collect();
        assert_eq!(collapse(path), expected, "{path:?}");
    });
}
