mod common;

use argus_core::decoder::{THETA_DEFAULT, THETA_ENLARGED};

#[test]
fn viterbi_equals_exhaustive_scoring() {
    let matched = common::viterbi_oracle(1000, 77);
    assert!(matched > 900, "only {matched} instances had a feasible word");
}

#[test]
fn fallback_happens_exactly_below_theta() {
    for (theta, seed) in [(THETA_DEFAULT, 5), (THETA_ENLARGED, 6)] {
        let (kept, fell_back) = common::fallback_oracle(theta, 1000, seed);
        assert!(kept > 10 && fell_back > 10, "theta {theta}: {kept} corrections, {fell_back} fallbacks");
    }
}
