mod common;

use common::{fuzz_mdleaky, saturated_mdlstm_peak};

#[test]
fn mdleaky_state_never_leaves_unit_interval() {
    let worst = fuzz_mdleaky(10_000, 3);
    assert!(worst <= 1.0 + 1e-12, "max |s| = {worst}");
}

#[test]
fn mdlstm_state_explodes_under_open_forget_gates() {
    let peak = saturated_mdlstm_peak(16);
    assert!(peak > 100.0, "max |s| = {peak}");
    // the corner accumulates one unit per monotone lattice path
    assert!(peak > 1e8, "max |s| = {peak}");
}
