use std::io::Write;

use geomag::acceptance::criterion;

fn check(id: u32) {
    let r = criterion(id).expect("known criterion");
    // straight to the handle so the line shows without --nocapture
    let _ = writeln!(std::io::stderr(), "{}", r.line());
    assert!(r.passed, "{}", r.line());
}

#[test]
fn criterion_01_effective_length() {
    check(1);
}

#[test]
fn criterion_02_zero_gap_reflection() {
    check(2);
}

#[test]
fn criterion_03_bo_vs_coupled_transmission() {
    check(3);
}

#[test]
fn criterion_04_deflection_identity() {
    check(4);
}

#[test]
fn criterion_05_flux_gauge_invariance() {
    check(5);
}

#[test]
fn criterion_06_deflection_table() {
    check(6);
}

#[test]
fn criterion_07_tdse_unitarity_and_order() {
    check(7);
}

#[test]
fn criterion_08_flux_lens_focus() {
    check(8);
}

#[test]
fn criterion_09_ferromagnetic_slab() {
    check(9);
}

#[test]
fn criterion_10_holonomy() {
    check(10);
}

#[test]
fn criterion_11_pure_gauge_curvature() {
    check(11);
}

#[test]
fn criterion_12_dipolar_spectrum() {
    check(12);
}
