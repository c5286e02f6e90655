mod common;

use common::grad;

#[test]
fn adaptable_and_full_gradients_match_finite_differences() {
    let (configs, worst) = grad::run(2024, 6).unwrap();
    assert!(configs >= 20);
    assert!(worst < grad::TOL);
}

#[test]
fn second_draw_of_configurations() {
    grad::run(77, 10).unwrap();
}
