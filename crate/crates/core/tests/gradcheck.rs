mod common;

use common::gradcases::{self, TOL};

fn check(name: &str, case: fn() -> f64) {
    let err = case();
    assert!(err < TOL, "{name}: relative error {err:e}");
}

#[test]
fn plr_infonce_gradient() {
    check("plr_infonce", gradcases::plr_infonce_gradient);
}

#[test]
fn flat_plr_gradient() {
    check("flat_plr", gradcases::flat_plr_gradient);
}

#[test]
fn vanilla_infonce_gradient() {
    check("vanilla_infonce", gradcases::vanilla_infonce_gradient);
}

#[test]
fn scl_gradient() {
    check("scl", gradcases::scl_gradient);
}

#[test]
fn hard_cross_entropy_gradient() {
    check("ce", gradcases::hard_cross_entropy_gradient);
}

#[test]
fn soft_cross_entropy_with_prior_gradient() {
    check("ce+reg", gradcases::soft_cross_entropy_with_prior_gradient);
}

#[test]
fn squared_error_with_prior_gradient() {
    check("mse+reg", gradcases::squared_error_with_prior_gradient);
}

#[test]
fn prior_regularizer_alone_gradient() {
    check("reg", gradcases::prior_regularizer_alone_gradient);
}

#[test]
fn full_sst_gradient() {
    check("sst", gradcases::full_sst_gradient);
}

#[test]
fn composite_objective_gradient() {
    check("composite", gradcases::composite_objective_gradient);
}
