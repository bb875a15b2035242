//! Analytic gradients of every loss, pulled back through the network,
//! against central finite differences. Each case returns the largest
//! per-parameter relative error.

use super::*;
use ndarray::{s, Array2};
use plremix::net::{softmax_rows, GradVec, NetState};
use plremix::plr::{self, ContrastiveBatch, ContrastiveOut, NegativeSets};
use plremix::sst;

pub const H: f64 = 1e-6;
pub const TOL: f64 = 1e-4;
pub const FLOOR: f64 = 1e-6;

fn predictions(b: usize, seed: u64) -> Array2<f64> {
    softmax_rows(&(gaussian(b, 4, seed) * 2.0))
}

fn contrastive_value_and_grad(
    net: &NetState,
    x: &Array2<f64>,
    loss: &dyn Fn(&ContrastiveBatch) -> ContrastiveOut,
) -> (f64, GradVec) {
    let out = net.forward(x.view()).unwrap();
    let (v1, v2) = split_views(&out.proj);
    let cb = ContrastiveBatch::new(v1.view(), v2.view(), 0.5).unwrap();
    let c = loss(&cb);
    let d = stack(&c.grad_view1, &c.grad_view2);
    (c.objective, net.backward(&out, None, Some(d.view())).unwrap())
}

fn check_contrastive(loss: &dyn Fn(&ContrastiveBatch) -> ContrastiveOut) -> f64 {
    let net = small_net(11);
    let x = gaussian(16, 5, 12);
    let (_, analytic) = contrastive_value_and_grad(&net, &x, loss);
    assert!(analytic.norm() > 1e-6, "gradient vanished");
    let numeric = numeric_grad(&net, H, &|n| contrastive_value_and_grad(n, &x, loss).0);
    max_rel_err(&analytic, &numeric, FLOOR)
}

fn some_negative_sets(b: usize) -> NegativeSets {
    let t = predictions(b, 13);
    let y: Vec<usize> = (0..b).map(|i| i % 4).collect();
    let ns = plr::reliable_negative_set(t.view(), &y, 1, false).unwrap();
    assert!(ns.selected_pairs() > 0);
    ns
}

pub fn plr_infonce_gradient() -> f64 {
    let ns = some_negative_sets(8);
    check_contrastive(&|cb| plr::plr_infonce(cb, &ns).unwrap())
}

pub fn flat_plr_gradient() -> f64 {
    let ns = some_negative_sets(8);
    check_contrastive(&|cb| plr::plr_flatnce(cb, &ns).unwrap())
}

pub fn vanilla_infonce_gradient() -> f64 {
    check_contrastive(&|cb| plr::vanilla_infonce(cb).unwrap())
}

pub fn scl_gradient() -> f64 {
    let labels = [0, 1, 0, 2, 1, 3, 0, 2];
    check_contrastive(&|cb| plr::scl_loss(cb, &labels).unwrap())
}

fn logit_value_and_grad(
    net: &NetState,
    x: &Array2<f64>,
    loss: &dyn Fn(&Array2<f64>) -> (f64, Array2<f64>),
) -> (f64, GradVec) {
    let out = net.forward(x.view()).unwrap();
    let (v, d) = loss(&out.logits);
    (v, net.backward(&out, Some(d.view()), None).unwrap())
}

fn check_logits(loss: &dyn Fn(&Array2<f64>) -> (f64, Array2<f64>)) -> f64 {
    let net = small_net(21);
    let x = gaussian(10, 5, 22);
    let (_, analytic) = logit_value_and_grad(&net, &x, loss);
    assert!(analytic.norm() > 1e-6, "gradient vanished");
    let numeric = numeric_grad(&net, H, &|n| logit_value_and_grad(n, &x, loss).0);
    max_rel_err(&analytic, &numeric, FLOOR)
}

fn soft_targets(rows: usize, seed: u64) -> Array2<f64> {
    predictions(rows, seed)
}

pub fn hard_cross_entropy_gradient() -> f64 {
    let y = [0, 1, 2, 3, 0, 1, 2, 3, 3, 1];
    check_logits(&|z| sst::cross_entropy(z.view(), &y).unwrap())
}

pub fn soft_cross_entropy_with_prior_gradient() -> f64 {
    let yt = soft_targets(10, 23);
    let empty = Array2::<f64>::zeros((0, 4));
    check_logits(&|z| {
        let o = sst::sst_loss(z.view(), yt.view(), empty.view(), empty.view(), 1.0).unwrap();
        (o.terms.total, o.grad_labeled)
    })
}

pub fn squared_error_with_prior_gradient() -> f64 {
    let yt = soft_targets(10, 24);
    let empty = Array2::<f64>::zeros((0, 4));
    check_logits(&|z| {
        let o = sst::sst_loss(empty.view(), empty.view(), z.view(), yt.view(), 2.5).unwrap();
        (o.terms.total, o.grad_unlabeled)
    })
}

pub fn prior_regularizer_alone_gradient() -> f64 {
    let yt = soft_targets(10, 25);
    let empty = Array2::<f64>::zeros((0, 4));
    check_logits(&|z| {
        let o = sst::sst_loss(empty.view(), empty.view(), z.view(), yt.view(), 0.0).unwrap();
        assert_eq!(o.terms.mse, 0.0);
        (o.terms.reg, o.grad_unlabeled)
    })
}

pub fn full_sst_gradient() -> f64 {
    let yt = soft_targets(10, 26);
    check_logits(&|z| {
        let o = sst::sst_loss(
            z.slice(s![..4, ..]),
            yt.slice(s![..4, ..]),
            z.slice(s![4.., ..]),
            yt.slice(s![4.., ..]),
            1.0,
        )
        .unwrap();
        (o.terms.total, stack(&o.grad_labeled, &o.grad_unlabeled))
    })
}

/// `SST(mixed batch) + lambda * PLR(two strong views)` with both branches
/// through the same network.
pub fn composite_objective_gradient() -> f64 {
    let lambda = 0.7;
    let net = small_net(31);
    let mixed = gaussian(10, 5, 32);
    let views = gaussian(16, 5, 33);
    let yt = soft_targets(10, 34);
    let ns = some_negative_sets(8);
    let mut worst = 0.0f64;
    for flat in [false, true] {
        let eval = |n: &NetState| -> (f64, GradVec) {
            let out_m = n.forward(mixed.view()).unwrap();
            let o = sst::sst_loss(
                out_m.logits.slice(s![..6, ..]),
                yt.slice(s![..6, ..]),
                out_m.logits.slice(s![6.., ..]),
                yt.slice(s![6.., ..]),
                1.0,
            )
            .unwrap();
            let d = stack(&o.grad_labeled, &o.grad_unlabeled);
            let mut g = n.backward(&out_m, Some(d.view()), None).unwrap();
            let out_s = n.forward(views.view()).unwrap();
            let (v1, v2) = split_views(&out_s.proj);
            let cb = ContrastiveBatch::new(v1.view(), v2.view(), 0.5).unwrap();
            let c = if flat {
                plr::plr_flatnce(&cb, &ns).unwrap()
            } else {
                plr::plr_infonce(&cb, &ns).unwrap()
            };
            let dp = stack(&c.grad_view1, &c.grad_view2);
            g.add_scaled(lambda, &n.backward(&out_s, None, Some(dp.view())).unwrap());
            (o.terms.total + lambda * c.objective, g)
        };
        let (_, analytic) = eval(&net);
        let numeric = numeric_grad(&net, H, &|n| eval(n).0);
        worst = worst.max(max_rel_err(&analytic, &numeric, FLOOR));
    }
    worst
}

pub const CASES: &[(&str, fn() -> f64)] = &[
    ("plr_infonce", plr_infonce_gradient),
    ("flat_plr", flat_plr_gradient),
    ("vanilla_infonce", vanilla_infonce_gradient),
    ("scl", scl_gradient),
    ("cross_entropy", hard_cross_entropy_gradient),
    ("soft_ce_with_prior", soft_cross_entropy_with_prior_gradient),
    ("mse_with_prior", squared_error_with_prior_gradient),
    ("prior_regularizer", prior_regularizer_alone_gradient),
    ("sst", full_sst_gradient),
    ("composite", composite_objective_gradient),
];
