#![allow(dead_code)]

pub mod gradcases;

use ndarray::{s, Array2};
use plremix::net::{GradVec, NetDims, NetState};
use plremix::rng;
use rand_distr::{Distribution, StandardNormal};

/// Small network (a few hundred parameters) for derivative checks.
pub fn small_net(seed: u64) -> NetState {
    let dims = NetDims {
        input: 5,
        hidden: vec![10, 9],
        classes: 4,
        proj_hidden: 8,
        proj_dim: 6,
    };
    let net = NetState::new(dims, seed).unwrap();
    assert!(net.num_params() <= 2000);
    net
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::stream(seed, "gaussian", &[]);
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut r))
}

pub fn perturbed(net: &NetState, i: usize, delta: f64) -> NetState {
    let mut p = net.params().to_vec();
    p[i] += delta;
    let mut n = net.clone();
    n.set_params(&p).unwrap();
    n
}

/// Central differences of `loss` at every parameter.
pub fn numeric_grad(net: &NetState, h: f64, loss: &dyn Fn(&NetState) -> f64) -> Vec<f64> {
    (0..net.num_params())
        .map(|i| (loss(&perturbed(net, i, h)) - loss(&perturbed(net, i, -h))) / (2.0 * h))
        .collect()
}

/// Five-point stencil, fourth-order accurate.
pub fn numeric_grad5(net: &NetState, h: f64, loss: &dyn Fn(&NetState) -> f64) -> Vec<f64> {
    (0..net.num_params())
        .map(|i| {
            let f = |k: f64| loss(&perturbed(net, i, k * h));
            (-f(2.0) + 8.0 * f(1.0) - 8.0 * f(-1.0) + f(-2.0)) / (12.0 * h)
        })
        .collect()
}

/// Largest per-component `|a - n| / max(|a|, |n|, floor)`.
pub fn max_rel_err(analytic: &GradVec, numeric: &[f64], floor: f64) -> f64 {
    analytic
        .0
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn split_views(proj: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let b = proj.nrows() / 2;
    (
        proj.slice(s![..b, ..]).to_owned(),
        proj.slice(s![b.., ..]).to_owned(),
    )
}

pub fn stack(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(0), &[a.view(), b.view()]).unwrap()
}
