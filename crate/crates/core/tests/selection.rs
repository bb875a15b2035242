//! Clean/noisy classification by the fitted mixture against the Bayes rule
//! computed from the generating parameters.

use plremix::rng;
use plremix::select::{fit_gmm2d, EmOptions};
use rand_distr::{Distribution, StandardNormal};

struct Component {
    mean: [f64; 2],
    /// Lower Cholesky factor of the covariance.
    chol: [[f64; 2]; 2],
    weight: f64,
}

impl Component {
    fn sample(&self, r: &mut impl rand::Rng) -> [f64; 2] {
        let z0: f64 = StandardNormal.sample(r);
        let z1: f64 = StandardNormal.sample(r);
        [
            self.mean[0] + self.chol[0][0] * z0,
            self.mean[1] + self.chol[1][0] * z0 + self.chol[1][1] * z1,
        ]
    }

    fn density(&self, x: [f64; 2]) -> f64 {
        let [[a, _], [b, c]] = self.chol;
        let cov = [[a * a, a * b], [a * b, b * b + c * c]];
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let d = [x[0] - self.mean[0], x[1] - self.mean[1]];
        let q = (cov[1][1] * d[0] * d[0] - 2.0 * cov[0][1] * d[0] * d[1] + cov[0][0] * d[1] * d[1]) / det;
        self.weight * (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
    }
}

fn agreement_gap(clean: Component, noisy: Component, n: usize, seed: u64) -> (f64, f64) {
    let mut r = rng::stream(seed, "bayes", &[]);
    let mut points = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let is_clean = rand::RngExt::random::<f64>(&mut r) < clean.weight;
        points.push(if is_clean { clean.sample(&mut r) } else { noisy.sample(&mut r) });
        truth.push(is_clean);
    }
    let fit = fit_gmm2d(&points, &EmOptions::default()).unwrap();
    let w = fit.model.clean_posterior(&points);
    let acc = |pred: &dyn Fn(usize) -> bool| {
        (0..n).filter(|&i| pred(i) == truth[i]).count() as f64 / n as f64
    };
    let fitted = acc(&|i| w[i] > 0.5);
    let bayes = acc(&|i| clean.density(points[i]) > noisy.density(points[i]));
    (fitted, bayes)
}

#[test]
fn fitted_rule_is_within_two_points_of_bayes() {
    let cases = [
        (
            Component { mean: [0.1, 0.15], chol: [[0.08, 0.0], [0.02, 0.1]], weight: 0.5 },
            Component { mean: [0.6, 0.55], chol: [[0.15, 0.0], [0.05, 0.15]], weight: 0.5 },
        ),
        (
            Component { mean: [0.2, 0.1], chol: [[0.1, 0.0], [0.0, 0.1]], weight: 0.3 },
            Component { mean: [0.5, 0.6], chol: [[0.2, 0.0], [-0.08, 0.12]], weight: 0.7 },
        ),
        (
            Component { mean: [0.05, 0.3], chol: [[0.05, 0.0], [0.01, 0.2]], weight: 0.75 },
            Component { mean: [0.7, 0.4], chol: [[0.1, 0.0], [0.0, 0.2]], weight: 0.25 },
        ),
    ];
    for (k, (clean, noisy)) in cases.into_iter().enumerate() {
        assert!(clean.mean[0].hypot(clean.mean[1]) < noisy.mean[0].hypot(noisy.mean[1]));
        let (fitted, bayes) = agreement_gap(clean, noisy, 4000, k as u64);
        assert!(bayes - fitted <= 0.02, "case {k}: fitted {fitted:.4}, bayes {bayes:.4}");
    }
}
