//! Clean/noisy sample selection from per-sample loss pairs.
//!
//! Each sample gets a classification loss `-log t[y]` and a prototype loss
//! `-log s[y]`. A two-component Gaussian mixture is fitted on the (min-max
//! normalised) pairs, and the component whose mean is closer to the origin
//! is taken as clean. The 1D variant fits the classification loss alone.

use ndarray::ArrayView2;

use crate::{Error, Result};

/// Probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPair {
    pub l_cls: f64,
    pub l_proto: f64,
}

impl LossPair {
    pub fn as_point(&self) -> [f64; 2] {
        [self.l_cls, self.l_proto]
    }
}

/// `(-log t_i[y_i], -log s_i[y_i])` with probabilities clamped at
/// [`PROB_FLOOR`].
pub fn loss_pairs(t: ArrayView2<f64>, s: ArrayView2<f64>, y: &[usize]) -> Result<Vec<LossPair>> {
    if t.dim() != s.dim() || t.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "t {:?}, s {:?}, {} labels",
            t.dim(),
            s.dim(),
            y.len()
        )));
    }
    y.iter()
        .enumerate()
        .map(|(i, &yi)| {
            if yi >= t.ncols() {
                return Err(Error::InvalidArgument(format!("label {yi} out of range")));
            }
            Ok(LossPair {
                l_cls: -t[[i, yi]].max(PROB_FLOOR).ln(),
                l_proto: -s[[i, yi]].max(PROB_FLOOR).ln(),
            })
        })
        .collect()
}

fn min_max_scale(values: impl Iterator<Item = f64> + Clone) -> impl Fn(f64) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let range = hi - lo;
    move |v| if range > 0.0 { (v - lo) / range } else { 0.0 }
}

/// Min-max scales each coordinate to `[0, 1]` over the population; a
/// coordinate with zero range maps to zeros.
pub fn normalize_losses(pairs: &[LossPair]) -> Result<Vec<LossPair>> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two loss pairs, got {}",
            pairs.len()
        )));
    }
    let fc = min_max_scale(pairs.iter().map(|p| p.l_cls));
    let fp = min_max_scale(pairs.iter().map(|p| p.l_proto));
    Ok(pairs
        .iter()
        .map(|p| LossPair {
            l_cls: fc(p.l_cls),
            l_proto: fp(p.l_proto),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Stop once the log-likelihood gains less than this.
    pub tol: f64,
    /// Added to covariance diagonals on every M-step.
    pub cov_floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iters: 200,
            tol: 1e-8,
            cov_floor: 1e-6,
        }
    }
}

/// A fitted model plus the total log-likelihood before the first and after
/// every M-step.
#[derive(Debug, Clone)]
pub struct GmmFit<M> {
    pub model: M,
    pub log_likelihood: Vec<f64>,
}

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sorted_copy(v: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut s: Vec<f64> = v.collect();
    s.sort_by(f64::total_cmp);
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2 {
    pub mean: [f64; 2],
    /// Symmetric positive-definite, stored as `[[a, b], [b, c]]`.
    pub cov: [[f64; 2]; 2],
    pub weight: f64,
}

impl Gaussian2 {
    fn det(&self) -> f64 {
        self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0]
    }

    pub fn log_density(&self, x: [f64; 2]) -> f64 {
        let det = self.det();
        let dx = [x[0] - self.mean[0], x[1] - self.mean[1]];
        let [[a, b], [_, c]] = self.cov;
        let maha = (c * dx[0] * dx[0] - 2.0 * b * dx[0] * dx[1] + a * dx[1] * dx[1]) / det;
        -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * maha
    }

    pub fn mean_norm(&self) -> f64 {
        self.mean[0].hypot(self.mean[1])
    }

    /// Eigenvalues of the covariance, ascending.
    pub fn cov_eigenvalues(&self) -> [f64; 2] {
        let [[a, b], [_, c]] = self.cov;
        let mid = 0.5 * (a + c);
        let rad = (0.25 * (a - c).powi(2) + b * b).sqrt();
        [mid - rad, mid + rad]
    }
}

/// Two-component bivariate Gaussian mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gmm2d {
    pub components: [Gaussian2; 2],
}

impl Gmm2d {
    fn log_joint(&self, x: [f64; 2]) -> [f64; 2] {
        let [g0, g1] = &self.components;
        [
            g0.weight.ln() + g0.log_density(x),
            g1.weight.ln() + g1.log_density(x),
        ]
    }

    /// Component responsibilities for each point; each row sums to 1.
    pub fn posteriors(&self, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
        points
            .iter()
            .map(|&x| {
                let [a, b] = self.log_joint(x);
                let z = log_sum_exp2(a, b);
                let p0 = (a - z).exp();
                [p0, 1.0 - p0]
            })
            .collect()
    }

    pub fn log_likelihood(&self, points: &[[f64; 2]]) -> f64 {
        points
            .iter()
            .map(|&x| {
                let [a, b] = self.log_joint(x);
                log_sum_exp2(a, b)
            })
            .sum()
    }

    /// Index of the component with the smaller mean norm; ties go to 0.
    pub fn clean_component(&self) -> usize {
        let n0 = self.components[0].mean_norm();
        let n1 = self.components[1].mean_norm();
        if n0 == n1 {
            log::warn!("GMM components have equal mean norms; taking component 0 as clean");
        }
        usize::from(n1 < n0)
    }

    /// Posterior probability of the clean component for every point.
    pub fn clean_posterior(&self, points: &[[f64; 2]]) -> Vec<f64> {
        let j = self.clean_component();
        self.posteriors(points).into_iter().map(|p| p[j]).collect()
    }
}

fn covariance2(points: &[[f64; 2]], resp: Option<(&[[f64; 2]], usize)>, mean: [f64; 2]) -> [[f64; 2]; 2] {
    let mut s = [[0.0; 2]; 2];
    let mut wsum = 0.0;
    for (i, x) in points.iter().enumerate() {
        let w = resp.map_or(1.0, |(r, k)| r[i][k]);
        let d = [x[0] - mean[0], x[1] - mean[1]];
        s[0][0] += w * d[0] * d[0];
        s[0][1] += w * d[0] * d[1];
        s[1][1] += w * d[1] * d[1];
        wsum += w;
    }
    let inv = if wsum > 0.0 { 1.0 / wsum } else { 0.0 };
    [[s[0][0] * inv, s[0][1] * inv], [s[0][1] * inv, s[1][1] * inv]]
}

fn floored(mut c: [[f64; 2]; 2], floor: f64) -> [[f64; 2]; 2] {
    c[0][0] += floor;
    c[1][1] += floor;
    c
}

/// Smallest weight a component may take so its log stays finite.
const WEIGHT_FLOOR: f64 = 1e-12;

/// EM for a two-component 2D mixture. Initial means are the coordinate-wise
/// 10th and 90th percentile points, weights are equal and both components
/// share the population covariance.
pub fn fit_gmm2d(points: &[[f64; 2]], opts: &EmOptions) -> Result<GmmFit<Gmm2d>> {
    let n = points.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 points, got {n}")));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GMM input".into()));
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(Error::Degenerate("all points are identical".into()));
    }
    let xs = sorted_copy(points.iter().map(|p| p[0]));
    let ys = sorted_copy(points.iter().map(|p| p[1]));
    let mean = [xs.iter().sum::<f64>() / n as f64, ys.iter().sum::<f64>() / n as f64];
    let shared = floored(covariance2(points, None, mean), opts.cov_floor);
    let mut model = Gmm2d {
        components: [
            Gaussian2 {
                mean: [quantile(&xs, 0.1), quantile(&ys, 0.1)],
                cov: shared,
                weight: 0.5,
            },
            Gaussian2 {
                mean: [quantile(&xs, 0.9), quantile(&ys, 0.9)],
                cov: shared,
                weight: 0.5,
            },
        ],
    };
    let mut history = vec![model.log_likelihood(points)];
    for _ in 0..opts.max_iters {
        let resp = model.posteriors(points);
        for k in 0..2 {
            let nk: f64 = resp.iter().map(|r| r[k]).sum();
            if nk <= 0.0 {
                model.components[k].weight = WEIGHT_FLOOR;
                continue;
            }
            let mut mu = [0.0; 2];
            for (x, r) in points.iter().zip(&resp) {
                mu[0] += r[k] * x[0];
                mu[1] += r[k] * x[1];
            }
            mu = [mu[0] / nk, mu[1] / nk];
            let cov = floored(covariance2(points, Some((&resp, k)), mu), opts.cov_floor);
            model.components[k] = Gaussian2 {
                mean: mu,
                cov,
                weight: (nk / n as f64).max(WEIGHT_FLOOR),
            };
        }
        let wsum = model.components[0].weight + model.components[1].weight;
        for c in &mut model.components {
            c.weight /= wsum;
        }
        let ll = model.log_likelihood(points);
        let gain = ll - history.last().copied().unwrap_or(f64::NEG_INFINITY);
        history.push(ll);
        if gain < opts.tol {
            break;
        }
    }
    Ok(GmmFit {
        model,
        log_likelihood: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian1 {
    pub mean: f64,
    pub var: f64,
    pub weight: f64,
}

impl Gaussian1 {
    pub fn log_density(&self, x: f64) -> f64 {
        -0.5 * (2.0 * std::f64::consts::PI * self.var).ln() - 0.5 * (x - self.mean).powi(2) / self.var
    }
}

/// Two-component univariate mixture, the ablation baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gmm1d {
    pub components: [Gaussian1; 2],
}

impl Gmm1d {
    fn log_joint(&self, x: f64) -> [f64; 2] {
        let [g0, g1] = &self.components;
        [
            g0.weight.ln() + g0.log_density(x),
            g1.weight.ln() + g1.log_density(x),
        ]
    }

    pub fn posteriors(&self, values: &[f64]) -> Vec<[f64; 2]> {
        values
            .iter()
            .map(|&x| {
                let [a, b] = self.log_joint(x);
                let p0 = (a - log_sum_exp2(a, b)).exp();
                [p0, 1.0 - p0]
            })
            .collect()
    }

    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .map(|&x| {
                let [a, b] = self.log_joint(x);
                log_sum_exp2(a, b)
            })
            .sum()
    }

    /// The component with the smaller mean is clean; ties go to 0.
    pub fn clean_component(&self) -> usize {
        usize::from(self.components[1].mean < self.components[0].mean)
    }

    pub fn clean_posterior(&self, values: &[f64]) -> Vec<f64> {
        let j = self.clean_component();
        self.posteriors(values).into_iter().map(|p| p[j]).collect()
    }
}

/// EM for a two-component 1D mixture, initialised at the 10th and 90th
/// percentiles with the population variance.
pub fn fit_gmm1d(values: &[f64], opts: &EmOptions) -> Result<GmmFit<Gmm1d>> {
    let n = values.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 values, got {n}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GMM input".into()));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Err(Error::Degenerate("all values are identical".into()));
    }
    let sorted = sorted_copy(values.iter().copied());
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64 + opts.cov_floor;
    let mut model = Gmm1d {
        components: [
            Gaussian1 {
                mean: quantile(&sorted, 0.1),
                var,
                weight: 0.5,
            },
            Gaussian1 {
                mean: quantile(&sorted, 0.9),
                var,
                weight: 0.5,
            },
        ],
    };
    let mut history = vec![model.log_likelihood(values)];
    for _ in 0..opts.max_iters {
        let resp = model.posteriors(values);
        for k in 0..2 {
            let nk: f64 = resp.iter().map(|r| r[k]).sum();
            if nk <= 0.0 {
                model.components[k].weight = WEIGHT_FLOOR;
                continue;
            }
            let mu = values.iter().zip(&resp).map(|(x, r)| r[k] * x).sum::<f64>() / nk;
            let var = values
                .iter()
                .zip(&resp)
                .map(|(x, r)| r[k] * (x - mu).powi(2))
                .sum::<f64>()
                / nk
                + opts.cov_floor;
            model.components[k] = Gaussian1 {
                mean: mu,
                var,
                weight: (nk / n as f64).max(WEIGHT_FLOOR),
            };
        }
        let wsum = model.components[0].weight + model.components[1].weight;
        for c in &mut model.components {
            c.weight /= wsum;
        }
        let ll = model.log_likelihood(values);
        let gain = ll - history.last().copied().unwrap_or(f64::NEG_INFINITY);
        history.push(ll);
        if gain < opts.tol {
            break;
        }
    }
    Ok(GmmFit {
        model,
        log_likelihood: history,
    })
}

/// Labelled (clean) and unlabelled (noisy) index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub clean_probs: Vec<f64>,
    pub clean: Vec<usize>,
    pub noisy: Vec<usize>,
    pub threshold: f64,
}

impl Partition {
    pub fn is_clean(&self, i: usize) -> bool {
        self.clean_probs[i] > self.threshold
    }
}

/// `clean = { i : w_i > threshold }`, everything else is noisy.
pub fn partition(w: &[f64], threshold: f64) -> Partition {
    let (clean, noisy) = (0..w.len()).partition(|&i| w[i] > threshold);
    Partition {
        clean_probs: w.to_vec(),
        clean,
        noisy,
        threshold,
    }
}
