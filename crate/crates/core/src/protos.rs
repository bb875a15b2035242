//! Momentum class prototypes, prototype similarity, pseudo soft labels and
//! self-adaptive confidence thresholds.

use ndarray::{Array2, ArrayView2, Axis};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtoParams {
    /// EMA momentum for prototypes and thresholds.
    pub eta: f64,
    /// Similarity softmax temperature.
    pub tau_s: f64,
    /// Weight of the classifier prediction in the pseudo soft label.
    pub alpha: f64,
}

impl Default for ProtoParams {
    fn default() -> Self {
        ProtoParams {
            eta: 0.99,
            tau_s: 0.1,
            alpha: 0.5,
        }
    }
}

/// Prototype matrix (one unit-norm row per class) and thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtoState {
    pub prototypes: Array2<f64>,
    pub tau_g: f64,
    pub tau_c_tilde: Vec<f64>,
    pub params: ProtoParams,
}

impl ProtoState {
    /// Normalised per-class mean of the embeddings, using noisy labels.
    /// Thresholds start at `1/C`.
    pub fn init(
        q_all: ArrayView2<f64>,
        noisy_labels: &[usize],
        num_classes: usize,
        params: ProtoParams,
    ) -> Result<ProtoState> {
        if q_all.nrows() != noisy_labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} embeddings, {} labels",
                q_all.nrows(),
                noisy_labels.len()
            )));
        }
        let d = q_all.ncols();
        let mut sums = Array2::<f64>::zeros((num_classes, d));
        let mut counts = vec![0usize; num_classes];
        for (row, &y) in q_all.outer_iter().zip(noisy_labels) {
            if y >= num_classes {
                return Err(Error::InvalidArgument(format!("label {y} >= {num_classes}")));
            }
            let mut s = sums.row_mut(y);
            s += &row;
            counts[y] += 1;
        }
        for (k, mut row) in sums.outer_iter_mut().enumerate() {
            if counts[k] == 0 {
                return Err(Error::EmptyClass(k));
            }
            let norm = row.dot(&row).sqrt() / counts[k] as f64;
            if norm < 1e-9 {
                return Err(Error::Degenerate(format!(
                    "embeddings of class {k} average to the zero vector"
                )));
            }
            let n = row.dot(&row).sqrt();
            row.mapv_inplace(|v| v / n);
        }
        let c0 = 1.0 / num_classes as f64;
        Ok(ProtoState {
            prototypes: sums,
            tau_g: c0,
            tau_c_tilde: vec![c0; num_classes],
            params,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.nrows()
    }

    /// `s_ik = softmax_k(<q_i, p_k> / tau_s)`
    pub fn similarity(&self, q: ArrayView2<f64>) -> Array2<f64> {
        let mut s = q.dot(&self.prototypes.t()) / self.params.tau_s;
        for mut row in s.outer_iter_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let z = row.sum();
            row.mapv_inplace(|v| v / z);
        }
        s
    }

    /// Derived class thresholds `tau_c^k = tau_c_tilde^k / max tau_c_tilde * tau_g`.
    pub fn class_thresholds(&self) -> Vec<f64> {
        let max = self
            .tau_c_tilde
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        self.tau_c_tilde
            .iter()
            .map(|&t| if max > 0.0 { t / max * self.tau_g } else { 0.0 })
            .collect()
    }

    /// One EMA step of the global and class thresholds from the epoch's
    /// pseudo soft labels.
    pub fn update_thresholds(&mut self, soft: ArrayView2<f64>) {
        let n = soft.nrows();
        if n == 0 {
            return;
        }
        let eta = self.params.eta;
        let mean_max = soft
            .outer_iter()
            .map(|row| row.fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
            .sum::<f64>()
            / n as f64;
        self.tau_g = eta * self.tau_g + (1.0 - eta) * mean_max;
        let class_mean = soft.mean_axis(Axis(0)).expect("nonempty");
        for (t, m) in self.tau_c_tilde.iter_mut().zip(class_mean.iter()) {
            *t = eta * *t + (1.0 - eta) * m;
        }
    }

    /// Samples whose top pseudo-label probability beats its class threshold,
    /// as `(index, argmax)` pairs in index order.
    pub fn confident_set(&self, soft: ArrayView2<f64>) -> Vec<(usize, usize)> {
        let thresholds = self.class_thresholds();
        soft.outer_iter()
            .enumerate()
            .filter_map(|(i, row)| {
                let (k, &p) = row
                    .iter()
                    .enumerate()
                    .fold((0, &f64::NEG_INFINITY), |best, cur| {
                        if cur.1 > best.1 {
                            cur
                        } else {
                            best
                        }
                    });
                (p > thresholds[k]).then_some((i, k))
            })
            .collect()
    }

    /// Sequential EMA: `p <- normalize(eta p + (1 - eta) normalize(q_i))`
    /// for every `(i, label)` in the given order.
    pub fn update_prototypes(&mut self, q: ArrayView2<f64>, confident: &[(usize, usize)]) {
        let eta = self.params.eta;
        for &(i, k) in confident {
            let qi = q.row(i);
            let qn = qi.dot(&qi).sqrt().max(1e-12);
            let mut p = self.prototypes.row_mut(k);
            p.zip_mut_with(&qi, |pv, &qv| *pv = eta * *pv + (1.0 - eta) * qv / qn);
            let pn = p.dot(&p).sqrt();
            if pn > 1e-12 {
                p.mapv_inplace(|v| v / pn);
            }
        }
    }
}

/// `alpha t + (1 - alpha) s`, row-wise.
pub fn pseudo_soft_label(t: ArrayView2<f64>, s: ArrayView2<f64>, alpha: f64) -> Array2<f64> {
    &t * alpha + &s * (1.0 - alpha)
}
