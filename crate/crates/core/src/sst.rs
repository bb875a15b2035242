//! Semi-supervised objective: co-refined and co-guessed pseudo targets,
//! sharpening, MixUp and the labelled-CE / unlabelled-MSE / prior
//! regulariser loss.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::net::softmax_backward;
use crate::{Error, Result};

/// `p^(1/T) / sum p^(1/T)`
pub fn sharpen(p: ArrayView1<f64>, temperature: f64) -> Array1<f64> {
    let inv = 1.0 / temperature;
    let mut out = p.mapv(|v| v.powf(inv));
    let s = out.sum();
    if s > 0.0 {
        out /= s;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSource {
    RefinedLabeled,
    GuessedUnlabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoTarget {
    pub target: Array1<f64>,
    pub source: TargetSource,
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sharpening temperature {t}")))
    }
}

/// `Sharpen(w onehot(y) + (1 - w) mean_rows(t_weak); T)` where the rows of
/// `t_weak` are this network's predictions under the weak augmentations.
pub fn refine_labeled(
    label: usize,
    clean_prob: f64,
    t_weak: ArrayView2<f64>,
    temperature: f64,
) -> Result<PseudoTarget> {
    check_temperature(temperature)?;
    if t_weak.nrows() == 0 || label >= t_weak.ncols() {
        return Err(Error::InvalidArgument(
            "need at least one prediction and a label in range".into(),
        ));
    }
    let mut mix = t_weak.mean_axis(Axis(0)).expect("nonempty") * (1.0 - clean_prob);
    mix[label] += clean_prob;
    Ok(PseudoTarget {
        target: sharpen(mix.view(), temperature),
        source: TargetSource::RefinedLabeled,
    })
}

/// `Sharpen(mean over every augmentation of every network; T)`.
pub fn guess_unlabeled(t_all: ArrayView2<f64>, temperature: f64) -> Result<PseudoTarget> {
    check_temperature(temperature)?;
    let mean = t_all
        .mean_axis(Axis(0))
        .ok_or_else(|| Error::InvalidArgument("no predictions to average".into()))?;
    Ok(PseudoTarget {
        target: sharpen(mean.view(), temperature),
        source: TargetSource::GuessedUnlabeled,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedExamples {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub lambdas: Vec<f64>,
    pub perm: Vec<usize>,
}

/// Deterministic core of MixUp: row `i` becomes
/// `lambda_i a_i + (1 - lambda_i) a_perm(i)` for features and targets.
pub fn mixup_with(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    lambdas: &[f64],
    perm: &[usize],
) -> Result<MixedExamples> {
    let n = x.nrows();
    if y.nrows() != n || lambdas.len() != n || perm.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "mixup over {n} rows with {} targets, {} lambdas, {} partners",
            y.nrows(),
            lambdas.len(),
            perm.len()
        )));
    }
    let mut mx = x.to_owned();
    let mut my = y.to_owned();
    for i in 0..n {
        let lam = lambdas[i];
        let j = perm[i];
        mx.row_mut(i)
            .zip_mut_with(&x.row(j), |a, &b| *a = lam * *a + (1.0 - lam) * b);
        my.row_mut(i)
            .zip_mut_with(&y.row(j), |a, &b| *a = lam * *a + (1.0 - lam) * b);
    }
    Ok(MixedExamples {
        x: mx,
        y: my,
        lambdas: lambdas.to_vec(),
        perm: perm.to_vec(),
    })
}

/// MixUp with one `Beta(beta, beta)` draw per row and a uniform random
/// partner permutation. `max_lambda` applies `lambda = max(lambda, 1 - lambda)`.
pub fn mixup<R: Rng + ?Sized>(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    beta: f64,
    max_lambda: bool,
    rng: &mut R,
) -> Result<MixedExamples> {
    let dist = Beta::new(beta, beta)
        .map_err(|e| Error::InvalidArgument(format!("beta {beta}: {e}")))?;
    let n = x.nrows();
    let lambdas: Vec<f64> = (0..n)
        .map(|_| {
            let l: f64 = dist.sample(rng);
            if max_lambda {
                l.max(1.0 - l)
            } else {
                l
            }
        })
        .collect();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    mixup_with(x, y, &lambdas, &perm)
}

/// Mean hard-label cross-entropy on logits and its gradient.
pub fn cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (n, c) = logits.dim();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{} labels for {n} rows", labels.len())));
    }
    if n == 0 {
        return Ok((0.0, Array2::zeros((0, c))));
    }
    let mut grad = Array2::zeros((n, c));
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let z: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        loss += m + z.ln() - row[y];
        for k in 0..c {
            grad[[i, k]] = (row[k] - m).exp() / z / n as f64;
        }
        grad[[i, y]] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}

/// `KL(uniform || mean prediction)`, zero iff the mean is uniform.
pub fn prior_regularizer(probs: ArrayView2<f64>) -> f64 {
    let Some(mean) = probs.mean_axis(Axis(0)) else {
        return 0.0;
    };
    let pi = 1.0 / mean.len() as f64;
    mean.iter().map(|&m| pi * (pi / m).ln()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SstTerms {
    pub ce: f64,
    pub mse: f64,
    pub reg: f64,
    pub total: f64,
}

/// Loss terms plus gradients on the logits of both mixed pools.
#[derive(Debug, Clone)]
pub struct SstOut {
    pub terms: SstTerms,
    pub grad_labeled: Array2<f64>,
    pub grad_unlabeled: Array2<f64>,
}

fn log_softmax_rows(z: ArrayView2<f64>) -> Array2<f64> {
    let mut out = z.to_owned();
    for mut row in out.outer_iter_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Soft-target CE over the labelled mixed rows, `lambda_u`-weighted squared
/// error over the unlabelled mixed rows and the uniform-prior KL over the
/// union. An empty pool drops its term; both empty is an error.
pub fn sst_loss(
    labeled_logits: ArrayView2<f64>,
    labeled_targets: ArrayView2<f64>,
    unlabeled_logits: ArrayView2<f64>,
    unlabeled_targets: ArrayView2<f64>,
    lambda_u: f64,
) -> Result<SstOut> {
    let nx = labeled_logits.nrows();
    let nu = unlabeled_logits.nrows();
    if nx + nu == 0 {
        return Err(Error::InvalidArgument("both labelled and unlabelled sets are empty".into()));
    }
    if labeled_targets.dim() != labeled_logits.dim() || unlabeled_targets.dim() != unlabeled_logits.dim() {
        return Err(Error::DimensionMismatch("targets must match logits".into()));
    }
    let c = if nx > 0 { labeled_logits.ncols() } else { unlabeled_logits.ncols() };

    let log_tx = log_softmax_rows(labeled_logits);
    let tx = log_tx.mapv(f64::exp);
    let tu = log_softmax_rows(unlabeled_logits).mapv(f64::exp);

    let mut terms = SstTerms::default();
    let mut gx = Array2::<f64>::zeros((nx, c));
    let mut gu_t = Array2::<f64>::zeros((nu, c));

    if nx > 0 {
        terms.ce = -(&labeled_targets * &log_tx).sum() / nx as f64;
        for i in 0..nx {
            let mass = labeled_targets.row(i).sum();
            for k in 0..c {
                gx[[i, k]] = (tx[[i, k]] * mass - labeled_targets[[i, k]]) / nx as f64;
            }
        }
    }
    if nu > 0 {
        let diff = &tu - &unlabeled_targets;
        terms.mse = lambda_u * diff.mapv(|v| v * v).sum() / nu as f64;
        gu_t = diff * (2.0 * lambda_u / nu as f64);
    }

    // Prior regulariser over the union of both pools.
    let total_rows = (nx + nu) as f64;
    let mean = (tx.sum_axis(Axis(0)) + tu.sum_axis(Axis(0))) / total_rows;
    let pi = 1.0 / c as f64;
    terms.reg = mean.iter().map(|&m| pi * (pi / m).ln()).sum();
    let d_mean = mean.mapv(|m| -pi / m / total_rows);

    let mut gx_t = Array2::<f64>::zeros((nx, c));
    gx_t += &d_mean;
    gu_t += &d_mean;
    gx += &softmax_backward(&tx, &gx_t);
    let gu = softmax_backward(&tu, &gu_t);

    terms.total = terms.ce + terms.mse + terms.reg;
    Ok(SstOut {
        terms,
        grad_labeled: gx,
        grad_unlabeled: gu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;
    use rand::RngExt;

    fn close(a: ArrayView1<f64>, b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn sharpen_examples() {
        let p = array![0.8, 0.2];
        assert!(close(sharpen(p.view(), 1.0).view(), &[0.8, 0.2], 1e-15));
        let s = sharpen(p.view(), 0.5);
        assert!(close(s.view(), &[0.64 / 0.68, 0.04 / 0.68], 1e-12));
        assert!(close(s.view(), &[0.9412, 0.0588], 1e-4));
        let cold = sharpen(array![0.3, 0.45, 0.25].view(), 0.01);
        assert!(cold[1] > 1.0 - 1e-9);
    }

    #[test]
    fn refine_examples() {
        let t = array![[0.2, 0.8]];
        let r = refine_labeled(0, 1.0, t.view(), 0.5).unwrap();
        assert_eq!(r.target, array![1.0, 0.0]);
        let r = refine_labeled(0, 0.0, t.view(), 0.5).unwrap();
        assert!(close(r.target.view(), &[0.04 / 0.68, 0.64 / 0.68], 1e-12));
        let r = refine_labeled(0, 0.5, t.view(), 0.5).unwrap();
        assert!(close(r.target.view(), &[0.36 / 0.52, 0.16 / 0.52], 1e-12));
        assert!(close(r.target.view(), &[0.6923, 0.3077], 1e-4));
        assert_eq!(r.source, TargetSource::RefinedLabeled);
    }

    #[test]
    fn guess_examples() {
        let agree = array![[1.0, 0.0], [1.0, 0.0]];
        assert_eq!(guess_unlabeled(agree.view(), 0.5).unwrap().target, array![1.0, 0.0]);
        let split = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(guess_unlabeled(split.view(), 0.5).unwrap().target, array![0.5, 0.5]);

        let rows = array![[0.7, 0.2, 0.1], [0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.4, 0.4, 0.2]];
        let g = guess_unlabeled(rows.view(), 0.5).unwrap();
        let mut mean = [0.0; 3];
        for r in rows.outer_iter() {
            for k in 0..3 {
                mean[k] += r[k] / 4.0;
            }
        }
        let sq: Vec<f64> = mean.iter().map(|m| m * m).collect();
        let z: f64 = sq.iter().sum();
        let expect: Vec<f64> = sq.iter().map(|v| v / z).collect();
        assert!(close(g.target.view(), &expect, 1e-15));
        assert_eq!(g.source, TargetSource::GuessedUnlabeled);
    }

    #[test]
    fn mixup_forced_lambdas() {
        let x = array![[0.0, 2.0], [4.0, -2.0]];
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        let m = mixup_with(x.view(), y.view(), &[1.0, 1.0], &[1, 0]).unwrap();
        assert_eq!(m.x, x);
        assert_eq!(m.y, y);
        let m = mixup_with(x.view(), y.view(), &[0.5, 0.5], &[1, 0]).unwrap();
        assert_eq!(m.x, array![[2.0, 0.0], [2.0, 0.0]]);
        assert_eq!(m.y, array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn beta_lambda_mean_is_half() {
        let mut r = rng::stream(3, "mix", &[]);
        let n = 100_000;
        let x = Array2::<f64>::zeros((n, 1));
        let y = Array2::<f64>::zeros((n, 1));
        let m = mixup(x.view(), y.view(), 4.0, false, &mut r).unwrap();
        let mean = m.lambdas.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean lambda {mean}");
    }

    #[test]
    fn max_lambda_flag_keeps_the_larger_share() {
        let mut r = rng::stream(4, "mix", &[]);
        let x = Array2::<f64>::zeros((500, 1));
        let m = mixup(x.view(), x.view(), 0.75, true, &mut r).unwrap();
        assert!(m.lambdas.iter().all(|&l| l >= 0.5));
    }

    #[test]
    fn mixup_stays_in_the_hull_and_on_the_simplex() {
        let mut r = rng::stream(5, "mix", &[]);
        let x = Array2::from_shape_fn((20, 3), |_| r.random::<f64>() * 10.0 - 5.0);
        let mut y = Array2::from_shape_fn((20, 4), |_| r.random::<f64>());
        for mut row in y.outer_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        let m = mixup(x.view(), y.view(), 4.0, false, &mut r).unwrap();
        for i in 0..20 {
            let j = m.perm[i];
            for k in 0..3 {
                let (lo, hi) = (x[[i, k]].min(x[[j, k]]), x[[i, k]].max(x[[j, k]]));
                assert!(m.x[[i, k]] >= lo - 1e-12 && m.x[[i, k]] <= hi + 1e-12);
            }
            assert!((m.y.row(i).sum() - 1.0).abs() < 1e-12);
            assert!(m.y.row(i).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn perfect_fit_has_zero_loss() {
        // Uniform logits predict uniform; targets uniform.
        let z = Array2::<f64>::zeros((3, 4));
        let y = Array2::from_elem((3, 4), 0.25);
        let out = sst_loss(z.view(), y.view(), z.view(), y.view(), 1.0).unwrap();
        // CE against a uniform target at a uniform prediction is log C,
        // the entropy floor; MSE and the regulariser vanish.
        assert!((out.terms.ce - 4f64.ln()).abs() < 1e-12);
        assert_eq!(out.terms.mse, 0.0);
        assert!(out.terms.reg.abs() < 1e-15);

        // One-hot targets matched by near one-hot predictions on a balanced
        // batch: every term goes to zero.
        let big = 60.0;
        let zl = array![[big, 0.0], [0.0, big]];
        let yl = array![[1.0, 0.0], [0.0, 1.0]];
        let out = sst_loss(zl.view(), yl.view(), zl.view(), yl.view(), 1.0).unwrap();
        assert!(out.terms.total < 1e-20);
    }

    #[test]
    fn empty_unlabeled_pool_drops_the_mse_term() {
        let zl = array![[0.3, -0.2], [1.0, 0.5]];
        let yl = array![[0.9, 0.1], [0.2, 0.8]];
        let empty = Array2::<f64>::zeros((0, 2));
        let out = sst_loss(zl.view(), yl.view(), empty.view(), empty.view(), 1.0).unwrap();
        assert_eq!(out.terms.mse, 0.0);
        assert!((out.terms.total - out.terms.ce - out.terms.reg).abs() < 1e-15);
        assert!(sst_loss(empty.view(), empty.view(), empty.view(), empty.view(), 1.0).is_err());
    }

    #[test]
    fn single_labeled_sample_hand_value() {
        let z = array![[0.0, 0.0]];
        let y = array![[1.0, 0.0]];
        let empty = Array2::<f64>::zeros((0, 2));
        let out = sst_loss(z.view(), y.view(), empty.view(), empty.view(), 1.0).unwrap();
        assert!((out.terms.ce - 2f64.ln()).abs() < 1e-15);
        // Mean prediction is uniform, so the regulariser is 0.
        assert!(out.terms.reg.abs() < 1e-15);

        let z = array![[2f64.ln(), 0.0]];
        let out = sst_loss(z.view(), y.view(), empty.view(), empty.view(), 1.0).unwrap();
        // t = (2/3, 1/3): CE = ln 1.5, reg = 0.5 ln(0.5/(2/3)) + 0.5 ln(0.5/(1/3)).
        let reg = 0.5 * (0.75f64).ln() + 0.5 * (1.5f64).ln();
        assert!((out.terms.ce - 1.5f64.ln()).abs() < 1e-15);
        assert!((out.terms.reg - reg).abs() < 1e-15);
    }

    #[test]
    fn prior_regularizer_is_nonnegative_and_zero_only_at_uniform() {
        let mut r = rng::stream(7, "reg", &[]);
        for _ in 0..200 {
            let mut t = Array2::from_shape_fn((5, 4), |_| r.random::<f64>() + 1e-3);
            for mut row in t.outer_iter_mut() {
                let s = row.sum();
                row /= s;
            }
            assert!(prior_regularizer(t.view()) > 0.0);
        }
        let balanced = array![[0.7, 0.3], [0.3, 0.7]];
        assert!(prior_regularizer(balanced.view()).abs() < 1e-15);
    }

    #[test]
    fn hard_cross_entropy_value() {
        let z = array![[0.0, 0.0, 0.0]];
        let (l, g) = cross_entropy(z.view(), &[2]).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-15);
        assert!((g[[0, 2]] + 2.0 / 3.0).abs() < 1e-15);
    }
}
