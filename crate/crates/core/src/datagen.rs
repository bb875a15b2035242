//! Synthetic class-blob datasets, label noise injection and feature-space
//! augmentations.
//!
//! Ground-truth labels travel with every [`Dataset`] but are only read by
//! evaluation and diagnostics code.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::rng;
use crate::{Error, Result};

/// Feature matrix with noisy (training) labels and held-aside true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub noisy_labels: Vec<usize>,
    pub true_labels: Vec<usize>,
    pub num_classes: usize,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.noisy_labels.len() != n || self.true_labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} noisy / {} true labels",
                n,
                self.noisy_labels.len(),
                self.true_labels.len()
            )));
        }
        if let Some(&bad) = self
            .noisy_labels
            .iter()
            .chain(&self.true_labels)
            .find(|&&y| y >= self.num_classes)
        {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside [0, {})",
                self.num_classes
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(())
    }

    /// Fraction of samples whose noisy label differs from the true label.
    pub fn realized_noise(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let flipped = self
            .noisy_labels
            .iter()
            .zip(&self.true_labels)
            .filter(|(a, b)| a != b)
            .count();
        flipped as f64 / self.len() as f64
    }

    /// Per-sample clean mask (noisy label equals true label). Diagnostics only.
    pub fn clean_mask(&self) -> Vec<bool> {
        self.noisy_labels
            .iter()
            .zip(&self.true_labels)
            .map(|(a, b)| a == b)
            .collect()
    }

    /// Rows selected by `idx`, labels carried along.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), idx),
            noisy_labels: idx.iter().map(|&i| self.noisy_labels[i]).collect(),
            true_labels: idx.iter().map(|&i| self.true_labels[i]).collect(),
            num_classes: self.num_classes,
            seed: self.seed,
        }
    }

    /// CSV with header `f0,…,f{d-1},y_noisy,y_true`, one row per sample.
    /// Floats use the shortest representation that round-trips exactly.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::with_capacity(self.len() * (d + 2) * 12);
        for j in 0..d {
            let _ = write!(out, "f{j},");
        }
        out.push_str("y_noisy,y_true\n");
        for (i, row) in self.features.outer_iter().enumerate() {
            for v in row {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{},{}", self.noisy_labels[i], self.true_labels[i]);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses the CSV written by [`Dataset::to_csv`]. When `num_classes` is
    /// `None` it is inferred as one past the largest label.
    pub fn from_csv(text: &str, num_classes: Option<usize>, origin: &Path) -> Result<Dataset> {
        let perr = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            msg,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| perr("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[cols.len() - 2] != "y_noisy" || cols[cols.len() - 1] != "y_true" {
            return Err(perr(format!("unexpected header `{header}`")));
        }
        let d = cols.len() - 2;
        for (j, c) in cols[..d].iter().enumerate() {
            if *c != format!("f{j}") {
                return Err(perr(format!("column {j} should be f{j}, found `{c}`")));
            }
        }
        let mut feats = Vec::new();
        let mut noisy = Vec::new();
        let mut truth = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 2 {
                return Err(perr(format!(
                    "row {} has {} fields, expected {}",
                    lineno + 1,
                    fields.len(),
                    d + 2
                )));
            }
            for f in &fields[..d] {
                feats.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| perr(format!("row {}: {e}", lineno + 1)))?,
                );
            }
            let lab = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| perr(format!("row {}: {e}", lineno + 1)))
            };
            noisy.push(lab(fields[d])?);
            truth.push(lab(fields[d + 1])?);
        }
        let n = noisy.len();
        let inferred = noisy.iter().chain(&truth).max().map_or(0, |m| m + 1);
        let ds = Dataset {
            features: Array2::from_shape_vec((n, d), feats).map_err(|e| perr(e.to_string()))?,
            noisy_labels: noisy,
            true_labels: truth,
            num_classes: num_classes.unwrap_or(inferred),
            seed: 0,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn read_csv(path: &Path, num_classes: Option<usize>) -> Result<Dataset> {
        let text = std::fs::read_to_string(path)?;
        Dataset::from_csv(&text, num_classes, path)
    }

    /// SHA-256 of the canonical CSV encoding, hex encoded.
    pub fn sha256(&self) -> String {
        Sha256::digest(self.to_csv().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Isotropic Gaussian class blobs around fixed centroids.
#[derive(Debug, Clone)]
pub struct Blobs {
    pub centroids: Array2<f64>,
    pub spread: f64,
}

impl Blobs {
    /// Centroids are `separation / sqrt(2)` times random orthonormal
    /// directions when `C <= dim`, so every pair sits exactly `separation`
    /// apart. With more classes than dimensions the directions are random
    /// unit vectors and the separation only holds in expectation.
    pub fn new(
        num_classes: usize,
        dim: usize,
        separation: f64,
        spread: f64,
        seed: u64,
    ) -> Result<Blobs> {
        if num_classes < 1 {
            return Err(Error::InvalidArgument("need at least one class".into()));
        }
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("dim must be >= 2, got {dim}")));
        }
        if !(separation > 0.0) || !(spread > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "separation ({separation}) and spread ({spread}) must be positive"
            )));
        }
        let mut r = rng::stream(seed, "centroids", &[]);
        let scale = separation / std::f64::consts::SQRT_2;
        let mut centroids = Array2::<f64>::zeros((num_classes, dim));
        for k in 0..num_classes {
            let mut v: Array1<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
            if k < dim {
                for prev in 0..k {
                    let u = centroids.row(prev).to_owned() / scale;
                    let proj = v.dot(&u);
                    v.scaled_add(-proj, &u);
                }
            }
            let norm = v.dot(&v).sqrt();
            centroids.row_mut(k).assign(&(v * (scale / norm)));
        }
        Ok(Blobs { centroids, spread })
    }

    pub fn num_classes(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    /// Draws `n_per_class` samples per class, class-major row order.
    pub fn sample(&self, n_per_class: usize, seed: u64) -> Result<Dataset> {
        if n_per_class < 1 {
            return Err(Error::InvalidArgument("n_per_class must be >= 1".into()));
        }
        let (c, d) = self.centroids.dim();
        let n = c * n_per_class;
        let mut r = rng::stream(seed, "blob-samples", &[]);
        let mut features = Array2::<f64>::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        for k in 0..c {
            for s in 0..n_per_class {
                let i = k * n_per_class + s;
                let mut row = features.row_mut(i);
                for (j, v) in row.iter_mut().enumerate() {
                    let z: f64 = r.sample(StandardNormal);
                    *v = self.centroids[[k, j]] + self.spread * z;
                }
                labels.push(k);
            }
        }
        Ok(Dataset {
            features,
            noisy_labels: labels.clone(),
            true_labels: labels,
            num_classes: c,
            seed,
        })
    }

    /// Maps each class to its nearest other centroid (ties to the lowest
    /// index). Requires at least two classes.
    pub fn nearest_other_mapping(&self) -> Result<Vec<usize>> {
        let c = self.num_classes();
        if c < 2 {
            return Err(Error::InvalidArgument(
                "asymmetric mapping needs at least two classes".into(),
            ));
        }
        Ok((0..c)
            .map(|k| {
                let ck = self.centroids.row(k);
                let mut best = (f64::INFINITY, usize::MAX);
                for j in (0..c).filter(|&j| j != k) {
                    let diff = &ck - &self.centroids.row(j);
                    let d2 = diff.dot(&diff);
                    if d2 < best.0 {
                        best = (d2, j);
                    }
                }
                best.1
            })
            .collect())
    }
}

/// `C` classes of `n_per_class` isotropic samples; noisy labels start equal
/// to the true labels.
pub fn make_blobs(
    num_classes: usize,
    n_per_class: usize,
    dim: usize,
    separation: f64,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    Blobs::new(num_classes, dim, separation, spread, seed)?.sample(n_per_class, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Symmetric,
    Asymmetric,
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::Symmetric => "symmetric",
            NoiseKind::Asymmetric => "asymmetric",
        })
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" | "sym" => Ok(NoiseKind::Symmetric),
            "asymmetric" | "asym" => Ok(NoiseKind::Asymmetric),
            other => Err(Error::Config(format!("unknown noise kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub ratio: f64,
    /// Class map for asymmetric noise; ignored for symmetric noise.
    pub mapping: Vec<usize>,
}

impl NoiseSpec {
    pub fn symmetric(ratio: f64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Symmetric,
            ratio,
            mapping: Vec::new(),
        }
    }

    pub fn asymmetric(ratio: f64, mapping: Vec<usize>) -> Self {
        NoiseSpec {
            kind: NoiseKind::Asymmetric,
            ratio,
            mapping,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::InvalidArgument(format!(
                "noise ratio {} outside [0, 1]",
                self.ratio
            )));
        }
        if self.kind == NoiseKind::Asymmetric {
            if self.mapping.len() != num_classes {
                return Err(Error::InvalidArgument(format!(
                    "mapping has {} entries for {num_classes} classes",
                    self.mapping.len()
                )));
            }
            for (k, &m) in self.mapping.iter().enumerate() {
                if m == k || m >= num_classes {
                    return Err(Error::InvalidArgument(format!(
                        "mapping sends class {k} to {m}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Corrupts labels starting from the true labels. Symmetric noise redraws a
/// selected label uniformly over all `C` classes (possibly its own), so the
/// realized flip rate is `r (C-1) / C`.
pub fn inject_noise(ds: &Dataset, spec: &NoiseSpec, seed: u64) -> Result<Dataset> {
    ds.validate()?;
    spec.validate(ds.num_classes)?;
    let mut r = rng::stream(seed, "label-noise", &[]);
    let noisy = ds
        .true_labels
        .iter()
        .map(|&y| {
            let selected = r.random::<f64>() < spec.ratio;
            if !selected {
                return y;
            }
            match spec.kind {
                NoiseKind::Symmetric => r.random_range(0..ds.num_classes),
                NoiseKind::Asymmetric => spec.mapping[y],
            }
        })
        .collect();
    Ok(Dataset {
        noisy_labels: noisy,
        ..ds.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSpec {
    pub weak_sigma: f64,
    pub strong_sigma: f64,
    pub strong_dropout_p: f64,
    pub num_weak: usize,
    pub num_strong: usize,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            weak_sigma: 0.1,
            strong_sigma: 0.5,
            strong_dropout_p: 0.1,
            num_weak: 2,
            num_strong: 2,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.weak_sigma && self.weak_sigma <= self.strong_sigma) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= weak_sigma ({}) <= strong_sigma ({})",
                self.weak_sigma, self.strong_sigma
            )));
        }
        if !(0.0..1.0).contains(&self.strong_dropout_p) {
            return Err(Error::InvalidArgument(format!(
                "strong_dropout_p {} outside [0, 1)",
                self.strong_dropout_p
            )));
        }
        if self.num_weak < 1 || self.num_strong < 2 {
            return Err(Error::InvalidArgument(
                "need at least one weak and two strong views".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strength {
    Weak,
    Strong,
}

/// Gaussian jitter; the strong variant also zeroes coordinates with
/// probability `strong_dropout_p`.
pub fn augment<R: Rng + ?Sized>(
    x: ArrayView1<f64>,
    spec: &AugmentSpec,
    strength: Strength,
    rng: &mut R,
) -> Array1<f64> {
    let mut out = x.to_owned();
    augment_in_place(out.view_mut().into_slice().expect("owned array is contiguous"), spec, strength, rng);
    out
}

/// Row-wise [`augment`] over a batch.
pub fn augment_batch<R: Rng + ?Sized>(
    x: ArrayView2<f64>,
    spec: &AugmentSpec,
    strength: Strength,
    rng: &mut R,
) -> Array2<f64> {
    let mut out = x.as_standard_layout().into_owned();
    for mut row in out.outer_iter_mut() {
        augment_in_place(row.as_slice_mut().expect("standard layout"), spec, strength, rng);
    }
    out
}

fn augment_in_place<R: Rng + ?Sized>(
    x: &mut [f64],
    spec: &AugmentSpec,
    strength: Strength,
    rng: &mut R,
) {
    let sigma = match strength {
        Strength::Weak => spec.weak_sigma,
        Strength::Strong => spec.strong_sigma,
    };
    if sigma > 0.0 {
        for v in x.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += sigma * z;
        }
    }
    if strength == Strength::Strong && spec.strong_dropout_p > 0.0 {
        for v in x.iter_mut() {
            if rng.random::<f64>() < spec.strong_dropout_p {
                *v = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nearest_centroid_accuracy(ds: &Dataset) -> f64 {
        let c = ds.num_classes;
        let d = ds.dim();
        let mut means = Array2::<f64>::zeros((c, d));
        let mut counts = vec![0usize; c];
        for (row, &y) in ds.features.outer_iter().zip(&ds.true_labels) {
            let mut m = means.row_mut(y);
            m += &row;
            counts[y] += 1;
        }
        for k in 0..c {
            means.row_mut(k).mapv_inplace(|v| v / counts[k] as f64);
        }
        let hits = ds
            .features
            .outer_iter()
            .zip(&ds.true_labels)
            .filter(|(row, &y)| {
                let pred = (0..c)
                    .min_by(|&a, &b| {
                        let da = (&means.row(a) - row).mapv(|v| v * v).sum();
                        let db = (&means.row(b) - row).mapv(|v| v * v).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                pred == y
            })
            .count();
        hits as f64 / ds.len() as f64
    }

    #[test]
    fn single_class_blobs() {
        let ds = make_blobs(1, 5, 2, 1.0, 1.0, 3).unwrap();
        assert_eq!(ds.len(), 5);
        assert!(ds.noisy_labels.iter().all(|&y| y == 0));
        assert_eq!(ds.noisy_labels, ds.true_labels);
    }

    #[test]
    fn blobs_are_deterministic() {
        let a = make_blobs(3, 20, 4, 5.0, 1.0, 11).unwrap();
        let b = make_blobs(3, 20, 4, 5.0, 1.0, 11).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let c = make_blobs(3, 20, 4, 5.0, 1.0, 12).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn well_separated_blobs_are_nearest_centroid_separable() {
        let ds = make_blobs(4, 200, 8, 10.0, 1.0, 5).unwrap();
        assert!(nearest_centroid_accuracy(&ds) >= 0.99);
    }

    #[test]
    fn centroids_are_exactly_separated_when_classes_fit() {
        let b = Blobs::new(5, 8, 6.0, 1.0, 2).unwrap();
        for i in 0..5 {
            for j in 0..i {
                let diff = &b.centroids.row(i) - &b.centroids.row(j);
                assert!((diff.dot(&diff).sqrt() - 6.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn make_blobs_rejects_bad_sizes() {
        assert!(make_blobs(0, 5, 2, 1.0, 1.0, 0).is_err());
        assert!(make_blobs(2, 0, 2, 1.0, 1.0, 0).is_err());
        assert!(make_blobs(2, 5, 1, 1.0, 1.0, 0).is_err());
        assert!(make_blobs(2, 5, 2, 0.0, 1.0, 0).is_err());
        assert!(make_blobs(2, 5, 2, 1.0, -1.0, 0).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let ds = make_blobs(4, 50, 4, 3.0, 1.0, 1).unwrap();
        let noisy = inject_noise(&ds, &NoiseSpec::symmetric(0.0), 9).unwrap();
        assert_eq!(noisy.noisy_labels, noisy.true_labels);
    }

    #[test]
    fn full_asymmetric_noise_applies_mapping() {
        let ds = make_blobs(4, 30, 4, 3.0, 1.0, 1).unwrap();
        let cyclic = vec![1, 2, 3, 0];
        let noisy = inject_noise(&ds, &NoiseSpec::asymmetric(1.0, cyclic.clone()), 2).unwrap();
        for (n, t) in noisy.noisy_labels.iter().zip(&noisy.true_labels) {
            assert_eq!(*n, cyclic[*t]);
        }
        assert_eq!(noisy.true_labels, ds.true_labels);
    }

    #[test]
    fn asymmetric_mapping_to_self_is_rejected() {
        let ds = make_blobs(3, 5, 2, 3.0, 1.0, 1).unwrap();
        let spec = NoiseSpec::asymmetric(0.5, vec![1, 1, 0]);
        assert!(inject_noise(&ds, &spec, 0).is_err());
    }

    #[test]
    fn full_symmetric_noise_flips_nine_tenths() {
        let ds = make_blobs(10, 1000, 10, 3.0, 1.0, 4).unwrap();
        let noisy = inject_noise(&ds, &NoiseSpec::symmetric(1.0), 8).unwrap();
        let flip = noisy.realized_noise();
        assert!((flip - 0.9).abs() <= 0.02, "flip fraction {flip}");
    }

    #[test]
    fn symmetric_noise_marginal_passes_chi_square() {
        // Class 0 only: expected noisy marginal (1-r) onehot + r uniform.
        let c = 5;
        let r = 0.4;
        let n = 20_000;
        let ds = Dataset {
            features: Array2::zeros((n, 2)),
            noisy_labels: vec![0; n],
            true_labels: vec![0; n],
            num_classes: c,
            seed: 0,
        };
        let noisy = inject_noise(&ds, &NoiseSpec::symmetric(r), 21).unwrap();
        let mut counts = vec![0f64; c];
        for &y in &noisy.noisy_labels {
            counts[y] += 1.0;
        }
        let chi2: f64 = (0..c)
            .map(|k| {
                let p = r / c as f64 + if k == 0 { 1.0 - r } else { 0.0 };
                let e = p * n as f64;
                (counts[k] - e).powi(2) / e
            })
            .sum();
        // 4 degrees of freedom, 99.9% quantile.
        assert!(chi2 < 18.47, "chi2 = {chi2}");
    }

    #[test]
    fn nearest_other_mapping_never_maps_to_self() {
        let b = Blobs::new(6, 3, 4.0, 1.0, 9).unwrap();
        let m = b.nearest_other_mapping().unwrap();
        for (k, &t) in m.iter().enumerate() {
            assert_ne!(k, t);
        }
        NoiseSpec::asymmetric(0.4, m).validate(6).unwrap();
    }

    #[test]
    fn weak_augment_with_zero_sigma_is_identity() {
        let spec = AugmentSpec {
            weak_sigma: 0.0,
            ..AugmentSpec::default()
        };
        let x = Array1::from(vec![1.0, -2.0, 3.5]);
        let mut r = rng::stream(0, "t", &[]);
        assert_eq!(augment(x.view(), &spec, Strength::Weak, &mut r), x);
    }

    #[test]
    fn strong_augment_near_full_dropout_approaches_zero() {
        let spec = AugmentSpec {
            weak_sigma: 0.0,
            strong_sigma: 0.0,
            strong_dropout_p: 0.999_999,
            ..AugmentSpec::default()
        };
        let x = Array1::from_elem(64, 3.0);
        let mut r = rng::stream(1, "t", &[]);
        let out = augment(x.view(), &spec, Strength::Strong, &mut r);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weak_jitter_mean_squared_displacement() {
        let spec = AugmentSpec {
            weak_sigma: 0.5,
            ..AugmentSpec::default()
        };
        let x = Array1::zeros(64);
        let mut r = rng::stream(2, "t", &[]);
        let draws = 10_000;
        let msd: f64 = (0..draws)
            .map(|_| {
                let y = augment(x.view(), &spec, Strength::Weak, &mut r);
                y.dot(&y)
            })
            .sum::<f64>()
            / draws as f64;
        let expect = 64.0 * 0.25;
        assert!((msd - expect).abs() <= 0.05 * expect, "msd {msd}");
    }

    #[test]
    fn augment_spec_validation() {
        let bad = AugmentSpec {
            weak_sigma: 1.0,
            strong_sigma: 0.5,
            ..AugmentSpec::default()
        };
        assert!(bad.validate().is_err());
        assert!(AugmentSpec::default().validate().is_ok());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = make_blobs(3, 7, 5, 2.0, 0.7, 13).unwrap();
        let ds = inject_noise(&ds, &NoiseSpec::symmetric(0.5), 1).unwrap();
        let back = Dataset::from_csv(&ds.to_csv(), Some(3), Path::new("mem")).unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.noisy_labels, ds.noisy_labels);
        assert_eq!(back.true_labels, ds.true_labels);
        assert!(ds.to_csv().starts_with("f0,f1,f2,f3,f4,y_noisy,y_true\n"));
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(Dataset::from_csv("a,b,c\n1,0,0\n", None, Path::new("x")).is_err());
    }
}
