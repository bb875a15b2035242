//! Reliable negative sets and the contrastive losses built on them.
//!
//! Positives are the two strong views of the same sample; negatives for
//! anchor `i` (view 1) are second-view embeddings of the samples in its
//! reliable negative set. All embeddings are unit norm, so cosine
//! similarity is a dot product.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::{Error, Result};

/// Indices of the `kappa` largest entries, ties broken toward the lower
/// index. Returned in rank order.
pub fn topk_indices(t_row: ArrayView1<f64>, kappa: usize) -> Result<Vec<usize>> {
    let c = t_row.len();
    if kappa < 1 || kappa > c {
        return Err(Error::InvalidArgument(format!(
            "kappa {kappa} outside [1, {c}]"
        )));
    }
    let mut idx: Vec<usize> = (0..c).collect();
    // Stable sort keeps lower indices first among equal probabilities.
    idx.sort_by(|&a, &b| t_row[b].total_cmp(&t_row[a]));
    idx.truncate(kappa);
    Ok(idx)
}

/// Small class bitset; one bit per class.
#[derive(Debug, Clone, PartialEq, Eq)]
struct ClassMask(Vec<u64>);

impl ClassMask {
    fn new(num_classes: usize) -> Self {
        ClassMask(vec![0; num_classes.div_ceil(64)])
    }

    fn insert(&mut self, k: usize) {
        self.0[k / 64] |= 1 << (k % 64);
    }

    fn disjoint(&self, other: &ClassMask) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & b == 0)
    }
}

/// Per-anchor reliable negatives within one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeSets {
    pub sets: Vec<Vec<usize>>,
    /// 0 for the unfiltered (all other samples) sets.
    pub kappa: usize,
    pub used_labels: bool,
}

impl NegativeSets {
    /// Every other in-batch sample is a negative.
    pub fn all_pairs(batch: usize) -> Self {
        NegativeSets {
            sets: (0..batch)
                .map(|i| (0..batch).filter(|&j| j != i).collect())
                .collect(),
            kappa: 0,
            used_labels: false,
        }
    }

    pub fn batch_len(&self) -> usize {
        self.sets.len()
    }

    /// Number of selected ordered (anchor, negative) pairs.
    pub fn selected_pairs(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }
}

/// `N_i = { j != i : top_k(i) ∩ top_k(j) = ∅ }`; with `use_labels` each
/// top-k set is first extended by the sample's given label.
pub fn reliable_negative_set(
    t: ArrayView2<f64>,
    y: &[usize],
    kappa: usize,
    use_labels: bool,
) -> Result<NegativeSets> {
    let (b, c) = t.dim();
    if use_labels && y.len() != b {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for a batch of {b}",
            y.len()
        )));
    }
    let masks = (0..b)
        .map(|i| {
            let mut m = ClassMask::new(c);
            for k in topk_indices(t.row(i), kappa)? {
                m.insert(k);
            }
            if use_labels {
                if y[i] >= c {
                    return Err(Error::InvalidArgument(format!("label {} >= {c}", y[i])));
                }
                m.insert(y[i]);
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let sets = (0..b)
        .map(|i| {
            (0..b)
                .filter(|&j| j != i && masks[i].disjoint(&masks[j]))
                .collect()
        })
        .collect();
    Ok(NegativeSets {
        sets,
        kappa,
        used_labels: use_labels,
    })
}

/// Two strong views of the same samples plus the contrastive temperature.
#[derive(Debug, Clone, Copy)]
pub struct ContrastiveBatch<'a> {
    pub view1: ArrayView2<'a, f64>,
    pub view2: ArrayView2<'a, f64>,
    pub temperature: f64,
}

impl<'a> ContrastiveBatch<'a> {
    pub fn new(
        view1: ArrayView2<'a, f64>,
        view2: ArrayView2<'a, f64>,
        temperature: f64,
    ) -> Result<Self> {
        if view1.dim() != view2.dim() {
            return Err(Error::DimensionMismatch(format!(
                "views have shapes {:?} and {:?}",
                view1.dim(),
                view2.dim()
            )));
        }
        if !(temperature > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature {temperature}")));
        }
        for row in view1.outer_iter().chain(view2.outer_iter()) {
            let n = row.dot(&row).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "embedding norm {n} is not 1"
                )));
            }
        }
        Ok(ContrastiveBatch {
            view1,
            view2,
            temperature,
        })
    }

    pub fn len(&self) -> usize {
        self.view1.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `S[i, j] = <view1_i, view2_j> / tau`
    fn logits(&self) -> Array2<f64> {
        self.view1.dot(&self.view2.t()) / self.temperature
    }

    /// Chains a gradient on the logit matrix back to both views.
    fn pull_back(&self, d_logits: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let g1 = d_logits.dot(&self.view2) / self.temperature;
        let g2 = d_logits.t().dot(&self.view1) / self.temperature;
        (g1, g2)
    }
}

/// Loss value, per-anchor values and gradients with respect to both views.
#[derive(Debug, Clone)]
pub struct ContrastiveOut {
    pub loss: f64,
    /// The differentiated objective. Equals `loss` except for the flat
    /// form, where it is the mean relative-logit logsumexp.
    pub objective: f64,
    pub per_anchor: Vec<f64>,
    pub grad_view1: Array2<f64>,
    pub grad_view2: Array2<f64>,
}

fn check_sets(cb: &ContrastiveBatch, ns: &NegativeSets) -> Result<()> {
    let b = cb.len();
    if ns.batch_len() != b {
        return Err(Error::DimensionMismatch(format!(
            "negative sets for {} anchors, batch of {b}",
            ns.batch_len()
        )));
    }
    for (i, set) in ns.sets.iter().enumerate() {
        if set.iter().any(|&j| j >= b || j == i) {
            return Err(Error::InvalidArgument(format!(
                "negative set of anchor {i} has an invalid member"
            )));
        }
    }
    Ok(())
}

/// InfoNCE restricted to reliable negatives, averaged over all anchors.
/// Anchors with an empty set contribute zero.
pub fn plr_infonce(cb: &ContrastiveBatch, ns: &NegativeSets) -> Result<ContrastiveOut> {
    check_sets(cb, ns)?;
    let b = cb.len();
    let s = cb.logits();
    let mut ds = Array2::<f64>::zeros((b, b));
    let mut per_anchor = vec![0.0; b];
    let scale = 1.0 / b as f64;
    for (i, set) in ns.sets.iter().enumerate() {
        if set.is_empty() {
            continue;
        }
        let pos = s[[i, i]];
        let m = set.iter().fold(pos, |m, &j| m.max(s[[i, j]]));
        let e_pos = (pos - m).exp();
        let z = e_pos + set.iter().map(|&j| (s[[i, j]] - m).exp()).sum::<f64>();
        per_anchor[i] = z.ln() + m - pos;
        ds[[i, i]] = (e_pos / z - 1.0) * scale;
        for &j in set {
            ds[[i, j]] = (s[[i, j]] - m).exp() / z * scale;
        }
    }
    let loss = per_anchor.iter().sum::<f64>() * scale;
    let (grad_view1, grad_view2) = cb.pull_back(&ds);
    Ok(ContrastiveOut {
        loss,
        objective: loss,
        per_anchor,
        grad_view1,
        grad_view2,
    })
}

/// Self-normalised (flat) form. Per anchor with a nonempty set, with
/// `l_i = logsumexp_j (S_ij - S_ii)`, the value is `exp(l_i - sg(l_i)) = 1`
/// and the gradient is that of `l_i`.
pub fn plr_flatnce(cb: &ContrastiveBatch, ns: &NegativeSets) -> Result<ContrastiveOut> {
    check_sets(cb, ns)?;
    let b = cb.len();
    let s = cb.logits();
    let mut ds = Array2::<f64>::zeros((b, b));
    let mut per_anchor = vec![0.0; b];
    let mut lse_sum = 0.0;
    let scale = 1.0 / b as f64;
    for (i, set) in ns.sets.iter().enumerate() {
        if set.is_empty() {
            continue;
        }
        let pos = s[[i, i]];
        let m = set.iter().fold(f64::NEG_INFINITY, |m, &j| m.max(s[[i, j]] - pos));
        let z: f64 = set.iter().map(|&j| (s[[i, j]] - pos - m).exp()).sum();
        let lse = m + z.ln();
        lse_sum += lse;
        per_anchor[i] = (lse - lse).exp();
        ds[[i, i]] = -scale;
        for &j in set {
            ds[[i, j]] = (s[[i, j]] - pos - m).exp() / z * scale;
        }
    }
    let (grad_view1, grad_view2) = cb.pull_back(&ds);
    Ok(ContrastiveOut {
        loss: per_anchor.iter().sum::<f64>() * scale,
        objective: lse_sum * scale,
        per_anchor,
        grad_view1,
        grad_view2,
    })
}

/// InfoNCE with every other sample's second view as a negative.
pub fn vanilla_infonce(cb: &ContrastiveBatch) -> Result<ContrastiveOut> {
    plr_infonce(cb, &NegativeSets::all_pairs(cb.len()))
}

/// Supervised-contrastive objective over pseudo labels: for anchor `i`
/// the positives are all second views sharing its label (its own included),
/// the denominator runs over every second view. Anchors whose label is
/// unique in the batch, or shared by the whole batch, contribute zero.
pub fn scl_loss(cb: &ContrastiveBatch, pseudo_labels: &[usize]) -> Result<ContrastiveOut> {
    let b = cb.len();
    if pseudo_labels.len() != b {
        return Err(Error::DimensionMismatch(format!(
            "{} pseudo labels for a batch of {b}",
            pseudo_labels.len()
        )));
    }
    let s = cb.logits();
    let mut ds = Array2::<f64>::zeros((b, b));
    let mut per_anchor = vec![0.0; b];
    let scale = 1.0 / b as f64;
    for i in 0..b {
        let positives: Vec<usize> = (0..b)
            .filter(|&j| pseudo_labels[j] == pseudo_labels[i])
            .collect();
        if positives.len() < 2 || positives.len() == b {
            continue;
        }
        let row = s.row(i);
        let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let z: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        let lse = m + z.ln();
        let np = positives.len() as f64;
        per_anchor[i] = lse - positives.iter().map(|&p| row[p]).sum::<f64>() / np;
        for j in 0..b {
            ds[[i, j]] = (row[j] - m).exp() / z * scale;
        }
        for &p in &positives {
            ds[[i, p]] -= scale / np;
        }
    }
    let loss = per_anchor.iter().sum::<f64>() * scale;
    let (grad_view1, grad_view2) = cb.pull_back(&ds);
    Ok(ContrastiveOut {
        loss,
        objective: loss,
        per_anchor,
        grad_view1,
        grad_view2,
    })
}
