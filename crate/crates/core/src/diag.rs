//! Analysis instruments: gradient entanglement and magnitude ratios between
//! the contrastive and semi-supervised gradients, negative-pair statistics,
//! clean/noisy separation AUC, and the CSV exports built from them.

use std::fmt::Write as _;
use std::path::Path;

use crate::net::GradVec;
use crate::plr::NegativeSets;
use crate::select::LossPair;
use crate::{Error, Result};

fn check_pair(g1: &GradVec, g2: &GradVec) -> Result<f64> {
    if g1.len() != g2.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradients of length {} and {}",
            g1.len(),
            g2.len()
        )));
    }
    let n2 = g2.dot(g2);
    if n2 <= 0.0 || !n2.is_finite() {
        return Err(Error::Degenerate("reference gradient has zero norm".into()));
    }
    Ok(n2)
}

/// `g1 . g2 / |g2|^2`
pub fn entanglement(g1: &GradVec, g2: &GradVec) -> Result<f64> {
    let n2 = check_pair(g1, g2)?;
    Ok(g1.dot(g2) / n2)
}

/// `|g1| / |g2|`
pub fn magnitude_ratio(g1: &GradVec, g2: &GradVec) -> Result<f64> {
    let n2 = check_pair(g1, g2)?;
    Ok(g1.norm() / n2.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictStats {
    pub epoch: usize,
    pub batch: usize,
    pub entanglement: f64,
    pub magnitude_ratio: f64,
}

impl ConflictStats {
    pub fn measure(epoch: usize, batch: usize, g_crl: &GradVec, g_sst: &GradVec) -> Result<Self> {
        Ok(ConflictStats {
            epoch,
            batch,
            entanglement: entanglement(g_crl, g_sst)?,
            magnitude_ratio: magnitude_ratio(g_crl, g_sst)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegPairStats {
    pub select_ratio: f64,
    /// `None` when no pair was selected.
    pub correct_ratio: Option<f64>,
    pub selected: usize,
    pub correct: usize,
}

pub fn neg_pair_stats(ns: &NegativeSets, true_labels: &[usize]) -> Result<NegPairStats> {
    let b = ns.batch_len();
    if true_labels.len() != b {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for a batch of {b}",
            true_labels.len()
        )));
    }
    let mut selected = 0;
    let mut correct = 0;
    for (i, set) in ns.sets.iter().enumerate() {
        for &j in set {
            selected += 1;
            if true_labels[i] != true_labels[j] {
                correct += 1;
            }
        }
    }
    let all = b * b.saturating_sub(1);
    Ok(NegPairStats {
        select_ratio: if all == 0 { 0.0 } else { selected as f64 / all as f64 },
        correct_ratio: (selected > 0).then(|| correct as f64 / selected as f64),
        selected,
        correct,
    })
}

/// Rank-based AUC of `scores` as a detector of the `positive` class, with
/// tied scores given their average rank.
pub fn separation_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("AUC needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Median of finite values, `None` if there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One batch's conflict measurements for both contrastive variants against
/// the same semi-supervised gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictRow {
    pub epoch: usize,
    pub net: usize,
    pub batch: usize,
    pub plr: Option<ConflictStats>,
    pub vanilla: Option<ConflictStats>,
}

pub fn fig4_csv(rows: &[ConflictRow]) -> String {
    let mut s = String::from("epoch,net,batch,ent_plr,mag_plr,ent_vanilla,mag_vanilla\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.epoch,
            r.net,
            r.batch,
            fmt_opt(r.plr.map(|c| c.entanglement)),
            fmt_opt(r.plr.map(|c| c.magnitude_ratio)),
            fmt_opt(r.vanilla.map(|c| c.entanglement)),
            fmt_opt(r.vanilla.map(|c| c.magnitude_ratio)),
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegPairRow {
    pub epoch: usize,
    pub net: usize,
    pub kappa: usize,
    pub select_ratio: f64,
    pub correct_ratio: Option<f64>,
}

pub fn fig5_csv(rows: &[NegPairRow]) -> String {
    let mut s = String::from("epoch,net,kappa,select_ratio,correct_ratio\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.epoch,
            r.net,
            r.kappa,
            r.select_ratio,
            fmt_opt(r.correct_ratio)
        );
    }
    s
}

/// Per-sample selection snapshot: normalized loss pair, clean posterior and
/// ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSnapshot {
    pub epoch: usize,
    pub selector: usize,
    pub losses: Vec<LossPair>,
    pub clean_prob: Vec<f64>,
    pub is_clean: Vec<bool>,
}

pub fn fig6_csv(snap: &SelectionSnapshot) -> String {
    let mut s = String::from("index,l_cls,l_proto,w,is_true_clean\n");
    for (i, ((lp, w), c)) in snap
        .losses
        .iter()
        .zip(&snap.clean_prob)
        .zip(&snap.is_clean)
        .enumerate()
    {
        let _ = writeln!(
            s,
            "{i},{},{},{w},{}",
            lp.l_cls,
            lp.l_proto,
            u8::from(*c)
        );
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}
