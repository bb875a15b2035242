use std::fmt::Write as _;

use crate::diag::fmt_opt;

pub const METRICS_HEADER: &str = "epoch,net,test_acc,sel_auc_2d,sel_auc_1d,neg_select_ratio,neg_correct_ratio,ent_median,mag_ratio_median,loss_total,loss_sst,loss_plr";

/// One row per (epoch, network). Selection columns describe the split the
/// network produced as selector; batch columns describe the pass in which
/// it was trained. During warmup `loss_sst` holds the cross-entropy term.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub net: usize,
    pub test_acc: f64,
    pub sel_auc_2d: Option<f64>,
    pub sel_auc_1d: Option<f64>,
    pub neg_select_ratio: Option<f64>,
    pub neg_correct_ratio: Option<f64>,
    pub ent_median: Option<f64>,
    pub mag_ratio_median: Option<f64>,
    pub loss_total: f64,
    pub loss_sst: Option<f64>,
    pub loss_plr: Option<f64>,
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.net,
            self.test_acc,
            fmt_opt(self.sel_auc_2d),
            fmt_opt(self.sel_auc_1d),
            fmt_opt(self.neg_select_ratio),
            fmt_opt(self.neg_correct_ratio),
            fmt_opt(self.ent_median),
            fmt_opt(self.mag_ratio_median),
            self.loss_total,
            fmt_opt(self.loss_sst),
            fmt_opt(self.loss_plr),
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.to_csv_line());
    }
    s
}

/// Test accuracy per epoch, averaged over the two networks, in epoch order.
pub fn epoch_accuracy(rows: &[MetricsRow]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64, usize)> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some((e, sum, n)) if *e == r.epoch => {
                *sum += r.test_acc;
                *n += 1;
            }
            _ => out.push((r.epoch, r.test_acc, 1)),
        }
    }
    out.into_iter().map(|(e, s, n)| (e, s / n as f64)).collect()
}

/// Best = highest epoch accuracy, Last = mean over the final 10 epochs (or
/// all of them when there are fewer).
pub fn best_last(rows: &[MetricsRow]) -> Option<(f64, f64)> {
    let acc = epoch_accuracy(rows);
    if acc.is_empty() {
        return None;
    }
    let best = acc.iter().map(|&(_, a)| a).fold(f64::NEG_INFINITY, f64::max);
    let tail = &acc[acc.len().saturating_sub(10)..];
    let last = tail.iter().map(|&(_, a)| a).sum::<f64>() / tail.len() as f64;
    Some((best, last))
}
