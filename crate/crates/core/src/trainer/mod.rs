//! Warmup, the two-network co-divide loop, loss composition and per-epoch
//! bookkeeping.
//!
//! Within an epoch network `m` first scores every training sample and
//! splits the data into clean and noisy pools; network `1 - m` is then
//! trained for one pass on that split, after which its prototypes and
//! thresholds are refreshed. This happens for `m = 0` and then `m = 1`.

mod config;
mod metrics;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::datagen::{augment_batch, AugmentSpec, Blobs, Dataset, NoiseKind, NoiseSpec, Strength};
use crate::diag::{self, ConflictRow, ConflictStats, NegPairStats};
use crate::net::{GradVec, NetState, Sgd};
use crate::plr::{self, ContrastiveBatch, ContrastiveOut, NegativeSets};
use crate::protos::{pseudo_soft_label, ProtoState};
use crate::select::{self, EmOptions, LossPair, Partition};
use crate::sst;
use crate::{rng, Error, Result};

pub use config::{kappa_at, CrlVariant, GmmVariant, KappaSchedule, Method, TrainConfig};
pub use metrics::{best_last, epoch_accuracy, metrics_csv, MetricsRow, METRICS_HEADER};

/// Training split with noisy labels and a clean held-out split.
#[derive(Debug, Clone)]
pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

impl Data {
    /// SHA-256 over the canonical CSV encodings of both splits.
    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.train.to_csv().as_bytes());
        h.update(self.test.to_csv().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Generates both splits from the config (one set of centroids, noise only
/// on the training split).
pub fn generate_data(cfg: &TrainConfig) -> Result<Data> {
    let blobs = Blobs::new(
        cfg.num_classes,
        cfg.dim,
        cfg.separation,
        cfg.spread,
        rng::derive_seed(cfg.seed, "centroids", &[]),
    )?;
    let clean = blobs.sample(cfg.n_per_class, rng::derive_seed(cfg.seed, "train", &[]))?;
    let test = blobs.sample(cfg.test_per_class, rng::derive_seed(cfg.seed, "test", &[]))?;
    let spec = match cfg.noise_kind {
        NoiseKind::Symmetric => NoiseSpec::symmetric(cfg.noise_ratio),
        NoiseKind::Asymmetric => NoiseSpec::asymmetric(cfg.noise_ratio, blobs.nearest_other_mapping()?),
    };
    let train = crate::datagen::inject_noise(&clean, &spec, rng::derive_seed(cfg.seed, "noise", &[]))?;
    Ok(Data { train, test })
}

/// Loads the splits named in the config, or generates them, then checks
/// `dataset_sha256` when the config pins one.
pub fn prepare_data(cfg: &TrainConfig) -> Result<Data> {
    let data = match (&cfg.dataset, &cfg.test_dataset) {
        (Some(tr), Some(te)) => Data {
            train: Dataset::read_csv(tr, Some(cfg.num_classes))?,
            test: Dataset::read_csv(te, Some(cfg.num_classes))?,
        },
        _ => generate_data(cfg)?,
    };
    if data.train.dim() != data.test.dim() {
        return Err(Error::DimensionMismatch("train and test feature widths differ".into()));
    }
    if let Some(want) = &cfg.dataset_sha256 {
        let got = data.sha256();
        if &got != want {
            return Err(Error::Config(format!("dataset hash {got} does not match pinned {want}")));
        }
    }
    Ok(data)
}

/// Both networks, their optimisers and prototype states.
#[derive(Debug, Clone)]
pub struct RunState {
    pub nets: [NetState; 2],
    pub optims: [Sgd; 2],
    pub protos: [Option<ProtoState>; 2],
    /// Next epoch to run.
    pub epoch: usize,
    pub history: Vec<MetricsRow>,
}

impl RunState {
    pub fn new(cfg: &TrainConfig, input_dim: usize) -> Result<RunState> {
        cfg.validate()?;
        let dims = cfg.net_dims(input_dim);
        let net = |n: u64| NetState::new(dims.clone(), rng::derive_seed(cfg.seed, "init", &[n]));
        let sgd = || Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay);
        Ok(RunState {
            nets: [net(0)?, net(1)?],
            optims: [sgd(), sgd()],
            protos: [None, None],
            epoch: 0,
            history: Vec::new(),
        })
    }
}

/// Per-sample view of one selection step.
#[derive(Debug)]
pub struct SelectionEvent<'a> {
    pub epoch: usize,
    pub selector: usize,
    pub trained: usize,
    /// Loss pairs as fitted (min-max normalised unless disabled).
    pub losses: &'a [LossPair],
    pub clean_prob: &'a [f64],
    pub truly_clean: &'a [bool],
    pub auc_2d: Option<f64>,
    pub auc_1d: Option<f64>,
}

#[derive(Debug)]
pub struct BatchEvent<'a> {
    pub epoch: usize,
    pub trained: usize,
    /// Network whose losses produced the split used for this batch.
    pub partition_from: usize,
    pub batch: usize,
    pub indices: &'a [usize],
    pub kappa: usize,
    pub neg: NegPairStats,
    pub conflict: ConflictRow,
    pub loss_sst: f64,
    pub loss_crl: f64,
    pub loss_total: f64,
}

#[derive(Debug)]
pub struct EpochEvent<'a> {
    pub row: &'a MetricsRow,
    /// κ in force, `None` during warmup.
    pub kappa: Option<usize>,
}

/// Instrumentation hooks. All methods default to no-ops.
pub trait Observer {
    fn on_selection(&mut self, _ev: &SelectionEvent) {}
    fn on_batch(&mut self, _ev: &BatchEvent) {}
    fn on_epoch_end(&mut self, _ev: &EpochEvent) {}
}

pub struct NoObserver;

impl Observer for NoObserver {}

/// Collects the figure exports for the chosen epochs: per-batch conflicts,
/// per-epoch negative-pair ratios and per-sample selections.
#[derive(Debug, Default)]
pub struct FigureRecorder {
    pub epochs: Vec<usize>,
    pub conflicts: Vec<ConflictRow>,
    pub neg_rows: Vec<diag::NegPairRow>,
    pub snapshots: Vec<diag::SelectionSnapshot>,
}

impl FigureRecorder {
    pub fn new(epochs: Vec<usize>) -> Self {
        FigureRecorder {
            epochs,
            ..Default::default()
        }
    }

    /// Writes `fig4_epochE.csv`, `fig5.csv` and `fig6_epochE.csv` (one per
    /// selector) into `dir`.
    pub fn write(&self, dir: &std::path::Path) -> Result<()> {
        for &e in &self.epochs {
            let rows: Vec<ConflictRow> = self.conflicts.iter().filter(|r| r.epoch == e).copied().collect();
            if !rows.is_empty() {
                diag::write_text(&dir.join(format!("fig4_epoch{e}.csv")), &diag::fig4_csv(&rows))?;
            }
            for snap in self.snapshots.iter().filter(|s| s.epoch == e) {
                let name = format!("fig6_epoch{e}_net{}.csv", snap.selector);
                diag::write_text(&dir.join(name), &diag::fig6_csv(snap))?;
            }
        }
        diag::write_text(&dir.join("fig5.csv"), &diag::fig5_csv(&self.neg_rows))
    }
}

impl Observer for FigureRecorder {
    fn on_selection(&mut self, ev: &SelectionEvent) {
        if self.epochs.contains(&ev.epoch) {
            self.snapshots.push(diag::SelectionSnapshot {
                epoch: ev.epoch,
                selector: ev.selector,
                losses: ev.losses.to_vec(),
                clean_prob: ev.clean_prob.to_vec(),
                is_clean: ev.truly_clean.to_vec(),
            });
        }
    }

    fn on_batch(&mut self, ev: &BatchEvent) {
        if self.epochs.contains(&ev.epoch) {
            self.conflicts.push(ev.conflict);
        }
    }

    fn on_epoch_end(&mut self, ev: &EpochEvent) {
        if let (Some(kappa), Some(sel)) = (ev.kappa, ev.row.neg_select_ratio) {
            self.neg_rows.push(diag::NegPairRow {
                epoch: ev.row.epoch,
                net: ev.row.net,
                kappa,
                select_ratio: sel,
                correct_ratio: ev.row.neg_correct_ratio,
            });
        }
    }
}

/// Forwards every observer call to each member in order.
pub struct Fanout<'a>(pub Vec<&'a mut dyn Observer>);

impl Observer for Fanout<'_> {
    fn on_selection(&mut self, ev: &SelectionEvent) {
        for o in self.0.iter_mut() {
            o.on_selection(ev);
        }
    }
    fn on_batch(&mut self, ev: &BatchEvent) {
        for o in self.0.iter_mut() {
            o.on_batch(ev);
        }
    }
    fn on_epoch_end(&mut self, ev: &EpochEvent) {
        for o in self.0.iter_mut() {
            o.on_epoch_end(ev);
        }
    }
}

/// Final state and the metric rows of every epoch.
#[derive(Debug)]
pub struct RunOutput {
    pub history: Vec<MetricsRow>,
    pub state: RunState,
}

/// Warmup followed by the co-divide loop (or plain cross-entropy for the
/// baseline method), emitting two metric rows per epoch.
pub fn run(cfg: &TrainConfig, data: &Data, obs: &mut dyn Observer) -> Result<RunOutput> {
    cfg.validate()?;
    data.train.validate()?;
    data.test.validate()?;
    let mut state = RunState::new(cfg, data.train.dim())?;
    match cfg.method {
        Method::CrossEntropy => {
            while state.epoch < cfg.epochs {
                supervised_epoch(&mut state, cfg, data, false, obs)?;
            }
        }
        Method::PlReMix => {
            warmup(&mut state, cfg, data, obs)?;
            while state.epoch < cfg.epochs {
                train_epoch(&mut state, cfg, data, obs)?;
            }
        }
    }
    Ok(RunOutput {
        history: state.history.clone(),
        state,
    })
}

/// Runs the warmup epochs (cross-entropy on noisy labels plus vanilla
/// InfoNCE) and then initialises both prototype states.
pub fn warmup(state: &mut RunState, cfg: &TrainConfig, data: &Data, obs: &mut dyn Observer) -> Result<()> {
    while state.epoch < cfg.warmup_epochs {
        supervised_epoch(state, cfg, data, cfg.crl_variant != CrlVariant::None, obs)?;
    }
    for n in 0..2 {
        let mut r = rng::stream(cfg.seed, "proto-init", &[n as u64]);
        let (_, q) = eval_pass(&state.nets[n], &data.train.features.view(), &cfg.augment_spec(), &mut r)?;
        state.protos[n] = Some(ProtoState::init(
            q.view(),
            &data.train.noisy_labels,
            cfg.num_classes,
            cfg.proto_params(),
        )?);
    }
    Ok(())
}

fn accuracy(net: &NetState, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let out = net.forward(ds.features.view())?;
    let hits = out
        .probs
        .outer_iter()
        .zip(&ds.true_labels)
        .filter(|(row, &y)| argmax(row.iter().copied()) == y)
        .count();
    Ok(hits as f64 / ds.len() as f64)
}

fn argmax(v: impl Iterator<Item = f64>) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, x) in v.enumerate() {
        if x > best.0 {
            best = (x, i);
        }
    }
    best.1
}

/// Class probabilities and projections of every row under one weak view.
fn eval_pass(
    net: &NetState,
    x: &ArrayView2<f64>,
    aug: &AugmentSpec,
    r: &mut rng::StreamRng,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let xw = augment_batch(x.view(), aug, Strength::Weak, r);
    let out = net.forward(xw.view())?;
    Ok((out.probs, out.proj))
}

fn shuffled(n: usize, r: &mut rng::StreamRng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}

fn diverged(epoch: usize, detail: String) -> Error {
    Error::Diverged { epoch, detail }
}

fn stack(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(0), &[a, b]).expect("matching widths")
}

/// One epoch of cross-entropy on a weak view of every sample, optionally
/// with the vanilla contrastive term on two strong views.
fn supervised_epoch(
    state: &mut RunState,
    cfg: &TrainConfig,
    data: &Data,
    with_crl: bool,
    obs: &mut dyn Observer,
) -> Result<()> {
    let epoch = state.epoch;
    let aug = cfg.augment_spec();
    let n = data.train.len();
    let mut rows = Vec::with_capacity(2);
    for k in 0..2 {
        state.optims[k].lr = cfg.lr_at(epoch);
        let mut r = rng::stream(cfg.seed, "supervised", &[epoch as u64, k as u64]);
        let perm = shuffled(n, &mut r);
        let (mut sum_total, mut sum_ce, mut sum_crl, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for idx in perm.chunks(cfg.batch_size) {
            let x = data.train.features.select(Axis(0), idx);
            let y: Vec<usize> = idx.iter().map(|&i| data.train.noisy_labels[i]).collect();
            let net = &state.nets[k];
            let xw = augment_batch(x.view(), &aug, Strength::Weak, &mut r);
            let out = net.forward(xw.view())?;
            let (ce, d_logits) = sst::cross_entropy(out.logits.view(), &y)?;
            let mut grad = net.backward(&out, Some(d_logits.view()), None)?;
            let mut crl = 0.0;
            if with_crl && idx.len() >= 2 {
                let s1 = augment_batch(x.view(), &aug, Strength::Strong, &mut r);
                let s2 = augment_batch(x.view(), &aug, Strength::Strong, &mut r);
                let out_s = net.forward(stack(s1.view(), s2.view()).view())?;
                let b = idx.len();
                let cb = ContrastiveBatch::new(
                    out_s.proj.slice(s![..b, ..]),
                    out_s.proj.slice(s![b.., ..]),
                    cfg.temperature,
                )?;
                let c = plr::vanilla_infonce(&cb)?;
                let d_proj = stack(c.grad_view1.view(), c.grad_view2.view());
                let g = net.backward(&out_s, None, Some(d_proj.view()))?;
                grad.add_scaled(cfg.lambda_i, &g);
                crl = c.loss;
            }
            let total = ce + cfg.lambda_i * crl;
            if !total.is_finite() || !grad.is_finite() {
                return Err(diverged(
                    epoch,
                    format!("net {k}, supervised batch {batches}: ce {ce}, crl {crl}"),
                ));
            }
            let [n0, n1] = &mut state.nets;
            let net_mut = if k == 0 { n0 } else { n1 };
            state.optims[k].step(net_mut, &grad)?;
            sum_total += total;
            sum_ce += ce;
            sum_crl += crl;
            batches += 1;
        }
        let nb = batches.max(1) as f64;
        rows.push(MetricsRow {
            epoch,
            net: k,
            test_acc: accuracy(&state.nets[k], &data.test)?,
            sel_auc_2d: None,
            sel_auc_1d: None,
            neg_select_ratio: None,
            neg_correct_ratio: None,
            ent_median: None,
            mag_ratio_median: None,
            loss_total: sum_total / nb,
            loss_sst: Some(sum_ce / nb),
            loss_plr: with_crl.then_some(sum_crl / nb),
        });
    }
    finish_epoch(state, rows, None, obs);
    Ok(())
}

fn finish_epoch(state: &mut RunState, rows: Vec<MetricsRow>, kappa: Option<usize>, obs: &mut dyn Observer) {
    for row in rows {
        obs.on_epoch_end(&EpochEvent { row: &row, kappa });
        state.history.push(row);
    }
    state.epoch += 1;
}

/// Result of scoring the training set with one network.
#[derive(Debug, Clone)]
pub struct Selection {
    pub selector: usize,
    pub partition: Partition,
    pub auc_2d: Option<f64>,
    pub auc_1d: Option<f64>,
    pub losses: Vec<LossPair>,
}

fn fit_posteriors(
    points: &[[f64; 2]],
    cls: &[f64],
    variant: GmmVariant,
    opts: &EmOptions,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let w2 = match select::fit_gmm2d(points, opts) {
        Ok(fit) => Some(fit.model.clean_posterior(points)),
        Err(e) => {
            if variant == GmmVariant::TwoD {
                log::warn!("2D mixture fit failed ({e}); every sample treated as clean");
            }
            None
        }
    };
    let w1 = match select::fit_gmm1d(cls, opts) {
        Ok(fit) => Some(fit.model.clean_posterior(cls)),
        Err(e) => {
            if variant == GmmVariant::OneD {
                log::warn!("1D mixture fit failed ({e}); every sample treated as clean");
            }
            None
        }
    };
    (w2, w1)
}

/// Scores every training sample with network `selector`: loss pairs from
/// its classifier and prototypes, a mixture fit, and the clean/noisy split.
pub fn select_with(
    state: &RunState,
    cfg: &TrainConfig,
    data: &Data,
    epoch: usize,
    selector: usize,
) -> Result<Selection> {
    let protos = state.protos[selector]
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("prototypes not initialised; run warmup first".into()))?;
    let mut r = rng::stream(cfg.seed, "select", &[epoch as u64, selector as u64]);
    let (t, q) = eval_pass(&state.nets[selector], &data.train.features.view(), &cfg.augment_spec(), &mut r)?;
    let sim = protos.similarity(q.view());
    let raw = select::loss_pairs(t.view(), sim.view(), &data.train.noisy_labels)?;
    let losses = if cfg.normalize_losses {
        select::normalize_losses(&raw)?
    } else {
        raw
    };
    let points: Vec<[f64; 2]> = losses.iter().map(LossPair::as_point).collect();
    let cls: Vec<f64> = losses.iter().map(|p| p.l_cls).collect();
    let (w2, w1) = fit_posteriors(&points, &cls, cfg.gmm_variant, &cfg.em_options());

    let truly_clean = data.train.clean_mask();
    let auc = |w: &Option<Vec<f64>>| w.as_ref().and_then(|w| diag::separation_auc(w, &truly_clean).ok());
    let (auc_2d, auc_1d) = (auc(&w2), auc(&w1));
    let chosen = match cfg.gmm_variant {
        GmmVariant::TwoD => w2,
        GmmVariant::OneD => w1,
    };
    let w = chosen.unwrap_or_else(|| vec![1.0; data.train.len()]);
    Ok(Selection {
        selector,
        partition: select::partition(&w, cfg.p_threshold),
        auc_2d,
        auc_1d,
        losses,
    })
}

/// Refreshes thresholds and prototypes of network `k` from one weak pass.
fn update_protos(state: &mut RunState, cfg: &TrainConfig, data: &Data, epoch: usize, k: usize) -> Result<()> {
    let mut r = rng::stream(cfg.seed, "proto-update", &[epoch as u64, k as u64]);
    let (t, q) = eval_pass(&state.nets[k], &data.train.features.view(), &cfg.augment_spec(), &mut r)?;
    let protos = state.protos[k].as_mut().expect("initialised before training");
    let sim = protos.similarity(q.view());
    let soft = pseudo_soft_label(t.view(), sim.view(), cfg.alpha);
    protos.update_thresholds(soft.view());
    let confident = protos.confident_set(soft.view());
    protos.update_prototypes(q.view(), &confident);
    Ok(())
}

#[derive(Debug, Default)]
struct PassStats {
    total: f64,
    sst: f64,
    crl: f64,
    batches: usize,
    selected: usize,
    correct: usize,
    possible: usize,
    ent: Vec<f64>,
    mag: Vec<f64>,
}

fn zero_contrastive(b: usize, d: usize) -> ContrastiveOut {
    ContrastiveOut {
        loss: 0.0,
        objective: 0.0,
        per_anchor: vec![0.0; b],
        grad_view1: Array2::zeros((b, d)),
        grad_view2: Array2::zeros((b, d)),
    }
}

fn contrastive_grad(net: &NetState, out: &crate::net::ForwardOut, c: &ContrastiveOut) -> Result<GradVec> {
    let d_proj = stack(c.grad_view1.view(), c.grad_view2.view());
    net.backward(out, None, Some(d_proj.view()))
}

/// One post-warmup epoch: for `m = 0, 1`, select with network `m`, train
/// network `1 - m` on the split, then refresh its prototypes.
pub fn train_epoch(state: &mut RunState, cfg: &TrainConfig, data: &Data, obs: &mut dyn Observer) -> Result<()> {
    let epoch = state.epoch;
    let post = epoch.checked_sub(cfg.warmup_epochs).ok_or_else(|| {
        Error::InvalidArgument(format!("epoch {epoch} is still inside warmup"))
    })?;
    let (kappa, use_labels) = kappa_at(post, &cfg.resolved_schedule())?;
    let truly_clean = data.train.clean_mask();
    let mut sel_aucs = [(None, None); 2];
    let mut passes: [PassStats; 2] = Default::default();
    for m in 0..2 {
        let k = 1 - m;
        let sel = select_with(state, cfg, data, epoch, m)?;
        obs.on_selection(&SelectionEvent {
            epoch,
            selector: m,
            trained: k,
            losses: &sel.losses,
            clean_prob: &sel.partition.clean_probs,
            truly_clean: &truly_clean,
            auc_2d: sel.auc_2d,
            auc_1d: sel.auc_1d,
        });
        sel_aucs[m] = (sel.auc_2d, sel.auc_1d);
        passes[k] = train_pass(state, cfg, data, epoch, k, &sel, kappa, use_labels, obs)?;
        update_protos(state, cfg, data, epoch, k)?;
    }
    let mut rows = Vec::with_capacity(2);
    for (n, p) in passes.iter().enumerate() {
        let nb = p.batches.max(1) as f64;
        rows.push(MetricsRow {
            epoch,
            net: n,
            test_acc: accuracy(&state.nets[n], &data.test)?,
            sel_auc_2d: sel_aucs[n].0,
            sel_auc_1d: sel_aucs[n].1,
            neg_select_ratio: (p.possible > 0).then(|| p.selected as f64 / p.possible as f64),
            neg_correct_ratio: (p.selected > 0).then(|| p.correct as f64 / p.selected as f64),
            ent_median: diag::median(&p.ent),
            mag_ratio_median: diag::median(&p.mag),
            loss_total: p.total / nb,
            loss_sst: Some(p.sst / nb),
            loss_plr: Some(p.crl / nb),
        });
    }
    finish_epoch(state, rows, Some(kappa), obs);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_pass(
    state: &mut RunState,
    cfg: &TrainConfig,
    data: &Data,
    epoch: usize,
    k: usize,
    sel: &Selection,
    kappa: usize,
    use_labels: bool,
    obs: &mut dyn Observer,
) -> Result<PassStats> {
    let m = sel.selector;
    let aug = cfg.augment_spec();
    let c = cfg.num_classes;
    state.optims[k].lr = cfg.lr_at(epoch);
    let mut r = rng::stream(cfg.seed, "co-train", &[epoch as u64, k as u64]);
    let perm = shuffled(data.train.len(), &mut r);
    let mut stats = PassStats::default();

    for (bi, idx) in perm.chunks(cfg.batch_size).enumerate() {
        let b = idx.len();
        let x = data.train.features.select(Axis(0), idx);
        let y: Vec<usize> = idx.iter().map(|&i| data.train.noisy_labels[i]).collect();
        let y_true: Vec<usize> = idx.iter().map(|&i| data.train.true_labels[i]).collect();
        let net = &state.nets[k];
        let peer = &state.nets[m];

        // Weak views through both networks.
        let mut own = Vec::with_capacity(cfg.num_weak);
        let mut other = Vec::with_capacity(cfg.num_weak);
        for _ in 0..cfg.num_weak {
            let xw = augment_batch(x.view(), &aug, Strength::Weak, &mut r);
            own.push(net.forward(xw.view())?.probs);
            other.push(peer.forward(xw.view())?.probs);
        }
        let mut own_mean = Array2::<f64>::zeros((b, c));
        for t in &own {
            own_mean += t;
        }
        own_mean /= cfg.num_weak as f64;

        let (lab, unl): (Vec<usize>, Vec<usize>) = (0..b).partition(|&p| sel.partition.is_clean(idx[p]));
        let mut targets = Array2::<f64>::zeros((b, c));
        for &p in &lab {
            let rows: Vec<_> = own.iter().map(|t| t.row(p)).collect();
            let tw = ndarray::stack(Axis(0), &rows).expect("equal rows");
            let w = sel.partition.clean_probs[idx[p]];
            targets.row_mut(p).assign(&sst::refine_labeled(y[p], w, tw.view(), cfg.sharpen_t)?.target);
        }
        for &p in &unl {
            let rows: Vec<_> = own.iter().chain(&other).map(|t| t.row(p)).collect();
            let ta = ndarray::stack(Axis(0), &rows).expect("equal rows");
            targets.row_mut(p).assign(&sst::guess_unlabeled(ta.view(), cfg.sharpen_t)?.target);
        }

        // Contrastive branch on two strong views.
        let s1 = augment_batch(x.view(), &aug, Strength::Strong, &mut r);
        let s2 = augment_batch(x.view(), &aug, Strength::Strong, &mut r);
        let out_s = net.forward(stack(s1.view(), s2.view()).view())?;
        let cb = ContrastiveBatch::new(
            out_s.proj.slice(s![..b, ..]),
            out_s.proj.slice(s![b.., ..]),
            cfg.temperature,
        )?;
        let ns = plr::reliable_negative_set(own_mean.view(), &y, kappa, use_labels)?;
        let plr_out = |ns: &NegativeSets| {
            if cfg.use_flat {
                plr::plr_flatnce(&cb, ns)
            } else {
                plr::plr_infonce(&cb, ns)
            }
        };
        let crl = match cfg.crl_variant {
            CrlVariant::Plr => plr_out(&ns)?,
            CrlVariant::Vanilla => plr::vanilla_infonce(&cb)?,
            CrlVariant::Scl => {
                let pseudo: Vec<usize> = own_mean.outer_iter().map(|r| argmax(r.iter().copied())).collect();
                plr::scl_loss(&cb, &pseudo)?
            }
            CrlVariant::None => zero_contrastive(b, cfg.proj_dim),
        };
        let g_crl = contrastive_grad(net, &out_s, &crl)?;

        // Semi-supervised branch: MixUp of the first strong view, within
        // each pool.
        let mix = |pool: &[usize], r: &mut rng::StreamRng| {
            let xs = s1.select(Axis(0), pool);
            let ys = targets.select(Axis(0), pool);
            sst::mixup(xs.view(), ys.view(), cfg.beta, cfg.mixup_max_lambda, r)
        };
        let mx = mix(&lab, &mut r)?;
        let mu = mix(&unl, &mut r)?;
        let out_m = net.forward(stack(mx.x.view(), mu.x.view()).view())?;
        let nl = lab.len();
        let sst_out = sst::sst_loss(
            out_m.logits.slice(s![..nl, ..]),
            mx.y.view(),
            out_m.logits.slice(s![nl.., ..]),
            mu.y.view(),
            cfg.lambda_u,
        )?;
        let d_logits = stack(sst_out.grad_labeled.view(), sst_out.grad_unlabeled.view());
        let g_sst = net.backward(&out_m, Some(d_logits.view()), None)?;

        // Conflict measurements against the SST gradient.
        let measure = |g: &GradVec| ConflictStats::measure(epoch, bi, g, &g_sst).ok();
        let own_conflict = measure(&g_crl);
        let mut conflict = ConflictRow {
            epoch,
            net: k,
            batch: bi,
            plr: None,
            vanilla: None,
        };
        match cfg.crl_variant {
            CrlVariant::Plr => conflict.plr = own_conflict,
            CrlVariant::Vanilla => conflict.vanilla = own_conflict,
            _ => {}
        }
        if cfg.conflict_stats {
            if conflict.plr.is_none() {
                conflict.plr = measure(&contrastive_grad(net, &out_s, &plr_out(&ns)?)?);
            }
            if conflict.vanilla.is_none() {
                conflict.vanilla = measure(&contrastive_grad(net, &out_s, &plr::vanilla_infonce(&cb)?)?);
            }
        }

        let neg = diag::neg_pair_stats(&ns, &y_true)?;
        let loss_total = sst_out.terms.total + cfg.lambda_i * crl.loss;
        let mut grad = g_sst;
        grad.add_scaled(cfg.lambda_i, &g_crl);
        if !loss_total.is_finite() || !grad.is_finite() {
            return Err(diverged(
                epoch,
                format!(
                    "net {k}, batch {bi}: sst {:?}, contrastive {}, {} labelled / {} unlabelled",
                    sst_out.terms,
                    crl.loss,
                    lab.len(),
                    unl.len()
                ),
            ));
        }
        obs.on_batch(&BatchEvent {
            epoch,
            trained: k,
            partition_from: m,
            batch: bi,
            indices: idx,
            kappa,
            neg,
            conflict,
            loss_sst: sst_out.terms.total,
            loss_crl: crl.loss,
            loss_total,
        });

        let [n0, n1] = &mut state.nets;
        let net_mut = if k == 0 { n0 } else { n1 };
        state.optims[k].step(net_mut, &grad)?;

        stats.total += loss_total;
        stats.sst += sst_out.terms.total;
        stats.crl += crl.loss;
        stats.batches += 1;
        stats.selected += neg.selected;
        stats.correct += neg.correct;
        stats.possible += b * (b - 1);
        if let Some(cs) = own_conflict {
            stats.ent.push(cs.entanglement);
            stats.mag.push(cs.magnitude_ratio);
        }
    }
    Ok(stats)
}
