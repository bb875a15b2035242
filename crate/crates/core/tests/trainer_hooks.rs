//! Invariants of the training loop checked through the observer hooks.

use plremix::trainer::{self, BatchEvent, EpochEvent, Observer, SelectionEvent, TrainConfig};

#[derive(Default)]
struct Trace {
    /// (epoch, selector, trained)
    selections: Vec<(usize, usize, usize)>,
    /// (epoch, trained, partition_from, selections seen so far)
    batches: Vec<(usize, usize, usize, usize)>,
    decomposition_err: f64,
    kappas: Vec<usize>,
    crl_values: Vec<f64>,
}

struct Recorder<'a> {
    trace: Trace,
    lambda: f64,
    cfg: &'a TrainConfig,
}

impl Observer for Recorder<'_> {
    fn on_selection(&mut self, ev: &SelectionEvent) {
        assert_eq!(ev.losses.len(), ev.clean_prob.len());
        self.trace.selections.push((ev.epoch, ev.selector, ev.trained));
    }

    fn on_batch(&mut self, ev: &BatchEvent) {
        let t = &mut self.trace;
        t.batches.push((ev.epoch, ev.trained, ev.partition_from, t.selections.len()));
        let err = (ev.loss_sst + self.lambda * ev.loss_crl - ev.loss_total).abs();
        t.decomposition_err = t.decomposition_err.max(err);
        t.crl_values.push(ev.loss_crl);
        assert!(ev.indices.len() <= self.cfg.batch_size);
    }

    fn on_epoch_end(&mut self, ev: &EpochEvent) {
        if let Some(k) = ev.kappa {
            self.trace.kappas.push(k);
        }
    }
}

fn small(extra: &[&str]) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.apply_overrides(&[
        "num_classes=4",
        "dim=8",
        "n_per_class=40",
        "test_per_class=10",
        "hidden=16",
        "proj_hidden=16",
        "proj_dim=8",
        "batch_size=32",
        "epochs=9",
        "warmup_epochs=2",
        "seed=3",
    ])
    .unwrap();
    cfg.apply_overrides(extra).unwrap();
    cfg
}

fn trace(cfg: &TrainConfig) -> Trace {
    let data = trainer::prepare_data(cfg).unwrap();
    let mut rec = Recorder {
        trace: Trace::default(),
        lambda: cfg.lambda_i,
        cfg,
    };
    trainer::run(cfg, &data, &mut rec).unwrap();
    rec.trace
}

#[test]
fn each_network_trains_on_its_peers_partition() {
    let cfg = small(&[]);
    let t = trace(&cfg);
    let post = cfg.epochs - cfg.warmup_epochs;
    assert_eq!(t.selections.len(), 2 * post);
    for (epoch, m, k) in &t.selections {
        assert_eq!(*k, 1 - m, "epoch {epoch}");
    }
    let co_divide: Vec<_> = t.batches.iter().filter(|b| b.0 >= cfg.warmup_epochs).collect();
    assert!(!co_divide.is_empty());
    for &&(epoch, trained, from, seen) in &co_divide {
        assert_eq!(from, 1 - trained);
        // The most recent selection was made by the peer in this epoch.
        assert_eq!(t.selections[seen - 1], (epoch, from, trained));
    }
}

#[test]
fn logged_total_is_sst_plus_weighted_contrastive_term() {
    for extra in [&["lambda_i=0.7"][..], &["lambda_i=2.5", "use_flat=false"], &["crl_variant=vanilla"]] {
        let cfg = small(extra);
        let t = trace(&cfg);
        assert!(t.decomposition_err < 1e-10, "{extra:?}: {}", t.decomposition_err);
        assert!(t.crl_values.iter().any(|&v| v != 0.0), "{extra:?}");
    }
}

#[test]
fn zero_contrastive_weight_leaves_only_sst() {
    let cfg = small(&["lambda_i=0"]);
    let t = trace(&cfg);
    assert!(t.decomposition_err < 1e-10);
}

#[test]
fn kappa_never_increases() {
    let cfg = small(&["epochs=14", "kappa_schedule=0:3,3:2,6:1"]);
    let t = trace(&cfg);
    assert_eq!(t.kappas.len(), 2 * 12);
    assert!(t.kappas.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(t.kappas.first(), Some(&3));
    assert_eq!(t.kappas.last(), Some(&1));
}
