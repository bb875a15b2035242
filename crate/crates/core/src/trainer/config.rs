//! Flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datagen::{AugmentSpec, NoiseKind};
use crate::net::NetDims;
use crate::protos::ProtoParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Warmup, co-divide selection and semi-supervised co-training.
    PlReMix,
    /// Both networks trained with plain cross-entropy on the noisy labels.
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrlVariant {
    Plr,
    Vanilla,
    Scl,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmmVariant {
    TwoD,
    OneD,
}

macro_rules! keyword_enum {
    ($ty:ident { $($name:literal => $v:ident),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$v),)+
                    _ => Err(Error::Config(format!(
                        "unknown {} `{s}` (expected one of: {})",
                        stringify!($ty),
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$v => $name,)+ })
            }
        }
    };
}

keyword_enum!(Method { "plremix" => PlReMix, "ce" => CrossEntropy });
keyword_enum!(CrlVariant { "plr" => Plr, "vanilla" => Vanilla, "scl" => Scl, "none" => None });
keyword_enum!(GmmVariant { "2d" => TwoD, "1d" => OneD });

/// Piecewise-constant κ over post-warmup epochs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KappaSchedule {
    /// 3 → 2 → 1 with breaks at 40% and 70% of the post-warmup epochs.
    Auto,
    Explicit(Vec<(usize, usize)>),
}

impl KappaSchedule {
    pub fn resolve(&self, post_warmup_epochs: usize) -> Vec<(usize, usize)> {
        match self {
            KappaSchedule::Explicit(v) => v.clone(),
            KappaSchedule::Auto => {
                let at = |f: f64| (f * post_warmup_epochs as f64).round() as usize;
                vec![(0, 3), (at(0.4), 2), (at(0.7), 1)]
            }
        }
    }
}

impl FromStr for KappaSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(KappaSchedule::Auto);
        }
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (e, k) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("schedule entry `{part}` is not epoch:kappa")))?;
            let e = e.trim().parse().map_err(|_| Error::Config(format!("bad epoch in `{part}`")))?;
            let k = k.trim().parse().map_err(|_| Error::Config(format!("bad kappa in `{part}`")))?;
            out.push((e, k));
        }
        validate_schedule(&out)?;
        Ok(KappaSchedule::Explicit(out))
    }
}

impl fmt::Display for KappaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KappaSchedule::Auto => f.write_str("auto"),
            KappaSchedule::Explicit(v) => {
                let parts: Vec<String> = v.iter().map(|(e, k)| format!("{e}:{k}")).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

fn validate_schedule(s: &[(usize, usize)]) -> Result<()> {
    let Some(first) = s.first() else {
        return Err(Error::Config("empty kappa schedule".into()));
    };
    if first.0 != 0 {
        return Err(Error::Config("kappa schedule must start at epoch 0".into()));
    }
    for w in s.windows(2) {
        if w[1].0 <= w[0].0 || w[1].1 > w[0].1 {
            return Err(Error::Config(
                "kappa schedule needs increasing epochs and non-increasing kappa".into(),
            ));
        }
    }
    if s.iter().any(|&(_, k)| k == 0) {
        return Err(Error::Config("kappa must be at least 1".into()));
    }
    Ok(())
}

/// κ in force at a post-warmup epoch, and whether given labels join the
/// top-κ sets (while κ ≥ 2).
pub fn kappa_at(epoch: usize, schedule: &[(usize, usize)]) -> Result<(usize, bool)> {
    let kappa = schedule
        .iter()
        .take_while(|&&(start, _)| start <= epoch)
        .last()
        .map(|&(_, k)| k)
        .ok_or_else(|| Error::Config("empty kappa schedule".into()))?;
    Ok((kappa, kappa >= 2))
}

/// Every knob of a run: data generation, augmentation, network, optimiser,
/// objective and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
    pub spread: f64,
    pub noise_kind: NoiseKind,
    pub noise_ratio: f64,
    pub dataset: Option<PathBuf>,
    pub test_dataset: Option<PathBuf>,
    pub dataset_sha256: Option<String>,

    pub weak_sigma: f64,
    pub strong_sigma: f64,
    pub strong_dropout_p: f64,
    pub num_weak: usize,

    pub hidden: Vec<usize>,
    pub proj_hidden: usize,
    pub proj_dim: usize,

    pub method: Method,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Post-warmup epoch at which the learning rate is multiplied by
    /// `lr_decay`; `None` means half-way through.
    pub lr_decay_epoch: Option<usize>,
    pub lr_decay: f64,
    pub momentum: f64,
    pub weight_decay: f64,

    pub temperature: f64,
    pub tau_s: f64,
    pub sharpen_t: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub lambda_u: f64,
    pub lambda_i: f64,
    pub kappa_schedule: KappaSchedule,
    pub use_flat: bool,
    pub crl_variant: CrlVariant,
    pub gmm_variant: GmmVariant,
    pub mixup_max_lambda: bool,
    pub p_threshold: f64,
    /// EM budget and covariance floor for the per-epoch selection fits.
    pub gmm_max_iters: usize,
    pub gmm_tol: f64,
    pub gmm_cov_floor: f64,
    /// Min-max scale the loss pairs before fitting.
    pub normalize_losses: bool,
    pub seed: u64,

    /// Measure both contrastive variants against the SST gradient on every
    /// batch.
    pub conflict_stats: bool,
    /// Epochs whose per-batch conflicts and per-sample selections are
    /// exported; `None` picks the middle post-warmup epoch and the last one.
    pub fig_epochs: Option<Vec<usize>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_classes: 8,
            dim: 32,
            n_per_class: 500,
            test_per_class: 200,
            separation: 4.0,
            spread: 1.0,
            noise_kind: NoiseKind::Symmetric,
            noise_ratio: 0.5,
            dataset: None,
            test_dataset: None,
            dataset_sha256: None,

            weak_sigma: 0.1,
            strong_sigma: 0.5,
            strong_dropout_p: 0.1,
            num_weak: 2,

            hidden: vec![64, 64],
            proj_hidden: 64,
            proj_dim: 32,

            method: Method::PlReMix,
            epochs: 55,
            warmup_epochs: 5,
            batch_size: 64,
            lr: 0.02,
            lr_decay_epoch: None,
            lr_decay: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,

            temperature: 0.25,
            tau_s: 0.1,
            sharpen_t: 0.5,
            alpha: 0.5,
            beta: 4.0,
            eta: 0.99,
            lambda_u: 1.0,
            lambda_i: 1.0,
            kappa_schedule: KappaSchedule::Auto,
            use_flat: true,
            crl_variant: CrlVariant::Plr,
            gmm_variant: GmmVariant::TwoD,
            mixup_max_lambda: false,
            p_threshold: 0.5,
            gmm_max_iters: 10,
            gmm_tol: 1e-2,
            gmm_cov_floor: 5e-4,
            normalize_losses: true,
            seed: 0,

            conflict_stats: true,
            fig_epochs: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "num_classes" => self.num_classes = parse(key, v)?,
            "dim" => self.dim = parse(key, v)?,
            "n_per_class" => self.n_per_class = parse(key, v)?,
            "test_per_class" => self.test_per_class = parse(key, v)?,
            "separation" => self.separation = parse(key, v)?,
            "spread" => self.spread = parse(key, v)?,
            "noise_kind" => self.noise_kind = v.parse()?,
            "noise_ratio" => self.noise_ratio = parse(key, v)?,
            "dataset" => self.dataset = opt_path(v),
            "test_dataset" => self.test_dataset = opt_path(v),
            "dataset_sha256" => self.dataset_sha256 = (!v.is_empty()).then(|| v.to_string()),
            "weak_sigma" => self.weak_sigma = parse(key, v)?,
            "strong_sigma" => self.strong_sigma = parse(key, v)?,
            "strong_dropout_p" => self.strong_dropout_p = parse(key, v)?,
            "num_weak" => self.num_weak = parse(key, v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "proj_hidden" => self.proj_hidden = parse(key, v)?,
            "proj_dim" => self.proj_dim = parse(key, v)?,
            "method" => self.method = v.parse()?,
            "epochs" => self.epochs = parse(key, v)?,
            "warmup_epochs" => self.warmup_epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "lr_decay_epoch" => {
                self.lr_decay_epoch = if v == "auto" { None } else { Some(parse(key, v)?) }
            }
            "lr_decay" => self.lr_decay = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "temperature" => self.temperature = parse(key, v)?,
            "tau_s" => self.tau_s = parse(key, v)?,
            "sharpen_t" => self.sharpen_t = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "eta" => self.eta = parse(key, v)?,
            "lambda_u" => self.lambda_u = parse(key, v)?,
            "lambda_i" => self.lambda_i = parse(key, v)?,
            "kappa_schedule" => self.kappa_schedule = v.parse()?,
            "use_flat" => self.use_flat = parse_bool(key, v)?,
            "crl_variant" => self.crl_variant = v.parse()?,
            "gmm_variant" => self.gmm_variant = v.parse()?,
            "mixup_max_lambda" => self.mixup_max_lambda = parse_bool(key, v)?,
            "p_threshold" => self.p_threshold = parse(key, v)?,
            "gmm_max_iters" => self.gmm_max_iters = parse(key, v)?,
            "gmm_tol" => self.gmm_tol = parse(key, v)?,
            "gmm_cov_floor" => self.gmm_cov_floor = parse(key, v)?,
            "normalize_losses" => self.normalize_losses = parse_bool(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "conflict_stats" => self.conflict_stats = parse_bool(key, v)?,
            "fig_epochs" => {
                self.fig_epochs = if v == "auto" { None } else { Some(parse_list(key, v)?) }
            }
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                msg: format!("line {}: expected `key = value`", n + 1),
            })?;
            self.set(k.trim(), v).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                msg: format!("line {}: {e}", n + 1),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<TrainConfig> {
        let mut c = TrainConfig::default();
        c.apply_text(text, origin)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<TrainConfig> {
        TrainConfig::from_text(&std::fs::read_to_string(path)?, path)
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order. Feeding the
    /// output back through [`TrainConfig::from_text`] gives an equal config.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let pairs: Vec<(&str, String)> = vec![
            ("num_classes", self.num_classes.to_string()),
            ("dim", self.dim.to_string()),
            ("n_per_class", self.n_per_class.to_string()),
            ("test_per_class", self.test_per_class.to_string()),
            ("separation", self.separation.to_string()),
            ("spread", self.spread.to_string()),
            ("noise_kind", self.noise_kind.to_string()),
            ("noise_ratio", self.noise_ratio.to_string()),
            ("dataset", path(&self.dataset)),
            ("test_dataset", path(&self.test_dataset)),
            ("dataset_sha256", self.dataset_sha256.clone().unwrap_or_default()),
            ("weak_sigma", self.weak_sigma.to_string()),
            ("strong_sigma", self.strong_sigma.to_string()),
            ("strong_dropout_p", self.strong_dropout_p.to_string()),
            ("num_weak", self.num_weak.to_string()),
            ("hidden", join(&self.hidden)),
            ("proj_hidden", self.proj_hidden.to_string()),
            ("proj_dim", self.proj_dim.to_string()),
            ("method", self.method.to_string()),
            ("epochs", self.epochs.to_string()),
            ("warmup_epochs", self.warmup_epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            (
                "lr_decay_epoch",
                self.lr_decay_epoch.map_or("auto".to_string(), |e| e.to_string()),
            ),
            ("lr_decay", self.lr_decay.to_string()),
            ("momentum", self.momentum.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("temperature", self.temperature.to_string()),
            ("tau_s", self.tau_s.to_string()),
            ("sharpen_t", self.sharpen_t.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("eta", self.eta.to_string()),
            ("lambda_u", self.lambda_u.to_string()),
            ("lambda_i", self.lambda_i.to_string()),
            ("kappa_schedule", self.kappa_schedule.to_string()),
            ("use_flat", self.use_flat.to_string()),
            ("crl_variant", self.crl_variant.to_string()),
            ("gmm_variant", self.gmm_variant.to_string()),
            ("mixup_max_lambda", self.mixup_max_lambda.to_string()),
            ("p_threshold", self.p_threshold.to_string()),
            ("gmm_max_iters", self.gmm_max_iters.to_string()),
            ("gmm_tol", self.gmm_tol.to_string()),
            ("gmm_cov_floor", self.gmm_cov_floor.to_string()),
            ("normalize_losses", self.normalize_losses.to_string()),
            ("seed", self.seed.to_string()),
            ("conflict_stats", self.conflict_stats.to_string()),
            (
                "fig_epochs",
                self.fig_epochs.as_ref().map_or("auto".to_string(), |v| join(v)),
            ),
        ];
        let mut s = String::new();
        for (k, v) in pairs {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    pub fn post_warmup_epochs(&self) -> usize {
        self.epochs.saturating_sub(self.warmup_epochs)
    }

    pub fn resolved_schedule(&self) -> Vec<(usize, usize)> {
        self.kappa_schedule.resolve(self.post_warmup_epochs())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let post = self.post_warmup_epochs();
        let decay_at = self.warmup_epochs + self.lr_decay_epoch.unwrap_or(post / 2);
        if epoch >= self.warmup_epochs && epoch >= decay_at && post > 0 {
            self.lr * self.lr_decay
        } else {
            self.lr
        }
    }

    pub fn resolved_fig_epochs(&self) -> Vec<usize> {
        match &self.fig_epochs {
            Some(v) => v.clone(),
            None if self.epochs > self.warmup_epochs => {
                let mid = self.warmup_epochs + self.post_warmup_epochs() / 2;
                let last = self.epochs - 1;
                if mid == last {
                    vec![mid]
                } else {
                    vec![mid, last]
                }
            }
            None => Vec::new(),
        }
    }

    pub fn augment_spec(&self) -> AugmentSpec {
        AugmentSpec {
            weak_sigma: self.weak_sigma,
            strong_sigma: self.strong_sigma,
            strong_dropout_p: self.strong_dropout_p,
            num_weak: self.num_weak,
            num_strong: 2,
        }
    }

    pub fn net_dims(&self, input: usize) -> NetDims {
        NetDims {
            input,
            hidden: self.hidden.clone(),
            classes: self.num_classes,
            proj_hidden: self.proj_hidden,
            proj_dim: self.proj_dim,
        }
    }

    pub fn proto_params(&self) -> ProtoParams {
        ProtoParams {
            eta: self.eta,
            tau_s: self.tau_s,
            alpha: self.alpha,
        }
    }

    pub fn em_options(&self) -> crate::select::EmOptions {
        crate::select::EmOptions {
            max_iters: self.gmm_max_iters,
            tol: self.gmm_tol,
            cov_floor: self.gmm_cov_floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.gmm_max_iters == 0 || !(self.gmm_cov_floor > 0.0) || !(self.gmm_tol >= 0.0) {
            return bad("gmm_max_iters and gmm_cov_floor must be positive, gmm_tol >= 0".into());
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.warmup_epochs > self.epochs {
            return bad(format!(
                "warmup_epochs ({}) exceeds epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2".into());
        }
        if !(0.0..=1.0).contains(&self.noise_ratio) {
            return bad(format!("noise_ratio {} outside [0, 1]", self.noise_ratio));
        }
        for (name, v) in [
            ("temperature", self.temperature),
            ("tau_s", self.tau_s),
            ("sharpen_t", self.sharpen_t),
            ("beta", self.beta),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("eta", self.eta),
            ("p_threshold", self.p_threshold),
            ("momentum", self.momentum),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        for (name, v) in [
            ("lr", self.lr),
            ("lr_decay", self.lr_decay),
            ("weight_decay", self.weight_decay),
            ("lambda_u", self.lambda_u),
            ("lambda_i", self.lambda_i),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if let KappaSchedule::Explicit(s) = &self.kappa_schedule {
            validate_schedule(s)?;
        }
        if self.dataset.is_some() != self.test_dataset.is_some() {
            return bad("`dataset` and `test_dataset` must be given together".into());
        }
        self.augment_spec().validate()?;
        self.net_dims(self.dim).validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_examples() {
        let s = [(0, 3), (40, 2), (70, 1)];
        assert_eq!(kappa_at(0, &s).unwrap(), (3, true));
        assert_eq!(kappa_at(39, &s).unwrap(), (3, true));
        assert_eq!(kappa_at(40, &s).unwrap(), (2, true));
        assert_eq!(kappa_at(70, &s).unwrap(), (1, false));
        assert_eq!(kappa_at(500, &[(0, 1)]).unwrap(), (1, false));
        assert!(kappa_at(3, &[]).is_err());
    }

    #[test]
    fn auto_schedule_scales_breakpoints() {
        assert_eq!(KappaSchedule::Auto.resolve(100), vec![(0, 3), (40, 2), (70, 1)]);
        assert_eq!(KappaSchedule::Auto.resolve(50), vec![(0, 3), (20, 2), (35, 1)]);
    }

    #[test]
    fn schedule_parsing() {
        let s: KappaSchedule = "0:3, 20:2,35:1".parse().unwrap();
        assert_eq!(s, KappaSchedule::Explicit(vec![(0, 3), (20, 2), (35, 1)]));
        assert_eq!(s.to_string(), "0:3,20:2,35:1");
        assert!("0:1,10:2".parse::<KappaSchedule>().is_err());
        assert!("5:3".parse::<KappaSchedule>().is_err());
        assert!("".parse::<KappaSchedule>().is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::default();
        c.apply_overrides(&["seed=9", "crl_variant = vanilla", "hidden=16,8", "fig_epochs=3,4"])
            .unwrap();
        let text = c.to_text();
        let back = TrainConfig::from_text(&text, Path::new("x")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn comments_and_unknown_keys() {
        let text = "# comment\nseed = 4  # trailing\n\nepochs=12\n";
        let c = TrainConfig::from_text(text, Path::new("c.cfg")).unwrap();
        assert_eq!((c.seed, c.epochs), (4, 12));
        let err = TrainConfig::from_text("sede = 1\n", Path::new("c.cfg")).unwrap_err();
        assert!(err.to_string().contains("sede"), "{err}");
        assert!(TrainConfig::from_text("no equals sign\n", Path::new("c.cfg")).is_err());
    }

    #[test]
    fn lr_steps_down_once() {
        let c = TrainConfig {
            epochs: 30,
            warmup_epochs: 10,
            lr: 0.1,
            lr_decay: 0.5,
            ..TrainConfig::default()
        };
        assert_eq!(c.lr_at(0), 0.1);
        assert_eq!(c.lr_at(19), 0.1);
        assert_eq!(c.lr_at(20), 0.05);
    }

    #[test]
    fn validation_catches_bad_values() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            warmup_epochs: 20,
            epochs: 10,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            temperature: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
