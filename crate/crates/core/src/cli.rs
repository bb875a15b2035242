//! Command-line front end: `gen`, `train`, `ablate` and `diag`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::diag;
use crate::trainer::{
    self, best_last, Data, FigureRecorder, Observer, TrainConfig, METRICS_HEADER,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Verb {
    /// Write the training and test splits as CSV.
    Gen,
    /// Run one training job.
    Train,
    /// Sweep one config axis and summarise best/last accuracy per arm.
    Ablate,
    /// Run with conflict statistics on and write the figure exports.
    Diag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Axis {
    CrlVariant,
    GmmVariant,
    KappaFixed,
}

impl Axis {
    fn key(self) -> &'static str {
        match self {
            Axis::CrlVariant => "crl_variant",
            Axis::GmmVariant => "gmm_variant",
            Axis::KappaFixed => "kappa_fixed",
        }
    }

    fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            Axis::CrlVariant => &["plr", "vanilla", "scl", "none"],
            Axis::GmmVariant => &["2d", "1d"],
            Axis::KappaFixed => &["3", "2", "1", "schedule"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Config overrides realising one arm.
    fn overrides(self, value: &str) -> Result<Vec<String>> {
        Ok(match self {
            Axis::CrlVariant => vec![format!("crl_variant={value}")],
            Axis::GmmVariant => vec![format!("gmm_variant={value}")],
            Axis::KappaFixed if value == "schedule" => Vec::new(),
            Axis::KappaFixed => {
                let k: usize = value
                    .parse()
                    .map_err(|_| Error::Config(format!("kappa_fixed arm `{value}` is not a number")))?;
                vec![format!("kappa_schedule=0:{k}")]
            }
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "plremix", about = "Noisy-label training on synthetic blobs", version)]
pub struct Command {
    #[arg(value_enum)]
    pub verb: Verb,
    /// `key = value` config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override a config key after the file is read (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Axis swept by `ablate`.
    #[arg(long, value_enum)]
    pub axis: Option<Axis>,
    /// Comma-separated arm values for `ablate`; all values of the axis by
    /// default.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
}

impl Command {
    pub fn resolve_config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::from_file(p)?,
            None => TrainConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Streams metric rows to a CSV file as epochs finish, so a diverged run
/// still leaves its history on disk.
pub struct MetricsWriter {
    out: BufWriter<File>,
    error: Option<std::io::Error>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        out.flush()?;
        Ok(MetricsWriter { out, error: None })
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.out.flush()?;
        Ok(())
    }
}

impl Observer for MetricsWriter {
    fn on_epoch_end(&mut self, ev: &trainer::EpochEvent) {
        if self.error.is_some() {
            return;
        }
        let res = writeln!(self.out, "{}", ev.row.to_csv_line()).and_then(|_| self.out.flush());
        if let Err(e) = res {
            self.error = Some(e);
        }
    }
}

pub const MANIFEST: &str = "manifest.cfg";
pub const METRICS: &str = "metrics.csv";

/// Resolved config with the dataset hash pinned.
pub fn manifest_text(cfg: &TrainConfig, data: &Data) -> String {
    let mut pinned = cfg.clone();
    pinned.dataset_sha256 = Some(data.sha256());
    format!("# resolved run configuration\n{}", pinned.to_text())
}

pub fn gen(cfg: &TrainConfig, out: &Path) -> Result<Data> {
    std::fs::create_dir_all(out)?;
    let data = trainer::generate_data(cfg)?;
    data.train.write_csv(&out.join("train.csv"))?;
    data.test.write_csv(&out.join("test.csv"))?;
    println!(
        "noise: nominal {} ({}), realized fraction {:.4}",
        cfg.noise_ratio,
        cfg.noise_kind,
        data.train.realized_noise()
    );
    println!("dataset sha256 {}", data.sha256());
    Ok(data)
}

/// Runs one job into `out`: manifest, streamed metrics, figure exports.
/// A divergence leaves `diverged.txt` next to the partial metrics.
pub fn train(cfg: &TrainConfig, out: &Path) -> Result<Vec<trainer::MetricsRow>> {
    std::fs::create_dir_all(out)?;
    let data = trainer::prepare_data(cfg)?;
    std::fs::write(out.join(MANIFEST), manifest_text(cfg, &data))?;
    let mut writer = MetricsWriter::create(&out.join(METRICS))?;
    let mut figs = FigureRecorder::new(cfg.resolved_fig_epochs());
    let res = trainer::run(cfg, &data, &mut trainer::Fanout(vec![&mut writer, &mut figs]));
    writer.finish()?;
    match res {
        Ok(output) => {
            figs.write(out)?;
            log::info!("finished {} epochs into {}", cfg.epochs, out.display());
            Ok(output.history)
        }
        Err(e) => {
            std::fs::write(out.join("diverged.txt"), format!("{e}\n\n{}", cfg.to_text()))?;
            Err(e)
        }
    }
}

pub const SUMMARY_HEADER: &str = "axis,value,best_acc,last_acc,dataset_sha256";

/// Runs every arm serially under the same seed and writes `summary.csv`.
pub fn ablate(cfg: &TrainConfig, axis: Axis, values: &[String], out: &Path) -> Result<String> {
    std::fs::create_dir_all(out)?;
    let values = if values.is_empty() { axis.default_values() } else { values.to_vec() };
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for value in &values {
        let mut arm = cfg.clone();
        arm.apply_overrides(&axis.overrides(value)?)?;
        arm.validate()?;
        let dir = out.join(format!("{}_{value}", axis.key()));
        let history = train(&arm, &dir)?;
        let hash = trainer::prepare_data(&arm)?.sha256();
        let (best, last) = best_last(&history).map_or((String::new(), String::new()), |(b, l)| {
            (b.to_string(), l.to_string())
        });
        summary.push_str(&format!("{},{value},{best},{last},{hash}\n", axis.key()));
    }
    std::fs::write(out.join("summary.csv"), &summary)?;
    Ok(summary)
}

pub const CONFLICT_HEADER: &str = "epoch,batches,neg_ent_frac_plr,neg_ent_frac_vanilla,mag_median_plr,mag_median_vanilla";

/// Per-epoch summary of exported conflict rows: share of batches with
/// negative entanglement and median magnitude ratio for each variant.
pub fn conflict_summary(rec: &FigureRecorder) -> String {
    let mut s = format!("{CONFLICT_HEADER}\n");
    for &e in &rec.epochs {
        let rows: Vec<_> = rec.conflicts.iter().filter(|r| r.epoch == e).collect();
        if rows.is_empty() {
            continue;
        }
        let frac = |pick: &dyn Fn(&diag::ConflictRow) -> Option<diag::ConflictStats>| {
            let v: Vec<f64> = rows.iter().filter_map(|r| pick(r)).map(|c| c.entanglement).collect();
            (!v.is_empty()).then(|| v.iter().filter(|&&x| x < 0.0).count() as f64 / v.len() as f64)
        };
        let mag = |pick: &dyn Fn(&diag::ConflictRow) -> Option<diag::ConflictStats>| {
            let v: Vec<f64> = rows.iter().filter_map(|r| pick(r)).map(|c| c.magnitude_ratio).collect();
            diag::median(&v)
        };
        let plr = |r: &diag::ConflictRow| r.plr;
        let van = |r: &diag::ConflictRow| r.vanilla;
        s.push_str(&format!(
            "{e},{},{},{},{},{}\n",
            rows.len(),
            diag::fmt_opt(frac(&plr)),
            diag::fmt_opt(frac(&van)),
            diag::fmt_opt(mag(&plr)),
            diag::fmt_opt(mag(&van)),
        ));
    }
    s
}

/// Training run with conflict statistics forced on; writes the figure
/// exports and `conflict_summary.csv`.
pub fn diag_run(cfg: &TrainConfig, out: &Path) -> Result<String> {
    std::fs::create_dir_all(out)?;
    let mut cfg = cfg.clone();
    cfg.conflict_stats = true;
    let data = trainer::prepare_data(&cfg)?;
    std::fs::write(out.join(MANIFEST), manifest_text(&cfg, &data))?;
    let mut figs = FigureRecorder::new(cfg.resolved_fig_epochs());
    trainer::run(&cfg, &data, &mut figs)?;
    figs.write(out)?;
    let summary = conflict_summary(&figs);
    std::fs::write(out.join("conflict_summary.csv"), &summary)?;
    Ok(summary)
}

pub fn execute(cmd: &Command) -> Result<()> {
    let cfg = cmd.resolve_config()?;
    match cmd.verb {
        Verb::Gen => gen(&cfg, &cmd.out).map(|_| ()),
        Verb::Train => train(&cfg, &cmd.out).map(|_| ()),
        Verb::Ablate => {
            let axis = cmd
                .axis
                .ok_or_else(|| Error::InvalidArgument("ablate needs --axis".into()))?;
            print!("{}", ablate(&cfg, axis, &cmd.values, &cmd.out)?);
            Ok(())
        }
        Verb::Diag => {
            print!("{}", diag_run(&cfg, &cmd.out)?);
            Ok(())
        }
    }
}
