//! `train-dur` and `train-pitch`.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;
use unitstyle::alignio::load_manifest;
use unitstyle::durmodel::{train_duration, DurArch, DurTrainConfig};
use unitstyle::nn::{AdamConfig, Checkpoint, EpochLog, TrainSummary};
use unitstyle::pitchmodel::{train_pitch, PitchArch, PitchTrainConfig};
use unitstyle::Scalar;

use crate::config::{key, key_or, Key, RunConfig};
use crate::error::CliError;
use crate::output::{event, out_dir, write_file};

pub const DUR_CHECKPOINT: &str = "duration.json";
pub const PITCH_CHECKPOINT: &str = "pitch.json";
pub const TRAIN_LOG: &str = "train_log.jsonl";

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Dur,
    Pitch,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Dur => "duration",
            Kind::Pitch => "pitch",
        }
    }
}

fn common_keys(mask: f64, epochs: usize, batch: usize, val: f64, adam: AdamConfig) -> Vec<Key> {
    vec![
        key("out"),
        key_or("seed", 0),
        key_or("threads", 1),
        key("manifest"),
        key_or("dtype", "f32"),
        key_or("epochs", epochs),
        key_or("batch_size", batch),
        key_or("lr", adam.lr),
        key_or("beta1", adam.beta1),
        key_or("beta2", adam.beta2),
        key_or("adam_eps", adam.eps),
        key_or("mask_prob", mask),
        key_or("val_fraction", val),
    ]
}

pub fn keys(kind: Kind) -> Vec<Key> {
    match kind {
        Kind::Dur => {
            let (c, a) = (DurTrainConfig::default(), DurArch::default());
            let mut k = common_keys(c.mask_prob, c.epochs, c.batch_size, c.val_fraction, c.adam);
            k.extend([
                key_or("unit_dim", a.unit_dim),
                key_or("speaker_dim", a.speaker_dim),
                key_or("channels", a.channels),
                key_or("layers", a.layers),
                key_or("kernel", a.kernel),
                key_or("group_size", c.group_size),
                key_or("group_loss_weight", c.group_loss_weight),
            ]);
            k
        }
        Kind::Pitch => {
            let (c, a) = (PitchTrainConfig::default(), PitchArch::default());
            let mut k = common_keys(c.mask_prob, c.epochs, c.batch_size, c.val_fraction, c.adam);
            k.extend([
                key_or("unit_dim", a.unit_dim),
                key_or("speaker_dim", a.speaker_dim),
                key_or("cond_dim", a.cond_dim),
                key_or("channels", a.channels),
                key_or("layers", a.layers),
                key_or("kernel", a.kernel),
                key_or("mse_weight", c.mse_weight),
                key_or("voicing_threshold", c.voicing_threshold),
            ]);
            k
        }
    }
}

fn adam(cfg: &RunConfig) -> Result<AdamConfig, CliError> {
    Ok(AdamConfig {
        lr: cfg.value("lr")?,
        beta1: cfg.value("beta1")?,
        beta2: cfg.value("beta2")?,
        eps: cfg.value("adam_eps")?,
    })
}

pub fn dur_setup(cfg: &RunConfig) -> Result<(DurArch, DurTrainConfig), CliError> {
    let arch = DurArch {
        unit_dim: cfg.value("unit_dim")?,
        speaker_dim: cfg.value("speaker_dim")?,
        channels: cfg.value("channels")?,
        layers: cfg.value("layers")?,
        kernel: cfg.value("kernel")?,
    };
    let tc = DurTrainConfig {
        mask_prob: cfg.value("mask_prob")?,
        group_size: cfg.value("group_size")?,
        group_loss_weight: cfg.value("group_loss_weight")?,
        adam: adam(cfg)?,
        epochs: cfg.value("epochs")?,
        batch_size: cfg.value("batch_size")?,
        seed: cfg.value("seed")?,
        val_fraction: cfg.value("val_fraction")?,
    };
    Ok((arch, tc))
}

pub fn pitch_setup(cfg: &RunConfig) -> Result<(PitchArch, PitchTrainConfig), CliError> {
    let arch = PitchArch {
        unit_dim: cfg.value("unit_dim")?,
        speaker_dim: cfg.value("speaker_dim")?,
        cond_dim: cfg.value("cond_dim")?,
        channels: cfg.value("channels")?,
        layers: cfg.value("layers")?,
        kernel: cfg.value("kernel")?,
    };
    let tc = PitchTrainConfig {
        mask_prob: cfg.value("mask_prob")?,
        mse_weight: cfg.value("mse_weight")?,
        voicing_threshold: cfg.value("voicing_threshold")?,
        adam: adam(cfg)?,
        epochs: cfg.value("epochs")?,
        batch_size: cfg.value("batch_size")?,
        seed: cfg.value("seed")?,
        val_fraction: cfg.value("val_fraction")?,
    };
    Ok((arch, tc))
}

fn epoch_line(kind: Kind, e: &EpochLog) -> serde_json::Value {
    json!({
        "event": "epoch",
        "model": kind.name(),
        "epoch": e.epoch,
        "train_loss": e.train_loss,
        "val_loss": e.val_loss,
    })
}

fn train_typed<T: Scalar>(
    kind: Kind,
    cfg: &RunConfig,
    corpus: &[unitstyle::alignio::Utterance],
    log: &mut String,
) -> Result<(Checkpoint, TrainSummary), CliError> {
    let mut on_epoch = |e: &EpochLog| {
        let line = epoch_line(kind, e);
        println!("{line}");
        let _ = writeln!(log, "{line}");
    };
    Ok(match kind {
        Kind::Dur => {
            let (arch, tc) = dur_setup(cfg)?;
            let (m, s) = train_duration::<T>(corpus, arch, &tc, &mut on_epoch)?;
            (m.to_checkpoint(), s)
        }
        Kind::Pitch => {
            let (arch, tc) = pitch_setup(cfg)?;
            let (m, s) = train_pitch::<T>(corpus, arch, &tc, &mut on_epoch)?;
            (m.to_checkpoint(), s)
        }
    })
}

pub fn checkpoint_name(kind: Kind) -> &'static str {
    match kind {
        Kind::Dur => DUR_CHECKPOINT,
        Kind::Pitch => PITCH_CHECKPOINT,
    }
}

pub fn run(kind: Kind, cfg: &mut RunConfig) -> Result<(), CliError> {
    let manifest = cfg.path("manifest")?;
    let dtype = cfg.require("dtype")?.to_string();
    // Validate hyperparameters before touching the output directory.
    match kind {
        Kind::Dur => dur_setup(cfg)?.0.validate()?,
        Kind::Pitch => pitch_setup(cfg)?.0.validate()?,
    }
    let dir = out_dir(cfg)?;
    cfg.echo(&dir)?;
    let corpus = load_manifest(&manifest)?;

    let mut log = String::new();
    let (ck, summary) = match dtype.as_str() {
        "f32" => train_typed::<f32>(kind, cfg, &corpus, &mut log)?,
        "f64" => train_typed::<f64>(kind, cfg, &corpus, &mut log)?,
        other => return Err(CliError::input(format!("config key `dtype`: expected f32 or f64, got `{other}`"))),
    };
    let ck_path = dir.join(checkpoint_name(kind));
    ck.save(&ck_path)?;
    write_file(&dir.join(TRAIN_LOG), &log)?;
    finish(kind, &manifest, &ck_path, &summary, corpus.len());
    Ok(())
}

fn finish(kind: Kind, manifest: &Path, ck: &Path, s: &TrainSummary, n: usize) {
    event(
        "trained",
        json!({
            "model": kind.name(),
            "manifest": manifest.display().to_string(),
            "checkpoint": ck.display().to_string(),
            "utterances": n,
            "epochs": s.epochs.len(),
            "initial_loss": s.initial_loss,
            "final_loss": s.final_loss,
        }),
    );
    eprintln!(
        "trained {} model on {n} utterances for {} epochs: loss {:.4} -> {:.4}; wrote {}",
        kind.name(),
        s.epochs.len(),
        s.initial_loss,
        s.final_loss,
        ck.display()
    );
}
