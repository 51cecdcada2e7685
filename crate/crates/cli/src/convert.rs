//! `convert`: applies trained predictors to every utterance of a manifest.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;
use unitstyle::alignio::{load_manifest, Utterance};
use unitstyle::durmodel::DurPredictor;
use unitstyle::nn::Checkpoint;
use unitstyle::pipeline::{
    converted_to_json, copy_source, ConversionMode, ConversionRequest, ConvertedUtterance, Converter,
};
use unitstyle::pitchmodel::PitchPredictor;
use unitstyle::syncorpus::oracle_id;
use unitstyle::{Error, Scalar};

use crate::config::{key, key_or, Key, RunConfig};
use crate::error::CliError;
use crate::output::{event, out_dir, write_file};

/// Unconverted source relabelled with the target: the evaluation baseline.
const COPY_MODE: &str = "copy";

pub fn keys() -> Vec<Key> {
    vec![
        key("out"),
        key_or("seed", 0),
        key_or("threads", 1),
        key("manifest"),
        key("dur_ckpt"),
        key("pitch_ckpt"),
        key_or("mode", "both"),
        key_or("source", "all"),
        key_or("target", "all"),
    ]
}

/// A conversion mode, or the copy-source baseline.
#[derive(Clone, Copy)]
enum Mode {
    Model(ConversionMode),
    Copy,
}

fn parse_mode(s: &str) -> Result<Mode, CliError> {
    if s == COPY_MODE {
        return Ok(Mode::Copy);
    }
    s.parse()
        .map(Mode::Model)
        .map_err(|_| CliError::input(format!("unknown mode `{s}` (expected rhythm, pitch, both or {COPY_MODE})")))
}

fn load_checkpoint(cfg: &RunConfig, key: &str, needed: bool) -> Result<Option<Checkpoint>, CliError> {
    match cfg.get(key) {
        Some(p) => Ok(Some(Checkpoint::load(p)?)),
        None if needed => Err(CliError::input(format!("this mode needs `{key}`"))),
        None => Ok(None),
    }
}

fn targets_for(utt: &Utterance, target: &str, speakers: &[String]) -> Vec<String> {
    if target == "all" {
        speakers.iter().filter(|s| **s != utt.speaker).cloned().collect()
    } else {
        vec![target.to_string()]
    }
}

fn run_jobs<F>(jobs: &[(&Utterance, String)], convert: F) -> Result<Vec<ConvertedUtterance>, CliError>
where
    F: Fn(&Utterance, &str) -> unitstyle::Result<ConvertedUtterance> + Sync,
{
    let out: Vec<unitstyle::Result<ConvertedUtterance>> = jobs
        .par_iter()
        .map(|(u, t)| {
            let mut c = convert(u, t)?;
            c.utt_id = oracle_id(&u.utt_id, t);
            Ok(c)
        })
        .collect();
    out.into_iter().map(|r| r.map_err(CliError::from)).collect()
}

fn convert_typed<T: Scalar>(
    dur: Option<&Checkpoint>,
    pitch: Option<&Checkpoint>,
    mode: ConversionMode,
    utts: &[Utterance],
    target: &str,
    source: &str,
) -> Result<Vec<ConvertedUtterance>, CliError> {
    let dur = dur.map(DurPredictor::<T>::from_checkpoint).transpose()?;
    let pitch = pitch.map(PitchPredictor::<T>::from_checkpoint).transpose()?;
    let conv = Converter::new(dur.as_ref(), pitch.as_ref())?;
    let table = dur
        .as_ref()
        .map(|d| d.speakers())
        .or(pitch.as_ref().map(|p| p.speakers()))
        .ok_or_else(|| CliError::internal("no model loaded"))?;
    let speakers: Vec<String> = table.entries().iter().map(|e| e.id.clone()).collect();
    for s in [target, source] {
        if s != "all" && !speakers.iter().any(|x| x == s) {
            return Err(Error::UnknownSpeaker(s.to_string()).into());
        }
    }
    let mut jobs = Vec::new();
    for u in utts {
        table.index(&u.speaker)?;
        jobs.extend(targets_for(u, target, &speakers).into_iter().map(|t| (u, t)));
    }
    run_jobs(&jobs, |u, t| conv.convert(u, &ConversionRequest::for_utterance(u, t, mode)))
}

pub fn run(cfg: &mut RunConfig) -> Result<(), CliError> {
    let manifest = cfg.path("manifest")?;
    let mode_name = cfg.require("mode")?.to_string();
    let mode = parse_mode(&mode_name)?;
    let target = cfg.require("target")?.to_string();
    let source = cfg.require("source")?.to_string();
    let (dur, pitch) = match mode {
        Mode::Model(m) => (
            load_checkpoint(cfg, "dur_ckpt", m.needs_duration())?,
            load_checkpoint(cfg, "pitch_ckpt", m.needs_pitch())?,
        ),
        Mode::Copy => (None, None),
    };
    let all = load_manifest(&manifest)?;
    let utts: Vec<Utterance> = all.into_iter().filter(|u| source == "all" || u.speaker == source).collect();

    let converted = match mode {
        Mode::Copy => {
            let speakers: Vec<String> = load_manifest(&manifest)?
                .iter()
                .map(|u| u.speaker.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            for s in [&target, &source] {
                if s != "all" && !speakers.contains(s) {
                    return Err(Error::UnknownSpeaker(s.clone()).into());
                }
            }
            let jobs: Vec<(&Utterance, String)> = utts
                .iter()
                .flat_map(|u| targets_for(u, &target, &speakers).into_iter().map(move |t| (u, t)))
                .collect();
            run_jobs(&jobs, |u, t| Ok(copy_source(u, t)))?
        }
        Mode::Model(m) => {
            // Full precision unless every checkpoint was trained in f32.
            let all_f32 = dur.iter().chain(pitch.iter()).all(|c| c.dtype == "f32");
            let (d, p) = (dur.as_ref(), pitch.as_ref());
            if all_f32 {
                convert_typed::<f32>(d, p, m, &utts, &target, &source)?
            } else {
                convert_typed::<f64>(d, p, m, &utts, &target, &source)?
            }
        }
    };

    let dir = out_dir(cfg)?;
    cfg.echo(&dir)?;
    for c in &converted {
        write_file(&dir.join(format!("{}.json", c.utt_id)), &(converted_to_json(c)? + "\n"))?;
    }
    report(&manifest, &mode_name, utts.len(), &converted, &dir);
    Ok(())
}

fn report(manifest: &Path, mode: &str, inputs: usize, converted: &[ConvertedUtterance], dir: &Path) {
    let frames: usize = converted.iter().map(|c| c.units.len()).sum();
    event(
        "converted",
        json!({
            "manifest": manifest.display().to_string(),
            "mode": mode,
            "inputs": inputs,
            "outputs": converted.len(),
            "frames": frames,
            "out": dir.display().to_string(),
        }),
    );
    eprintln!(
        "converted {inputs} utterances into {} files (mode {mode}) in {}",
        converted.len(),
        dir.display()
    );
}
