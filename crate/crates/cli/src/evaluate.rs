//! `evaluate`: scores converted outputs against a reference manifest.

use std::path::{Path, PathBuf};

use serde_json::json;
use unitstyle::alignio::{
    align_unit_transcript, load_manifest, parse_unit_transcript, read_textgrid, resolve_textgrid, SilenceSet,
    UttAlignment, Utterance,
};
use unitstyle::metrics::{evaluate_corpus, match_by_id, EvalOptions, EvalPair, SegmentAggregation};
use unitstyle::pipeline::{load_converted, ConvertedUtterance};
use unitstyle::unitseq::UnitId;

use crate::config::{key, key_or, Key, RunConfig};
use crate::error::CliError;
use crate::output::{event, out_dir, write_file};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

pub fn keys() -> Vec<Key> {
    vec![
        key("out"),
        key_or("seed", 0),
        key_or("threads", 1),
        key("converted"),
        key("reference"),
        key_or("aggregation", "frame"),
        key("silence_extra"),
    ]
}

fn parse_aggregation(s: &str) -> Result<SegmentAggregation, CliError> {
    match s {
        "frame" => Ok(SegmentAggregation::FrameWeighted),
        "segment" => Ok(SegmentAggregation::SegmentMean),
        _ => Err(CliError::input(format!(
            "config key `aggregation`: expected frame or segment, got `{s}`"
        ))),
    }
}

/// Every converted utterance file in `dir`, sorted by name.
fn load_converted_dir(dir: &Path) -> Result<Vec<ConvertedUtterance>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::input(format!("cannot read converted directory {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| p.file_name().is_some_and(|n| n != REPORT_JSON))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_converted(p).map_err(CliError::from)).collect()
}

fn transcript_words(u: &Utterance) -> Option<Vec<Vec<UnitId>>> {
    parse_unit_transcript(u.text.as_deref()?).ok().filter(|w| !w.is_empty())
}

fn reference_alignment(
    manifest: &Path,
    u: &Utterance,
    silence: &SilenceSet,
) -> Result<Option<UttAlignment>, CliError> {
    if let Some(p) = resolve_textgrid(manifest, u) {
        return Ok(Some(UttAlignment::from_textgrid(&read_textgrid(p)?, silence)?));
    }
    match transcript_words(u).and_then(|w| align_unit_transcript(&u.units, &w)) {
        Some(g) => Ok(Some(UttAlignment::from_textgrid(&g, silence)?)),
        None => Ok(None),
    }
}

/// A TextGrid next to the converted file wins; otherwise the converted
/// units are aligned against the reference transcript.
fn synthesized_alignment(
    dir: &Path,
    c: &ConvertedUtterance,
    reference: &Utterance,
    silence: &SilenceSet,
) -> Result<Option<UttAlignment>, CliError> {
    let tg = dir.join(format!("{}.TextGrid", c.utt_id));
    if tg.is_file() {
        return Ok(Some(UttAlignment::from_textgrid(&read_textgrid(tg)?, silence)?));
    }
    match transcript_words(reference).and_then(|w| align_unit_transcript(&c.units, &w)) {
        Some(g) => Ok(Some(UttAlignment::from_textgrid(&g, silence)?)),
        None => Ok(None),
    }
}

pub fn run(cfg: &mut RunConfig) -> Result<(), CliError> {
    let conv_dir = cfg.path("converted")?;
    let manifest = cfg.path("reference")?;
    let aggregation = parse_aggregation(cfg.require("aggregation")?)?;
    let silence = SilenceSet::with_extra(cfg.list::<String>("silence_extra")?.unwrap_or_default());

    let converted = load_converted_dir(&conv_dir)?;
    let reference = load_manifest(&manifest)?;
    let (matched, unmatched) = match_by_id(&converted, &reference);
    if matched.is_empty() {
        return Err(CliError::input(format!(
            "no converted utterance in {} has an id in {}",
            conv_dir.display(),
            manifest.display()
        )));
    }
    let pairs = matched
        .iter()
        .map(|(c, r)| {
            Ok(EvalPair {
                utt_id: r.utt_id.clone(),
                reference: r.f0.clone(),
                synthesized: c.f0.clone(),
                ref_alignment: reference_alignment(&manifest, r, &silence)?,
                syn_alignment: synthesized_alignment(&conv_dir, c, r, &silence)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = evaluate_corpus(&pairs, &EvalOptions { aggregation })?;

    let dir = out_dir(cfg)?;
    cfg.echo(&dir)?;
    write_file(&dir.join(REPORT_JSON), &(report.to_json()? + "\n"))?;
    let table = report.to_table();
    write_file(&dir.join(REPORT_TXT), &table)?;

    let m = &report.mean;
    event(
        "evaluated",
        json!({
            "matched": pairs.len(),
            "unmatched_converted": unmatched,
            "missing_converted": reference.len() - pairs.len(),
            "mean": m,
            "counts": report.counts,
            "out": dir.display().to_string(),
        }),
    );
    eprint!("{table}");
    eprintln!(
        "evaluated {} utterances ({} converted files without a reference); report in {}",
        pairs.len(),
        unmatched,
        dir.display()
    );
    Ok(())
}
