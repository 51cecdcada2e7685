//! `gen-corpus`: synthetic train/test manifests, ground truth, and oracle targets.

use serde_json::json;
use unitstyle::alignio::save_manifest;
use unitstyle::syncorpus::{gen_corpus, oracle_manifest, SynCorpusConfig, Trend};

use crate::config::{key, key_or, Key, RunConfig};
use crate::error::CliError;
use crate::output::{event, out_dir, write_file};

pub fn keys() -> Vec<Key> {
    vec![
        key("out"),
        key_or("seed", 0),
        key_or("threads", 1),
        key_or("preset", "two-speaker"),
        key("speakers"),
        key("rates"),
        key("pitch_means"),
        key("pitch_stds"),
        key("trends"),
        key("slopes"),
        key("class_dur_means"),
        key("class_voiced_probs"),
        key("train_utterances"),
        key("test_scripts"),
        key("script_len_min"),
        key("script_len_max"),
        key("word_len_min"),
        key("word_len_max"),
        key("dur_noise"),
        key("pitch_noise"),
    ]
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Per-speaker list override; its length must match the speaker count.
fn per_speaker<T: std::str::FromStr>(cfg: &RunConfig, key: &str, n: usize) -> Result<Option<Vec<T>>, CliError>
where
    T::Err: std::fmt::Display,
{
    match cfg.list::<T>(key)? {
        Some(v) if v.len() != n => Err(CliError::input(format!(
            "config key `{key}`: {} values for {n} speakers",
            v.len()
        ))),
        other => Ok(other),
    }
}

pub fn build_config(cfg: &RunConfig) -> Result<SynCorpusConfig, CliError> {
    let mut c = SynCorpusConfig::preset(cfg.require("preset")?)?;
    c.seed = cfg.value("seed")?;
    if let Some(ids) = cfg.list::<String>("speakers")? {
        if ids.len() != c.speakers.len() {
            // A different speaker count has no preset values to fall back on.
            for k in ["rates", "pitch_means", "pitch_stds", "trends"] {
                if cfg.get(k).is_none() {
                    return Err(CliError::input(format!(
                        "`speakers` lists {} speakers but the preset has {}; `{k}` must be given",
                        ids.len(),
                        c.speakers.len()
                    )));
                }
            }
            let template = c.speakers[0].clone();
            c.speakers = vec![template; ids.len()];
        }
        for (s, id) in c.speakers.iter_mut().zip(ids) {
            s.id = id;
        }
    }
    let n = c.speakers.len();
    if let Some(v) = per_speaker::<f64>(cfg, "rates", n)? {
        c.speakers.iter_mut().zip(v).for_each(|(s, x)| s.rate = x);
    }
    if let Some(v) = per_speaker::<f64>(cfg, "pitch_means", n)? {
        c.speakers.iter_mut().zip(v).for_each(|(s, x)| s.pitch_mean_hz = x);
    }
    if let Some(v) = per_speaker::<f64>(cfg, "pitch_stds", n)? {
        c.speakers.iter_mut().zip(v).for_each(|(s, x)| s.pitch_std_hz = x);
    }
    if let Some(v) = per_speaker::<Trend>(cfg, "trends", n)? {
        c.speakers.iter_mut().zip(v).for_each(|(s, x)| s.trend = x);
    }
    if let Some(v) = per_speaker::<f64>(cfg, "slopes", n)? {
        c.speakers.iter_mut().zip(v).for_each(|(s, x)| s.slope = x);
    }
    if let Some(v) = cfg.list::<f64>("class_dur_means")? {
        c.speakers.iter_mut().for_each(|s| s.class_dur_means = v.clone());
    }
    if let Some(v) = cfg.list::<f64>("class_voiced_probs")? {
        c.speakers.iter_mut().for_each(|s| s.class_voiced_probs = v.clone());
    }
    if let Some(v) = cfg.parse("train_utterances")? {
        c.train_utterances = v;
    }
    if let Some(v) = cfg.parse("test_scripts")? {
        c.test_scripts = v;
    }
    if let Some(v) = cfg.parse("script_len_min")? {
        c.script_len.0 = v;
    }
    if let Some(v) = cfg.parse("script_len_max")? {
        c.script_len.1 = v;
    }
    if let Some(v) = cfg.parse("word_len_min")? {
        c.word_len.0 = v;
    }
    if let Some(v) = cfg.parse("word_len_max")? {
        c.word_len.1 = v;
    }
    if let Some(v) = cfg.parse("dur_noise")? {
        c.dur_noise = v;
    }
    if let Some(v) = cfg.parse("pitch_noise")? {
        c.pitch_noise = v;
    }
    c.validate()?;
    Ok(c)
}

/// Writes every effective generator setting back into `cfg`.
fn record_effective(cfg: &mut RunConfig, c: &SynCorpusConfig) {
    let sp = &c.speakers;
    cfg.set("speakers", join(sp.iter().map(|s| s.id.clone())));
    cfg.set("rates", join(sp.iter().map(|s| s.rate)));
    cfg.set("pitch_means", join(sp.iter().map(|s| s.pitch_mean_hz)));
    cfg.set("pitch_stds", join(sp.iter().map(|s| s.pitch_std_hz)));
    cfg.set("trends", join(sp.iter().map(|s| s.trend)));
    cfg.set("slopes", join(sp.iter().map(|s| s.slope)));
    // Class tables are shared across speakers when set from the config.
    if sp.windows(2).all(|w| w[0].class_dur_means == w[1].class_dur_means) {
        cfg.set("class_dur_means", join(sp[0].class_dur_means.iter()));
    }
    if sp.windows(2).all(|w| w[0].class_voiced_probs == w[1].class_voiced_probs) {
        cfg.set("class_voiced_probs", join(sp[0].class_voiced_probs.iter()));
    }
    cfg.set("train_utterances", c.train_utterances);
    cfg.set("test_scripts", c.test_scripts);
    cfg.set("script_len_min", c.script_len.0);
    cfg.set("script_len_max", c.script_len.1);
    cfg.set("word_len_min", c.word_len.0);
    cfg.set("word_len_max", c.word_len.1);
    cfg.set("dur_noise", c.dur_noise);
    cfg.set("pitch_noise", c.pitch_noise);
}

pub fn run(cfg: &mut RunConfig) -> Result<(), CliError> {
    let c = build_config(cfg)?;
    record_effective(cfg, &c);
    let dir = out_dir(cfg)?;
    cfg.echo(&dir)?;

    let corpus = gen_corpus(&c)?;
    let oracle = oracle_manifest(&corpus.truth, &corpus.test)?;
    save_manifest(&corpus.train, dir.join("train.jsonl"))?;
    save_manifest(&corpus.test, dir.join("test.jsonl"))?;
    save_manifest(&oracle, dir.join("oracle.jsonl"))?;
    write_file(&dir.join("ground_truth.json"), &(corpus.truth.to_json()? + "\n"))?;

    event(
        "gen_corpus",
        json!({
            "speakers": c.speakers.len(),
            "train": corpus.train.len(),
            "test": corpus.test.len(),
            "oracle": oracle.len(),
            "out": dir.display().to_string(),
        }),
    );
    eprintln!(
        "generated {} train, {} test and {} oracle utterances for {} speakers in {}",
        corpus.train.len(),
        corpus.test.len(),
        oracle.len(),
        c.speakers.len(),
        dir.display()
    );
    Ok(())
}
