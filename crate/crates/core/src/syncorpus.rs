//! Synthetic corpora with known rhythm and pitch ground truth.
//!
//! A script is a deduplicated unit sequence grouped into words. Rendering a
//! script for a speaker draws one duration per unit from the speaker's rate
//! and the unit's class mean, voices whole runs by class, and lays a linear
//! pitch trend over the utterance in the speaker's register. Test scripts
//! are rendered by every speaker (paired); train scripts by one speaker each.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::alignio::{format_unit_transcript, Utterance};
use crate::error::{Error, Result};
use crate::nn::mix_seed;
use crate::pipeline::ConvertedUtterance;
use crate::unitseq::{PitchContour, RleSeq, UnitId, UnitSeq, F0_MAX_HZ, F0_MIN_HZ, VOCAB_SIZE};

/// Separator between source utterance and target speaker in oracle ids.
pub const ORACLE_SEP: &str = "__to__";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Up,
    Down,
    Flat,
}

impl Trend {
    pub fn sign(self) -> f64 {
        match self {
            Trend::Up => 1.0,
            Trend::Down => -1.0,
            Trend::Flat => 0.0,
        }
    }
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trend::Up => "up",
            Trend::Down => "down",
            Trend::Flat => "flat",
        })
    }
}

impl FromStr for Trend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up" => Ok(Trend::Up),
            "down" => Ok(Trend::Down),
            "flat" => Ok(Trend::Flat),
            _ => Err(Error::invalid(format!("unknown trend `{s}` (expected up, down or flat)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynSpeakerSpec {
    pub id: String,
    /// Global duration multiplier.
    pub rate: f64,
    /// Mean duration in frames per unit class (`unit % n_classes`).
    pub class_dur_means: Vec<f64>,
    pub pitch_mean_hz: f64,
    pub pitch_std_hz: f64,
    pub trend: Trend,
    /// Trend magnitude in normalized units per normalized time.
    pub slope: f64,
    /// Probability that a unit of each class is voiced.
    pub class_voiced_probs: Vec<f64>,
}

impl SynSpeakerSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::invalid(format!("speaker `{}`: {field} {msg}", self.id)));
        if self.id.is_empty() || self.id.contains(ORACLE_SEP) {
            return Err(Error::invalid(format!("speaker id `{}` is empty or contains `{ORACLE_SEP}`", self.id)));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return bad("rate", format!("must be > 0, got {}", self.rate));
        }
        if self.class_dur_means.is_empty() || self.class_dur_means.len() > VOCAB_SIZE {
            return bad("class_dur_means", format!("needs 1..={VOCAB_SIZE} classes"));
        }
        if let Some(m) = self.class_dur_means.iter().find(|m| !(**m >= 1.0 && m.is_finite())) {
            return bad("class_dur_means", format!("must all be >= 1, got {m}"));
        }
        if self.class_voiced_probs.len() != self.class_dur_means.len() {
            return bad("class_voiced_probs", "must have one entry per duration class".into());
        }
        if let Some(p) = self.class_voiced_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad("class_voiced_probs", format!("must lie in [0, 1], got {p}"));
        }
        if !(F0_MIN_HZ..=F0_MAX_HZ).contains(&self.pitch_mean_hz) {
            return bad("pitch_mean_hz", format!("must lie in [{F0_MIN_HZ}, {F0_MAX_HZ}], got {}", self.pitch_mean_hz));
        }
        if !(self.pitch_std_hz > 0.0 && self.pitch_std_hz.is_finite()) {
            return bad("pitch_std_hz", format!("must be > 0, got {}", self.pitch_std_hz));
        }
        if !(self.slope >= 0.0 && self.slope.is_finite()) {
            return bad("slope", format!("must be >= 0, got {}", self.slope));
        }
        Ok(())
    }

    pub fn class_of(&self, unit: UnitId) -> usize {
        usize::from(unit) % self.class_dur_means.len()
    }

    /// Signed trend slope.
    pub fn signed_slope(&self) -> f64 {
        self.trend.sign() * self.slope
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynCorpusConfig {
    pub speakers: Vec<SynSpeakerSpec>,
    /// Train utterances in total, assigned to speakers round-robin, each with its own script.
    pub train_utterances: usize,
    /// Scripts rendered by every speaker in the test split.
    pub test_scripts: usize,
    /// Inclusive range of deduplicated units per script.
    pub script_len: (usize, usize),
    /// Inclusive range of units per word.
    pub word_len: (usize, usize),
    /// Std of the Gaussian added to each duration before rounding, in frames.
    pub dur_noise: f64,
    /// Std of per-frame pitch noise, in normalized units.
    pub pitch_noise: f64,
    pub seed: u64,
}

pub const DEFAULT_CLASS_DUR_MEANS: [f64; 4] = [2.0, 3.0, 4.0, 5.0];
pub const DEFAULT_CLASS_VOICED_PROBS: [f64; 4] = [1.0, 1.0, 1.0, 0.0];

fn preset_speaker(id: &str, rate: f64, mean: f64, std: f64, trend: Trend) -> SynSpeakerSpec {
    SynSpeakerSpec {
        id: id.to_string(),
        rate,
        class_dur_means: DEFAULT_CLASS_DUR_MEANS.to_vec(),
        pitch_mean_hz: mean,
        pitch_std_hz: std,
        trend,
        slope: 1.0,
        class_voiced_probs: DEFAULT_CLASS_VOICED_PROBS.to_vec(),
    }
}

impl Default for SynCorpusConfig {
    /// Two speakers at rates 1.0 and 2.0; 200 train and 20 paired test scripts.
    fn default() -> Self {
        SynCorpusConfig {
            speakers: vec![
                preset_speaker("spk_a", 1.0, 120.0, 40.0, Trend::Up),
                preset_speaker("spk_b", 2.0, 200.0, 60.0, Trend::Down),
            ],
            train_utterances: 200,
            test_scripts: 20,
            script_len: (8, 20),
            word_len: (2, 4),
            dur_noise: 0.5,
            pitch_noise: 0.05,
            seed: 0,
        }
    }
}

impl SynCorpusConfig {
    /// Three speakers with up, down and flat trends at rates 1.0, 2.0 and 1.5.
    pub fn three_speakers() -> Self {
        SynCorpusConfig {
            speakers: vec![
                preset_speaker("spk_a", 1.0, 120.0, 40.0, Trend::Up),
                preset_speaker("spk_b", 2.0, 200.0, 60.0, Trend::Down),
                preset_speaker("spk_c", 1.5, 160.0, 50.0, Trend::Flat),
            ],
            ..SynCorpusConfig::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "two-speaker" => Ok(SynCorpusConfig::default()),
            "three-speaker" => Ok(SynCorpusConfig::three_speakers()),
            _ => Err(Error::invalid(format!(
                "unknown preset `{name}` (expected two-speaker or three-speaker)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.speakers.len() < 2 {
            return Err(Error::invalid("speakers: need at least 2"));
        }
        for (i, s) in self.speakers.iter().enumerate() {
            s.validate()?;
            if self.speakers[..i].iter().any(|o| o.id == s.id) {
                return Err(Error::invalid(format!("speakers: duplicate id `{}`", s.id)));
            }
        }
        let (lo, hi) = self.script_len;
        if lo < 2 || hi < lo {
            return Err(Error::invalid(format!("script_len: need 2 <= min <= max, got {lo}..{hi}")));
        }
        let (wlo, whi) = self.word_len;
        if wlo == 0 || whi < wlo {
            return Err(Error::invalid(format!("word_len: need 1 <= min <= max, got {wlo}..{whi}")));
        }
        if self.test_scripts == 0 && self.train_utterances == 0 {
            return Err(Error::invalid("train_utterances and test_scripts are both 0"));
        }
        for (name, v) in [("dur_noise", self.dur_noise), ("pitch_noise", self.pitch_noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name}: must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn speaker(&self, id: &str) -> Option<&SynSpeakerSpec> {
        self.speakers.iter().find(|s| s.id == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub id: String,
    pub words: Vec<Vec<UnitId>>,
    /// One uniform draw per unit, compared against each speaker's class voicing probability.
    pub voicing_draws: Vec<f64>,
}

impl Script {
    pub fn units(&self) -> Vec<UnitId> {
        self.words.iter().flatten().copied().collect()
    }

    pub fn transcript(&self) -> String {
        format_unit_transcript(&self.words)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UttOrigin {
    pub script: String,
    pub speaker: String,
    pub split: String,
}

/// Everything needed to re-render any utterance: the config, scripts, and the utterance map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynCorpusConfig,
    pub scripts: Vec<Script>,
    pub utterances: BTreeMap<String, UttOrigin>,
}

impl GroundTruth {
    pub fn script(&self, id: &str) -> Option<&Script> {
        self.scripts.iter().find(|s| s.id == id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: GroundTruth = serde_json::from_str(s)?;
        g.config.validate()?;
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynCorpus {
    pub train: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub truth: GroundTruth,
}

/// Zipf-like draw of `len` units with no immediate repeats.
fn draw_script(rng: &mut ChaCha8Rng, len: usize, word_len: (usize, usize), id: String) -> Script {
    let weights: Vec<f64> = (0..VOCAB_SIZE).map(|u| 1.0 / (u as f64 + 1.0)).collect();
    let dist = WeightedIndex::new(&weights).expect("positive weights");
    let mut units: Vec<UnitId> = Vec::with_capacity(len);
    while units.len() < len {
        let u = dist.sample(rng) as UnitId;
        if units.last() != Some(&u) {
            units.push(u);
        }
    }
    let mut words = Vec::new();
    let mut rest = &units[..];
    while !rest.is_empty() {
        let n = rng.gen_range(word_len.0..=word_len.1).min(rest.len());
        words.push(rest[..n].to_vec());
        rest = &rest[n..];
    }
    let voicing_draws = (0..len).map(|_| rng.gen::<f64>()).collect();
    Script {
        id,
        words,
        voicing_draws,
    }
}

/// Renders `script` for `spk`. `noise` seeds duration and pitch noise; `None` renders noise-free.
pub fn render(script: &Script, spk: &SynSpeakerSpec, cfg: &SynCorpusConfig, noise: Option<u64>) -> Result<(UnitSeq, PitchContour<f64>)> {
    let units = script.units();
    let mut rng = noise.map(ChaCha8Rng::seed_from_u64);
    let dur_noise = Normal::new(0.0, cfg.dur_noise.max(f64::MIN_POSITIVE)).expect("valid std");
    let pitch_noise = Normal::new(0.0, cfg.pitch_noise.max(f64::MIN_POSITIVE)).expect("valid std");

    let durations: Vec<usize> = units
        .iter()
        .map(|&u| {
            let mean = spk.rate * spk.class_dur_means[spk.class_of(u)];
            let e = match (&mut rng, cfg.dur_noise > 0.0) {
                (Some(r), true) => dur_noise.sample(r),
                _ => 0.0,
            };
            (mean + e).round().max(1.0) as usize
        })
        .collect();
    let seq = RleSeq::with_durations(&units, &durations)?.inflate();

    let total = seq.len();
    let slope = spk.signed_slope();
    let mut f0 = Vec::with_capacity(total);
    for (k, (&u, &d)) in units.iter().zip(&durations).enumerate() {
        let voiced = script.voicing_draws[k] < spk.class_voiced_probs[spk.class_of(u)];
        for _ in 0..d {
            let i = f0.len();
            let t = if total > 1 { i as f64 / (total - 1) as f64 } else { 0.0 };
            let e = match (&mut rng, cfg.pitch_noise > 0.0) {
                (Some(r), true) => pitch_noise.sample(r),
                _ => 0.0,
            };
            f0.push(if voiced {
                (spk.pitch_mean_hz + spk.pitch_std_hz * (slope * (t - 0.5) + e)).clamp(F0_MIN_HZ, F0_MAX_HZ)
            } else {
                0.0
            });
        }
    }
    Ok((seq, PitchContour::new(f0)?))
}

pub fn gen_corpus(cfg: &SynCorpusConfig) -> Result<SynCorpus> {
    cfg.validate()?;
    let n_spk = cfg.speakers.len();
    let mut scripts = Vec::with_capacity(cfg.train_utterances + cfg.test_scripts);
    let mut utterances = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0, 0));
    let next_script = |rng: &mut ChaCha8Rng, id: String| {
        let len = rng.gen_range(cfg.script_len.0..=cfg.script_len.1);
        draw_script(rng, len, cfg.word_len, id)
    };

    let mut train = Vec::with_capacity(cfg.train_utterances);
    for i in 0..cfg.train_utterances {
        let spk = &cfg.speakers[i % n_spk];
        let script = next_script(&mut rng, format!("tr{i:04}"));
        let utt_id = format!("{}_tr{i:04}", spk.id);
        train.push(render_utt(&script, spk, cfg, &utt_id, mix_seed(cfg.seed, 1, i as u64))?);
        utterances.insert(utt_id, UttOrigin { script: script.id.clone(), speaker: spk.id.clone(), split: "train".into() });
        scripts.push(script);
    }

    let mut test = Vec::with_capacity(cfg.test_scripts * n_spk);
    for (si, spk) in cfg.speakers.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 2, 0));
        for j in 0..cfg.test_scripts {
            let script = next_script(&mut rng, format!("te{j:03}"));
            let utt_id = format!("{}_te{j:03}", spk.id);
            let seed = mix_seed(cfg.seed, 3 + si as u64, j as u64);
            test.push(render_utt(&script, spk, cfg, &utt_id, seed)?);
            utterances.insert(utt_id, UttOrigin { script: script.id.clone(), speaker: spk.id.clone(), split: "test".into() });
            if si == 0 {
                scripts.push(script);
            }
        }
    }

    Ok(SynCorpus {
        train,
        test,
        truth: GroundTruth {
            config: cfg.clone(),
            scripts,
            utterances,
        },
    })
}

fn render_utt(script: &Script, spk: &SynSpeakerSpec, cfg: &SynCorpusConfig, utt_id: &str, seed: u64) -> Result<Utterance> {
    let (units, f0) = render(script, spk, cfg, Some(seed))?;
    let mut u = Utterance::new(utt_id, spk.id.clone(), units, f0)?;
    u.text = Some(script.transcript());
    Ok(u)
}

pub fn oracle_id(src_utt: &str, target: &str) -> String {
    format!("{src_utt}{ORACLE_SEP}{target}")
}

/// The ideal conversion of `utt_id` to `target`: its script rendered noise-free by the target.
pub fn ground_truth_convert(truth: &GroundTruth, utt_id: &str, target: &str) -> Result<ConvertedUtterance> {
    let origin = truth
        .utterances
        .get(utt_id)
        .ok_or_else(|| Error::invalid(format!("utterance `{utt_id}` is not from this corpus")))?;
    let script = truth
        .script(&origin.script)
        .ok_or_else(|| Error::invalid(format!("script `{}` missing from ground truth", origin.script)))?;
    let spec = truth
        .config
        .speaker(target)
        .ok_or_else(|| Error::UnknownSpeaker(target.to_string()))?;
    let (units, f0) = render(script, spec, &truth.config, None)?;
    ConvertedUtterance::new(oracle_id(utt_id, target), target.to_string(), units, f0)
}

/// Oracle references for every source utterance and every other speaker, as manifest records.
pub fn oracle_manifest(truth: &GroundTruth, sources: &[Utterance]) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    for u in sources {
        for spk in &truth.config.speakers {
            if spk.id == u.speaker {
                continue;
            }
            let c = ground_truth_convert(truth, &u.utt_id, &spk.id)?;
            let mut r = Utterance::new(c.utt_id, c.target_speaker, c.units, c.f0)?;
            r.text = u.text.clone();
            out.push(r);
        }
    }
    Ok(out)
}

/// Least-squares slope of `(f0 − mean)/std` against normalized time over voiced frames.
pub fn fitted_slope(f0: &PitchContour<f64>, mean: f64, std: f64) -> Option<f64> {
    let n = f0.len();
    if n < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = f0
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, &v)| (i as f64 / (n - 1) as f64, (v - mean) / std))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
