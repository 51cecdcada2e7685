//! Conversion orchestration and the vocoder-facing export format.
//!
//! Three modes swap in the target speaker for rhythm, pitch, or both:
//!
//! * `rhythm`: dedup, predict target durations, round with carryover,
//!   inflate. F0 is the source contour normalized with source stats,
//!   resampled to the new length, and denormalized with target stats.
//! * `pitch`: units untouched; F0 predicted for the target speaker.
//! * `both`: rhythm's unit path, then F0 predicted on the inflated units.

pub mod export;
pub mod speakers;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use export::{converted_from_json, converted_to_json, export_converted, load_converted, CONVERTED_VERSION};
pub use speakers::{SpeakerEntry, SpeakerTable};

use crate::alignio::Utterance;
use crate::durmodel::{round_carryover, DurPredictor};
use crate::error::{Error, Result};
use crate::pitchmodel::PitchPredictor;
use crate::resample;
use crate::scalar::Scalar;
use crate::unitseq::{
    dedup, denormalize_pitch, normalize_pitch, NormPitchContour, PitchContour, RleSeq, SpeakerStats, UnitSeq,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConversionMode {
    Rhythm,
    Pitch,
    Both,
}

impl ConversionMode {
    pub const ALL: [ConversionMode; 3] = [ConversionMode::Rhythm, ConversionMode::Pitch, ConversionMode::Both];

    pub fn needs_duration(self) -> bool {
        matches!(self, ConversionMode::Rhythm | ConversionMode::Both)
    }

    pub fn needs_pitch(self) -> bool {
        matches!(self, ConversionMode::Pitch | ConversionMode::Both)
    }
}

impl fmt::Display for ConversionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConversionMode::Rhythm => "rhythm",
            ConversionMode::Pitch => "pitch",
            ConversionMode::Both => "both",
        })
    }
}

impl FromStr for ConversionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rhythm" => Ok(ConversionMode::Rhythm),
            "pitch" => Ok(ConversionMode::Pitch),
            "both" => Ok(ConversionMode::Both),
            _ => Err(Error::invalid(format!("unknown mode `{s}` (expected rhythm, pitch or both)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConversionRequest {
    pub utt_id: String,
    pub source: String,
    pub target: String,
    pub mode: ConversionMode,
}

impl ConversionRequest {
    /// Converts `utt` from its own speaker to `target`, keeping the utterance id.
    pub fn for_utterance(utt: &Utterance, target: &str, mode: ConversionMode) -> Self {
        ConversionRequest {
            utt_id: utt.utt_id.clone(),
            source: utt.speaker.clone(),
            target: target.to_string(),
            mode,
        }
    }
}

/// Vocoder input: inflated units, F0 in Hz, and the speaker to render.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvertedUtterance {
    pub utt_id: String,
    pub target_speaker: String,
    pub units: UnitSeq,
    pub f0: PitchContour<f64>,
}

impl ConvertedUtterance {
    pub fn new(utt_id: String, target_speaker: String, units: UnitSeq, f0: PitchContour<f64>) -> Result<Self> {
        if units.len() != f0.len() {
            return Err(Error::shape(format!(
                "converted `{utt_id}`: {} units but {} f0 frames",
                units.len(),
                f0.len()
            )));
        }
        Ok(ConvertedUtterance {
            utt_id,
            target_speaker,
            units,
            f0,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.units.duration_s()
    }
}

/// Linear resampling of values with nearest-neighbour voicing.
pub fn resample_linear<T: Scalar>(c: &NormPitchContour<T>, new_len: usize) -> NormPitchContour<T> {
    NormPitchContour {
        values: resample::linear(&c.values, new_len),
        voiced: resample::nearest(&c.voiced, new_len),
    }
}

/// Source F0 reshaped into `new_len` frames and the target register.
pub fn transfer_contour(
    f0: &PitchContour<f64>,
    source: &SpeakerStats<f64>,
    target: &SpeakerStats<f64>,
    new_len: usize,
) -> PitchContour<f64> {
    let norm = normalize_pitch(f0, source);
    denormalize_pitch(&resample_linear(&norm, new_len), target)
}

/// Prediction models for conversion. Either may be absent if no requested mode needs it.
#[derive(Clone, Copy, Debug)]
pub struct Converter<'m, T: Scalar> {
    dur: Option<&'m DurPredictor<T>>,
    pitch: Option<&'m PitchPredictor<T>>,
}

impl<'m, T: Scalar> Converter<'m, T> {
    pub fn new(dur: Option<&'m DurPredictor<T>>, pitch: Option<&'m PitchPredictor<T>>) -> Result<Self> {
        if let (Some(d), Some(p)) = (dur, pitch) {
            let ids = |t: &SpeakerTable| t.entries().iter().map(|e| e.id.clone()).collect::<Vec<_>>();
            if ids(d.speakers()) != ids(p.speakers()) {
                return Err(Error::invalid("duration and pitch models were trained on different speaker sets"));
            }
        }
        Ok(Converter { dur, pitch })
    }

    fn dur(&self) -> Result<&'m DurPredictor<T>> {
        self.dur.ok_or_else(|| Error::invalid("this mode needs a duration model"))
    }

    fn pitch(&self) -> Result<&'m PitchPredictor<T>> {
        self.pitch.ok_or_else(|| Error::invalid("this mode needs a pitch model"))
    }

    fn table(&self) -> Result<&'m SpeakerTable> {
        self.dur
            .map(|d| d.speakers())
            .or(self.pitch.map(|p| p.speakers()))
            .ok_or_else(|| Error::invalid("no model loaded"))
    }

    /// Target-speaker durations for the utterance's runs.
    pub fn retime(&self, units: &UnitSeq, target: &str) -> Result<UnitSeq> {
        let dur = self.dur()?;
        let rle = dedup(units);
        let ids = rle.units();
        let preds = dur.predict_for(&ids, target)?;
        let rounded = round_carryover(&preds)?;
        Ok(RleSeq::with_durations(&ids, &rounded.durations)?.inflate())
    }

    pub fn convert(&self, utt: &Utterance, req: &ConversionRequest) -> Result<ConvertedUtterance> {
        if utt.units.is_empty() {
            return Err(Error::invalid(format!("utterance `{}` is empty", utt.utt_id)));
        }
        let table = self.table()?;
        let src = table.index(&req.source)?;
        let tgt = table.index(&req.target)?;
        let (units, f0) = match req.mode {
            ConversionMode::Rhythm => {
                let units = self.retime(&utt.units, &req.target)?;
                let f0 = transfer_contour(&utt.f0, &table.stats(src), &table.stats(tgt), units.len());
                (units, f0)
            }
            ConversionMode::Pitch => {
                let f0 = self.pitch()?.predict_for(utt.units.as_slice(), &req.target)?;
                (utt.units.clone(), f0)
            }
            ConversionMode::Both => {
                let units = self.retime(&utt.units, &req.target)?;
                let f0 = self.pitch()?.predict_for(units.as_slice(), &req.target)?;
                (units, f0)
            }
        };
        ConvertedUtterance::new(req.utt_id.clone(), req.target.clone(), units, f0)
    }
}

/// Non-learned reference: units unchanged, F0 moved into the target register.
pub fn resynth_baseline(
    utt: &Utterance,
    target: &str,
    source: &SpeakerStats<f64>,
    target_stats: &SpeakerStats<f64>,
) -> ConvertedUtterance {
    ConvertedUtterance {
        utt_id: utt.utt_id.clone(),
        target_speaker: target.to_string(),
        units: utt.units.clone(),
        f0: transfer_contour(&utt.f0, source, target_stats, utt.units.len()),
    }
}

/// The unconverted source, labelled with the target speaker.
pub fn copy_source(utt: &Utterance, target: &str) -> ConvertedUtterance {
    ConvertedUtterance {
        utt_id: utt.utt_id.clone(),
        target_speaker: target.to_string(),
        units: utt.units.clone(),
        f0: utt.f0.clone(),
    }
}
