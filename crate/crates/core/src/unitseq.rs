//! Discrete unit sequences, their run-length form, and pitch contours.
//!
//! A [`UnitSeq`] is one cluster id per 20 ms frame. Collapsing repeats
//! ([`dedup`]) separates phonetic content (the run ids) from rhythm (the run
//! lengths); [`inflate`] is the exact inverse. Pitch contours are per-frame
//! F0 in Hz with `0` marking unvoiced frames, normalized per speaker over
//! voiced frames only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Unit vocabulary size `K`.
pub const VOCAB_SIZE: usize = 100;
/// Reserved id substituted for masked units during training; never valid in a [`UnitSeq`].
pub const MASK_ID: UnitId = VOCAB_SIZE as UnitId;
pub const FRAME_PERIOD_MS: u32 = 20;
pub const FRAME_PERIOD_S: f64 = 0.02;
/// Clamp range applied whenever normalized pitch is mapped back to Hz.
pub const F0_MIN_HZ: f64 = 40.0;
pub const F0_MAX_HZ: f64 = 600.0;

pub type UnitId = u16;

/// Frame-level unit sequence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<UnitId>", into = "Vec<UnitId>")]
pub struct UnitSeq(Vec<UnitId>);

impl UnitSeq {
    pub fn new(units: Vec<UnitId>) -> Result<Self> {
        if let Some((i, u)) = units
            .iter()
            .enumerate()
            .find(|(_, &u)| usize::from(u) >= VOCAB_SIZE)
        {
            return Err(Error::invalid(format!(
                "unit id {u} at frame {i} is outside the vocabulary [0, {VOCAB_SIZE})"
            )));
        }
        Ok(UnitSeq(units))
    }

    pub fn as_slice(&self) -> &[UnitId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Duration in seconds at the fixed frame period.
    pub fn duration_s(&self) -> f64 {
        self.0.len() as f64 * FRAME_PERIOD_S
    }

    pub fn into_vec(self) -> Vec<UnitId> {
        self.0
    }
}

impl TryFrom<Vec<UnitId>> for UnitSeq {
    type Error = Error;

    fn try_from(v: Vec<UnitId>) -> Result<Self> {
        UnitSeq::new(v)
    }
}

impl From<UnitSeq> for Vec<UnitId> {
    fn from(s: UnitSeq) -> Self {
        s.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Run {
    pub unit: UnitId,
    pub duration: usize,
}

/// Deduplicated ("run-length") form of a [`UnitSeq`].
///
/// Adjacent runs always carry different ids and every duration is at least one frame.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct RleSeq(Vec<Run>);

impl RleSeq {
    pub fn new(runs: Vec<Run>) -> Result<Self> {
        for (i, r) in runs.iter().enumerate() {
            if r.duration < 1 {
                return Err(Error::invalid(format!("run {i} has duration 0")));
            }
            if usize::from(r.unit) >= VOCAB_SIZE {
                return Err(Error::invalid(format!("run {i} has unit id {}", r.unit)));
            }
            if i > 0 && runs[i - 1].unit == r.unit {
                return Err(Error::invalid(format!(
                    "runs {} and {i} repeat unit {}",
                    i - 1,
                    r.unit
                )));
            }
        }
        Ok(RleSeq(runs))
    }

    /// Pairs run ids with replacement durations, e.g. predicted ones.
    pub fn with_durations(units: &[UnitId], durations: &[usize]) -> Result<Self> {
        if units.len() != durations.len() {
            return Err(Error::shape(format!(
                "{} units but {} durations",
                units.len(),
                durations.len()
            )));
        }
        RleSeq::new(
            units
                .iter()
                .zip(durations)
                .map(|(&unit, &duration)| Run { unit, duration })
                .collect(),
        )
    }

    pub fn runs(&self) -> &[Run] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn units(&self) -> Vec<UnitId> {
        self.0.iter().map(|r| r.unit).collect()
    }

    pub fn durations(&self) -> Vec<usize> {
        self.0.iter().map(|r| r.duration).collect()
    }

    pub fn total_frames(&self) -> usize {
        self.0.iter().map(|r| r.duration).sum()
    }

    pub fn inflate(&self) -> UnitSeq {
        let mut out = Vec::with_capacity(self.total_frames());
        for r in &self.0 {
            out.extend(std::iter::repeat_n(r.unit, r.duration));
        }
        UnitSeq(out)
    }
}

/// Collapses repeated units into `(id, duration)` runs.
pub fn dedup(seq: &UnitSeq) -> RleSeq {
    let mut runs: Vec<Run> = Vec::new();
    for &u in seq.as_slice() {
        match runs.last_mut() {
            Some(last) if last.unit == u => last.duration += 1,
            _ => runs.push(Run { unit: u, duration: 1 }),
        }
    }
    RleSeq(runs)
}

/// Expands `(id, duration)` pairs back to frames. Zero durations are rejected.
pub fn inflate(runs: &[(UnitId, usize)]) -> Result<UnitSeq> {
    let mut out = Vec::with_capacity(runs.iter().map(|r| r.1).sum());
    for (i, &(unit, duration)) in runs.iter().enumerate() {
        if duration < 1 {
            return Err(Error::invalid(format!("run {i} has duration {duration}")));
        }
        out.extend(std::iter::repeat_n(unit, duration));
    }
    UnitSeq::new(out)
}

/// Per-frame F0 in Hz; `0` marks an unvoiced frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PitchContour<T>(Vec<T>);

impl<T: Scalar> PitchContour<T> {
    pub fn new(f0: Vec<T>) -> Result<Self> {
        if let Some((i, v)) = f0
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < T::zero())
        {
            return Err(Error::invalid(format!("f0 frame {i} is {v}; expected finite and >= 0")));
        }
        Ok(PitchContour(f0))
    }

    pub fn zeros(len: usize) -> Self {
        PitchContour(vec![T::zero(); len])
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn voiced(&self) -> Vec<bool> {
        self.0.iter().map(|&v| v > T::zero()).collect()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }
}

/// Speaker-normalized contour with an explicit voicing mask.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormPitchContour<T> {
    pub values: Vec<T>,
    pub voiced: Vec<bool>,
}

impl<T: Scalar> NormPitchContour<T> {
    pub fn new(values: Vec<T>, voiced: Vec<bool>) -> Result<Self> {
        if values.len() != voiced.len() {
            return Err(Error::shape(format!(
                "{} values but {} voicing flags",
                values.len(),
                voiced.len()
            )));
        }
        Ok(NormPitchContour { values, voiced })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Voiced-frame mean and population standard deviation for one speaker, in Hz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeakerStats<T> {
    pub mean: T,
    pub std: T,
}

impl<T: Scalar> SpeakerStats<T> {
    pub fn new(mean: T, std: T) -> Result<Self> {
        if !mean.is_finite() || !std.is_finite() || std <= T::zero() {
            return Err(Error::invalid(format!(
                "speaker stats need finite mean and std > 0, got mean {mean} std {std}"
            )));
        }
        Ok(SpeakerStats { mean, std })
    }

    pub fn cast<U: Scalar>(self) -> SpeakerStats<U> {
        SpeakerStats {
            mean: U::lit(self.mean.as_f64()),
            std: U::lit(self.std.as_f64()),
        }
    }
}

pub fn speaker_stats<T: Scalar>(contours: &[PitchContour<T>]) -> Result<SpeakerStats<T>> {
    let voiced = || contours.iter().flat_map(|c| c.values()).filter(|&&v| v > T::zero());
    let n = voiced().count();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "pitch statistics need at least 2 voiced frames, found {n}"
        )));
    }
    let count = T::from_usize(n).expect("frame count fits the scalar type");
    let mean = voiced().copied().sum::<T>() / count;
    let var = voiced().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
    let std = var.sqrt();
    if std <= T::zero() {
        return Err(Error::InsufficientData(format!(
            "voiced pitch has zero variance (constant {mean} Hz)"
        )));
    }
    Ok(SpeakerStats { mean, std })
}

pub fn normalize_pitch<T: Scalar>(c: &PitchContour<T>, s: &SpeakerStats<T>) -> NormPitchContour<T> {
    let voiced = c.voiced();
    let values = c
        .values()
        .iter()
        .zip(&voiced)
        .map(|(&v, &on)| if on { (v - s.mean) / s.std } else { T::zero() })
        .collect();
    NormPitchContour { values, voiced }
}

/// Maps normalized values back to Hz, clamped to `[F0_MIN_HZ, F0_MAX_HZ]` on voiced frames.
pub fn denormalize_pitch<T: Scalar>(n: &NormPitchContour<T>, s: &SpeakerStats<T>) -> PitchContour<T> {
    let lo = T::lit(F0_MIN_HZ);
    let hi = T::lit(F0_MAX_HZ);
    PitchContour(
        n.values
            .iter()
            .zip(&n.voiced)
            .map(|(&v, &on)| {
                if on {
                    (v * s.std + s.mean).max(lo).min(hi)
                } else {
                    T::zero()
                }
            })
            .collect(),
    )
}
