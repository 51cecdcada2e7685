//! Objective evaluation: length errors, voicing and F0 frame errors,
//! segment-interpolated FFE, and a 1-D transport distance on pitch mass.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

pub use crate::alignio::{AlignedSegments, Level, ParallelCheck, Segment, UttAlignment};
use crate::alignio::{check_parallel, Utterance};
use crate::error::{Error, Result};
use crate::pipeline::ConvertedUtterance;
use crate::resample;
use crate::unitseq::{PitchContour, FRAME_PERIOD_S};

/// Relative F0 deviation above which a both-voiced frame is a gross error.
pub const GROSS_PITCH_ERROR: f64 = 0.2;
/// Time bins used by [`emd`].
pub const EMD_BINS: usize = 200;

/// Segment lists that cannot be compared pairwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mismatch {
    Count { reference: usize, synthesized: usize },
    Label { index: usize },
}

fn require_parallel(r: &AlignedSegments, s: &AlignedSegments) -> std::result::Result<(), Mismatch> {
    match check_parallel(r, s) {
        ParallelCheck::Match => Ok(()),
        ParallelCheck::CountMismatch { reference, synthesized } => Err(Mismatch::Count { reference, synthesized }),
        ParallelCheck::LabelMismatch { index } => Err(Mismatch::Label { index }),
    }
}

/// Total length error in seconds.
pub fn tle(ref_duration: f64, syn_duration: f64) -> f64 {
    (ref_duration - syn_duration).abs()
}

/// Sum over matched segments of the absolute difference in segment durations.
pub fn length_error(reference: &AlignedSegments, synthesized: &AlignedSegments) -> std::result::Result<f64, Mismatch> {
    require_parallel(reference, synthesized)?;
    Ok(reference
        .segments()
        .iter()
        .zip(synthesized.segments())
        .map(|(r, s)| (s.duration() - r.duration()).abs())
        .sum())
}

/// `labels.len()` equal contiguous segments covering `[0, total]`.
pub fn linear_split_fallback(total: f64, labels: &[String], level: Level) -> Result<AlignedSegments> {
    if labels.is_empty() || !(total > 0.0) {
        return Err(Error::invalid(format!(
            "linear split needs a positive length and at least one label (got {total} s, {} labels)",
            labels.len()
        )));
    }
    let n = labels.len() as f64;
    AlignedSegments::new(
        level,
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| Segment {
                start: total * i as f64 / n,
                end: total * (i + 1) as f64 / n,
                label: l.clone(),
            })
            .collect(),
    )
}

fn check_lengths(lens: &[usize]) -> Result<usize> {
    let t = lens[0];
    if lens.iter().any(|&l| l != t) {
        return Err(Error::shape(format!("frame sequences differ in length: {lens:?}")));
    }
    if t == 0 {
        return Err(Error::invalid("frame sequences are empty"));
    }
    Ok(t)
}

/// Fraction of frames whose voicing decisions differ.
pub fn vde(v_ref: &[bool], v_syn: &[bool]) -> Result<f64> {
    let t = check_lengths(&[v_ref.len(), v_syn.len()])?;
    Ok(voicing_errors(v_ref, v_syn) as f64 / t as f64)
}

fn voicing_errors(v_ref: &[bool], v_syn: &[bool]) -> usize {
    v_ref.iter().zip(v_syn).filter(|(a, b)| a != b).count()
}

fn gross_errors(p_ref: &[f64], p_syn: &[f64], v_ref: &[bool], v_syn: &[bool]) -> usize {
    (0..p_ref.len())
        .filter(|&i| v_ref[i] && v_syn[i] && (p_ref[i] - p_syn[i]).abs() > GROSS_PITCH_ERROR * p_ref[i])
        .count()
}

/// Voicing errors plus both-voiced frames off by more than 20% of the reference, over all frames.
pub fn ffe(p_ref: &[f64], p_syn: &[f64], v_ref: &[bool], v_syn: &[bool]) -> Result<f64> {
    let t = check_lengths(&[p_ref.len(), p_syn.len(), v_ref.len(), v_syn.len()])?;
    Ok((voicing_errors(v_ref, v_syn) + gross_errors(p_ref, p_syn, v_ref, v_syn)) as f64 / t as f64)
}

/// `syn` stretched to `n` frames: values linear, voicing nearest-neighbour.
fn stretch(values: &[f64], voiced: &[bool], n: usize) -> (Vec<f64>, Vec<bool>) {
    (resample::linear(values, n), resample::nearest(voiced, n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrameErrors {
    pub vde: f64,
    pub ffe: f64,
}

/// VDE and FFE of whole contours, with `syn` interpolated to the reference length.
pub fn contour_ffe(reference: &PitchContour<f64>, synthesized: &PitchContour<f64>) -> Result<FrameErrors> {
    let t = reference.len();
    let v_ref = reference.voiced();
    let (p_syn, v_syn) = stretch(synthesized.values(), &synthesized.voiced(), t);
    Ok(FrameErrors {
        vde: vde(&v_ref, &v_syn)?,
        ffe: ffe(reference.values(), &p_syn, &v_ref, &v_syn)?,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentAggregation {
    /// Σ errors / Σ reference frames.
    #[default]
    FrameWeighted,
    /// Unweighted mean of per-segment FFE over non-empty segments.
    SegmentMean,
}

fn frame_span(seg: &Segment, len: usize) -> (usize, usize) {
    let a = ((seg.start / FRAME_PERIOD_S).round().max(0.0) as usize).min(len);
    let b = ((seg.end / FRAME_PERIOD_S).round().max(0.0) as usize).min(len);
    (a, b.max(a))
}

/// FFE computed segment by segment after stretching each synthesized
/// segment to the frame count of its reference counterpart.
pub fn segment_ffe(
    p_ref: &PitchContour<f64>,
    p_syn: &PitchContour<f64>,
    ref_segs: &AlignedSegments,
    syn_segs: &AlignedSegments,
    aggregation: SegmentAggregation,
) -> std::result::Result<f64, Mismatch> {
    require_parallel(ref_segs, syn_segs)?;
    let (vr, vs) = (p_ref.voiced(), p_syn.voiced());
    let mut errors = 0usize;
    let mut frames = 0usize;
    let mut per_segment = Vec::new();
    for (r, s) in ref_segs.segments().iter().zip(syn_segs.segments()) {
        let (ra, rb) = frame_span(r, p_ref.len());
        let n = rb - ra;
        if n == 0 {
            continue;
        }
        let (sa, sb) = frame_span(s, p_syn.len());
        let (ps, vss) = stretch(&p_syn.values()[sa..sb], &vs[sa..sb], n);
        let pr = &p_ref.values()[ra..rb];
        let vrr = &vr[ra..rb];
        let e = voicing_errors(vrr, &vss) + gross_errors(pr, &ps, vrr, &vss);
        errors += e;
        frames += n;
        per_segment.push(e as f64 / n as f64);
    }
    Ok(match aggregation {
        _ if frames == 0 => 0.0,
        SegmentAggregation::FrameWeighted => errors as f64 / frames as f64,
        SegmentAggregation::SegmentMean => per_segment.iter().sum::<f64>() / per_segment.len() as f64,
    })
}

/// Transport cost between equal-length mass histograms on a unit-spaced
/// grid, scaled by `1/N`. Unequal totals move their difference to position `N`.
pub fn emd_hist(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = check_lengths(&[a.len(), b.len()])?;
    let mut ca = 0.0;
    let mut cb = 0.0;
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        ca += x;
        cb += y;
        total += (ca - cb).abs();
    }
    Ok(total / n as f64)
}

/// Pitch mass (Hz, unvoiced = 0) on [`EMD_BINS`] bins of normalized time.
pub fn pitch_mass(c: &PitchContour<f64>) -> Vec<f64> {
    resample::linear(c.values(), EMD_BINS)
}

pub fn emd(p_ref: &PitchContour<f64>, p_syn: &PitchContour<f64>) -> Result<f64> {
    if p_ref.is_empty() || p_syn.is_empty() {
        return Err(Error::invalid("EMD needs non-empty contours"));
    }
    emd_hist(&pitch_mass(p_ref), &pitch_mass(p_syn))
}

/// How one alignment level was scored for an utterance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LevelStatus {
    Matched,
    /// Synthesized alignment failed; segments come from a linear split.
    Fallback,
    Skipped { mismatch: Mismatch },
    /// No reference alignment (or an empty one) to compare against.
    Unavailable,
}

#[derive(Clone, Debug)]
pub struct EvalPair {
    pub utt_id: String,
    pub reference: PitchContour<f64>,
    pub synthesized: PitchContour<f64>,
    pub ref_alignment: Option<UttAlignment>,
    /// `None` when aligning the synthesized utterance failed.
    pub syn_alignment: Option<UttAlignment>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalOptions {
    pub aggregation: SegmentAggregation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UttMetrics {
    pub utt_id: String,
    pub tle: f64,
    pub wle: Option<f64>,
    pub ple: Option<f64>,
    pub vde: f64,
    pub ffe: f64,
    pub w_ffe: Option<f64>,
    pub p_ffe: Option<f64>,
    pub emd: f64,
    pub word_status: LevelStatus,
    pub phone_status: LevelStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricMeans {
    pub tle: f64,
    pub wle: Option<f64>,
    pub ple: Option<f64>,
    pub vde: f64,
    pub ffe: f64,
    pub w_ffe: Option<f64>,
    pub p_ffe: Option<f64>,
    pub emd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricCounts {
    pub utterances: usize,
    pub skipped_word: usize,
    pub skipped_phone: usize,
    /// Utterances whose synthesized alignment failed and were scored by linear split.
    pub penalized: usize,
    pub unaligned: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub mean: MetricMeans,
    pub counts: MetricCounts,
    pub utterances: Vec<UttMetrics>,
}

struct LevelScore {
    status: LevelStatus,
    length: Option<f64>,
    ffe: Option<f64>,
}

fn score_level(pair: &EvalPair, level: Level, opts: &EvalOptions) -> Result<LevelScore> {
    let unavailable = LevelScore {
        status: LevelStatus::Unavailable,
        length: None,
        ffe: None,
    };
    let Some(r) = pair.ref_alignment.as_ref().map(|a| a.level(level)) else {
        return Ok(unavailable);
    };
    if r.is_empty() {
        return Ok(unavailable);
    }
    let (syn, status) = match &pair.syn_alignment {
        Some(a) => (a.level(level).clone(), LevelStatus::Matched),
        None => {
            let labels: Vec<String> = r.labels().into_iter().map(String::from).collect();
            let total = pair.synthesized.len() as f64 * FRAME_PERIOD_S;
            if total <= 0.0 {
                return Ok(unavailable);
            }
            (linear_split_fallback(total, &labels, level)?, LevelStatus::Fallback)
        }
    };
    match length_error(r, &syn) {
        Ok(len) => {
            let f = segment_ffe(&pair.reference, &pair.synthesized, r, &syn, opts.aggregation)
                .expect("segments already matched");
            Ok(LevelScore {
                status,
                length: Some(len),
                ffe: Some(f),
            })
        }
        Err(mismatch) => Ok(LevelScore {
            status: LevelStatus::Skipped { mismatch },
            length: None,
            ffe: None,
        }),
    }
}

fn evaluate_pair(pair: &EvalPair, opts: &EvalOptions) -> Result<UttMetrics> {
    if pair.reference.is_empty() {
        return Err(Error::invalid(format!("reference `{}` is empty", pair.utt_id)));
    }
    let frames = contour_ffe(&pair.reference, &pair.synthesized)?;
    let words = score_level(pair, Level::Word, opts)?;
    let phones = score_level(pair, Level::Phone, opts)?;
    Ok(UttMetrics {
        utt_id: pair.utt_id.clone(),
        tle: tle(
            pair.reference.len() as f64 * FRAME_PERIOD_S,
            pair.synthesized.len() as f64 * FRAME_PERIOD_S,
        ),
        wle: words.length,
        ple: phones.length,
        vde: frames.vde,
        ffe: frames.ffe,
        w_ffe: words.ffe,
        p_ffe: phones.ffe,
        emd: if pair.synthesized.is_empty() {
            emd_hist(&pitch_mass(&pair.reference), &[0.0; EMD_BINS])?
        } else {
            emd(&pair.reference, &pair.synthesized)?
        },
        word_status: words.status,
        phone_status: phones.status,
    })
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn evaluate_corpus(pairs: &[EvalPair], opts: &EvalOptions) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no matched utterances to evaluate".into()));
    }
    let utterances = pairs
        .par_iter()
        .map(|p| evaluate_pair(p, opts))
        .collect::<Result<Vec<_>>>()?;
    let col = |f: fn(&UttMetrics) -> Option<f64>| mean_of(utterances.iter().filter_map(f));
    let mean = MetricMeans {
        tle: col(|u| Some(u.tle)).unwrap_or(0.0),
        wle: col(|u| u.wle),
        ple: col(|u| u.ple),
        vde: col(|u| Some(u.vde)).unwrap_or(0.0),
        ffe: col(|u| Some(u.ffe)).unwrap_or(0.0),
        w_ffe: col(|u| u.w_ffe),
        p_ffe: col(|u| u.p_ffe),
        emd: col(|u| Some(u.emd)).unwrap_or(0.0),
    };
    let skipped = |f: fn(&UttMetrics) -> LevelStatus| {
        utterances
            .iter()
            .filter(|u| matches!(f(u), LevelStatus::Skipped { .. }))
            .count()
    };
    let counts = MetricCounts {
        utterances: utterances.len(),
        skipped_word: skipped(|u| u.word_status),
        skipped_phone: skipped(|u| u.phone_status),
        penalized: pairs.iter().filter(|p| p.ref_alignment.is_some() && p.syn_alignment.is_none()).count(),
        unaligned: pairs.iter().filter(|p| p.ref_alignment.is_none()).count(),
    };
    Ok(MetricReport {
        mean,
        counts,
        utterances,
    })
}

/// Pairs converted outputs with references by utterance id, in reference order.
/// Returns the pairs and the number of converted items with no reference.
pub fn match_by_id<'a>(
    converted: &'a [ConvertedUtterance],
    reference: &'a [Utterance],
) -> (Vec<(&'a ConvertedUtterance, &'a Utterance)>, usize) {
    let by_id: std::collections::HashMap<&str, &ConvertedUtterance> =
        converted.iter().map(|c| (c.utt_id.as_str(), c)).collect();
    let pairs: Vec<_> = reference
        .iter()
        .filter_map(|r| by_id.get(r.utt_id.as_str()).map(|c| (*c, r)))
        .collect();
    let unmatched = converted.len() - pairs.len();
    (pairs, unmatched)
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text table: pitch mass, length errors, segment FFEs, then frame errors.
    pub fn to_table(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let m = &self.mean;
        let header = [
            "EMD", "TLE", "WLE", "PLE", "W_FFE", "P_FFE", "VDE", "FFE",
        ];
        let row = [
            f(Some(m.emd)),
            f(Some(m.tle)),
            f(m.wle),
            f(m.ple),
            f(m.w_ffe),
            f(m.p_ffe),
            f(Some(m.vde)),
            f(Some(m.ffe)),
        ];
        let mut s = String::new();
        let _ = writeln!(s, "{:>9} | {:>9} {:>9} {:>9} | {:>9} {:>9} | {:>9} {:>9}", header[0], header[1], header[2], header[3], header[4], header[5], header[6], header[7]);
        let _ = writeln!(s, "{:>9} | {:>9} {:>9} {:>9} | {:>9} {:>9} | {:>9} {:>9}", row[0], row[1], row[2], row[3], row[4], row[5], row[6], row[7]);
        let c = &self.counts;
        let _ = writeln!(s, "WER / CER: n/a (external ASR out of scope)");
        let _ = writeln!(
            s,
            "utterances {}  skipped word {}  skipped phone {}  penalized {}  unaligned {}",
            c.utterances, c.skipped_word, c.skipped_phone, c.penalized, c.unaligned
        );
        s
    }
}
