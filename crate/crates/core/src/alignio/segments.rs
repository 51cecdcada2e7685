use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::alignio::textgrid::{Interval, TextGrid, Tier};
use crate::error::{Error, Result};
use crate::unitseq::{dedup, UnitId, UnitSeq, FRAME_PERIOD_S};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Word,
    Phone,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Non-silent labelled spans of one level, sorted and non-overlapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedSegments {
    level: Level,
    segments: Vec<Segment>,
}

impl AlignedSegments {
    pub fn new(level: Level, segments: Vec<Segment>) -> Result<Self> {
        let mut prev_end = f64::NEG_INFINITY;
        for (i, s) in segments.iter().enumerate() {
            if !(s.start.is_finite() && s.end.is_finite()) || s.end <= s.start {
                return Err(Error::invalid(format!("segment {i}: end {} must exceed start {}", s.end, s.start)));
            }
            if s.label.is_empty() {
                return Err(Error::invalid(format!("segment {i} has an empty label")));
            }
            if s.start < prev_end - 1e-9 {
                return Err(Error::invalid(format!("segment {i} overlaps its predecessor")));
            }
            prev_end = s.end;
        }
        Ok(AlignedSegments { level, segments })
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.segments.iter().map(|s| s.label.as_str()).collect()
    }
}

/// Labels treated as silence. Whitespace-only labels always count as silence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SilenceSet(BTreeSet<String>);

impl Default for SilenceSet {
    fn default() -> Self {
        SilenceSet(["", "sil", "sp", "spn"].into_iter().map(String::from).collect())
    }
}

impl SilenceSet {
    /// Default set extended with `extra`.
    pub fn with_extra<I: IntoIterator<Item = S>, S: Into<String>>(extra: I) -> Self {
        let mut s = SilenceSet::default();
        s.0.extend(extra.into_iter().map(Into::into));
        s
    }

    pub fn contains(&self, label: &str) -> bool {
        let l = label.trim();
        l.is_empty() || self.0.contains(l)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

pub fn extract_segments(grid: &TextGrid, tier: &str, level: Level, silence: &SilenceSet) -> Result<AlignedSegments> {
    let t = grid
        .tier(tier)
        .ok_or_else(|| Error::invalid(format!("TextGrid has no tier named `{tier}`")))?;
    AlignedSegments::new(
        level,
        t.intervals
            .iter()
            .filter(|iv| !silence.contains(&iv.text))
            .map(|iv| Segment {
                start: iv.xmin,
                end: iv.xmax,
                label: iv.text.trim().to_string(),
            })
            .collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParallelCheck {
    Match,
    CountMismatch { reference: usize, synthesized: usize },
    LabelMismatch { index: usize },
}

impl ParallelCheck {
    pub fn is_match(&self) -> bool {
        matches!(self, ParallelCheck::Match)
    }
}

pub fn check_parallel(reference: &AlignedSegments, synthesized: &AlignedSegments) -> ParallelCheck {
    if reference.len() != synthesized.len() {
        return ParallelCheck::CountMismatch {
            reference: reference.len(),
            synthesized: synthesized.len(),
        };
    }
    match reference
        .segments
        .iter()
        .zip(&synthesized.segments)
        .position(|(a, b)| a.label != b.label)
    {
        Some(index) => ParallelCheck::LabelMismatch { index },
        None => ParallelCheck::Match,
    }
}

/// Word and phone segmentation of one recording.
#[derive(Clone, Debug, PartialEq)]
pub struct UttAlignment {
    pub words: AlignedSegments,
    pub phones: AlignedSegments,
}

impl UttAlignment {
    pub fn level(&self, level: Level) -> &AlignedSegments {
        match level {
            Level::Word => &self.words,
            Level::Phone => &self.phones,
        }
    }

    pub fn from_textgrid(grid: &TextGrid, silence: &SilenceSet) -> Result<Self> {
        Ok(UttAlignment {
            words: extract_segments(grid, "words", Level::Word, silence)?,
            phones: extract_segments(grid, "phones", Level::Phone, silence)?,
        })
    }
}

/// Parses a unit transcript: words separated by whitespace, each a `-`-joined list of unit ids.
pub fn parse_unit_transcript(text: &str) -> Result<Vec<Vec<UnitId>>> {
    text.split_whitespace()
        .map(|w| {
            w.split('-')
                .map(|u| {
                    u.parse::<UnitId>()
                        .map_err(|_| Error::invalid(format!("bad unit `{u}` in transcript word `{w}`")))
                })
                .collect()
        })
        .collect()
}

pub fn format_unit_transcript(words: &[Vec<UnitId>]) -> String {
    words
        .iter()
        .map(|w| w.iter().map(|u| u.to_string()).collect::<Vec<_>>().join("-"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Forced alignment of a unit sequence against its unit transcript.
///
/// Each deduplicated run is one phone labelled by its unit id; words span
/// their runs. Returns `None` when the run ids differ from the transcript,
/// i.e. the alignment fails.
pub fn align_unit_transcript(units: &UnitSeq, words: &[Vec<UnitId>]) -> Option<TextGrid> {
    let rle = dedup(units);
    let expected: Vec<UnitId> = words.iter().flatten().copied().collect();
    if rle.units() != expected {
        return None;
    }
    let t = |frame: usize| frame as f64 * FRAME_PERIOD_S;
    let mut phones = Vec::with_capacity(rle.len());
    let mut frame = 0;
    for run in rle.runs() {
        phones.push(Interval {
            xmin: t(frame),
            xmax: t(frame + run.duration),
            text: run.unit.to_string(),
        });
        frame += run.duration;
    }
    let mut word_tier = Vec::with_capacity(words.len());
    let mut k = 0;
    for w in words.iter().filter(|w| !w.is_empty()) {
        word_tier.push(Interval {
            xmin: phones[k].xmin,
            xmax: phones[k + w.len() - 1].xmax,
            text: format_unit_transcript(std::slice::from_ref(w)),
        });
        k += w.len();
    }
    let end = t(frame);
    let tier = |name: &str, intervals| Tier {
        name: name.into(),
        xmin: 0.0,
        xmax: end,
        intervals,
    };
    Some(TextGrid {
        xmin: 0.0,
        xmax: end,
        tiers: vec![tier("words", word_tier), tier("phones", phones)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignio::textgrid::Tier;

    fn grid(intervals: &[(f64, f64, &str)]) -> TextGrid {
        let end = intervals.last().map_or(1.0, |i| i.1);
        TextGrid {
            xmin: 0.0,
            xmax: end,
            tiers: vec![Tier {
                name: "words".into(),
                xmin: 0.0,
                xmax: end,
                intervals: intervals
                    .iter()
                    .map(|&(a, b, t)| Interval { xmin: a, xmax: b, text: t.into() })
                    .collect(),
            }],
        }
    }

    fn segs(items: &[(f64, f64, &str)]) -> AlignedSegments {
        AlignedSegments::new(
            Level::Phone,
            items
                .iter()
                .map(|&(start, end, l)| Segment { start, end, label: l.into() })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn silence_is_filtered() {
        let s = SilenceSet::default();
        let g = grid(&[(0.0, 0.3, ""), (0.3, 0.8, "cat"), (0.8, 1.0, "sil")]);
        let out = extract_segments(&g, "words", Level::Word, &s).unwrap();
        assert_eq!(out.segments(), &[Segment { start: 0.3, end: 0.8, label: "cat".into() }]);

        let g = grid(&[(0.0, 0.3, "sp"), (0.3, 0.8, "spn"), (0.8, 1.0, " ")]);
        assert!(extract_segments(&g, "words", Level::Word, &s).unwrap().is_empty());

        let g = grid(&[(0.0, 0.3, "a"), (0.3, 1.0, "b")]);
        assert_eq!(extract_segments(&g, "words", Level::Word, &s).unwrap().labels(), vec!["a", "b"]);
        assert!(extract_segments(&g, "phones", Level::Phone, &s).is_err());

        let custom = SilenceSet::with_extra(["<eps>"]);
        let g = grid(&[(0.0, 0.3, "<eps>"), (0.3, 1.0, "b")]);
        assert_eq!(extract_segments(&g, "words", Level::Word, &custom).unwrap().len(), 1);
    }

    #[test]
    fn parallel_checks() {
        let a = segs(&[(0.0, 1.0, "a"), (1.0, 2.0, "b")]);
        assert_eq!(check_parallel(&a, &a), ParallelCheck::Match);
        let b = segs(&[(0.0, 1.0, "a")]);
        assert_eq!(check_parallel(&a, &b), ParallelCheck::CountMismatch { reference: 2, synthesized: 1 });
        let c = segs(&[(0.0, 1.0, "a"), (1.0, 2.0, "x")]);
        assert_eq!(check_parallel(&a, &c), ParallelCheck::LabelMismatch { index: 1 });
    }

    #[test]
    fn segment_invariants() {
        assert!(AlignedSegments::new(Level::Word, vec![Segment { start: 1.0, end: 1.0, label: "a".into() }]).is_err());
        assert!(AlignedSegments::new(Level::Word, vec![Segment { start: 0.0, end: 1.0, label: String::new() }]).is_err());
        let overlap = vec![
            Segment { start: 0.0, end: 1.0, label: "a".into() },
            Segment { start: 0.5, end: 2.0, label: "b".into() },
        ];
        assert!(AlignedSegments::new(Level::Word, overlap).is_err());
    }

    #[test]
    fn unit_transcript_alignment() {
        let words = parse_unit_transcript("3-7 9-4-3").unwrap();
        assert_eq!(words, vec![vec![3, 7], vec![9, 4, 3]]);
        assert_eq!(format_unit_transcript(&words), "3-7 9-4-3");
        let units = UnitSeq::new(vec![3, 3, 7, 9, 9, 9, 4, 3, 3]).unwrap();
        let g = align_unit_transcript(&units, &words).unwrap();
        assert!(g.validate().is_ok());
        let a = UttAlignment::from_textgrid(&g, &SilenceSet::default()).unwrap();
        assert_eq!(a.phones.len(), 5);
        assert_eq!(a.words.labels(), vec!["3-7", "9-4-3"]);
        assert!((a.words.segments()[1].start - 0.06).abs() < 1e-12);
        assert!((a.words.segments()[1].end - 0.18).abs() < 1e-12);

        let wrong = UnitSeq::new(vec![3, 7, 9, 4]).unwrap();
        assert!(align_unit_transcript(&wrong, &words).is_none());
        assert!(parse_unit_transcript("3-x").is_err());
    }
}
