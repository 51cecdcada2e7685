use std::collections::BTreeMap;

use crate::alignio::Utterance;
use crate::error::{Error, Result};
use crate::nn::checkpoint::SpeakerRecord;
use crate::unitseq::{speaker_stats, PitchContour, SpeakerStats};

#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerEntry {
    pub id: String,
    pub stats: SpeakerStats<f64>,
}

/// Closed set of speakers known to a trained model, in embedding-row order,
/// each with voiced-frame pitch statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpeakerTable {
    entries: Vec<SpeakerEntry>,
}

impl SpeakerTable {
    pub fn new(entries: Vec<SpeakerEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if e.id.is_empty() {
                return Err(Error::invalid("empty speaker id"));
            }
            if entries[..i].iter().any(|o| o.id == e.id) {
                return Err(Error::invalid(format!("duplicate speaker `{}`", e.id)));
            }
            SpeakerStats::new(e.stats.mean, e.stats.std)?;
        }
        Ok(SpeakerTable { entries })
    }

    /// Speakers sorted by id, with statistics pooled over each speaker's utterances.
    pub fn from_corpus(utts: &[Utterance]) -> Result<Self> {
        let mut by_speaker: BTreeMap<&str, Vec<PitchContour<f64>>> = BTreeMap::new();
        for u in utts {
            by_speaker.entry(&u.speaker).or_default().push(u.f0.clone());
        }
        let entries = by_speaker
            .into_iter()
            .map(|(id, contours)| {
                let stats = speaker_stats(&contours).map_err(|e| match e {
                    Error::InsufficientData(m) => Error::InsufficientData(format!("speaker `{id}`: {m}")),
                    other => other,
                })?;
                Ok(SpeakerEntry { id: id.to_string(), stats })
            })
            .collect::<Result<Vec<_>>>()?;
        SpeakerTable::new(entries)
    }

    pub fn index(&self, id: &str) -> Result<usize> {
        self.entries
            .iter()
            .position(|e| e.id == id)
            .ok_or_else(|| Error::UnknownSpeaker(id.to_string()))
    }

    pub fn id(&self, index: usize) -> &str {
        &self.entries[index].id
    }

    pub fn stats(&self, index: usize) -> SpeakerStats<f64> {
        self.entries[index].stats
    }

    pub fn entries(&self) -> &[SpeakerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_records(&self) -> Vec<SpeakerRecord> {
        self.entries
            .iter()
            .map(|e| SpeakerRecord {
                id: e.id.clone(),
                mean_hz: e.stats.mean,
                std_hz: e.stats.std,
            })
            .collect()
    }

    pub fn from_records(records: &[SpeakerRecord]) -> Result<Self> {
        SpeakerTable::new(
            records
                .iter()
                .map(|r| {
                    Ok(SpeakerEntry {
                        id: r.id.clone(),
                        stats: SpeakerStats::new(r.mean_hz, r.std_hz)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitseq::UnitSeq;

    fn utt(id: &str, spk: &str, f0: Vec<f64>) -> Utterance {
        Utterance {
            utt_id: id.into(),
            speaker: spk.into(),
            units: UnitSeq::new(vec![1; f0.len()]).unwrap(),
            f0: PitchContour::new(f0).unwrap(),
            text: None,
            textgrid: None,
        }
    }

    #[test]
    fn corpus_table_is_sorted_with_stats() {
        let t = SpeakerTable::from_corpus(&[
            utt("1", "zed", vec![100.0, 300.0]),
            utt("2", "amy", vec![0.0, 150.0]),
            utt("3", "amy", vec![250.0]),
        ])
        .unwrap();
        assert_eq!(t.id(0), "amy");
        assert_eq!(t.index("zed").unwrap(), 1);
        assert_eq!(t.stats(0), SpeakerStats { mean: 200.0, std: 50.0 });
        assert!(matches!(t.index("bob"), Err(Error::UnknownSpeaker(_))));
        assert_eq!(SpeakerTable::from_records(&t.to_records()).unwrap(), t);
    }

    #[test]
    fn speaker_without_voicing_is_rejected() {
        let e = SpeakerTable::from_corpus(&[utt("1", "a", vec![0.0, 0.0])]).unwrap_err();
        assert!(e.to_string().contains("speaker `a`"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let s = SpeakerStats { mean: 1.0, std: 1.0 };
        let e = SpeakerEntry { id: "a".into(), stats: s };
        assert!(SpeakerTable::new(vec![e.clone(), e]).is_err());
    }
}
