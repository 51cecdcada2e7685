//! Converted-utterance files:
//! `{"version":1, "utt_id":str, "target_speaker":str, "frame_period_ms":20, "units":[int...], "f0_hz":[float...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::ConvertedUtterance;
use crate::unitseq::{PitchContour, UnitSeq, FRAME_PERIOD_MS};

pub const CONVERTED_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvertedFile {
    version: u32,
    utt_id: String,
    target_speaker: String,
    frame_period_ms: u32,
    units: Vec<u16>,
    f0_hz: Vec<f64>,
}

pub fn converted_to_json(c: &ConvertedUtterance) -> Result<String> {
    Ok(serde_json::to_string(&ConvertedFile {
        version: CONVERTED_VERSION,
        utt_id: c.utt_id.clone(),
        target_speaker: c.target_speaker.clone(),
        frame_period_ms: FRAME_PERIOD_MS,
        units: c.units.as_slice().to_vec(),
        f0_hz: c.f0.values().to_vec(),
    })?)
}

pub fn converted_from_json(s: &str) -> Result<ConvertedUtterance> {
    let f: ConvertedFile = serde_json::from_str(s)?;
    if f.version != CONVERTED_VERSION {
        return Err(Error::invalid(format!("unsupported converted-file version {}", f.version)));
    }
    if f.frame_period_ms != FRAME_PERIOD_MS {
        return Err(Error::invalid(format!(
            "frame period {} ms, expected {FRAME_PERIOD_MS}",
            f.frame_period_ms
        )));
    }
    ConvertedUtterance::new(f.utt_id, f.target_speaker, UnitSeq::new(f.units)?, PitchContour::new(f.f0_hz)?)
}

pub fn export_converted(c: &ConvertedUtterance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, converted_to_json(c)? + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_converted(path: impl AsRef<Path>) -> Result<ConvertedUtterance> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    converted_from_json(&s).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConvertedUtterance {
        ConvertedUtterance::new(
            "u__to__b".into(),
            "b".into(),
            UnitSeq::new(vec![4, 4, 7]).unwrap(),
            PitchContour::new(vec![0.0, 123.456789012345, 600.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_and_field_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        export_converted(&sample(), &p).unwrap();
        assert_eq!(load_converted(&p).unwrap(), sample());
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(r#"{"version":1,"utt_id":"u__to__b","target_speaker":"b","frame_period_ms":20,"units":[4,4,7],"f0_hz":[0.0,"#));
    }

    #[test]
    fn empty_utterance() {
        let c = ConvertedUtterance::new("e".into(), "b".into(), UnitSeq::default(), PitchContour::default()).unwrap();
        let s = converted_to_json(&c).unwrap();
        assert!(s.ends_with(r#""units":[],"f0_hz":[]}"#));
        assert_eq!(converted_from_json(&s).unwrap(), c);
    }

    #[test]
    fn rejects_bad_files() {
        let ok = converted_to_json(&sample()).unwrap();
        assert!(converted_from_json(&ok.replace("\"version\":1", "\"version\":2")).is_err());
        assert!(converted_from_json(&ok.replace("\"frame_period_ms\":20", "\"frame_period_ms\":10")).is_err());
        assert!(converted_from_json(&ok.replace("[4,4,7]", "[4,4]")).is_err());
    }
}
