//! JSON-lines corpus manifests.
//!
//! One record per line:
//! `{"utt_id":str, "speaker":str, "units":[int...], "f0_hz":[float...], "text":str|null, "textgrid":str|null}`.

use std::collections::HashSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unitseq::{PitchContour, UnitSeq};

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub utt_id: String,
    pub speaker: String,
    pub units: UnitSeq,
    pub f0: PitchContour<f64>,
    pub text: Option<String>,
    /// TextGrid path, relative paths resolved against the manifest's directory.
    pub textgrid: Option<String>,
}

impl Utterance {
    pub fn new(
        utt_id: impl Into<String>,
        speaker: impl Into<String>,
        units: UnitSeq,
        f0: PitchContour<f64>,
    ) -> Result<Self> {
        let u = Utterance {
            utt_id: utt_id.into(),
            speaker: speaker.into(),
            units,
            f0,
            text: None,
            textgrid: None,
        };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        if self.utt_id.is_empty() {
            return Err(Error::invalid("empty utterance id"));
        }
        if self.speaker.is_empty() {
            return Err(Error::invalid(format!("utterance `{}` has an empty speaker id", self.utt_id)));
        }
        if self.units.len() != self.f0.len() {
            return Err(Error::shape(format!(
                "utterance `{}`: {} units but {} f0 frames",
                self.utt_id,
                self.units.len(),
                self.f0.len()
            )));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.units.duration_s()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    utt_id: String,
    speaker: String,
    units: Vec<u16>,
    f0_hz: Vec<f64>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    textgrid: Option<String>,
}

impl Record {
    fn from_utt(u: &Utterance) -> Self {
        Record {
            utt_id: u.utt_id.clone(),
            speaker: u.speaker.clone(),
            units: u.units.as_slice().to_vec(),
            f0_hz: u.f0.values().to_vec(),
            text: u.text.clone(),
            textgrid: u.textgrid.clone(),
        }
    }

    fn into_utt(self) -> Result<Utterance> {
        let u = Utterance {
            units: UnitSeq::new(self.units)?,
            f0: PitchContour::new(self.f0_hz)?,
            utt_id: self.utt_id,
            speaker: self.speaker,
            text: self.text,
            textgrid: self.textgrid,
        };
        u.validate()?;
        Ok(u)
    }
}

/// Rejects invalid records and duplicate ids.
pub fn validate_manifest(utts: &[Utterance]) -> Result<()> {
    let mut seen = HashSet::with_capacity(utts.len());
    for u in utts {
        u.validate()?;
        if !seen.insert(u.utt_id.as_str()) {
            return Err(Error::invalid(format!("duplicate utterance id `{}`", u.utt_id)));
        }
    }
    Ok(())
}

pub fn manifest_to_string(utts: &[Utterance]) -> Result<String> {
    validate_manifest(utts)?;
    let mut out = String::new();
    for u in utts {
        out.push_str(&serde_json::to_string(&Record::from_utt(u))?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses manifest text; `source` names the input in error messages.
pub fn parse_manifest(text: &str, source: &str) -> Result<Vec<Utterance>> {
    let mut utts = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            msg,
        };
        let rec: Record = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let u = rec.into_utt().map_err(|e| err(e.to_string()))?;
        if !seen.insert(u.utt_id.clone()) {
            return Err(err(format!("duplicate utterance id `{}`", u.utt_id)));
        }
        utts.push(u);
    }
    Ok(utts)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, &path.display().to_string())
}

pub fn save_manifest(utts: &[Utterance], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = manifest_to_string(utts)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Resolves an utterance's TextGrid path against the manifest location.
pub fn resolve_textgrid(manifest_path: &Path, utt: &Utterance) -> Option<PathBuf> {
    let p = Path::new(utt.textgrid.as_deref()?);
    Some(if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or(Path::new(".")).join(p)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(id: &str, n: usize) -> Utterance {
        Utterance::new(
            id,
            "spk",
            UnitSeq::new((0..n as u16).collect()).unwrap(),
            PitchContour::new((0..n).map(|i| if i % 3 == 0 { 0.0 } else { 100.0 + i as f64 / 7.0 }).collect()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let mut a = utt("a", 4);
        a.text = Some("1-2 3".into());
        a.textgrid = Some("tg/a.TextGrid".into());
        let m = vec![a, utt("b", 0), utt("c", 9)];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        save_manifest(&m, &p).unwrap();
        assert_eq!(load_manifest(&p).unwrap(), m);
        assert_eq!(resolve_textgrid(&p, &m[0]).unwrap(), dir.path().join("tg/a.TextGrid"));
        assert!(resolve_textgrid(&p, &m[1]).is_none());
    }

    #[test]
    fn field_order_is_stable() {
        let line = manifest_to_string(&[utt("x", 1)]).unwrap();
        assert_eq!(line, "{\"utt_id\":\"x\",\"speaker\":\"spk\",\"units\":[0],\"f0_hz\":[0.0],\"text\":null,\"textgrid\":null}\n");
    }

    #[test]
    fn duplicate_id_names_it() {
        let text = manifest_to_string(&[utt("dup", 2)]).unwrap().repeat(2);
        let e = parse_manifest(&text, "m").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(e.to_string().contains("`dup`"));
        assert!(validate_manifest(&[utt("dup", 1), utt("dup", 1)]).is_err());
    }

    #[test]
    fn length_mismatch_rejected() {
        let line = r#"{"utt_id":"u","speaker":"s","units":[1,2,3,4,5,6,7,8,9,10],"f0_hz":[0,0,0,0,0,0,0,0,0]}"#;
        let e = parse_manifest(line, "m").unwrap_err().to_string();
        assert!(e.contains("10 units but 9 f0 frames"), "{e}");
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let good = manifest_to_string(&[utt("a", 1)]).unwrap();
        for bad in ["{not json", r#"{"utt_id":"b","speaker":"s","units":[100],"f0_hz":[0]}"#,
                    r#"{"utt_id":"b","speaker":"s","units":[1],"f0_hz":[-1]}"#,
                    r#"{"utt_id":"b","speaker":"s","units":[1],"f0_hz":[1],"extra":1}"#] {
            let text = format!("{good}\n{bad}\n");
            match parse_manifest(&text, "m").unwrap_err() {
                Error::Parse { line, .. } => assert_eq!(line, 3, "{bad}"),
                e => panic!("{e}"),
            }
        }
    }
}
