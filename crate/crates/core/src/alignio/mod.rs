//! Corpus and alignment I/O: TextGrids, silence-filtered segments, manifests.

pub mod manifest;
pub mod segments;
pub mod textgrid;

pub use manifest::{load_manifest, parse_manifest, resolve_textgrid, save_manifest, validate_manifest, Utterance};
pub use segments::{
    align_unit_transcript, check_parallel, extract_segments, format_unit_transcript, parse_unit_transcript,
    AlignedSegments, Level, ParallelCheck, Segment, SilenceSet, UttAlignment,
};
pub use textgrid::{parse_textgrid, parse_textgrid_named, read_textgrid, save_textgrid, write_textgrid, Interval, TextGrid, Tier};
