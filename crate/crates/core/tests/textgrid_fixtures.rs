mod common;

use unitstyle::alignio::{check_parallel, extract_segments, read_textgrid, Level, ParallelCheck, SilenceSet};

#[test]
fn fixtures_parse_or_reject_as_annotated() {
    let (valid, malformed, failures) = common::check_textgrid_fixtures(&common::fixture_dir());
    assert!(valid >= 5 && malformed >= 5, "{valid} valid, {malformed} malformed");
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn quoted_and_multiline_labels() {
    let g = read_textgrid(common::fixture_dir().join("v03_quotes_multiline.TextGrid")).unwrap();
    let t = g.tier("words").unwrap();
    assert_eq!(t.intervals[0].text, "say \"hi\"");
    assert_eq!(t.intervals[1].text, "two\nlines");
}

#[test]
fn crlf_and_bom_match_plain_file() {
    let a = read_textgrid(common::fixture_dir().join("v01_basic.TextGrid")).unwrap();
    let b = read_textgrid(common::fixture_dir().join("v02_bom_crlf.TextGrid")).unwrap();
    assert_eq!(a.tier("words"), b.tier("words"));
}

#[test]
fn silence_filtering_and_extra_labels() {
    let g = read_textgrid(common::fixture_dir().join("v01_basic.TextGrid")).unwrap();
    let words = extract_segments(&g, "words", Level::Word, &SilenceSet::default()).unwrap();
    assert_eq!(words.labels(), ["hello", "world"]);
    let phones = extract_segments(&g, "phones", Level::Phone, &SilenceSet::with_extra(["L"])).unwrap();
    assert_eq!(phones.labels(), ["HH", "AH", "OW", "W", "ER", "D"]);

    let g = read_textgrid(common::fixture_dir().join("v05_gaps_silence.TextGrid")).unwrap();
    let words = extract_segments(&g, "words", Level::Word, &SilenceSet::default()).unwrap();
    assert_eq!(words.labels(), ["a", "b"]);
    assert_eq!(words.segments()[1].start, 1.0);
}

#[test]
fn parallel_checks_on_fixture_pairs() {
    let g = read_textgrid(common::fixture_dir().join("v01_basic.TextGrid")).unwrap();
    let silence = SilenceSet::default();
    let words = extract_segments(&g, "words", Level::Word, &silence).unwrap();
    let phones = extract_segments(&g, "phones", Level::Phone, &silence).unwrap();
    assert_eq!(check_parallel(&phones, &phones), ParallelCheck::Match);
    assert_eq!(
        check_parallel(&words, &phones),
        ParallelCheck::CountMismatch { reference: 2, synthesized: 8 }
    );
    let mut g2 = g.clone();
    g2.tiers[0].intervals[2].text = "word".into();
    let words2 = extract_segments(&g2, "words", Level::Word, &silence).unwrap();
    assert_eq!(check_parallel(&words, &words2), ParallelCheck::LabelMismatch { index: 1 });
}
