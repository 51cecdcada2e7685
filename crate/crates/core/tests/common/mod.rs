//! Shared oracles for integration tests. Also pulled into the CLI acceptance
//! suite via `#[path]`, so everything here depends only on the public API.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use unitstyle::alignio::{extract_segments, read_textgrid, AlignedSegments, Level, Segment, SilenceSet};
use unitstyle::metrics::Mismatch;

/// Minimum-cost transport between integer mass histograms on positions
/// `0..n`, cost `|i - j|`, solved as a min-cost flow by successive shortest
/// paths. A total-mass imbalance is settled at position `n`. Result is
/// scaled by `1/n` to match the histogram EMD convention.
pub fn min_cost_transport(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let (ta, tb) = (a.iter().sum::<u32>(), b.iter().sum::<u32>());
    let mut supply: Vec<i64> = a.iter().map(|&x| x as i64).collect();
    let mut demand: Vec<i64> = b.iter().map(|&x| x as i64).collect();
    supply.push(tb.saturating_sub(ta) as i64);
    demand.push(ta.saturating_sub(tb) as i64);
    let m = n + 1;

    // Nodes: source, m supply nodes, m demand nodes, sink.
    let (src, sink) = (0, 2 * m + 1);
    let nodes = 2 * m + 2;
    let mut edges: Vec<(usize, usize, i64, i64)> = Vec::new(); // (from, to, cap, cost)
    let add = |e: &mut Vec<(usize, usize, i64, i64)>, u, v, cap, cost| {
        e.push((u, v, cap, cost));
        e.push((v, u, 0, -cost));
    };
    for i in 0..m {
        add(&mut edges, src, 1 + i, supply[i], 0);
        add(&mut edges, 1 + m + i, sink, demand[i], 0);
        for j in 0..m {
            add(&mut edges, 1 + i, 1 + m + j, i64::MAX / 4, (i as i64 - j as i64).abs());
        }
    }

    let mut total_cost = 0i64;
    loop {
        // Bellman-Ford over the residual graph.
        let mut dist = vec![i64::MAX; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[src] = 0;
        for _ in 0..nodes {
            let mut changed = false;
            for (k, &(u, v, cap, cost)) in edges.iter().enumerate() {
                if cap > 0 && dist[u] != i64::MAX && dist[u] + cost < dist[v] {
                    dist[v] = dist[u] + cost;
                    via[v] = k;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink] == i64::MAX {
            break;
        }
        let mut push = i64::MAX;
        let mut v = sink;
        while v != src {
            let k = via[v];
            push = push.min(edges[k].2);
            v = edges[k].0;
        }
        let mut v = sink;
        while v != src {
            let k = via[v];
            edges[k].2 -= push;
            edges[k ^ 1].2 += push;
            v = edges[k].0;
        }
        total_cost += push * dist[sink];
    }
    total_cost as f64 / n as f64
}

/// Resolves from either crate, since this module is shared with the CLI tests.
pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/textgrid")
}

/// Runs every annotated TextGrid fixture; returns `(file, failure)` for mismatches.
pub fn check_textgrid_fixtures(dir: &Path) -> (usize, usize, Vec<(String, String)>) {
    let spec = std::fs::read_to_string(dir.join("expected.txt")).expect("fixture annotations");
    let silence = SilenceSet::default();
    let (mut valid, mut malformed, mut failures) = (0, 0, Vec::new());
    for line in spec.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        let (file, outcome, detail) = (cols[0], cols[1], cols[2]);
        let got = read_textgrid(dir.join(file));
        let problem = match (outcome, got) {
            ("ok", Ok(grid)) => {
                valid += 1;
                let mut desc: Vec<String> = grid
                    .tiers
                    .iter()
                    .map(|t| {
                        let kept = extract_segments(&grid, &t.name, Level::Word, &silence).unwrap().len();
                        format!("{}={}/{}", t.name, t.intervals.len(), kept)
                    })
                    .collect();
                if desc.is_empty() {
                    desc.push("-".into());
                }
                let desc = desc.join(" ");
                (desc != detail).then(|| format!("parsed as `{desc}`, expected `{detail}`"))
            }
            ("err", Err(e)) => {
                malformed += 1;
                let (line_no, needle) = detail.split_once(' ').unwrap();
                match e {
                    unitstyle::Error::Parse { line, msg, .. } => {
                        (line.to_string() != line_no || !msg.contains(needle))
                            .then(|| format!("error at line {line}: {msg}"))
                    }
                    other => Some(format!("non-parse error: {other}")),
                }
            }
            ("ok", Err(e)) => Some(format!("rejected: {e}")),
            ("err", Ok(_)) => Some("accepted a malformed file".into()),
            (o, _) => Some(format!("bad annotation `{o}`")),
        };
        if let Some(p) = problem {
            failures.push((file.to_string(), p));
        }
    }
    (valid, malformed, failures)
}

fn segs(level: Level, s: &[(f64, f64, &str)]) -> AlignedSegments {
    AlignedSegments::new(
        level,
        s.iter()
            .map(|&(start, end, label)| Segment { start, end, label: label.into() })
            .collect(),
    )
    .unwrap()
}

/// Hand-computed length errors: `Σ |(e_syn - s_syn) - (e_ref - s_ref)|`.
pub fn length_error_cases() -> Vec<(&'static str, AlignedSegments, AlignedSegments, Result<f64, Mismatch>)> {
    use Level::{Phone, Word};
    vec![
        ("single phone", segs(Phone, &[(0.0, 0.5, "AH")]), segs(Phone, &[(0.0, 0.7, "AH")]), Ok(0.2)),
        (
            "two words",
            segs(Word, &[(0.0, 0.3, "a"), (0.3, 0.8, "b")]),
            segs(Word, &[(0.0, 0.4, "a"), (0.4, 0.6, "b")]),
            Ok(0.4),
        ),
        (
            "gaps and shifted onsets",
            segs(Phone, &[(0.1, 0.2, "x"), (0.5, 1.0, "y"), (1.0, 1.1, "z")]),
            segs(Phone, &[(0.0, 0.2, "x"), (0.2, 0.5, "y"), (0.9, 1.2, "z")]),
            Ok(0.5),
        ),
        (
            "shift only",
            segs(Word, &[(0.0, 0.25, "a"), (0.25, 0.5, "b")]),
            segs(Word, &[(1.0, 1.25, "a"), (2.0, 2.25, "b")]),
            Ok(0.0),
        ),
        (
            "count mismatch",
            segs(Phone, &[(0.0, 0.1, "a"), (0.1, 0.2, "b")]),
            segs(Phone, &[(0.0, 0.2, "a")]),
            Err(Mismatch::Count { reference: 2, synthesized: 1 }),
        ),
        (
            "label mismatch",
            segs(Phone, &[(0.0, 0.1, "a"), (0.1, 0.2, "b")]),
            segs(Phone, &[(0.0, 0.1, "a"), (0.1, 0.2, "c")]),
            Err(Mismatch::Label { index: 1 }),
        ),
    ]
}

/// Voicing and gross-pitch errors counted frame by frame.
pub fn naive_vde_ffe(p_ref: &[f64], p_syn: &[f64]) -> (f64, f64) {
    let mut voicing = 0usize;
    let mut gross = 0usize;
    for i in 0..p_ref.len() {
        let (r, s) = (p_ref[i] > 0.0, p_syn[i] > 0.0);
        if r != s {
            voicing += 1;
        } else if r && (p_syn[i] - p_ref[i]).abs() / p_ref[i] > 0.2 {
            gross += 1;
        }
    }
    let t = p_ref.len() as f64;
    (voicing as f64 / t, (voicing + gross) as f64 / t)
}
