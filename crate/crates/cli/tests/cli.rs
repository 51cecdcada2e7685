use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use unitstyle::alignio::load_manifest;
use unitstyle::pipeline::{export_converted, load_converted, ConvertedUtterance};
use unitstyle::syncorpus::oracle_id;

fn unitstyle(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unitstyle"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let o = unitstyle(cwd, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn fails(cwd: &Path, args: &[&str]) -> String {
    let o = unitstyle(cwd, args);
    assert_eq!(o.status.code(), Some(1), "{args:?} should exit 1");
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Hash of every output file except the config echo, which records `out`.
fn digest(dir: &Path) -> String {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.ends_with("config.txt"))
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap().to_string_lossy().as_bytes());
        h.update(std::fs::read(&p).unwrap());
    }
    format!("{:x}", h.finalize())
}

const SMALL: [&str; 4] = ["--train-utterances", "24", "--test-scripts", "3"];

fn small_corpus(cwd: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["gen-corpus", "--out", out];
    args.extend(SMALL);
    args.extend(extra);
    ok(cwd, &args);
}

#[test]
fn gen_corpus_is_deterministic_and_creates_nested_out() {
    let t = tempfile::tempdir().unwrap();
    small_corpus(t.path(), "a/b/c", &["--seed", "5"]);
    small_corpus(t.path(), "d", &["--seed", "5"]);
    small_corpus(t.path(), "e", &["--seed", "6"]);
    let (a, d, e) = (digest(&t.path().join("a/b/c")), digest(&t.path().join("d")), digest(&t.path().join("e")));
    assert_eq!(a, d);
    assert_ne!(a, e);
    for f in ["train.jsonl", "test.jsonl", "oracle.jsonl", "ground_truth.json", "config.txt"] {
        assert!(t.path().join("d").join(f).is_file(), "{f}");
    }
}

#[test]
fn stdout_is_json_lines() {
    let t = tempfile::tempdir().unwrap();
    let mut args = vec!["gen-corpus", "--out", "c"];
    args.extend(SMALL);
    let out = ok(t.path(), &args);
    for line in out.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["event"].is_string());
    }
}

#[test]
fn invalid_generator_values_exit_one() {
    let t = tempfile::tempdir().unwrap();
    let err = fails(t.path(), &["gen-corpus", "--out", "c", "--set", "rates=0,2"]);
    assert!(err.contains("rate"), "{err}");
    let err = fails(t.path(), &["gen-corpus", "--out", "c", "--set", "rates=1,2,3"]);
    assert!(err.contains("rates"), "{err}");
    fails(t.path(), &["gen-corpus", "--out", "c", "--preset", "four-speaker"]);
    assert!(!t.path().join("c").exists());
}

#[test]
fn config_file_precedence_unknown_keys_and_echo() {
    let t = tempfile::tempdir().unwrap();
    std::fs::write(t.path().join("run.cfg"), "seed = 3\ntrain_utterances = 30\ntest_scripts = 2\n").unwrap();
    ok(t.path(), &["gen-corpus", "--config", "run.cfg", "--seed", "4", "--out", "c"]);
    let echo = std::fs::read_to_string(t.path().join("c/config.txt")).unwrap();
    assert!(echo.contains("seed = 4\n") && echo.contains("train_utterances = 30\n"), "{echo}");
    assert_eq!(load_manifest(t.path().join("c/train.jsonl")).unwrap().len(), 30);

    // The echo reproduces the run.
    ok(t.path(), &["gen-corpus", "--config", "c/config.txt", "--out", "c"]);
    ok(t.path(), &["gen-corpus", "--config", "run.cfg", "--seed", "4", "--out", "c2"]);
    assert_eq!(digest(&t.path().join("c")), digest(&t.path().join("c2")));

    std::fs::write(t.path().join("bad.cfg"), "seed = 1\nepochs = 3\n").unwrap();
    let err = fails(t.path(), &["gen-corpus", "--config", "bad.cfg", "--out", "x"]);
    assert!(err.contains("unknown key `epochs`"), "{err}");
    fails(t.path(), &["train-dur", "--set", "colour=blue", "--out", "x"]);
    fails(t.path(), &["gen-corpus", "--config", "missing.cfg", "--out", "x"]);
    fails(t.path(), &["no-such-command"]);
    assert!(unitstyle(t.path(), &["--help"]).status.success());
}

#[test]
fn train_convert_evaluate_end_to_end() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    small_corpus(p, "c", &["--preset", "three-speaker"]);
    let tiny = ["--epochs", "2", "--set", "channels=8", "--set", "unit_dim=8"];
    let mut dur = vec!["train-dur", "--manifest", "c/train.jsonl", "--out", "m"];
    dur.extend(tiny);
    let log = ok(p, &dur);
    assert_eq!(log.lines().filter(|l| l.contains("\"event\":\"epoch\"")).count(), 2);
    let mut pitch = vec!["train-pitch", "--manifest", "c/train.jsonl", "--out", "m", "--dtype", "f64"];
    pitch.extend(tiny);
    ok(p, &pitch);
    for f in ["duration.json", "pitch.json", "train_log.jsonl", "config.txt"] {
        assert!(p.join("m").join(f).is_file(), "{f}");
    }

    let test = load_manifest(p.join("c/test.jsonl")).unwrap();
    let models = ["--dur-ckpt", "m/duration.json", "--pitch-ckpt", "m/pitch.json"];
    let convert = |mode: &str, out: &str, extra: &[&str]| {
        let mut a = vec!["convert", "--manifest", "c/test.jsonl", "--mode", mode, "--out", out];
        a.extend(models);
        a.extend(extra);
        a.into_iter().map(String::from).collect::<Vec<_>>()
    };
    let run = |a: Vec<String>| ok(p, &a.iter().map(String::as_str).collect::<Vec<_>>());

    // Every source goes to both other speakers.
    run(convert("pitch", "pitch", &[]));
    let files = std::fs::read_dir(p.join("pitch")).unwrap().count() - 1;
    assert_eq!(files, test.len() * 2);
    for u in &test {
        for tgt in ["spk_a", "spk_b", "spk_c"].iter().filter(|s| **s != u.speaker) {
            let c = load_converted(p.join("pitch").join(format!("{}.json", oracle_id(&u.utt_id, tgt)))).unwrap();
            assert_eq!(c.units, u.units);
            assert_eq!(c.target_speaker, *tgt);
        }
    }

    run(convert("rhythm", "rhythm", &["--source", "spk_a", "--target", "spk_b"]));
    let n_a = test.iter().filter(|u| u.speaker == "spk_a").count();
    assert_eq!(std::fs::read_dir(p.join("rhythm")).unwrap().count() - 1, n_a);

    let a = convert("both", "x", &["--target", "nobody"]);
    assert!(fails(p, &a.iter().map(String::as_str).collect::<Vec<_>>()).contains("nobody"));
    let a = convert("sideways", "x", &[]);
    fails(p, &a.iter().map(String::as_str).collect::<Vec<_>>());
    fails(p, &["convert", "--manifest", "c/test.jsonl", "--mode", "pitch", "--out", "x"]);

    ok(p, &["evaluate", "--converted", "pitch", "--reference", "c/oracle.jsonl", "--out", "ev"]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("ev/report.json")).unwrap()).unwrap();
    assert_eq!(report["counts"]["utterances"].as_u64().unwrap() as usize, test.len() * 2);
    assert!(p.join("ev/report.txt").is_file());
}

#[test]
fn evaluating_references_against_themselves_scores_zero() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    small_corpus(p, "c", &[]);
    let test = load_manifest(p.join("c/test.jsonl")).unwrap();
    std::fs::create_dir(p.join("self")).unwrap();
    for u in &test {
        let c = ConvertedUtterance::new(u.utt_id.clone(), u.speaker.clone(), u.units.clone(), u.f0.clone()).unwrap();
        export_converted(&c, p.join("self").join(format!("{}.json", u.utt_id))).unwrap();
    }
    ok(p, &["evaluate", "--converted", "self", "--reference", "c/test.jsonl", "--out", "ev", "--aggregation", "segment"]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("ev/report.json")).unwrap()).unwrap();
    for k in ["tle", "wle", "ple", "vde", "ffe", "w_ffe", "p_ffe", "emd"] {
        assert_eq!(report["mean"][k].as_f64(), Some(0.0), "{k}");
    }

    // No shared ids with the oracle manifest.
    let err = fails(p, &["evaluate", "--converted", "self", "--reference", "c/oracle.jsonl", "--out", "ev2"]);
    assert!(err.contains("no converted utterance"), "{err}");
    fails(p, &["evaluate", "--converted", "self", "--reference", "c/test.jsonl", "--aggregation", "median", "--out", "ev3"]);
}

#[test]
fn grad_check_detects_corrupted_gradients() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["grad-check", "--kind", "dur", "--seed", "9", "--out", "g"]);
    assert!(t.path().join("g/grad_check.jsonl").is_file());
    let o = unitstyle(t.path(), &["grad-check", "--kind", "dur", "--corrupt-gradient"]);
    assert_eq!(o.status.code(), Some(1));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("\"passed\":false"), "{out}");
}

#[test]
fn checkpoints_do_not_depend_on_thread_count() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    small_corpus(p, "c", &[]);
    for (threads, out) in [("1", "m1"), ("3", "m3")] {
        ok(p, &["train-dur", "--manifest", "c/train.jsonl", "--epochs", "2", "--threads", threads, "--out", out]);
    }
    let read = |d: &str| std::fs::read(p.join(d).join("duration.json")).unwrap();
    assert_eq!(read("m1"), read("m3"));
}
