//! `grad-check`: finite-difference check of both objectives.

use serde_json::json;
use unitstyle::durmodel::{self, DurArch};
use unitstyle::nn::{GradCheckOptions, GradCheckReport};
use unitstyle::pitchmodel::{self, PitchArch};

use crate::config::{key, key_or, Key, RunConfig};
use crate::error::CliError;
use crate::output::{event, out_dir, write_file};

pub fn keys() -> Vec<Key> {
    let d = GradCheckOptions::default();
    vec![
        key("out"),
        key_or("seed", 0),
        key_or("threads", 1),
        key_or("kind", "both"),
        key_or("eps", d.eps),
        key_or("coords", d.max_coords_per_param),
        key_or("tolerance", 1e-4),
        // Negative control for tests: perturbs the analytic gradient.
        key_or("corrupt_gradient", false),
    ]
}

fn model_kinds(kind: &str) -> Result<&'static [&'static str], CliError> {
    match kind {
        "both" => Ok(&["duration", "pitch"]),
        "dur" | "duration" => Ok(&["duration"]),
        "pitch" => Ok(&["pitch"]),
        _ => Err(CliError::input(format!("config key `kind`: expected both, dur or pitch, got `{kind}`"))),
    }
}

pub fn run(cfg: &mut RunConfig) -> Result<(), CliError> {
    let kinds = model_kinds(cfg.require("kind")?)?;
    let tol: f64 = cfg.value("tolerance")?;
    let seed: u64 = cfg.value("seed")?;
    let opts = GradCheckOptions {
        eps: cfg.value("eps")?,
        max_coords_per_param: cfg.value("coords")?,
        seed,
        corrupt_gradient: cfg.value("corrupt_gradient")?,
    };
    if !(opts.eps > 0.0) || opts.max_coords_per_param == 0 {
        return Err(CliError::input("`eps` and `coords` must be positive"));
    }

    let mut all_passed = true;
    let mut lines = String::new();
    for &name in kinds {
        let report: GradCheckReport = match name {
            "duration" => durmodel::grad_check_arch(DurArch::default(), seed, &opts)?,
            _ => pitchmodel::grad_check_arch(PitchArch::default(), seed, &opts)?,
        };
        let passed = report.passed(tol);
        all_passed &= passed;
        let line = json!({
            "event": "grad_check",
            "model": name,
            "passed": passed,
            "tolerance": tol,
            "report": report,
        });
        println!("{line}");
        lines.push_str(&format!("{line}\n"));
        eprintln!(
            "{name}: max relative error {:.3e} over {} coordinates ({} skipped near kinks): {}",
            report.max_rel_error,
            report.checked,
            report.skipped_kinks,
            if passed { "ok" } else { "FAILED" }
        );
    }
    if cfg.get("out").is_some() {
        let dir = out_dir(cfg)?;
        cfg.echo(&dir)?;
        write_file(&dir.join("grad_check.jsonl"), &lines)?;
    }
    event("grad_check_done", json!({ "passed": all_passed }));
    if all_passed {
        Ok(())
    } else {
        Err(CliError::input(format!("gradient check failed (tolerance {tol:e})")))
    }
}
