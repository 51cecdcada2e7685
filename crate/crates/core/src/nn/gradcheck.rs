//! Central finite-difference verification of tape gradients.
//!
//! For every parameter coordinate inspected, the analytic gradient from
//! [`Tape::backward`] is compared to `(f(θ+eps) − f(θ−eps)) / (2·eps)`.
//! Coordinates whose perturbation flips any ReLU input sign sit on a kink
//! where the loss is not differentiable; they are skipped and counted.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Params;

/// Denominator floor for relative error, so that gradients which are zero
/// up to rounding noise are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates per parameter array; arrays at most this large are checked exhaustively.
    pub max_coords_per_param: usize,
    pub seed: u64,
    /// Negative control: perturbs analytic gradients before comparison.
    pub corrupt_gradient: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-4,
            max_coords_per_param: 24,
            seed: 0,
            corrupt_gradient: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst_param: Option<String>,
    pub worst_index: Option<usize>,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Checks the gradient of the scalar built by `loss_fn` against central differences.
pub fn grad_check<F>(params: &Params<f64>, loss_fn: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    let (analytic, base_pattern) = {
        let mut tape = Tape::new(params);
        let loss = loss_fn(&mut tape)?;
        (tape.backward(loss)?, tape.relu_pattern())
    };

    let eval = |p: &Params<f64>| -> Result<(f64, Vec<bool>)> {
        let mut tape = Tape::new(p);
        let loss = loss_fn(&mut tape)?;
        Ok((tape.value(loss).scalar(), tape.relu_pattern()))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
        worst_param: None,
        worst_index: None,
    };

    for (pi, grads) in analytic.iter().enumerate() {
        let n = grads.len();
        let coords: Vec<usize> = if n <= opts.max_coords_per_param {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, opts.max_coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let orig = work.entries()[pi].data[i];
            work.entries_mut()[pi].data[i] = orig + opts.eps;
            let (plus, pat_plus) = eval(&work)?;
            work.entries_mut()[pi].data[i] = orig - opts.eps;
            let (minus, pat_minus) = eval(&work)?;
            work.entries_mut()[pi].data[i] = orig;

            if pat_plus != base_pattern || pat_minus != base_pattern {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let mut a = grads[i];
            if opts.corrupt_gradient {
                a = a * 1.01 + 1e-3;
            }
            let err = relative_error(a, numeric);
            report.checked += 1;
            if report.worst_param.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = Some(params.entries()[pi].name.clone());
                report.worst_index = Some(i);
            }
        }
    }
    Ok(report)
}
