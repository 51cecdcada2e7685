//! Mini-batch Adam training loop shared by both predictors.
//!
//! Each example gets its own tape, so a batch can be differentiated in
//! parallel; per-example gradients are then reduced in batch order, which
//! keeps results bit-identical regardless of thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::adam::{AdamConfig, AdamState};
use crate::nn::mix_seed;
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::{Grads, Params};
use crate::scalar::Scalar;

/// Training-time unit masking for one example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskSpec {
    pub prob: f64,
    pub seed: u64,
}

pub trait Trainable<T: Scalar>: Sync {
    type Example: Sync;

    fn params(&self) -> &Params<T>;
    fn params_mut(&mut self) -> &mut Params<T>;

    /// Records the loss of one example on `tape`.
    fn example_loss(&self, tape: &mut Tape<'_, T>, ex: &Self::Example, mask: Option<MaskSpec>) -> Result<Var>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mask_prob: f64,
    pub adam: AdamConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainSummary {
    /// Unmasked mean training loss before the first update.
    pub initial_loss: f64,
    /// Unmasked mean training loss after the last update.
    pub final_loss: f64,
    pub epochs: Vec<EpochLog>,
}

/// Mean unmasked loss over `examples`.
pub fn mean_loss<T: Scalar, M: Trainable<T>>(model: &M, examples: &[M::Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let losses: Vec<Result<f64>> = examples
        .par_iter()
        .map(|ex| {
            let mut tape = Tape::new(model.params());
            let l = model.example_loss(&mut tape, ex, None)?;
            Ok(tape.value(l).scalar().as_f64())
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / examples.len() as f64)
}

pub fn fit<T, M>(
    model: &mut M,
    train: &[M::Example],
    val: &[M::Example],
    cfg: &LoopConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainSummary>
where
    T: Scalar,
    M: Trainable<T>,
{
    if train.is_empty() {
        return Err(Error::InsufficientData("no training examples".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if !(0.0..1.0).contains(&cfg.mask_prob) {
        return Err(Error::invalid(format!("mask probability {} not in [0, 1)", cfg.mask_prob)));
    }

    let initial_loss = mean_loss(model, train)?;
    let mut opt = AdamState::new(model.params(), cfg.adam);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, epoch as u64, 0));
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;

        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, Grads<T>)>> = {
                let m: &M = model;
                batch
                    .par_iter()
                    .map(|&i| {
                        let mask = (cfg.mask_prob > 0.0).then(|| MaskSpec {
                            prob: cfg.mask_prob,
                            seed: mix_seed(cfg.seed, epoch as u64, i as u64 + 1),
                        });
                        let mut tape = Tape::new(m.params());
                        let l = m.example_loss(&mut tape, &train[i], mask)?;
                        let loss = tape.value(l).scalar().as_f64();
                        Ok((loss, tape.backward(l)?))
                    })
                    .collect()
            };
            let mut grads = Grads::zeros_like(model.params());
            for r in results {
                let (loss, g) = r?;
                if !loss.is_finite() {
                    return Err(Error::invalid(format!("training diverged at epoch {epoch} (loss {loss})")));
                }
                epoch_total += loss;
                grads.accumulate(&g);
            }
            grads.scale(T::one() / T::from_usize(batch.len()).expect("batch size fits"));
            opt.step(model.params_mut(), &grads)?;
        }

        let val_loss = if val.is_empty() {
            None
        } else {
            Some(mean_loss(model, val)?)
        };
        let log = EpochLog {
            epoch,
            train_loss: epoch_total / train.len() as f64,
            val_loss,
        };
        on_epoch(&log);
        epochs.push(log);
    }

    let final_loss = mean_loss(model, train)?;
    Ok(TrainSummary {
        initial_loss,
        final_loss,
        epochs,
    })
}

/// Splits off every `round(1 / fraction)`-th item as validation data.
pub fn split_validation<E: Clone>(items: &[E], fraction: f64) -> (Vec<E>, Vec<E>) {
    if fraction <= 0.0 || items.len() < 2 {
        return (items.to_vec(), Vec::new());
    }
    let stride = ((1.0 / fraction).round() as usize).max(2);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, it) in items.iter().enumerate() {
        if i % stride == stride - 1 {
            val.push(it.clone());
        } else {
            train.push(it.clone());
        }
    }
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::{ParamId, Tensor};

    /// Fits a scalar `w` so that `w * x ≈ y`.
    struct Line {
        params: Params<f64>,
        w: ParamId,
        b: ParamId,
    }

    impl Trainable<f64> for Line {
        type Example = (f64, f64);
        fn params(&self) -> &Params<f64> {
            &self.params
        }
        fn params_mut(&mut self) -> &mut Params<f64> {
            &mut self.params
        }
        fn example_loss(&self, tape: &mut Tape<'_, f64>, ex: &(f64, f64), _: Option<MaskSpec>) -> Result<Var> {
            let x = tape.constant(Tensor::new(1, 1, vec![ex.0])?);
            let (w, b) = (tape.param(self.w), tape.param(self.b));
            let y = tape.conv1d(x, w, b, 1)?;
            tape.mse(y, &[ex.1], None)
        }
    }

    fn line() -> Line {
        let mut params = Params::new();
        let w = params.add("w", vec![1, 1], vec![0.0]);
        let b = params.add("b", vec![1, 1], vec![0.0]);
        Line { params, w, b }
    }

    fn cfg() -> LoopConfig {
        LoopConfig {
            epochs: 200,
            batch_size: 4,
            seed: 11,
            mask_prob: 0.0,
            adam: AdamConfig { lr: 0.05, ..Default::default() },
        }
    }

    #[test]
    fn fits_a_line_deterministically() {
        let data: Vec<(f64, f64)> = (0..16).map(|i| (i as f64 / 8.0, 3.0 * i as f64 / 8.0 - 1.0)).collect();
        let mut a = line();
        let s = fit(&mut a, &data, &[], &cfg(), |_| {}).unwrap();
        assert!(s.final_loss < 1e-3 * s.initial_loss, "{s:?}");
        let mut b = line();
        fit(&mut b, &data, &[], &cfg(), |_| {}).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn rejects_bad_config() {
        let mut m = line();
        assert!(fit(&mut m, &[], &[], &cfg(), |_| {}).is_err());
        let bad = LoopConfig { batch_size: 0, ..cfg() };
        assert!(fit(&mut m, &[(1.0, 1.0)], &[], &bad, |_| {}).is_err());
        let bad = LoopConfig { mask_prob: 1.0, ..cfg() };
        assert!(fit(&mut m, &[(1.0, 1.0)], &[], &bad, |_| {}).is_err());
    }

    #[test]
    fn validation_split_is_strided() {
        let items: Vec<u32> = (0..10).collect();
        let (t, v) = split_validation(&items, 0.2);
        assert_eq!(v, vec![4, 9]);
        assert_eq!(t.len(), 8);
        let (t, v) = split_validation(&items, 0.0);
        assert_eq!((t.len(), v.len()), (10, 0));
    }
}
