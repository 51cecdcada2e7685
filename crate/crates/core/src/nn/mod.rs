//! Minimal differentiable compute: tensors, a reverse-mode tape, 1-D
//! convolution and embedding layers, losses, Adam, finite-difference
//! gradient checking, and the checkpoint container.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod tape;
pub mod tensor;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, ParamRecord, SpeakerRecord};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use layers::{ConvLayer1D, EmbeddingTable};
pub use tape::{sigmoid, Tape, Var};
pub use tensor::{Grads, ParamEntry, ParamId, Params, Tensor};
pub use train::{fit, EpochLog, LoopConfig, TrainSummary, Trainable};

use crate::error::Result;
use crate::scalar::Scalar;

/// Mean squared error over `mask`-selected positions; zero when nothing is selected.
pub fn mse_loss<T: Scalar>(pred: &[T], target: &[T], mask: Option<&[bool]>) -> Result<T> {
    let p = Params::new();
    let mut tape = Tape::new(&p);
    let x = tape.constant(Tensor::new(1, pred.len(), pred.to_vec())?);
    let l = tape.mse(x, target, mask)?;
    Ok(tape.value(l).scalar())
}

/// Mean binary cross-entropy of `labels` in `{0, 1}` against logits.
pub fn bce_with_logits<T: Scalar>(logits: &[T], labels: &[T]) -> Result<T> {
    let p = Params::new();
    let mut tape = Tape::new(&p);
    let x = tape.constant(Tensor::new(1, logits.len(), logits.to_vec())?);
    let l = tape.bce_with_logits(x, labels)?;
    Ok(tape.value(l).scalar())
}

/// splitmix64 finalizer, used to derive independent per-item seeds.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
