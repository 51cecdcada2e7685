use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::{ParamId, Params};
use crate::scalar::Scalar;

/// Same-length 1-D convolution with weights `[out, in, kernel]` and bias `[out]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayer1D {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_width: usize,
}

impl ConvLayer1D {
    /// Registers a layer with He-uniform weights and zero bias.
    pub fn new<T: Scalar, R: Rng>(
        params: &mut Params<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel_width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel_width.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "{name}: kernel width {kernel_width} must be odd"
            )));
        }
        let fan_in = in_channels * kernel_width;
        let bound = (6.0 / fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let n = out_channels * fan_in;
        let w = (0..n).map(|_| T::lit(dist.sample(rng))).collect();
        let weight = params.add(
            format!("{name}.weight"),
            vec![out_channels, in_channels, kernel_width],
            w,
        );
        let bias = params.add(
            format!("{name}.bias"),
            vec![out_channels, 1],
            vec![T::zero(); out_channels],
        );
        Ok(ConvLayer1D {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel_width,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        tape.conv1d(x, w, b, self.kernel_width)
    }

    /// Sets weights and bias to zero (and the bias to `bias`).
    pub fn zero_init<T: Scalar>(&self, params: &mut Params<T>, bias: T) {
        params.get_mut(self.weight).data.fill(T::zero());
        params.get_mut(self.bias).data.fill(bias);
    }
}

/// Learned lookup table `[rows, dim]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbeddingTable {
    pub weight: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    /// Registers a table with standard-normal entries.
    pub fn new<T: Scalar, R: Rng>(
        params: &mut Params<T>,
        name: &str,
        rows: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let dist = Normal::new(0.0, 1.0).expect("valid normal");
        let w = (0..rows * dim).map(|_| T::lit(dist.sample(rng))).collect();
        let weight = params.add(format!("{name}.weight"), vec![rows, dim], w);
        EmbeddingTable { weight, rows, dim }
    }

    /// `[dim, indices.len()]` activations.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, indices: &[usize]) -> Result<Var> {
        let t = tape.param(self.weight);
        tape.gather(t, indices)
    }

    pub fn row<'a, T: Scalar>(&self, params: &'a Params<T>, index: usize) -> &'a [T] {
        &params.get(self.weight).data[index * self.dim..(index + 1) * self.dim]
    }
}

/// Receptive field, in input positions, of `layers` stacked same-length
/// convolutions of width `kernel`.
pub fn receptive_field(layers: usize, kernel: usize) -> usize {
    1 + layers * (kernel - 1)
}
