use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix. Sequence activations use `[channels, length]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape(format!(
                "{rows}x{cols} tensor needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Value of a `1x1` tensor.
    pub fn scalar(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T> ParamEntry<T> {
    /// Leading dimension; the remaining dimensions are flattened into columns.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.iter().skip(1).product()
    }
}

/// Named, ordered set of trainable arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Params { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) -> ParamId {
        let name = name.into();
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "parameter `{name}` shape/data mismatch"
        );
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter `{name}`"
        );
        self.entries.push(ParamEntry { name, shape, data });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamEntry<T> {
        &mut self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    data: e.data.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.data.iter().all(|v| v.is_finite()))
    }
}

/// Gradients aligned index-for-index with a [`Params`] set.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T> {
    pub(crate) values: Vec<Vec<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(params: &Params<T>) -> Self {
        Grads {
            values: params
                .entries()
                .iter()
                .map(|e| vec![T::zero(); e.data.len()])
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.values[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[T]> {
        self.values.iter().map(Vec::as_slice)
    }

    /// `self += other`, element by element.
    pub fn accumulate(&mut self, other: &Grads<T>) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, c: T) {
        for v in self.values.iter_mut().flatten() {
            *v *= c;
        }
    }
}
