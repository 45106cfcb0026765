//! Dense row-major tensors and flat parameter vectors.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};

/// A shape-tagged dense array of `f64` in row-major order.
///
/// Every element is finite and `shape.iter().product() == data.len()`;
/// both are checked on construction. Tensors are plain values and may be
/// shared read-only between workers.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            bail!(Dimension, "shape {:?} must be non-empty with positive extents", shape);
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            bail!(Dimension, "shape {:?} holds {} elements but {} were given", shape, n, data.len());
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            bail!(Numeric, "element {} is not finite ({})", i, data[i]);
        }
        Ok(Tensor { shape, data })
    }

    /// A 1-D tensor over `data`.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    /// A 2-D tensor with `rows x cols` elements.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n])
    }

    /// Builds a tensor without re-checking finiteness. Callers guarantee
    /// the invariants; used on hot paths whose inputs were already checked.
    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Applies `f` element-wise, re-validating finiteness of the result.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn check_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            bail!(Dimension, "{}: shape {:?} vs {:?}", what, self.shape, other.shape);
        }
        Ok(())
    }
}

/// Which parameter of a layer a block of a [`ParamVector`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
}

/// One contiguous block of a flattened parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamBlock {
    /// Index of the owning layer within the network spec.
    pub layer: usize,
    pub role: ParamRole,
    pub offset: usize,
    pub len: usize,
}

/// Flat parameter vector together with its layer layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<ParamBlock>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Vec<ParamBlock>) -> Result<Self> {
        let mut offset = 0;
        for block in &layout {
            if block.offset != offset {
                bail!(Dimension, "layout block for layer {} starts at {} (expected {})", block.layer, block.offset, offset);
            }
            offset += block.len;
        }
        if offset != values.len() {
            bail!(Dimension, "layout covers {} values but vector has {}", offset, values.len());
        }
        Ok(ParamVector { values, layout })
    }

    /// Parameters without layer structure, e.g. for optimizer unit tests.
    pub fn flat(values: Vec<f64>) -> Self {
        let len = values.len();
        let layout = if len == 0 {
            Vec::new()
        } else {
            vec![ParamBlock { layer: 0, role: ParamRole::Weight, offset: 0, len }]
        };
        ParamVector { values, layout }
    }

    pub fn zeros_like(other: &ParamVector) -> Self {
        ParamVector { values: vec![0.0; other.values.len()], layout: other.layout.clone() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &[ParamBlock] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same values, new numbers; keeps the layout.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            bail!(Dimension, "expected {} parameters, got {}", self.values.len(), values.len());
        }
        Ok(ParamVector { values, layout: self.layout.clone() })
    }

    pub fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if self.values.len() != other.values.len() || self.layout != other.layout {
            bail!(Dimension, "parameter layouts differ ({} vs {} values)", self.values.len(), other.values.len());
        }
        Ok(())
    }

    pub fn scale(&self, c: f64) -> ParamVector {
        ParamVector { values: self.values.iter().map(|v| v * c).collect(), layout: self.layout.clone() }
    }

    pub fn norm(&self) -> f64 {
        crate::math::sqrt(self.values.iter().map(|v| v * v).sum())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Paired noisy inputs and clean targets of equal length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairedSet {
    noisy: Vec<Tensor>,
    clean: Vec<Tensor>,
}

impl PairedSet {
    pub fn new(noisy: Vec<Tensor>, clean: Vec<Tensor>) -> Result<Self> {
        if noisy.len() != clean.len() {
            bail!(Dimension, "{} noisy vs {} clean samples", noisy.len(), clean.len());
        }
        for (i, (x, y)) in noisy.iter().zip(&clean).enumerate() {
            if x.shape() != y.shape() {
                bail!(Dimension, "pair {}: noisy shape {:?} vs clean shape {:?}", i, x.shape(), y.shape());
            }
        }
        Ok(PairedSet { noisy, clean })
    }

    pub fn noisy(&self) -> &[Tensor] {
        &self.noisy
    }

    pub fn clean(&self) -> &[Tensor] {
        &self.clean
    }

    pub fn len(&self) -> usize {
        self.noisy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy.is_empty()
    }

    /// `(noisy, clean)` pair `i`.
    pub fn pair(&self, i: usize) -> (&Tensor, &Tensor) {
        (&self.noisy[i], &self.clean[i])
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Tensor, &Tensor)> {
        self.noisy.iter().zip(&self.clean)
    }

    /// Subset in the order of `indices`.
    pub fn select(&self, indices: &[usize]) -> PairedSet {
        PairedSet {
            noisy: indices.iter().map(|&i| self.noisy[i].clone()).collect(),
            clean: indices.iter().map(|&i| self.clean[i].clone()).collect(),
        }
    }

    /// Appends another set.
    pub fn extend(&mut self, other: PairedSet) {
        self.noisy.extend(other.noisy);
        self.clean.extend(other.clean);
    }

    pub fn into_parts(self) -> (Vec<Tensor>, Vec<Tensor>) {
        (self.noisy, self.clean)
    }
}
