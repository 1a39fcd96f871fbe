//! Block-structured vectors over finite products of Euclidean spaces.
//!
//! A [`BlockVector`] stores every block contiguously in one flat buffer and
//! addresses block `i` through the offset table of its [`SpaceLayout`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions of the factors of a product space `H_1 ⊕ … ⊕ H_m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SpaceLayout {
    block_dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl SpaceLayout {
    pub fn new(block_dims: Vec<usize>) -> Result<Self> {
        if block_dims.is_empty() {
            return Err(Error::param("block_dims", "a layout needs at least one block"));
        }
        if let Some(i) = block_dims.iter().position(|&d| d == 0) {
            return Err(Error::param(
                "block_dims",
                format!("block {i} has dimension 0"),
            ));
        }
        let mut offsets = Vec::with_capacity(block_dims.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &d in &block_dims {
            acc += d;
            offsets.push(acc);
        }
        Ok(SpaceLayout { block_dims, offsets })
    }

    /// `count` copies of the real line.
    pub fn scalar_blocks(count: usize) -> Result<Self> {
        Self::new(vec![1; count])
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn num_blocks(&self) -> usize {
        self.block_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block_dim(&self, i: usize) -> usize {
        self.block_dims[i]
    }

    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Layout of the direct sum of `self` followed by each of `others`.
    pub fn direct_sum(&self, others: &[&SpaceLayout]) -> SpaceLayout {
        let mut dims = self.block_dims.clone();
        for o in others {
            dims.extend_from_slice(&o.block_dims);
        }
        SpaceLayout::new(dims).expect("direct sum of valid layouts is valid")
    }
}

impl TryFrom<Vec<usize>> for SpaceLayout {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        SpaceLayout::new(dims)
    }
}

impl From<SpaceLayout> for Vec<usize> {
    fn from(l: SpaceLayout) -> Self {
        l.block_dims
    }
}

/// An element of a product Euclidean space.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    layout: Arc<SpaceLayout>,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(layout: Arc<SpaceLayout>) -> Self {
        let n = layout.total_dim();
        BlockVector {
            layout,
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(layout: Arc<SpaceLayout>, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.total_dim() {
            return Err(Error::dim("BlockVector::from_vec", layout.total_dim(), data.len()));
        }
        Ok(BlockVector { layout, data })
    }

    /// Builds a vector on a layout of scalar blocks, one per entry.
    pub fn from_scalars(values: &[f64]) -> Self {
        let layout = Arc::new(SpaceLayout::scalar_blocks(values.len().max(1)).unwrap());
        let mut data = values.to_vec();
        data.resize(layout.total_dim(), 0.0);
        BlockVector { layout, data }
    }

    pub fn from_blocks(layout: Arc<SpaceLayout>, blocks: &[&[f64]]) -> Result<Self> {
        if blocks.len() != layout.num_blocks() {
            return Err(Error::dim("BlockVector::from_blocks", layout.num_blocks(), blocks.len()));
        }
        let mut data = Vec::with_capacity(layout.total_dim());
        for (i, b) in blocks.iter().enumerate() {
            if b.len() != layout.block_dim(i) {
                return Err(Error::dim(format!("block {i}"), layout.block_dim(i), b.len()));
            }
            data.extend_from_slice(b);
        }
        Ok(BlockVector { layout, data })
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[self.layout.block_range(i)]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.layout.block_range(i);
        &mut self.data[r]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.layout.num_blocks()).map(move |i| self.block(i))
    }

    pub fn check_layout(&self, other: &BlockVector) -> Result<()> {
        if Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout {
            Ok(())
        } else {
            Err(Error::LayoutMismatch {
                expected: self.layout.block_dims().to_vec(),
                found: other.layout.block_dims().to_vec(),
            })
        }
    }

    pub fn inner(&self, other: &BlockVector) -> Result<f64> {
        self.check_layout(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.data)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `a·self + y`.
    pub fn axpy(&self, a: f64, y: &BlockVector) -> Result<BlockVector> {
        self.check_layout(y)?;
        let data = self.data.iter().zip(&y.data).map(|(x, y)| a * x + y).collect();
        Ok(BlockVector {
            layout: self.layout.clone(),
            data,
        })
    }

    /// `self += a·x`.
    pub fn add_scaled(&mut self, a: f64, x: &BlockVector) -> Result<()> {
        self.check_layout(x)?;
        add_scaled(&mut self.data, a, &x.data);
        Ok(())
    }

    pub fn sub(&self, other: &BlockVector) -> Result<BlockVector> {
        other.axpy(-1.0, self)
    }

    pub fn scaled(&self, a: f64) -> BlockVector {
        BlockVector {
            layout: self.layout.clone(),
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    pub fn dist(&self, other: &BlockVector) -> Result<f64> {
        self.check_layout(other)?;
        Ok(dist_sq(&self.data, &other.data).sqrt())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Free-standing inner product on block vectors.
pub fn inner(x: &BlockVector, y: &BlockVector) -> Result<f64> {
    x.inner(y)
}

/// Returns `a·x + y`.
pub fn axpy(a: f64, x: &BlockVector, y: &BlockVector) -> Result<BlockVector> {
    x.axpy(a, y)
}

// Slice kernels shared by the operator catalog and the iteration loops.

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum()
}

#[inline]
pub fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub fn add_scaled(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(values: &[f64]) -> BlockVector {
        BlockVector::from_scalars(values)
    }

    #[test]
    fn layout_rejects_empty_blocks() {
        assert!(SpaceLayout::new(vec![2, 0, 1]).is_err());
        assert!(SpaceLayout::new(vec![]).is_err());
        let l = SpaceLayout::new(vec![2, 3, 1]).unwrap();
        assert_eq!(l.total_dim(), 6);
        assert_eq!(l.block_range(1), 2..5);
    }

    #[test]
    fn block_access_matches_dims() {
        let l = Arc::new(SpaceLayout::new(vec![2, 1]).unwrap());
        let x = BlockVector::from_vec(l, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x.block(0), &[1.0, 2.0]);
        assert_eq!(x.block(1), &[3.0]);
    }

    #[test]
    fn inner_examples() {
        let y = v(&[3.0, 4.0]);
        assert_eq!(v(&[0.0, 0.0]).inner(&y).unwrap(), 0.0);
        assert_eq!(v(&[1.0, 2.0]).inner(&y).unwrap(), 11.0);
    }

    #[test]
    fn inner_rejects_layout_mismatch() {
        let x = v(&[1.0, 2.0]);
        let l = Arc::new(SpaceLayout::new(vec![2]).unwrap());
        let y = BlockVector::from_vec(l, vec![1.0, 2.0]).unwrap();
        assert!(matches!(x.inner(&y), Err(Error::LayoutMismatch { .. })));
        assert!(x.axpy(1.0, &y).is_err());
    }

    #[test]
    fn axpy_examples() {
        let x = v(&[1.0, 1.0]);
        let y = v(&[3.0, -1.0]);
        assert_eq!(x.axpy(0.0, &y).unwrap(), y);
        assert_eq!(x.axpy(1.0, &v(&[0.0, 0.0])).unwrap(), x);
        assert_eq!(axpy(2.0, &x, &y).unwrap().as_slice(), &[5.0, 1.0]);
    }

    proptest! {
        #[test]
        fn cauchy_schwarz(a in prop::collection::vec(-1e3f64..1e3, 6), b in prop::collection::vec(-1e3f64..1e3, 6)) {
            let x = v(&a);
            let y = v(&b);
            let lhs = x.inner(&y).unwrap().abs();
            let rhs = x.norm() * y.norm();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn norm_is_sum_of_block_norms(a in prop::collection::vec(-1e3f64..1e3, 7)) {
            let l = Arc::new(SpaceLayout::new(vec![3, 1, 2, 1]).unwrap());
            let x = BlockVector::from_vec(l, a).unwrap();
            let total = x.norm_sq();
            let by_block: f64 = x.blocks().map(norm_sq).sum();
            prop_assert!((total - by_block).abs() <= 1e-12 * total.max(1e-300));
            prop_assert!(x.inner(&x).unwrap() >= 0.0);
        }
    }
}
