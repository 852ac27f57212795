//! Dense row-major tensors.
//!
//! A [`Tensor`] is a shape plus an immutable, reference-counted payload.
//! Cloning is cheap and reshaping shares the payload. Compute is always
//! `f32`; `i64` tensors carry token ids and masks. Half-precision types only
//! appear as checkpoint record tags and are widened on load.
//!
//! Payloads produced by the optimized backend may be *deferred*: the tensor
//! exists (shape and dtype are known) before its values have been written.
//! Reading the values blocks until they are available; see
//! [`crate::backend::Backend::synchronize`].

mod error;

pub use error::TensorError;

use std::fmt;
use std::ops::Range;
use std::sync::{Arc, OnceLock};

/// Element type tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DType {
    F32,
    F16,
    BF16,
    I64,
}

impl DType {
    /// Size of one element in bytes.
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F16 | DType::BF16 => 2,
            DType::I64 => 8,
        }
    }

    /// Tag as written in safetensors headers.
    pub fn as_str(self) -> &'static str {
        match self {
            DType::F32 => "F32",
            DType::F16 => "F16",
            DType::BF16 => "BF16",
            DType::I64 => "I64",
        }
    }

    pub fn parse(tag: &str) -> Option<DType> {
        match tag {
            "F32" => Some(DType::F32),
            "F16" => Some(DType::F16),
            "BF16" => Some(DType::BF16),
            "I64" => Some(DType::I64),
            _ => None,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub(crate) enum Storage {
    F32(OnceLock<Vec<f32>>),
    I64(Vec<i64>),
}

/// Handle used by a backend to fill a deferred payload exactly once.
pub(crate) struct PendingF32(Arc<Storage>);

impl PendingF32 {
    pub(crate) fn fulfill(self, data: Vec<f32>) {
        match &*self.0 {
            Storage::F32(cell) => {
                if cell.set(data).is_err() {
                    unreachable!("deferred payload fulfilled twice");
                }
            }
            Storage::I64(_) => unreachable!("pending handle always wraps an f32 payload"),
        }
    }
}

#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    storage: Arc<Storage>,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize, TensorError> {
    if shape.is_empty() {
        return Err(TensorError::InvalidShape {
            shape: shape.to_vec(),
            reason: "rank must be at least 1",
        });
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(TensorError::InvalidShape {
            shape: shape.to_vec(),
            reason: "zero-sized extents are not supported",
        });
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn from_f32(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Tensor, TensorError> {
        let shape = shape.into();
        let numel = check_shape(&shape)?;
        if numel != data.len() {
            return Err(TensorError::ElementCount {
                shape,
                expected: numel,
                actual: data.len(),
            });
        }
        Ok(Tensor {
            shape,
            storage: Arc::new(Storage::F32(OnceLock::from(data))),
        })
    }

    pub fn from_i64(shape: impl Into<Vec<usize>>, data: Vec<i64>) -> Result<Tensor, TensorError> {
        let shape = shape.into();
        let numel = check_shape(&shape)?;
        if numel != data.len() {
            return Err(TensorError::ElementCount {
                shape,
                expected: numel,
                actual: data.len(),
            });
        }
        Ok(Tensor {
            shape,
            storage: Arc::new(Storage::I64(data)),
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Tensor, TensorError> {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f32) -> Result<Tensor, TensorError> {
        let shape = shape.into();
        let numel = check_shape(&shape)?;
        Tensor::from_f32(shape, vec![value; numel])
    }

    /// Square identity matrix.
    pub fn eye(n: usize) -> Result<Tensor, TensorError> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor::from_f32([n, n], data)
    }

    /// An f32 tensor whose payload will be written later by a backend.
    pub(crate) fn deferred_f32(shape: Vec<usize>) -> Result<(Tensor, PendingF32), TensorError> {
        check_shape(&shape)?;
        let storage = Arc::new(Storage::F32(OnceLock::new()));
        let pending = PendingF32(Arc::clone(&storage));
        Ok((Tensor { shape, storage }, pending))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn dtype(&self) -> DType {
        match &*self.storage {
            Storage::F32(_) => DType::F32,
            Storage::I64(_) => DType::I64,
        }
    }

    /// Whether the payload has been written. Always true except for
    /// in-flight results of the optimized backend.
    pub fn is_materialized(&self) -> bool {
        match &*self.storage {
            Storage::F32(cell) => cell.get().is_some(),
            Storage::I64(_) => true,
        }
    }

    /// Borrow the f32 payload, waiting for deferred results.
    pub fn as_f32(&self) -> Result<&[f32], TensorError> {
        match &*self.storage {
            Storage::F32(cell) => Ok(cell.wait()),
            Storage::I64(_) => Err(TensorError::DType {
                expected: DType::F32,
                actual: DType::I64,
            }),
        }
    }

    pub fn as_i64(&self) -> Result<&[i64], TensorError> {
        match &*self.storage {
            Storage::I64(data) => Ok(data),
            Storage::F32(_) => Err(TensorError::DType {
                expected: DType::I64,
                actual: DType::F32,
            }),
        }
    }

    pub fn to_vec_f32(&self) -> Result<Vec<f32>, TensorError> {
        self.as_f32().map(<[f32]>::to_vec)
    }

    /// Same payload viewed under a new shape.
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor, TensorError> {
        let shape = shape.into();
        let numel = check_shape(&shape)?;
        if numel != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape,
            });
        }
        Ok(Tensor {
            shape,
            storage: Arc::clone(&self.storage),
        })
    }

    /// True when both tensors view the same payload allocation.
    pub fn shares_payload(&self, other: &Tensor) -> bool {
        Arc::ptr_eq(&self.storage, &other.storage)
    }

    /// Copy out a hyper-rectangle, one range per axis.
    pub fn slice(&self, ranges: &[Range<usize>]) -> Result<Tensor, TensorError> {
        if ranges.len() != self.rank() {
            return Err(TensorError::Rank {
                op: "slice",
                expected: self.rank(),
                actual: ranges.len(),
            });
        }
        for (axis, (r, &extent)) in ranges.iter().zip(&self.shape).enumerate() {
            if r.start >= r.end || r.end > extent {
                return Err(TensorError::SliceRange {
                    axis,
                    start: r.start,
                    end: r.end,
                    extent,
                });
            }
        }
        let out_shape: Vec<usize> = ranges.iter().map(|r| r.end - r.start).collect();
        let strides = contiguous_strides(&self.shape);
        // Innermost range is copied as a contiguous run.
        let last = self.rank() - 1;
        let run = ranges[last].clone();
        let outer: Vec<Range<usize>> = ranges[..last].to_vec();
        let mut offsets = Vec::new();
        for_each_index(&outer, |idx| {
            let base: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
            offsets.push(base);
        });
        match &*self.storage {
            Storage::F32(_) => {
                let src = self.as_f32()?;
                let mut out = Vec::with_capacity(out_shape.iter().product());
                for base in offsets {
                    out.extend_from_slice(&src[base + run.start..base + run.end]);
                }
                Tensor::from_f32(out_shape, out)
            }
            Storage::I64(src) => {
                let mut out = Vec::with_capacity(out_shape.iter().product());
                for base in offsets {
                    out.extend_from_slice(&src[base + run.start..base + run.end]);
                }
                Tensor::from_i64(out_shape, out)
            }
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("dtype", &self.dtype())
            .field("materialized", &self.is_materialized())
            .finish()
    }
}

/// Row-major strides for `shape`.
pub fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Visit every multi-index in the product of `ranges`, last axis fastest.
fn for_each_index(ranges: &[Range<usize>], mut f: impl FnMut(&[usize])) {
    if ranges.iter().any(|r| r.start >= r.end) {
        return;
    }
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.start).collect();
    loop {
        f(&idx);
        let mut axis = ranges.len();
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < ranges[axis].end {
                break;
            }
            idx[axis] = ranges[axis].start;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_extent_rejected() {
        assert!(matches!(
            Tensor::from_f32([2, 0], vec![]),
            Err(TensorError::InvalidShape { .. })
        ));
        assert!(Tensor::from_f32(Vec::<usize>::new(), vec![1.0]).is_err());
    }

    #[test]
    fn element_count_checked() {
        let err = Tensor::from_f32([2, 2], vec![1.0; 3]).unwrap_err();
        assert!(matches!(err, TensorError::ElementCount { expected: 4, actual: 3, .. }));
    }

    #[test]
    fn reshape_round_trip_shares_payload() {
        let t = Tensor::from_f32([2, 3], (0..6).map(|v| v as f32).collect()).unwrap();
        let r = t.reshape([3, 2]).unwrap().reshape([2, 3]).unwrap();
        assert!(r.shares_payload(&t));
        assert_eq!(r.as_f32().unwrap(), t.as_f32().unwrap());
        assert!(t.reshape([4, 2]).is_err());
    }

    #[test]
    fn slice_first_token() {
        // [B=2, S=3, H=2]
        let t = Tensor::from_f32([2, 3, 2], (0..12).map(|v| v as f32).collect()).unwrap();
        let s = t.slice(&[0..2, 0..1, 0..2]).unwrap();
        assert_eq!(s.shape(), &[2, 1, 2]);
        assert_eq!(s.as_f32().unwrap(), &[0.0, 1.0, 6.0, 7.0]);
        assert!(t.slice(&[0..2, 1..1, 0..2]).is_err());
        assert!(t.slice(&[0..2, 0..4, 0..2]).is_err());
    }

    #[test]
    fn dtype_accessors() {
        let ids = Tensor::from_i64([1, 2], vec![3, 4]).unwrap();
        assert_eq!(ids.dtype(), DType::I64);
        assert!(ids.as_f32().is_err());
        assert_eq!(ids.as_i64().unwrap(), &[3, 4]);
        assert_eq!(DType::parse("BF16"), Some(DType::BF16));
        assert_eq!(DType::parse("U8"), None);
    }

    #[test]
    fn deferred_payload_becomes_visible() {
        let (t, pending) = Tensor::deferred_f32(vec![2]).unwrap();
        assert!(!t.is_materialized());
        let reader = t.clone();
        let h = std::thread::spawn(move || reader.to_vec_f32().unwrap());
        pending.fulfill(vec![1.0, 2.0]);
        assert_eq!(h.join().unwrap(), vec![1.0, 2.0]);
        assert!(t.is_materialized());
    }
}
