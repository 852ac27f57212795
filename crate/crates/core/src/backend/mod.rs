//! Compute backends.
//!
//! Two implementations of the same kernel set:
//!
//! * [`ReferenceBackend`]: scalar loops, single-threaded, eager. It is the
//!   correctness oracle for everything else.
//! * [`OptimizedBackend`]: cache-blocked SIMD GEMM, rayon-parallel kernels and
//!   an asynchronous submission stream. Results come back as deferred tensors
//!   that materialize in submission order; [`Backend::synchronize`] waits for
//!   all submitted work.
//!
//! Shapes are validated eagerly on both backends, so errors surface at the
//! call site even when the computation itself is deferred.

mod optimized;
mod reference;
pub(crate) mod shapes;


pub use optimized::OptimizedBackend;
pub use reference::ReferenceBackend;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::tensor::{Tensor, TensorError};

/// Which kernel implementation to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendId {
    Reference,
    Optimized,
}

impl BackendId {
    pub const ALL: [BackendId; 2] = [BackendId::Reference, BackendId::Optimized];

    pub fn name(self) -> &'static str {
        match self {
            BackendId::Reference => "reference",
            BackendId::Optimized => "optimized",
        }
    }

    /// Process-wide backend instance.
    pub fn backend(self) -> &'static dyn Backend {
        static REFERENCE: ReferenceBackend = ReferenceBackend;
        static OPTIMIZED: OnceLock<OptimizedBackend> = OnceLock::new();
        match self {
            BackendId::Reference => &REFERENCE,
            BackendId::Optimized => OPTIMIZED.get_or_init(OptimizedBackend::new),
        }
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackendId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(BackendId::Reference),
            "optimized" => Ok(BackendId::Optimized),
            other => Err(format!("unknown backend `{other}` (expected reference or optimized)")),
        }
    }
}

/// The kernel set shared by all backends.
///
/// All f32 kernels reject i64 inputs and vice versa; `embedding` takes an
/// i64 id tensor.
pub trait Backend: Send + Sync {
    fn id(&self) -> BackendId;

    /// Free-form description for reports (host CPU, threads, SIMD path).
    fn descriptor(&self) -> String;

    /// `[m,k] x [k,n] -> [m,n]`.
    fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError>;

    /// `[...,m,k] x [...,k,n] -> [...,m,n]` with equal leading extents.
    fn batched_matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError>;

    /// `x · wᵀ + bias` with `w` stored `[out, in]`.
    fn linear(&self, x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor, TensorError>;

    /// Max-subtracted softmax along `axis`.
    fn softmax(&self, x: &Tensor, axis: usize) -> Result<Tensor, TensorError>;

    /// Standardize over the last axis (population variance), then `γ·x̂ + β`.
    fn layer_norm(&self, x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor, TensorError>;

    /// Exact (erf) GELU.
    fn gelu(&self, x: &Tensor) -> Result<Tensor, TensorError>;

    fn tanh(&self, x: &Tensor) -> Result<Tensor, TensorError>;

    /// Elementwise sum with trailing-axis broadcasting (extents equal or 1).
    fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError>;

    /// Multiply every element by `factor`.
    fn scale(&self, x: &Tensor, factor: f32) -> Result<Tensor, TensorError>;

    /// Row gather: `table[V,H]`, `ids[...]` -> `[..., H]`.
    fn embedding(&self, table: &Tensor, ids: &Tensor) -> Result<Tensor, TensorError>;

    /// Permute axes and materialize a contiguous result.
    fn transpose(&self, x: &Tensor, perm: &[usize]) -> Result<Tensor, TensorError>;

    /// Join along `axis`; all other extents must match.
    fn concat(&self, parts: &[&Tensor], axis: usize) -> Result<Tensor, TensorError>;

    /// Block until every kernel submitted to this backend has written its
    /// output.
    fn synchronize(&self);
}

/// Exact GELU on one value, `x·Φ(x)`, evaluated in f64.
#[inline]
pub(crate) fn gelu_scalar(x: f32) -> f32 {
    let x = x as f64;
    (0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))) as f32
}

/// Value added to attention logits at masked key positions.
pub const MASKED_LOGIT: f32 = -1e9;

/// Host CPU model plus available parallelism, for report headers.
pub fn host_descriptor() -> String {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    format!("{cpu}, {threads} threads")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_ids_parse() {
        for id in BackendId::ALL {
            assert_eq!(id.name().parse::<BackendId>().unwrap(), id);
            assert_eq!(id.backend().id(), id);
        }
        assert!("cuda".parse::<BackendId>().is_err());
    }

    #[test]
    fn reference_synchronize_is_noop_and_idempotent() {
        let b = BackendId::Reference.backend();
        b.synchronize();
        b.synchronize();
    }

    #[test]
    fn optimized_synchronize_idempotent() {
        let b = BackendId::Optimized.backend();
        let x = Tensor::from_f32([4], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let y = b.gelu(&x).unwrap();
        b.synchronize();
        assert!(y.is_materialized());
        b.synchronize();
    }
}
