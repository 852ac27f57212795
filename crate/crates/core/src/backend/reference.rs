use crate::tensor::{contiguous_strides, Tensor, TensorError};

use super::{gelu_scalar, shapes, Backend, BackendId};

/// Scalar, single-threaded, eager kernels.
#[derive(Debug, Default, Clone, Copy)]
pub struct ReferenceBackend;

fn matmul_into(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    for i in 0..m {
        for j in 0..n {
            let mut sum = 0.0f32;
            for p in 0..k {
                sum += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = sum;
        }
    }
}

fn map(x: &Tensor, f: impl Fn(f32) -> f32) -> Result<Tensor, TensorError> {
    shapes::require_f32(x)?;
    let data = x.as_f32()?.iter().map(|&v| f(v)).collect();
    Tensor::from_f32(x.shape().to_vec(), data)
}

impl Backend for ReferenceBackend {
    fn id(&self) -> BackendId {
        BackendId::Reference
    }

    fn descriptor(&self) -> String {
        format!("reference (scalar, 1 thread) on {}", super::host_descriptor())
    }

    fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let (m, k, n) = shapes::matmul(a, b)?;
        let mut out = vec![0.0; m * n];
        matmul_into(a.as_f32()?, b.as_f32()?, m, k, n, &mut out);
        Tensor::from_f32([m, n], out)
    }

    fn batched_matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let s = shapes::batched_matmul(a, b)?;
        let (ad, bd) = (a.as_f32()?, b.as_f32()?);
        let mut out = vec![0.0; s.batch * s.m * s.n];
        for i in 0..s.batch {
            matmul_into(
                &ad[i * s.m * s.k..(i + 1) * s.m * s.k],
                &bd[i * s.k * s.n..(i + 1) * s.k * s.n],
                s.m,
                s.k,
                s.n,
                &mut out[i * s.m * s.n..(i + 1) * s.m * s.n],
            );
        }
        Tensor::from_f32(s.out_shape, out)
    }

    fn linear(&self, x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor, TensorError> {
        let s = shapes::linear(x, weight, bias)?;
        let (xd, wd) = (x.as_f32()?, weight.as_f32()?);
        let bd = bias.map(Tensor::as_f32).transpose()?;
        let (kin, kout) = (s.in_features, s.out_features);
        let mut out = vec![0.0; s.rows * kout];
        for r in 0..s.rows {
            for o in 0..kout {
                let mut sum = 0.0f32;
                for p in 0..kin {
                    sum += xd[r * kin + p] * wd[o * kin + p];
                }
                if let Some(b) = bd {
                    sum += b[o];
                }
                out[r * kout + o] = sum;
            }
        }
        Tensor::from_f32(s.out_shape, out)
    }

    fn softmax(&self, x: &Tensor, axis: usize) -> Result<Tensor, TensorError> {
        shapes::require_f32(x)?;
        shapes::axis("softmax", x, axis)?;
        let (outer, len, inner) = shapes::split_axis(x.shape(), axis);
        let src = x.as_f32()?;
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let mut max = f32::NEG_INFINITY;
                for j in 0..len {
                    max = max.max(src[at(j)]);
                }
                let mut sum = 0.0f32;
                for j in 0..len {
                    let e = (src[at(j)] - max).exp();
                    out[at(j)] = e;
                    sum += e;
                }
                for j in 0..len {
                    out[at(j)] /= sum;
                }
            }
        }
        Tensor::from_f32(x.shape().to_vec(), out)
    }

    fn layer_norm(&self, x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor, TensorError> {
        let h = shapes::layer_norm(x, gamma, beta, eps)?;
        let (src, g, b) = (x.as_f32()?, gamma.as_f32()?, beta.as_f32()?);
        let mut out = vec![0.0; src.len()];
        for r in 0..src.len() / h {
            let row = &src[r * h..(r + 1) * h];
            let mut mean = 0.0f64;
            for &v in row {
                mean += v as f64;
            }
            mean /= h as f64;
            let mut var = 0.0f64;
            for &v in row {
                let d = v as f64 - mean;
                var += d * d;
            }
            var /= h as f64;
            let denom = (var + eps as f64).sqrt();
            for j in 0..h {
                let normed = ((row[j] as f64 - mean) / denom) as f32;
                out[r * h + j] = normed * g[j] + b[j];
            }
        }
        Tensor::from_f32(x.shape().to_vec(), out)
    }

    fn gelu(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        map(x, gelu_scalar)
    }

    fn tanh(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        map(x, f32::tanh)
    }

    fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let out_shape = shapes::broadcast(a, b)?;
        let sa = shapes::broadcast_strides(a.shape(), &out_shape);
        let sb = shapes::broadcast_strides(b.shape(), &out_shape);
        let (ad, bd) = (a.as_f32()?, b.as_f32()?);
        let numel: usize = out_shape.iter().product();
        let mut out = vec![0.0; numel];
        let mut idx = vec![0usize; out_shape.len()];
        for slot in out.iter_mut() {
            let ia: usize = idx.iter().zip(&sa).map(|(i, s)| i * s).sum();
            let ib: usize = idx.iter().zip(&sb).map(|(i, s)| i * s).sum();
            *slot = ad[ia] + bd[ib];
            for ax in (0..idx.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < out_shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Tensor::from_f32(out_shape, out)
    }

    fn scale(&self, x: &Tensor, factor: f32) -> Result<Tensor, TensorError> {
        map(x, |v| v * factor)
    }

    fn embedding(&self, table: &Tensor, ids: &Tensor) -> Result<Tensor, TensorError> {
        let (_, hidden, out_shape) = shapes::embedding(table, ids)?;
        let t = table.as_f32()?;
        let mut out = Vec::with_capacity(out_shape.iter().product());
        for &id in ids.as_i64()? {
            let row = id as usize;
            out.extend_from_slice(&t[row * hidden..(row + 1) * hidden]);
        }
        Tensor::from_f32(out_shape, out)
    }

    fn transpose(&self, x: &Tensor, perm: &[usize]) -> Result<Tensor, TensorError> {
        let out_shape = shapes::permutation(x, perm)?;
        let src_strides = contiguous_strides(x.shape());
        let src = x.as_f32()?;
        let mut out = vec![0.0; src.len()];
        let mut idx = vec![0usize; out_shape.len()];
        for slot in out.iter_mut() {
            let offset: usize = idx.iter().zip(perm).map(|(&i, &p)| i * src_strides[p]).sum();
            *slot = src[offset];
            for ax in (0..idx.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < out_shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Tensor::from_f32(out_shape, out)
    }

    fn concat(&self, parts: &[&Tensor], axis: usize) -> Result<Tensor, TensorError> {
        let out_shape = shapes::concat(parts, axis)?;
        let outer: usize = out_shape[..axis].iter().product();
        let mut out = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let chunk: usize = p.shape()[axis..].iter().product();
                out.extend_from_slice(&p.as_f32()?[o * chunk..(o + 1) * chunk]);
            }
        }
        Tensor::from_f32(out_shape, out)
    }

    fn synchronize(&self) {}
}
