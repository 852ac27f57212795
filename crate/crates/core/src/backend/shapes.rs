//! Shape validation shared by both backends. Pure metadata, no payload access.

use crate::tensor::{DType, Tensor, TensorError};

pub(crate) fn require_f32(t: &Tensor) -> Result<(), TensorError> {
    match t.dtype() {
        DType::F32 => Ok(()),
        other => Err(TensorError::DType {
            expected: DType::F32,
            actual: other,
        }),
    }
}

pub(crate) fn require_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<(), TensorError> {
    if t.rank() != rank {
        return Err(TensorError::Rank {
            op,
            expected: rank,
            actual: t.rank(),
        });
    }
    Ok(())
}

/// `(m, k, n)` for a plain matmul.
pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize), TensorError> {
    require_f32(a)?;
    require_f32(b)?;
    require_rank("matmul", a, 2)?;
    require_rank("matmul", b, 2)?;
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok((m, k, n))
}

pub(crate) struct Batched {
    pub batch: usize,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub out_shape: Vec<usize>,
}

pub(crate) fn batched_matmul(a: &Tensor, b: &Tensor) -> Result<Batched, TensorError> {
    require_f32(a)?;
    require_f32(b)?;
    let mismatch = || TensorError::ShapeMismatch {
        op: "batched_matmul",
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    };
    if a.rank() < 2 || a.rank() != b.rank() {
        return Err(mismatch());
    }
    let r = a.rank();
    let (lead_a, mat_a) = a.shape().split_at(r - 2);
    let (lead_b, mat_b) = b.shape().split_at(r - 2);
    if lead_a != lead_b || mat_a[1] != mat_b[0] {
        return Err(mismatch());
    }
    let mut out_shape = lead_a.to_vec();
    out_shape.extend([mat_a[0], mat_b[1]]);
    Ok(Batched {
        batch: lead_a.iter().product(),
        m: mat_a[0],
        k: mat_a[1],
        n: mat_b[1],
        out_shape,
    })
}

pub(crate) struct Linear {
    pub rows: usize,
    pub in_features: usize,
    pub out_features: usize,
    pub out_shape: Vec<usize>,
}

pub(crate) fn linear(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Linear, TensorError> {
    require_f32(x)?;
    require_f32(w)?;
    require_rank("linear", w, 2)?;
    let (out_features, in_features) = (w.shape()[0], w.shape()[1]);
    let last = *x.shape().last().expect("rank >= 1");
    if last != in_features {
        return Err(TensorError::ShapeMismatch {
            op: "linear",
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    if let Some(b) = bias {
        require_f32(b)?;
        if b.shape() != [out_features] {
            return Err(TensorError::ShapeMismatch {
                op: "linear bias",
                lhs: w.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
    }
    let mut out_shape = x.shape().to_vec();
    *out_shape.last_mut().expect("rank >= 1") = out_features;
    Ok(Linear {
        rows: x.numel() / in_features,
        in_features,
        out_features,
        out_shape,
    })
}

pub(crate) fn axis(op: &'static str, t: &Tensor, axis: usize) -> Result<(), TensorError> {
    if axis >= t.rank() {
        return Err(TensorError::Axis {
            op,
            axis,
            rank: t.rank(),
        });
    }
    Ok(())
}

/// `(outer, axis extent, inner)` decomposition around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<usize, TensorError> {
    require_f32(x)?;
    require_f32(gamma)?;
    require_f32(beta)?;
    if !(eps > 0.0) {
        return Err(TensorError::Invalid {
            op: "layer_norm",
            reason: format!("eps must be positive, got {eps}"),
        });
    }
    let h = *x.shape().last().expect("rank >= 1");
    for p in [gamma, beta] {
        if p.shape() != [h] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: x.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
    }
    Ok(h)
}

/// Broadcast result shape for `add`: right-aligned, extents equal or 1.
pub(crate) fn broadcast(a: &Tensor, b: &Tensor) -> Result<Vec<usize>, TensorError> {
    require_f32(a)?;
    require_f32(b)?;
    let rank = a.rank().max(b.rank());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = dim_from_right(a.shape(), rank - 1 - i);
        let db = dim_from_right(b.shape(), rank - 1 - i);
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op: "add",
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                })
            }
        };
    }
    Ok(out)
}

fn dim_from_right(shape: &[usize], from_right: usize) -> usize {
    if from_right < shape.len() {
        shape[shape.len() - 1 - from_right]
    } else {
        1
    }
}

/// Strides of `shape` aligned to `out_rank`, with 0 on broadcast axes.
pub(crate) fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let own = crate::tensor::contiguous_strides(shape);
    let offset = out_shape.len() - shape.len();
    (0..out_shape.len())
        .map(|i| {
            if i < offset || shape[i - offset] == 1 {
                0
            } else {
                own[i - offset]
            }
        })
        .collect()
}

pub(crate) fn embedding(table: &Tensor, ids: &Tensor) -> Result<(usize, usize, Vec<usize>), TensorError> {
    require_f32(table)?;
    require_rank("embedding", table, 2)?;
    if ids.dtype() != DType::I64 {
        return Err(TensorError::DType {
            expected: DType::I64,
            actual: ids.dtype(),
        });
    }
    let (vocab, hidden) = (table.shape()[0], table.shape()[1]);
    for (position, &v) in ids.as_i64()?.iter().enumerate() {
        if v < 0 || v as u64 >= vocab as u64 {
            return Err(TensorError::Index {
                position,
                value: v,
                bound: vocab,
            });
        }
    }
    let mut out_shape = ids.shape().to_vec();
    out_shape.push(hidden);
    Ok((vocab, hidden, out_shape))
}

pub(crate) fn permutation(x: &Tensor, perm: &[usize]) -> Result<Vec<usize>, TensorError> {
    require_f32(x)?;
    let rank = x.rank();
    let mut seen = vec![false; rank];
    if perm.len() != rank {
        return Err(TensorError::Permutation {
            perm: perm.to_vec(),
            rank,
        });
    }
    for &p in perm {
        if p >= rank || seen[p] {
            return Err(TensorError::Permutation {
                perm: perm.to_vec(),
                rank,
            });
        }
        seen[p] = true;
    }
    Ok(perm.iter().map(|&p| x.shape()[p]).collect())
}

pub(crate) fn concat(parts: &[&Tensor], axis: usize) -> Result<Vec<usize>, TensorError> {
    let first = parts.first().ok_or_else(|| TensorError::Invalid {
        op: "concat",
        reason: "no inputs".into(),
    })?;
    self::axis("concat", first, axis)?;
    let mut out_shape = first.shape().to_vec();
    out_shape[axis] = 0;
    for p in parts {
        require_f32(p)?;
        let compatible = p.rank() == first.rank()
            && p
                .shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !compatible {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                lhs: first.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
        out_shape[axis] += p.shape()[axis];
    }
    Ok(out_shape)
}
