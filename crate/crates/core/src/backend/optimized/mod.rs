mod gemm;

use std::panic::{self, AssertUnwindSafe};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;

use rayon::prelude::*;

use crate::tensor::{contiguous_strides, Tensor, TensorError};

use super::{gelu_scalar, shapes, Backend, BackendId};

use gemm::RhsLayout;

type Job = Box<dyn FnOnce() + Send + 'static>;

/// In-order submission queue drained by one worker thread.
struct Stream {
    tx: Sender<Job>,
    outstanding: Arc<(Mutex<usize>, Condvar)>,
}

impl Stream {
    fn new() -> Stream {
        let (tx, rx) = mpsc::channel::<Job>();
        let outstanding = Arc::new((Mutex::new(0usize), Condvar::new()));
        let counter = Arc::clone(&outstanding);
        thread::Builder::new()
            .name("encbench-stream".into())
            .spawn(move || {
                for job in rx {
                    if panic::catch_unwind(AssertUnwindSafe(job)).is_err() {
                        // A deferred payload would never be written; readers would hang.
                        eprintln!("encbench: optimized backend kernel panicked; aborting");
                        std::process::abort();
                    }
                    let (lock, cv) = &*counter;
                    let mut n = lock.lock().expect("stream counter poisoned");
                    *n -= 1;
                    if *n == 0 {
                        cv.notify_all();
                    }
                }
            })
            .expect("failed to spawn stream worker");
        Stream { tx, outstanding }
    }

    fn submit(&self, job: Job) {
        *self.outstanding.0.lock().expect("stream counter poisoned") += 1;
        self.tx.send(job).expect("stream worker exited");
    }

    fn wait_idle(&self) {
        let (lock, cv) = &*self.outstanding;
        let mut n = lock.lock().expect("stream counter poisoned");
        while *n > 0 {
            n = cv.wait(n).expect("stream counter poisoned");
        }
    }
}

/// Blocked, vectorized and parallel kernels behind an asynchronous stream.
///
/// Each call validates shapes, enqueues the computation and returns a tensor
/// whose payload is written when the job runs. Readers of a pending payload
/// block until it is available, so results are always observed complete.
pub struct OptimizedBackend {
    stream: Stream,
}

impl Default for OptimizedBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl OptimizedBackend {
    pub fn new() -> OptimizedBackend {
        OptimizedBackend { stream: Stream::new() }
    }

    fn launch(
        &self,
        shape: Vec<usize>,
        compute: impl FnOnce() -> Vec<f32> + Send + 'static,
    ) -> Result<Tensor, TensorError> {
        let (out, pending) = Tensor::deferred_f32(shape)?;
        self.stream.submit(Box::new(move || pending.fulfill(compute())));
        Ok(out)
    }
}

// Inputs were type-checked before submission.
fn f32s(t: &Tensor) -> &[f32] {
    t.as_f32().expect("validated f32 input")
}

fn par_map(x: Tensor, f: impl Fn(f32) -> f32 + Send + Sync + 'static) -> impl FnOnce() -> Vec<f32> + Send + 'static {
    move || f32s(&x).par_iter().with_min_len(4096).map(|&v| f(v)).collect()
}

impl Backend for OptimizedBackend {
    fn id(&self) -> BackendId {
        BackendId::Optimized
    }

    fn descriptor(&self) -> String {
        format!(
            "optimized (blocked gemm/{}, rayon x{}) on {}",
            gemm::simd_path(),
            rayon::current_num_threads(),
            super::host_descriptor()
        )
    }

    fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let (m, k, n) = shapes::matmul(a, b)?;
        let (a, b) = (a.clone(), b.clone());
        self.launch(vec![m, n], move || {
            let mut c = vec![0.0; m * n];
            gemm::gemm(f32s(&a), f32s(&b), m, k, n, RhsLayout::RowMajor, &mut c);
            c
        })
    }

    fn batched_matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let s = shapes::batched_matmul(a, b)?;
        let (a, b) = (a.clone(), b.clone());
        let shapes::Batched { batch, m, k, n, out_shape } = s;
        self.launch(out_shape, move || {
            let (ad, bd) = (f32s(&a), f32s(&b));
            let mut c = vec![0.0; batch * m * n];
            if batch == 1 {
                gemm::gemm(ad, bd, m, k, n, RhsLayout::RowMajor, &mut c);
            } else {
                c.par_chunks_mut(m * n).enumerate().for_each(|(i, ci)| {
                    gemm::gemm_serial(&ad[i * m * k..(i + 1) * m * k], &bd[i * k * n..(i + 1) * k * n], m, k, n, ci);
                });
            }
            c
        })
    }

    fn linear(&self, x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor, TensorError> {
        let s = shapes::linear(x, weight, bias)?;
        let (x, w, bias) = (x.clone(), weight.clone(), bias.cloned());
        let (rows, kin, kout) = (s.rows, s.in_features, s.out_features);
        self.launch(s.out_shape, move || {
            let mut c = vec![0.0; rows * kout];
            gemm::gemm(f32s(&x), f32s(&w), rows, kin, kout, RhsLayout::Transposed, &mut c);
            if let Some(b) = bias {
                let b = f32s(&b);
                c.par_chunks_mut(kout).for_each(|row| {
                    for (v, &bv) in row.iter_mut().zip(b) {
                        *v += bv;
                    }
                });
            }
            c
        })
    }

    fn softmax(&self, x: &Tensor, axis: usize) -> Result<Tensor, TensorError> {
        shapes::require_f32(x)?;
        shapes::axis("softmax", x, axis)?;
        let (_, len, inner) = shapes::split_axis(x.shape(), axis);
        let x = x.clone();
        self.launch(x.shape().to_vec(), move || {
            let src = f32s(&x);
            let mut out = vec![0.0f32; src.len()];
            if inner == 1 {
                out.par_chunks_mut(len).zip(src.par_chunks(len)).for_each(|(o, s)| {
                    let max = s.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
                    let mut sum = 0.0f32;
                    for (ov, &sv) in o.iter_mut().zip(s) {
                        *ov = (sv - max).exp();
                        sum += *ov;
                    }
                    for ov in o.iter_mut() {
                        *ov /= sum;
                    }
                });
            } else {
                out.par_chunks_mut(len * inner)
                    .zip(src.par_chunks(len * inner))
                    .for_each(|(o, s)| {
                        let mut max = vec![f32::NEG_INFINITY; inner];
                        for j in 0..len {
                            for (m, &v) in max.iter_mut().zip(&s[j * inner..(j + 1) * inner]) {
                                *m = m.max(v);
                            }
                        }
                        let mut sum = vec![0.0f32; inner];
                        for j in 0..len {
                            let row = j * inner..(j + 1) * inner;
                            for ((ov, &sv), (acc, &m)) in o[row.clone()]
                                .iter_mut()
                                .zip(&s[row])
                                .zip(sum.iter_mut().zip(&max))
                            {
                                *ov = (sv - m).exp();
                                *acc += *ov;
                            }
                        }
                        for j in 0..len {
                            for (ov, &acc) in o[j * inner..(j + 1) * inner].iter_mut().zip(&sum) {
                                *ov /= acc;
                            }
                        }
                    });
            }
            out
        })
    }

    fn layer_norm(&self, x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor, TensorError> {
        let h = shapes::layer_norm(x, gamma, beta, eps)?;
        let (x, gamma, beta) = (x.clone(), gamma.clone(), beta.clone());
        self.launch(x.shape().to_vec(), move || {
            let (src, g, b) = (f32s(&x), f32s(&gamma), f32s(&beta));
            let mut out = vec![0.0f32; src.len()];
            out.par_chunks_mut(h).zip(src.par_chunks(h)).for_each(|(o, row)| {
                let mean = row.iter().fold(0.0f64, |acc, &v| acc + v as f64) / h as f64;
                let var = row.iter().fold(0.0f64, |acc, &v| {
                    let d = v as f64 - mean;
                    acc + d * d
                }) / h as f64;
                let denom = (var + eps as f64).sqrt();
                for ((ov, &v), (&gv, &bv)) in o.iter_mut().zip(row).zip(g.iter().zip(b)) {
                    *ov = ((v as f64 - mean) / denom) as f32 * gv + bv;
                }
            });
            out
        })
    }

    fn gelu(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        shapes::require_f32(x)?;
        self.launch(x.shape().to_vec(), par_map(x.clone(), gelu_scalar))
    }

    fn tanh(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        shapes::require_f32(x)?;
        self.launch(x.shape().to_vec(), par_map(x.clone(), f32::tanh))
    }

    fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let out_shape = shapes::broadcast(a, b)?;
        let (a, b) = (a.clone(), b.clone());
        let shape = out_shape.clone();
        self.launch(shape, move || {
            let (ad, bd) = (f32s(&a), f32s(&b));
            let numel: usize = out_shape.iter().product();
            if a.shape() == out_shape.as_slice() && b.shape() == out_shape.as_slice() {
                return ad.par_iter().zip(bd).with_min_len(4096).map(|(x, y)| x + y).collect();
            }
            // General broadcast: iterate output rows along the last axis.
            let last = *out_shape.last().expect("rank >= 1");
            let sa = shapes::broadcast_strides(a.shape(), &out_shape);
            let sb = shapes::broadcast_strides(b.shape(), &out_shape);
            let (la, lb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
            let lead = &out_shape[..out_shape.len() - 1];
            let lead_strides = contiguous_strides(lead);
            let mut out = vec![0.0f32; numel];
            out.par_chunks_mut(last).enumerate().for_each(|(r, row)| {
                let (mut oa, mut ob) = (0, 0);
                let mut rem = r;
                for (ax, &st) in lead_strides.iter().enumerate() {
                    let i = rem / st;
                    rem %= st;
                    oa += i * sa[ax];
                    ob += i * sb[ax];
                }
                for (j, v) in row.iter_mut().enumerate() {
                    *v = ad[oa + j * la] + bd[ob + j * lb];
                }
            });
            out
        })
    }

    fn scale(&self, x: &Tensor, factor: f32) -> Result<Tensor, TensorError> {
        shapes::require_f32(x)?;
        self.launch(x.shape().to_vec(), par_map(x.clone(), move |v| v * factor))
    }

    fn embedding(&self, table: &Tensor, ids: &Tensor) -> Result<Tensor, TensorError> {
        let (_, hidden, out_shape) = shapes::embedding(table, ids)?;
        let (table, ids) = (table.clone(), ids.clone());
        self.launch(out_shape, move || {
            let t = f32s(&table);
            let ids = ids.as_i64().expect("validated i64 ids");
            let mut out = vec![0.0f32; ids.len() * hidden];
            out.par_chunks_mut(hidden).zip(ids.par_iter()).for_each(|(row, &id)| {
                let r = id as usize;
                row.copy_from_slice(&t[r * hidden..(r + 1) * hidden]);
            });
            out
        })
    }

    fn transpose(&self, x: &Tensor, perm: &[usize]) -> Result<Tensor, TensorError> {
        let out_shape = shapes::permutation(x, perm)?;
        let x = x.clone();
        let perm = perm.to_vec();
        let shape = out_shape.clone();
        self.launch(shape, move || {
            let src = f32s(&x);
            let src_strides = contiguous_strides(x.shape());
            // Source stride of each output axis.
            let gather: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
            let last = *out_shape.last().expect("rank >= 1");
            let step = gather[gather.len() - 1];
            let lead_strides = contiguous_strides(&out_shape[..out_shape.len() - 1]);
            let mut out = vec![0.0f32; src.len()];
            out.par_chunks_mut(last).enumerate().for_each(|(r, row)| {
                let mut base = 0;
                let mut rem = r;
                for (ax, &st) in lead_strides.iter().enumerate() {
                    base += (rem / st) * gather[ax];
                    rem %= st;
                }
                if step == 1 {
                    row.copy_from_slice(&src[base..base + last]);
                } else {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = src[base + j * step];
                    }
                }
            });
            out
        })
    }

    fn concat(&self, parts: &[&Tensor], axis: usize) -> Result<Tensor, TensorError> {
        let out_shape = shapes::concat(parts, axis)?;
        let parts: Vec<Tensor> = parts.iter().map(|&p| p.clone()).collect();
        let shape = out_shape.clone();
        self.launch(shape, move || {
            let chunk: usize = out_shape[axis..].iter().product();
            let mut out = vec![0.0f32; out_shape.iter().product()];
            out.par_chunks_mut(chunk).enumerate().for_each(|(o, dst)| {
                let mut at = 0;
                for p in &parts {
                    let len: usize = p.shape()[axis..].iter().product();
                    dst[at..at + len].copy_from_slice(&f32s(p)[o * len..(o + 1) * len]);
                    at += len;
                }
            });
            out
        })
    }

    fn synchronize(&self) {
        self.stream.wait_idle();
    }
}
