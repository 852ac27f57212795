//! Cache-blocked single-precision GEMM.
//!
//! `C[m,n] = A[m,k] · B` where B is either row-major `[k,n]` or a weight
//! matrix stored `[n,k]` (used as its transpose). B is packed once into
//! `KC × NR` column panels, A into `KC × MR` row panels per task, and a
//! `MR × NR` register tile accumulates over the packed depth.
//!
//! Every output element is accumulated as a plain left-to-right sum over the
//! inner dimension (separate multiply and add, no fused multiply-add), so the
//! result is bitwise identical to the naive triple loop.

use rayon::prelude::*;

const MR: usize = 4;
const NR: usize = 16;
const KC: usize = 256;
const MC: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RhsLayout {
    /// B stored `[k, n]`.
    RowMajor,
    /// B stored `[n, k]`; the product uses its transpose.
    Transposed,
}

pub(crate) fn simd_path() -> &'static str {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            return "avx2";
        }
    }
    "portable"
}

/// Pack B into `[k-block][n-panel][p][NR]`, zero-padding the last panel.
fn pack_b(b: &[f32], k: usize, n: usize, layout: RhsLayout) -> Vec<f32> {
    let panels = n.div_ceil(NR);
    let mut packed = vec![0.0f32; k * panels * NR];
    let mut offset = 0;
    for pc in (0..k).step_by(KC) {
        let kc = KC.min(k - pc);
        let block = &mut packed[offset..offset + kc * panels * NR];
        block.par_chunks_mut(kc * NR).enumerate().for_each(|(jp, panel)| {
            let j0 = jp * NR;
            let cols = NR.min(n - j0);
            match layout {
                RhsLayout::RowMajor => {
                    for p in 0..kc {
                        let src = &b[(pc + p) * n + j0..(pc + p) * n + j0 + cols];
                        panel[p * NR..p * NR + cols].copy_from_slice(src);
                    }
                }
                RhsLayout::Transposed => {
                    for jj in 0..cols {
                        let row = &b[(j0 + jj) * k + pc..(j0 + jj) * k + pc + kc];
                        for (p, &v) in row.iter().enumerate() {
                            panel[p * NR + jj] = v;
                        }
                    }
                }
            }
        });
        offset += kc * panels * NR;
    }
    packed
}

/// Pack `rows` rows of A starting at `i0`, depth `pc..pc+kc`, into MR panels.
fn pack_a(a: &[f32], k: usize, i0: usize, rows: usize, pc: usize, kc: usize, out: &mut Vec<f32>) {
    let panels = rows.div_ceil(MR);
    out.clear();
    out.resize(panels * kc * MR, 0.0);
    for ip in 0..panels {
        let r0 = ip * MR;
        let nrows = MR.min(rows - r0);
        let panel = &mut out[ip * kc * MR..(ip + 1) * kc * MR];
        for r in 0..nrows {
            let src = &a[(i0 + r0 + r) * k + pc..(i0 + r0 + r) * k + pc + kc];
            for (p, &v) in src.iter().enumerate() {
                panel[p * MR + r] = v;
            }
        }
    }
}

#[inline(always)]
fn micro_kernel(kc: usize, a: &[f32], b: &[f32], c: &mut [f32], ldc: usize, rows: usize, cols: usize) {
    let mut acc = [[0.0f32; NR]; MR];
    for r in 0..rows {
        acc[r][..cols].copy_from_slice(&c[r * ldc..r * ldc + cols]);
    }
    let a = &a[..kc * MR];
    let b = &b[..kc * NR];
    for p in 0..kc {
        let bp: &[f32; NR] = b[p * NR..p * NR + NR].try_into().expect("panel width");
        let ap: &[f32; MR] = a[p * MR..p * MR + MR].try_into().expect("panel height");
        for r in 0..MR {
            let av = ap[r];
            for j in 0..NR {
                acc[r][j] += av * bp[j];
            }
        }
    }
    for r in 0..rows {
        c[r * ldc..r * ldc + cols].copy_from_slice(&acc[r][..cols]);
    }
}

/// One MC-row block of C: loops over depth blocks and panels.
#[inline(always)]
fn block_rows(a: &[f32], packed_b: &[f32], k: usize, n: usize, i0: usize, c_rows: &mut [f32]) {
    let rows = c_rows.len() / n;
    let panels = n.div_ceil(NR);
    let mut packed_a = Vec::new();
    let mut b_offset = 0;
    for pc in (0..k).step_by(KC) {
        let kc = KC.min(k - pc);
        pack_a(a, k, i0, rows, pc, kc, &mut packed_a);
        let b_block = &packed_b[b_offset..b_offset + kc * panels * NR];
        for jp in 0..panels {
            let j0 = jp * NR;
            let cols = NR.min(n - j0);
            let b_panel = &b_block[jp * kc * NR..(jp + 1) * kc * NR];
            for ip in 0..rows.div_ceil(MR) {
                let r0 = ip * MR;
                let nrows = MR.min(rows - r0);
                micro_kernel(
                    kc,
                    &packed_a[ip * kc * MR..(ip + 1) * kc * MR],
                    b_panel,
                    &mut c_rows[r0 * n + j0..],
                    n,
                    nrows,
                    cols,
                );
            }
        }
        b_offset += kc * panels * NR;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn block_rows_avx2(a: &[f32], packed_b: &[f32], k: usize, n: usize, i0: usize, c_rows: &mut [f32]) {
    block_rows(a, packed_b, k, n, i0, c_rows)
}

fn dispatch_block(a: &[f32], packed_b: &[f32], k: usize, n: usize, i0: usize, c_rows: &mut [f32]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the required CPU feature was detected at runtime.
            unsafe { block_rows_avx2(a, packed_b, k, n, i0, c_rows) };
            return;
        }
    }
    block_rows(a, packed_b, k, n, i0, c_rows)
}

/// `c` must be zero-initialized with length `m * n`.
pub(crate) fn gemm(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, layout: RhsLayout, c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let packed_b = pack_b(b, k, n, layout);
    let threads = rayon::current_num_threads().max(1);
    // Split rows so every worker gets a share, in multiples of MR.
    let per_task = m.div_ceil(threads).div_ceil(MR) * MR;
    let mc = per_task.clamp(MR, MC);
    c.par_chunks_mut(mc * n)
        .enumerate()
        .for_each(|(t, c_rows)| dispatch_block(a, &packed_b, k, n, t * mc, c_rows));
}

/// Sequential variant for callers that already parallelize across a batch.
pub(crate) fn gemm_serial(a: &[f32], b: &[f32], _m: usize, k: usize, n: usize, c: &mut [f32]) {
    let packed_b = pack_b_serial(b, k, n);
    for (t, c_rows) in c.chunks_mut(MC * n).enumerate() {
        dispatch_block(a, &packed_b, k, n, t * MC, c_rows);
    }
}

fn pack_b_serial(b: &[f32], k: usize, n: usize) -> Vec<f32> {
    let panels = n.div_ceil(NR);
    let mut packed = vec![0.0f32; k * panels * NR];
    let mut offset = 0;
    for pc in (0..k).step_by(KC) {
        let kc = KC.min(k - pc);
        for jp in 0..panels {
            let j0 = jp * NR;
            let cols = NR.min(n - j0);
            let panel = &mut packed[offset + jp * kc * NR..offset + (jp + 1) * kc * NR];
            for p in 0..kc {
                panel[p * NR..p * NR + cols].copy_from_slice(&b[(pc + p) * n + j0..(pc + p) * n + j0 + cols]);
            }
        }
        offset += kc * panels * NR;
    }
    packed
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn naive(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
        let mut c = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0f32;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn bitwise_equal_to_naive_across_block_edges() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &(m, k, n) in &[(1, 1, 1), (5, 7, 17), (67, 300, 33), (4, 513, 16), (130, 64, 129)] {
            let a: Vec<f32> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f32> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let expect = naive(&a, &b, m, k, n);
            let mut c = vec![0.0; m * n];
            gemm(&a, &b, m, k, n, RhsLayout::RowMajor, &mut c);
            assert_eq!(c, expect, "row-major {m}x{k}x{n}");
            let mut c = vec![0.0; m * n];
            gemm_serial(&a, &b, m, k, n, &mut c);
            assert_eq!(c, expect, "serial {m}x{k}x{n}");
            // Transposed layout: feed bᵀ stored [n,k].
            let mut bt = vec![0.0; k * n];
            for p in 0..k {
                for j in 0..n {
                    bt[j * k + p] = b[p * n + j];
                }
            }
            let mut c = vec![0.0; m * n];
            gemm(&a, &bt, m, k, n, RhsLayout::Transposed, &mut c);
            assert_eq!(c, expect, "transposed {m}x{k}x{n}");
        }
    }
}
