//! Single-kernel benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{time_once, BenchError, RunRecord, Subject, DEFAULT_WARMUP};
use crate::backend::{Backend, BackendId};
use crate::tensor::{Tensor, TensorError};

pub const DEFAULT_OP_ITERATIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpBenchSpec {
    pub op: String,
    /// One entry per input tensor, in the op's argument order.
    pub shapes: Vec<Vec<usize>>,
    pub iterations: usize,
    pub warmup: usize,
    pub backends: Vec<BackendId>,
    pub seed: u64,
}

struct OpDef {
    name: &'static str,
    default_shapes: fn() -> Vec<Vec<usize>>,
    check: fn(&[Vec<usize>]) -> Result<(), String>,
    run: fn(&dyn Backend, &[Tensor]) -> Result<Tensor, TensorError>,
    /// Index of an i64 id input and the table whose rows it indexes.
    ids: Option<(usize, usize)>,
}

fn arity(shapes: &[Vec<usize>], n: usize) -> Result<(), String> {
    if shapes.len() != n {
        return Err(format!("expected {n} input shapes, got {}", shapes.len()));
    }
    if shapes.iter().flatten().any(|&e| e == 0) {
        return Err("extents must be positive".into());
    }
    Ok(())
}

fn rank(shape: &[usize], r: usize, what: &str) -> Result<(), String> {
    if shape.len() != r {
        return Err(format!("{what} must have rank {r}, got {shape:?}"));
    }
    Ok(())
}

fn unary(s: &[Vec<usize>]) -> Result<(), String> {
    arity(s, 1)?;
    if s[0].is_empty() {
        return Err("input must have rank ≥ 1".into());
    }
    Ok(())
}

const REGISTRY: &[OpDef] = &[
    OpDef {
        name: "matmul",
        default_shapes: || vec![vec![1024, 1024], vec![1024, 1024]],
        check: |s| {
            arity(s, 2)?;
            rank(&s[0], 2, "a")?;
            rank(&s[1], 2, "b")?;
            if s[0][1] != s[1][0] {
                return Err(format!("inner extents differ: {:?} x {:?}", s[0], s[1]));
            }
            Ok(())
        },
        run: |b, t| b.matmul(&t[0], &t[1]),
        ids: None,
    },
    OpDef {
        name: "linear",
        default_shapes: || vec![vec![128, 1024], vec![1024, 1024], vec![1024]],
        check: |s| {
            arity(s, 3)?;
            rank(&s[1], 2, "weight")?;
            rank(&s[2], 1, "bias")?;
            if s[0].last() != Some(&s[1][1]) || s[2][0] != s[1][0] {
                return Err(format!("x {:?}, weight {:?}, bias {:?} do not fit", s[0], s[1], s[2]));
            }
            Ok(())
        },
        run: |b, t| b.linear(&t[0], &t[1], Some(&t[2])),
        ids: None,
    },
    OpDef {
        name: "softmax",
        default_shapes: || vec![vec![128, 1024]],
        check: unary,
        run: |b, t| b.softmax(&t[0], t[0].rank() - 1),
        ids: None,
    },
    OpDef {
        name: "layer_norm",
        default_shapes: || vec![vec![128, 1024], vec![1024], vec![1024]],
        check: |s| {
            arity(s, 3)?;
            let h = *s[0].last().ok_or("input must have rank ≥ 1")?;
            if s[1] != [h] || s[2] != [h] {
                return Err(format!("gamma and beta must be [{h}]"));
            }
            Ok(())
        },
        run: |b, t| b.layer_norm(&t[0], &t[1], &t[2], 1e-12),
        ids: None,
    },
    OpDef {
        name: "gelu",
        default_shapes: || vec![vec![128, 4096]],
        check: unary,
        run: |b, t| b.gelu(&t[0]),
        ids: None,
    },
    OpDef {
        name: "add",
        default_shapes: || vec![vec![1024, 1024], vec![1024, 1024]],
        check: |s| {
            arity(s, 2)?;
            if s[0] != s[1] {
                return Err(format!("shapes differ: {:?} vs {:?}", s[0], s[1]));
            }
            Ok(())
        },
        run: |b, t| b.add(&t[0], &t[1]),
        ids: None,
    },
    OpDef {
        name: "concat",
        default_shapes: || vec![vec![512, 1024], vec![512, 1024]],
        check: |s| {
            arity(s, 2)?;
            if s[0].is_empty() || s[0].len() != s[1].len() || s[0][1..] != s[1][1..] {
                return Err(format!("cannot join {:?} and {:?} on axis 0", s[0], s[1]));
            }
            Ok(())
        },
        run: |b, t| b.concat(&[&t[0], &t[1]], 0),
        ids: None,
    },
    OpDef {
        name: "transpose",
        default_shapes: || vec![vec![1024, 1024]],
        check: |s| {
            arity(s, 1)?;
            rank(&s[0], 2, "input")
        },
        run: |b, t| b.transpose(&t[0], &[1, 0]),
        ids: None,
    },
    OpDef {
        name: "embedding_lookup",
        default_shapes: || vec![vec![30522, 768], vec![32, 128]],
        check: |s| {
            arity(s, 2)?;
            rank(&s[0], 2, "table")
        },
        run: |b, t| b.embedding(&t[0], &t[1]),
        ids: Some((1, 0)),
    },
];

fn find(op: &str) -> Result<&'static OpDef, BenchError> {
    REGISTRY
        .iter()
        .find(|d| d.name == op)
        .ok_or_else(|| BenchError::UnknownOp(op.to_string()))
}

pub fn op_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|d| d.name).collect()
}

impl OpBenchSpec {
    /// Default shapes for `op`.
    pub fn new(op: &str) -> Result<OpBenchSpec, BenchError> {
        let def = find(op)?;
        Ok(OpBenchSpec {
            op: def.name.to_string(),
            shapes: (def.default_shapes)(),
            iterations: DEFAULT_OP_ITERATIONS,
            warmup: DEFAULT_WARMUP,
            backends: BackendId::ALL.to_vec(),
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let def = find(&self.op)?;
        if self.iterations == 0 {
            return Err(BenchError::InvalidSpec("iterations must be at least 1".into()));
        }
        if self.backends.is_empty() {
            return Err(BenchError::InvalidSpec("no backends selected".into()));
        }
        (def.check)(&self.shapes).map_err(|e| BenchError::InvalidSpec(format!("{}: {e}", self.op)))
    }

    /// Shapes as `[a]x[b]` for report headers.
    pub fn shapes_text(&self) -> String {
        self.shapes
            .iter()
            .map(|s| format!("[{}]", s.iter().map(usize::to_string).collect::<Vec<_>>().join("x")))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn fresh_inputs(&self, rng: &mut ChaCha8Rng) -> Result<Vec<Tensor>, TensorError> {
        let def = find(&self.op).expect("validated");
        let mut inputs = Vec::with_capacity(self.shapes.len());
        for (i, shape) in self.shapes.iter().enumerate() {
            let n: usize = shape.iter().product();
            let t = match def.ids {
                Some((ids, table)) if ids == i => {
                    let rows = self.shapes[table][0] as i64;
                    Tensor::from_i64(shape.clone(), (0..n).map(|_| rng.gen_range(0..rows)).collect())?
                }
                _ => Tensor::from_f32(shape.clone(), (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect())?,
            };
            inputs.push(t);
        }
        Ok(inputs)
    }
}

/// Every registered op with its default shapes.
pub fn default_op_specs() -> Vec<OpBenchSpec> {
    REGISTRY.iter().map(|d| OpBenchSpec::new(d.name).expect("registered")).collect()
}

/// Warmups then timed iterations on each backend. Inputs are rebuilt before
/// every run, outside the timed region.
pub fn run_op_bench(spec: &OpBenchSpec) -> Result<Vec<RunRecord>, BenchError> {
    spec.validate()?;
    let def = find(&spec.op)?;
    let subject = Subject::Op { op: spec.op.clone() };
    let kernel = |source| BenchError::Kernel {
        subject: spec.op.clone(),
        source,
    };
    let mut records = Vec::with_capacity(spec.iterations * spec.backends.len());
    for &id in &spec.backends {
        let backend = id.backend();
        let descriptor = backend.descriptor();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for _ in 0..spec.warmup {
            let inputs = spec.fresh_inputs(&mut rng).map_err(kernel)?;
            time_once(backend, || (def.run)(backend, &inputs)).map_err(kernel)?;
        }
        for iteration in 1..=spec.iterations {
            let inputs = spec.fresh_inputs(&mut rng).map_err(kernel)?;
            let (ms, _) = time_once(backend, || (def.run)(backend, &inputs)).map_err(kernel)?;
            records.push(RunRecord {
                subject: subject.clone(),
                backend: id,
                backend_descriptor: descriptor.clone(),
                iteration,
                ms,
                tokenize_ms: None,
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(op: &str) -> OpBenchSpec {
        let mut spec = OpBenchSpec::new(op).unwrap();
        // Shrink every extent so the test is quick; ids stay in range.
        spec.shapes = spec.shapes.iter().map(|s| s.iter().map(|&e| e.min(16)).collect()).collect();
        spec
    }

    #[test]
    fn default_registry_is_valid() {
        let specs = default_op_specs();
        let names: Vec<&str> = specs.iter().map(|s| s.op.as_str()).collect();
        for op in ["matmul", "linear", "softmax"] {
            assert!(names.contains(&op));
        }
        for spec in &specs {
            spec.validate().unwrap();
            assert_eq!((spec.iterations, spec.warmup), (5, 2));
        }
    }

    #[test]
    fn record_count_is_iterations_times_backends() {
        for op in op_names() {
            let records = run_op_bench(&small(op)).unwrap();
            assert_eq!(records.len(), 10, "{op}");
            for (i, r) in records.iter().enumerate() {
                assert_eq!(r.iteration, i % 5 + 1);
                assert_eq!(r.backend, BackendId::ALL[i / 5]);
                assert!(r.ms >= 0.0);
            }
        }
    }

    #[test]
    fn zero_warmup_still_runs() {
        let mut spec = small("gelu");
        spec.warmup = 0;
        spec.iterations = 3;
        spec.backends = vec![BackendId::Optimized];
        assert_eq!(run_op_bench(&spec).unwrap().len(), 3);
    }

    #[test]
    fn bad_specs_rejected() {
        assert!(matches!(OpBenchSpec::new("conv2d"), Err(BenchError::UnknownOp(_))));
        let mut spec = small("matmul");
        spec.shapes = vec![vec![2, 3], vec![4, 5]];
        assert!(matches!(run_op_bench(&spec), Err(BenchError::InvalidSpec(_))));
        let mut spec = small("softmax");
        spec.iterations = 0;
        assert!(matches!(spec.validate(), Err(BenchError::InvalidSpec(_))));
    }

    #[test]
    fn shapes_text() {
        assert_eq!(OpBenchSpec::new("linear").unwrap().shapes_text(), "[128x1024] [1024x1024] [1024]");
    }
}
