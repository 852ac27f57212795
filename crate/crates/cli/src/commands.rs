use std::path::PathBuf;

use encbench_core::bench::{
    average_table, default_op_specs, run_model_bench, run_op_bench, write_reports, Corpus, Grouping, Manifest,
    ModelBenchSpec, OpBenchSpec, SpeedupPair,
};
use encbench_core::checkpoint::{fetch_repo, load_from_dir, LoadedModel};
use encbench_core::golden::GoldenSet;
use encbench_core::models::Encoder;
use encbench_core::BackendId;

use crate::config::CliConfig;
use crate::error::{CliError, EXIT_LOAD, EXIT_VERIFY};

fn speedup_pairs(backends: &[BackendId]) -> Vec<SpeedupPair> {
    let p = SpeedupPair::DEFAULT;
    if backends.contains(&p.target) && backends.contains(&p.baseline) {
        vec![p]
    } else {
        Vec::new()
    }
}

fn load(config: &CliConfig, repo: &str, revision: &str) -> Result<LoadedModel, CliError> {
    let hub = config.hub();
    let dir = fetch_repo(&hub, repo, revision)?;
    Ok(load_from_dir(&dir)?)
}

pub fn download(config: &CliConfig, repo: &str, revision: &str) -> Result<(), CliError> {
    let hub = config.hub();
    let dir = fetch_repo(&hub, repo, revision)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| CliError::new(EXIT_LOAD, format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')))
        .collect();
    files.sort();
    for f in files {
        println!("{}", f.display());
    }
    eprintln!("{} network request(s)", hub.network_requests());
    Ok(())
}

pub fn bench_ops(config: &CliConfig, ops: &[String]) -> Result<(), CliError> {
    let mut specs = if ops.is_empty() {
        default_op_specs()
    } else {
        ops.iter().map(|op| OpBenchSpec::new(op)).collect::<Result<Vec<_>, _>>()?
    };
    for spec in &mut specs {
        spec.iterations = config.op_iterations();
        spec.warmup = config.warmup;
        spec.backends = config.backends.clone();
        spec.seed = config.seed;
        spec.validate()?;
    }
    let mut header = vec![format!(
        "iterations {}, warmup {}, seed {}",
        config.op_iterations(),
        config.warmup,
        config.seed
    )];
    header.extend(specs.iter().map(|s| format!("{}: {}", s.op, s.shapes_text())));

    let mut records = Vec::new();
    for spec in &specs {
        eprintln!("benchmarking {}", spec.op);
        records.extend(run_op_bench(spec)?);
    }
    let pairs = speedup_pairs(&config.backends);
    let table = average_table(&records, Grouping::Subject, &pairs)?;
    let manifest = Manifest::new(
        "bench-ops",
        config.seed,
        serde_json::to_value(&specs).expect("serializable"),
        &config.backends,
    );
    let files = write_reports(
        &config.out,
        "ops_detailed",
        &records,
        &[("ops_average", &table)],
        &header,
        &[],
        manifest,
    )?;
    print!("{}", table.render(&[]));
    eprintln!("wrote {} files to {}", files.len(), config.out.display());
    Ok(())
}

pub fn bench_model(config: &CliConfig, repo: &str, revision: &str) -> Result<(), CliError> {
    let corpus = match &config.corpus {
        Some(path) => Corpus::from_file(path)?,
        None => Corpus::bundled(),
    };
    let spec = ModelBenchSpec {
        model: repo.to_string(),
        char_lengths: config.lengths.clone(),
        batch_sizes: config.batches.clone(),
        iterations: config.model_iterations(),
        warmup: config.warmup,
        backends: config.backends.clone(),
        corpus: config.corpus.as_ref().map(|p| p.display().to_string()),
        seed: config.seed,
    };
    spec.validate()?;
    // Everything that can fail to load does so before any timing.
    let model = load(config, repo, revision)?;
    let encoder = Encoder::new(model.config.clone(), model.weights.clone())
        .map_err(|e| CliError::new(EXIT_LOAD, e.to_string()))?;

    let run = run_model_bench(&spec, &encoder, &model.tokenizer, &corpus)?;
    let pairs = speedup_pairs(&config.backends);
    let by_config = average_table(&run.records, Grouping::Subject, &pairs)?;
    let by_length = average_table(&run.records, Grouping::Length, &pairs)?;
    let by_batch = average_table(&run.records, Grouping::Batch, &pairs)?;
    let overall = average_table(&run.records, Grouping::Model, &pairs)?;
    let header = vec![
        format!("model {repo}@{revision} ({})", model.config.family),
        format!(
            "iterations {}, warmup {}, seed {}, corpus {}",
            spec.iterations,
            spec.warmup,
            spec.seed,
            spec.corpus.as_deref().unwrap_or("bundled")
        ),
    ];
    let inputs: String = run
        .inputs
        .iter()
        .map(|b| serde_json::to_string(b).expect("serializable") + "\n")
        .collect();
    let manifest = Manifest::new(
        "bench-model",
        config.seed,
        serde_json::to_value(&spec).expect("serializable"),
        &config.backends,
    );
    let files = write_reports(
        &config.out,
        "model_detailed",
        &run.records,
        &[
            ("model_average", &by_config),
            ("model_by_length", &by_length),
            ("model_by_batch", &by_batch),
            ("model_overall", &overall),
        ],
        &header,
        &[("inputs.jsonl", inputs)],
        manifest,
    )?;
    print!("{}", overall.render(&[]));
    eprintln!("wrote {} files to {}", files.len(), config.out.display());
    Ok(())
}

pub fn verify(
    config: &CliConfig,
    repo: &str,
    revision: &str,
    golden: Option<PathBuf>,
    tolerance: f32,
) -> Result<(), CliError> {
    let path = golden.unwrap_or_else(|| {
        PathBuf::from("fixtures/golden").join(format!("{}.safetensors", repo.replace('/', "--")))
    });
    if !path.is_file() {
        return Err(CliError::new(EXIT_LOAD, format!("golden file {} not found", path.display())));
    }
    let golden = GoldenSet::read(&path)?;
    let model = load(config, repo, revision)?;
    let mut failing = Vec::new();
    println!("backend | tensor | max_abs_diff | status");
    for &id in &config.backends {
        for diff in golden.compare(&model, id.backend())? {
            let ok = diff.passes(tolerance);
            let value = if diff.name == "input_ids" {
                if diff.mismatch { "differ" } else { "equal" }.to_string()
            } else {
                format!("{:.3e}", diff.max_abs)
            };
            println!("{id} | {} | {value} | {}", diff.name, if ok { "ok" } else { "FAIL" });
            if !ok {
                failing.push(format!("{id}:{}", diff.name));
            }
        }
    }
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::new(
            EXIT_VERIFY,
            format!("outside tolerance {tolerance:e}: {}", failing.join(", ")),
        ))
    }
}
