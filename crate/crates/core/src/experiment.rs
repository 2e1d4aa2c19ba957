// SPDX-License-Identifier: MIT

//! Grid expansion, replicated runs and result files.
//!
//! A grid cell fixes one value per axis (model, policy, state size, rate
//! multiplier, chain length). Each cell runs `replications` times with
//! `seed = base_seed + hash(cell, replication)`. Results are buffered and
//! written in (cell, replication) order, so the files do not depend on how
//! runs were scheduled across threads.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{holders_for, ExperimentConfig};
use crate::engine::{run, EngineError, RunOptions, RunResult, TraceRecord};
use crate::metrics::{aggregate, summarize, Aggregate, MetricsError, METRIC_NAMES};
use crate::models::ExecutionModel;
use crate::rng::stable_hash;
use crate::scheduler::Policy;
use crate::workload::ChainSpec;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACE_DIR: &str = "traces";

/// Environment variable capping the number of runs executed in parallel.
pub const THREADS_ENV: &str = "EDGE_FAAS_SIM_THREADS";

/// Leading CSV columns identifying a run; the metric columns follow.
pub const KEY_COLUMNS: [&str; 7] = [
    "model",
    "scheduler",
    "state_bytes",
    "rate_multiplier",
    "chain_length",
    "replication",
    "seed",
];

/// Value of the replication column on per-cell summary rows.
pub const SUMMARY_MARKER: &str = "summary";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cell {cell}, replication {replication}: {source}")]
    Engine {
        cell: usize,
        replication: usize,
        source: EngineError,
    },
    #[error("cell {cell}, replication {replication}: {source}")]
    Metrics {
        cell: usize,
        replication: usize,
        source: MetricsError,
    },
    #[error("cannot start worker threads: {0}")]
    Threads(String),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub index: usize,
    pub model: ExecutionModel,
    pub policy: Policy,
    /// `None` keeps each chain's configured value.
    pub state_bytes: Option<u64>,
    pub rate_multiplier: f64,
    pub chain_length: Option<usize>,
}

impl Cell {
    /// The workload of this cell.
    pub fn apply(&self, chains: &[ChainSpec]) -> Vec<ChainSpec> {
        chains
            .iter()
            .map(|chain| {
                let mut chain = chain.clone();
                if let Some(s) = self.state_bytes {
                    chain.state_bytes = s;
                }
                chain.arrival.rate *= self.rate_multiplier;
                if let Some(k) = self.chain_length {
                    let base = chain.functions.clone();
                    chain.functions = (0..k).map(|i| base[i % base.len()].clone()).collect();
                }
                chain
            })
            .collect()
    }
}

/// All grid cells, models outermost and chain lengths innermost.
pub fn expand_grid(config: &ExperimentConfig) -> Vec<Cell> {
    let doc = &config.document;
    let states: Vec<Option<u64>> = axis(&doc.sweep.state_bytes);
    let rates: Vec<f64> = doc
        .sweep
        .rate_multipliers
        .clone()
        .unwrap_or_else(|| vec![1.0]);
    let lengths: Vec<Option<usize>> = axis(&doc.sweep.chain_lengths);

    let mut cells = Vec::with_capacity(config.grid_size());
    for &model in &doc.model {
        for &policy in &doc.scheduler {
            for &state_bytes in &states {
                for &rate_multiplier in &rates {
                    for &chain_length in &lengths {
                        cells.push(Cell {
                            index: cells.len(),
                            model,
                            policy,
                            state_bytes,
                            rate_multiplier,
                            chain_length,
                        });
                    }
                }
            }
        }
    }
    cells
}

fn axis<T: Copy>(values: &Option<Vec<T>>) -> Vec<Option<T>> {
    match values {
        Some(v) => v.iter().copied().map(Some).collect(),
        None => vec![None],
    }
}

pub fn run_seed(base: u64, cell: usize, replication: usize) -> u64 {
    base.wrapping_add(stable_hash(&[cell as u64, replication as u64]))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub cell: usize,
    pub replication: usize,
    pub seed: u64,
    pub aggregate: Aggregate,
    pub trace: Option<Vec<TraceRecord>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestRun {
    pub cell: usize,
    pub replication: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: &'static str,
    /// Seconds since the Unix epoch when the experiment finished.
    pub created: u64,
    pub grid_size: usize,
    pub runs: Vec<ManifestRun>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub cells: Vec<Cell>,
    pub runs: Vec<RunOutcome>,
    pub results_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub manifest: PathBuf,
}

/// Runs one replication of one cell.
pub fn run_cell(
    config: &ExperimentConfig,
    cell: &Cell,
    replication: usize,
) -> Result<(RunResult, Aggregate), ExperimentError> {
    let doc = &config.document;
    let seed = run_seed(doc.seed, cell.index, replication);
    let chains = cell.apply(&doc.workload.chains);
    let options = RunOptions {
        holders: holders_for(&doc.state_directory, cell.model),
        trace: doc.trace,
    };
    let result = run(
        &config.topology,
        &chains,
        cell.model,
        cell.policy,
        seed,
        config.horizon(),
        &options,
    )
    .map_err(|source| ExperimentError::Engine {
        cell: cell.index,
        replication,
        source,
    })?;
    let aggregate = aggregate(&result, config.warmup(), config.duration()).map_err(|source| {
        ExperimentError::Metrics {
            cell: cell.index,
            replication,
            source,
        }
    })?;
    Ok((result, aggregate))
}

/// Runs every (cell, replication) pair, in parallel, in output order.
pub fn run_grid(
    config: &ExperimentConfig,
) -> Result<(Vec<Cell>, Vec<RunOutcome>), ExperimentError> {
    let cells = expand_grid(config);
    let replications = config.document.replications;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..replications).map(move |r| (c, r)))
        .collect();

    let work = || {
        jobs.par_iter()
            .map(|&(c, r)| {
                let (result, aggregate) = run_cell(config, &cells[c], r)?;
                Ok(RunOutcome {
                    cell: c,
                    replication: r,
                    seed: result.seed,
                    aggregate,
                    trace: result.trace,
                })
            })
            .collect::<Result<Vec<_>, ExperimentError>>()
    };
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| {
        let n = v.trim().parse::<usize>().ok().filter(|&n| n > 0);
        if n.is_none() {
            log::warn!("ignoring {THREADS_ENV}={v:?}: expected a positive integer");
        }
        n
    });
    let runs = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::Threads(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok((cells, runs))
}

fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn cell_columns(cell: &Cell) -> [String; 5] {
    [
        cell.model.to_string(),
        cell.policy.to_string(),
        cell.state_bytes.map(|s| s.to_string()).unwrap_or_default(),
        fmt_f64(cell.rate_multiplier),
        cell.chain_length.map(|k| k.to_string()).unwrap_or_default(),
    ]
}

/// Header of the results CSV.
pub fn results_header() -> String {
    KEY_COLUMNS
        .iter()
        .chain(METRIC_NAMES.iter())
        .copied()
        .collect::<Vec<_>>()
        .join(",")
}

fn metric_columns(agg: &Aggregate) -> Vec<String> {
    let values = agg.metric_values();
    vec![
        agg.count.to_string(),
        fmt_f64(values[1]),
        fmt_f64(values[2]),
        fmt_f64(values[3]),
        fmt_f64(values[4]),
        agg.total_byte_hops.to_string(),
        fmt_f64(agg.byte_hops_per_invocation),
        fmt_f64(values[7]),
        agg.residual.to_string(),
    ]
}

/// Data rows and per-cell summary rows, in (cell, replication) order.
pub fn results_csv(cells: &[Cell], runs: &[RunOutcome]) -> String {
    let mut out = results_header();
    out.push('\n');
    for cell in cells {
        let cell_runs: Vec<&RunOutcome> = runs.iter().filter(|r| r.cell == cell.index).collect();
        for run in &cell_runs {
            let mut row: Vec<String> = cell_columns(cell).into();
            row.push(run.replication.to_string());
            row.push(run.seed.to_string());
            row.extend(metric_columns(&run.aggregate));
            let _ = writeln!(out, "{}", row.join(","));
        }
        let mut row: Vec<String> = cell_columns(cell).into();
        row.push(SUMMARY_MARKER.to_string());
        row.push(String::new());
        for i in 0..METRIC_NAMES.len() {
            let column: Vec<f64> = cell_runs
                .iter()
                .map(|r| r.aggregate.metric_values()[i])
                .collect();
            row.push(fmt_f64(column.iter().sum::<f64>() / column.len() as f64));
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Per-cell mean, standard deviation and 95% half-width of every metric.
/// Deviation and half-width are empty with a single replication.
pub fn summary_csv(cells: &[Cell], runs: &[RunOutcome]) -> String {
    let mut header: Vec<String> = KEY_COLUMNS[..5].iter().map(|s| s.to_string()).collect();
    header.push("replications".into());
    for m in METRIC_NAMES {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_stddev"));
        header.push(format!("{m}_ci95"));
    }
    let mut out = header.join(",");
    out.push('\n');
    for cell in cells {
        let cell_runs: Vec<&RunOutcome> = runs.iter().filter(|r| r.cell == cell.index).collect();
        let mut row: Vec<String> = cell_columns(cell).into();
        row.push(cell_runs.len().to_string());
        for i in 0..METRIC_NAMES.len() {
            let column: Vec<f64> = cell_runs
                .iter()
                .map(|r| r.aggregate.metric_values()[i])
                .collect();
            match summarize(&column) {
                Ok(s) => {
                    row.push(fmt_f64(s.mean));
                    row.push(fmt_f64(s.stddev));
                    row.push(fmt_f64(s.half_width));
                }
                Err(_) => {
                    row.push(fmt_f64(column.iter().sum::<f64>() / column.len() as f64));
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// The manifest: the normalized configuration plus a `manifest` block.
pub fn manifest_json(config: &ExperimentConfig, runs: &[RunOutcome], created: u64) -> String {
    let manifest = Manifest {
        version: crate::VERSION,
        created,
        grid_size: config.grid_size(),
        runs: runs
            .iter()
            .map(|r| ManifestRun {
                cell: r.cell,
                replication: r.replication,
                seed: r.seed,
            })
            .collect(),
    };
    let mut doc = serde_json::to_value(&config.document).expect("document serializes");
    doc["manifest"] = serde_json::to_value(manifest).expect("manifest serializes");
    let mut text = serde_json::to_string_pretty(&doc).expect("json serializes");
    text.push('\n');
    text
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(io_error(path))
}

/// Runs the whole grid and writes results, summaries and the manifest to
/// the configured output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    let out = &config.document.out;
    fs::create_dir_all(out).map_err(io_error(out))?;
    let (cells, runs) = run_grid(config)?;

    let results = out.join(RESULTS_FILE);
    write_file(&results, &results_csv(&cells, &runs))?;
    let summary = out.join(SUMMARY_FILE);
    write_file(&summary, &summary_csv(&cells, &runs))?;

    if config.document.trace {
        let dir = out.join(TRACE_DIR);
        fs::create_dir_all(&dir).map_err(io_error(&dir))?;
        for run in &runs {
            let path = dir.join(format!("cell{}_rep{}.jsonl", run.cell, run.replication));
            let file = fs::File::create(&path).map_err(io_error(&path))?;
            let mut w = std::io::BufWriter::new(file);
            for record in run.trace.iter().flatten() {
                let line = serde_json::to_string(record).expect("trace record serializes");
                writeln!(w, "{line}").map_err(io_error(&path))?;
            }
            w.flush().map_err(io_error(&path))?;
        }
    }

    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = out.join(MANIFEST_FILE);
    write_file(&manifest, &manifest_json(config, &runs, created))?;

    log::info!(
        "{} cells x {} replications written to {}",
        cells.len(),
        config.document.replications,
        out.display()
    );
    Ok(ExperimentOutcome {
        cells,
        runs,
        results_csv: results,
        summary_csv: summary,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use std::collections::BTreeSet;

    fn config(extra: serde_json::Value) -> ExperimentConfig {
        let mut doc = serde_json::json!({
            "topology": {
                "nodes": [
                    {"id": 0, "speed": 1e9, "roles": ["client"]},
                    {"id": 1, "speed": 1e9, "roles": ["executor", "state_store"]},
                    {"id": 2, "speed": 1e9, "roles": ["executor"]}],
                "links": [
                    {"a": 0, "b": 1, "capacity": 1e6, "latency": 0.001},
                    {"a": 1, "b": 2, "capacity": 1e6, "latency": 0.001}]},
            "workload": {"chains": [{"id": "app1", "client": 0, "state_bytes": 1000,
                "functions": [{"id": "f1", "demand": 1e7, "input_bytes": 1000, "output_bytes": 1000}],
                "arrival": {"kind": "poisson", "rate": 5, "start": 0, "stop": 10}}]},
            "model": ["client_state", "remote_state", "local_state", "state_propagation"],
            "replications": 5
        });
        for (k, v) in extra.as_object().unwrap() {
            doc[k] = v.clone();
        }
        parse_config(&doc.to_string()).unwrap()
    }

    #[test]
    fn grid_order_and_row_count() {
        let c = config(serde_json::json!({"sweep": {"state_bytes": [0, 1000, 10000]}}));
        let cells = expand_grid(&c);
        assert_eq!(cells.len(), 12);
        assert_eq!(cells[0].model, ExecutionModel::ClientState);
        assert_eq!(cells[1].state_bytes, Some(1000));
        assert_eq!(cells[3].model, ExecutionModel::RemoteState);

        let (cells, runs) = run_grid(&c).unwrap();
        assert_eq!(runs.len(), 60);
        let csv = results_csv(&cells, &runs);
        // header + 60 data rows + 12 summaries
        assert_eq!(csv.lines().count(), 1 + 60 + 12);
        let summaries = csv.lines().filter(|l| l.contains(",summary,")).count();
        assert_eq!(summaries, 12);
    }

    #[test]
    fn seeds_are_pairwise_distinct() {
        let c = config(serde_json::json!({"sweep": {"state_bytes": [0, 1, 2, 3, 4]}}));
        let seeds: BTreeSet<u64> = expand_grid(&c)
            .iter()
            .flat_map(|cell| {
                (0..c.document.replications).map(move |r| run_seed(c.document.seed, cell.index, r))
            })
            .collect();
        assert_eq!(seeds.len(), c.grid_size() * c.document.replications);
    }

    #[test]
    fn chain_length_cycles_functions() {
        let c = config(serde_json::json!({"sweep": {"chain_lengths": [3]}}));
        let cell = &expand_grid(&c)[0];
        let chains = cell.apply(&c.document.workload.chains);
        assert_eq!(chains[0].functions.len(), 3);
        assert_eq!(chains[0].functions[2].id, "f1");
    }

    #[test]
    fn rate_multiplier_scales_rates() {
        let c = config(serde_json::json!({"sweep": {"rate_multipliers": [0.5, 2.0]}}));
        let cells = expand_grid(&c);
        assert_eq!(
            cells[1].apply(&c.document.workload.chains)[0].arrival.rate,
            10.0
        );
    }

    #[test]
    fn single_replication_has_empty_interval() {
        let c = config(serde_json::json!({"replications": 1, "model": "client_state"}));
        let (cells, runs) = run_grid(&c).unwrap();
        let summary = summary_csv(&cells, &runs);
        let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[5], "1");
        assert_eq!(row[8], "");
    }
}
