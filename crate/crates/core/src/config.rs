// SPDX-License-Identifier: MIT

//! The experiment configuration document.
//!
//! A single JSON document describes the topology, the workload, the models
//! and policies to compare, the sweep axes, the seeds and the output. The
//! run manifest written next to the results is itself a valid document, so
//! an experiment can be rerun from its manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::models::{ExecutionModel, StateDirectory};
use crate::scheduler::Policy;
use crate::topology::{NodeId, Topology, TopologySpec};
use crate::workload::{validate_chains, ChainSpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}, key `{key}`: {message}")]
    Parse {
        line: usize,
        column: usize,
        key: String,
        message: String,
    },
    #[error("invalid `{key}`: {reason}")]
    Validation { key: String, reason: String },
}

impl ConfigError {
    fn invalid(key: impl Into<String>, reason: impl ToString) -> Self {
        ConfigError::Validation {
            key: key.into(),
            reason: reason.to_string(),
        }
    }
}

/// A value or a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    pub fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Initial state holder of a chain: one node for every model, or one node
/// per model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HolderSpec {
    Node(NodeId),
    PerModel(BTreeMap<ExecutionModel, NodeId>),
}

impl HolderSpec {
    pub fn for_model(&self, model: ExecutionModel) -> Option<NodeId> {
        match self {
            HolderSpec::Node(n) => Some(*n),
            HolderSpec::PerModel(m) => m.get(&model).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub chains: Vec<ChainSpec>,
}

/// Sweep axes. An absent axis keeps each chain's configured value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_bytes: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_multipliers: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_lengths: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
}

/// Normalized configuration document; this is what manifests echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigDocument {
    pub topology: TopologySpec,
    pub workload: WorkloadSpec,
    pub model: Vec<ExecutionModel>,
    pub scheduler: Vec<Policy>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub state_directory: BTreeMap<String, HolderSpec>,
    #[serde(default)]
    pub sweep: Sweep,
    pub seed: u64,
    pub replications: usize,
    /// Warm-up in s; defaults to 10% of the workload window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    /// Simulation horizon in s; defaults to running until all work drains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub out: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub trace: bool,
}

/// Raw document as written by users: every key optional so that missing
/// keys are reported as validation errors naming the key.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    topology: Option<TopologySpec>,
    workload: Option<WorkloadSpec>,
    model: Option<OneOrMany<ExecutionModel>>,
    scheduler: Option<OneOrMany<Policy>>,
    #[serde(default)]
    state_directory: BTreeMap<String, HolderSpec>,
    sweep: Option<RawSweep>,
    seed: Option<u64>,
    replications: Option<i64>,
    warmup: Option<f64>,
    horizon: Option<f64>,
    out: Option<PathBuf>,
    formats: Option<Vec<OutputFormat>>,
    trace: Option<bool>,
    /// Provenance block of a manifest; ignored on load.
    #[allow(dead_code)]
    manifest: Option<serde_json::Value>,
}

/// Signed so that negative sizes are reported as validation errors.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    state_bytes: Option<Vec<i64>>,
    rate_multipliers: Option<Vec<f64>>,
    chain_lengths: Option<Vec<i64>>,
}

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUT: &str = "results";
pub const WARMUP_FRACTION: f64 = 0.1;

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub document: ConfigDocument,
    pub topology: Topology,
}

impl ExperimentConfig {
    /// Validates a normalized document.
    pub fn from_document(document: ConfigDocument) -> Result<Self, ConfigError> {
        let topology = Topology::build(document.topology.clone())
            .map_err(|e| ConfigError::invalid("topology", e))?;
        let chains = &document.workload.chains;
        validate_chains(chains, &topology).map_err(|e| ConfigError::invalid("workload", e))?;

        let nonempty = |key: &str, len: usize| {
            if len == 0 {
                Err(ConfigError::invalid(key, "must not be empty"))
            } else {
                Ok(())
            }
        };
        nonempty("workload.chains", chains.len())?;
        nonempty("model", document.model.len())?;
        nonempty("scheduler", document.scheduler.len())?;
        nonempty("formats", document.formats.len())?;
        if document.replications < 1 {
            return Err(ConfigError::invalid("replications", "must be at least 1"));
        }
        let sweep = &document.sweep;
        if let Some(v) = &sweep.state_bytes {
            nonempty("sweep.state_bytes", v.len())?;
        }
        if let Some(v) = &sweep.rate_multipliers {
            nonempty("sweep.rate_multipliers", v.len())?;
            if v.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
                return Err(ConfigError::invalid(
                    "sweep.rate_multipliers",
                    "multipliers must be positive and finite",
                ));
            }
        }
        if let Some(v) = &sweep.chain_lengths {
            nonempty("sweep.chain_lengths", v.len())?;
            if v.contains(&0) {
                return Err(ConfigError::invalid(
                    "sweep.chain_lengths",
                    "lengths must be at least 1",
                ));
            }
        }

        for chain_id in document.state_directory.keys() {
            if !chains.iter().any(|c| &c.id == chain_id) {
                return Err(ConfigError::invalid(
                    format!("state_directory.{chain_id}"),
                    "no chain with this id",
                ));
            }
        }
        // every model must find a consistent initial directory at the
        // largest state size the sweep sets
        let swept = sweep
            .state_bytes
            .as_ref()
            .and_then(|v| v.iter().max().copied());
        let probe: Vec<ChainSpec> = chains
            .iter()
            .cloned()
            .map(|mut c| {
                c.state_bytes = swept.unwrap_or(c.state_bytes);
                c
            })
            .collect();
        for &model in &document.model {
            let holders = holders_for(&document.state_directory, model);
            StateDirectory::initial(model, &probe, &topology, &holders)
                .map_err(|e| ConfigError::invalid("state_directory", e))?;
        }

        let stop = workload_window(chains).1;
        if let Some(w) = document.warmup {
            if !(w >= 0.0 && w < stop) {
                return Err(ConfigError::invalid(
                    "warmup",
                    format!("must be in [0, {stop}) s"),
                ));
            }
        }
        if let Some(h) = document.horizon {
            if !(h >= stop) {
                return Err(ConfigError::invalid(
                    "horizon",
                    format!("must not end before the workload stop time {stop} s"),
                ));
            }
        }
        Ok(Self { document, topology })
    }

    pub fn grid_size(&self) -> usize {
        let sweep = &self.document.sweep;
        self.document.model.len()
            * self.document.scheduler.len()
            * sweep.state_bytes.as_ref().map_or(1, Vec::len)
            * sweep.rate_multipliers.as_ref().map_or(1, Vec::len)
            * sweep.chain_lengths.as_ref().map_or(1, Vec::len)
    }

    /// Warm-up actually applied, in s.
    pub fn warmup(&self) -> f64 {
        let (start, stop) = workload_window(&self.document.workload.chains);
        self.document
            .warmup
            .unwrap_or(start + WARMUP_FRACTION * (stop - start))
    }

    /// End of the aggregation window: the last workload stop time.
    pub fn duration(&self) -> f64 {
        workload_window(&self.document.workload.chains).1
    }

    pub fn horizon(&self) -> f64 {
        self.document.horizon.unwrap_or(f64::INFINITY)
    }
}

/// Configured holders under `model`, by chain id.
pub fn holders_for(
    directory: &BTreeMap<String, HolderSpec>,
    model: ExecutionModel,
) -> BTreeMap<String, NodeId> {
    directory
        .iter()
        .filter_map(|(chain, spec)| spec.for_model(model).map(|n| (chain.clone(), n)))
        .collect()
}

/// Earliest start and latest stop over all chains; (0, 0) without chains.
fn workload_window(chains: &[ChainSpec]) -> (f64, f64) {
    if chains.is_empty() {
        return (0.0, 0.0);
    }
    let start = chains
        .iter()
        .map(|c| c.arrival.start)
        .fold(f64::INFINITY, f64::min);
    let stop = chains
        .iter()
        .map(|c| c.arrival.stop)
        .fold(f64::NEG_INFINITY, f64::max);
    (start, stop)
}

fn required<T>(value: Option<T>, key: &str) -> Result<T, ConfigError> {
    value.ok_or_else(|| ConfigError::invalid(key, "missing required key"))
}

fn non_negative(values: Vec<i64>, key: &str) -> Result<Vec<u64>, ConfigError> {
    values
        .into_iter()
        .map(|v| {
            u64::try_from(v).map_err(|_| ConfigError::invalid(key, format!("negative value {v}")))
        })
        .collect()
}

/// Parses and validates a configuration document from a string.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawDocument = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Parse {
            line: inner.line(),
            column: inner.column(),
            key,
            message: inner.to_string(),
        }
    })?;

    let sweep = match raw.sweep {
        None => Sweep::default(),
        Some(s) => Sweep {
            state_bytes: s
                .state_bytes
                .map(|v| non_negative(v, "sweep.state_bytes"))
                .transpose()?,
            rate_multipliers: s.rate_multipliers,
            chain_lengths: s
                .chain_lengths
                .map(|v| {
                    non_negative(v, "sweep.chain_lengths")
                        .map(|v| v.into_iter().map(|k| k as usize).collect())
                })
                .transpose()?,
        },
    };
    let replications = raw.replications.unwrap_or(1);
    if replications < 1 {
        return Err(ConfigError::invalid("replications", "must be at least 1"));
    }

    let document = ConfigDocument {
        topology: required(raw.topology, "topology")?,
        workload: required(raw.workload, "workload")?,
        model: required(raw.model, "model")?.into_vec(),
        scheduler: raw
            .scheduler
            .map(OneOrMany::into_vec)
            .unwrap_or_else(|| vec![Policy::new(crate::scheduler::PolicyKind::LeastLoaded)]),
        state_directory: raw.state_directory,
        sweep,
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        replications: replications as usize,
        warmup: raw.warmup,
        horizon: raw.horizon,
        out: raw.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        formats: raw.formats.unwrap_or_else(|| vec![OutputFormat::Csv]),
        trace: raw.trace.unwrap_or(false),
    };
    ExperimentConfig::from_document(document)
}

/// Reads and validates the configuration document at `path`.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "topology": {"nodes": [{"id": 0, "speed": 1e9, "roles": ["client", "executor"]}]},
        "workload": {"chains": [{"id": "app1", "client": 0, "state_bytes": 10000,
            "functions": [{"id": "f1", "demand": 1e7, "input_bytes": 1000, "output_bytes": 1000}],
            "arrival": {"kind": "poisson", "rate": 10, "start": 0, "stop": 100}}]},
        "model": "client_state"
    }"#;

    fn with(key: &str, value: serde_json::Value) -> String {
        let mut doc: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        doc[key] = value;
        doc.to_string()
    }

    fn without(key: &str) -> String {
        let mut doc: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        doc.as_object_mut().unwrap().remove(key);
        doc.to_string()
    }

    #[test]
    fn minimal_document() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.document.model, vec![ExecutionModel::ClientState]);
        assert_eq!(c.document.replications, 1);
        assert_eq!(c.grid_size(), 1);
        assert_eq!(c.warmup(), 10.0);
        assert_eq!(c.duration(), 100.0);
        assert!(c.horizon().is_infinite());
    }

    #[test]
    fn missing_model_names_the_key() {
        match parse_config(&without("model")) {
            Err(ConfigError::Validation { key, .. }) => assert_eq!(key, "model"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_state_size() {
        let text = with("sweep", serde_json::json!({"state_bytes": [-5]}));
        match parse_config(&text) {
            Err(ConfigError::Validation { key, reason }) => {
                assert_eq!(key, "sweep.state_bytes");
                assert!(reason.contains("-5"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_position_and_key() {
        let text = with("seed", serde_json::json!("not a number"));
        match parse_config(&text) {
            Err(ConfigError::Parse { key, line, .. }) => {
                assert_eq!(key, "seed");
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_config("{"), Err(ConfigError::Parse { .. })));
        assert!(matches!(
            parse_config(&with("bogus", serde_json::json!(1))),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn grid_size_is_the_axis_product() {
        let mut doc: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        doc["model"] = serde_json::json!([
            "client_state",
            "remote_state",
            "local_state",
            "state_propagation"
        ]);
        doc["topology"]["nodes"][0]["roles"] =
            serde_json::json!(["client", "executor", "state_store"]);
        doc["sweep"] =
            serde_json::json!({"state_bytes": [0, 1000, 10000], "rate_multipliers": [0.5, 1.0]});
        doc["scheduler"] = serde_json::json!([{"kind": "random"}, {"kind": "closest"}]);
        let c = parse_config(&doc.to_string()).unwrap();
        assert_eq!(c.grid_size(), 4 * 2 * 3 * 2);
    }

    #[test]
    fn remote_state_needs_a_store() {
        let text = with("model", serde_json::json!("remote_state"));
        match parse_config(&text) {
            Err(ConfigError::Validation { key, .. }) => assert_eq!(key, "state_directory"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn per_model_holders() {
        let mut doc: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        doc["topology"] = serde_json::json!({
            "nodes": [
                {"id": 0, "speed": 1e9, "roles": ["client"]},
                {"id": 1, "speed": 1e9, "roles": ["executor"]},
                {"id": 2, "speed": 1e9, "roles": ["state_store"]}],
            "links": [{"a": 0, "b": 1, "capacity": 1e6, "latency": 0.001},
                      {"a": 1, "b": 2, "capacity": 1e6, "latency": 0.001}]});
        doc["model"] = serde_json::json!(["remote_state", "local_state"]);
        doc["state_directory"] = serde_json::json!({"app1": 2});
        assert!(parse_config(&doc.to_string()).is_err());
        doc["state_directory"] = serde_json::json!({"app1": {"remote_state": 2, "local_state": 1}});
        let c = parse_config(&doc.to_string()).unwrap();
        assert_eq!(
            holders_for(&c.document.state_directory, ExecutionModel::LocalState)["app1"],
            NodeId(1)
        );
    }

    #[test]
    fn normalized_document_roundtrips() {
        let c = parse_config(MINIMAL).unwrap();
        let text = serde_json::to_string(&c.document).unwrap();
        let again = parse_config(&text).unwrap();
        assert_eq!(again.document, c.document);
    }

    #[test]
    fn topology_and_workload_errors_are_validation_errors() {
        let text = with(
            "topology",
            serde_json::json!({"nodes": [{"id": 0, "speed": 1e9, "roles": ["client"]}]}),
        );
        assert!(
            matches!(parse_config(&text), Err(ConfigError::Validation { key, .. }) if key == "topology")
        );
        let mut doc: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        doc["workload"]["chains"][0]["client"] = serde_json::json!(5);
        assert!(
            matches!(parse_config(&doc.to_string()), Err(ConfigError::Validation { key, .. }) if key == "workload")
        );
    }
}
