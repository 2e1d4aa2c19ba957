// SPDX-License-Identifier: MIT

//! Per-run aggregates and cross-replication summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::engine::RunResult;
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("all {0} records arrived during the warm-up period")]
    EmptyAfterWarmup(usize),
    #[error("invalid aggregation window: warmup {warmup} s, duration {duration} s")]
    InvalidWindow { warmup: f64, duration: f64 },
    #[error("{0} replication(s): at least 2 are needed for a confidence interval")]
    TooFewReplications(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: u64,
    /// `None` for a run without completed invocations.
    pub latency: Option<LatencyStats>,
    pub total_byte_hops: u64,
    pub byte_hops_per_invocation: f64,
    /// Busy fraction of every node within the aggregation window.
    pub utilization: BTreeMap<NodeId, f64>,
    pub residual: u64,
}

impl Aggregate {
    pub fn max_node_utilization(&self) -> f64 {
        self.utilization.values().copied().fold(0.0, f64::max)
    }

    /// The scalar metrics, in CSV column order.
    pub fn metric_values(&self) -> [f64; METRIC_NAMES.len()] {
        let lat = self.latency.unwrap_or(LatencyStats {
            mean: f64::NAN,
            p50: f64::NAN,
            p95: f64::NAN,
            p99: f64::NAN,
        });
        [
            self.count as f64,
            lat.mean,
            lat.p50,
            lat.p95,
            lat.p99,
            self.total_byte_hops as f64,
            self.byte_hops_per_invocation,
            self.max_node_utilization(),
            self.residual as f64,
        ]
    }
}

/// Names of [`Aggregate::metric_values`], matching the CSV schema.
pub const METRIC_NAMES: [&str; 9] = [
    "count",
    "latency_mean_s",
    "latency_p50_s",
    "latency_p95_s",
    "latency_p99_s",
    "byte_hops_total",
    "byte_hops_per_invocation",
    "max_node_utilization",
    "residual",
];

/// Nearest-rank percentile of an ascending sample: the value at 1-based
/// index `ceil(percent * n / 100)`, computed in integers.
pub fn nearest_rank(sorted: &[f64], percent: u32) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    assert!(percent <= 100);
    let n = sorted.len() as u64;
    let rank = (u64::from(percent) * n).div_ceil(100).max(1);
    sorted[(rank - 1) as usize]
}

/// Aggregates the invocations arriving at or after `warmup`; utilization
/// counts busy time within `[warmup, duration]`.
pub fn aggregate(
    result: &RunResult,
    warmup: f64,
    duration: f64,
) -> Result<Aggregate, MetricsError> {
    if !(warmup >= 0.0 && duration > warmup) {
        return Err(MetricsError::InvalidWindow { warmup, duration });
    }
    let kept: Vec<_> = result
        .records
        .iter()
        .filter(|r| r.arrival_time >= warmup)
        .collect();
    if kept.is_empty() && !result.records.is_empty() {
        return Err(MetricsError::EmptyAfterWarmup(result.records.len()));
    }

    let mut latencies: Vec<f64> = kept.iter().map(|r| r.latency).collect();
    latencies.sort_by(f64::total_cmp);
    let latency = (!latencies.is_empty()).then(|| LatencyStats {
        mean: latencies.iter().sum::<f64>() / latencies.len() as f64,
        p50: nearest_rank(&latencies, 50),
        p95: nearest_rank(&latencies, 95),
        p99: nearest_rank(&latencies, 99),
    });

    let total_byte_hops: u64 = kept.iter().map(|r| r.byte_hops).sum();
    let byte_hops_per_invocation = if kept.is_empty() {
        0.0
    } else {
        total_byte_hops as f64 / kept.len() as f64
    };
    let window = duration - warmup;
    let utilization = result
        .busy
        .keys()
        .map(|&n| {
            let u = result.busy_time_within(n, warmup, duration) / window;
            (n, u.clamp(0.0, 1.0))
        })
        .collect();

    Ok(Aggregate {
        count: kept.len() as u64,
        latency,
        total_byte_hops,
        byte_hops_per_invocation,
        utilization,
        residual: result.residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub stddev: f64,
    /// Half-width of the 95% Student-t confidence interval.
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub replications: usize,
    /// One entry per name in [`METRIC_NAMES`].
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl ReplicationSummary {
    pub fn get(&self, metric: &str) -> Option<&MetricSummary> {
        self.metrics.get(metric)
    }
}

/// Mean, sample standard deviation and 95% half-width of one metric.
pub fn summarize(values: &[f64]) -> Result<MetricSummary, MetricsError> {
    let n = values.len();
    if n < 2 {
        return Err(MetricsError::TooFewReplications(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let stddev = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Ok(MetricSummary {
        mean,
        stddev,
        half_width: t * stddev / (n as f64).sqrt(),
    })
}

pub fn summarize_replications(
    aggregates: &[Aggregate],
) -> Result<ReplicationSummary, MetricsError> {
    if aggregates.len() < 2 {
        return Err(MetricsError::TooFewReplications(aggregates.len()));
    }
    let rows: Vec<_> = aggregates.iter().map(Aggregate::metric_values).collect();
    let mut metrics = BTreeMap::new();
    for (i, name) in METRIC_NAMES.iter().enumerate() {
        let column: Vec<f64> = rows.iter().map(|r| r[i]).collect();
        metrics.insert(name.to_string(), summarize(&column)?);
    }
    Ok(ReplicationSummary {
        replications: aggregates.len(),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::InvocationRecord;
    use crate::models::ExecutionModel;
    use crate::scheduler::{Policy, PolicyKind};

    fn result(latencies: &[(f64, f64)]) -> RunResult {
        RunResult {
            model: ExecutionModel::ClientState,
            policy: Policy::new(PolicyKind::Random),
            seed: 0,
            horizon: 100.0,
            arrivals: latencies.len() as u64,
            records: latencies
                .iter()
                .enumerate()
                .map(|(i, &(arrival, latency))| InvocationRecord {
                    id: i as u64,
                    chain: "c".into(),
                    arrival_time: arrival,
                    completion_time: arrival + latency,
                    latency,
                    byte_hops: 10,
                    executors: vec![NodeId(1)],
                    model: ExecutionModel::ClientState,
                })
                .collect(),
            residual: 0,
            busy: BTreeMap::from([(NodeId(1), vec![(0.0, 5.0), (8.0, 12.0)])]),
            trace: None,
        }
    }

    /// Smallest sample value with at least `percent`% of the sample at or
    /// below it.
    fn brute_force_percentile(values: &[f64], percent: usize) -> f64 {
        let n = values.len();
        let mut best = f64::INFINITY;
        for &v in values {
            let at_or_below = values.iter().filter(|&&x| x <= v).count();
            if at_or_below * 100 >= percent * n && v < best {
                best = v;
            }
        }
        best
    }

    #[test]
    fn three_latencies() {
        let a = aggregate(&result(&[(1.0, 3.0), (2.0, 1.0), (3.0, 2.0)]), 0.0, 10.0).unwrap();
        let lat = a.latency.unwrap();
        assert_eq!(lat.mean, 2.0);
        assert_eq!(lat.p50, 2.0);
        assert_eq!(lat.p95, 3.0);
        assert_eq!(a.total_byte_hops, 30);
        assert_eq!(a.byte_hops_per_invocation, 10.0);
    }

    #[test]
    fn single_record() {
        let a = aggregate(&result(&[(1.0, 0.25)]), 0.0, 10.0).unwrap();
        let lat = a.latency.unwrap();
        assert_eq!([lat.mean, lat.p50, lat.p95, lat.p99], [0.25; 4]);
    }

    #[test]
    fn warmup_filters_and_can_empty() {
        let r = result(&[(1.0, 1.0), (5.0, 2.0)]);
        assert_eq!(aggregate(&r, 2.0, 10.0).unwrap().count, 1);
        assert_eq!(
            aggregate(&r, 6.0, 10.0).unwrap_err(),
            MetricsError::EmptyAfterWarmup(2)
        );
        let empty = aggregate(&result(&[]), 6.0, 10.0).unwrap();
        assert_eq!(empty.count, 0);
        assert!(empty.latency.is_none());
    }

    #[test]
    fn utilization_is_windowed() {
        let r = result(&[(1.0, 1.0)]);
        // busy [0,5] and [8,12]: [0,10] sees 7 of 10 s, [1,9] sees 5 of 8 s
        let a = aggregate(&r, 0.0, 10.0).unwrap();
        assert_eq!(a.utilization[&NodeId(1)], 0.7);
        let a = aggregate(&r, 1.0, 9.0).unwrap();
        assert_eq!(a.utilization[&NodeId(1)], 5.0 / 8.0);
    }

    #[test]
    fn nearest_rank_edges() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 95), 95.0);
        assert_eq!(nearest_rank(&v, 99), 99.0);
        assert_eq!(nearest_rank(&v, 0), 1.0);
        assert_eq!(nearest_rank(&v, 100), 100.0);
        assert_eq!(nearest_rank(&[4.0], 50), 4.0);
    }

    #[test]
    fn replication_summaries() {
        let same = summarize(&[3.0, 3.0]).unwrap();
        assert_eq!((same.stddev, same.half_width), (0.0, 0.0));

        let s = summarize(&[10.0, 14.0]).unwrap();
        assert_eq!(s.mean, 12.0);
        assert!((s.stddev - 8f64.sqrt()).abs() < 1e-12);
        // t(0.975, 1) = 12.706, so the half-width is 12.706 * 2.828 / 1.414
        assert!((s.half_width - 25.412).abs() < 1e-2, "{}", s.half_width);

        assert_eq!(
            summarize(&[1.0]).unwrap_err(),
            MetricsError::TooFewReplications(1)
        );
        let one = aggregate(&result(&[(1.0, 1.0)]), 0.0, 10.0).unwrap();
        assert!(summarize_replications(&[one]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn percentiles_match_brute_force(values in proptest::collection::vec(0.0f64..100.0, 1..300)) {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            for p in [50u32, 95, 99] {
                proptest::prop_assert_eq!(nearest_rank(&sorted, p), brute_force_percentile(&values, p as usize));
            }
        }

        #[test]
        fn aggregate_is_permutation_invariant(
            lat in proptest::collection::vec((0.0f64..10.0, 0.0f64..5.0), 1..50),
            rot in 0usize..50,
        ) {
            let mut shifted = lat.clone();
            let k = rot % shifted.len();
            shifted.rotate_left(k);
            shifted.reverse();
            let a = aggregate(&result(&lat), 0.0, 20.0).unwrap();
            let b = aggregate(&result(&shifted), 0.0, 20.0).unwrap();
            let (la, lb) = (a.latency.unwrap(), b.latency.unwrap());
            proptest::prop_assert_eq!((la.p50, la.p95, la.p99), (lb.p50, lb.p95, lb.p99));
            proptest::prop_assert!((la.mean - lb.mean).abs() < 1e-12);
            proptest::prop_assert!(la.p50 <= la.p95 && la.p95 <= la.p99);
            proptest::prop_assert_eq!(a.total_byte_hops, b.total_byte_hops);
        }
    }
}
