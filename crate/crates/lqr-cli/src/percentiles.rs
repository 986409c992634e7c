//! Nearest-rank percentile aggregation of metric records.

use std::collections::BTreeMap;

use crate::output::MetricRecord;

pub const DEFAULT_QUANTILES: [f64; 3] = [0.1, 0.5, 0.9];

/// One aggregated row: a quantile of `metric` over trials at `(algorithm, step)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub step: usize,
    pub metric: String,
    pub quantile: f64,
    pub value: f64,
}

/// Nearest-rank quantile of a sorted slice: the `ceil(q n)`-th smallest
/// element (1-indexed), clamped to the ends.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Groups records by `(algorithm, step, metric)` and reports the requested
/// quantiles per group, in deterministic (sorted) order. `failure` records
/// are excluded from value quantiles and surfaced as a `failure_count` row.
pub fn aggregate(records: &[MetricRecord], quantiles: &[f64]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize, String), Vec<f64>> = BTreeMap::new();
    let mut failures: BTreeMap<(String, usize), usize> = BTreeMap::new();
    for rec in records {
        if rec.metric == "failure" {
            *failures.entry((rec.algorithm.clone(), rec.step)).or_default() += 1;
        } else {
            groups
                .entry((rec.algorithm.clone(), rec.step, rec.metric.clone()))
                .or_default()
                .push(rec.value);
        }
    }

    let mut rows = Vec::new();
    for ((algorithm, step, metric), mut values) in groups {
        values.sort_by(f64::total_cmp);
        for &q in quantiles {
            rows.push(SummaryRow {
                algorithm: algorithm.clone(),
                step,
                metric: metric.clone(),
                quantile: q,
                value: nearest_rank(&values, q),
            });
        }
    }
    for ((algorithm, step), count) in failures {
        rows.push(SummaryRow {
            algorithm,
            step,
            metric: "failure_count".into(),
            quantile: 1.0,
            value: count as f64,
        });
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_on_1_to_100() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&values, 0.1), 10.0);
        assert_eq!(nearest_rank(&values, 0.5), 50.0);
        assert_eq!(nearest_rank(&values, 0.9), 90.0);
    }

    #[test]
    fn single_value_is_every_quantile() {
        for q in DEFAULT_QUANTILES {
            assert_eq!(nearest_rank(&[7.5], q), 7.5);
        }
    }

    #[test]
    fn aggregate_groups_and_sorts() {
        let recs: Vec<MetricRecord> = (0..100)
            .map(|trial| MetricRecord {
                algorithm: "alg".into(),
                trial,
                step: 10,
                metric: "rel_cost_err".into(),
                value: (100 - trial) as f64,
            })
            .collect();
        let rows = aggregate(&recs, &DEFAULT_QUANTILES);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].value, 10.0);
        assert_eq!(rows[1].value, 50.0);
        assert_eq!(rows[2].value, 90.0);
    }

    #[test]
    fn failures_become_counts() {
        let recs = vec![
            MetricRecord {
                algorithm: "alg".into(),
                trial: 0,
                step: 5,
                metric: "failure".into(),
                value: 1.0,
            },
            MetricRecord {
                algorithm: "alg".into(),
                trial: 1,
                step: 5,
                metric: "failure".into(),
                value: 1.0,
            },
        ];
        let rows = aggregate(&recs, &DEFAULT_QUANTILES);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].metric, "failure_count");
        assert_eq!(rows[0].value, 2.0);
    }
}
