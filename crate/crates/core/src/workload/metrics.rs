//! Per-transaction and per-block records plus the summaries derived from
//! them. Every summary is a pure function of the records, so exported data
//! can be re-aggregated offline and compared.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chain::{Chain, TxId, TxStatus};
use crate::contracts::{Function, Role};
use crate::state::TraceEntry;

use super::scenario::{JobOutput, ScenarioConfig, Stage};

/// Utilization at or above which a block counts as saturated.
pub const HIGH_UTILIZATION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxRecord {
    pub batch_size: u64,
    pub iteration: u64,
    pub stage: Stage,
    pub tx_id: TxId,
    pub function: Function,
    pub sender_role: Option<Role>,
    pub status: TxStatus,
    pub gas_used: u64,
    pub gas_price_gwei: f64,
    pub submit_time: f64,
    pub confirm_time: u64,
    pub mempool_time: f64,
    pub latency: f64,
    pub block_number: u64,
    pub block_gas_used: u64,
    pub block_tx_count: u64,
    pub block_size_bytes: u64,
    pub depends_on: Option<TxId>,
    /// Block that confirmed `depends_on`.
    pub dependency_block: Option<u64>,
    /// Penalty computed by this transaction, if any.
    pub penalty: Option<u64>,
}

/// Gas trace of one executed contract call.
#[derive(Debug, Clone, PartialEq)]
pub struct TxTrace {
    pub batch_size: u64,
    pub iteration: u64,
    pub tx_id: TxId,
    pub block_number: u64,
    pub gas_used: u64,
    pub calldata: Vec<u8>,
    pub entries: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub batch_size: u64,
    pub iteration: u64,
    pub slot: u64,
    pub timestamp: u64,
    pub gas_used: u64,
    pub gas_limit: u64,
    pub tx_count: u64,
    pub contract_tx_count: u64,
    pub size_bytes: u64,
}

impl BlockRecord {
    pub fn utilization(&self) -> f64 {
        self.gas_used as f64 / self.gas_limit as f64
    }
}

/// mean, spread and quantiles of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub p25: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

impl Summary {
    /// Population standard deviation; quantiles by linear interpolation.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            p25: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            p95: quantile(&sorted, 0.95),
            max: sorted[sorted.len() - 1],
        }
    }
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub function: Function,
    pub batch_size: u64,
    pub count: u64,
    pub latency: Summary,
    pub mempool_time: Summary,
    pub gas_used: Summary,
    pub gas_price_gwei: Summary,
    pub block_size_kb: Summary,
    pub block_tx_count: Summary,
    /// Distinct confirming blocks per iteration.
    pub distinct_blocks: Summary,
    pub min_distinct_blocks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SaturationSummary {
    pub blocks: u64,
    pub below_high: u64,
    pub at_or_above_high: u64,
    /// Longest run of consecutive saturated blocks within one iteration.
    pub max_consecutive_high: u64,
    pub mean_utilization: f64,
}

/// Block delays between breaches and the penalties they trigger.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DelaySummary {
    /// Breach and penalty pairs, including penalties computed inside the
    /// breach transaction itself (delay 0).
    pub pairs: u64,
    /// Pairs with a delay of at least one block. The statistics below are
    /// over these only.
    pub delayed: u64,
    pub mean_blocks: f64,
    pub median_blocks: f64,
    pub p90_blocks: f64,
    pub max_blocks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub unconfirmed: u64,
    pub transactions: Vec<TxRecord>,
    pub blocks: Vec<BlockRecord>,
    pub aggregates: Vec<Aggregate>,
    pub saturation: SaturationSummary,
    pub delays: DelaySummary,
    /// Filled only when the scenario records traces.
    #[serde(skip)]
    pub traces: Vec<TxTrace>,
}

impl MetricsReport {
    /// Builds a report with all summaries recomputed from the records.
    pub fn from_records(
        scenario: String,
        seed: u64,
        unconfirmed: u64,
        transactions: Vec<TxRecord>,
        blocks: Vec<BlockRecord>,
    ) -> Self {
        Self {
            aggregates: aggregate(&transactions),
            saturation: saturation_stats(&blocks),
            delays: dependent_delay_stats(&transactions),
            scenario,
            seed,
            unconfirmed,
            transactions,
            blocks,
            traces: Vec::new(),
        }
    }

    pub fn aggregate_for(&self, function: Function, batch_size: u64) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.function == function && a.batch_size == batch_size)
    }
}

pub(crate) fn assemble(config: &ScenarioConfig, outputs: Vec<JobOutput>) -> MetricsReport {
    let mut transactions = Vec::new();
    let mut blocks = Vec::new();
    let mut traces = Vec::new();
    let mut unconfirmed = 0;
    for out in outputs {
        transactions.extend(out.transactions);
        blocks.extend(out.blocks);
        traces.extend(out.traces);
        unconfirmed += out.unconfirmed;
    }
    let mut report = MetricsReport::from_records(
        config.name.clone(),
        config.seed,
        unconfirmed,
        transactions,
        blocks,
    );
    report.traces = traces;
    report
}

pub(crate) fn job_records(
    chain: &Chain,
    batch: u64,
    iteration: u64,
    first_slot: u64,
    tracked: &[(Stage, TxId)],
    unconfirmed: u64,
) -> JobOutput {
    let blocks: BTreeMap<u64, _> = chain.blocks().iter().map(|b| (b.slot_number, b)).collect();
    let mut transactions = Vec::with_capacity(tracked.len());
    for (stage, tx_id) in tracked {
        let Some(receipt) = chain.receipt(*tx_id) else {
            continue;
        };
        let Some(function) = receipt.function else {
            continue;
        };
        let block = blocks[&receipt.block_number];
        transactions.push(TxRecord {
            batch_size: batch,
            iteration,
            stage: *stage,
            tx_id: *tx_id,
            function,
            sender_role: chain.dapp().role_of(&receipt.sender),
            status: receipt.status,
            gas_used: receipt.gas_used,
            gas_price_gwei: receipt.priority_fee_gwei,
            submit_time: receipt.submit_time,
            confirm_time: receipt.block_timestamp,
            mempool_time: receipt.mempool_time,
            latency: receipt.latency,
            block_number: receipt.block_number,
            block_gas_used: block.gas_used,
            block_tx_count: block.transactions.len() as u64,
            block_size_bytes: block.byte_size,
            depends_on: receipt.depends_on,
            dependency_block: receipt
                .depends_on
                .and_then(|d| chain.receipt(d))
                .map(|r| r.block_number),
            penalty: receipt.penalty.map(|p| p as u64),
        });
    }
    transactions.sort_by_key(|r| r.tx_id);
    let traces = transactions
        .iter()
        .filter_map(|r| {
            chain.execution(r.tx_id).map(|exec| TxTrace {
                batch_size: batch,
                iteration,
                tx_id: r.tx_id,
                block_number: r.block_number,
                gas_used: exec.gas_used,
                calldata: exec.calldata.clone(),
                entries: exec.trace.clone(),
            })
        })
        .collect();
    let blocks = chain
        .blocks()
        .iter()
        .filter(|b| b.slot_number >= first_slot)
        .map(|b| BlockRecord {
            batch_size: batch,
            iteration,
            slot: b.slot_number,
            timestamp: b.timestamp,
            gas_used: b.gas_used,
            gas_limit: b.gas_limit,
            tx_count: b.transactions.len() as u64,
            contract_tx_count: b.contract_tx_count as u64,
            size_bytes: b.byte_size,
        })
        .collect();
    JobOutput {
        transactions,
        blocks,
        traces,
        unconfirmed,
    }
}

/// Per (function, batch size) summaries, ordered by function then batch.
pub fn aggregate(records: &[TxRecord]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(Function, u64), Vec<&TxRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.function, r.batch_size))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((function, batch_size), rows)| {
            let col = |f: fn(&TxRecord) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let mut per_iteration: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
            for r in &rows {
                per_iteration
                    .entry(r.iteration)
                    .or_default()
                    .push(r.block_number);
            }
            let distinct: Vec<f64> = per_iteration
                .into_values()
                .map(|mut b| {
                    b.sort_unstable();
                    b.dedup();
                    b.len() as f64
                })
                .collect();
            Aggregate {
                function,
                batch_size,
                count: rows.len() as u64,
                latency: Summary::of(&col(|r| r.latency)),
                mempool_time: Summary::of(&col(|r| r.mempool_time)),
                gas_used: Summary::of(&col(|r| r.gas_used as f64)),
                gas_price_gwei: Summary::of(&col(|r| r.gas_price_gwei)),
                block_size_kb: Summary::of(&col(|r| r.block_size_bytes as f64 / 1024.0)),
                block_tx_count: Summary::of(&col(|r| r.block_tx_count as f64)),
                min_distinct_blocks: distinct.iter().cloned().fold(f64::INFINITY, f64::min) as u64,
                distinct_blocks: Summary::of(&distinct),
            }
        })
        .collect()
}

pub fn saturation_stats(blocks: &[BlockRecord]) -> SaturationSummary {
    if blocks.is_empty() {
        return SaturationSummary::default();
    }
    let mut out = SaturationSummary {
        blocks: blocks.len() as u64,
        ..Default::default()
    };
    let mut run = 0;
    let mut prev: Option<(u64, u64, u64)> = None;
    for b in blocks {
        let key = (b.batch_size, b.iteration, b.slot);
        let contiguous = prev.is_some_and(|(pb, pi, ps)| {
            pb == b.batch_size && pi == b.iteration && ps + 1 == b.slot
        });
        if b.utilization() >= HIGH_UTILIZATION {
            out.at_or_above_high += 1;
            run = if contiguous { run + 1 } else { 1 };
            out.max_consecutive_high = out.max_consecutive_high.max(run);
        } else {
            out.below_high += 1;
            run = 0;
        }
        prev = Some(key);
    }
    out.mean_utilization =
        blocks.iter().map(BlockRecord::utilization).sum::<f64>() / blocks.len() as f64;
    out
}

/// Delay of each penalty in blocks: penalty block minus breach block.
pub fn dependent_delay_stats(records: &[TxRecord]) -> DelaySummary {
    let mut delays: Vec<u64> = records
        .iter()
        .filter_map(|r| match (r.function, r.dependency_block) {
            (Function::CalculatePenalty, Some(parent)) => {
                Some(r.block_number.saturating_sub(parent))
            }
            (Function::RegisterBreach, _) if r.penalty.is_some() => Some(0),
            _ => None,
        })
        .collect();
    let pairs = delays.len() as u64;
    delays.retain(|d| *d > 0);
    if delays.is_empty() {
        return DelaySummary {
            pairs,
            ..Default::default()
        };
    }
    let mut sorted: Vec<f64> = delays.iter().map(|d| *d as f64).collect();
    sorted.sort_by(f64::total_cmp);
    DelaySummary {
        pairs,
        delayed: delays.len() as u64,
        mean_blocks: sorted.iter().sum::<f64>() / sorted.len() as f64,
        median_blocks: quantile(&sorted, 0.5),
        p90_blocks: quantile(&sorted, 0.9),
        max_blocks: delays.iter().copied().max().unwrap_or(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert!((quantile(&v, 0.95) - 3.85).abs() < 1e-12);
        assert_eq!(quantile(&[7.0], 0.9), 7.0);
        let s = Summary::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(s.mean, 5.0);
        assert_eq!(s.std, 2.0);
        assert_eq!(s.max, 9.0);
    }

    fn block(iteration: u64, slot: u64, gas_used: u64) -> BlockRecord {
        BlockRecord {
            batch_size: 1,
            iteration,
            slot,
            timestamp: slot * 12,
            gas_used,
            gas_limit: 100,
            tx_count: 1,
            contract_tx_count: 0,
            size_bytes: 0,
        }
    }

    #[test]
    fn saturation_runs_stop_at_iteration_boundaries() {
        let blocks = [
            block(0, 1, 90),
            block(0, 2, 80),
            block(0, 3, 79),
            block(0, 4, 95),
            block(1, 5, 95),
            block(1, 6, 95),
        ];
        let s = saturation_stats(&blocks);
        assert_eq!(s.blocks, 6);
        assert_eq!(s.at_or_above_high, 5);
        assert_eq!(s.below_high, 1);
        assert_eq!(s.max_consecutive_high, 2);
    }

    fn tx(
        function: Function,
        block: u64,
        dependency_block: Option<u64>,
        penalty: Option<u64>,
    ) -> TxRecord {
        TxRecord {
            batch_size: 2,
            iteration: 0,
            stage: Stage::Breach,
            tx_id: block,
            function,
            sender_role: Some(Role::Provider),
            status: TxStatus::Success,
            gas_used: 1,
            gas_price_gwei: 1.0,
            submit_time: 0.0,
            confirm_time: block * 12,
            mempool_time: 0.0,
            latency: 0.0,
            block_number: block,
            block_gas_used: 1,
            block_tx_count: 1,
            block_size_bytes: 1,
            depends_on: dependency_block.map(|_| 0),
            dependency_block,
            penalty,
        }
    }

    #[test]
    fn delay_is_penalty_block_minus_breach_block() {
        let records = [
            tx(Function::RegisterBreach, 100, None, None),
            tx(Function::CalculatePenalty, 105, Some(100), Some(3)),
            tx(Function::CalculatePenalty, 102, Some(101), Some(3)),
        ];
        let d = dependent_delay_stats(&records);
        assert_eq!((d.pairs, d.delayed, d.max_blocks), (2, 2, 5));
        assert_eq!(d.mean_blocks, 3.0);
    }

    #[test]
    fn inline_penalties_are_zero_delay_pairs() {
        let records = [
            tx(Function::RegisterBreach, 7, None, Some(1)),
            tx(Function::RegisterBreach, 8, None, Some(2)),
        ];
        let d = dependent_delay_stats(&records);
        assert_eq!(d.pairs, 2);
        assert_eq!(d.delayed, 0);
        assert_eq!(d.mean_blocks, 0.0);
    }

    #[test]
    fn all_empty_blocks_are_below_threshold() {
        let blocks: Vec<BlockRecord> = (1..=10).map(|s| block(0, s, 0)).collect();
        let s = saturation_stats(&blocks);
        assert_eq!(s.below_high, 10);
        assert_eq!(s.at_or_above_high, 0);
    }

    proptest! {
        #[test]
        fn summary_is_ordered(values in prop::collection::vec(-1e6f64..1e6, 1..60)) {
            let s = Summary::of(&values);
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(min <= s.p25 && s.p25 <= s.median && s.median <= s.p95 && s.p95 <= s.max);
            prop_assert!(s.std >= 0.0);
        }

        #[test]
        fn saturation_counts_partition(utils in prop::collection::vec(0u64..=100, 0..50)) {
            let blocks: Vec<BlockRecord> = utils.iter().enumerate().map(|(i, u)| block(0, i as u64 + 1, *u)).collect();
            let s = saturation_stats(&blocks);
            prop_assert_eq!(s.below_high + s.at_or_above_high, s.blocks);
            prop_assert!(s.max_consecutive_high <= s.at_or_above_high);
        }
    }
}
