//! CSV and JSON writers. Columns are fixed, floats carry six decimals and
//! nothing time- or host-dependent is written, so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::chain::TxStatus;
use crate::contracts::Role;
use crate::error::SimError;
use crate::state::{AccessKind, TraceEntry};

use super::metrics::{Aggregate, MetricsReport, Summary, TxTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

pub const TRANSACTIONS_HEADER: &str = "batch_size,iteration,stage,tx_id,function,sender_role,status,gas_used,gas_price_gwei,submit_time,confirm_time,mempool_time,latency,block_number,block_gas_used,block_tx_count,block_size_bytes,depends_on,dependency_block,penalty";
pub const BLOCKS_HEADER: &str = "batch_size,iteration,slot,timestamp,gas_used,gas_limit,utilization,tx_count,contract_tx_count,size_bytes";
const SUMMARY_FIELDS: [&str; 6] = ["mean", "std", "p25", "median", "p95", "max"];
const SUMMARIES: [&str; 7] = [
    "latency",
    "mempool_time",
    "gas_used",
    "gas_price_gwei",
    "block_size_kb",
    "block_tx_count",
    "distinct_blocks",
];

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn role_name(role: Option<Role>) -> &'static str {
    match role {
        Some(Role::Provider) => "provider",
        Some(Role::Consumer) => "consumer",
        None => "",
    }
}

pub fn transactions_csv(report: &MetricsReport) -> String {
    csv_table(
        TRANSACTIONS_HEADER,
        report.transactions.iter().map(|r| {
            let status = match r.status {
                TxStatus::Success => "success",
                TxStatus::Reverted => "reverted",
            };
            vec![
                r.batch_size.to_string(),
                r.iteration.to_string(),
                r.stage.name().to_string(),
                r.tx_id.to_string(),
                r.function.name().to_string(),
                role_name(r.sender_role).to_string(),
                status.to_string(),
                r.gas_used.to_string(),
                f6(r.gas_price_gwei),
                f6(r.submit_time),
                r.confirm_time.to_string(),
                f6(r.mempool_time),
                f6(r.latency),
                r.block_number.to_string(),
                r.block_gas_used.to_string(),
                r.block_tx_count.to_string(),
                r.block_size_bytes.to_string(),
                opt(r.depends_on),
                opt(r.dependency_block),
                opt(r.penalty),
            ]
        }),
    )
}

pub fn blocks_csv(report: &MetricsReport) -> String {
    csv_table(
        BLOCKS_HEADER,
        report.blocks.iter().map(|b| {
            vec![
                b.batch_size.to_string(),
                b.iteration.to_string(),
                b.slot.to_string(),
                b.timestamp.to_string(),
                b.gas_used.to_string(),
                b.gas_limit.to_string(),
                f6(b.utilization()),
                b.tx_count.to_string(),
                b.contract_tx_count.to_string(),
                b.size_bytes.to_string(),
            ]
        }),
    )
}

pub fn aggregates_header() -> String {
    let mut cols = vec!["function".to_string(), "batch_size".into(), "count".into()];
    for s in SUMMARIES {
        for f in SUMMARY_FIELDS {
            cols.push(format!("{s}_{f}"));
        }
    }
    cols.push("min_distinct_blocks".into());
    cols.join(",")
}

fn summary_cells(s: &Summary) -> [String; 6] {
    [s.mean, s.std, s.p25, s.median, s.p95, s.max].map(f6)
}

pub fn aggregates_csv(report: &MetricsReport) -> String {
    csv_table(
        &aggregates_header(),
        report.aggregates.iter().map(|a| {
            let Aggregate {
                function,
                batch_size,
                count,
                ..
            } = a;
            let mut cells = vec![
                function.name().to_string(),
                batch_size.to_string(),
                count.to_string(),
            ];
            for s in [
                &a.latency,
                &a.mempool_time,
                &a.gas_used,
                &a.gas_price_gwei,
                &a.block_size_kb,
                &a.block_tx_count,
                &a.distinct_blocks,
            ] {
                cells.extend(summary_cells(s));
            }
            cells.push(a.min_distinct_blocks.to_string());
            cells
        }),
    )
}

pub const SUMMARY_HEADER: &str = "scenario,seed,unconfirmed,blocks,blocks_below_80,blocks_at_or_above_80,max_consecutive_high,mean_utilization,delay_pairs,delay_count,delay_mean,delay_median,delay_max,delay_p90";

/// One row of run-level figures: unconfirmed count, saturation and
/// dependent-delay summaries.
pub fn summary_csv(report: &MetricsReport) -> String {
    let s = &report.saturation;
    let d = &report.delays;
    let row = vec![
        report.scenario.clone(),
        report.seed.to_string(),
        report.unconfirmed.to_string(),
        s.blocks.to_string(),
        s.below_high.to_string(),
        s.at_or_above_high.to_string(),
        s.max_consecutive_high.to_string(),
        f6(s.mean_utilization),
        d.pairs.to_string(),
        d.delayed.to_string(),
        f6(d.mean_blocks),
        f6(d.median_blocks),
        d.max_blocks.to_string(),
        f6(d.p90_blocks),
    ];
    csv_table(SUMMARY_HEADER, [row])
}

fn csv_table(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let write = |w: &mut csv::Writer<Vec<u8>>, record: &[String]| {
        w.write_record(record).expect("writing to memory");
    };
    let header: Vec<String> = header.split(',').map(str::to_string).collect();
    write(&mut writer, &header);
    for row in rows {
        write(&mut writer, &row);
    }
    let bytes = writer.into_inner().expect("flushing to memory");
    String::from_utf8(bytes).expect("cells are UTF-8")
}

fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let v = n.as_f64().unwrap_or_default();
            let rounded = (v * 1e6).round() / 1e6;
            *value = serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

pub fn report_json(report: &MetricsReport) -> String {
    let mut value = serde_json::to_value(report).expect("report serializes");
    round_floats(&mut value);
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    text
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, SimError> {
    fs::write(&path, contents).map_err(|source| SimError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes the report into `dir`, creating it if needed, and returns the
/// files written.
pub fn export(
    report: &MetricsReport,
    format: Format,
    dir: &Path,
) -> Result<Vec<PathBuf>, SimError> {
    fs::create_dir_all(dir).map_err(|source| SimError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = match format {
        Format::Csv => vec![
            write(dir.join("transactions.csv"), &transactions_csv(report))?,
            write(dir.join("blocks.csv"), &blocks_csv(report))?,
            write(dir.join("aggregates.csv"), &aggregates_csv(report))?,
            write(dir.join("summary.csv"), &summary_csv(report))?,
        ],
        Format::Json => vec![write(dir.join("report.json"), &report_json(report))?],
    };
    if !report.traces.is_empty() {
        files.push(write(dir.join("trace.csv"), &trace_csv(&report.traces))?);
    }
    Ok(files)
}

pub const TRACE_HEADER: &str = "batch_size,iteration,tx_id,block_number,entry,contract,slot,kind,cold,transition,zero_bytes,nonzero_bytes,topics,data_bytes,levels,function,gas";

/// One row per gas-charging step of every traced call. Each row carries
/// enough facts to price it again without the recorded `gas` column.
pub fn trace_csv(traces: &[TxTrace]) -> String {
    let rows = traces.iter().flat_map(|t| {
        t.entries.iter().map(move |entry| {
            let mut row = TraceRow::default();
            match entry {
                TraceEntry::Intrinsic { .. } => row.entry = "intrinsic",
                TraceEntry::Calldata {
                    zero_bytes,
                    nonzero_bytes,
                    ..
                } => {
                    row.entry = "calldata";
                    row.zero_bytes = zero_bytes.to_string();
                    row.nonzero_bytes = nonzero_bytes.to_string();
                }
                TraceEntry::Access {
                    key,
                    kind,
                    cold,
                    before,
                    after,
                    ..
                } => {
                    row.entry = "access";
                    row.contract = format!("{:?}", key.contract);
                    row.slot = key.slot.to_hex();
                    row.kind = kind.as_str();
                    row.cold = cold.to_string();
                    row.transition = match kind {
                        AccessKind::Read => "read",
                        _ if before == after => "noop",
                        _ if before.is_zero() => "set",
                        _ => "reset",
                    };
                }
                TraceEntry::Log { event, .. } => {
                    row.entry = "log";
                    row.topics = event.topic_count.to_string();
                    row.data_bytes = event.data_length.to_string();
                }
                TraceEntry::Traversal { levels, .. } => {
                    row.entry = "traversal";
                    row.levels = levels.to_string();
                }
                TraceEntry::Overhead { function, .. } => {
                    row.entry = "overhead";
                    row.function = function.clone();
                }
            }
            vec![
                t.batch_size.to_string(),
                t.iteration.to_string(),
                t.tx_id.to_string(),
                t.block_number.to_string(),
                row.entry.to_string(),
                row.contract,
                row.slot,
                row.kind.to_string(),
                row.cold,
                row.transition.to_string(),
                row.zero_bytes,
                row.nonzero_bytes,
                row.topics,
                row.data_bytes,
                row.levels,
                row.function,
                entry.gas().to_string(),
            ]
        })
    });
    csv_table(TRACE_HEADER, rows)
}

#[derive(Default)]
struct TraceRow {
    entry: &'static str,
    contract: String,
    slot: String,
    kind: &'static str,
    cold: String,
    transition: &'static str,
    zero_bytes: String,
    nonzero_bytes: String,
    topics: String,
    data_bytes: String,
    levels: String,
    function: String,
}
