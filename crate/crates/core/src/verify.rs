//! Built-in gas delta checks against the anchored reference figures.
//!
//! Every measured call is also recomputed from its access trace with an
//! independent pricing routine, so a check passes only when the meter and
//! the trace agree and the delta matches the reference exactly.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::contracts::{BlockEnv, ContractConfig, Dapp, Execution, LayoutMode, Role};
use crate::schedule::GasSchedule;
use crate::state::{AccessKind, Account, TraceEntry};

pub const INIT_DELTA: i64 = 17_100;
pub const BYTE_DELTA: i64 = 12;
pub const INDEX_DELTA: i64 = 140;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Initialization,
    CalldataByte,
    IndexTraversal,
    Ordering,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Initialization => "17100-family",
            Family::CalldataByte => "12-per-byte",
            Family::IndexTraversal => "140-per-index",
            Family::Ordering => "ordering",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaCheck {
    pub name: &'static str,
    pub family: Family,
    /// For ordering checks: the required sign, 1 meaning "positive".
    pub expected: i64,
    pub actual: i64,
    /// Meter and trace recomputation agreed for every call involved.
    pub trace_consistent: bool,
    pub passed: bool,
    pub note: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub layout: LayoutMode,
    pub checks: Vec<DeltaCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &DeltaCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<34} {:<14} {:>10} {:>10}  {:<6} status",
            "check", "family", "expected", "actual", "trace"
        )?;
        for c in &self.checks {
            let expected = match c.family {
                Family::Ordering => "> 0".to_string(),
                _ => c.expected.to_string(),
            };
            write!(
                f,
                "{:<34} {:<14} {:>10} {:>10}  {:<6} {}",
                c.name,
                c.family.name(),
                expected,
                c.actual,
                if c.trace_consistent { "ok" } else { "MISMATCH" },
                if c.passed { "PASS" } else { "FAIL" },
            )?;
            if let Some(note) = c.note {
                write!(f, " ({note})")?;
            }
            writeln!(f)?;
        }
        let failed = self.failures().count();
        write!(
            f,
            "{} of {} checks passed",
            self.checks.len() - failed,
            self.checks.len()
        )
    }
}

/// Recomputes a call's gas purely from its trace facts.
///
/// Prices each entry from first principles (transition, temperature, byte
/// counts) instead of trusting the per-entry gas the meter recorded.
pub fn recompute_from_trace(schedule: &GasSchedule, calldata: &[u8], trace: &[TraceEntry]) -> u64 {
    let zeros = calldata.iter().filter(|b| **b == 0).count() as u64;
    let nonzeros = calldata.len() as u64 - zeros;
    let mut total = 0;
    for entry in trace {
        total += match entry {
            TraceEntry::Intrinsic { .. } => schedule.tx_intrinsic,
            TraceEntry::Calldata { .. } => {
                zeros * schedule.calldata_zero_byte + nonzeros * schedule.calldata_nonzero_byte
            }
            TraceEntry::Access {
                kind: AccessKind::Read,
                cold,
                ..
            } => schedule.sload_warm + if *cold { schedule.sload_cold } else { 0 },
            TraceEntry::Access {
                cold,
                before,
                after,
                ..
            } => {
                let transition = if before == after {
                    schedule.sstore_noop
                } else if before.is_zero() {
                    schedule.sstore_set
                } else {
                    schedule.sstore_reset
                };
                transition
                    + if *cold {
                        schedule.sstore_cold_surcharge
                    } else {
                        0
                    }
            }
            TraceEntry::Log { event, .. } => {
                schedule.log_base
                    + schedule.log_topic * event.topic_count
                    + schedule.log_data_byte * event.data_length
            }
            TraceEntry::Traversal { levels, .. } => levels * schedule.traversal_per_index,
            TraceEntry::Overhead { function, .. } => schedule.overhead(function),
        };
    }
    total
}

fn consistent(schedule: &GasSchedule, exec: &Execution) -> bool {
    recompute_from_trace(schedule, &exec.calldata, &exec.trace) == exec.gas_used
}

struct Bench {
    dapp: Dapp,
    block: u64,
    consistent: bool,
}

impl Bench {
    fn new(schedule: &GasSchedule, layout: LayoutMode) -> Self {
        let config = ContractConfig {
            layout,
            ..ContractConfig::default()
        };
        Self {
            dapp: Dapp::new(config, Arc::new(schedule.clone())),
            block: 0,
            consistent: true,
        }
    }

    fn env(&mut self) -> BlockEnv {
        self.block += 1;
        BlockEnv::at(self.block, self.block * 12)
    }

    fn gas(&mut self, exec: Execution) -> i64 {
        self.consistent &= consistent(self.dapp.schedule(), &exec);
        exec.gas_used as i64
    }

    fn register(&mut self, who: Account, role: Role) -> i64 {
        let env = self.env();
        let exec = self.dapp.register_ad(env, who, role).expect("registration");
        self.gas(exec)
    }

    fn add_service(&mut self, who: Account, n: u64) -> i64 {
        let env = self.env();
        let exec = self
            .dapp
            .add_service(env, who, &format!("svc-{n}"), "eu-west", 100)
            .expect("add service");
        self.gas(exec)
    }

    fn select(&mut self, consumer: Account, provider: Account, index: u64) -> i64 {
        let env = self.env();
        let exec = self
            .dapp
            .select_service(env, consumer, provider, index)
            .expect("selection");
        self.gas(exec)
    }

    fn breach(&mut self, provider: Account) -> i64 {
        let env = self.env();
        let exec = self.dapp.register_breach(env, provider, 1).expect("breach");
        self.gas(exec)
    }
}

/// Two provider addresses that differ only in one zero byte.
fn byte_pair() -> (Account, Account) {
    let dense = Account([0x5a; 20]);
    let mut sparse = dense;
    sparse.0[7] = 0;
    (sparse, dense)
}

pub fn verify_deltas(schedule: &GasSchedule, layout: LayoutMode) -> VerifyReport {
    let mut checks = Vec::new();
    let mut exact = |name, family, expected: i64, actual: i64, trace: bool, note| {
        checks.push(DeltaCheck {
            name,
            family,
            expected,
            actual,
            trace_consistent: trace,
            passed: trace && expected == actual,
            note,
        });
    };

    let p1 = Account::derived(1);
    let p2 = Account::derived(2);
    let c1 = Account::derived(3);
    let c2 = Account::derived(4);
    let (sparse, dense) = byte_pair();

    let mut b = Bench::new(schedule, layout);
    let reg_first = b.register(p1, Role::Provider);
    let reg_second = b.register(p2, Role::Provider);
    b.register(c1, Role::Consumer);
    b.register(c2, Role::Consumer);
    b.register(sparse, Role::Provider);
    b.register(dense, Role::Provider);

    let add_global_first = b.add_service(p1, 1);
    let add_provider_first = b.add_service(p2, 1);
    let add_later = b.add_service(p1, 2);
    for n in 3..=4 {
        b.add_service(p1, n);
    }
    b.add_service(sparse, 1);
    b.add_service(dense, 1);

    let sel_first = b.select(c1, p1, 2);
    let sel_later = b.select(c2, p1, 2);
    let ladder: Vec<i64> = (1..=4).map(|i| b.select(c1, p1, i)).collect();
    let sel_sparse = b.select(c1, sparse, 1);
    let sel_dense = b.select(c1, dense, 1);

    let breach_first = b.breach(p1);
    let breach_second = b.breach(p1);
    let trace = b.consistent;

    exact(
        "registration first vs later",
        Family::Initialization,
        INIT_DELTA,
        reg_first - reg_second,
        trace,
        None,
    );
    exact(
        "breach first vs later",
        Family::Initialization,
        INIT_DELTA,
        breach_first - breach_second,
        trace,
        None,
    );
    exact(
        "selection first vs later",
        Family::Initialization,
        INIT_DELTA,
        sel_first - sel_later,
        trace,
        None,
    );
    exact(
        "addService provider-first vs later",
        Family::Initialization,
        INIT_DELTA,
        add_provider_first - add_later,
        trace,
        None,
    );
    exact(
        "addService global-first vs later",
        Family::Initialization,
        2 * INIT_DELTA,
        add_global_first - add_later,
        trace,
        None,
    );
    exact(
        "selection address zero byte",
        Family::CalldataByte,
        BYTE_DELTA,
        sel_dense - sel_sparse,
        trace,
        None,
    );
    let (index_expected, note) = match layout {
        LayoutMode::Nested => (INDEX_DELTA, None),
        LayoutMode::Flattened => (0, Some("no per-level cost in flattened layout, expected")),
    };
    for (k, pair) in ladder.windows(2).enumerate() {
        let name = [
            "selection index 2 vs 1",
            "selection index 3 vs 2",
            "selection index 4 vs 3",
        ][k];
        exact(
            name,
            Family::IndexTraversal,
            index_expected,
            pair[1] - pair[0],
            trace,
            note,
        );
    }

    for (name, delta) in [
        ("registration first > later", reg_first - reg_second),
        ("addService first > later", add_provider_first - add_later),
        ("selection first > later", sel_first - sel_later),
        ("breach first > later", breach_first - breach_second),
    ] {
        checks.push(DeltaCheck {
            name,
            family: Family::Ordering,
            expected: 1,
            actual: delta,
            trace_consistent: trace,
            passed: trace && delta > 0,
            note: None,
        });
    }

    VerifyReport { layout, checks }
}
