//! Experiment definitions and the driver that runs them.
//!
//! Each (batch size, iteration) pair runs on a fresh chain. The workflow
//! stages execute in order; a stage's transactions are all submitted at
//! once (with jitter) and the next stage starts only after every one of
//! them, including generated penalty follow-ups, has a receipt.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{BackgroundLoad, Chain, ChainConfig, Packing, TxId, TxRequest};
use crate::config;
use crate::contracts::{Call, ContractConfig, Dapp, LayoutMode, PenaltyPolicy, Role};
use crate::error::{ConfigError, SimError};
use crate::schedule::GasSchedule;
use crate::state::Account;

use super::metrics::{self, BlockRecord, MetricsReport, TxRecord, TxTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Register,
    AddService,
    Select,
    Breach,
    Transfer,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Register => "register",
            Stage::AddService => "add-service",
            Stage::Select => "select",
            Stage::Breach => "breach",
            Stage::Transfer => "transfer",
        }
    }
}

/// How submit times are spread within a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Jitter {
    /// Everything at the stage start.
    Burst,
    /// Uniform over one slot interval.
    #[default]
    Uniform,
    /// Uniform over 60 seconds.
    Staggered,
}

impl Jitter {
    fn window(self, slot_interval: u64) -> f64 {
        match self {
            Jitter::Burst => 0.0,
            Jitter::Uniform => slot_interval as f64,
            Jitter::Staggered => 60.0,
        }
    }
}

impl std::str::FromStr for Jitter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "burst" => Ok(Jitter::Burst),
            "uniform" => Ok(Jitter::Uniform),
            "staggered" => Ok(Jitter::Staggered),
            other => Err(format!(
                "unknown jitter `{other}` (expected burst, uniform or staggered)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeePolicy {
    pub base_priority_gwei: f64,
    /// Added to generated penalty transactions.
    pub urgent_bump_gwei: f64,
}

impl Default for FeePolicy {
    fn default() -> Self {
        Self {
            base_priority_gwei: 1.0,
            urgent_bump_gwei: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub stages: Vec<Stage>,
    pub batch_sizes: Vec<u64>,
    /// Fraction of each batch registered as providers.
    pub role_split: f64,
    pub services_per_provider: u64,
    pub breaches_per_provider: u64,
    pub iterations: u64,
    pub layout: LayoutMode,
    pub policy: PenaltyPolicy,
    pub fidelity_fee: u64,
    pub max_breach: u64,
    pub fee_policy: FeePolicy,
    pub jitter: Jitter,
    pub seed: u64,
    pub background: BackgroundLoad,
    pub slot_interval: u64,
    pub gas_limit: u64,
    pub packing: Packing,
    pub selection_lead: f64,
    pub dependent_delay: f64,
    pub warmup_slots: u64,
    pub max_slots_per_stage: u64,
    pub initial_balance: u64,
    pub settlement_amount: u64,
    /// Keep per-call gas traces for the trace dump.
    pub record_traces: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let chain = ChainConfig::default();
        Self {
            name: "custom".into(),
            stages: vec![Stage::Register],
            batch_sizes: vec![2],
            role_split: 0.5,
            services_per_provider: 1,
            breaches_per_provider: 3,
            iterations: 10,
            layout: LayoutMode::Nested,
            policy: PenaltyPolicy::Threshold,
            fidelity_fee: 1,
            max_breach: 3,
            fee_policy: FeePolicy::default(),
            jitter: Jitter::Uniform,
            seed: 42,
            background: BackgroundLoad::ambient(),
            slot_interval: chain.slot_interval,
            gas_limit: chain.gas_limit,
            packing: chain.packing,
            selection_lead: chain.selection_lead,
            dependent_delay: chain.dependent_delay,
            warmup_slots: 40,
            max_slots_per_stage: 400,
            initial_balance: 1_000_000,
            settlement_amount: 100,
            record_traces: false,
        }
    }
}

/// Names accepted by [`ScenarioConfig::preset`].
pub const SCENARIO_PRESETS: &[&str] = &[
    "registration-sweep",
    "addservice-sweep",
    "selection-sweep",
    "breach-penalty",
    "saturation-stress",
];

fn step_range(from: u64, to: u64, step: u64) -> Vec<u64> {
    (from..=to).step_by(step as usize).collect()
}

const FULL_WORKFLOW: [Stage; 5] = [
    Stage::Register,
    Stage::AddService,
    Stage::Select,
    Stage::Breach,
    Stage::Transfer,
];

impl ScenarioConfig {
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let base = Self {
            name: name.to_string(),
            ..Self::default()
        };
        let config = match name {
            "registration-sweep" => Self {
                batch_sizes: step_range(2, 100, 14),
                ..base
            },
            "addservice-sweep" => Self {
                stages: vec![Stage::Register, Stage::AddService],
                batch_sizes: step_range(2, 50, 8),
                role_split: 1.0,
                ..base
            },
            "selection-sweep" => Self {
                stages: vec![Stage::Register, Stage::AddService, Stage::Select],
                batch_sizes: step_range(2, 100, 14),
                services_per_provider: 5,
                ..base
            },
            "breach-penalty" => Self {
                stages: FULL_WORKFLOW.to_vec(),
                batch_sizes: step_range(2, 50, 8),
                ..base
            },
            "saturation-stress" => Self {
                stages: FULL_WORKFLOW.to_vec(),
                batch_sizes: vec![50, 100],
                iterations: 5,
                jitter: Jitter::Burst,
                background: BackgroundLoad {
                    arrival_rate: 125.0,
                    ..BackgroundLoad::ambient()
                },
                ..base
            },
            other => {
                return Err(ConfigError::UnknownPreset {
                    kind: "scenario",
                    name: other.to_string(),
                })
            }
        };
        Ok(config)
    }

    /// Loads a TOML scenario file. `preset = "<name>"` at the top selects
    /// the base that the remaining keys override.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        config::load(path, Self::preset, Self::default)
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        config::overlay(text, Self::preset, Self::default)
    }

    /// A preset name, or else a path to a scenario file.
    pub fn resolve(name_or_path: &str) -> Result<Self, ConfigError> {
        if SCENARIO_PRESETS.contains(&name_or_path) {
            Self::preset(name_or_path)
        } else {
            Self::from_file(Path::new(name_or_path))
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| {
            Err(ConfigError::Invalid(format!(
                "scenario `{}`: {msg}",
                self.name
            )))
        };
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return fail("batch sizes must be non-empty and at least 1".into());
        }
        if self.stages.is_empty() {
            return fail("at least one stage is required".into());
        }
        if !(0.0..=1.0).contains(&self.role_split) {
            return fail("role_split must lie in [0, 1]".into());
        }
        if !(1..=5).contains(&self.services_per_provider) {
            return fail("services_per_provider must be between 1 and 5".into());
        }
        if self.iterations == 0 || self.max_slots_per_stage == 0 {
            return fail("iterations and max_slots_per_stage must be at least 1".into());
        }
        if self.stages.contains(&Stage::Breach) && self.breaches_per_provider == 0 {
            return fail(
                "breaches_per_provider must be at least 1 when the breach stage runs".into(),
            );
        }
        if self.stages.contains(&Stage::Transfer) && self.settlement_amount == 0 {
            return fail("settlement_amount must be nonzero when the transfer stage runs".into());
        }
        if !(self.fee_policy.base_priority_gwei >= 0.0 && self.fee_policy.urgent_bump_gwei >= 0.0) {
            return fail("fees must be non-negative".into());
        }
        let mut seen = Vec::new();
        for stage in &self.stages {
            if let Some(last) = seen.last() {
                if stage <= last {
                    return fail("stages must be distinct and in workflow order".into());
                }
            }
            seen.push(*stage);
        }
        let needs =
            |s: Stage, before: Stage| self.stages.contains(&s) && !self.stages.contains(&before);
        if needs(Stage::AddService, Stage::Register)
            || needs(Stage::Select, Stage::AddService)
            || needs(Stage::Breach, Stage::Register)
            || needs(Stage::Transfer, Stage::Select)
        {
            return fail("stage list skips a prerequisite stage".into());
        }
        self.chain_config(0)
            .validate()
            .map_err(|msg| ConfigError::Invalid(format!("scenario `{}`: {msg}", self.name)))
    }

    pub fn contract_config(&self) -> ContractConfig {
        ContractConfig {
            layout: self.layout,
            policy: self.policy,
            fidelity_fee: self.fidelity_fee.into(),
            max_breach: self.max_breach,
        }
    }

    pub fn chain_config(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            slot_interval: self.slot_interval,
            gas_limit: self.gas_limit,
            background: self.background.clone(),
            packing: self.packing,
            seed,
            selection_lead: self.selection_lead,
            dependent_delay: self.dependent_delay,
            follow_up_bump_gwei: self.fee_policy.urgent_bump_gwei,
            record_traces: self.record_traces,
            ..ChainConfig::default()
        }
    }

    /// Roles are interleaved so that each batch's account list is a prefix
    /// of every larger batch's list.
    pub fn is_provider(&self, account_index: u64) -> bool {
        let at = |k: u64| (k as f64 * self.role_split).round() as u64;
        at(account_index + 1) > at(account_index)
    }
}

/// Output of one (batch, iteration) run.
#[derive(Debug, Clone)]
pub struct JobOutput {
    pub transactions: Vec<TxRecord>,
    pub blocks: Vec<BlockRecord>,
    pub traces: Vec<TxTrace>,
    pub unconfirmed: u64,
}

/// SplitMix64 finalizer; decorrelates per-job seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Chain seed for one iteration. It does not depend on the batch size, so
/// every batch of an iteration sees the same background traffic.
pub fn job_seed(seed: u64, iteration: u64) -> u64 {
    mix(mix(seed) ^ iteration)
}

fn submit_offset(seed: u64, stage: Stage, stream: u64, window: f64) -> f64 {
    if window <= 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ (stage as u64 + 1)));
    rng.set_stream(stream);
    rng.random::<f64>() * window
}

pub fn run_scenario(
    config: &ScenarioConfig,
    schedule: &GasSchedule,
) -> Result<MetricsReport, SimError> {
    config.validate()?;
    schedule.validate()?;
    let schedule = Arc::new(schedule.clone());
    let jobs: Vec<(u64, u64)> = config
        .batch_sizes
        .iter()
        .flat_map(|b| (0..config.iterations).map(move |i| (*b, i)))
        .collect();
    let outputs = jobs
        .par_iter()
        .map(|(batch, iteration)| run_job(config, &schedule, *batch, *iteration))
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(metrics::assemble(config, outputs))
}

pub fn run_job(
    config: &ScenarioConfig,
    schedule: &Arc<GasSchedule>,
    batch: u64,
    iteration: u64,
) -> Result<JobOutput, SimError> {
    let seed = job_seed(config.seed, iteration);
    let mut dapp = Dapp::new(config.contract_config(), schedule.clone());
    let mut providers = Vec::new();
    let mut consumers = Vec::new();
    for k in 0..batch {
        if config.is_provider(k) {
            providers.push((k, Account::derived(k)));
        } else {
            dapp.fund(Account::derived(k), config.initial_balance.into());
            consumers.push((k, Account::derived(k)));
        }
    }
    let mut chain = Chain::with_dapp(config.chain_config(seed), dapp);

    if config.warmup_slots > 0 {
        chain.advance(config.warmup_slots)?;
    }
    let first_recorded_slot = chain.next_slot();
    let mut tracked: Vec<(Stage, TxId)> = Vec::new();
    let window = config.jitter.window(config.slot_interval);
    let mut unconfirmed = 0;

    for stage in &config.stages {
        let stage_start = chain.next_block_time().saturating_sub(config.slot_interval) as f64;
        let mut ids = HashSet::new();
        for (stream, sender, call) in stage_calls(config, *stage, batch, &providers, &consumers) {
            let id = chain.submit(TxRequest {
                sender,
                call,
                priority_fee_gwei: config.fee_policy.base_priority_gwei,
                submit_time: stage_start + submit_offset(seed, *stage, stream, window),
                depends_on: None,
            })?;
            ids.insert(id);
        }
        let mut slots = 0;
        while chain.pending_contract_txs() > 0 && slots < config.max_slots_per_stage {
            chain.advance(1)?;
            slots += 1;
        }
        unconfirmed += chain.pending_contract_txs() as u64;
        // generated follow-ups belong to the stage of their parent
        let follow_ups: Vec<TxId> = chain
            .receipts()
            .filter(|r| r.depends_on.is_some_and(|d| ids.contains(&d)))
            .map(|r| r.tx_id)
            .collect();
        let mut stage_ids: Vec<TxId> = ids.into_iter().chain(follow_ups).collect();
        stage_ids.sort_unstable();
        tracked.extend(stage_ids.into_iter().map(|id| (*stage, id)));
        if unconfirmed > 0 {
            break;
        }
    }

    Ok(metrics::job_records(
        &chain,
        batch,
        iteration,
        first_recorded_slot,
        &tracked,
        unconfirmed,
    ))
}

/// Calls of one stage as (jitter stream, sender, call). Streams are derived
/// from the account index so an account's submit offsets do not depend on
/// the batch it is in.
fn stage_calls(
    config: &ScenarioConfig,
    stage: Stage,
    batch: u64,
    providers: &[(u64, Account)],
    consumers: &[(u64, Account)],
) -> Vec<(u64, Account, Call)> {
    let services = config.services_per_provider;
    let stream = |k: u64, sub: u64| (k << 32) | sub;
    let pairing = |j: usize| -> Option<(Account, u64)> {
        if providers.is_empty() {
            return None;
        }
        let provider = providers[j % providers.len()].1;
        let index = (j / providers.len()) as u64 % services + 1;
        Some((provider, index))
    };
    match stage {
        Stage::Register => (0..batch)
            .map(|k| {
                let role = if config.is_provider(k) {
                    Role::Provider
                } else {
                    Role::Consumer
                };
                (stream(k, 0), Account::derived(k), Call::RegisterAd { role })
            })
            .collect(),
        Stage::AddService => providers
            .iter()
            .flat_map(|(k, p)| {
                (1..=services).map(move |s| {
                    (
                        stream(*k, s),
                        *p,
                        Call::AddService {
                            service_id: format!("svc-{s}"),
                            location: format!("region-{}", k % 4),
                            cost: 100 + s as u128,
                        },
                    )
                })
            })
            .collect(),
        Stage::Select => consumers
            .iter()
            .enumerate()
            .filter_map(|(j, (k, c))| {
                pairing(j).map(|(provider, service_index)| {
                    (
                        stream(*k, 0),
                        *c,
                        Call::SelectService {
                            provider,
                            service_index,
                        },
                    )
                })
            })
            .collect(),
        Stage::Breach => providers
            .iter()
            .flat_map(|(k, p)| {
                (0..config.breaches_per_provider)
                    .map(move |b| (stream(*k, b), *p, Call::RegisterBreach { num_breaches: 1 }))
            })
            .collect(),
        Stage::Transfer => consumers
            .iter()
            .enumerate()
            .filter_map(|(j, (k, c))| {
                pairing(j).map(|(provider, _)| {
                    (
                        stream(*k, 0),
                        *c,
                        Call::TransferFunds {
                            recipient: provider,
                            amount: config.settlement_amount.into(),
                        },
                    )
                })
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in SCENARIO_PRESETS {
            ScenarioConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ScenarioConfig::preset("nope").is_err());
        assert_eq!(
            ScenarioConfig::preset("registration-sweep")
                .unwrap()
                .batch_sizes,
            vec![2, 16, 30, 44, 58, 72, 86, 100]
        );
        assert_eq!(
            ScenarioConfig::preset("addservice-sweep")
                .unwrap()
                .batch_sizes,
            vec![2, 10, 18, 26, 34, 42, 50]
        );
    }

    #[test]
    fn toml_overrides_a_preset() {
        let config = ScenarioConfig::from_toml(
            "preset = \"registration-sweep\"\niterations = 2\nbatch_sizes = [4, 8]\n[background]\narrival_rate = 0.0\ngas_per_tx = { median = 1000.0, sigma = 0.1 }\n",
        )
        .unwrap();
        assert_eq!(config.name, "registration-sweep");
        assert_eq!(config.iterations, 2);
        assert_eq!(config.batch_sizes, vec![4, 8]);
        assert_eq!(config.background.arrival_rate, 0.0);
        assert_eq!(config.background.gas_per_tx.median, 1000.0);
        assert_eq!(
            config.background.fee_gwei,
            BackgroundLoad::ambient().fee_gwei
        );
    }

    #[test]
    fn toml_rejects_unknown_keys() {
        let err = ScenarioConfig::from_toml("iterations = 2\nbatchsize = 3\n").unwrap_err();
        assert!(err.contains("batchsize"), "{err}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            ScenarioConfig {
                batch_sizes: vec![0],
                ..Default::default()
            },
            ScenarioConfig {
                services_per_provider: 6,
                ..Default::default()
            },
            ScenarioConfig {
                stages: vec![Stage::Select],
                ..Default::default()
            },
            ScenarioConfig {
                stages: vec![Stage::AddService, Stage::Register],
                ..Default::default()
            },
            ScenarioConfig {
                slot_interval: 0,
                ..Default::default()
            },
        ];
        for config in bad {
            assert!(config.validate().is_err(), "{config:?}");
        }
    }

    #[test]
    fn job_seeds_differ() {
        assert_ne!(job_seed(1, 0), job_seed(1, 1));
        assert_ne!(job_seed(1, 0), job_seed(2, 0));
        assert_eq!(job_seed(7, 9), job_seed(7, 9));
    }

    #[test]
    fn roles_interleave() {
        let config = ScenarioConfig::default();
        let roles: Vec<bool> = (0..6).map(|k| config.is_provider(k)).collect();
        assert_eq!(roles, [true, false, true, false, true, false]);
        for split in [0.0, 0.25, 0.5, 0.7, 1.0] {
            let config = ScenarioConfig {
                role_split: split,
                ..Default::default()
            };
            for n in 1..40u64 {
                let count = (0..n).filter(|k| config.is_provider(*k)).count() as u64;
                assert_eq!(count, (n as f64 * split).round() as u64);
            }
        }
    }

    #[test]
    fn pairing_covers_services() {
        let config = ScenarioConfig {
            services_per_provider: 2,
            ..Default::default()
        };
        let providers = [(0, Account([1; 20])), (1, Account([2; 20]))];
        let consumers: Vec<(u64, Account)> = (0..4)
            .map(|i| (2 + i, Account([10 + i as u8; 20])))
            .collect();
        let calls = stage_calls(&config, Stage::Select, 6, &providers, &consumers);
        let picks: Vec<(Account, u64)> = calls
            .into_iter()
            .map(|(_, _, call)| match call {
                Call::SelectService {
                    provider,
                    service_index,
                } => (provider, service_index),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(
            picks,
            vec![
                (providers[0].1, 1),
                (providers[1].1, 1),
                (providers[0].1, 2),
                (providers[1].1, 2)
            ]
        );
    }
}
