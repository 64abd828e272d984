//! Discrete-slot PoS chain: a fee-ordered mempool, a greedy block builder
//! with a block gas limit, and Poisson background traffic.
//!
//! Time is measured in seconds from genesis. Slot `s` produces one block
//! with timestamp `s * slot_interval`; the builder snapshots the mempool
//! `selection_lead` seconds earlier, so only transactions submitted by then
//! are candidates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::contracts::{BlockEnv, Call, ContractConfig, Dapp, Execution, Function};
use crate::error::ChainError;
use crate::schedule::GasSchedule;
use crate::state::Account;

pub type TxId = u64;

/// Log-normal parameters given as median and shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalSpec {
    pub median: f64,
    pub sigma: f64,
}

impl LogNormalSpec {
    pub fn new(median: f64, sigma: f64) -> Self {
        Self { median, sigma }
    }

    pub fn mean(&self) -> f64 {
        self.median * (self.sigma * self.sigma / 2.0).exp()
    }

    fn distribution(&self) -> LogNormal<f64> {
        LogNormal::new(self.median.max(f64::MIN_POSITIVE).ln(), self.sigma.max(0.0))
            .expect("validated log-normal parameters")
    }

    fn is_valid(&self) -> bool {
        self.median > 0.0 && self.sigma >= 0.0 && self.median.is_finite() && self.sigma.is_finite()
    }
}

/// Ambient traffic from other users of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundLoad {
    /// Poisson mean of arrivals per slot.
    pub arrival_rate: f64,
    pub gas_per_tx: LogNormalSpec,
    pub calldata_bytes: LogNormalSpec,
    /// Priority fee in Gwei.
    pub fee_gwei: LogNormalSpec,
}

impl BackgroundLoad {
    pub fn none() -> Self {
        Self {
            arrival_rate: 0.0,
            ..Self::ambient()
        }
    }

    /// Default calibration: 120 arrivals per slot, nearly all outbidding a
    /// 1 Gwei DApp tip, filling roughly 93% of the gas limit on average.
    pub fn ambient() -> Self {
        Self {
            arrival_rate: 120.0,
            gas_per_tx: LogNormalSpec::new(195_000.0, 0.6),
            calldata_bytes: LogNormalSpec::new(900.0, 0.8),
            fee_gwei: LogNormalSpec::new(3.0, 0.5),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            return Err("background arrival_rate must be a non-negative number".into());
        }
        for (name, spec) in [
            ("gas_per_tx", &self.gas_per_tx),
            ("calldata_bytes", &self.calldata_bytes),
            ("fee_gwei", &self.fee_gwei),
        ] {
            if !spec.is_valid() {
                return Err(format!("background {name} needs median > 0 and sigma >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Packing {
    /// Skip transactions that do not fit and keep scanning.
    #[default]
    FirstFit,
    /// Stop at the first transaction that does not fit.
    StrictOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub slot_interval: u64,
    pub gas_limit: u64,
    pub background: BackgroundLoad,
    pub packing: Packing,
    pub seed: u64,
    /// Fixed per-transaction envelope counted into block size.
    pub envelope_bytes: u64,
    /// How long before the block timestamp the builder takes its snapshot.
    pub selection_lead: f64,
    /// Wait between a dependency's confirmation and the dependent's release.
    pub dependent_delay: f64,
    /// Extra Gwei on top of the parent's tip for generated follow-up calls.
    pub follow_up_bump_gwei: f64,
    /// Keep full gas traces of executed contract calls.
    pub record_traces: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            slot_interval: 12,
            gas_limit: 30_000_000,
            background: BackgroundLoad::none(),
            packing: Packing::FirstFit,
            seed: 0,
            envelope_bytes: 110,
            selection_lead: 1.0,
            dependent_delay: 0.0,
            follow_up_bump_gwei: 0.0,
            record_traces: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.slot_interval == 0 {
            return Err("slot_interval must be positive".into());
        }
        if self.gas_limit == 0 {
            return Err("gas_limit must be positive".into());
        }
        if !(self.selection_lead >= 0.0 && self.selection_lead < self.slot_interval as f64) {
            return Err("selection_lead must lie in [0, slot_interval)".into());
        }
        if !(self.dependent_delay >= 0.0 && self.follow_up_bump_gwei >= 0.0) {
            return Err("dependent_delay and follow_up_bump_gwei must be non-negative".into());
        }
        self.background.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Contract(Call),
    Background { gas: u64, calldata_len: u64 },
}

/// What a client hands to [`Chain::submit`].
#[derive(Debug, Clone, PartialEq)]
pub struct TxRequest {
    pub sender: Account,
    pub call: Call,
    pub priority_fee_gwei: f64,
    pub submit_time: f64,
    pub depends_on: Option<TxId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub tx_id: TxId,
    pub sender: Account,
    pub payload: Payload,
    pub calldata_len: u64,
    pub priority_fee_gwei: f64,
    pub gas_estimate: u64,
    pub submit_time: f64,
    pub depends_on: Option<TxId>,
}

impl Transaction {
    pub fn function(&self) -> Option<Function> {
        match &self.payload {
            Payload::Contract(call) => Some(call.function()),
            Payload::Background { .. } => None,
        }
    }

    fn priority_order(&self, other: &Self) -> Ordering {
        other
            .priority_fee_gwei
            .total_cmp(&self.priority_fee_gwei)
            .then(self.submit_time.total_cmp(&other.submit_time))
            .then(self.tx_id.cmp(&other.tx_id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxStatus {
    Success,
    Reverted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_id: TxId,
    pub function: Option<Function>,
    pub sender: Account,
    pub block_number: u64,
    pub block_timestamp: u64,
    pub gas_used: u64,
    pub priority_fee_gwei: f64,
    pub submit_time: f64,
    /// Builder snapshot time minus submit time.
    pub mempool_time: f64,
    /// Block timestamp minus submit time.
    pub latency: f64,
    pub status: TxStatus,
    pub depends_on: Option<TxId>,
    pub penalty: Option<u128>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub slot_number: u64,
    pub timestamp: u64,
    pub gas_limit: u64,
    pub transactions: Vec<TxId>,
    pub gas_used: u64,
    pub byte_size: u64,
    /// How many of `transactions` are contract calls.
    pub contract_tx_count: usize,
}

impl Block {
    pub fn utilization(&self) -> f64 {
        self.gas_used as f64 / self.gas_limit as f64
    }
}

#[derive(Debug, Clone)]
pub struct Chain {
    config: ChainConfig,
    dapp: Dapp,
    mempool: Vec<Transaction>,
    receipts: BTreeMap<TxId, Receipt>,
    executions: BTreeMap<TxId, Execution>,
    blocks: Vec<Block>,
    next_slot: u64,
    next_tx_id: TxId,
    submitted: u64,
    included: u64,
}

impl Chain {
    pub fn new(config: ChainConfig, contracts: ContractConfig, schedule: Arc<GasSchedule>) -> Self {
        Self::with_dapp(config, Dapp::new(contracts, schedule))
    }

    pub fn with_dapp(config: ChainConfig, dapp: Dapp) -> Self {
        Self {
            config,
            dapp,
            mempool: Vec::new(),
            receipts: BTreeMap::new(),
            executions: BTreeMap::new(),
            blocks: Vec::new(),
            next_slot: 1,
            next_tx_id: 0,
            submitted: 0,
            included: 0,
        }
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn dapp(&self) -> &Dapp {
        &self.dapp
    }

    pub fn dapp_mut(&mut self) -> &mut Dapp {
        &mut self.dapp
    }

    pub fn mempool(&self) -> &[Transaction] {
        &self.mempool
    }

    pub fn receipt(&self, tx_id: TxId) -> Option<&Receipt> {
        self.receipts.get(&tx_id)
    }

    pub fn receipts(&self) -> impl Iterator<Item = &Receipt> {
        self.receipts.values()
    }

    pub fn execution(&self, tx_id: TxId) -> Option<&Execution> {
        self.executions.get(&tx_id)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Slot number the next call to [`Chain::advance`] builds.
    pub fn next_slot(&self) -> u64 {
        self.next_slot
    }

    /// Timestamp of the next block to be built.
    pub fn next_block_time(&self) -> u64 {
        self.next_slot * self.config.slot_interval
    }

    pub fn pending_contract_txs(&self) -> usize {
        self.mempool
            .iter()
            .filter(|tx| matches!(tx.payload, Payload::Contract(_)))
            .count()
    }

    /// Submitted minus included; always equals the mempool size.
    pub fn outstanding(&self) -> u64 {
        self.submitted - self.included
    }

    pub fn submit(&mut self, request: TxRequest) -> Result<TxId, ChainError> {
        if let Some(dep) = request.depends_on {
            if dep >= self.next_tx_id {
                return Err(ChainError::UnknownDependency(dep));
            }
        }
        let env = BlockEnv::at(self.next_slot, self.next_block_time());
        let calldata = request.call.calldata();
        let gas_estimate = match self.dapp.prepare(env, request.sender, &request.call) {
            Ok(prepared) => prepared.gas_used(),
            // the dependency may be what makes the call valid
            Err(_) if request.depends_on.is_some() => self.reverted_gas(&calldata),
            Err(e) => return Err(ChainError::DryRun(e)),
        };
        if gas_estimate > self.config.gas_limit {
            return Err(ChainError::TxTooLarge {
                estimate: gas_estimate,
                limit: self.config.gas_limit,
            });
        }
        let tx_id = self.allocate_id();
        self.mempool.push(Transaction {
            tx_id,
            sender: request.sender,
            payload: Payload::Contract(request.call),
            calldata_len: calldata.len() as u64,
            priority_fee_gwei: request.priority_fee_gwei,
            gas_estimate,
            submit_time: request.submit_time.max(0.0),
            depends_on: request.depends_on,
        });
        Ok(tx_id)
    }

    fn allocate_id(&mut self) -> TxId {
        let id = self.next_tx_id;
        self.next_tx_id += 1;
        self.submitted += 1;
        id
    }

    fn reverted_gas(&self, calldata: &[u8]) -> u64 {
        let schedule = self.dapp.schedule();
        schedule.tx_intrinsic + schedule.calldata_cost(calldata)
    }

    /// Produces `slots` consecutive blocks, drawing background arrivals for
    /// each slot first.
    pub fn advance(&mut self, slots: u64) -> Result<Vec<Block>, ChainError> {
        if slots == 0 {
            return Err(ChainError::ZeroSlots);
        }
        let mut out = Vec::with_capacity(slots as usize);
        for _ in 0..slots {
            let slot = self.next_slot;
            self.draw_background(slot);
            out.push(self.build_block(slot));
        }
        Ok(out)
    }

    fn draw_background(&mut self, slot: u64) {
        let load = &self.config.background;
        if load.arrival_rate <= 0.0 {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(slot);
        let count = poisson_inverse(load.arrival_rate, rng.random::<f64>());
        let interval = self.config.slot_interval as f64;
        let start = (slot - 1) as f64 * interval;
        let gas_dist = load.gas_per_tx.distribution();
        let bytes_dist = load.calldata_bytes.distribution();
        let fee_dist = load.fee_gwei.distribution();
        let min_gas = self.dapp.schedule().tx_intrinsic;
        let max_gas = self.config.gas_limit;
        for _ in 0..count {
            let submit_time = start + rng.random::<f64>() * interval;
            let gas = (gas_dist.sample(&mut rng) as u64).clamp(min_gas, max_gas);
            let calldata_len = (bytes_dist.sample(&mut rng) as u64).min(128 * 1024);
            let fee = fee_dist.sample(&mut rng);
            let tx_id = self.allocate_id();
            self.mempool.push(Transaction {
                tx_id,
                sender: Account::ZERO,
                payload: Payload::Background { gas, calldata_len },
                calldata_len,
                priority_fee_gwei: fee,
                gas_estimate: gas,
                submit_time,
                depends_on: None,
            });
        }
    }

    fn is_eligible(&self, tx: &Transaction, slot: u64, snapshot: f64) -> bool {
        if tx.submit_time > snapshot {
            return false;
        }
        match tx.depends_on {
            None => true,
            Some(dep) => self.receipts.get(&dep).is_some_and(|r| {
                r.block_number < slot
                    && r.block_timestamp as f64 + self.config.dependent_delay <= snapshot
            }),
        }
    }

    /// Fills block `slot` greedily by descending tip.
    pub fn build_block(&mut self, slot: u64) -> Block {
        let interval = self.config.slot_interval;
        let timestamp = slot * interval;
        let snapshot = timestamp as f64 - self.config.selection_lead;
        let env = BlockEnv::at(slot, timestamp);
        let min_gas = self.dapp.schedule().tx_intrinsic;

        let mut order: Vec<usize> = (0..self.mempool.len())
            .filter(|i| self.is_eligible(&self.mempool[*i], slot, snapshot))
            .collect();
        order.sort_by(|a, b| self.mempool[*a].priority_order(&self.mempool[*b]));

        let mut block = Block {
            slot_number: slot,
            timestamp,
            gas_limit: self.config.gas_limit,
            transactions: Vec::new(),
            gas_used: 0,
            byte_size: 0,
            contract_tx_count: 0,
        };
        let mut taken = HashSet::new();
        let mut follow_ups = Vec::new();

        for index in order {
            let remaining = block.gas_limit - block.gas_used;
            if remaining < min_gas {
                break;
            }
            let tx = &self.mempool[index];
            let outcome = match &tx.payload {
                Payload::Background { gas, .. } => Outcome::Background(*gas),
                Payload::Contract(call) => match self.dapp.prepare(env, tx.sender, call) {
                    Ok(prepared) => Outcome::Contract(Box::new(prepared)),
                    Err(_) => Outcome::Reverted(self.reverted_gas(&call.calldata())),
                },
            };
            let gas = outcome.gas();
            if gas > remaining {
                match self.config.packing {
                    Packing::FirstFit => continue,
                    Packing::StrictOrder => break,
                }
            }

            taken.insert(index);
            let tx = &self.mempool[index];
            block.gas_used += gas;
            block.byte_size += self.config.envelope_bytes + tx.calldata_len;
            block.transactions.push(tx.tx_id);
            self.included += 1;

            let (status, penalty) = match outcome {
                Outcome::Background(_) => continue,
                Outcome::Reverted(_) => (TxStatus::Reverted, None),
                Outcome::Contract(prepared) => {
                    let execution = self.dapp.commit(*prepared);
                    if let Some(call) = execution.follow_up.clone() {
                        follow_ups.push((tx.tx_id, tx.sender, call, tx.priority_fee_gwei));
                    }
                    let penalty = execution.penalty;
                    if self.config.record_traces {
                        self.executions.insert(tx.tx_id, execution);
                    }
                    (TxStatus::Success, penalty)
                }
            };
            let tx = &self.mempool[index];
            block.contract_tx_count += 1;
            self.receipts.insert(
                tx.tx_id,
                Receipt {
                    tx_id: tx.tx_id,
                    function: tx.function(),
                    sender: tx.sender,
                    block_number: slot,
                    block_timestamp: timestamp,
                    gas_used: gas,
                    priority_fee_gwei: tx.priority_fee_gwei,
                    submit_time: tx.submit_time,
                    mempool_time: (snapshot - tx.submit_time).max(0.0),
                    latency: timestamp as f64 - tx.submit_time,
                    status,
                    depends_on: tx.depends_on,
                    penalty,
                },
            );
        }

        let mut index = 0;
        self.mempool.retain(|_| {
            let keep = !taken.contains(&index);
            index += 1;
            keep
        });

        for (parent, sender, call, fee) in follow_ups {
            let request = TxRequest {
                sender,
                call,
                priority_fee_gwei: fee + self.config.follow_up_bump_gwei,
                submit_time: timestamp as f64 + self.config.dependent_delay,
                depends_on: Some(parent),
            };
            // the generated call was validated by its parent's execution
            let _ = self.submit(request);
        }

        self.next_slot = slot + 1;
        self.blocks.push(block.clone());
        block
    }
}

enum Outcome {
    Background(u64),
    Contract(Box<crate::contracts::Prepared>),
    Reverted(u64),
}

impl Outcome {
    fn gas(&self) -> u64 {
        match self {
            Outcome::Background(gas) | Outcome::Reverted(gas) => *gas,
            Outcome::Contract(prepared) => prepared.gas_used(),
        }
    }
}

/// Poisson quantile by CDF inversion. Monotone in both `mean` and `u`, so a
/// higher rate with the same uniform never yields fewer arrivals.
pub fn poisson_inverse(mean: f64, u: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let cap = (mean + 12.0 * mean.sqrt() + 30.0) as u64;
    let ln_mean = mean.ln();
    let mut ln_p = -mean;
    let mut cumulative = 0.0;
    for k in 0..=cap {
        if k > 0 {
            ln_p += ln_mean - (k as f64).ln();
        }
        cumulative += ln_p.exp();
        if cumulative >= u {
            return k;
        }
    }
    cap
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::Role;

    fn chain(config: ChainConfig) -> Chain {
        Chain::new(
            config,
            ContractConfig::default(),
            Arc::new(GasSchedule::canonical()),
        )
    }

    fn register(sender: Account, fee: f64, at: f64) -> TxRequest {
        TxRequest {
            sender,
            call: Call::RegisterAd {
                role: Role::Consumer,
            },
            priority_fee_gwei: fee,
            submit_time: at,
            depends_on: None,
        }
    }

    fn background(c: &mut Chain, gas: u64, fee: f64, at: f64) -> TxId {
        let tx_id = c.allocate_id();
        c.mempool.push(Transaction {
            tx_id,
            sender: Account::ZERO,
            payload: Payload::Background {
                gas,
                calldata_len: 0,
            },
            calldata_len: 0,
            priority_fee_gwei: fee,
            gas_estimate: gas,
            submit_time: at,
            depends_on: None,
        });
        tx_id
    }

    #[test]
    fn orders_by_fee() {
        let mut c = chain(ChainConfig::default());
        let ids: Vec<TxId> = [5.0, 10.0, 7.0]
            .iter()
            .enumerate()
            .map(|(i, fee)| {
                c.submit(register(Account([i as u8 + 1; 20]), *fee, 0.0))
                    .unwrap()
            })
            .collect();
        let block = c.advance(1).unwrap().remove(0);
        assert_eq!(block.transactions, vec![ids[1], ids[2], ids[0]]);
        assert_eq!(c.mempool().len(), 0);
    }

    #[test]
    fn ties_break_by_submit_time_then_id() {
        let mut c = chain(ChainConfig::default());
        let late = c.submit(register(Account([1; 20]), 3.0, 5.0)).unwrap();
        let early = c.submit(register(Account([2; 20]), 3.0, 1.0)).unwrap();
        let early_second = c.submit(register(Account([3; 20]), 3.0, 1.0)).unwrap();
        let block = c.advance(1).unwrap().remove(0);
        assert_eq!(block.transactions, vec![early, early_second, late]);
    }

    #[test]
    fn oversized_transactions_are_rejected() {
        let config = ChainConfig {
            gas_limit: 50_000,
            ..Default::default()
        };
        let mut c = chain(config);
        let err = c.submit(register(Account([1; 20]), 1.0, 0.0)).unwrap_err();
        assert!(matches!(err, ChainError::TxTooLarge { limit: 50_000, .. }));
    }

    #[test]
    fn capacity_spills_to_next_slot() {
        let mut c = chain(ChainConfig::default());
        let a = background(&mut c, 16_000_000, 2.0, 0.0);
        let b = background(&mut c, 16_000_000, 2.0, 0.0);
        let blocks = c.advance(2).unwrap();
        assert_eq!(blocks[0].transactions, vec![a]);
        assert_eq!(blocks[1].transactions, vec![b]);
        assert!(blocks.iter().all(|b| b.gas_used <= b.gas_limit));
    }

    #[test]
    fn first_fit_skips_and_strict_order_stops() {
        for (packing, expect_small) in [(Packing::FirstFit, true), (Packing::StrictOrder, false)] {
            let config = ChainConfig {
                packing,
                ..Default::default()
            };
            let mut c = chain(config);
            let big = background(&mut c, 20_000_000, 9.0, 0.0);
            background(&mut c, 15_000_000, 8.0, 0.0);
            let small = background(&mut c, 5_000_000, 7.0, 0.0);
            let block = c.advance(1).unwrap().remove(0);
            assert_eq!(block.transactions[0], big);
            assert_eq!(block.transactions.contains(&small), expect_small);
        }
    }

    #[test]
    fn submissions_after_snapshot_wait() {
        let mut c = chain(ChainConfig::default());
        let id = c.submit(register(Account([1; 20]), 1.0, 11.5)).unwrap();
        let blocks = c.advance(2).unwrap();
        assert!(blocks[0].transactions.is_empty());
        assert_eq!(blocks[1].transactions, vec![id]);
        let r = c.receipt(id).unwrap();
        assert_eq!(r.block_timestamp, 24);
        assert!((r.latency - 12.5).abs() < 1e-9);
        assert!((r.mempool_time - 11.5).abs() < 1e-9);
    }

    #[test]
    fn empty_chain_produces_empty_blocks() {
        let mut c = chain(ChainConfig::default());
        let blocks = c.advance(3).unwrap();
        assert!(blocks
            .iter()
            .all(|b| b.gas_used == 0 && b.transactions.is_empty()));
        assert_eq!(blocks[2].timestamp, 36);
        assert!(matches!(c.advance(0), Err(ChainError::ZeroSlots)));
    }

    #[test]
    fn dependents_wait_for_confirmation() {
        let mut c = chain(ChainConfig::default());
        let provider = Account([7; 20]);
        let reg = c
            .submit(TxRequest {
                sender: provider,
                call: Call::RegisterAd {
                    role: Role::Provider,
                },
                priority_fee_gwei: 1.0,
                submit_time: 0.0,
                depends_on: None,
            })
            .unwrap();
        let breach = c
            .submit(TxRequest {
                sender: provider,
                call: Call::RegisterBreach { num_breaches: 3 },
                priority_fee_gwei: 5.0,
                submit_time: 0.0,
                depends_on: Some(reg),
            })
            .unwrap();
        c.advance(1).unwrap();
        assert!(c.receipt(reg).is_some());
        assert!(c.receipt(breach).is_none());
        assert_eq!(c.mempool().len(), 1);

        c.advance(1).unwrap();
        let breach_block = c.receipt(breach).unwrap().block_number;
        assert_eq!(breach_block, 2);
        // threshold reached: a penalty follow-up is generated
        let penalty = c
            .mempool()
            .iter()
            .find(|t| t.depends_on == Some(breach))
            .unwrap()
            .tx_id;
        c.advance(1).unwrap();
        let r = c.receipt(penalty).unwrap();
        assert_eq!(r.block_number, 3);
        assert_eq!(r.penalty, Some(3));
        assert_eq!(c.outstanding(), c.mempool().len() as u64);
    }

    #[test]
    fn background_is_seed_deterministic() {
        let config = ChainConfig {
            background: BackgroundLoad::ambient(),
            seed: 9,
            ..Default::default()
        };
        let a = chain(config.clone()).advance(5).unwrap();
        let b = chain(config.clone()).advance(5).unwrap();
        assert_eq!(a, b);
        let other = chain(ChainConfig { seed: 10, ..config })
            .advance(5)
            .unwrap();
        assert_ne!(a, other);
        assert!(a.iter().all(|b| b.gas_used <= b.gas_limit));
    }

    #[test]
    fn poisson_inverse_is_monotone() {
        for u in [0.01, 0.3, 0.5, 0.9, 0.999] {
            let mut last = 0;
            for rate in [0.5, 5.0, 50.0, 120.0, 300.0, 900.0] {
                let k = poisson_inverse(rate, u);
                assert!(k >= last);
                last = k;
            }
        }
        assert_eq!(poisson_inverse(0.0, 0.7), 0);
        let mean: f64 = (1..2000)
            .map(|i| poisson_inverse(120.0, i as f64 / 2000.0) as f64)
            .sum::<f64>()
            / 1999.0;
        assert!((mean - 120.0).abs() < 1.0, "{mean}");
    }
}
