//! Zero-default contract storage with per-transaction cold/warm tracking.
//!
//! A transaction runs against a [`TxContext`], which borrows the committed
//! [`WorldState`] read-only and buffers every write. Nothing reaches the
//! committed state until [`WorldState::commit`] applies the resulting
//! [`TxEffects`], so a dry run is simply a context that is never committed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::schedule::GasSchedule;

/// A 256-bit big-endian storage word.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word(pub [u8; 32]);

impl Word {
    pub const ZERO: Word = Word([0; 32]);

    pub fn from_u64(v: u64) -> Self {
        Self::from_u128(v as u128)
    }

    pub fn from_u128(v: u128) -> Self {
        let mut bytes = [0u8; 32];
        bytes[16..].copy_from_slice(&v.to_be_bytes());
        Word(bytes)
    }

    /// Left-pads a 20-byte account into a word, as the ABI does.
    pub fn from_account(account: &Account) -> Self {
        let mut bytes = [0u8; 32];
        bytes[12..].copy_from_slice(&account.0);
        Word(bytes)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|b| *b == 0)
    }

    /// Low 128 bits, or `None` if the high half is populated.
    pub fn to_u128(&self) -> Option<u128> {
        if self.0[..16].iter().any(|b| *b != 0) {
            return None;
        }
        Some(u128::from_be_bytes(self.0[16..].try_into().unwrap()))
    }

    pub fn to_account(&self) -> Account {
        Account(self.0[12..].try_into().unwrap())
    }

    /// Hash-derived slot base, standing in for keccak mapping keys.
    pub fn keyed(tag: &str, parts: &[&[u8]]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(tag.as_bytes());
        for part in parts {
            hasher.update((part.len() as u32).to_be_bytes());
            hasher.update(part);
        }
        Word(hasher.finalize().into())
    }

    pub fn offset(&self, by: u64) -> Self {
        let mut out = self.0;
        let mut carry = by as u128;
        for byte in out.iter_mut().rev() {
            if carry == 0 {
                break;
            }
            let sum = *byte as u128 + (carry & 0xff);
            *byte = sum as u8;
            carry = (carry >> 8) + (sum >> 8);
        }
        Word(out)
    }

    pub fn to_hex(&self) -> String {
        hex_string(&self.0)
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_u128() {
            Some(v) => write!(f, "Word({v})"),
            None => write!(f, "Word(0x{})", self.to_hex()),
        }
    }
}

/// A 20-byte externally owned account.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Account(pub [u8; 20]);

impl Account {
    pub const ZERO: Account = Account([0; 20]);

    /// Deterministic account number `index`, derived by hashing.
    pub fn derived(index: u64) -> Self {
        let word = Word::keyed("account", &[&index.to_be_bytes()]);
        Account(word.0[..20].try_into().unwrap())
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    pub fn nonzero_bytes(&self) -> usize {
        self.0.iter().filter(|b| **b != 0).count()
    }
}

impl fmt::Display for Account {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex_string(&self.0))
    }
}

impl fmt::Debug for Account {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Account({self})")
    }
}

impl Serialize for Account {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Account {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        let digits = text.strip_prefix("0x").unwrap_or(&text);
        if digits.len() != 40 {
            return Err(serde::de::Error::custom("account must be 20 hex bytes"));
        }
        let mut out = [0u8; 20];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&digits[2 * i..2 * i + 2], 16)
                .map_err(serde::de::Error::custom)?;
        }
        Ok(Account(out))
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Identifies one of the six agreement contracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractId {
    RegistrationAd = 0,
    AddService = 1,
    SelectService = 2,
    RegisterBreach = 3,
    CalculatePenalty = 4,
    TransferFunds = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotKey {
    pub contract: ContractId,
    pub slot: Word,
}

impl SlotKey {
    pub fn new(contract: ContractId, slot: Word) -> Self {
        Self { contract, slot }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
    /// Read-modify-write priced as a single store.
    Update,
}

impl AccessKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AccessKind::Read => "read",
            AccessKind::Write => "write",
            AccessKind::Update => "update",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEvent {
    pub name: &'static str,
    pub topic_count: u64,
    pub data_length: u64,
}

/// One gas-charging step of a transaction, in execution order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEntry {
    Intrinsic {
        gas: u64,
    },
    Calldata {
        zero_bytes: u64,
        nonzero_bytes: u64,
        gas: u64,
    },
    Access {
        key: SlotKey,
        kind: AccessKind,
        cold: bool,
        before: Word,
        after: Word,
        gas: u64,
    },
    Log {
        event: LogEvent,
        gas: u64,
    },
    Traversal {
        levels: u64,
        gas: u64,
    },
    Overhead {
        function: String,
        gas: u64,
    },
}

impl TraceEntry {
    pub fn gas(&self) -> u64 {
        match self {
            TraceEntry::Intrinsic { gas }
            | TraceEntry::Calldata { gas, .. }
            | TraceEntry::Access { gas, .. }
            | TraceEntry::Log { gas, .. }
            | TraceEntry::Traversal { gas, .. }
            | TraceEntry::Overhead { gas, .. } => *gas,
        }
    }
}

/// Running gas total and emitted events of the active transaction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TxMeter {
    pub gas_used: u64,
    pub events: Vec<LogEvent>,
}

#[derive(Debug, Clone, Default)]
pub struct WorldState {
    storage: BTreeMap<SlotKey, Word>,
    balances: BTreeMap<Account, u128>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Unmetered read; absent slots are zero.
    pub fn get(&self, key: &SlotKey) -> Word {
        self.storage.get(key).copied().unwrap_or(Word::ZERO)
    }

    pub fn balance(&self, account: &Account) -> u128 {
        self.balances.get(account).copied().unwrap_or(0)
    }

    pub fn set_balance(&mut self, account: Account, amount: u128) {
        if amount == 0 {
            self.balances.remove(&account);
        } else {
            self.balances.insert(account, amount);
        }
    }

    /// Non-zero slots in (contract, slot) order.
    pub fn slots(&self) -> impl Iterator<Item = (&SlotKey, &Word)> {
        self.storage.iter()
    }

    pub fn slot_count(&self) -> usize {
        self.storage.len()
    }

    /// Starts a transaction: intrinsic and calldata gas are charged up front
    /// and the access set starts empty.
    pub fn begin_tx<'a>(&'a self, calldata: &[u8], schedule: &'a GasSchedule) -> TxContext<'a> {
        let zero_bytes = calldata.iter().filter(|b| **b == 0).count() as u64;
        let nonzero_bytes = calldata.len() as u64 - zero_bytes;
        let mut ctx = TxContext {
            state: self,
            schedule,
            pending: BTreeMap::new(),
            balances: BTreeMap::new(),
            touched: BTreeSet::new(),
            meter: TxMeter::default(),
            trace: Vec::new(),
        };
        ctx.charge(TraceEntry::Intrinsic {
            gas: schedule.tx_intrinsic,
        });
        ctx.charge(TraceEntry::Calldata {
            zero_bytes,
            nonzero_bytes,
            gas: schedule.calldata_cost(calldata),
        });
        ctx
    }

    pub fn commit(&mut self, effects: &TxEffects) {
        for (key, value) in &effects.writes {
            if value.is_zero() {
                self.storage.remove(key);
            } else {
                self.storage.insert(*key, *value);
            }
        }
        for (account, amount) in &effects.balances {
            self.set_balance(*account, *amount);
        }
    }
}

/// An in-flight transaction over a borrowed world state.
#[derive(Debug)]
pub struct TxContext<'a> {
    state: &'a WorldState,
    schedule: &'a GasSchedule,
    pending: BTreeMap<SlotKey, Word>,
    balances: BTreeMap<Account, u128>,
    touched: BTreeSet<SlotKey>,
    meter: TxMeter,
    trace: Vec<TraceEntry>,
}

impl<'a> TxContext<'a> {
    pub fn schedule(&self) -> &GasSchedule {
        self.schedule
    }

    pub fn meter(&self) -> &TxMeter {
        &self.meter
    }

    pub fn gas_used(&self) -> u64 {
        self.meter.gas_used
    }

    pub fn is_cold(&self, key: &SlotKey) -> bool {
        !self.touched.contains(key)
    }

    /// Current value including this transaction's buffered writes; no gas,
    /// no warming.
    pub fn peek(&self, key: &SlotKey) -> Word {
        self.pending
            .get(key)
            .copied()
            .unwrap_or_else(|| self.state.get(key))
    }

    pub fn read(&mut self, key: SlotKey) -> Word {
        let cold = self.touched.insert(key);
        let value = self.peek(&key);
        let gas = self.schedule.sload_cost(cold);
        self.charge(TraceEntry::Access {
            key,
            kind: AccessKind::Read,
            cold,
            before: value,
            after: value,
            gas,
        });
        value
    }

    pub fn write(&mut self, key: SlotKey, value: Word) {
        self.store(key, value, AccessKind::Write);
    }

    /// Read-modify-write of one slot, charged as a single store. Returns the
    /// value before and after.
    pub fn update(&mut self, key: SlotKey, f: impl FnOnce(Word) -> Word) -> (Word, Word) {
        let before = self.peek(&key);
        let after = f(before);
        self.store(key, after, AccessKind::Update);
        (before, after)
    }

    fn store(&mut self, key: SlotKey, value: Word, kind: AccessKind) {
        let cold = self.touched.insert(key);
        let before = self.peek(&key);
        let gas = self.schedule.sstore_cost(&before, &value, cold);
        self.pending.insert(key, value);
        self.charge(TraceEntry::Access {
            key,
            kind,
            cold,
            before,
            after: value,
            gas,
        });
    }

    pub fn emit(&mut self, name: &'static str, topic_count: u64, data_length: u64) {
        let event = LogEvent {
            name,
            topic_count,
            data_length,
        };
        let gas = self.schedule.log_cost(topic_count, data_length);
        self.meter.events.push(event.clone());
        self.charge(TraceEntry::Log { event, gas });
    }

    pub fn charge_traversal(&mut self, levels: u64) {
        let gas = self.schedule.traversal_cost(levels);
        self.charge(TraceEntry::Traversal { levels, gas });
    }

    pub fn charge_overhead(&mut self, function: &str) {
        let gas = self.schedule.overhead(function);
        if gas > 0 {
            self.charge(TraceEntry::Overhead {
                function: function.to_string(),
                gas,
            });
        }
    }

    pub fn balance(&self, account: &Account) -> u128 {
        self.balances
            .get(account)
            .copied()
            .unwrap_or_else(|| self.state.balance(account))
    }

    pub fn set_balance(&mut self, account: Account, amount: u128) {
        self.balances.insert(account, amount);
    }

    fn charge(&mut self, entry: TraceEntry) {
        self.meter.gas_used += entry.gas();
        self.trace.push(entry);
    }

    /// Closes the transaction. The access set is dropped with the context.
    pub fn end(self) -> TxEffects {
        TxEffects {
            gas_used: self.meter.gas_used,
            writes: self.pending,
            balances: self.balances,
            events: self.meter.events,
            trace: self.trace,
        }
    }
}

/// Everything a finished transaction would change, plus its gas trace.
#[derive(Debug, Clone, Default)]
pub struct TxEffects {
    pub gas_used: u64,
    pub writes: BTreeMap<SlotKey, Word>,
    pub balances: BTreeMap<Account, u128>,
    pub events: Vec<LogEvent>,
    pub trace: Vec<TraceEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(i: u64) -> SlotKey {
        SlotKey::new(ContractId::RegistrationAd, Word::from_u64(i))
    }

    #[test]
    fn begin_charges_intrinsic_and_calldata() {
        let state = WorldState::new();
        let s = GasSchedule::canonical();
        assert_eq!(state.begin_tx(&[], &s).end().gas_used, 21_000);

        let mut provider = vec![0x61, 0xd6, 0x89, 0xfa];
        provider.extend([0u8; 31]);
        provider.push(1);
        assert_eq!(state.begin_tx(&provider, &s).gas_used(), 21_204);
        *provider.last_mut().unwrap() = 0;
        assert_eq!(state.begin_tx(&provider, &s).gas_used(), 21_192);
    }

    #[test]
    fn reads_are_cold_then_warm() {
        let state = WorldState::new();
        let s = GasSchedule::canonical();
        let mut tx = state.begin_tx(&[], &s);
        assert_eq!(tx.read(key(1)), Word::ZERO);
        assert_eq!(tx.gas_used(), 21_000 + 2_200);
        assert_eq!(tx.read(key(1)), Word::ZERO);
        assert_eq!(tx.gas_used(), 21_000 + 2_300);
        tx.write(key(2), Word::from_u64(9));
        let before = tx.gas_used();
        assert_eq!(tx.read(key(2)), Word::from_u64(9));
        assert_eq!(tx.gas_used() - before, 100);
    }

    #[test]
    fn write_transitions() {
        let mut state = WorldState::new();
        let s = GasSchedule::canonical();
        let mut tx = state.begin_tx(&[], &s);
        tx.write(key(1), Word::from_u64(1));
        assert_eq!(tx.gas_used(), 21_000 + 22_100);
        tx.write(key(3), Word::from_u64(3));
        let fx = tx.end();
        state.commit(&fx);

        let mut tx = state.begin_tx(&[], &s);
        tx.write(key(3), Word::from_u64(4));
        assert_eq!(tx.gas_used(), 21_000 + 5_000);
        tx.write(key(3), Word::from_u64(4));
        assert_eq!(tx.gas_used(), 21_000 + 5_100);
    }

    #[test]
    fn each_transaction_pays_cold_once() {
        let mut state = WorldState::new();
        let s = GasSchedule::canonical();
        for expected in [22_100, 5_000, 5_000] {
            let mut tx = state.begin_tx(&[], &s);
            tx.update(key(7), |v| v.offset(1));
            let fx = tx.end();
            assert_eq!(fx.gas_used - 21_000, expected);
            state.commit(&fx);
        }
        assert_eq!(state.get(&key(7)), Word::from_u64(3));
    }

    #[test]
    fn zero_write_to_absent_slot_is_invisible() {
        let mut state = WorldState::new();
        let s = GasSchedule::canonical();
        let mut tx = state.begin_tx(&[], &s);
        tx.write(key(5), Word::ZERO);
        assert_eq!(tx.gas_used(), 21_000 + 2_200);
        let fx = tx.end();
        state.commit(&fx);
        assert_eq!(state.slot_count(), 0);
        assert_eq!(state.get(&key(5)), Word::ZERO);
    }

    #[test]
    fn uncommitted_context_leaves_state_untouched() {
        let state = WorldState::new();
        let s = GasSchedule::canonical();
        let mut tx = state.begin_tx(&[], &s);
        tx.write(key(1), Word::from_u64(1));
        drop(tx.end());
        assert_eq!(state.slot_count(), 0);
    }

    #[test]
    fn word_helpers() {
        assert_eq!(Word::from_u64(255).offset(1), Word::from_u64(256));
        assert_eq!(Word::from_u128(u128::MAX).offset(1).to_u128(), None);
        let a = Account::derived(3);
        assert_eq!(Word::from_account(&a).to_account(), a);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<Account>(&json).unwrap(), a);
    }
}
