//! The six inter-provider agreement contracts, executed over [`WorldState`].
//!
//! Every contract keeps its records in explicit storage slots (see
//! [`layout`]) so that the gas of each call follows from the storage
//! transitions it causes. Role and argument checks run first against
//! unmetered views; a rejected call therefore never touches storage.

pub mod abi;
pub mod layout;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ContractError;
use crate::schedule::GasSchedule;
use crate::state::{Account, LogEvent, TraceEntry, TxContext, TxEffects, Word, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Consumer = 0,
    Provider = 1,
}

impl Role {
    fn from_word(word: &Word) -> Option<Role> {
        match word.to_u128()? {
            0 => Some(Role::Consumer),
            1 => Some(Role::Provider),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutMode {
    #[default]
    Nested,
    Flattened,
}

impl std::str::FromStr for LayoutMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nested" => Ok(LayoutMode::Nested),
            "flattened" => Ok(LayoutMode::Flattened),
            other => Err(format!(
                "unknown layout `{other}` (expected nested or flattened)"
            )),
        }
    }
}

/// When a penalty is computed after breaches are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyPolicy {
    /// A separate `calculatePenalty` transaction once the breach count
    /// reaches `max_breach`.
    #[default]
    Threshold,
    /// `calculatePenalty` runs inside every `registerBreach` transaction.
    EveryBreach,
}

impl std::str::FromStr for PenaltyPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "threshold" => Ok(PenaltyPolicy::Threshold),
            "every-breach" => Ok(PenaltyPolicy::EveryBreach),
            other => Err(format!(
                "unknown penalty policy `{other}` (expected threshold or every-breach)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractConfig {
    pub layout: LayoutMode,
    pub policy: PenaltyPolicy,
    pub fidelity_fee: u128,
    pub max_breach: u64,
}

impl Default for ContractConfig {
    fn default() -> Self {
        Self {
            layout: LayoutMode::Nested,
            policy: PenaltyPolicy::Threshold,
            fidelity_fee: 1,
            max_breach: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Function {
    RegisterAd,
    AddService,
    SelectService,
    RegisterBreach,
    CalculatePenalty,
    TransferFunds,
}

impl Function {
    pub const ALL: [Function; 6] = [
        Function::RegisterAd,
        Function::AddService,
        Function::SelectService,
        Function::RegisterBreach,
        Function::CalculatePenalty,
        Function::TransferFunds,
    ];

    /// Solidity function name, also the overhead key in [`GasSchedule`].
    pub fn name(self) -> &'static str {
        match self {
            Function::RegisterAd => "registerAD",
            Function::AddService => "addService",
            Function::SelectService => "serviceSelection",
            Function::RegisterBreach => "registerBreach",
            Function::CalculatePenalty => "calculatePenalty",
            Function::TransferFunds => "transferFunds",
        }
    }
}

/// A contract call with its arguments; the caller is supplied separately.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Call {
    RegisterAd {
        role: Role,
    },
    AddService {
        service_id: String,
        location: String,
        cost: u128,
    },
    SelectService {
        provider: Account,
        service_index: u64,
    },
    RegisterBreach {
        num_breaches: u64,
    },
    CalculatePenalty {
        provider: Account,
    },
    TransferFunds {
        recipient: Account,
        amount: u128,
    },
}

impl Call {
    pub fn function(&self) -> Function {
        match self {
            Call::RegisterAd { .. } => Function::RegisterAd,
            Call::AddService { .. } => Function::AddService,
            Call::SelectService { .. } => Function::SelectService,
            Call::RegisterBreach { .. } => Function::RegisterBreach,
            Call::CalculatePenalty { .. } => Function::CalculatePenalty,
            Call::TransferFunds { .. } => Function::TransferFunds,
        }
    }

    pub fn calldata(&self) -> Vec<u8> {
        abi::encode(self)
    }
}

/// Block context visible to a call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BlockEnv {
    pub number: u64,
    pub timestamp: u64,
}

impl BlockEnv {
    pub fn at(number: u64, timestamp: u64) -> Self {
        Self { number, timestamp }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdRecord {
    pub ad_address: Account,
    pub registration_time: u64,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceRecord {
    pub provider: Account,
    pub service_id: String,
    pub location: String,
    pub cost: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub consumer: Account,
    pub provider: Account,
    /// 1-based position in the provider's service list.
    pub service_index: u64,
}

/// Decoded view of every contract's records.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgreementState {
    pub ad_count: u64,
    pub ads: BTreeMap<Account, AdRecord>,
    pub services: Vec<ServiceRecord>,
    /// 1-based positions into `services`, per provider.
    pub provider_services: BTreeMap<Account, Vec<u64>>,
    pub selections: Vec<SelectionRecord>,
    pub breach_counts: BTreeMap<Account, u64>,
    pub penalties: BTreeMap<Account, u128>,
    pub balances: BTreeMap<Account, u128>,
}

/// Result of one executed contract call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    pub function: Function,
    pub gas_used: u64,
    pub calldata: Vec<u8>,
    pub events: Vec<LogEvent>,
    pub trace: Vec<TraceEntry>,
    /// Dependent call the caller should submit next (threshold penalties).
    pub follow_up: Option<Call>,
    /// Penalty written by this call, if it computed one.
    pub penalty: Option<u128>,
}

/// A validated, metered call whose effects are not yet committed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub execution: Execution,
    effects: TxEffects,
    accounts: Vec<Account>,
    strings: Vec<(Word, String)>,
}

impl Prepared {
    pub fn gas_used(&self) -> u64 {
        self.execution.gas_used
    }
}

/// The deployed contract set and the world state it lives in.
#[derive(Debug, Clone)]
pub struct Dapp {
    config: ContractConfig,
    schedule: Arc<GasSchedule>,
    state: WorldState,
    strings: BTreeMap<Word, String>,
    accounts: BTreeSet<Account>,
}

impl Dapp {
    pub fn new(config: ContractConfig, schedule: Arc<GasSchedule>) -> Self {
        Self {
            config,
            schedule,
            state: WorldState::new(),
            strings: BTreeMap::new(),
            accounts: BTreeSet::new(),
        }
    }

    pub fn config(&self) -> &ContractConfig {
        &self.config
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn fund(&mut self, account: Account, amount: u128) {
        self.accounts.insert(account);
        self.state.set_balance(account, amount);
    }

    pub fn role_of(&self, account: &Account) -> Option<Role> {
        let base = layout::ad_base(account);
        if self
            .state
            .get(&layout::ad_field(&base, layout::AD_ADDRESS))
            .is_zero()
        {
            return None;
        }
        Role::from_word(&self.state.get(&layout::ad_field(&base, layout::AD_ROLE)))
    }

    pub fn service_count(&self, provider: &Account) -> u64 {
        word_u64(&self.state.get(&layout::provider_list_len(provider)))
    }

    /// Validates and meters `call` without committing anything.
    pub fn prepare(
        &self,
        env: BlockEnv,
        sender: Account,
        call: &Call,
    ) -> Result<Prepared, ContractError> {
        let calldata = call.calldata();
        let mut run = Run {
            tx: self.state.begin_tx(&calldata, &self.schedule),
            config: &self.config,
            follow_up: None,
            penalty: None,
            strings: Vec::new(),
        };
        let mut accounts = vec![sender];
        match call {
            Call::RegisterAd { role } => run.register_ad(env, sender, *role)?,
            Call::AddService {
                service_id,
                location,
                cost,
            } => run.add_service(sender, service_id, location, *cost)?,
            Call::SelectService {
                provider,
                service_index,
            } => {
                accounts.push(*provider);
                run.select_service(sender, *provider, *service_index)?
            }
            Call::RegisterBreach { num_breaches } => run.register_breach(sender, *num_breaches)?,
            Call::CalculatePenalty { provider } => {
                accounts.push(*provider);
                run.calculate_penalty(*provider)?
            }
            Call::TransferFunds { recipient, amount } => {
                accounts.push(*recipient);
                run.transfer_funds(sender, *recipient, *amount)?
            }
        }
        let function = call.function();
        run.tx.charge_overhead(function.name());
        let Run {
            tx,
            follow_up,
            penalty,
            strings,
            ..
        } = run;
        let effects = tx.end();
        Ok(Prepared {
            execution: Execution {
                function,
                gas_used: effects.gas_used,
                calldata,
                events: effects.events.clone(),
                trace: effects.trace.clone(),
                follow_up,
                penalty,
            },
            effects,
            accounts,
            strings,
        })
    }

    pub fn commit(&mut self, prepared: Prepared) -> Execution {
        self.state.commit(&prepared.effects);
        self.accounts.extend(prepared.accounts);
        self.strings.extend(prepared.strings);
        prepared.execution
    }

    pub fn execute(
        &mut self,
        env: BlockEnv,
        sender: Account,
        call: &Call,
    ) -> Result<Execution, ContractError> {
        let prepared = self.prepare(env, sender, call)?;
        Ok(self.commit(prepared))
    }

    pub fn register_ad(
        &mut self,
        env: BlockEnv,
        sender: Account,
        role: Role,
    ) -> Result<Execution, ContractError> {
        self.execute(env, sender, &Call::RegisterAd { role })
    }

    pub fn add_service(
        &mut self,
        env: BlockEnv,
        provider: Account,
        service_id: &str,
        location: &str,
        cost: u128,
    ) -> Result<Execution, ContractError> {
        let call = Call::AddService {
            service_id: service_id.to_string(),
            location: location.to_string(),
            cost,
        };
        self.execute(env, provider, &call)
    }

    /// Selects using whichever layout this deployment was configured with.
    pub fn select_service(
        &mut self,
        env: BlockEnv,
        consumer: Account,
        provider: Account,
        service_index: u64,
    ) -> Result<Execution, ContractError> {
        let call = Call::SelectService {
            provider,
            service_index,
        };
        self.execute(env, consumer, &call)
    }

    pub fn select_service_flattened(
        &mut self,
        env: BlockEnv,
        consumer: Account,
        provider: Account,
        service_index: u64,
    ) -> Result<Execution, ContractError> {
        if self.config.layout != LayoutMode::Flattened {
            return Err(ContractError::WrongLayout(LayoutMode::Flattened));
        }
        self.select_service(env, consumer, provider, service_index)
    }

    pub fn register_breach(
        &mut self,
        env: BlockEnv,
        provider: Account,
        num_breaches: u64,
    ) -> Result<Execution, ContractError> {
        self.execute(env, provider, &Call::RegisterBreach { num_breaches })
    }

    pub fn calculate_penalty(
        &mut self,
        env: BlockEnv,
        provider: Account,
    ) -> Result<Execution, ContractError> {
        self.execute(env, provider, &Call::CalculatePenalty { provider })
    }

    pub fn transfer_funds(
        &mut self,
        env: BlockEnv,
        consumer: Account,
        provider: Account,
        amount: u128,
    ) -> Result<Execution, ContractError> {
        self.execute(
            env,
            consumer,
            &Call::TransferFunds {
                recipient: provider,
                amount,
            },
        )
    }

    /// Decodes all records from storage.
    pub fn snapshot(&self) -> AgreementState {
        let s = &self.state;
        let mut out = AgreementState {
            ad_count: word_u64(&s.get(&layout::ad_count())),
            ..Default::default()
        };

        let service_total = word_u64(&s.get(&layout::services_len()));
        for position in 1..=service_total {
            let get = |field| s.get(&layout::service_field(position, field));
            out.services.push(ServiceRecord {
                provider: get(layout::SERVICE_PROVIDER).to_account(),
                service_id: self.string(&get(layout::SERVICE_ID)),
                location: self.string(&get(layout::SERVICE_LOCATION)),
                cost: get(layout::SERVICE_COST).to_u128().unwrap_or(u128::MAX),
            });
        }

        let selection_total = word_u64(&s.get(&layout::selections_len()));
        for position in 1..=selection_total {
            let get = |field| s.get(&layout::selection_field(position, field));
            out.selections.push(SelectionRecord {
                consumer: get(layout::SELECTION_CONSUMER).to_account(),
                provider: get(layout::SELECTION_PROVIDER).to_account(),
                service_index: word_u64(&get(layout::SELECTION_INDEX)),
            });
        }

        for account in &self.accounts {
            let base = layout::ad_base(account);
            let address = s.get(&layout::ad_field(&base, layout::AD_ADDRESS));
            if !address.is_zero() {
                out.ads.insert(
                    *account,
                    AdRecord {
                        ad_address: address.to_account(),
                        registration_time: word_u64(
                            &s.get(&layout::ad_field(&base, layout::AD_TIME)),
                        ),
                        role: Role::from_word(&s.get(&layout::ad_field(&base, layout::AD_ROLE)))
                            .unwrap_or(Role::Consumer),
                    },
                );
            }
            let count = word_u64(&s.get(&layout::provider_list_len(account)));
            if count > 0 {
                let list = (1..=count)
                    .map(|j| {
                        word_u64(&s.get(&layout::provider_list_entry(
                            self.config.layout,
                            account,
                            j,
                        )))
                    })
                    .collect();
                out.provider_services.insert(*account, list);
            }
            let breaches = word_u64(&s.get(&layout::breach_count(account)));
            if breaches > 0 {
                out.breach_counts.insert(*account, breaches);
            }
            if let Some(p) = s
                .get(&layout::penalty(account))
                .to_u128()
                .filter(|p| *p > 0)
            {
                out.penalties.insert(*account, p);
            }
            let balance = s.balance(account);
            if balance > 0 {
                out.balances.insert(*account, balance);
            }
        }
        out
    }

    fn string(&self, hash: &Word) -> String {
        self.strings.get(hash).cloned().unwrap_or_default()
    }
}

fn word_u64(word: &Word) -> u64 {
    word.to_u128()
        .and_then(|v| u64::try_from(v).ok())
        .unwrap_or(u64::MAX)
}

/// One call in flight.
struct Run<'a> {
    tx: TxContext<'a>,
    config: &'a ContractConfig,
    follow_up: Option<Call>,
    penalty: Option<u128>,
    strings: Vec<(Word, String)>,
}

impl Run<'_> {
    fn role(&self, account: &Account) -> Option<Role> {
        let base = layout::ad_base(account);
        if self
            .tx
            .peek(&layout::ad_field(&base, layout::AD_ADDRESS))
            .is_zero()
        {
            return None;
        }
        Role::from_word(&self.tx.peek(&layout::ad_field(&base, layout::AD_ROLE)))
    }

    fn require_provider(&self, account: &Account) -> Result<(), ContractError> {
        match self.role(account) {
            Some(Role::Provider) => Ok(()),
            _ => Err(ContractError::UnregisteredProvider(*account)),
        }
    }

    fn register_ad(
        &mut self,
        env: BlockEnv,
        sender: Account,
        role: Role,
    ) -> Result<(), ContractError> {
        let base = layout::ad_base(&sender);
        let (previous, _) = self
            .tx
            .update(layout::ad_field(&base, layout::AD_ADDRESS), |_| {
                Word::from_account(&sender)
            });
        self.tx.write(
            layout::ad_field(&base, layout::AD_TIME),
            Word::from_u64(env.timestamp),
        );
        self.tx
            .write(layout::ad_field(&base, layout::AD_ROLE), role.word());
        if previous.is_zero() {
            self.tx.update(layout::ad_count(), |count| count.offset(1));
        }
        Ok(())
    }

    fn add_service(
        &mut self,
        sender: Account,
        service_id: &str,
        location: &str,
        cost: u128,
    ) -> Result<(), ContractError> {
        match self.role(&sender) {
            Some(Role::Provider) => {}
            Some(Role::Consumer) => return Err(ContractError::RoleViolation(sender)),
            None => return Err(ContractError::UnregisteredProvider(sender)),
        }
        let (_, length) = self.tx.update(layout::services_len(), |len| len.offset(1));
        let position = word_u64(&length);
        let id_hash = layout::string_hash(service_id);
        let location_hash = layout::string_hash(location);
        self.tx.write(
            layout::service_field(position, layout::SERVICE_PROVIDER),
            Word::from_account(&sender),
        );
        self.tx
            .write(layout::service_field(position, layout::SERVICE_ID), id_hash);
        self.tx.write(
            layout::service_field(position, layout::SERVICE_LOCATION),
            location_hash,
        );
        self.tx.write(
            layout::service_field(position, layout::SERVICE_COST),
            Word::from_u128(cost),
        );
        let (_, list_len) = self
            .tx
            .update(layout::provider_list_len(&sender), |len| len.offset(1));
        self.tx.write(
            layout::provider_list_entry(self.config.layout, &sender, word_u64(&list_len)),
            Word::from_u64(position),
        );
        self.strings.push((id_hash, service_id.to_string()));
        self.strings.push((location_hash, location.to_string()));
        Ok(())
    }

    fn select_service(
        &mut self,
        consumer: Account,
        provider: Account,
        service_index: u64,
    ) -> Result<(), ContractError> {
        if self.role(&consumer) != Some(Role::Consumer) {
            return Err(ContractError::RoleViolation(consumer));
        }
        let count = word_u64(&self.tx.peek(&layout::provider_list_len(&provider)));
        if count == 0 || self.role(&provider) != Some(Role::Provider) {
            return Err(ContractError::ProviderNotFound(provider));
        }
        if service_index == 0 || service_index > count {
            return Err(ContractError::ServiceNotFound {
                provider,
                index: service_index,
            });
        }

        self.tx.read(layout::provider_list_len(&provider));
        let levels = match self.config.layout {
            LayoutMode::Nested => service_index,
            LayoutMode::Flattened => 1,
        };
        self.tx.charge_traversal(levels);

        let (_, length) = self
            .tx
            .update(layout::selections_len(), |len| len.offset(1));
        let position = word_u64(&length);
        self.tx.write(
            layout::selection_field(position, layout::SELECTION_CONSUMER),
            Word::from_account(&consumer),
        );
        self.tx.write(
            layout::selection_field(position, layout::SELECTION_PROVIDER),
            Word::from_account(&provider),
        );
        self.tx.write(
            layout::selection_field(position, layout::SELECTION_INDEX),
            Word::from_u64(service_index),
        );
        self.tx.emit("ServiceSelected", 1, 96);
        Ok(())
    }

    fn register_breach(
        &mut self,
        provider: Account,
        num_breaches: u64,
    ) -> Result<(), ContractError> {
        if num_breaches == 0 {
            return Err(ContractError::ZeroBreaches);
        }
        self.require_provider(&provider)?;
        let (_, count) = self
            .tx
            .update(layout::breach_count(&provider), |c| c.offset(num_breaches));
        self.tx.emit("BreachRegistered", 1, 64);
        match self.config.policy {
            PenaltyPolicy::EveryBreach => self.compute_penalty(provider),
            PenaltyPolicy::Threshold => {
                if word_u64(&count) >= self.config.max_breach {
                    self.follow_up = Some(Call::CalculatePenalty { provider });
                }
            }
        }
        Ok(())
    }

    fn calculate_penalty(&mut self, provider: Account) -> Result<(), ContractError> {
        self.require_provider(&provider)?;
        self.compute_penalty(provider);
        Ok(())
    }

    fn compute_penalty(&mut self, provider: Account) {
        let count = self
            .tx
            .read(layout::breach_count(&provider))
            .to_u128()
            .unwrap_or(u128::MAX);
        let penalty = self.config.fidelity_fee.saturating_mul(count);
        self.tx
            .write(layout::penalty(&provider), Word::from_u128(penalty));
        self.tx.emit("PenaltyCalculated", 1, 64);
        self.penalty = Some(penalty);
    }

    fn transfer_funds(
        &mut self,
        consumer: Account,
        recipient: Account,
        amount: u128,
    ) -> Result<(), ContractError> {
        if amount == 0 {
            return Err(ContractError::ZeroValue);
        }
        if self.role(&consumer) != Some(Role::Consumer) {
            return Err(ContractError::RoleViolation(consumer));
        }
        if self.role(&recipient) != Some(Role::Provider) {
            return Err(ContractError::RoleViolation(recipient));
        }
        let available = self.tx.balance(&consumer);
        if available < amount {
            return Err(ContractError::InsufficientBalance {
                available,
                required: amount,
            });
        }
        let received = self.tx.balance(&recipient);
        self.tx.set_balance(consumer, available - amount);
        self.tx.set_balance(recipient, received + amount);
        Ok(())
    }
}
