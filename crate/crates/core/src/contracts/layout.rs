//! Storage slot assignments for every contract.
//!
//! Mapping entries live at hash-derived bases; struct fields are word
//! offsets from that base and are never packed. Array positions are 1-based
//! so that slot value zero always means "absent".

use crate::state::{Account, ContractId, SlotKey, Word};

use super::LayoutMode;

pub const AD_ADDRESS: u64 = 0;
pub const AD_TIME: u64 = 1;
pub const AD_ROLE: u64 = 2;

pub const SERVICE_PROVIDER: u64 = 0;
pub const SERVICE_ID: u64 = 1;
pub const SERVICE_LOCATION: u64 = 2;
pub const SERVICE_COST: u64 = 3;
const SERVICE_WORDS: u64 = 4;

pub const SELECTION_CONSUMER: u64 = 0;
pub const SELECTION_PROVIDER: u64 = 1;
pub const SELECTION_INDEX: u64 = 2;
const SELECTION_WORDS: u64 = 3;

pub fn ad_count() -> SlotKey {
    SlotKey::new(ContractId::RegistrationAd, Word::ZERO)
}

pub fn ad_base(account: &Account) -> Word {
    Word::keyed("ads", &[&account.0])
}

pub fn ad_field(base: &Word, field: u64) -> SlotKey {
    SlotKey::new(ContractId::RegistrationAd, base.offset(field))
}

pub fn services_len() -> SlotKey {
    SlotKey::new(ContractId::AddService, Word::ZERO)
}

pub fn service_field(position: u64, field: u64) -> SlotKey {
    let base = Word::keyed("services", &[]);
    SlotKey::new(
        ContractId::AddService,
        base.offset((position - 1) * SERVICE_WORDS + field),
    )
}

pub fn provider_list_len(provider: &Account) -> SlotKey {
    SlotKey::new(
        ContractId::AddService,
        Word::keyed("provider-services", &[&provider.0]),
    )
}

/// Slot holding the `index`-th (1-based) entry of a provider's list.
///
/// Nested: consecutive words after the list's length slot. Flattened: one
/// hashed composite key per (provider, index).
pub fn provider_list_entry(mode: LayoutMode, provider: &Account, index: u64) -> SlotKey {
    let slot = match mode {
        LayoutMode::Nested => provider_list_len(provider).slot.offset(index),
        LayoutMode::Flattened => {
            Word::keyed("provider-service", &[&provider.0, &index.to_be_bytes()])
        }
    };
    SlotKey::new(ContractId::AddService, slot)
}

pub fn selections_len() -> SlotKey {
    SlotKey::new(ContractId::SelectService, Word::ZERO)
}

pub fn selection_field(position: u64, field: u64) -> SlotKey {
    let base = Word::keyed("selections", &[]);
    SlotKey::new(
        ContractId::SelectService,
        base.offset((position - 1) * SELECTION_WORDS + field),
    )
}

pub fn breach_count(provider: &Account) -> SlotKey {
    SlotKey::new(
        ContractId::RegisterBreach,
        Word::keyed("breach-count", &[&provider.0]),
    )
}

pub fn penalty(provider: &Account) -> SlotKey {
    SlotKey::new(
        ContractId::CalculatePenalty,
        Word::keyed("penalties", &[&provider.0]),
    )
}

pub fn string_hash(text: &str) -> Word {
    Word::keyed("string", &[text.as_bytes()])
}
