//! Byte-level calldata for the six contract functions.
//!
//! Encoding follows the Solidity ABI head/tail layout closely enough that
//! the zero/non-zero byte composition, which is all calldata pricing sees,
//! matches what a real client would send.

use crate::state::{Account, Word};

use super::{Call, Role};

/// `registerAD(uint8)`; the other selectors are arbitrary non-zero tags.
pub const SELECTOR_REGISTER_AD: [u8; 4] = [0x61, 0xd6, 0x89, 0xfa];
pub const SELECTOR_ADD_SERVICE: [u8; 4] = [0x3f, 0x5b, 0x2c, 0x91];
pub const SELECTOR_SERVICE_SELECTION: [u8; 4] = [0x8e, 0x14, 0xa7, 0x5d];
pub const SELECTOR_REGISTER_BREACH: [u8; 4] = [0xc2, 0x7a, 0x19, 0x43];
pub const SELECTOR_CALCULATE_PENALTY: [u8; 4] = [0x5a, 0xe8, 0x36, 0x0b];
pub const SELECTOR_TRANSFER_FUNDS: [u8; 4] = [0x9d, 0x21, 0xf4, 0x6c];

pub fn encode(call: &Call) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 32 * 8);
    match call {
        Call::RegisterAd { role } => {
            out.extend(SELECTOR_REGISTER_AD);
            push_uint(&mut out, *role as u128);
        }
        Call::AddService {
            service_id,
            location,
            cost,
        } => {
            out.extend(SELECTOR_ADD_SERVICE);
            let head = 3 * 32;
            let first_tail = 32 + padded_len(service_id.len());
            push_uint(&mut out, head as u128);
            push_uint(&mut out, (head + first_tail) as u128);
            push_uint(&mut out, *cost);
            push_bytes(&mut out, service_id.as_bytes());
            push_bytes(&mut out, location.as_bytes());
        }
        Call::SelectService {
            provider,
            service_index,
        } => {
            out.extend(SELECTOR_SERVICE_SELECTION);
            push_address(&mut out, provider);
            push_uint(&mut out, *service_index as u128);
        }
        Call::RegisterBreach { num_breaches } => {
            out.extend(SELECTOR_REGISTER_BREACH);
            push_uint(&mut out, *num_breaches as u128);
        }
        Call::CalculatePenalty { provider } => {
            out.extend(SELECTOR_CALCULATE_PENALTY);
            push_address(&mut out, provider);
        }
        // msg.value travels outside calldata
        Call::TransferFunds { recipient, .. } => {
            out.extend(SELECTOR_TRANSFER_FUNDS);
            push_address(&mut out, recipient);
        }
    }
    out
}

fn padded_len(len: usize) -> usize {
    len.div_ceil(32) * 32
}

fn push_uint(out: &mut Vec<u8>, value: u128) {
    out.extend(Word::from_u128(value).0);
}

fn push_address(out: &mut Vec<u8>, account: &Account) {
    out.extend(Word::from_account(account).0);
}

fn push_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    push_uint(out, bytes.len() as u128);
    out.extend(bytes);
    out.resize(out.len() + padded_len(bytes.len()) - bytes.len(), 0);
}

impl Role {
    pub fn word(self) -> Word {
        Word::from_u64(self as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::GasSchedule;

    #[test]
    fn register_ad_bytes() {
        let data = encode(&Call::RegisterAd {
            role: Role::Provider,
        });
        assert_eq!(data.len(), 36);
        assert_eq!(&data[..4], &SELECTOR_REGISTER_AD);
        assert_eq!(data[35], 1);
        let s = GasSchedule::canonical();
        assert_eq!(s.calldata_cost(&data), 204);
        let consumer = encode(&Call::RegisterAd {
            role: Role::Consumer,
        });
        assert_eq!(s.calldata_cost(&consumer), 192);
    }

    #[test]
    fn add_service_layout() {
        let data = encode(&Call::AddService {
            service_id: "svc-2".into(),
            location: "eu-west".into(),
            cost: 100,
        });
        // selector + 3 head words + (len + 1 data word) * 2
        assert_eq!(data.len(), 4 + 32 * 7);
        assert_eq!(data[4 + 31], 0x60);
        assert_eq!(data[4 + 63], 0xa0);
        assert_eq!(&data[4 + 128..4 + 133], b"svc-2");
        assert_eq!(GasSchedule::canonical().calldata_cost(&data), 1_164);
    }

    #[test]
    fn selectors_have_no_zero_bytes() {
        for sel in [
            SELECTOR_REGISTER_AD,
            SELECTOR_ADD_SERVICE,
            SELECTOR_SERVICE_SELECTION,
            SELECTOR_REGISTER_BREACH,
            SELECTOR_CALCULATE_PENALTY,
            SELECTOR_TRANSFER_FUNDS,
        ] {
            assert!(sel.iter().all(|b| *b != 0));
        }
    }
}
