//! The two-party betting contract.
//!
//! Rules, with `T1 < T2 < T3`:
//!
//! 1. Up to `T1` each participant may deposit exactly `deposit_amount` or
//!    take a refund with `refundRoundOne`.
//! 2. In `(T1, T2]` a participant may call `refundRoundTwo` unless both
//!    deposits are in place.
//! 3. In `(T2, T3]` the loser concedes with `reassign`, paying the pot to
//!    the winner.
//! 4. After `T3` either participant may dispute by deploying the signed
//!    off-chain copy and calling `returnDisputeResolution` on it.

use serde::{Deserialize, Serialize};

use crate::abi::{encode_call, Value};
use crate::crypto::{keccak256, Address};
use crate::ir::{
    map_slot_key, selector, signature, slot_key, AbiType, ContractSpec, DisputeConfig,
    FunctionKind, FunctionSpec, Guard, Instr, Parameter, Visibility, Word, ACCOUNT_BALANCE,
    DEPLOYED_ADDR, DEPOSIT_AMOUNT, RESOLVED,
};
use crate::ledger::{ether, Chain};
use crate::split::templates::{self, pay_pot_to_indexed_winner, require_unresolved};
use crate::split::SignedCopy;

pub const T1: &str = "T1";
pub const T2: &str = "T2";
pub const T3: &str = "T3";

pub const DEPOSIT: &str = "deposit";
pub const REFUND_ROUND_ONE: &str = "refundRoundOne";
pub const REFUND_ROUND_TWO: &str = "refundRoundTwo";
pub const REASSIGN: &str = "reassign";
pub const REVEAL: &str = "reveal";

/// Who may call `reassign`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReassignMode {
    /// Only the participant that `reveal` says lost.
    #[default]
    LoserOnly,
    /// Either participant; the caller concedes to the other one.
    AnyMayConcede,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BettingConfig {
    /// Index 0 is Alice, index 1 is Bob.
    pub participants: [Address; 2],
    #[serde(with = "crate::ir::word_serde")]
    pub deposit_amount: Word,
    pub t1: u64,
    pub t2: u64,
    pub t3: u64,
    #[serde(with = "crate::ir::bytes_serde")]
    pub reveal_params: Vec<u8>,
    /// Number of `Compute` instructions prepended to the `reveal` body.
    #[serde(default)]
    pub reveal_padding: usize,
    /// Declared gas cost of each padding instruction.
    #[serde(default)]
    pub reveal_compute_cost: u64,
    /// Reserved; must be zero.
    #[serde(default, with = "crate::ir::word_serde")]
    pub penalty_amount: Word,
    #[serde(default)]
    pub reassign_mode: ReassignMode,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BettingError {
    #[error("time points must satisfy 0 < T1 < T2 < T3 (got {0}, {1}, {2})")]
    TimeOrder(u64, u64, u64),
    #[error("participants must be distinct")]
    SameParticipants,
    #[error("deposit amount must be positive")]
    ZeroDeposit,
    #[error("penalties are not supported; penalty_amount must be zero")]
    Penalty,
}

impl BettingConfig {
    pub fn new(participants: [Address; 2], t1: u64, t2: u64, t3: u64, reveal_params: Vec<u8>) -> Self {
        Self {
            participants,
            deposit_amount: ether(1),
            t1,
            t2,
            t3,
            reveal_params,
            reveal_padding: 0,
            reveal_compute_cost: 0,
            penalty_amount: Word::ZERO,
            reassign_mode: ReassignMode::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BettingError> {
        if !(0 < self.t1 && self.t1 < self.t2 && self.t2 < self.t3) {
            return Err(BettingError::TimeOrder(self.t1, self.t2, self.t3));
        }
        if self.participants[0] == self.participants[1] {
            return Err(BettingError::SameParticipants);
        }
        if self.deposit_amount == Word::ZERO {
            return Err(BettingError::ZeroDeposit);
        }
        if self.penalty_amount != Word::ZERO {
            return Err(BettingError::Penalty);
        }
        Ok(())
    }

    pub fn pot(&self) -> Word {
        self.deposit_amount * Word::from(2u8)
    }
}

/// Reference outcome: `true` (Bob wins) when the lowest bit of
/// `keccak256(reveal_params)` is set.
pub fn reference_reveal(reveal_params: &[u8]) -> bool {
    keccak256(reveal_params).0[31] & 1 == 1
}

pub fn winner_index(reveal_params: &[u8]) -> usize {
    usize::from(reference_reveal(reveal_params))
}

fn caller_balance_slot() -> [Instr; 2] {
    [
        Instr::Caller,
        Instr::MapSlot {
            name: ACCOUNT_BALANCE.into(),
        },
    ]
}

/// Pays the caller's recorded balance back to the caller. The amount is read
/// before the record is cleared.
fn refund_body() -> Vec<Instr> {
    let mut body = vec![Instr::Caller];
    body.extend(caller_balance_slot());
    body.push(Instr::SLoad);
    body.extend(caller_balance_slot());
    body.extend([Instr::Push { value: Word::ZERO }, Instr::SStore, Instr::Transfer]);
    body
}

fn light(name: &str, modifiers: Vec<Guard>, body: Vec<Instr>) -> FunctionSpec {
    FunctionSpec {
        name: name.into(),
        kind: Some(FunctionKind::Light),
        transfers_currency: true,
        payable: false,
        visibility: Visibility::Public,
        inputs: vec![],
        returns: None,
        modifiers,
        body,
    }
}

fn deposit_fn() -> FunctionSpec {
    let mut body = vec![
        Instr::CallValue,
        Instr::Slot {
            name: DEPOSIT_AMOUNT.into(),
        },
        Instr::SLoad,
        Instr::Eq,
        Instr::Require {
            reason: "deposit must equal deposit_amount".into(),
        },
    ];
    body.extend(caller_balance_slot());
    body.extend([
        Instr::SLoad,
        Instr::IsZero,
        Instr::Require {
            reason: "already deposited".into(),
        },
    ]);
    body.extend(caller_balance_slot());
    body.extend([Instr::CallValue, Instr::SStore]);
    let mut f = light(
        DEPOSIT,
        vec![
            Guard::NotAfter { param: T1.into() },
            Guard::ParticipantOnly,
        ],
        body,
    );
    f.payable = true;
    f
}

fn reassign_fn(mode: ReassignMode) -> FunctionSpec {
    let mut body = Vec::new();
    require_unresolved(&mut body);
    match mode {
        ReassignMode::LoserOnly => body.extend([
            Instr::Invoke {
                function: REVEAL.into(),
            },
            Instr::Dup { depth: 1 },
            Instr::IsZero,
            Instr::PickParticipant,
            Instr::Caller,
            Instr::Eq,
            Instr::Require {
                reason: "only the loser may concede".into(),
            },
        ]),
        ReassignMode::AnyMayConcede => body.extend([
            Instr::Caller,
            Instr::Participant { index: 0 },
            Instr::Eq,
        ]),
    }
    pay_pot_to_indexed_winner(&mut body, 2);
    light(
        REASSIGN,
        vec![
            Guard::Window {
                after: T2.into(),
                until: T3.into(),
            },
            Guard::ParticipantOnly,
            Guard::AmountMet,
        ],
        body,
    )
}

/// `reveal` body: optional padding, then the lowest bit of the parameter digest.
pub fn reveal_body(config: &BettingConfig) -> Vec<Instr> {
    let mut body = vec![
        Instr::Compute {
            cost: config.reveal_compute_cost
        };
        config.reveal_padding
    ];
    body.extend([
        Instr::PushBytes {
            data: config.reveal_params.clone(),
        },
        Instr::Keccak,
        Instr::Push { value: Word::ONE },
        Instr::And,
        Instr::Return,
    ]);
    body
}

fn reveal_fn(config: &BettingConfig) -> FunctionSpec {
    FunctionSpec {
        name: REVEAL.into(),
        kind: Some(FunctionKind::Heavy),
        transfers_currency: false,
        payable: false,
        visibility: Visibility::Private,
        inputs: vec![],
        returns: Some(AbiType::Bool),
        modifiers: vec![],
        body: reveal_body(config),
    }
}

/// The unsplit betting contract.
pub fn betting_spec(config: &BettingConfig) -> Result<ContractSpec, BettingError> {
    config.validate()?;
    let window_one = vec![
        Guard::NotAfter { param: T1.into() },
        Guard::ParticipantOnly,
    ];
    let window_two = vec![
        Guard::Window {
            after: T1.into(),
            until: T2.into(),
        },
        Guard::ParticipantOnly,
        Guard::AmountNotMet,
    ];
    Ok(ContractSpec {
        name: "betting".into(),
        participants: config.participants.to_vec(),
        parameters: vec![
            Parameter {
                name: T1.into(),
                value: Word::from(config.t1),
            },
            Parameter {
                name: T2.into(),
                value: Word::from(config.t2),
            },
            Parameter {
                name: T3.into(),
                value: Word::from(config.t3),
            },
            Parameter {
                name: DEPOSIT_AMOUNT.into(),
                value: config.deposit_amount,
            },
        ],
        functions: vec![
            deposit_fn(),
            light(REFUND_ROUND_ONE, window_one, refund_body()),
            light(REFUND_ROUND_TWO, window_two, refund_body()),
            reassign_fn(config.reassign_mode),
            reveal_fn(config),
        ],
        resolution: Some(REVEAL.into()),
        dispute: DisputeConfig {
            after: Some(T3.into()),
            amount_met: true,
        },
    })
}

fn no_args(name: &str) -> Vec<u8> {
    selector(&signature(name, &[])).to_vec()
}

pub fn deposit_payload() -> Vec<u8> {
    no_args(DEPOSIT)
}

pub fn refund_round_one_payload() -> Vec<u8> {
    no_args(REFUND_ROUND_ONE)
}

pub fn refund_round_two_payload() -> Vec<u8> {
    no_args(REFUND_ROUND_TWO)
}

pub fn reassign_payload() -> Vec<u8> {
    no_args(REASSIGN)
}

fn deploy_verified_instance_inputs(signers: usize) -> Vec<AbiType> {
    let mut inputs = vec![AbiType::Bytes];
    for _ in 0..signers {
        inputs.extend([AbiType::Uint8, AbiType::Bytes32, AbiType::Bytes32]);
    }
    inputs
}

/// Selector of `deployVerifiedInstance` for the two-party contract.
pub fn deploy_verified_instance_selector() -> [u8; 4] {
    selector(&signature(
        templates::DEPLOY_VERIFIED_INSTANCE,
        &deploy_verified_instance_inputs(2),
    ))
}

/// Arguments for the dispute-path entry points.
pub fn deploy_verified_instance_payload(copy: &SignedCopy) -> Vec<u8> {
    let mut args = vec![Value::Bytes(copy.bytecode.clone())];
    for sig in &copy.signatures {
        args.extend([
            Value::Word(Word::from(sig.v)),
            Value::Word(sig.r.to_word()),
            Value::Word(sig.s.to_word()),
        ]);
    }
    let inputs = deploy_verified_instance_inputs(copy.signatures.len());
    encode_call(
        selector(&signature(templates::DEPLOY_VERIFIED_INSTANCE, &inputs)),
        &args,
    )
}

pub fn return_dispute_resolution_payload(onchain: &Address) -> Vec<u8> {
    encode_call(
        selector(&signature(
            templates::RETURN_DISPUTE_RESOLUTION,
            &[AbiType::Address],
        )),
        &[Value::address(onchain)],
    )
}

pub fn enforce_dispute_resolution_payload(winner: bool) -> Vec<u8> {
    encode_call(selector(&templates::enforce_signature()), &[Value::bool(winner)])
}

pub fn resolve_on_chain_payload() -> Vec<u8> {
    no_args(templates::RESOLVE_ON_CHAIN)
}

/// Betting state as stored by the on-chain contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OnChainState {
    #[serde(with = "balances_serde")]
    pub account_balance: [Word; 2],
    pub deployed_addr: Option<Address>,
    pub resolved: bool,
}

mod balances_serde {
    use super::Word;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(value: &[Word; 2], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(value.iter().map(|w| w.to_string()))
    }
}

impl OnChainState {
    pub fn read(chain: &Chain, contract: &Address, participants: &[Address; 2]) -> Self {
        let balance = |p: &Address| chain.storage(contract, map_slot_key(ACCOUNT_BALANCE, p.to_word()));
        Self {
            account_balance: [balance(&participants[0]), balance(&participants[1])],
            deployed_addr: Address::from_word(chain.storage(contract, slot_key(DEPLOYED_ADDR)))
                .filter(|a| !a.is_zero()),
            resolved: chain.storage(contract, slot_key(RESOLVED)) != Word::ZERO,
        }
    }

    pub fn recorded_total(&self) -> Word {
        self.account_balance[0] + self.account_balance[1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::{classify, split_and_pad, ClassifyPolicy};

    fn config() -> BettingConfig {
        BettingConfig::new([Address([1; 20]), Address([2; 20])], 100, 200, 300, b"x".to_vec())
    }

    #[test]
    fn validation() {
        assert!(config().validate().is_ok());
        let mut c = config();
        c.t2 = 50;
        assert!(matches!(c.validate(), Err(BettingError::TimeOrder(..))));
        let mut c = config();
        c.t1 = 0;
        assert!(c.validate().is_err());
        let mut c = config();
        c.participants[1] = c.participants[0];
        assert_eq!(c.validate(), Err(BettingError::SameParticipants));
        let mut c = config();
        c.deposit_amount = Word::ZERO;
        assert_eq!(c.validate(), Err(BettingError::ZeroDeposit));
        let mut c = config();
        c.penalty_amount = Word::ONE;
        assert_eq!(c.validate(), Err(BettingError::Penalty));
    }

    #[test]
    fn default_classification_matches_split() {
        let mut spec = betting_spec(&config()).unwrap();
        for f in &mut spec.functions {
            f.kind = None;
        }
        let spec = classify(&spec, &ClassifyPolicy::default()).unwrap();
        let (on, off) = split_and_pad(&spec).unwrap();
        let on_names: Vec<&str> = on.artifact().functions.iter().map(|f| f.name.as_str()).collect();
        let off_names: Vec<&str> = off.artifact().functions.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(
            on_names,
            [
                DEPOSIT,
                REFUND_ROUND_ONE,
                REFUND_ROUND_TWO,
                REASSIGN,
                templates::DEPLOY_VERIFIED_INSTANCE,
                templates::ENFORCE_DISPUTE_RESOLUTION
            ]
        );
        assert_eq!(off_names, [REVEAL, templates::RETURN_DISPUTE_RESOLUTION]);
    }

    #[test]
    fn deploy_payload_signature_has_seven_arguments() {
        assert_eq!(
            signature(
                templates::DEPLOY_VERIFIED_INSTANCE,
                &[
                    AbiType::Bytes,
                    AbiType::Uint8,
                    AbiType::Bytes32,
                    AbiType::Bytes32,
                    AbiType::Uint8,
                    AbiType::Bytes32,
                    AbiType::Bytes32
                ]
            ),
            "deployVerifiedInstance(bytes,uint8,bytes32,bytes32,uint8,bytes32,bytes32)"
        );
    }

    #[test]
    fn reference_rule_matches_digest_parity() {
        // keccak("abc") ends in 0x45 (odd), keccak("") ends in 0x70 (even)
        assert!(reference_reveal(b"abc"));
        assert!(!reference_reveal(b""));
    }
}
