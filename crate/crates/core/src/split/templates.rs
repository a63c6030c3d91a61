//! Bodies of the padded dispute functions.
//!
//! Each template is parameterized by the participant count and by the guard
//! configuration carried in [`DisputeConfig`]; the bodies themselves never
//! change, so every participant pads a given contract to identical bytes.

use crate::ir::{
    AbiType, DisputeConfig, FunctionKind, FunctionSpec, Guard, Instr, Visibility, Word,
    ACCOUNT_BALANCE, DEPLOYED_ADDR, RESOLVED,
};

pub const DEPLOY_VERIFIED_INSTANCE: &str = "deployVerifiedInstance";
pub const ENFORCE_DISPUTE_RESOLUTION: &str = "enforceDisputeResolution";
pub const RETURN_DISPUTE_RESOLUTION: &str = "returnDisputeResolution";
/// Stand-in for the dispute pair when every function lives on-chain.
pub const RESOLVE_ON_CHAIN: &str = "resolveOnChain";

pub const EXTRA_FUNCTIONS: [&str; 4] = [
    DEPLOY_VERIFIED_INSTANCE,
    ENFORCE_DISPUTE_RESOLUTION,
    RETURN_DISPUTE_RESOLUTION,
    RESOLVE_ON_CHAIN,
];

pub fn enforce_signature() -> String {
    crate::ir::signature(ENFORCE_DISPUTE_RESOLUTION, &[AbiType::Bool])
}

fn dispute_guards(dispute: &DisputeConfig) -> Vec<Guard> {
    let mut guards = Vec::new();
    if let Some(after) = &dispute.after {
        guards.push(Guard::After {
            param: after.clone(),
        });
    }
    guards.push(Guard::ParticipantOnly);
    if dispute.amount_met {
        guards.push(Guard::AmountMet);
    }
    guards
}

pub(crate) fn require_unresolved(body: &mut Vec<Instr>) {
    body.extend([
        Instr::Slot {
            name: RESOLVED.into(),
        },
        Instr::SLoad,
        Instr::IsZero,
        Instr::Require {
            reason: "already resolved".into(),
        },
    ]);
}

/// Marks the contract resolved, zeroes every recorded balance and pays their
/// sum to `participants[winner]`, where the winner index is on the stack.
/// Balances are read into a temporary before they are cleared.
pub(crate) fn pay_pot_to_indexed_winner(body: &mut Vec<Instr>, participants: usize) {
    body.extend([
        Instr::Slot {
            name: RESOLVED.into(),
        },
        Instr::Push { value: Word::ONE },
        Instr::SStore,
        Instr::Push { value: Word::ZERO },
    ]);
    for i in 0..participants {
        body.extend([
            Instr::Participant { index: i as u8 },
            Instr::MapSlot {
                name: ACCOUNT_BALANCE.into(),
            },
            Instr::SLoad,
            Instr::Add,
        ]);
    }
    for i in 0..participants {
        body.extend([
            Instr::Participant { index: i as u8 },
            Instr::MapSlot {
                name: ACCOUNT_BALANCE.into(),
            },
            Instr::Push { value: Word::ZERO },
            Instr::SStore,
        ]);
    }
    // [winner_index, sum] -> [recipient, sum]
    body.extend([
        Instr::Swap { depth: 1 },
        Instr::PickParticipant,
        Instr::Swap { depth: 1 },
        Instr::Transfer,
    ]);
}

/// `deployVerifiedInstance(bytes, (uint8, bytes32, bytes32) per participant)`
pub fn deploy_verified_instance(participants: usize, dispute: &DisputeConfig) -> FunctionSpec {
    let mut inputs = vec![AbiType::Bytes];
    for _ in 0..participants {
        inputs.extend([AbiType::Uint8, AbiType::Bytes32, AbiType::Bytes32]);
    }

    let mut body = vec![
        Instr::Slot {
            name: DEPLOYED_ADDR.into(),
        },
        Instr::SLoad,
        Instr::IsZero,
        Instr::Require {
            reason: "verified instance already deployed".into(),
        },
        Instr::Arg { index: 0 },
        Instr::Keccak,
    ];
    for i in 0..participants {
        let base = 1 + 3 * i as u8;
        body.extend([
            Instr::Dup { depth: 1 },
            Instr::Arg { index: base },
            Instr::Arg { index: base + 1 },
            Instr::Arg { index: base + 2 },
            Instr::EcRecover,
            Instr::Participant { index: i as u8 },
            Instr::Eq,
            Instr::Require {
                reason: format!("signature {i} does not recover to participant {i}"),
            },
        ]);
    }
    body.extend([
        Instr::Pop,
        Instr::Slot {
            name: DEPLOYED_ADDR.into(),
        },
        Instr::Arg { index: 0 },
        Instr::Create,
        Instr::SStore,
    ]);

    FunctionSpec {
        name: DEPLOY_VERIFIED_INSTANCE.into(),
        kind: Some(FunctionKind::Light),
        transfers_currency: false,
        payable: false,
        visibility: Visibility::Public,
        inputs,
        returns: None,
        modifiers: dispute_guards(dispute),
        body,
    }
}

/// `enforceDisputeResolution(bool)`, callable only by the verified instance.
pub fn enforce_dispute_resolution(participants: usize) -> FunctionSpec {
    let mut body = Vec::new();
    require_unresolved(&mut body);
    body.push(Instr::Arg { index: 0 });
    pay_pot_to_indexed_winner(&mut body, participants);

    FunctionSpec {
        name: ENFORCE_DISPUTE_RESOLUTION.into(),
        kind: Some(FunctionKind::Light),
        transfers_currency: true,
        payable: false,
        visibility: Visibility::External,
        inputs: vec![AbiType::Bool],
        returns: None,
        modifiers: vec![Guard::DeployedAddrOnly],
        body,
    }
}

/// `returnDisputeResolution(address)`: evaluates the resolution function and
/// reports it to the on-chain contract at the given address.
pub fn return_dispute_resolution(resolution: &str) -> FunctionSpec {
    FunctionSpec {
        name: RETURN_DISPUTE_RESOLUTION.into(),
        kind: Some(FunctionKind::Heavy),
        transfers_currency: false,
        payable: false,
        visibility: Visibility::Public,
        inputs: vec![AbiType::Address],
        returns: None,
        modifiers: vec![Guard::ParticipantOnly],
        body: vec![
            Instr::Arg { index: 0 },
            Instr::Invoke {
                function: resolution.into(),
            },
            Instr::Call {
                selector: crate::ir::selector(&enforce_signature()),
                args: 1,
            },
            Instr::Pop,
        ],
    }
}

/// All-on-chain counterpart of the dispute pair: computes the resolution on
/// the public contract and pays out directly.
pub fn resolve_on_chain(
    resolution: &str,
    participants: usize,
    dispute: &DisputeConfig,
) -> FunctionSpec {
    let mut body = Vec::new();
    require_unresolved(&mut body);
    body.push(Instr::Invoke {
        function: resolution.into(),
    });
    pay_pot_to_indexed_winner(&mut body, participants);

    FunctionSpec {
        name: RESOLVE_ON_CHAIN.into(),
        kind: Some(FunctionKind::Light),
        transfers_currency: true,
        payable: false,
        visibility: Visibility::Public,
        inputs: vec![],
        returns: None,
        modifiers: dispute_guards(dispute),
        body,
    }
}
