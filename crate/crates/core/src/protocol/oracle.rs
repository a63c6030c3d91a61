//! Replays a run's intents against the unsplit contract.

use crate::betting::{self, OnChainState};
use crate::crypto::Address;
use crate::ir::Word;
use crate::ledger::{Chain, Receipt, Transaction};
use crate::split::{all_on_chain_artifact, serialize};

use super::{genesis_balance, Action, ProtocolError, ProtocolRun, GAS_LIMIT};

#[derive(Debug)]
pub struct OracleResult {
    pub chain: Chain,
    pub contract: Option<Address>,
    /// Function name for each committed transaction.
    pub labels: Vec<String>,
}

impl OracleResult {
    /// Final balances with the gas each participant paid added back.
    pub fn balances_excluding_gas(&self, participants: &[Address; 2]) -> [Word; 2] {
        participants.map(|p| self.chain.balance(&p) + self.chain.gas_paid(&p))
    }

    pub fn state(&self, participants: &[Address; 2]) -> Option<OnChainState> {
        self.contract
            .map(|c| OnChainState::read(&self.chain, &c, participants))
    }

    /// Gas of every transaction except contract creation.
    pub fn execution_gas(&self) -> u64 {
        self.chain
            .records()
            .iter()
            .filter(|r| r.tx.to.is_some())
            .map(|r| r.receipt.gas_used)
            .sum()
    }

    pub fn deployment_gas(&self) -> u64 {
        self.chain
            .records()
            .iter()
            .filter(|r| r.tx.to.is_none())
            .map(|r| r.receipt.gas_used)
            .sum()
    }
}

/// Executes the same participant actions, at the same times, on a single
/// contract that holds every function. A dispute becomes a call to
/// `resolveOnChain`; reporting back from an instance has no counterpart.
pub fn run_all_on_chain_oracle(run: &ProtocolRun) -> Result<OracleResult, ProtocolError> {
    let participants = run.config().participants;
    let mut chain = Chain::new(&[
        (participants[0], genesis_balance()),
        (participants[1], genesis_balance()),
    ])?;
    let mut contract = None;
    let mut labels = Vec::new();
    let Some(spec) = run.spec() else {
        return Ok(OracleResult {
            chain,
            contract,
            labels,
        });
    };
    let code = serialize(&all_on_chain_artifact(spec)?);

    for intent in run.intents() {
        if intent.time > chain.now() {
            chain.advance_to(intent.time);
        }
        let from = participants[intent.actor];
        let call = |to: Address, payload: Vec<u8>, value: Word| {
            Transaction::call(from, to, value, payload, GAS_LIMIT)
        };
        let (label, tx) = match (intent.action, contract) {
            (Action::Deploy, _) => ("create", Transaction::create(from, code.clone(), GAS_LIMIT)),
            (_, None) => continue,
            (Action::Deposit, Some(c)) => (
                betting::DEPOSIT,
                call(c, betting::deposit_payload(), run.config().deposit_amount),
            ),
            (Action::RefundRoundOne, Some(c)) => (
                betting::REFUND_ROUND_ONE,
                call(c, betting::refund_round_one_payload(), Word::ZERO),
            ),
            (Action::RefundRoundTwo, Some(c)) => (
                betting::REFUND_ROUND_TWO,
                call(c, betting::refund_round_two_payload(), Word::ZERO),
            ),
            (Action::Reassign, Some(c)) => (
                betting::REASSIGN,
                call(c, betting::reassign_payload(), Word::ZERO),
            ),
            (Action::Dispute, Some(c)) => (
                crate::split::RESOLVE_ON_CHAIN,
                call(c, betting::resolve_on_chain_payload(), Word::ZERO),
            ),
            (Action::ReturnDisputeResolution, Some(_)) => continue,
        };
        let receipt: Receipt = chain.submit_transaction(tx)?;
        if intent.action == Action::Deploy && contract.is_none() {
            contract = receipt.created_address;
        }
        labels.push(label.to_string());
    }
    Ok(OracleResult {
        chain,
        contract,
        labels,
    })
}
