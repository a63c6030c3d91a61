//! End-to-end driver for the four-stage mechanism on the betting contract.
//!
//! A [`ProtocolRun`] owns a chain, two participant agents and the off-chain
//! channel they talk over. Stage operations advance the run in order:
//! split/generate, deploy/sign, submit/challenge, dispute/resolve.
//! Every on-chain action an agent takes is also logged as an [`Intent`] so
//! the same behaviour can be replayed against the unsplit contract.

mod oracle;
mod report;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use oracle::{run_all_on_chain_oracle, OracleResult};
pub use report::{gas_report, GasReport};

use crate::betting::{
    self, betting_spec, BettingConfig, BettingError, OnChainState, REVEAL,
};
use crate::crypto::{keccak256, Address, PrivateKey, Signature};
use crate::ir::{ContractSpec, Instr, Word};
use crate::ledger::{ether, evaluate_offchain, Chain, LedgerError, Receipt, Transaction};
use crate::split::{
    classify, serialize, split_and_pad, verify_copy, ClassifyPolicy, OffChainArtifact,
    OnChainArtifact, SignedCopy, SplitError, Verification,
};

/// Gas limit attached to every harness transaction.
pub const GAS_LIMIT: u64 = 1_000_000_000;

/// Starting balance of each participant.
pub fn genesis_balance() -> Word {
    ether(10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Honest,
    /// Never concedes a loss.
    SilentLoser,
    /// Submits transactions it is not entitled to: as winner it tries to
    /// collect through `reassign`, as loser it tries to pull its deposit back.
    FalseSubmitter,
    /// Never concedes a loss and disputes with a doctored copy.
    TamperedCopySubmitter,
    /// Refuses to countersign the off-chain contract.
    NonSigner,
}

impl Policy {
    pub const ADVERSARIAL: [Policy; 3] = [
        Policy::SilentLoser,
        Policy::FalseSubmitter,
        Policy::TamperedCopySubmitter,
    ];

    pub fn is_honest(&self) -> bool {
        matches!(self, Policy::Honest)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Honest => "honest",
            Policy::SilentLoser => "silent_loser",
            Policy::FalseSubmitter => "false_submitter",
            Policy::TamperedCopySubmitter => "tampered_copy_submitter",
            Policy::NonSigner => "non_signer",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ParticipantAgent {
    pub name: String,
    key: PrivateKey,
    pub address: Address,
    pub policy: Policy,
}

impl ParticipantAgent {
    pub fn new(name: impl Into<String>, key: PrivateKey, policy: Policy) -> Self {
        let address = key.address();
        Self {
            name: name.into(),
            key,
            address,
            policy,
        }
    }

    pub fn sign(&self, bytecode: &[u8]) -> Signature {
        crate::crypto::ecsign(&keccak256(bytecode), &self.key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    SplitGenerate,
    DeploySign,
    SubmitChallenge,
    DisputeResolve,
    Completed,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::SplitGenerate => "split_generate",
            Stage::DeploySign => "deploy_sign",
            Stage::SubmitChallenge => "submit_challenge",
            Stage::DisputeResolve => "dispute_resolve",
            Stage::Completed => "completed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageMarker {
    pub stage: Stage,
    pub time: u64,
    /// Number of transactions committed before the transition.
    pub after_tx: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChannelMessage {
    pub from: Address,
    pub to: Address,
    pub kind: String,
    #[serde(serialize_with = "hex_bytes")]
    pub bytes: Vec<u8>,
}

fn hex_bytes<S: serde::Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(v))
}

/// Synchronous in-process message log between participants.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OffChainChannel {
    pub log: Vec<ChannelMessage>,
}

impl OffChainChannel {
    pub fn send(&mut self, from: Address, to: Address, kind: &str, bytes: Vec<u8>) {
        self.log.push(ChannelMessage {
            from,
            to,
            kind: kind.into(),
            bytes,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Deploy,
    Deposit,
    RefundRoundOne,
    RefundRoundTwo,
    Reassign,
    /// Submitting a signed copy to `deployVerifiedInstance`.
    Dispute,
    ReturnDisputeResolution,
}

/// An on-chain action taken by an agent, kept for replay on the oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Intent {
    pub time: u64,
    pub actor: usize,
    pub action: Action,
    pub tx_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("operation requires stage {expected}, run is at {actual}")]
    Stage { expected: Stage, actual: Stage },
    #[error("run was aborted: {0}")]
    Aborted(String),
    #[error("participant index {0} out of range")]
    NoSuchParticipant(usize),
    #[error("agents do not match the configured participants")]
    ParticipantMismatch,
    #[error(transparent)]
    Config(#[from] BettingError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

pub struct ProtocolRun {
    stage: Stage,
    outcome: Option<(Outcome, String)>,
    config: BettingConfig,
    spec: Option<ContractSpec>,
    agents: [ParticipantAgent; 2],
    chain: Chain,
    onchain: Option<OnChainArtifact>,
    offchain: Option<OffChainArtifact>,
    onchain_addr: Option<Address>,
    instance_addr: Option<Address>,
    copies: BTreeMap<Address, SignedCopy>,
    channel: OffChainChannel,
    stage_log: Vec<StageMarker>,
    intents: Vec<Intent>,
    tx_labels: Vec<(String, Stage)>,
}

impl ProtocolRun {
    pub fn new(config: BettingConfig, agents: [ParticipantAgent; 2]) -> Result<Self, ProtocolError> {
        config.validate()?;
        if config.participants != [agents[0].address, agents[1].address] {
            return Err(ProtocolError::ParticipantMismatch);
        }
        let chain = Chain::new(&[
            (agents[0].address, genesis_balance()),
            (agents[1].address, genesis_balance()),
        ])?;
        Ok(Self {
            stage: Stage::SplitGenerate,
            outcome: None,
            config,
            spec: None,
            agents,
            chain,
            onchain: None,
            offchain: None,
            onchain_addr: None,
            instance_addr: None,
            copies: BTreeMap::new(),
            channel: OffChainChannel::default(),
            stage_log: vec![StageMarker {
                stage: Stage::SplitGenerate,
                time: 0,
                after_tx: 0,
            }],
            intents: Vec::new(),
            tx_labels: Vec::new(),
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref().map(|(o, _)| o)
    }

    pub fn abort_reason(&self) -> Option<&str> {
        self.outcome
            .as_ref()
            .filter(|(o, _)| *o == Outcome::Aborted)
            .map(|(_, r)| r.as_str())
    }

    pub fn config(&self) -> &BettingConfig {
        &self.config
    }

    /// The classified contract, once split/generate has run.
    pub fn spec(&self) -> Option<&ContractSpec> {
        self.spec.as_ref()
    }

    pub fn agents(&self) -> &[ParticipantAgent; 2] {
        &self.agents
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn chain_mut(&mut self) -> &mut Chain {
        &mut self.chain
    }

    pub fn onchain(&self) -> Option<&OnChainArtifact> {
        self.onchain.as_ref()
    }

    pub fn offchain(&self) -> Option<&OffChainArtifact> {
        self.offchain.as_ref()
    }

    pub fn onchain_address(&self) -> Option<Address> {
        self.onchain_addr
    }

    pub fn instance_address(&self) -> Option<Address> {
        self.instance_addr
    }

    pub fn copies(&self) -> &BTreeMap<Address, SignedCopy> {
        &self.copies
    }

    pub fn channel(&self) -> &OffChainChannel {
        &self.channel
    }

    pub fn stage_log(&self) -> &[StageMarker] {
        &self.stage_log
    }

    pub fn intents(&self) -> &[Intent] {
        &self.intents
    }

    /// Function name and stage for each committed transaction.
    pub fn tx_labels(&self) -> &[(String, Stage)] {
        &self.tx_labels
    }

    pub fn state(&self) -> Option<OnChainState> {
        self.onchain_addr
            .map(|a| OnChainState::read(&self.chain, &a, &self.config.participants))
    }

    pub fn advance_time(&mut self, delta: i64) -> Result<(), ProtocolError> {
        Ok(self.chain.advance_time(delta)?)
    }

    pub fn advance_to(&mut self, time: u64) {
        self.chain.advance_to(time);
    }

    fn agent(&self, index: usize) -> Result<&ParticipantAgent, ProtocolError> {
        self.agents
            .get(index)
            .ok_or(ProtocolError::NoSuchParticipant(index))
    }

    fn expect_stage(&self, expected: Stage) -> Result<(), ProtocolError> {
        if let Some((Outcome::Aborted, reason)) = &self.outcome {
            return Err(ProtocolError::Aborted(reason.clone()));
        }
        if self.stage != expected {
            return Err(ProtocolError::Stage {
                expected,
                actual: self.stage,
            });
        }
        Ok(())
    }

    fn enter(&mut self, stage: Stage) {
        debug_assert!(stage > self.stage, "stage regression");
        self.stage = stage;
        self.stage_log.push(StageMarker {
            stage,
            time: self.chain.now(),
            after_tx: self.chain.records().len(),
        });
    }

    fn abort(&mut self, reason: impl Into<String>) {
        self.outcome = Some((Outcome::Aborted, reason.into()));
    }

    fn submit(&mut self, actor: usize, action: Option<Action>, label: &str, tx: Transaction) -> Result<Receipt, ProtocolError> {
        let receipt = self.chain.submit_transaction(tx)?;
        let tx_index = self.chain.records().len() - 1;
        self.tx_labels.push((label.to_string(), self.stage));
        if let Some(action) = action {
            self.intents.push(Intent {
                time: self.chain.now(),
                actor,
                action,
                tx_index,
            });
        }
        Ok(receipt)
    }

    /// Builds, classifies and splits the betting contract.
    pub fn stage_split_generate(&mut self, policy: &ClassifyPolicy) -> Result<(), ProtocolError> {
        self.expect_stage(Stage::SplitGenerate)?;
        let mut spec = betting_spec(&self.config)?;
        // start from an unclassified contract so the policy decides
        for f in &mut spec.functions {
            f.kind = None;
        }
        let spec = classify(&spec, policy)?;
        let (on, off) = split_and_pad(&spec)?;
        self.spec = Some(spec);
        self.onchain = Some(on);
        self.offchain = Some(off);
        self.enter(Stage::DeploySign);
        Ok(())
    }

    /// Deploys the agreed on-chain contract and has every agent countersign
    /// the off-chain bytecode.
    pub fn stage_deploy_sign(&mut self, deployer: usize) -> Result<(), ProtocolError> {
        self.expect_stage(Stage::DeploySign)?;
        let code = self.onchain.as_ref().expect("split done").to_bytecode();
        self.deploy_and_sign(deployer, code)
    }

    /// As [`ProtocolRun::stage_deploy_sign`], but the deployer submits `code`
    /// instead of the agreed on-chain bytecode.
    pub fn stage_deploy_sign_with_code(&mut self, deployer: usize, code: Vec<u8>) -> Result<(), ProtocolError> {
        self.expect_stage(Stage::DeploySign)?;
        self.deploy_and_sign(deployer, code)
    }

    fn deploy_and_sign(&mut self, deployer: usize, code: Vec<u8>) -> Result<(), ProtocolError> {
        let from = self.agent(deployer)?.address;
        let receipt = self.submit(deployer, Some(Action::Deploy), "create", Transaction::create(from, code.clone(), GAS_LIMIT))?;
        let Some(addr) = receipt.created_address else {
            self.abort(format!("on-chain deployment failed: {}", receipt.status));
            return Ok(());
        };
        self.onchain_addr = Some(addr);

        let agreed = self.onchain.as_ref().expect("split done").to_bytecode();
        if keccak256(&code) != keccak256(&agreed) {
            self.abort("deployed on-chain contract differs from the agreed artifact");
            return Ok(());
        }

        let bytecode = self.offchain.as_ref().expect("split done").to_bytecode();
        let addresses = self.config.participants;
        for (i, agent) in self.agents.iter().enumerate() {
            if i != deployer {
                self.channel
                    .send(addresses[deployer], agent.address, "offchain_bytecode", bytecode.clone());
            }
        }
        let mut signatures = Vec::with_capacity(2);
        for agent in &self.agents {
            if agent.policy == Policy::NonSigner {
                let reason = format!("{} refused to sign the off-chain contract", agent.name);
                self.abort(reason);
                return Ok(());
            }
            signatures.push(agent.sign(&bytecode));
        }
        for (i, sig) in signatures.iter().enumerate() {
            for (j, other) in addresses.iter().enumerate() {
                if i != j {
                    self.channel
                        .send(addresses[i], *other, "signature", sig.to_bytes().to_vec());
                }
            }
        }
        let copy = SignedCopy {
            bytecode: bytecode.clone(),
            signatures,
        };
        for agent in &self.agents {
            if verify_copy(&copy, &addresses) != Verification::Accepted {
                let reason = format!("{} could not verify the signed copy", agent.name);
                self.abort(reason);
                return Ok(());
            }
            self.copies.insert(agent.address, copy.clone());
        }
        self.chain.register_offchain(addr, &bytecode)?;
        self.enter(Stage::SubmitChallenge);
        Ok(())
    }

    fn contract(&self) -> Address {
        self.onchain_addr.expect("deployed")
    }

    fn call(&mut self, actor: usize, action: Action, label: &str, payload: Vec<u8>, value: Word) -> Result<Receipt, ProtocolError> {
        let from = self.agent(actor)?.address;
        let to = self.contract();
        self.submit(actor, Some(action), label, Transaction::call(from, to, value, payload, GAS_LIMIT))
    }

    pub fn deposit(&mut self, actor: usize) -> Result<Receipt, ProtocolError> {
        self.expect_stage(Stage::SubmitChallenge)?;
        let value = self.config.deposit_amount;
        self.call(actor, Action::Deposit, betting::DEPOSIT, betting::deposit_payload(), value)
    }

    pub fn refund_round_one(&mut self, actor: usize) -> Result<Receipt, ProtocolError> {
        self.expect_stage(Stage::SubmitChallenge)?;
        self.call(actor, Action::RefundRoundOne, betting::REFUND_ROUND_ONE, betting::refund_round_one_payload(), Word::ZERO)
    }

    pub fn refund_round_two(&mut self, actor: usize) -> Result<Receipt, ProtocolError> {
        self.expect_stage(Stage::SubmitChallenge)?;
        self.call(actor, Action::RefundRoundTwo, betting::REFUND_ROUND_TWO, betting::refund_round_two_payload(), Word::ZERO)
    }

    pub fn reassign(&mut self, actor: usize) -> Result<Receipt, ProtocolError> {
        self.call(actor, Action::Reassign, betting::REASSIGN, betting::reassign_payload(), Word::ZERO)
    }

    /// `reveal()` as computed by an agent from its own signed copy.
    pub fn evaluate_reveal(&self, actor: usize) -> Option<bool> {
        let agent = self.agents.get(actor)?;
        let copy = self.copies.get(&agent.address)?;
        let artifact = crate::split::deserialize(&copy.bytecode).ok()?;
        evaluate_offchain(&artifact, REVEAL, agent.address, self.chain.now())
            .ok()
            .flatten()
            .map(|w| w != Word::ZERO)
    }

    fn resolved(&self) -> bool {
        self.state().is_some_and(|s| s.resolved)
    }

    /// Agents act on the off-chain result. An honest loser concedes; the
    /// run completes if the pot was paid and otherwise moves to dispute.
    /// Adversarial agents act before honest ones.
    pub fn stage_submit_challenge(&mut self) -> Result<(), ProtocolError> {
        self.expect_stage(Stage::SubmitChallenge)?;
        let state = self.state().expect("deployed");
        let met = state.account_balance.iter().all(|b| *b == self.config.deposit_amount);
        if !met {
            for i in 0..2 {
                if self.agents[i].policy.is_honest() && state.account_balance[i] != Word::ZERO {
                    self.refund_round_two(i)?;
                }
            }
            self.finish();
            return Ok(());
        }

        let order = self.acting_order();
        for i in order {
            let Some(bob_wins) = self.evaluate_reveal(i) else {
                continue;
            };
            let is_loser = usize::from(bob_wins) != i;
            match (self.agents[i].policy, is_loser) {
                (Policy::Honest, true) => {
                    self.reassign(i)?;
                }
                (Policy::FalseSubmitter, false) => {
                    self.reassign(i)?;
                }
                (Policy::FalseSubmitter, true) => {
                    self.refund_round_two(i)?;
                }
                _ => {}
            }
        }
        if self.resolved() {
            self.finish();
        } else {
            self.enter(Stage::DisputeResolve);
        }
        Ok(())
    }

    fn acting_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..2).filter(|i| !self.agents[*i].policy.is_honest()).collect();
        order.extend((0..2).filter(|i| self.agents[*i].policy.is_honest()));
        order
    }

    fn finish(&mut self) {
        self.outcome = Some((Outcome::Completed, String::new()));
        self.enter(Stage::Completed);
    }

    /// A copy of the agreed off-chain contract whose `reveal` reports the
    /// opposite result, still carrying the genuine signatures.
    pub fn tampered_copy(copy: &SignedCopy) -> SignedCopy {
        let mut artifact = crate::split::deserialize(&copy.bytecode).expect("agreed copy decodes");
        if let Some(f) = artifact.functions.iter_mut().find(|f| f.name == REVEAL) {
            if let Some(pos) = f.body.iter().rposition(|i| *i == Instr::Return) {
                f.body.insert(pos, Instr::IsZero);
            }
        }
        SignedCopy {
            bytecode: serialize(&artifact),
            signatures: copy.signatures.clone(),
        }
    }

    /// One agent's dispute attempt: submit its copy (tampered or not) to
    /// `deployVerifiedInstance`, then ask the instance to report back.
    pub fn stage_dispute_resolve(&mut self, disputant: usize) -> Result<(), ProtocolError> {
        self.expect_stage(Stage::DisputeResolve)?;
        let agent = self.agent(disputant)?.clone();
        let Some(copy) = self.copies.get(&agent.address).cloned() else {
            return Ok(());
        };
        let copy = if agent.policy == Policy::TamperedCopySubmitter {
            Self::tampered_copy(&copy)
        } else {
            copy
        };
        if self.state().and_then(|s| s.deployed_addr).is_none() {
            let payload = betting::deploy_verified_instance_payload(&copy);
            let receipt = self.call(
                disputant,
                Action::Dispute,
                crate::split::DEPLOY_VERIFIED_INSTANCE,
                payload,
                Word::ZERO,
            )?;
            if !receipt.status.is_success() {
                return Ok(());
            }
        }
        let Some(instance) = self.state().and_then(|s| s.deployed_addr) else {
            return Ok(());
        };
        self.instance_addr = Some(instance);
        let payload = betting::return_dispute_resolution_payload(&self.contract());
        self.submit(
            disputant,
            Some(Action::ReturnDisputeResolution),
            crate::split::RETURN_DISPUTE_RESOLUTION,
            Transaction::call(agent.address, instance, Word::ZERO, payload, GAS_LIMIT),
        )?;
        if self.resolved() {
            self.finish();
        }
        Ok(())
    }

    /// Every agent that is owed the pot, or is adversarial, takes its turn
    /// to dispute; adversaries go first.
    pub fn dispute_all(&mut self) -> Result<(), ProtocolError> {
        self.expect_stage(Stage::DisputeResolve)?;
        for i in self.acting_order() {
            if self.stage != Stage::DisputeResolve {
                break;
            }
            let policy = self.agents[i].policy;
            let is_winner = self.evaluate_reveal(i).map(|bob| usize::from(bob) == i);
            let wants = match policy {
                Policy::Honest => is_winner == Some(true),
                Policy::TamperedCopySubmitter => true,
                _ => is_winner == Some(true),
            };
            if wants {
                self.stage_dispute_resolve(i)?;
            }
        }
        Ok(())
    }

    /// Index of the participant that received the pot, if it was paid.
    pub fn winner(&self) -> Option<usize> {
        let contract = self.onchain_addr?;
        let pot = self.config.pot();
        self.chain.records().iter().rev().find_map(|r| {
            if !r.receipt.status.is_success() {
                return None;
            }
            r.receipt.emitted_messages.iter().find_map(|m| {
                (m.from == contract && m.value == pot)
                    .then(|| self.config.participants.iter().position(|p| *p == m.to))
                    .flatten()
            })
        })
    }

    /// Final balances with the gas each participant paid added back.
    pub fn balances_excluding_gas(&self) -> [Word; 2] {
        self.config
            .participants
            .map(|p| self.chain.balance(&p) + self.chain.gas_paid(&p))
    }

    /// True when any 16-byte window of the off-chain bytecode occurs in an
    /// on-chain transaction payload.
    pub fn privacy_leak(&self) -> bool {
        match &self.offchain {
            Some(off) => {
                let payloads = self.chain.records().iter().map(|r| r.tx.payload.as_slice());
                shares_window(&off.to_bytecode(), payloads, PRIVACY_WINDOW)
            }
            None => false,
        }
    }
}

pub const PRIVACY_WINDOW: usize = 16;

/// Whether any `window`-byte substring of `secret` appears in any haystack.
pub fn shares_window<'a>(secret: &[u8], haystacks: impl IntoIterator<Item = &'a [u8]>, window: usize) -> bool {
    if secret.len() < window {
        return false;
    }
    let needles: HashSet<&[u8]> = secret.windows(window).collect();
    haystacks
        .into_iter()
        .any(|h| h.windows(window).any(|w| needles.contains(w)))
}

#[cfg(test)]
mod tests;

/// Two agents with keys derived from `seed`: agent `i` uses
/// `keccak256(seed || i)` as its private key.
pub fn agents_from_seed(seed: &[u8; 32], policies: [Policy; 2]) -> Result<[ParticipantAgent; 2], crate::crypto::CryptoError> {
    let make = |i: u8, name: &str| -> Result<ParticipantAgent, crate::crypto::CryptoError> {
        let mut input = seed.to_vec();
        input.push(i);
        let (key, _, _) = crate::crypto::derive_keypair(&keccak256(&input).0)?;
        Ok(ParticipantAgent::new(name, key, policies[usize::from(i)]))
    };
    Ok([make(0, "alice")?, make(1, "bob")?])
}

/// Timing of a run. Times are absolute simulator seconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    #[serde(default)]
    pub deployer: usize,
    pub deploy_at: u64,
    /// Time each participant deposits, or `None` to never deposit.
    pub deposits: [Option<u64>; 2],
    /// Participants that withdraw again in the first refund round.
    #[serde(default)]
    pub refund_round_one: Vec<usize>,
    pub challenge_at: u64,
    pub dispute_at: u64,
}

impl Schedule {
    /// Deploy at 1, both deposit at 2, act just after T2 and dispute just
    /// after T3.
    pub fn standard(config: &BettingConfig) -> Self {
        Self {
            deployer: 0,
            deploy_at: 1,
            deposits: [Some(2), Some(2)],
            refund_round_one: Vec::new(),
            challenge_at: config.t2 + 1,
            dispute_at: config.t3 + 1,
        }
    }

    /// Runs every stage with the default classification policy.
    pub fn execute(&self, run: &mut ProtocolRun) -> Result<(), ProtocolError> {
        self.execute_with(run, &ClassifyPolicy::default())
    }

    pub fn execute_with(&self, run: &mut ProtocolRun, policy: &ClassifyPolicy) -> Result<(), ProtocolError> {
        run.stage_split_generate(policy)?;
        run.advance_to(self.deploy_at);
        run.stage_deploy_sign(self.deployer)?;
        if run.outcome().is_some() {
            return Ok(());
        }
        let mut order: Vec<(u64, usize)> = self
            .deposits
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (t, i)))
            .collect();
        order.sort();
        for (t, i) in order {
            run.advance_to(t);
            run.deposit(i)?;
        }
        for &i in &self.refund_round_one {
            run.refund_round_one(i)?;
        }
        run.advance_to(self.challenge_at);
        run.stage_submit_challenge()?;
        if run.stage() == Stage::DisputeResolve {
            run.advance_to(self.dispute_at);
            run.dispute_all()?;
        }
        Ok(())
    }
}
