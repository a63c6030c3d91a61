//! A deterministic single-chain simulator.
//!
//! Transactions execute one at a time against an explicit clock. Gas is
//! charged at a price of one wei per unit and burned. A transaction that
//! reverts leaves no trace except the sender's nonce bump and gas charge.

mod vm;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::crypto::{contract_address, Address};
use crate::ir::{slot_key, Word};
use crate::split::{deserialize, Artifact, CodecError};

/// Fixed gas table.
pub mod gas {
    pub const TRANSACTION: u64 = 21_000;
    pub const PAYLOAD_BYTE: u64 = 16;
    pub const CREATE: u64 = 32_000;
    pub const CODE_BYTE: u64 = 200;
    pub const ECRECOVER: u64 = 3_000;
    pub const INSTRUCTION: u64 = 10;

    pub fn intrinsic(payload_len: usize) -> u64 {
        TRANSACTION + PAYLOAD_BYTE * payload_len as u64
    }

    pub fn creation(code_len: usize) -> u64 {
        CREATE + CODE_BYTE * code_len as u64
    }
}

pub const ETHER: u128 = 1_000_000_000_000_000_000;

pub fn ether(n: u64) -> Word {
    Word::from(n) * Word::from(ETHER)
}

pub const MAX_CALL_DEPTH: usize = 64;
pub const MAX_STACK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountKind {
    Eoa,
    Contract,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Account {
    pub kind: AccountKind,
    pub balance: Word,
    pub nonce: u64,
    pub code: Option<Arc<Artifact>>,
    pub code_len: usize,
    pub storage: BTreeMap<Word, Word>,
}

impl Account {
    fn eoa(balance: Word) -> Self {
        Self {
            kind: AccountKind::Eoa,
            balance,
            nonce: 0,
            code: None,
            code_len: 0,
            storage: BTreeMap::new(),
        }
    }

    /// A new contract; parameters become initial storage and the nonce
    /// starts at one.
    fn contract(code: Artifact, code_len: usize, balance: Word) -> Self {
        let storage = code
            .parameters
            .iter()
            .filter(|p| p.value != Word::ZERO)
            .map(|p| (slot_key(&p.name), p.value))
            .collect();
        Self {
            kind: AccountKind::Contract,
            balance,
            nonce: 1,
            code: Some(Arc::new(code)),
            code_len,
            storage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub from: Address,
    /// `None` creates a contract from `payload`.
    pub to: Option<Address>,
    #[serde(with = "crate::ir::word_serde")]
    pub value: Word,
    #[serde(with = "crate::ir::bytes_serde")]
    pub payload: Vec<u8>,
    pub gas_limit: u64,
}

impl Transaction {
    pub fn call(from: Address, to: Address, value: Word, payload: Vec<u8>, gas_limit: u64) -> Self {
        Self {
            from,
            to: Some(to),
            value,
            payload,
            gas_limit,
        }
    }

    pub fn create(from: Address, code: Vec<u8>, gas_limit: u64) -> Self {
        Self {
            from,
            to: None,
            value: Word::ZERO,
            payload: code,
            gas_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum TxStatus {
    Success,
    Reverted(String),
}

impl TxStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, TxStatus::Success)
    }
}

impl fmt::Display for TxStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TxStatus::Success => f.write_str("success"),
            TxStatus::Reverted(reason) => write!(f, "reverted: {reason}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Call,
    Create,
    Transfer,
}

/// A message sent by contract code during a transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InternalMessage {
    pub kind: MessageKind,
    pub from: Address,
    pub to: Address,
    #[serde(with = "crate::ir::word_serde")]
    pub value: Word,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub status: TxStatus,
    pub gas_used: u64,
    pub created_address: Option<Address>,
    pub emitted_messages: Vec<InternalMessage>,
    /// Word returned by the entry point, if any.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_word")]
    pub output: Option<Word>,
}

mod opt_word {
    use super::Word;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<Word>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(w) => s.serialize_str(&w.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Word>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| crate::ir::word_serde::parse(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainClock {
    pub now: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("duplicate genesis address {0}")]
    DuplicateGenesis(Address),
    #[error("time cannot move backwards (delta {0})")]
    NegativeTime(i64),
    #[error("clock overflow")]
    ClockOverflow,
    #[error("unknown sender {0}")]
    UnknownSender(Address),
    #[error("sender {0} is not an externally owned account")]
    SenderNotEoa(Address),
    #[error("sender {0} cannot cover value plus gas limit")]
    InsufficientBalance(Address),
    #[error("no contract at {0}")]
    NoContract(Address),
    #[error("event log refers to missing transaction {0}")]
    MissingTransaction(usize),
    #[error("invalid off-chain code: {0}")]
    Code(#[from] CodecError),
}

/// One committed transaction together with when it ran and what it did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub index: usize,
    pub time: u64,
    pub tx: Transaction,
    pub receipt: Receipt,
}

/// Simulator events in commit order, sufficient to replay a chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ChainEvent {
    AdvanceTime { delta: u64 },
    Transaction { index: usize },
    RegisterOffchain {
        contract: Address,
        #[serde(with = "crate::ir::bytes_serde")]
        bytecode: Vec<u8>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    Balance,
    Storage(Word),
    CodePresent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    accounts: BTreeMap<Address, Account>,
    clock: ChainClock,
    genesis: Vec<(Address, Word)>,
    records: Vec<TxRecord>,
    events: Vec<ChainEvent>,
    gas_burned: Word,
    gas_paid: BTreeMap<Address, Word>,
    offchain: BTreeMap<Address, Arc<Artifact>>,
}

impl Chain {
    pub fn new(genesis: &[(Address, Word)]) -> Result<Self, LedgerError> {
        let mut accounts = BTreeMap::new();
        for (addr, balance) in genesis {
            if accounts.insert(*addr, Account::eoa(*balance)).is_some() {
                return Err(LedgerError::DuplicateGenesis(*addr));
            }
        }
        Ok(Self {
            accounts,
            clock: ChainClock::default(),
            genesis: genesis.to_vec(),
            records: Vec::new(),
            events: Vec::new(),
            gas_burned: Word::ZERO,
            gas_paid: BTreeMap::new(),
            offchain: BTreeMap::new(),
        })
    }

    pub fn now(&self) -> u64 {
        self.clock.now
    }

    pub fn advance_time(&mut self, delta: i64) -> Result<(), LedgerError> {
        let delta = u64::try_from(delta).map_err(|_| LedgerError::NegativeTime(delta))?;
        self.clock.now = self
            .clock
            .now
            .checked_add(delta)
            .ok_or(LedgerError::ClockOverflow)?;
        if delta > 0 {
            self.events.push(ChainEvent::AdvanceTime { delta });
        }
        Ok(())
    }

    /// Moves the clock forward to `time` if it is in the future.
    pub fn advance_to(&mut self, time: u64) {
        if time > self.clock.now {
            let delta = time - self.clock.now;
            self.clock.now = time;
            self.events.push(ChainEvent::AdvanceTime { delta });
        }
    }

    /// Makes an off-chain artifact's results available to `OffchainInvoke`
    /// in the contract at `contract`. This is simulator plumbing, not a
    /// transaction: nothing is written to the chain.
    pub fn register_offchain(&mut self, contract: Address, bytecode: &[u8]) -> Result<(), LedgerError> {
        if self.account(&contract).and_then(|a| a.code.as_ref()).is_none() {
            return Err(LedgerError::NoContract(contract));
        }
        let artifact = deserialize(bytecode)?;
        self.offchain.insert(contract, Arc::new(artifact));
        self.events.push(ChainEvent::RegisterOffchain {
            contract,
            bytecode: bytecode.to_vec(),
        });
        Ok(())
    }

    pub fn account(&self, addr: &Address) -> Option<&Account> {
        self.accounts.get(addr)
    }

    pub fn accounts(&self) -> &BTreeMap<Address, Account> {
        &self.accounts
    }

    pub fn query(&self, addr: &Address, what: QueryKind) -> Word {
        let account = self.accounts.get(addr);
        match what {
            QueryKind::Balance => account.map_or(Word::ZERO, |a| a.balance),
            QueryKind::Storage(key) => account
                .and_then(|a| a.storage.get(&key).copied())
                .unwrap_or(Word::ZERO),
            QueryKind::CodePresent => {
                Word::from(u8::from(account.is_some_and(|a| a.code.is_some())))
            }
        }
    }

    pub fn balance(&self, addr: &Address) -> Word {
        self.query(addr, QueryKind::Balance)
    }

    pub fn storage(&self, addr: &Address, key: Word) -> Word {
        self.query(addr, QueryKind::Storage(key))
    }

    pub fn has_code(&self, addr: &Address) -> bool {
        self.query(addr, QueryKind::CodePresent) == Word::ONE
    }

    pub fn records(&self) -> &[TxRecord] {
        &self.records
    }

    pub fn events(&self) -> &[ChainEvent] {
        &self.events
    }

    pub fn genesis(&self) -> &[(Address, Word)] {
        &self.genesis
    }

    pub fn gas_burned(&self) -> Word {
        self.gas_burned
    }

    /// Total gas charged to `addr` as a transaction sender.
    pub fn gas_paid(&self, addr: &Address) -> Word {
        self.gas_paid.get(addr).copied().unwrap_or(Word::ZERO)
    }

    pub fn total_balance(&self) -> Word {
        self.accounts.values().map(|a| a.balance).sum()
    }

    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<Receipt, LedgerError> {
        let sender = self
            .accounts
            .get(&tx.from)
            .ok_or(LedgerError::UnknownSender(tx.from))?;
        if sender.kind != AccountKind::Eoa {
            return Err(LedgerError::SenderNotEoa(tx.from));
        }
        let upfront = tx.value.checked_add(Word::from(tx.gas_limit));
        if upfront.is_none_or(|need| need > sender.balance) {
            return Err(LedgerError::InsufficientBalance(tx.from));
        }

        let snapshot = self.accounts.clone();
        let nonce = sender.nonce;
        let outcome = vm::execute(&mut self.accounts, &self.offchain, self.clock.now, &tx, nonce);
        let (status, gas_used, created_address, messages, output) = match outcome {
            Ok(done) => (
                TxStatus::Success,
                done.gas_used,
                done.created,
                done.messages,
                done.output,
            ),
            Err(failure) => {
                self.accounts = snapshot;
                (TxStatus::Reverted(failure.reason), failure.gas_used, None, Vec::new(), None)
            }
        };

        let sender = self.accounts.get_mut(&tx.from).expect("sender exists");
        sender.nonce += 1;
        sender.balance -= Word::from(gas_used);
        self.gas_burned += Word::from(gas_used);
        *self.gas_paid.entry(tx.from).or_default() += Word::from(gas_used);

        let receipt = Receipt {
            status,
            gas_used,
            created_address,
            emitted_messages: messages,
            output,
        };
        let index = self.records.len();
        self.records.push(TxRecord {
            index,
            time: self.clock.now,
            tx,
            receipt: receipt.clone(),
        });
        self.events.push(ChainEvent::Transaction { index });
        Ok(receipt)
    }

    /// Rebuilds a chain from its genesis and event log.
    pub fn replay(
        genesis: &[(Address, Word)],
        events: &[ChainEvent],
        transactions: &[Transaction],
    ) -> Result<Chain, LedgerError> {
        let mut chain = Chain::new(genesis)?;
        for event in events {
            match event {
                ChainEvent::AdvanceTime { delta } => {
                    chain.advance_time(i64::try_from(*delta).map_err(|_| LedgerError::ClockOverflow)?)?
                }
                ChainEvent::Transaction { index } => {
                    let tx = transactions
                        .get(*index)
                        .cloned()
                        .ok_or(LedgerError::MissingTransaction(*index))?;
                    chain.submit_transaction(tx)?;
                }
                ChainEvent::RegisterOffchain { contract, bytecode } => {
                    chain.register_offchain(*contract, bytecode)?
                }
            }
        }
        Ok(chain)
    }

    /// Replays this chain's own history from genesis.
    pub fn replay_self(&self) -> Result<Chain, LedgerError> {
        let txs: Vec<Transaction> = self.records.iter().map(|r| r.tx.clone()).collect();
        Chain::replay(&self.genesis, &self.events, &txs)
    }

    /// Address the next contract created by `creator` will receive.
    pub fn next_contract_address(&self, creator: &Address) -> Address {
        let nonce = self.accounts.get(creator).map_or(0, |a| a.nonce);
        contract_address(creator, nonce)
    }
}

/// Evaluates a function of an artifact outside any chain, as a participant
/// would when running its private copy. The function sees only the
/// artifact's own parameters and may not write state, transfer value, call
/// or create contracts.
pub fn evaluate_offchain(
    artifact: &Artifact,
    function: &str,
    caller: Address,
    now: u64,
) -> Result<Option<Word>, String> {
    vm::evaluate(Arc::new(artifact.clone()), function, caller, now).map(|v| v.and_then(|v| v.as_word()))
}
