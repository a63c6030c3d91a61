//! Interpreter for contract IR.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{gas, Account, AccountKind, InternalMessage, MessageKind, Transaction, MAX_CALL_DEPTH, MAX_STACK};
use crate::abi::{decode_args, encode_call, split_selector, Value};
use crate::crypto::{contract_address, ecrecover, keccak256, Address, Hash32, Signature};
use crate::ir::{
    map_slot_key, slot_key, FunctionSpec, Guard, Instr, Visibility, Word, ACCOUNT_BALANCE,
    DEPLOYED_ADDR, DEPOSIT_AMOUNT,
};
use crate::split::{deserialize, Artifact};

pub(super) struct Done {
    pub gas_used: u64,
    pub created: Option<Address>,
    pub messages: Vec<InternalMessage>,
    pub output: Option<Word>,
}

pub(super) struct Failure {
    pub reason: String,
    pub gas_used: u64,
}

enum Halt {
    Revert(String),
    OutOfGas,
}

fn revert<T>(reason: impl Into<String>) -> Result<T, Halt> {
    Err(Halt::Revert(reason.into()))
}

struct Meter {
    limit: u64,
    used: u64,
}

impl Meter {
    fn charge(&mut self, amount: u64) -> Result<(), Halt> {
        let next = self.used.saturating_add(amount);
        if next > self.limit {
            self.used = self.limit;
            return Err(Halt::OutOfGas);
        }
        self.used = next;
        Ok(())
    }
}

/// Execution context of one function activation.
struct Ctx {
    contract: Address,
    caller: Address,
    value: Word,
    code: Arc<Artifact>,
    args: Vec<Value>,
    /// Read-only storage for off-chain evaluation; `None` means live state.
    sandbox: Option<Arc<BTreeMap<Word, Word>>>,
}

struct Machine<'a> {
    accounts: &'a mut BTreeMap<Address, Account>,
    offchain: &'a BTreeMap<Address, Arc<Artifact>>,
    now: u64,
    meter: Meter,
    messages: Vec<InternalMessage>,
}

pub(super) fn execute(
    accounts: &mut BTreeMap<Address, Account>,
    offchain: &BTreeMap<Address, Arc<Artifact>>,
    now: u64,
    tx: &Transaction,
    nonce: u64,
) -> Result<Done, Failure> {
    let mut m = Machine {
        accounts,
        offchain,
        now,
        meter: Meter {
            limit: tx.gas_limit,
            used: 0,
        },
        messages: Vec::new(),
    };
    let result = m.transaction(tx, nonce);
    match result {
        Ok((created, output)) => Ok(Done {
            gas_used: m.meter.used,
            created,
            messages: m.messages,
            output,
        }),
        Err(Halt::Revert(reason)) => Err(Failure {
            reason,
            gas_used: m.meter.used,
        }),
        Err(Halt::OutOfGas) => Err(Failure {
            reason: "out of gas".into(),
            gas_used: tx.gas_limit,
        }),
    }
}

/// Runs `function` of `artifact` against its own parameters only, with no
/// chain state and no gas limit.
pub(super) fn evaluate(
    artifact: Arc<Artifact>,
    function: &str,
    caller: Address,
    now: u64,
) -> Result<Option<Value>, String> {
    let mut accounts = BTreeMap::new();
    let offchain = BTreeMap::new();
    let mut m = Machine {
        accounts: &mut accounts,
        offchain: &offchain,
        now,
        meter: Meter {
            limit: u64::MAX,
            used: 0,
        },
        messages: Vec::new(),
    };
    let Some(f) = artifact.function(function) else {
        return Err(format!("no function {function}"));
    };
    let ctx = Ctx {
        contract: Address::ZERO,
        caller,
        value: Word::ZERO,
        code: artifact.clone(),
        args: Vec::new(),
        sandbox: Some(Arc::new(sandbox_storage(&artifact))),
    };
    match m.run(&ctx, f, 0) {
        Ok(out) => Ok(out),
        Err(Halt::Revert(reason)) => Err(reason),
        Err(Halt::OutOfGas) => Err("out of gas".into()),
    }
}

fn sandbox_storage(artifact: &Artifact) -> BTreeMap<Word, Word> {
    artifact
        .parameters
        .iter()
        .map(|p| (slot_key(&p.name), p.value))
        .collect()
}

fn word_bool(b: bool) -> Word {
    if b {
        Word::ONE
    } else {
        Word::ZERO
    }
}

fn guard_name(g: &Guard) -> &'static str {
    match g {
        Guard::NotAfter { .. } => "not_after",
        Guard::Window { .. } => "window",
        Guard::After { .. } => "after",
        Guard::ParticipantOnly => "participant_only",
        Guard::DeployedAddrOnly => "deployed_addr_only",
        Guard::AmountMet => "amount_met",
        Guard::AmountNotMet => "amount_not_met",
    }
}

impl Machine<'_> {
    fn transaction(&mut self, tx: &Transaction, nonce: u64) -> Result<(Option<Address>, Option<Word>), Halt> {
        self.meter.charge(gas::intrinsic(tx.payload.len()))?;
        self.debit(&tx.from, tx.value)?;
        match tx.to {
            None => {
                let addr = contract_address(&tx.from, nonce);
                self.create_at(addr, &tx.payload, tx.value)?;
                Ok((Some(addr), None))
            }
            Some(to) => {
                self.credit(&to, tx.value);
                let has_code = self.accounts.get(&to).is_some_and(|a| a.code.is_some());
                if !has_code {
                    if tx.payload.is_empty() {
                        return Ok((None, None));
                    }
                    return revert("payload sent to an account without code");
                }
                let out = self.dispatch(to, tx.from, tx.value, &tx.payload, 0)?;
                Ok((None, out.and_then(|v| v.as_word())))
            }
        }
    }

    fn debit(&mut self, addr: &Address, amount: Word) -> Result<(), Halt> {
        let Some(account) = self.accounts.get_mut(addr) else {
            return revert("insufficient balance");
        };
        if account.balance < amount {
            return revert("insufficient balance");
        }
        account.balance -= amount;
        Ok(())
    }

    fn credit(&mut self, addr: &Address, amount: Word) {
        self.accounts
            .entry(*addr)
            .or_insert_with(|| Account::eoa(Word::ZERO))
            .balance += amount;
    }

    fn create_at(&mut self, addr: Address, bytecode: &[u8], value: Word) -> Result<(), Halt> {
        self.meter.charge(gas::creation(bytecode.len()))?;
        let artifact = match deserialize(bytecode) {
            Ok(a) => a,
            Err(e) => return revert(format!("malformed bytecode: {e}")),
        };
        let prior = match self.accounts.get(&addr) {
            Some(a) if a.code.is_some() || a.nonce > 0 || a.kind == AccountKind::Contract => {
                return revert("contract address collision")
            }
            Some(a) => a.balance,
            None => Word::ZERO,
        };
        self.accounts
            .insert(addr, Account::contract(artifact, bytecode.len(), prior + value));
        Ok(())
    }

    fn dispatch(
        &mut self,
        contract: Address,
        caller: Address,
        value: Word,
        payload: &[u8],
        depth: usize,
    ) -> Result<Option<Value>, Halt> {
        let code = match self.accounts.get(&contract).and_then(|a| a.code.clone()) {
            Some(c) => c,
            None => return revert("call to account without code"),
        };
        let (selector, data) = match split_selector(payload) {
            Ok(x) => x,
            Err(e) => return revert(e.to_string()),
        };
        let Some(function) = code
            .functions
            .iter()
            .find(|f| f.visibility != Visibility::Private && f.selector() == selector)
        else {
            return revert(format!("unknown selector {}", hex::encode(selector)));
        };
        if value > Word::ZERO && !function.payable {
            return revert(format!("{} is not payable", function.name));
        }
        let args = match decode_args(&function.inputs, data) {
            Ok(a) => a,
            Err(e) => return revert(e.to_string()),
        };
        let ctx = Ctx {
            contract,
            caller,
            value,
            code: code.clone(),
            args,
            sandbox: None,
        };
        self.run(&ctx, function, depth)
    }

    fn load(&self, ctx: &Ctx, key: Word) -> Word {
        match &ctx.sandbox {
            Some(map) => map.get(&key).copied(),
            None => self
                .accounts
                .get(&ctx.contract)
                .and_then(|a| a.storage.get(&key).copied()),
        }
        .unwrap_or(Word::ZERO)
    }

    fn store(&mut self, ctx: &Ctx, key: Word, value: Word) -> Result<(), Halt> {
        if ctx.sandbox.is_some() {
            return revert("off-chain evaluation cannot write state");
        }
        let storage = &mut self
            .accounts
            .get_mut(&ctx.contract)
            .expect("executing contract exists")
            .storage;
        if value == Word::ZERO {
            storage.remove(&key);
        } else {
            storage.insert(key, value);
        }
        Ok(())
    }

    fn param(&self, ctx: &Ctx, name: &str) -> Word {
        self.load(ctx, slot_key(name))
    }

    fn participants<'c>(&self, ctx: &'c Ctx) -> Result<&'c [Address], Halt> {
        match ctx.code.access.addresses() {
            Some(list) => Ok(list),
            None => revert("participant addresses unavailable"),
        }
    }

    fn amount_met(&self, ctx: &Ctx) -> Result<bool, Halt> {
        let deposit = self.param(ctx, DEPOSIT_AMOUNT);
        let participants = self.participants(ctx)?;
        Ok(participants
            .iter()
            .all(|p| self.load(ctx, map_slot_key(ACCOUNT_BALANCE, p.to_word())) == deposit))
    }

    fn check_guard(&self, ctx: &Ctx, guard: &Guard) -> Result<bool, Halt> {
        let now = Word::from(self.now);
        Ok(match guard {
            Guard::NotAfter { param } => now <= self.param(ctx, param),
            Guard::Window { after, until } => {
                self.param(ctx, after) < now && now <= self.param(ctx, until)
            }
            Guard::After { param } => now > self.param(ctx, param),
            Guard::ParticipantOnly => ctx.code.access.admits(&ctx.caller),
            Guard::DeployedAddrOnly => {
                let deployed = self.param(ctx, DEPLOYED_ADDR);
                deployed != Word::ZERO && deployed == ctx.caller.to_word()
            }
            Guard::AmountMet => self.amount_met(ctx)?,
            Guard::AmountNotMet => !self.amount_met(ctx)?,
        })
    }

    fn run(&mut self, ctx: &Ctx, function: &FunctionSpec, depth: usize) -> Result<Option<Value>, Halt> {
        if depth >= MAX_CALL_DEPTH {
            return revert("call depth exceeded");
        }
        for guard in &function.modifiers {
            self.meter.charge(gas::INSTRUCTION)?;
            if !self.check_guard(ctx, guard)? {
                return revert(format!("{}: guard {} failed", function.name, guard_name(guard)));
            }
        }
        let mut stack = Stack(Vec::new());
        for instr in &function.body {
            self.meter.charge(gas::INSTRUCTION)?;
            if let Some(out) = self.step(ctx, instr, &mut stack, depth)? {
                return Ok(Some(out));
            }
        }
        Ok(None)
    }

    fn step(&mut self, ctx: &Ctx, instr: &Instr, stack: &mut Stack, depth: usize) -> Result<Option<Value>, Halt> {
        match instr {
            Instr::Push { value } => stack.push(Value::Word(*value))?,
            Instr::PushBytes { data } => stack.push(Value::Bytes(data.clone()))?,
            Instr::Pop => {
                stack.pop()?;
            }
            Instr::Dup { depth } => {
                let d = *depth as usize;
                if d == 0 || d > stack.0.len() {
                    return revert("stack underflow");
                }
                let v = stack.0[stack.0.len() - d].clone();
                stack.push(v)?;
            }
            Instr::Swap { depth } => {
                let d = *depth as usize;
                let len = stack.0.len();
                if d == 0 || d >= len {
                    return revert("stack underflow");
                }
                stack.0.swap(len - 1, len - 1 - d);
            }
            Instr::Arg { index } => match ctx.args.get(*index as usize) {
                Some(v) => stack.push(v.clone())?,
                None => return revert(format!("missing argument {index}")),
            },
            Instr::Caller => stack.push_word(ctx.caller.to_word())?,
            Instr::CallValue => stack.push_word(ctx.value)?,
            Instr::Timestamp => stack.push_word(Word::from(self.now))?,
            Instr::SelfAddress => stack.push_word(ctx.contract.to_word())?,
            Instr::SelfBalance => {
                let b = if ctx.sandbox.is_some() {
                    Word::ZERO
                } else {
                    self.accounts.get(&ctx.contract).map_or(Word::ZERO, |a| a.balance)
                };
                stack.push_word(b)?
            }
            Instr::Participant { index } => {
                let p = self.participant(ctx, Word::from(*index))?;
                stack.push_word(p)?
            }
            Instr::PickParticipant => {
                let i = stack.pop_word()?;
                let p = self.participant(ctx, i)?;
                stack.push_word(p)?
            }
            Instr::Slot { name } => stack.push_word(slot_key(name))?,
            Instr::MapSlot { name } => {
                let key = stack.pop_word()?;
                stack.push_word(map_slot_key(name, key))?
            }
            Instr::SLoad => {
                let key = stack.pop_word()?;
                let v = self.load(ctx, key);
                stack.push_word(v)?
            }
            Instr::SStore => {
                let value = stack.pop_word()?;
                let key = stack.pop_word()?;
                self.store(ctx, key, value)?;
            }
            Instr::Add => stack.binary(|a, b| a.wrapping_add(b))?,
            Instr::Sub => stack.binary(|a, b| a.wrapping_sub(b))?,
            Instr::Mul => stack.binary(|a, b| a.wrapping_mul(b))?,
            Instr::Div => stack.binary(|a, b| a.checked_div(b).unwrap_or(Word::ZERO))?,
            Instr::Mod => stack.binary(|a, b| a.checked_rem(b).unwrap_or(Word::ZERO))?,
            Instr::Lt => stack.binary(|a, b| word_bool(a < b))?,
            Instr::Gt => stack.binary(|a, b| word_bool(a > b))?,
            Instr::Eq => stack.binary(|a, b| word_bool(a == b))?,
            Instr::And => stack.binary(|a, b| a & b)?,
            Instr::Or => stack.binary(|a, b| a | b)?,
            Instr::Xor => stack.binary(|a, b| a ^ b)?,
            Instr::IsZero => {
                let a = stack.pop_word()?;
                stack.push_word(word_bool(a == Word::ZERO))?
            }
            Instr::Select => {
                let cond = stack.pop_word()?;
                let if_false = stack.pop()?;
                let if_true = stack.pop()?;
                stack.push(if cond != Word::ZERO { if_true } else { if_false })?
            }
            Instr::Keccak => {
                let digest = match stack.pop()? {
                    Value::Bytes(b) => keccak256(b),
                    Value::Word(w) => keccak256(w.to_be_bytes()),
                };
                stack.push_word(digest.to_word())?
            }
            Instr::Require { reason } => {
                if stack.pop_word()? == Word::ZERO {
                    return revert(reason.clone());
                }
            }
            Instr::Transfer => {
                let amount = stack.pop_word()?;
                let to = stack.pop_address()?;
                self.transfer(ctx, to, amount)?;
            }
            Instr::Call { selector, args } => {
                let mut values = Vec::with_capacity(*args as usize);
                for _ in 0..*args {
                    values.push(stack.pop()?);
                }
                values.reverse();
                let target = stack.pop_address()?;
                if ctx.sandbox.is_some() {
                    return revert("off-chain evaluation cannot call contracts");
                }
                self.messages.push(InternalMessage {
                    kind: MessageKind::Call,
                    from: ctx.contract,
                    to: target,
                    value: Word::ZERO,
                    selector: Some(hex::encode(selector)),
                });
                let payload = encode_call(*selector, &values);
                let out = self.dispatch(target, ctx.contract, Word::ZERO, &payload, depth + 1)?;
                stack.push(out.unwrap_or(Value::Word(Word::ZERO)))?
            }
            Instr::Invoke { function } => {
                let Some(f) = ctx.code.function(function) else {
                    return revert(format!("unknown function {function}"));
                };
                let inner = Ctx {
                    contract: ctx.contract,
                    caller: ctx.caller,
                    value: ctx.value,
                    code: ctx.code.clone(),
                    args: Vec::new(),
                    sandbox: ctx.sandbox.clone(),
                };
                let out = self.run(&inner, f, depth + 1)?;
                stack.push(out.unwrap_or(Value::Word(Word::ZERO)))?
            }
            Instr::OffchainInvoke { function } => {
                let out = self.offchain_invoke(ctx, function, depth)?;
                stack.push(out.unwrap_or(Value::Word(Word::ZERO)))?
            }
            Instr::EcRecover => {
                self.meter.charge(gas::ECRECOVER)?;
                let s = stack.pop_word()?;
                let r = stack.pop_word()?;
                let v = stack.pop_word()?;
                let digest = stack.pop_word()?;
                let recovered = u8::try_from(v).ok().and_then(|v| {
                    let sig = Signature {
                        v,
                        r: Hash32(r.to_be_bytes()),
                        s: Hash32(s.to_be_bytes()),
                    };
                    ecrecover(&Hash32(digest.to_be_bytes()), &sig).ok()
                });
                stack.push_word(recovered.map_or(Word::ZERO, |a| a.to_word()))?
            }
            Instr::Create => {
                let Value::Bytes(code) = stack.pop()? else {
                    return revert("create expects bytecode");
                };
                if ctx.sandbox.is_some() {
                    return revert("off-chain evaluation cannot create contracts");
                }
                let creator = self.accounts.get_mut(&ctx.contract).expect("executing contract exists");
                let nonce = creator.nonce;
                creator.nonce += 1;
                let addr = contract_address(&ctx.contract, nonce);
                self.create_at(addr, &code, Word::ZERO)?;
                self.messages.push(InternalMessage {
                    kind: MessageKind::Create,
                    from: ctx.contract,
                    to: addr,
                    value: Word::ZERO,
                    selector: None,
                });
                stack.push_word(addr.to_word())?
            }
            Instr::Compute { cost } => self.meter.charge(*cost)?,
            Instr::Return => return Ok(Some(stack.pop()?)),
        }
        Ok(None)
    }

    fn participant(&self, ctx: &Ctx, index: Word) -> Result<Word, Halt> {
        let participants = self.participants(ctx)?;
        match usize::try_from(index).ok().and_then(|i| participants.get(i)) {
            Some(p) => Ok(p.to_word()),
            None => revert("participant index out of range"),
        }
    }

    fn transfer(&mut self, ctx: &Ctx, to: Address, amount: Word) -> Result<(), Halt> {
        if ctx.sandbox.is_some() {
            return revert("off-chain evaluation cannot transfer value");
        }
        self.debit(&ctx.contract, amount)?;
        self.credit(&to, amount);
        self.messages.push(InternalMessage {
            kind: MessageKind::Transfer,
            from: ctx.contract,
            to,
            value: amount,
            selector: None,
        });
        Ok(())
    }

    /// Evaluates a function of the registered off-chain copy without
    /// metering its body and without access to live state.
    fn offchain_invoke(&mut self, ctx: &Ctx, function: &str, depth: usize) -> Result<Option<Value>, Halt> {
        let Some(artifact) = self.offchain.get(&ctx.contract).cloned() else {
            return revert("no off-chain copy registered for this contract");
        };
        let Some(f) = artifact.function(function) else {
            return revert(format!("off-chain copy has no function {function}"));
        };
        let storage = sandbox_storage(&artifact);
        let inner = Ctx {
            contract: ctx.contract,
            caller: ctx.caller,
            value: Word::ZERO,
            code: artifact.clone(),
            args: Vec::new(),
            sandbox: Some(Arc::new(storage)),
        };
        let metered = std::mem::replace(
            &mut self.meter,
            Meter {
                limit: u64::MAX,
                used: 0,
            },
        );
        let out = self.run(&inner, f, depth + 1);
        self.meter = metered;
        out
    }
}

struct Stack(Vec<Value>);

impl Stack {
    fn push(&mut self, v: Value) -> Result<(), Halt> {
        if self.0.len() >= MAX_STACK {
            return revert("stack overflow");
        }
        self.0.push(v);
        Ok(())
    }

    fn push_word(&mut self, w: Word) -> Result<(), Halt> {
        self.push(Value::Word(w))
    }

    fn pop(&mut self) -> Result<Value, Halt> {
        match self.0.pop() {
            Some(v) => Ok(v),
            None => revert("stack underflow"),
        }
    }

    fn pop_word(&mut self) -> Result<Word, Halt> {
        match self.pop()? {
            Value::Word(w) => Ok(w),
            Value::Bytes(_) => revert("expected a word, found bytes"),
        }
    }

    fn pop_address(&mut self) -> Result<Address, Halt> {
        match Address::from_word(self.pop_word()?) {
            Some(a) => Ok(a),
            None => revert("value is not an address"),
        }
    }

    fn binary(&mut self, op: impl FnOnce(Word, Word) -> Word) -> Result<(), Halt> {
        let b = self.pop_word()?;
        let a = self.pop_word()?;
        self.push_word(op(a, b))
    }
}
