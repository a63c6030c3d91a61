//! Contract intermediate representation.
//!
//! Contracts are lists of functions whose bodies are straight-line programs
//! for a small stack machine over 256-bit words and byte strings. There are
//! no jumps: every body terminates, and conditional behaviour is expressed
//! with `Select` and `Require`.
//!
//! Stack conventions (top of stack is the rightmost element):
//!
//! | instruction   | consumes                      | produces             |
//! |---------------|-------------------------------|----------------------|
//! | binary ops    | `a b`                         | `a op b`             |
//! | `Select`      | `if_true if_false cond`       | chosen value         |
//! | `SStore`      | `key value`                   |                      |
//! | `Transfer`    | `recipient amount`            |                      |
//! | `EcRecover`   | `digest v r s`                | address (0 on error) |
//! | `Call`        | `target arg0 .. argN-1`       | return word or 0     |
//! | `Create`      | `bytecode`                    | new address          |

use std::fmt;

use ethnum::U256;
use serde::{Deserialize, Serialize};

use crate::crypto::{keccak256, Address};

pub type Word = U256;

/// Storage slot holding per-participant recorded balances.
pub const ACCOUNT_BALANCE: &str = "accountBalance";
/// Parameter holding the required per-participant deposit.
pub const DEPOSIT_AMOUNT: &str = "deposit_amount";
/// Slot recording the verified instance address; zero while unset.
pub const DEPLOYED_ADDR: &str = "deployedAddr";
/// Slot set to one once the pot has been paid out.
pub const RESOLVED: &str = "resolved";

/// Storage key of a named scalar slot.
pub fn slot_key(name: &str) -> Word {
    keccak256(name.as_bytes()).to_word()
}

/// Storage key of `name[key]` for a named mapping.
pub fn map_slot_key(name: &str, key: Word) -> Word {
    let mut buf = [0u8; 64];
    buf[..32].copy_from_slice(&key.to_be_bytes());
    buf[32..].copy_from_slice(&slot_key(name).to_be_bytes());
    keccak256(buf).to_word()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    Light,
    Heavy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    #[default]
    Public,
    External,
    /// Reachable only through `Invoke` from the same contract.
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbiType {
    Bool,
    Uint8,
    Uint256,
    Address,
    Bytes32,
    Bytes,
}

impl AbiType {
    pub fn name(&self) -> &'static str {
        match self {
            AbiType::Bool => "bool",
            AbiType::Uint8 => "uint8",
            AbiType::Uint256 => "uint256",
            AbiType::Address => "address",
            AbiType::Bytes32 => "bytes32",
            AbiType::Bytes => "bytes",
        }
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self, AbiType::Bytes)
    }
}

/// Function guards, checked in order before the body runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "guard", rename_all = "snake_case")]
pub enum Guard {
    /// `now <= param`
    NotAfter { param: String },
    /// `after < now <= until`
    Window { after: String, until: String },
    /// `now > param`
    After { param: String },
    /// Caller is one of the contract's participants.
    ParticipantOnly,
    /// Caller equals the non-zero address in `deployedAddr`.
    DeployedAddrOnly,
    /// Every participant's recorded balance equals `deposit_amount`.
    AmountMet,
    /// Negation of [`Guard::AmountMet`].
    AmountNotMet,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Instr {
    Push {
        #[serde(with = "word_serde")]
        value: Word,
    },
    PushBytes {
        #[serde(with = "bytes_serde")]
        data: Vec<u8>,
    },
    Pop,
    /// Duplicate the `depth`-th element from the top (1 = top).
    Dup { depth: u8 },
    /// Swap the top with the element `depth` positions below it.
    Swap { depth: u8 },
    Arg { index: u8 },
    Caller,
    CallValue,
    Timestamp,
    SelfAddress,
    SelfBalance,
    Participant { index: u8 },
    /// Pops an index and pushes that participant's address.
    PickParticipant,
    Slot { name: String },
    /// Pops a key and pushes the storage key of `name[key]`.
    MapSlot { name: String },
    SLoad,
    SStore,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Gt,
    Eq,
    IsZero,
    And,
    Or,
    Xor,
    Select,
    Keccak,
    Require { reason: String },
    Transfer,
    Call {
        #[serde(with = "selector_serde")]
        selector: [u8; 4],
        args: u8,
    },
    /// Run a function of the same contract and push its result.
    Invoke { function: String },
    /// Obtain a function's result from the off-chain copy registered for
    /// this contract, without executing it on-chain.
    OffchainInvoke { function: String },
    EcRecover,
    Create,
    /// Opaque work with a declared gas cost.
    Compute { cost: u64 },
    Return,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    #[serde(with = "word_serde")]
    pub value: Word,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<FunctionKind>,
    #[serde(default)]
    pub transfers_currency: bool,
    #[serde(default)]
    pub payable: bool,
    #[serde(default)]
    pub visibility: Visibility,
    #[serde(default)]
    pub inputs: Vec<AbiType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub returns: Option<AbiType>,
    #[serde(default)]
    pub modifiers: Vec<Guard>,
    #[serde(default)]
    pub body: Vec<Instr>,
}

impl FunctionSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: None,
            transfers_currency: false,
            payable: false,
            visibility: Visibility::Public,
            inputs: Vec::new(),
            returns: None,
            modifiers: Vec::new(),
            body: Vec::new(),
        }
    }

    /// Canonical signature string, e.g. `deposit()` or `enforceDisputeResolution(bool)`.
    pub fn signature(&self) -> String {
        signature(&self.name, &self.inputs)
    }

    pub fn selector(&self) -> [u8; 4] {
        selector(&self.signature())
    }
}

pub fn signature(name: &str, inputs: &[AbiType]) -> String {
    let types: Vec<&str> = inputs.iter().map(AbiType::name).collect();
    format!("{name}({})", types.join(","))
}

/// First four bytes of the Keccak digest of a signature string.
pub fn selector(signature: &str) -> [u8; 4] {
    let digest = keccak256(signature.as_bytes());
    [digest.0[0], digest.0[1], digest.0[2], digest.0[3]]
}

/// Which parameter gates the dispute path and whether deposits must be met.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct DisputeConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<String>,
    #[serde(default)]
    pub amount_met: bool,
}

/// A contract before splitting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractSpec {
    pub name: String,
    pub participants: Vec<Address>,
    #[serde(default)]
    pub parameters: Vec<Parameter>,
    pub functions: Vec<FunctionSpec>,
    /// Heavy function whose boolean result the dispute path enforces;
    /// defaults to the first heavy function returning `bool`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<String>,
    #[serde(default)]
    pub dispute: DisputeConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("contract declares no functions")]
    NoFunctions,
    #[error("contract declares no participants")]
    NoParticipants,
    #[error("duplicate function name `{0}`")]
    DuplicateFunction(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("selector collision between `{0}` and `{1}`")]
    SelectorCollision(String, String),
    #[error("invalid contract json: {0}")]
    Json(String),
}

impl ContractSpec {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let spec: ContractSpec =
            serde_json::from_str(text).map_err(|e| SpecError::Json(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("contract spec serializes")
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.functions.is_empty() {
            return Err(SpecError::NoFunctions);
        }
        if self.participants.is_empty() {
            return Err(SpecError::NoParticipants);
        }
        validate_functions(&self.functions)?;
        let mut params: Vec<&str> = self.parameters.iter().map(|p| p.name.as_str()).collect();
        params.sort_unstable();
        if let Some(w) = params.windows(2).find(|w| w[0] == w[1]) {
            return Err(SpecError::DuplicateParameter(w[0].to_string()));
        }
        Ok(())
    }

    pub fn function(&self, name: &str) -> Option<&FunctionSpec> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn parameter(&self, name: &str) -> Option<Word> {
        self.parameters
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.value)
    }
}

pub(crate) fn validate_functions(functions: &[FunctionSpec]) -> Result<(), SpecError> {
    for (i, f) in functions.iter().enumerate() {
        for g in &functions[..i] {
            if g.name == f.name {
                return Err(SpecError::DuplicateFunction(f.name.clone()));
            }
            if g.selector() == f.selector() {
                return Err(SpecError::SelectorCollision(g.name.clone(), f.name.clone()));
            }
        }
    }
    Ok(())
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FunctionKind::Light => "light",
            FunctionKind::Heavy => "heavy",
        })
    }
}

/// Words travel as decimal strings in JSON; `0x`-prefixed hex and plain
/// numbers are accepted on input.
pub mod word_serde {
    use super::Word;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Word, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&value.to_string())
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Str(String),
        Num(u64),
    }

    pub fn parse(text: &str) -> Result<Word, String> {
        if let Some(hex) = text.strip_prefix("0x") {
            Word::from_str_radix(hex, 16).map_err(|e| e.to_string())
        } else {
            Word::from_str_radix(text, 10).map_err(|e| e.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Word, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(Word::from(n)),
            Raw::Str(s) => parse(&s).map_err(de::Error::custom),
        }
    }
}

pub mod bytes_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s.strip_prefix("0x").unwrap_or(&s)).map_err(de::Error::custom)
    }
}

mod selector_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &[u8; 4], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(value))
    }

    /// Accepts either four hex bytes or a signature string such as
    /// `enforceDisputeResolution(bool)`.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 4], D::Error> {
        let s = String::deserialize(d)?;
        if s.contains('(') {
            return Ok(super::selector(&s));
        }
        let bytes = hex::decode(s.strip_prefix("0x").unwrap_or(&s)).map_err(de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| de::Error::custom("selector must be 4 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_known_selectors() {
        assert_eq!(selector("transfer(address,uint256)"), [0xa9, 0x05, 0x9c, 0xbb]);
        assert_eq!(selector("balanceOf(address)"), [0x70, 0xa0, 0x82, 0x31]);
    }

    #[test]
    fn signature_string() {
        let mut f = FunctionSpec::new("deployVerifiedInstance");
        f.inputs = vec![AbiType::Bytes, AbiType::Uint8, AbiType::Bytes32, AbiType::Bytes32];
        assert_eq!(f.signature(), "deployVerifiedInstance(bytes,uint8,bytes32,bytes32)");
    }

    #[test]
    fn json_accepts_minimal_function_fields() {
        let text = r#"{
            "name": "demo",
            "participants": ["7e5f4552091a69125d5dfcb7b8c2659029395bdf"],
            "parameters": [{"name": "T1", "value": "0x10"}],
            "functions": [
                {"name": "f", "transfers_currency": true, "modifiers": [{"guard": "participant_only"}],
                 "body": [{"op": "push", "value": 3}, {"op": "call", "selector": "g(bool)", "args": 1}]}
            ]
        }"#;
        let spec = ContractSpec::from_json(text).unwrap();
        assert_eq!(spec.parameter("T1"), Some(Word::from(16u8)));
        let f = &spec.functions[0];
        assert!(f.transfers_currency);
        assert_eq!(f.kind, None);
        assert_eq!(
            f.body[1],
            Instr::Call {
                selector: selector("g(bool)"),
                args: 1
            }
        );
        let again = ContractSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        let mut spec = ContractSpec {
            name: "x".into(),
            participants: vec![Address::ZERO],
            parameters: vec![],
            functions: vec![],
            resolution: None,
            dispute: DisputeConfig::default(),
        };
        assert_eq!(spec.validate(), Err(SpecError::NoFunctions));
        spec.functions = vec![FunctionSpec::new("a"), FunctionSpec::new("a")];
        assert_eq!(spec.validate(), Err(SpecError::DuplicateFunction("a".into())));
        spec.functions.pop();
        spec.participants.clear();
        assert_eq!(spec.validate(), Err(SpecError::NoParticipants));
    }

    #[test]
    fn map_slots_differ_per_key() {
        let a = map_slot_key(ACCOUNT_BALANCE, Word::ONE);
        let b = map_slot_key(ACCOUNT_BALANCE, Word::from(2u8));
        assert_ne!(a, b);
        assert_ne!(a, slot_key(ACCOUNT_BALANCE));
    }
}
