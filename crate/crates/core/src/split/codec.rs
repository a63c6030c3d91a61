//! Canonical byte encoding of artifacts.
//!
//! The stream opens with the length-prefixed version string and a role byte.
//! Counts and string lengths are big-endian `u32`; words are written
//! minimally as a length byte followed by big-endian bytes with no leading
//! zero. Strings are XORed with a keystream derived from the role byte and
//! the string length, so identifiers do not appear verbatim. Every value has
//! exactly one encoding, so decoding rejects anything that would not
//! re-encode to the same bytes.

use crate::crypto::{keccak256, Address, Hash32};
use crate::ir::{AbiType, FunctionKind, FunctionSpec, Guard, Instr, Parameter, Visibility, Word};

use super::{AccessList, Artifact, ArtifactRole};

pub const SERIALIZER_VERSION: &str = "hybridsplit-v1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("unexpected end of input at byte {0}")]
    Truncated(usize),
    #[error("unsupported serializer version")]
    Version,
    #[error("invalid {what} tag {tag:#04x} at byte {at}")]
    Tag { what: &'static str, tag: u8, at: usize },
    #[error("non-canonical encoding at byte {0}")]
    NonCanonical(usize),
    #[error("invalid utf-8 string at byte {0}")]
    Utf8(usize),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

/// XORs `data` in place with the string keystream for `role`.
fn mask(role: u8, data: &mut [u8]) {
    let len = (data.len() as u32).to_be_bytes();
    for (block, chunk) in data.chunks_mut(32).enumerate() {
        let mut seed = Vec::with_capacity(SERIALIZER_VERSION.len() + 9);
        seed.extend_from_slice(SERIALIZER_VERSION.as_bytes());
        seed.push(role);
        seed.extend_from_slice(&len);
        seed.extend_from_slice(&(block as u32).to_be_bytes());
        let key = keccak256(&seed);
        for (b, k) in chunk.iter_mut().zip(key.0) {
            *b ^= k;
        }
    }
}

struct Writer {
    out: Vec<u8>,
    role: u8,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.out.push(v);
    }

    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("length fits in u32");
        self.out.extend_from_slice(&v.to_be_bytes());
    }

    fn bytes(&mut self, data: &[u8]) {
        self.u32(data.len());
        self.out.extend_from_slice(data);
    }

    fn str(&mut self, s: &str) {
        let mut raw = s.as_bytes().to_vec();
        mask(self.role, &mut raw);
        self.bytes(&raw);
    }

    fn word(&mut self, w: &Word) {
        let be = w.to_be_bytes();
        let skip = be.iter().take_while(|b| **b == 0).count();
        self.u8((32 - skip) as u8);
        self.out.extend_from_slice(&be[skip..]);
    }
}

fn role_tag(role: ArtifactRole) -> u8 {
    match role {
        ArtifactRole::Whole => 0,
        ArtifactRole::OnChain => 1,
        ArtifactRole::OffChain => 2,
    }
}

fn abi_tag(ty: AbiType) -> u8 {
    match ty {
        AbiType::Bool => 0,
        AbiType::Uint8 => 1,
        AbiType::Uint256 => 2,
        AbiType::Address => 3,
        AbiType::Bytes32 => 4,
        AbiType::Bytes => 5,
    }
}

const ABI_TYPES: [AbiType; 6] = [
    AbiType::Bool,
    AbiType::Uint8,
    AbiType::Uint256,
    AbiType::Address,
    AbiType::Bytes32,
    AbiType::Bytes,
];

fn write_guard(w: &mut Writer, g: &Guard) {
    match g {
        Guard::NotAfter { param } => {
            w.u8(0);
            w.str(param);
        }
        Guard::Window { after, until } => {
            w.u8(1);
            w.str(after);
            w.str(until);
        }
        Guard::After { param } => {
            w.u8(2);
            w.str(param);
        }
        Guard::ParticipantOnly => w.u8(3),
        Guard::DeployedAddrOnly => w.u8(4),
        Guard::AmountMet => w.u8(5),
        Guard::AmountNotMet => w.u8(6),
    }
}

fn opcode(i: &Instr) -> u8 {
    match i {
        Instr::Push { .. } => 0x01,
        Instr::PushBytes { .. } => 0x02,
        Instr::Pop => 0x03,
        Instr::Dup { .. } => 0x04,
        Instr::Swap { .. } => 0x05,
        Instr::Arg { .. } => 0x06,
        Instr::Caller => 0x07,
        Instr::CallValue => 0x08,
        Instr::Timestamp => 0x09,
        Instr::SelfAddress => 0x0a,
        Instr::SelfBalance => 0x0b,
        Instr::Participant { .. } => 0x0c,
        Instr::PickParticipant => 0x0d,
        Instr::Slot { .. } => 0x0e,
        Instr::MapSlot { .. } => 0x0f,
        Instr::SLoad => 0x10,
        Instr::SStore => 0x11,
        Instr::Add => 0x12,
        Instr::Sub => 0x13,
        Instr::Mul => 0x14,
        Instr::Div => 0x15,
        Instr::Mod => 0x16,
        Instr::Lt => 0x17,
        Instr::Gt => 0x18,
        Instr::Eq => 0x19,
        Instr::IsZero => 0x1a,
        Instr::And => 0x1b,
        Instr::Or => 0x1c,
        Instr::Xor => 0x1d,
        Instr::Select => 0x1e,
        Instr::Keccak => 0x1f,
        Instr::Require { .. } => 0x20,
        Instr::Transfer => 0x21,
        Instr::Call { .. } => 0x22,
        Instr::Invoke { .. } => 0x23,
        Instr::OffchainInvoke { .. } => 0x24,
        Instr::EcRecover => 0x25,
        Instr::Create => 0x26,
        Instr::Compute { .. } => 0x27,
        Instr::Return => 0x28,
    }
}

fn write_instr(w: &mut Writer, i: &Instr) {
    w.u8(opcode(i));
    match i {
        Instr::Push { value } => w.word(value),
        Instr::PushBytes { data } => w.bytes(data),
        Instr::Dup { depth } | Instr::Swap { depth } => w.u8(*depth),
        Instr::Arg { index } | Instr::Participant { index } => w.u8(*index),
        Instr::Slot { name } | Instr::MapSlot { name } => w.str(name),
        Instr::Require { reason } => w.str(reason),
        Instr::Invoke { function } | Instr::OffchainInvoke { function } => w.str(function),
        Instr::Call { selector, args } => {
            w.out.extend_from_slice(selector);
            w.u8(*args);
        }
        Instr::Compute { cost } => w.word(&Word::from(*cost)),
        _ => {}
    }
}

fn write_function(w: &mut Writer, f: &FunctionSpec) {
    w.str(&f.name);
    w.u8(match f.kind {
        None => 0,
        Some(FunctionKind::Light) => 1,
        Some(FunctionKind::Heavy) => 2,
    });
    w.u8(u8::from(f.transfers_currency) | (u8::from(f.payable) << 1));
    w.u8(match f.visibility {
        Visibility::Public => 0,
        Visibility::External => 1,
        Visibility::Private => 2,
    });
    w.u32(f.inputs.len());
    for ty in &f.inputs {
        w.u8(abi_tag(*ty));
    }
    match f.returns {
        None => w.u8(0),
        Some(ty) => w.u8(1 + abi_tag(ty)),
    }
    w.u32(f.modifiers.len());
    for g in &f.modifiers {
        write_guard(w, g);
    }
    w.u32(f.body.len());
    for i in &f.body {
        write_instr(w, i);
    }
}

/// Deterministic canonical encoding.
pub fn serialize(artifact: &Artifact) -> Vec<u8> {
    let role = role_tag(artifact.role);
    let mut w = Writer { out: Vec::new(), role };
    w.u8(SERIALIZER_VERSION.len() as u8);
    w.out.extend_from_slice(SERIALIZER_VERSION.as_bytes());
    w.u8(role);
    match &artifact.access {
        AccessList::Addresses(list) => {
            w.u8(0);
            w.u32(list.len());
            for a in list {
                w.out.extend_from_slice(&a.0);
            }
        }
        AccessList::Digests(list) => {
            w.u8(1);
            w.u32(list.len());
            for d in list {
                w.out.extend_from_slice(&d.0);
            }
        }
    }
    w.str(&artifact.name);
    w.u32(artifact.parameters.len());
    for p in &artifact.parameters {
        w.str(&p.name);
        w.word(&p.value);
    }
    w.u32(artifact.functions.len());
    for f in &artifact.functions {
        write_function(&mut w, f);
    }
    w.out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    role: u8,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|end| *end <= self.data.len())
            .ok_or(CodecError::Truncated(self.pos))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, CodecError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn bytes(&mut self) -> Result<Vec<u8>, CodecError> {
        let len = self.u32()?;
        Ok(self.take(len)?.to_vec())
    }

    fn str(&mut self) -> Result<String, CodecError> {
        let at = self.pos;
        let mut raw = self.bytes()?;
        mask(self.role, &mut raw);
        String::from_utf8(raw).map_err(|_| CodecError::Utf8(at))
    }

    fn word(&mut self) -> Result<Word, CodecError> {
        let at = self.pos;
        let len = self.u8()? as usize;
        if len > 32 {
            return Err(CodecError::NonCanonical(at));
        }
        let raw = self.take(len)?;
        if raw.first() == Some(&0) {
            return Err(CodecError::NonCanonical(at));
        }
        let mut be = [0u8; 32];
        be[32 - len..].copy_from_slice(raw);
        Ok(Word::from_be_bytes(be))
    }

    /// Reads a count and bounds it by the remaining input so hostile
    /// lengths cannot trigger huge allocations.
    fn count(&mut self) -> Result<usize, CodecError> {
        let at = self.pos;
        let n = self.u32()?;
        if n > self.data.len() - self.pos {
            return Err(CodecError::Truncated(at));
        }
        Ok(n)
    }

    fn tag(&mut self, what: &'static str, max: u8) -> Result<u8, CodecError> {
        let at = self.pos;
        let tag = self.u8()?;
        if tag > max {
            return Err(CodecError::Tag { what, tag, at });
        }
        Ok(tag)
    }

    fn abi(&mut self) -> Result<AbiType, CodecError> {
        Ok(ABI_TYPES[self.tag("abi type", 5)? as usize])
    }

    fn guard(&mut self) -> Result<Guard, CodecError> {
        Ok(match self.tag("guard", 6)? {
            0 => Guard::NotAfter { param: self.str()? },
            1 => Guard::Window {
                after: self.str()?,
                until: self.str()?,
            },
            2 => Guard::After { param: self.str()? },
            3 => Guard::ParticipantOnly,
            4 => Guard::DeployedAddrOnly,
            5 => Guard::AmountMet,
            _ => Guard::AmountNotMet,
        })
    }

    fn instr(&mut self) -> Result<Instr, CodecError> {
        let at = self.pos;
        let op = self.u8()?;
        Ok(match op {
            0x01 => Instr::Push { value: self.word()? },
            0x02 => Instr::PushBytes { data: self.bytes()? },
            0x03 => Instr::Pop,
            0x04 => Instr::Dup { depth: self.u8()? },
            0x05 => Instr::Swap { depth: self.u8()? },
            0x06 => Instr::Arg { index: self.u8()? },
            0x07 => Instr::Caller,
            0x08 => Instr::CallValue,
            0x09 => Instr::Timestamp,
            0x0a => Instr::SelfAddress,
            0x0b => Instr::SelfBalance,
            0x0c => Instr::Participant { index: self.u8()? },
            0x0d => Instr::PickParticipant,
            0x0e => Instr::Slot { name: self.str()? },
            0x0f => Instr::MapSlot { name: self.str()? },
            0x10 => Instr::SLoad,
            0x11 => Instr::SStore,
            0x12 => Instr::Add,
            0x13 => Instr::Sub,
            0x14 => Instr::Mul,
            0x15 => Instr::Div,
            0x16 => Instr::Mod,
            0x17 => Instr::Lt,
            0x18 => Instr::Gt,
            0x19 => Instr::Eq,
            0x1a => Instr::IsZero,
            0x1b => Instr::And,
            0x1c => Instr::Or,
            0x1d => Instr::Xor,
            0x1e => Instr::Select,
            0x1f => Instr::Keccak,
            0x20 => Instr::Require { reason: self.str()? },
            0x21 => Instr::Transfer,
            0x22 => Instr::Call {
                selector: self.array::<4>()?,
                args: self.u8()?,
            },
            0x23 => Instr::Invoke { function: self.str()? },
            0x24 => Instr::OffchainInvoke { function: self.str()? },
            0x25 => Instr::EcRecover,
            0x26 => Instr::Create,
            0x27 => {
                let cost_at = self.pos;
                let cost = self.word()?;
                Instr::Compute {
                    cost: u64::try_from(cost).map_err(|_| CodecError::NonCanonical(cost_at))?,
                }
            }
            0x28 => Instr::Return,
            tag => {
                return Err(CodecError::Tag {
                    what: "opcode",
                    tag,
                    at,
                })
            }
        })
    }

    fn function(&mut self) -> Result<FunctionSpec, CodecError> {
        let name = self.str()?;
        let kind = match self.tag("kind", 2)? {
            0 => None,
            1 => Some(FunctionKind::Light),
            _ => Some(FunctionKind::Heavy),
        };
        let flags = self.tag("flags", 3)?;
        let visibility = match self.tag("visibility", 2)? {
            0 => Visibility::Public,
            1 => Visibility::External,
            _ => Visibility::Private,
        };
        let mut inputs = Vec::new();
        for _ in 0..self.count()? {
            inputs.push(self.abi()?);
        }
        let returns = match self.tag("return type", 6)? {
            0 => None,
            t => Some(ABI_TYPES[t as usize - 1]),
        };
        let mut modifiers = Vec::new();
        for _ in 0..self.count()? {
            modifiers.push(self.guard()?);
        }
        let mut body = Vec::new();
        for _ in 0..self.count()? {
            body.push(self.instr()?);
        }
        Ok(FunctionSpec {
            name,
            kind,
            transfers_currency: flags & 1 != 0,
            payable: flags & 2 != 0,
            visibility,
            inputs,
            returns,
            modifiers,
            body,
        })
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<Artifact, CodecError> {
    let mut r = Reader { data: bytes, pos: 0, role: 0 };
    let vlen = r.u8()? as usize;
    if r.take(vlen).ok() != Some(SERIALIZER_VERSION.as_bytes()) {
        return Err(CodecError::Version);
    }
    let role = match r.tag("role", 2)? {
        0 => ArtifactRole::Whole,
        1 => ArtifactRole::OnChain,
        _ => ArtifactRole::OffChain,
    };
    r.role = role_tag(role);
    let access = match r.tag("access list", 1)? {
        0 => {
            let mut list = Vec::new();
            for _ in 0..r.count()? {
                list.push(Address(r.array::<20>()?));
            }
            AccessList::Addresses(list)
        }
        _ => {
            let mut list = Vec::new();
            for _ in 0..r.count()? {
                list.push(Hash32(r.array::<32>()?));
            }
            AccessList::Digests(list)
        }
    };
    let name = r.str()?;
    let mut parameters = Vec::new();
    for _ in 0..r.count()? {
        parameters.push(Parameter {
            name: r.str()?,
            value: r.word()?,
        });
    }
    let mut functions = Vec::new();
    for _ in 0..r.count()? {
        functions.push(r.function()?);
    }
    let rest = bytes.len() - r.pos;
    if rest != 0 {
        return Err(CodecError::Trailing(rest));
    }
    Ok(Artifact {
        role,
        name,
        access,
        parameters,
        functions,
    })
}
