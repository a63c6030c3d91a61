//! Entry-point payload encoding.
//!
//! A payload is a 4-byte selector followed by the arguments in 32-byte
//! big-endian head slots. Static values sit in their slot directly (addresses
//! right-aligned); a `bytes` argument stores an offset in its head slot and
//! its length-prefixed, zero-padded contents in the tail.

use crate::crypto::Address;
use crate::ir::{AbiType, Word};

/// A runtime value: either a word or a byte string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Word(Word),
    Bytes(Vec<u8>),
}

impl Value {
    pub fn bool(b: bool) -> Self {
        Value::Word(if b { Word::ONE } else { Word::ZERO })
    }

    pub fn address(a: &Address) -> Self {
        Value::Word(a.to_word())
    }

    pub fn as_word(&self) -> Option<Word> {
        match self {
            Value::Word(w) => Some(*w),
            Value::Bytes(_) => None,
        }
    }
}

impl From<Word> for Value {
    fn from(w: Word) -> Self {
        Value::Word(w)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AbiError {
    #[error("payload shorter than a selector")]
    MissingSelector,
    #[error("argument {0} is truncated")]
    Truncated(usize),
    #[error("argument {index} is not a valid {ty}")]
    InvalidValue { index: usize, ty: &'static str },
    #[error("trailing bytes after the last argument")]
    Trailing,
}

fn padded_len(len: usize) -> usize {
    len.div_ceil(32) * 32
}

/// Encodes arguments without a selector.
pub fn encode_args(args: &[Value]) -> Vec<u8> {
    let head_len = args.len() * 32;
    let mut head = Vec::with_capacity(head_len);
    let mut tail = Vec::new();
    for arg in args {
        match arg {
            Value::Word(w) => head.extend_from_slice(&w.to_be_bytes()),
            Value::Bytes(data) => {
                let offset = Word::from((head_len + tail.len()) as u64);
                head.extend_from_slice(&offset.to_be_bytes());
                tail.extend_from_slice(&Word::from(data.len() as u64).to_be_bytes());
                tail.extend_from_slice(data);
                tail.resize(tail.len() + padded_len(data.len()) - data.len(), 0);
            }
        }
    }
    head.extend_from_slice(&tail);
    head
}

pub fn encode_call(selector: [u8; 4], args: &[Value]) -> Vec<u8> {
    let mut out = selector.to_vec();
    out.extend_from_slice(&encode_args(args));
    out
}

pub fn split_selector(payload: &[u8]) -> Result<([u8; 4], &[u8]), AbiError> {
    if payload.len() < 4 {
        return Err(AbiError::MissingSelector);
    }
    let selector = [payload[0], payload[1], payload[2], payload[3]];
    Ok((selector, &payload[4..]))
}

fn word_at(data: &[u8], offset: usize, index: usize) -> Result<Word, AbiError> {
    let end = offset.checked_add(32).ok_or(AbiError::Truncated(index))?;
    let slice = data.get(offset..end).ok_or(AbiError::Truncated(index))?;
    Ok(Word::from_be_bytes(slice.try_into().expect("32-byte slice")))
}

/// Decodes and type-checks arguments. The encoding must be exact: offsets
/// point into the tail in order and no bytes may follow the last argument.
pub fn decode_args(types: &[AbiType], data: &[u8]) -> Result<Vec<Value>, AbiError> {
    let head_len = types.len() * 32;
    let mut out = Vec::with_capacity(types.len());
    let mut expected_tail = head_len;
    for (index, ty) in types.iter().enumerate() {
        let word = word_at(data, index * 32, index)?;
        let invalid = || AbiError::InvalidValue {
            index,
            ty: ty.name(),
        };
        let value = match ty {
            AbiType::Bool => {
                if word > Word::ONE {
                    return Err(invalid());
                }
                Value::Word(word)
            }
            AbiType::Uint8 => {
                if word > Word::from(u8::MAX) {
                    return Err(invalid());
                }
                Value::Word(word)
            }
            AbiType::Address => {
                if Address::from_word(word).is_none() {
                    return Err(invalid());
                }
                Value::Word(word)
            }
            AbiType::Uint256 | AbiType::Bytes32 => Value::Word(word),
            AbiType::Bytes => {
                if word != Word::from(expected_tail as u64) {
                    return Err(invalid());
                }
                let len_word = word_at(data, expected_tail, index)?;
                let len: usize = len_word.try_into().map_err(|_| invalid())?;
                let start = expected_tail + 32;
                let end = start.checked_add(len).ok_or(AbiError::Truncated(index))?;
                let bytes = data.get(start..end).ok_or(AbiError::Truncated(index))?;
                let padded_end = start + padded_len(len);
                let padding = data.get(end..padded_end).ok_or(AbiError::Truncated(index))?;
                if padding.iter().any(|b| *b != 0) {
                    return Err(invalid());
                }
                expected_tail = padded_end;
                Value::Bytes(bytes.to_vec())
            }
        };
        out.push(value);
    }
    if data.len() != expected_tail.max(head_len) {
        return Err(AbiError::Trailing);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn static_layout() {
        let addr: Address = "6ac7ea33f8831ea9dcc53393aaa88b25a785dbf0".parse().unwrap();
        let enc = encode_args(&[Value::address(&addr), Value::bool(true)]);
        assert_eq!(enc.len(), 64);
        assert_eq!(&enc[12..32], &addr.0);
        assert_eq!(enc[63], 1);
    }

    #[test]
    fn dynamic_bytes_layout() {
        let enc = encode_args(&[Value::Bytes(vec![0xaa; 33]), Value::Word(Word::from(27u8))]);
        // head: offset 64, then 27; tail: length 33 then 64 bytes of data
        assert_eq!(enc.len(), 64 + 32 + 64);
        assert_eq!(enc[31], 64);
        assert_eq!(enc[63], 27);
        assert_eq!(enc[64 + 31], 33);
        let dec = decode_args(&[AbiType::Bytes, AbiType::Uint8], &enc).unwrap();
        assert_eq!(dec[0], Value::Bytes(vec![0xaa; 33]));
    }

    #[test]
    fn rejects_bad_values() {
        let enc = encode_args(&[Value::Word(Word::from(2u8))]);
        assert!(decode_args(&[AbiType::Bool], &enc).is_err());
        let enc = encode_args(&[Value::Word(Word::MAX)]);
        assert!(decode_args(&[AbiType::Address], &enc).is_err());
        assert!(decode_args(&[AbiType::Uint8], &enc).is_err());
        let mut enc = encode_args(&[Value::Word(Word::ONE)]);
        enc.push(0);
        assert_eq!(decode_args(&[AbiType::Uint256], &enc), Err(AbiError::Trailing));
        assert_eq!(decode_args(&[AbiType::Uint256], &[0u8; 5]), Err(AbiError::Truncated(0)));
    }

    proptest! {
        #[test]
        fn bytes_and_words_round_trip(data in proptest::collection::vec(any::<u8>(), 0..200), w in any::<[u8; 32]>()) {
            let args = vec![Value::Bytes(data), Value::Word(Word::from_be_bytes(w))];
            let enc = encode_args(&args);
            prop_assert_eq!(decode_args(&[AbiType::Bytes, AbiType::Bytes32], &enc).unwrap(), args);
        }
    }
}
