//! Line-oriented crypto test-vector files.
//!
//! One record per line, fields separated by single spaces, all byte fields
//! lowercase hex without a `0x` prefix:
//!
//! ```text
//! keccak <input> <digest>
//! ecsign <digest> <private-key> <v> <r> <s>
//! ```
//!
//! `v` is the recovery byte as two hex digits (`1b` or `1c`). Blank lines and
//! lines starting with `#` are skipped. An empty `keccak` input is written as
//! `-`.

use std::fmt;

use super::{ecrecover, ecsign, keccak256, Hash32, PrivateKey, Signature};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VectorRecord {
    Keccak {
        input: Vec<u8>,
        digest: Hash32,
    },
    Ecsign {
        digest: Hash32,
        private_key: [u8; 32],
        signature: Signature,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct VectorParseError {
    pub line: usize,
    pub message: String,
}

/// Outcome of checking a single record against the implementation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VectorMismatch {
    Digest { line: usize, actual: Hash32 },
    Signature { line: usize, actual: Signature },
    Recovery { line: usize },
}

impl fmt::Display for VectorRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorRecord::Keccak { input, digest } => {
                let input = if input.is_empty() {
                    "-".to_string()
                } else {
                    hex::encode(input)
                };
                write!(f, "keccak {input} {digest}")
            }
            VectorRecord::Ecsign {
                digest,
                private_key,
                signature,
            } => write!(
                f,
                "ecsign {digest} {} {:02x} {} {}",
                hex::encode(private_key),
                signature.v,
                signature.r,
                signature.s
            ),
        }
    }
}

fn strict_hex(field: &str, line: usize) -> Result<Vec<u8>, VectorParseError> {
    let err = |message: String| VectorParseError { line, message };
    if field.starts_with("0x") {
        return Err(err("hex must not carry a 0x prefix".into()));
    }
    if field.chars().any(|c| c.is_ascii_uppercase()) {
        return Err(err("hex must be lowercase".into()));
    }
    hex::decode(field).map_err(|e| err(e.to_string()))
}

fn fixed<const N: usize>(field: &str, line: usize) -> Result<[u8; N], VectorParseError> {
    let bytes = strict_hex(field, line)?;
    bytes.as_slice().try_into().map_err(|_| VectorParseError {
        line,
        message: format!("expected {N} bytes, got {}", bytes.len()),
    })
}

pub fn parse(text: &str) -> Result<Vec<VectorRecord>, VectorParseError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(' ').collect();
        let record = match fields.as_slice() {
            ["keccak", input, digest] => VectorRecord::Keccak {
                input: if *input == "-" {
                    Vec::new()
                } else {
                    strict_hex(input, line)?
                },
                digest: Hash32(fixed::<32>(digest, line)?),
            },
            ["ecsign", digest, key, v, r, s] => VectorRecord::Ecsign {
                digest: Hash32(fixed::<32>(digest, line)?),
                private_key: fixed::<32>(key, line)?,
                signature: Signature {
                    v: fixed::<1>(v, line)?[0],
                    r: Hash32(fixed::<32>(r, line)?),
                    s: Hash32(fixed::<32>(s, line)?),
                },
            },
            _ => {
                return Err(VectorParseError {
                    line,
                    message: format!("unrecognised record: {trimmed}"),
                })
            }
        };
        out.push(record);
    }
    Ok(out)
}

pub fn render(records: &[VectorRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&record.to_string());
        out.push('\n');
    }
    out
}

/// Runs every record through the implementation; returns the mismatches.
pub fn check(records: &[VectorRecord]) -> Vec<VectorMismatch> {
    let mut mismatches = Vec::new();
    for (line, record) in records.iter().enumerate() {
        match record {
            VectorRecord::Keccak { input, digest } => {
                let actual = keccak256(input);
                if actual != *digest {
                    mismatches.push(VectorMismatch::Digest { line, actual });
                }
            }
            VectorRecord::Ecsign {
                digest,
                private_key,
                signature,
            } => {
                let Ok(key) = PrivateKey::from_bytes(private_key) else {
                    mismatches.push(VectorMismatch::Recovery { line });
                    continue;
                };
                let actual = ecsign(digest, &key);
                if actual != *signature {
                    mismatches.push(VectorMismatch::Signature { line, actual });
                }
                if ecrecover(digest, signature).ok() != Some(key.address()) {
                    mismatches.push(VectorMismatch::Recovery { line });
                }
            }
        }
    }
    mismatches
}
