//! Hashing, secp256k1 keys, recoverable signatures and address derivation.
//!
//! Everything here follows the Ethereum conventions: Keccak-256 with the
//! original padding, addresses as the trailing 20 bytes of the hashed
//! uncompressed public key, and `(v, r, s)` signatures with `v ∈ {27, 28}`.
//! Signing operates on a raw 32-byte digest; no message prefix is applied.

pub mod vectors;

use std::fmt;
use std::str::FromStr;

use ethnum::U256;
use k256::ecdsa::{RecoveryId, Signature as EcdsaSignature, SigningKey, VerifyingKey};
use k256::elliptic_curve::ops::Reduce;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha3::{Digest, Keccak256};

/// secp256k1 group order.
const CURVE_ORDER: U256 = U256::from_words(
    0xFFFF_FFFF_FFFF_FFFF_FFFF_FFFF_FFFF_FFFE,
    0xBAAE_DCE6_AF48_A03B_BFD2_5E8C_D036_4141,
);
const HALF_ORDER: U256 = U256::from_words(
    0x7FFF_FFFF_FFFF_FFFF_FFFF_FFFF_FFFF_FFFF,
    0x5D57_6E73_57A4_501D_DFE9_2F46_681B_20A0,
);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("seed reduces to the zero scalar")]
    InvalidSeed,
    #[error("private key is zero or not below the curve order")]
    InvalidPrivateKey,
    #[error("signature recovery failed: {0}")]
    RecoveryFailed(&'static str),
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
}

macro_rules! fixed_bytes {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;
            pub const ZERO: Self = Self([0u8; $len]);

            pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
                let arr: [u8; $len] = bytes.try_into().map_err(|_| CryptoError::Length {
                    expected: $len,
                    actual: bytes.len(),
                })?;
                Ok(Self(arr))
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn is_zero(&self) -> bool {
                self.0 == [0u8; $len]
            }

            /// Lowercase hex, no `0x` prefix.
            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }
        }

        impl AsRef<[u8]> for $name {
            fn as_ref(&self) -> &[u8] {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}(0x{})", stringify!($name), self.to_hex())
            }
        }

        impl FromStr for $name {
            type Err = CryptoError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let s = s.strip_prefix("0x").unwrap_or(s);
                let bytes = hex::decode(s).map_err(|e| CryptoError::Hex(e.to_string()))?;
                Self::from_slice(&bytes)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

fixed_bytes!(
    /// A 32-byte digest.
    Hash32,
    32
);
fixed_bytes!(
    /// A 20-byte account identity.
    Address,
    20
);

impl Hash32 {
    pub fn to_word(&self) -> U256 {
        U256::from_be_bytes(self.0)
    }
}

impl Address {
    /// Right-aligned in a 32-byte word, the way the ABI and the contract IR
    /// carry addresses.
    pub fn to_word(&self) -> U256 {
        let mut buf = [0u8; 32];
        buf[12..].copy_from_slice(&self.0);
        U256::from_be_bytes(buf)
    }

    /// Inverse of [`Address::to_word`]; `None` when the upper 12 bytes are set.
    pub fn from_word(word: U256) -> Option<Self> {
        let bytes = word.to_be_bytes();
        if bytes[..12].iter().any(|b| *b != 0) {
            return None;
        }
        let mut out = [0u8; 20];
        out.copy_from_slice(&bytes[12..]);
        Some(Self(out))
    }
}

/// Keccak-256 (original Keccak padding, not FIPS-202 SHA3-256).
pub fn keccak256(data: impl AsRef<[u8]>) -> Hash32 {
    Hash32(Keccak256::digest(data.as_ref()).into())
}

/// A secp256k1 secret scalar in `[1, n-1]`.
#[derive(Clone)]
pub struct PrivateKey(SigningKey);

impl PrivateKey {
    pub fn from_bytes(bytes: &[u8; 32]) -> Result<Self, CryptoError> {
        SigningKey::from_slice(bytes)
            .map(Self)
            .map_err(|_| CryptoError::InvalidPrivateKey)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes().into()
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey::from_verifying_key(self.0.verifying_key())
    }

    pub fn address(&self) -> Address {
        self.public_key().address()
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrivateKey({})", self.address())
    }
}

impl PartialEq for PrivateKey {
    fn eq(&self, other: &Self) -> bool {
        self.to_bytes() == other.to_bytes()
    }
}

impl Eq for PrivateKey {}

/// Uncompressed curve point `x || y` without the `0x04` tag.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(pub [u8; 64]);

impl PublicKey {
    fn from_verifying_key(key: &VerifyingKey) -> Self {
        let point = key.to_encoded_point(false);
        let mut out = [0u8; 64];
        out.copy_from_slice(&point.as_bytes()[1..]);
        Self(out)
    }

    pub fn address(&self) -> Address {
        let digest = keccak256(self.0);
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest.0[12..]);
        Address(out)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey(0x{})", hex::encode(self.0))
    }
}

/// Recoverable ECDSA signature in Ethereum's `(v, r, s)` layout.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub v: u8,
    pub r: Hash32,
    pub s: Hash32,
}

impl Signature {
    /// 65-byte `r || s || v` form.
    pub fn to_bytes(&self) -> [u8; 65] {
        let mut out = [0u8; 65];
        out[..32].copy_from_slice(&self.r.0);
        out[32..64].copy_from_slice(&self.s.0);
        out[64] = self.v;
        out
    }

    pub fn from_bytes(bytes: &[u8; 65]) -> Self {
        Self {
            r: Hash32(bytes[..32].try_into().expect("32 bytes")),
            s: Hash32(bytes[32..64].try_into().expect("32 bytes")),
            v: bytes[64],
        }
    }

    /// Checks the domain of every field: `v ∈ {27, 28}`, `0 < r < n`,
    /// `0 < s <= n/2`.
    pub fn check_ranges(&self) -> Result<(), CryptoError> {
        if self.v != 27 && self.v != 28 {
            return Err(CryptoError::RecoveryFailed("v must be 27 or 28"));
        }
        let r = self.r.to_word();
        let s = self.s.to_word();
        if r == U256::ZERO || r >= CURVE_ORDER {
            return Err(CryptoError::RecoveryFailed("r out of range"));
        }
        if s == U256::ZERO || s >= CURVE_ORDER {
            return Err(CryptoError::RecoveryFailed("s out of range"));
        }
        if s > HALF_ORDER {
            return Err(CryptoError::RecoveryFailed("s not in lower half-order"));
        }
        Ok(())
    }

    pub fn is_low_s(&self) -> bool {
        self.s.to_word() <= HALF_ORDER
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature(v={}, r=0x{}, s=0x{})", self.v, self.r, self.s)
    }
}

/// Deterministic key material for test identities: the seed is reduced
/// modulo the curve order and must not reduce to zero.
pub fn derive_keypair(seed: &[u8; 32]) -> Result<(PrivateKey, PublicKey, Address), CryptoError> {
    let field_bytes = k256::FieldBytes::from(*seed);
    let scalar = <k256::Scalar as Reduce<k256::U256>>::reduce_bytes(&field_bytes);
    if bool::from(scalar.is_zero()) {
        return Err(CryptoError::InvalidSeed);
    }
    let key = SigningKey::from_bytes(&scalar.to_bytes()).map_err(|_| CryptoError::InvalidSeed)?;
    let private = PrivateKey(key);
    let public = private.public_key();
    let address = public.address();
    Ok((private, public, address))
}

/// Signs a raw digest with an RFC 6979 nonce; the result is low-s normalized.
pub fn ecsign(digest: &Hash32, key: &PrivateKey) -> Signature {
    let (sig, recid) = key
        .0
        .sign_prehash_recoverable(&digest.0)
        .expect("a 32-byte prehash is always accepted");
    let (sig, recid) = match sig.normalize_s() {
        Some(normalized) => (
            normalized,
            RecoveryId::new(!recid.is_y_odd(), recid.is_x_reduced()),
        ),
        None => (sig, recid),
    };
    let (r, s) = sig.split_bytes();
    Signature {
        v: 27 + recid.to_byte(),
        r: Hash32(r.into()),
        s: Hash32(s.into()),
    }
}

/// Recovers the signer address, failing (rather than returning an
/// unrelated address) on malformed signatures.
pub fn ecrecover(digest: &Hash32, sig: &Signature) -> Result<Address, CryptoError> {
    sig.check_ranges()?;
    let ecdsa = EcdsaSignature::from_scalars(sig.r.0, sig.s.0)
        .map_err(|_| CryptoError::RecoveryFailed("invalid scalars"))?;
    let recid = RecoveryId::from_byte(sig.v - 27)
        .ok_or(CryptoError::RecoveryFailed("invalid recovery id"))?;
    let key = VerifyingKey::recover_from_prehash(&digest.0, &ecdsa, recid)
        .map_err(|_| CryptoError::RecoveryFailed("no point recovers"))?;
    Ok(PublicKey::from_verifying_key(&key).address())
}

/// Address of a contract created by `creator` at `nonce`:
/// `keccak256(rlp([creator, nonce]))[12..]`.
pub fn contract_address(creator: &Address, nonce: u64) -> Address {
    let mut payload = Vec::with_capacity(30);
    payload.push(0x80 + 20);
    payload.extend_from_slice(&creator.0);
    rlp_append_u64(&mut payload, nonce);

    let mut encoded = Vec::with_capacity(payload.len() + 1);
    // payload is at most 1 + 20 + 9 bytes, so the short list form always applies
    encoded.push(0xc0 + payload.len() as u8);
    encoded.extend_from_slice(&payload);

    let digest = keccak256(&encoded);
    let mut out = [0u8; 20];
    out.copy_from_slice(&digest.0[12..]);
    Address(out)
}

fn rlp_append_u64(out: &mut Vec<u8>, value: u64) {
    if value == 0 {
        out.push(0x80);
        return;
    }
    let bytes = value.to_be_bytes();
    let first = bytes.iter().position(|b| *b != 0).unwrap_or(7);
    let trimmed = &bytes[first..];
    if trimmed.len() == 1 && trimmed[0] < 0x80 {
        out.push(trimmed[0]);
    } else {
        out.push(0x80 + trimmed.len() as u8);
        out.extend_from_slice(trimmed);
    }
}
