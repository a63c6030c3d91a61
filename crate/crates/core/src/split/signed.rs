use serde::{Deserialize, Serialize};

use crate::crypto::{ecrecover, ecsign, keccak256, Address, Hash32, PrivateKey, Signature};

/// Off-chain bytecode with one signature per participant, in participant order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedCopy {
    #[serde(with = "crate::ir::bytes_serde")]
    pub bytecode: Vec<u8>,
    pub signatures: Vec<Signature>,
}

impl SignedCopy {
    pub fn digest(&self) -> Hash32 {
        keccak256(&self.bytecode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verification {
    Accepted,
    Rejected { index: usize },
}

impl Verification {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verification::Accepted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{keys} signing keys supplied for {participants} participants")]
pub struct KeyCountMismatch {
    pub keys: usize,
    pub participants: usize,
}

/// Signs `keccak256(bytecode)` with every key, in order.
pub fn sign_copy(
    bytecode: &[u8],
    keys: &[PrivateKey],
    participants: usize,
) -> Result<SignedCopy, KeyCountMismatch> {
    if keys.len() != participants {
        return Err(KeyCountMismatch {
            keys: keys.len(),
            participants,
        });
    }
    let digest = keccak256(bytecode);
    Ok(SignedCopy {
        bytecode: bytecode.to_vec(),
        signatures: keys.iter().map(|k| ecsign(&digest, k)).collect(),
    })
}

/// Checks that signature `i` recovers to `participants[i]` for every `i`.
/// A missing or surplus signature rejects at the first unmatched index.
pub fn verify_copy(copy: &SignedCopy, participants: &[Address]) -> Verification {
    let digest = copy.digest();
    for (index, expected) in participants.iter().enumerate() {
        let recovered = copy
            .signatures
            .get(index)
            .and_then(|sig| ecrecover(&digest, sig).ok());
        if recovered.as_ref() != Some(expected) {
            return Verification::Rejected { index };
        }
    }
    if copy.signatures.len() != participants.len() {
        return Verification::Rejected {
            index: participants.len(),
        };
    }
    Verification::Accepted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::derive_keypair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn keys(n: usize) -> Vec<PrivateKey> {
        (0..n)
            .map(|i| derive_keypair(&keccak256([i as u8; 4]).0).unwrap().0)
            .collect()
    }

    #[test]
    fn round_trip_and_count_mismatch() {
        let ks = keys(2);
        let parts: Vec<Address> = ks.iter().map(PrivateKey::address).collect();
        let copy = sign_copy(b"bytecode", &ks, 2).unwrap();
        assert_eq!(verify_copy(&copy, &parts), Verification::Accepted);
        assert_eq!(
            sign_copy(b"bytecode", &ks[..1], 2),
            Err(KeyCountMismatch {
                keys: 1,
                participants: 2
            })
        );
    }

    #[test]
    fn swapped_signatures_reject_first_index() {
        let ks = keys(2);
        let parts: Vec<Address> = ks.iter().map(PrivateKey::address).collect();
        let mut copy = sign_copy(b"bytecode", &ks, 2).unwrap();
        copy.signatures.swap(0, 1);
        assert_eq!(verify_copy(&copy, &parts), Verification::Rejected { index: 0 });
    }

    #[test]
    fn surplus_signature_rejected() {
        let ks = keys(3);
        let parts: Vec<Address> = ks[..2].iter().map(PrivateKey::address).collect();
        let copy = sign_copy(b"x", &ks, 3).unwrap();
        assert_eq!(verify_copy(&copy, &parts), Verification::Rejected { index: 2 });
    }

    #[test]
    fn only_full_signer_set_accepted() {
        let outsider = derive_keypair(&[0xee; 32]).unwrap().0;
        for n in 1..=3 {
            let ks = keys(n);
            let parts: Vec<Address> = ks.iter().map(PrivateKey::address).collect();
            let digest = keccak256(b"contract");
            for mask in 0u32..(1 << n) {
                let signatures = (0..n)
                    .map(|i| {
                        let signer = if mask & (1 << i) != 0 { &ks[i] } else { &outsider };
                        ecsign(&digest, signer)
                    })
                    .collect();
                let copy = SignedCopy {
                    bytecode: b"contract".to_vec(),
                    signatures,
                };
                let full = mask == (1 << n) - 1;
                assert_eq!(verify_copy(&copy, &parts).is_accepted(), full, "n={n} mask={mask:b}");
            }
        }
    }

    #[test]
    fn byte_flips_are_rejected() {
        let ks = keys(2);
        let parts: Vec<Address> = ks.iter().map(PrivateKey::address).collect();
        let bytecode: Vec<u8> = (0..64u8).collect();
        let copy = sign_copy(&bytecode, &ks, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut tampered = copy.clone();
            let pos = rng.gen_range(0..tampered.bytecode.len());
            tampered.bytecode[pos] ^= rng.gen_range(1..=255u8);
            assert!(!verify_copy(&tampered, &parts).is_accepted());
        }
    }
}
