//! Commitments, serial-number keys, the set-membership accumulator and the
//! proof-of-knowledge interface.
//!
//! Every hash in this crate is SHA-256 over a one-byte-length-prefixed domain
//! tag followed by fixed-width fields, so digests are stable across platforms.

mod hash;
mod keys;
mod merkle;
mod proof;

pub use hash::{commit, commit_bytes, tagged_hash, Digest, Randomness, Secret, COMMIT_TAG};
pub use keys::{derive_serial, sign, verify_sig, RootKey, Signature};
pub use merkle::{
    build_accumulator, prove_membership, verify_membership, Accumulator, MembershipProof,
};
pub(crate) use proof::Reader;
pub use proof::{
    prove_balance_pok, prove_prefix_pok, prove_set_pok, verify_balance_pok, verify_prefix_pok,
    verify_set_pok, BalancePoK, Envelope, PoKVerdict, PrefixPoK, ProofSystem, SerialRegistry,
    SetPoK, TransparentBackend,
};

/// A commitment `h(S||r)` held in a wallet's secret mapping.
pub type Commitment = Digest;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
    #[error("cannot build an accumulator over an empty set")]
    EmptySet,
    #[error("commitment is not a member of the set")]
    NotAMember,
    #[error("prover witness does not satisfy the relation")]
    BadWitness,
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
}
