//! Proof-of-knowledge interface and the transparent relation-checking backend.
//!
//! The transparent backend carries the witness inside an [`Envelope`] that
//! only the verifier opens. It is sound and complete for the relations below
//! but not hiding: it stands in for a succinct zero-knowledge backend behind
//! the same [`ProofSystem`] trait. No public accessor of a proof returns the
//! randomness `r` or the hidden transaction suffix.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::merkle::depth;
use super::{
    build_accumulator, commit, prove_membership, tagged_hash, verify_membership, Commitment,
    CryptoError, Digest, MembershipProof, Randomness, Secret,
};
use crate::ledger::{tx_digest_of_bytes, Transaction};

/// Opaque witness carrier. Contents are readable only inside this crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope(Vec<u8>);

impl Envelope {
    pub(crate) fn seal(bytes: Vec<u8>) -> Self {
        Envelope(bytes)
    }

    pub(crate) fn open(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoKVerdict {
    Accept,
    Reject,
    Duplicate,
}

/// Serials already presented in an accepted balance proof.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SerialRegistry {
    seen: BTreeSet<Secret>,
}

impl SerialRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, s: &Secret) -> bool {
        self.seen.contains(s)
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// Proof that the holder knows `r` with `h(S||r)` in the committed set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancePoK {
    pub(crate) serial: Secret,
    pub(crate) root: Digest,
    pub(crate) envelope: Envelope,
}

/// Proof that a revealed `tx1` prefixes the transaction behind a digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixPoK {
    pub(crate) prefix: Vec<u8>,
    pub(crate) target: Digest,
    pub(crate) envelope: Envelope,
}

/// Proof that a public digest is a member of a committed set, hiding its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetPoK {
    pub(crate) member: Digest,
    pub(crate) root: Digest,
    pub(crate) envelope: Envelope,
}

pub trait ProofSystem {
    fn prove_balance(
        &self,
        r: &Randomness,
        s: &Secret,
        coms: &[Commitment],
    ) -> Result<BalancePoK, CryptoError>;
    fn verify_balance(
        &self,
        pok: &BalancePoK,
        root: &Digest,
        registry: &mut SerialRegistry,
    ) -> PoKVerdict;
    fn prove_prefix(
        &self,
        tx1: &[u8],
        tx2: &[u8],
        target: &Digest,
    ) -> Result<PrefixPoK, CryptoError>;
    fn verify_prefix(&self, pok: &PrefixPoK, target: &Digest) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TransparentBackend;

// Path witness layout: index u64 LE | leaf_count u64 LE | n u8 | n * 32 bytes.
fn encode_path(out: &mut Vec<u8>, p: &MembershipProof) {
    out.extend_from_slice(&p.index.to_le_bytes());
    out.extend_from_slice(&p.leaf_count.to_le_bytes());
    out.push(p.siblings.len() as u8);
    for s in &p.siblings {
        out.extend_from_slice(&s.0);
    }
}

fn decode_path(leaf: Commitment, bytes: &[u8]) -> Option<MembershipProof> {
    if bytes.len() < 17 {
        return None;
    }
    let index = u64::from_le_bytes(bytes[0..8].try_into().ok()?);
    let leaf_count = u64::from_le_bytes(bytes[8..16].try_into().ok()?);
    let n = bytes[16] as usize;
    let rest = &bytes[17..];
    if rest.len() != n * 32 || Some(n) != depth(leaf_count) {
        return None;
    }
    let siblings = rest
        .chunks(32)
        .map(|c| Digest::from_slice(c).ok())
        .collect::<Option<_>>()?;
    Some(MembershipProof {
        leaf,
        index,
        leaf_count,
        siblings,
    })
}

impl ProofSystem for TransparentBackend {
    fn prove_balance(
        &self,
        r: &Randomness,
        s: &Secret,
        coms: &[Commitment],
    ) -> Result<BalancePoK, CryptoError> {
        let com = commit(s, r);
        let path = prove_membership(&com, coms)?;
        let acc = build_accumulator(coms)?;
        let mut w = r.0.to_vec();
        encode_path(&mut w, &path);
        Ok(BalancePoK {
            serial: *s,
            root: acc.root,
            envelope: Envelope::seal(w),
        })
    }

    fn verify_balance(
        &self,
        pok: &BalancePoK,
        root: &Digest,
        registry: &mut SerialRegistry,
    ) -> PoKVerdict {
        if registry.contains(&pok.serial) {
            return PoKVerdict::Duplicate;
        }
        if pok.root != *root {
            return PoKVerdict::Reject;
        }
        let w = pok.envelope.open();
        if w.len() < 32 {
            return PoKVerdict::Reject;
        }
        let r = Randomness::from_slice(&w[..32]).expect("32 bytes");
        let Some(path) = decode_path(commit(&pok.serial, &r), &w[32..]) else {
            return PoKVerdict::Reject;
        };
        if !verify_membership(&path, root) {
            return PoKVerdict::Reject;
        }
        registry.seen.insert(pok.serial);
        PoKVerdict::Accept
    }

    fn prove_prefix(
        &self,
        tx1: &[u8],
        tx2: &[u8],
        target: &Digest,
    ) -> Result<PrefixPoK, CryptoError> {
        let mut full = tx1.to_vec();
        full.extend_from_slice(tx2);
        if tx_digest_of_bytes(&full) != *target {
            return Err(CryptoError::BadWitness);
        }
        Ok(PrefixPoK {
            prefix: tx1.to_vec(),
            target: *target,
            envelope: Envelope::seal(tx2.to_vec()),
        })
    }

    fn verify_prefix(&self, pok: &PrefixPoK, target: &Digest) -> bool {
        if pok.target != *target {
            return false;
        }
        let mut full = pok.prefix.clone();
        full.extend_from_slice(pok.envelope.open());
        tx_digest_of_bytes(&full) == *target && Transaction::decode(&full).is_ok()
    }
}

pub fn prove_balance_pok(
    r: &Randomness,
    s: &Secret,
    coms: &[Commitment],
) -> Result<BalancePoK, CryptoError> {
    TransparentBackend.prove_balance(r, s, coms)
}

pub fn verify_balance_pok(
    pok: &BalancePoK,
    root: &Digest,
    registry: &mut SerialRegistry,
) -> PoKVerdict {
    TransparentBackend.verify_balance(pok, root, registry)
}

pub fn prove_prefix_pok(tx1: &[u8], tx2: &[u8], target: &Digest) -> Result<PrefixPoK, CryptoError> {
    TransparentBackend.prove_prefix(tx1, tx2, target)
}

pub fn verify_prefix_pok(pok: &PrefixPoK, target: &Digest) -> bool {
    TransparentBackend.verify_prefix(pok, target)
}

pub fn prove_set_pok(member: &Digest, set: &[Digest]) -> Result<SetPoK, CryptoError> {
    let path = prove_membership(member, set)?;
    let acc = build_accumulator(set)?;
    let mut w = Vec::new();
    encode_path(&mut w, &path);
    Ok(SetPoK {
        member: *member,
        root: acc.root,
        envelope: Envelope::seal(w),
    })
}

pub fn verify_set_pok(pok: &SetPoK, root: &Digest) -> bool {
    if pok.root != *root {
        return false;
    }
    decode_path(pok.member, pok.envelope.open()).is_some_and(|p| verify_membership(&p, root))
}

const POK_TAG: &[u8] = b"dpacc/pok-bytes/v1";

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

pub(crate) struct Reader<'a>(pub(crate) &'a [u8]);

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], CryptoError> {
        if self.0.len() < n {
            return Err(CryptoError::Malformed("truncated"));
        }
        let (h, t) = self.0.split_at(n);
        self.0 = t;
        Ok(h)
    }

    pub(crate) fn digest(&mut self) -> Result<Digest, CryptoError> {
        Digest::from_slice(self.take(32)?)
    }

    pub(crate) fn bytes(&mut self) -> Result<&'a [u8], CryptoError> {
        let n = u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize;
        self.take(n)
    }

    pub(crate) fn finish(&self) -> Result<(), CryptoError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(CryptoError::Malformed("trailing bytes"))
        }
    }
}

impl BalancePoK {
    pub fn serial(&self) -> Secret {
        self.serial
    }

    pub fn root(&self) -> Digest {
        self.root
    }

    pub fn envelope_len(&self) -> usize {
        self.envelope.len()
    }

    /// Canonical bytes: `S (32) | root (32) | u32 len | envelope`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(68 + self.envelope.len());
        out.extend_from_slice(&self.serial.0);
        out.extend_from_slice(&self.root.0);
        put_bytes(&mut out, self.envelope.open());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader(bytes);
        let serial = Secret::from_slice(r.take(32)?)?;
        let root = r.digest()?;
        let envelope = Envelope::seal(r.bytes()?.to_vec());
        r.finish()?;
        Ok(BalancePoK {
            serial,
            root,
            envelope,
        })
    }

    /// Digest of the encoding, used in bundle signatures.
    pub fn fingerprint(&self) -> Digest {
        tagged_hash(POK_TAG, &[&self.encode()])
    }
}

impl PrefixPoK {
    /// The revealed `tx1` bytes.
    pub fn prefix(&self) -> &[u8] {
        &self.prefix
    }

    pub fn target(&self) -> Digest {
        self.target
    }

    pub fn envelope_len(&self) -> usize {
        self.envelope.len()
    }

    /// Canonical bytes: `u32 len | tx1 | target (32) | u32 len | envelope`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_bytes(&mut out, &self.prefix);
        out.extend_from_slice(&self.target.0);
        put_bytes(&mut out, self.envelope.open());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader(bytes);
        let prefix = r.bytes()?.to_vec();
        let target = r.digest()?;
        let envelope = Envelope::seal(r.bytes()?.to_vec());
        r.finish()?;
        Ok(PrefixPoK {
            prefix,
            target,
            envelope,
        })
    }

    pub fn fingerprint(&self) -> Digest {
        tagged_hash(POK_TAG, &[&self.encode()])
    }
}

impl SetPoK {
    pub fn member(&self) -> Digest {
        self.member
    }

    pub fn root(&self) -> Digest {
        self.root
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.member.0);
        out.extend_from_slice(&self.root.0);
        put_bytes(&mut out, self.envelope.open());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader(bytes);
        let member = r.digest()?;
        let root = r.digest()?;
        let envelope = Envelope::seal(r.bytes()?.to_vec());
        r.finish()?;
        Ok(SetPoK {
            member,
            root,
            envelope,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{derive_serial, RootKey};
    use crate::ledger::{Instruction, RelayerId, TokenVector, Transaction, WalletId};

    fn wallets(n: u8) -> Vec<(Secret, Randomness)> {
        (0..n)
            .map(|i| {
                (
                    derive_serial(&RootKey::from_seed([i + 1; 32])),
                    Randomness([i + 50; 32]),
                )
            })
            .collect()
    }

    fn coms(ws: &[(Secret, Randomness)]) -> Vec<Commitment> {
        ws.iter().map(|(s, r)| commit(s, r)).collect()
    }

    #[test]
    fn honest_balance_pok_accepts_then_duplicates() {
        let ws = wallets(4);
        let set = coms(&ws);
        let root = build_accumulator(&set).unwrap().root;
        let mut reg = SerialRegistry::new();
        let pok = prove_balance_pok(&ws[2].1, &ws[2].0, &set).unwrap();
        assert_eq!(pok.serial(), ws[2].0);
        assert_eq!(
            verify_balance_pok(&pok, &root, &mut reg),
            PoKVerdict::Accept
        );
        assert_eq!(
            verify_balance_pok(&pok, &root, &mut reg),
            PoKVerdict::Duplicate
        );
    }

    #[test]
    fn wrong_randomness_cannot_prove() {
        let ws = wallets(4);
        let set = coms(&ws);
        assert_eq!(
            prove_balance_pok(&Randomness([0; 32]), &ws[0].0, &set),
            Err(CryptoError::NotAMember)
        );
    }

    #[test]
    fn tampered_envelope_rejects() {
        let ws = wallets(4);
        let set = coms(&ws);
        let root = build_accumulator(&set).unwrap().root;
        let pok = prove_balance_pok(&ws[1].1, &ws[1].0, &set).unwrap();
        let mut bytes = pok.encode();
        bytes[70] ^= 0x01;
        let bad = BalancePoK::decode(&bytes).unwrap();
        assert_eq!(
            verify_balance_pok(&bad, &root, &mut SerialRegistry::new()),
            PoKVerdict::Reject
        );
    }

    #[test]
    fn replay_flagged_regardless_of_set() {
        let ws = wallets(4);
        let a = coms(&ws[..2]);
        let b = coms(&ws[..3]);
        let mut reg = SerialRegistry::new();
        let p1 = prove_balance_pok(&ws[0].1, &ws[0].0, &a).unwrap();
        let p2 = prove_balance_pok(&ws[0].1, &ws[0].0, &b).unwrap();
        assert_eq!(
            verify_balance_pok(&p1, &p1.root(), &mut reg),
            PoKVerdict::Accept
        );
        assert_eq!(
            verify_balance_pok(&p2, &p2.root(), &mut reg),
            PoKVerdict::Duplicate
        );
    }

    fn sample_tx(fee: u64) -> Transaction {
        Transaction::new(
            WalletId(3),
            9,
            vec![
                Instruction::PayFee {
                    to: RelayerId(1),
                    amount: TokenVector::new(vec![fee, 0]),
                },
                Instruction::Lock {
                    amount: TokenVector::new(vec![0, 2]),
                },
                Instruction::BreakPoint,
                Instruction::Custom(b"payload".to_vec()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn prefix_pok_round_trip() {
        let tx = sample_tx(1);
        let (tx1, tx2) = tx.split_at_breakpoint().unwrap();
        let target = tx.digest();
        let pok = prove_prefix_pok(&tx1, &tx2, &target).unwrap();
        assert!(verify_prefix_pok(&pok, &target));
        assert_eq!(pok.prefix(), tx1.as_slice());

        let other = sample_tx(2).digest();
        assert!(!verify_prefix_pok(&pok, &other));
        assert_eq!(
            prove_prefix_pok(&tx1, &tx2, &other),
            Err(CryptoError::BadWitness)
        );
    }

    #[test]
    fn altered_prefix_rejects() {
        let tx = sample_tx(1);
        let (tx1, tx2) = tx.split_at_breakpoint().unwrap();
        let target = tx.digest();
        let mut pok = prove_prefix_pok(&tx1, &tx2, &target).unwrap();
        let (altered, _) = sample_tx(2).split_at_breakpoint().unwrap();
        pok.prefix = altered;
        assert!(!verify_prefix_pok(&pok, &target));
    }

    #[test]
    fn set_pok() {
        let set = coms(&wallets(2));
        let root = build_accumulator(&set).unwrap().root;
        let pok = prove_set_pok(&set[1], &set).unwrap();
        assert!(verify_set_pok(&pok, &root));
        let decoded = SetPoK::decode(&pok.encode()).unwrap();
        assert!(verify_set_pok(&decoded, &root));
        assert!(prove_set_pok(&Digest([9; 32]), &set).is_err());
    }

    #[test]
    fn verification_is_deterministic() {
        let ws = wallets(3);
        let set = coms(&ws);
        let root = build_accumulator(&set).unwrap().root;
        let pok = prove_balance_pok(&ws[0].1, &ws[0].0, &set).unwrap();
        assert_eq!(pok, prove_balance_pok(&ws[0].1, &ws[0].0, &set).unwrap());
        let v1 = verify_balance_pok(&pok, &root, &mut SerialRegistry::new());
        let v2 = verify_balance_pok(&pok, &root, &mut SerialRegistry::new());
        assert_eq!(v1, v2);
    }
}
