use serde::{Deserialize, Serialize};

use super::{tagged_hash, Commitment, CryptoError, Digest};

const LEAF_TAG: &[u8] = b"dpacc/leaf/v1";
const NODE_TAG: &[u8] = b"dpacc/node/v1";
const ROOT_TAG: &[u8] = b"dpacc/root/v1";

/// Compressed commitment set: a Merkle root bound to the leaf count.
///
/// Leaves keep insertion order; the bottom level is padded to the next power
/// of two by repeating the last leaf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accumulator {
    pub root: Digest,
    pub leaf_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipProof {
    pub leaf: Commitment,
    pub index: u64,
    pub leaf_count: u64,
    pub siblings: Vec<Digest>,
}

fn leaf_hash(c: &Commitment) -> Digest {
    tagged_hash(LEAF_TAG, &[&c.0])
}

fn node_hash(l: &Digest, r: &Digest) -> Digest {
    tagged_hash(NODE_TAG, &[&l.0, &r.0])
}

fn bind_root(count: u64, top: &Digest) -> Digest {
    tagged_hash(ROOT_TAG, &[&count.to_le_bytes(), &top.0])
}

/// Tree depth for `count` leaves; `None` when the count is implausibly large.
pub(crate) fn depth(count: u64) -> Option<usize> {
    if count > u32::MAX as u64 {
        return None;
    }
    Some(count.next_power_of_two().trailing_zeros() as usize)
}

fn levels(coms: &[Commitment]) -> Vec<Vec<Digest>> {
    let width = coms.len().next_power_of_two();
    let mut level: Vec<Digest> = coms.iter().map(leaf_hash).collect();
    let last = *level.last().expect("non-empty");
    level.resize(width, last);
    let mut out = vec![level];
    while out.last().unwrap().len() > 1 {
        let next = out
            .last()
            .unwrap()
            .chunks(2)
            .map(|p| node_hash(&p[0], &p[1]))
            .collect();
        out.push(next);
    }
    out
}

pub fn build_accumulator(coms: &[Commitment]) -> Result<Accumulator, CryptoError> {
    if coms.is_empty() {
        return Err(CryptoError::EmptySet);
    }
    let lv = levels(coms);
    let count = coms.len() as u64;
    Ok(Accumulator {
        root: bind_root(count, &lv.last().unwrap()[0]),
        leaf_count: count,
    })
}

pub fn prove_membership(
    com: &Commitment,
    coms: &[Commitment],
) -> Result<MembershipProof, CryptoError> {
    if coms.is_empty() {
        return Err(CryptoError::EmptySet);
    }
    let index = coms
        .iter()
        .position(|c| c == com)
        .ok_or(CryptoError::NotAMember)?;
    let lv = levels(coms);
    let mut siblings = Vec::with_capacity(lv.len() - 1);
    let mut i = index;
    for level in &lv[..lv.len() - 1] {
        siblings.push(level[i ^ 1]);
        i >>= 1;
    }
    Ok(MembershipProof {
        leaf: *com,
        index: index as u64,
        leaf_count: coms.len() as u64,
        siblings,
    })
}

pub fn verify_membership(proof: &MembershipProof, root: &Digest) -> bool {
    if proof.index >= proof.leaf_count || Some(proof.siblings.len()) != depth(proof.leaf_count) {
        return false;
    }
    let mut acc = leaf_hash(&proof.leaf);
    let mut i = proof.index;
    for sib in &proof.siblings {
        acc = if i & 1 == 0 {
            node_hash(&acc, sib)
        } else {
            node_hash(sib, &acc)
        };
        i >>= 1;
    }
    bind_root(proof.leaf_count, &acc) == *root
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{commit, Randomness, Secret};

    fn ctr(n: u8) -> [u8; 32] {
        let mut b = [0u8; 32];
        b[31] = n;
        b
    }

    fn fixture_coms(n: u8) -> Vec<Commitment> {
        (0..n)
            .map(|i| commit(&Secret(ctr(i)), &Randomness(ctr(100 + i))))
            .collect()
    }

    fn golden(name: &str) -> Digest {
        let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        Digest::from_hex(std::fs::read_to_string(path).unwrap().trim()).unwrap()
    }

    #[test]
    fn singleton_root() {
        let coms = fixture_coms(1);
        let acc = build_accumulator(&coms).unwrap();
        // Hand computation: one leaf, no padding, no internal nodes.
        let expect = bind_root(1, &leaf_hash(&coms[0]));
        assert_eq!(acc.root, expect);
        assert_eq!(acc.root, golden("merkle_singleton.hex"));
    }

    #[test]
    fn golden_roots() {
        assert_eq!(
            build_accumulator(&fixture_coms(8)).unwrap().root,
            golden("merkle_8.hex")
        );
        assert_eq!(
            build_accumulator(&fixture_coms(5)).unwrap().root,
            golden("merkle_5.hex")
        );
    }

    #[test]
    fn order_sensitive() {
        let mut coms = fixture_coms(8);
        let a = build_accumulator(&coms).unwrap();
        coms.swap(0, 3);
        assert_ne!(a.root, build_accumulator(&coms).unwrap().root);
    }

    #[test]
    fn empty_set_rejected() {
        assert_eq!(build_accumulator(&[]), Err(CryptoError::EmptySet));
    }

    #[test]
    fn membership() {
        let coms = fixture_coms(8);
        let acc = build_accumulator(&coms).unwrap();
        for c in &coms {
            let p = prove_membership(c, &coms).unwrap();
            assert!(verify_membership(&p, &acc.root));
        }
        let outsider = commit(&Secret(ctr(200)), &Randomness(ctr(201)));
        assert_eq!(
            prove_membership(&outsider, &coms),
            Err(CryptoError::NotAMember)
        );
        let other = build_accumulator(&fixture_coms(7)).unwrap();
        let p = prove_membership(&coms[0], &coms).unwrap();
        assert!(!verify_membership(&p, &other.root));
    }

    #[test]
    fn padding_index_rejected() {
        // Leaf 4 of 5 has padding copies to its right; pointing the proof at a
        // padding slot must not verify.
        let coms = fixture_coms(5);
        let acc = build_accumulator(&coms).unwrap();
        let mut p = prove_membership(&coms[4], &coms).unwrap();
        assert!(verify_membership(&p, &acc.root));
        p.index = 5;
        assert!(!verify_membership(&p, &acc.root));
        p.index = 4;
        p.leaf_count = 6;
        assert!(!verify_membership(&p, &acc.root));
    }
}
