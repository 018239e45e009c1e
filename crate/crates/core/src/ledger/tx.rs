//! Transactions and their canonical byte encoding.
//!
//! Instructions are self-delimiting and are written first, followed by an end
//! marker, the sender and the nonce. Every prefix of instructions therefore
//! encodes to a byte prefix of the whole transaction, which is what lets a
//! prover reveal `tx1` without `tx2`.

use serde::{Deserialize, Serialize};

use super::{ContractId, RelayerId, TokenVector, WalletId};
use crate::crypto::{tagged_hash, Digest, Reader};

pub const TX_DIGEST_TAG: &[u8] = b"dpacc/tx/v1";

const END: u8 = 0xff;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TxError {
    #[error("transaction has more than one break-point")]
    MultipleBreakPoints,
    #[error("malformed transaction encoding: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapDirection {
    /// Pay token X, receive token Y.
    XForY,
    /// Pay token Y, receive token X.
    YForX,
}

/// Fee that grows linearly with the height at which the commitment lands:
/// zero at `created_at + 1`, then `slope` more per block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeeSchedule {
    pub created_at: u64,
    pub slope: TokenVector,
}

impl FeeSchedule {
    pub fn steps_at(&self, height: u64) -> u64 {
        height.saturating_sub(self.created_at + 1)
    }

    pub fn fee_at(&self, height: u64) -> TokenVector {
        self.slope
            .scale(self.steps_at(height))
            .unwrap_or_else(|_| TokenVector::new(vec![u64::MAX; self.slope.dim()]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instruction {
    PayFee {
        to: RelayerId,
        amount: TokenVector,
    },
    Lock {
        amount: TokenVector,
    },
    BreakPoint,
    Send {
        to: WalletId,
        amount: TokenVector,
    },
    Bid {
        auction: ContractId,
        amount: TokenVector,
    },
    SwapAmm {
        pool: ContractId,
        direction: SwapDirection,
        amount_in: u64,
        min_out: u64,
    },
    /// Trade against the escrow posted by whichever relayer included this
    /// transaction's commitment, paying that relayer `schedule.fee_at(inclusion)`.
    RfqFill {
        give: TokenVector,
        take: TokenVector,
        schedule: FeeSchedule,
    },
    Custom(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: WalletId,
    pub nonce: u64,
    instructions: Vec<Instruction>,
}

fn put_tokens(out: &mut Vec<u8>, t: &TokenVector) {
    out.push(t.dim() as u8);
    for a in t.as_slice() {
        out.extend_from_slice(&a.to_le_bytes());
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

impl Instruction {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Instruction::PayFee { to, amount } => {
                out.push(0);
                put_u32(out, to.0);
                put_tokens(out, amount);
            }
            Instruction::Lock { amount } => {
                out.push(1);
                put_tokens(out, amount);
            }
            Instruction::BreakPoint => out.push(2),
            Instruction::Send { to, amount } => {
                out.push(3);
                put_u32(out, to.0);
                put_tokens(out, amount);
            }
            Instruction::Bid { auction, amount } => {
                out.push(4);
                put_u32(out, auction.0);
                put_tokens(out, amount);
            }
            Instruction::SwapAmm {
                pool,
                direction,
                amount_in,
                min_out,
            } => {
                out.push(5);
                put_u32(out, pool.0);
                out.push(match direction {
                    SwapDirection::XForY => 0,
                    SwapDirection::YForX => 1,
                });
                put_u64(out, *amount_in);
                put_u64(out, *min_out);
            }
            Instruction::RfqFill {
                give,
                take,
                schedule,
            } => {
                out.push(6);
                put_tokens(out, give);
                put_tokens(out, take);
                put_u64(out, schedule.created_at);
                put_tokens(out, &schedule.slope);
            }
            Instruction::Custom(payload) => {
                out.push(7);
                put_u32(out, payload.len() as u32);
                out.extend_from_slice(payload);
            }
        }
    }

    fn decode_from(tag: u8, r: &mut Reader<'_>) -> Result<Self, TxError> {
        let m = |_| TxError::Malformed("truncated instruction");
        let u32_ = |r: &mut Reader<'_>| -> Result<u32, TxError> {
            Ok(u32::from_le_bytes(
                r.take(4).map_err(m)?.try_into().unwrap(),
            ))
        };
        let u64_ = |r: &mut Reader<'_>| -> Result<u64, TxError> {
            Ok(u64::from_le_bytes(
                r.take(8).map_err(m)?.try_into().unwrap(),
            ))
        };
        let tokens = |r: &mut Reader<'_>| -> Result<TokenVector, TxError> {
            let n = r.take(1).map_err(m)?[0] as usize;
            (0..n)
                .map(|_| u64_(r))
                .collect::<Result<Vec<_>, _>>()
                .map(TokenVector::new)
        };
        Ok(match tag {
            0 => Instruction::PayFee {
                to: RelayerId(u32_(r)?),
                amount: tokens(r)?,
            },
            1 => Instruction::Lock { amount: tokens(r)? },
            2 => Instruction::BreakPoint,
            3 => Instruction::Send {
                to: WalletId(u32_(r)?),
                amount: tokens(r)?,
            },
            4 => Instruction::Bid {
                auction: ContractId(u32_(r)?),
                amount: tokens(r)?,
            },
            5 => {
                let pool = ContractId(u32_(r)?);
                let direction = match r.take(1).map_err(m)?[0] {
                    0 => SwapDirection::XForY,
                    1 => SwapDirection::YForX,
                    _ => return Err(TxError::Malformed("swap direction")),
                };
                Instruction::SwapAmm {
                    pool,
                    direction,
                    amount_in: u64_(r)?,
                    min_out: u64_(r)?,
                }
            }
            6 => {
                let give = tokens(r)?;
                let take = tokens(r)?;
                let created_at = u64_(r)?;
                Instruction::RfqFill {
                    give,
                    take,
                    schedule: FeeSchedule {
                        created_at,
                        slope: tokens(r)?,
                    },
                }
            }
            7 => {
                let n = u32_(r)? as usize;
                Instruction::Custom(r.take(n).map_err(m)?.to_vec())
            }
            _ => return Err(TxError::Malformed("instruction tag")),
        })
    }
}

pub fn tx_digest_of_bytes(bytes: &[u8]) -> Digest {
    tagged_hash(TX_DIGEST_TAG, &[bytes])
}

impl Transaction {
    pub fn new(
        sender: WalletId,
        nonce: u64,
        instructions: Vec<Instruction>,
    ) -> Result<Self, TxError> {
        let bps = instructions
            .iter()
            .filter(|i| matches!(i, Instruction::BreakPoint))
            .count();
        if bps > 1 {
            return Err(TxError::MultipleBreakPoints);
        }
        Ok(Transaction {
            sender,
            nonce,
            instructions,
        })
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn breakpoint(&self) -> Option<usize> {
        self.instructions
            .iter()
            .position(|i| matches!(i, Instruction::BreakPoint))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for i in &self.instructions {
            i.encode_into(&mut out);
        }
        out.push(END);
        put_u32(&mut out, self.sender.0);
        put_u64(&mut out, self.nonce);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TxError> {
        let mut r = Reader(bytes);
        let mut instructions = Vec::new();
        loop {
            let tag = r
                .take(1)
                .map_err(|_| TxError::Malformed("missing end marker"))?[0];
            if tag == END {
                break;
            }
            instructions.push(Instruction::decode_from(tag, &mut r)?);
        }
        let tail = r
            .take(12)
            .map_err(|_| TxError::Malformed("truncated trailer"))?;
        r.finish()
            .map_err(|_| TxError::Malformed("trailing bytes"))?;
        let sender = WalletId(u32::from_le_bytes(tail[..4].try_into().unwrap()));
        let nonce = u64::from_le_bytes(tail[4..].try_into().unwrap());
        Transaction::new(sender, nonce, instructions)
    }

    /// `h(tx)`.
    pub fn digest(&self) -> Digest {
        tx_digest_of_bytes(&self.encode())
    }

    /// Byte split into `tx1` (instructions through the break-point) and `tx2` (the rest).
    pub fn split_at_breakpoint(&self) -> Option<(Vec<u8>, Vec<u8>)> {
        let bp = self.breakpoint()?;
        let mut tx1 = Vec::new();
        for i in &self.instructions[..=bp] {
            i.encode_into(&mut tx1);
        }
        let full = self.encode();
        let tx2 = full[tx1.len()..].to_vec();
        Some((tx1, tx2))
    }
}

/// Decodes a revealed `tx1`: a complete instruction sequence with no trailer.
pub fn decode_prefix(bytes: &[u8]) -> Result<Vec<Instruction>, TxError> {
    let mut r = Reader(bytes);
    let mut out = Vec::new();
    while !r.0.is_empty() {
        let tag = r.take(1).unwrap()[0];
        out.push(Instruction::decode_from(tag, &mut r)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tv(v: &[u64]) -> TokenVector {
        TokenVector::new(v.to_vec())
    }

    fn arb_tokens() -> impl Strategy<Value = TokenVector> {
        prop::collection::vec(any::<u64>(), 0..4).prop_map(TokenVector::new)
    }

    fn arb_instruction() -> impl Strategy<Value = Instruction> {
        prop_oneof![
            (any::<u32>(), arb_tokens()).prop_map(|(t, a)| Instruction::PayFee {
                to: RelayerId(t),
                amount: a
            }),
            arb_tokens().prop_map(|a| Instruction::Lock { amount: a }),
            (any::<u32>(), arb_tokens()).prop_map(|(t, a)| Instruction::Send {
                to: WalletId(t),
                amount: a
            }),
            (any::<u32>(), arb_tokens()).prop_map(|(t, a)| Instruction::Bid {
                auction: ContractId(t),
                amount: a
            }),
            (any::<u32>(), any::<bool>(), any::<u64>(), any::<u64>()).prop_map(|(p, d, i, o)| {
                Instruction::SwapAmm {
                    pool: ContractId(p),
                    direction: if d {
                        SwapDirection::XForY
                    } else {
                        SwapDirection::YForX
                    },
                    amount_in: i,
                    min_out: o,
                }
            }),
            (arb_tokens(), arb_tokens(), any::<u64>(), arb_tokens()).prop_map(|(g, t, c, s)| {
                Instruction::RfqFill {
                    give: g,
                    take: t,
                    schedule: FeeSchedule {
                        created_at: c,
                        slope: s,
                    },
                }
            }),
            prop::collection::vec(any::<u8>(), 0..16).prop_map(Instruction::Custom),
        ]
    }

    proptest! {
        #[test]
        fn encoding_round_trips(
            mut ins in prop::collection::vec(arb_instruction(), 0..6),
            bp in any::<prop::sample::Index>(),
            with_bp in any::<bool>(),
            sender in any::<u32>(),
            nonce in any::<u64>(),
        ) {
            if with_bp {
                let at = bp.index(ins.len() + 1);
                ins.insert(at, Instruction::BreakPoint);
            }
            let tx = Transaction::new(WalletId(sender), nonce, ins).unwrap();
            let bytes = tx.encode();
            prop_assert_eq!(Transaction::decode(&bytes).unwrap(), tx.clone());
            if let Some((tx1, tx2)) = tx.split_at_breakpoint() {
                let mut joined = tx1.clone();
                joined.extend_from_slice(&tx2);
                prop_assert_eq!(joined, bytes);
                let prefix = decode_prefix(&tx1).unwrap();
                prop_assert_eq!(&prefix[..], &tx.instructions()[..=tx.breakpoint().unwrap()]);
            }
        }
    }

    #[test]
    fn at_most_one_breakpoint() {
        let r = Transaction::new(
            WalletId(0),
            0,
            vec![Instruction::BreakPoint, Instruction::BreakPoint],
        );
        assert_eq!(r, Err(TxError::MultipleBreakPoints));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let tx = Transaction::new(WalletId(1), 2, vec![Instruction::Custom(vec![1])]).unwrap();
        let mut bytes = tx.encode();
        bytes.push(0);
        assert!(Transaction::decode(&bytes).is_err());
    }

    #[test]
    fn digest_depends_on_every_field() {
        let base =
            Transaction::new(WalletId(1), 2, vec![Instruction::Lock { amount: tv(&[1]) }]).unwrap();
        let n =
            Transaction::new(WalletId(1), 3, vec![Instruction::Lock { amount: tv(&[1]) }]).unwrap();
        let s =
            Transaction::new(WalletId(2), 2, vec![Instruction::Lock { amount: tv(&[1]) }]).unwrap();
        let a =
            Transaction::new(WalletId(1), 2, vec![Instruction::Lock { amount: tv(&[2]) }]).unwrap();
        let d = base.digest();
        assert!([n.digest(), s.digest(), a.digest()].iter().all(|x| *x != d));
    }

    #[test]
    fn fee_schedule_starts_at_zero() {
        let f = FeeSchedule {
            created_at: 10,
            slope: tv(&[0, 3]),
        };
        assert_eq!(f.fee_at(11), tv(&[0, 0]));
        assert_eq!(f.fee_at(12), tv(&[0, 3]));
        assert_eq!(f.fee_at(15), tv(&[0, 12]));
        assert_eq!(f.fee_at(3), tv(&[0, 0]));
    }
}
