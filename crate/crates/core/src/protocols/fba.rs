//! Frequent batch auctions: orders are committed blind for Δ blocks, revealed
//! for Δ blocks, then cleared together at one volume-maximizing price.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::auction::BidderAction;
use super::{enroll, relayer_for, submit, ProtocolError, Prover};
use crate::dpacc::{make_base_dpacc, BaseDpacc};
use crate::ledger::{
    Account, ChainState, ContractId, Disposition, Instruction, RelayerId, RevealWindow,
    TokenVector, WalletId,
};

const ORDER_TAG: &[u8] = b"fba/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Buy `v_x` of X paying at most `v_y` of Y.
    BuyX,
    /// Sell `v_x` of X for at least `v_y` of Y.
    BuyY,
}

/// A limit order whose price is `v_y / v_x` (Y per X) and whose size is `v_x` units of X.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FbaOrder {
    pub side: Side,
    pub v_x: u64,
    pub v_y: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FbaError {
    #[error("order amounts must be positive")]
    ZeroAmount,
    #[error("empty order book")]
    EmptyBook,
    #[error("malformed order encoding")]
    Malformed,
}

impl FbaOrder {
    pub fn new(side: Side, v_x: u64, v_y: u64) -> Result<Self, FbaError> {
        if v_x == 0 || v_y == 0 {
            return Err(FbaError::ZeroAmount);
        }
        Ok(FbaOrder { side, v_x, v_y })
    }

    pub fn limit(&self) -> BigRational {
        BigRational::new(BigInt::from(self.v_y), BigInt::from(self.v_x))
    }

    /// Whether the order trades at price `p`.
    pub fn accepts(&self, p: &BigRational) -> bool {
        match self.side {
            Side::BuyX => self.limit() >= *p,
            Side::BuyY => self.limit() <= *p,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = ORDER_TAG.to_vec();
        out.push(match self.side {
            Side::BuyX => 0,
            Side::BuyY => 1,
        });
        out.extend_from_slice(&self.v_x.to_le_bytes());
        out.extend_from_slice(&self.v_y.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FbaError> {
        let rest = bytes.strip_prefix(ORDER_TAG).ok_or(FbaError::Malformed)?;
        if rest.len() != 17 {
            return Err(FbaError::Malformed);
        }
        let side = match rest[0] {
            0 => Side::BuyX,
            1 => Side::BuyY,
            _ => return Err(FbaError::Malformed),
        };
        let v_x = u64::from_le_bytes(rest[1..9].try_into().unwrap());
        let v_y = u64::from_le_bytes(rest[9..17].try_into().unwrap());
        FbaOrder::new(side, v_x, v_y).map_err(|_| FbaError::Malformed)
    }

    /// Tokens escrowed when the order is revealed.
    pub fn deposit(&self, n: usize, x: usize, y: usize) -> TokenVector {
        match self.side {
            Side::BuyX => TokenVector::unit(n, y, self.v_y),
            Side::BuyY => TokenVector::unit(n, x, self.v_x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fill {
    /// Index into the order list.
    pub order: usize,
    pub x: u64,
    pub y: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Clearing {
    #[serde(serialize_with = "ser_opt_ratio")]
    pub price: Option<BigRational>,
    pub volume: u64,
    pub fills: Vec<Fill>,
}

fn ser_opt_ratio<S: serde::Serializer>(p: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
    match p {
        Some(p) => s.serialize_some(&p.to_string()),
        None => s.serialize_none(),
    }
}

/// Demand and supply in units of X at price `p`.
pub fn depth(orders: &[FbaOrder], p: &BigRational) -> (u64, u64) {
    let (mut d, mut s) = (0u64, 0u64);
    for o in orders.iter().filter(|o| o.accepts(p)) {
        match o.side {
            Side::BuyX => d += o.v_x,
            Side::BuyY => s += o.v_x,
        }
    }
    (d, s)
}

/// Uniform-price clearing. The price is the midpoint of the interval of
/// prices that maximize `min(demand, supply)`; the long side is rationed
/// pro rata, rounding down and handing the leftover units out by largest
/// remainder (ties to the earlier order). Buyers of X pay `⌈p·x⌉` and
/// sellers receive `⌊p·x⌋`; the dust stays in the batch escrow.
pub fn clearing_price(orders: &[FbaOrder]) -> Result<Clearing, FbaError> {
    if orders.is_empty() {
        return Err(FbaError::EmptyBook);
    }
    let mut buys: Vec<(BigRational, u64)> = orders
        .iter()
        .filter(|o| o.side == Side::BuyX)
        .map(|o| (o.limit(), o.v_x))
        .collect();
    let mut sells: Vec<(BigRational, u64)> = orders
        .iter()
        .filter(|o| o.side == Side::BuyY)
        .map(|o| (o.limit(), o.v_x))
        .collect();
    buys.sort();
    sells.sort();
    let mut cands: Vec<BigRational> = orders.iter().map(|o| o.limit()).collect();
    cands.sort();
    cands.dedup();

    // Sweep candidates upward: buys below p drop out of demand, sells at or below p join supply.
    let total_buy: u64 = buys.iter().map(|b| b.1).sum();
    let (mut bi, mut si) = (0, 0);
    let (mut dropped, mut supply) = (0u64, 0u64);
    let mut best = 0u64;
    let mut lo = None;
    let mut hi = None;
    for p in &cands {
        while bi < buys.len() && buys[bi].0 < *p {
            dropped += buys[bi].1;
            bi += 1;
        }
        while si < sells.len() && sells[si].0 <= *p {
            supply += sells[si].1;
            si += 1;
        }
        let v = (total_buy - dropped).min(supply);
        if v > best {
            best = v;
            lo = Some(p.clone());
            hi = Some(p.clone());
        } else if v == best && best > 0 {
            hi = Some(p.clone());
        }
    }
    if best == 0 {
        return Ok(Clearing {
            price: None,
            volume: 0,
            fills: Vec::new(),
        });
    }
    let price = (lo.unwrap() + hi.unwrap()) / BigRational::from_integer(BigInt::from(2));
    let fills = allocate(orders, &price, best);
    Ok(Clearing {
        price: Some(price),
        volume: best,
        fills,
    })
}

fn allocate(orders: &[FbaOrder], price: &BigRational, volume: u64) -> Vec<Fill> {
    let (d, s) = depth(orders, price);
    let mut fills = Vec::new();
    for side in [Side::BuyX, Side::BuyY] {
        let total = if side == Side::BuyX { d } else { s };
        let idx: Vec<usize> = (0..orders.len())
            .filter(|&i| orders[i].side == side && orders[i].accepts(price))
            .collect();
        let mut xs: Vec<u64> = Vec::with_capacity(idx.len());
        let mut rems: Vec<(u128, usize)> = Vec::with_capacity(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            let (q, r) = (orders[i].v_x as u128 * volume as u128).div_rem(&(total as u128));
            xs.push(q as u64);
            rems.push((r, k));
        }
        let mut left = volume - xs.iter().sum::<u64>();
        rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, k) in rems {
            if left == 0 {
                break;
            }
            xs[k] += 1;
            left -= 1;
        }
        for (k, &i) in idx.iter().enumerate() {
            if xs[k] > 0 {
                fills.push(Fill {
                    order: i,
                    x: xs[k],
                    y: y_leg(side, price, xs[k]),
                });
            }
        }
    }
    fills.sort_by_key(|f| f.order);
    fills
}

fn y_leg(side: Side, price: &BigRational, x: u64) -> u64 {
    let v = price * BigInt::from(x);
    let v = if side == Side::BuyX {
        v.ceil()
    } else {
        v.floor()
    };
    v.to_integer().to_u64().expect("y leg fits")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum VerifyError {
    #[error("posted volume {posted} is not the maximum {max}")]
    NotMaximal { posted: u64, max: u64 },
    #[error("posted price does not support the posted volume")]
    Price,
    #[error("fill for order {0} is outside its limit or size")]
    Fill(usize),
    #[error("fill for order {0} is not at the uniform price")]
    NotUniform(usize),
    #[error("fills do not match the volume on both sides")]
    Unbalanced,
    #[error("fill for order {0} deviates from its pro-rata share")]
    Rationing(usize),
}

/// Re-checks a posted clearing independently of how it was computed: the
/// volume must equal the maximum of `min(demand, supply)` over every order
/// limit, the price must support that volume, and every fill must be at the
/// uniform price, within its order and within one unit of its pro-rata share.
pub fn verify_clearing(orders: &[FbaOrder], posted: &Clearing) -> Result<(), VerifyError> {
    let max = orders
        .iter()
        .map(|o| {
            let (d, s) = depth(orders, &o.limit());
            d.min(s)
        })
        .max()
        .unwrap_or(0);
    if posted.volume != max {
        return Err(VerifyError::NotMaximal {
            posted: posted.volume,
            max,
        });
    }
    let Some(p) = &posted.price else {
        return if max == 0 && posted.fills.is_empty() {
            Ok(())
        } else {
            Err(VerifyError::Price)
        };
    };
    let (d, s) = depth(orders, p);
    if d.min(s) < max {
        return Err(VerifyError::Price);
    }
    let (mut bx, mut sx) = (0u64, 0u64);
    let mut seen = vec![false; orders.len()];
    for f in &posted.fills {
        let o = orders.get(f.order).ok_or(VerifyError::Fill(f.order))?;
        if seen[f.order] || f.x == 0 || f.x > o.v_x || !o.accepts(p) {
            return Err(VerifyError::Fill(f.order));
        }
        seen[f.order] = true;
        if f.y != y_leg(o.side, p, f.x) {
            return Err(VerifyError::NotUniform(f.order));
        }
        let total = if o.side == Side::BuyX { d } else { s };
        let share = o.v_x as u128 * max as u128 / total as u128;
        if (f.x as u128) < share || f.x as u128 > share + 1 {
            return Err(VerifyError::Rationing(f.order));
        }
        match o.side {
            Side::BuyX => bx += f.x,
            Side::BuyY => sx += f.x,
        }
    }
    if bx != max || sx != max {
        return Err(VerifyError::Unbalanced);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FbaSetup {
    /// Fresh escrow contract holding the batch's deposits.
    pub contract: ContractId,
    pub relayer: RelayerId,
    pub x: usize,
    pub y: usize,
    pub fee: TokenVector,
    pub collateral: TokenVector,
    pub disposition: Disposition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FbaParticipant {
    pub wallet: WalletId,
    pub order: FbaOrder,
    pub action: BidderAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum BatchStatus {
    Settled,
    Void { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParticipantFill {
    pub wallet: WalletId,
    pub side: Side,
    pub x: u64,
    pub y: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FbaResult {
    pub status: BatchStatus,
    pub clearing: Option<Clearing>,
    /// Index into the participant list for each revealed order, in clearing order.
    pub revealed: Vec<usize>,
    pub fills: Vec<ParticipantFill>,
    pub started_at: u64,
    pub reveal_end: u64,
}

impl FbaResult {
    /// Blocks from the start of the commit phase to the end of the reveal phase.
    pub fn blocks(&self) -> u64 {
        self.reveal_end - self.started_at
    }
}

fn order_dpacc(
    setup: &FbaSetup,
    n: usize,
    p: &FbaParticipant,
    nonce: u64,
) -> Result<BaseDpacc, ProtocolError> {
    Ok(make_base_dpacc(
        p.wallet,
        nonce,
        setup.relayer,
        setup.fee.clone(),
        setup.collateral.clone(),
        vec![
            Instruction::Bid {
                auction: setup.contract,
                amount: p.order.deposit(n, setup.x, setup.y),
            },
            Instruction::Custom(p.order.encode()),
        ],
    )?)
}

pub fn run_fba<R: Rng + ?Sized>(
    chain: &mut ChainState,
    setup: &FbaSetup,
    participants: &[FbaParticipant],
    rng: &mut R,
) -> Result<FbaResult, ProtocolError> {
    run_fba_with(chain, setup, participants, rng, |orders| {
        clearing_price(orders).expect("non-empty book")
    })
}

/// As [`run_fba`], with `post` producing the clearing submitted for verification.
pub fn run_fba_with<R: Rng + ?Sized>(
    chain: &mut ChainState,
    setup: &FbaSetup,
    participants: &[FbaParticipant],
    rng: &mut R,
    post: impl FnOnce(&[FbaOrder]) -> Clearing,
) -> Result<FbaResult, ProtocolError> {
    let n = chain.n_tokens();
    let delta = chain.delta();
    chain.add_escrow(setup.contract)?;

    let mut provers: Vec<Prover> = Vec::with_capacity(participants.len());
    let mut dpaccs = Vec::with_capacity(participants.len());
    for p in participants {
        dpaccs.push(order_dpacc(setup, n, p, rng.random())?);
        let need = setup
            .fee
            .checked_add(&setup.collateral)?
            .checked_add(&p.order.deposit(n, setup.x, setup.y))?;
        provers.push(enroll(chain, p.wallet, need, rng)?);
    }

    let start = chain.height();
    let commit_end = start + delta;
    let reveal_end = commit_end + delta;
    if !participants.is_empty() {
        let (mut relayer, coms) = relayer_for(chain, setup.relayer, &setup.fee, &setup.collateral)?;
        for (p, d) in provers.iter().zip(&dpaccs) {
            let target = start + 1 + rng.random_range(0..delta);
            submit(
                chain,
                &mut relayer,
                p,
                d,
                &coms,
                RevealWindow::Until(reveal_end),
                setup.disposition,
                Some(target),
            )?;
        }
    }

    let reveal_at: Vec<u64> = participants
        .iter()
        .map(|_| commit_end + 1 + rng.random_range(0..delta))
        .collect();
    while chain.height() < reveal_end {
        chain.advance_block();
        let h = chain.height();
        for (i, p) in participants.iter().enumerate() {
            if reveal_at[i] != h {
                continue;
            }
            match p.action {
                BidderAction::Reveal => {
                    chain.reveal(&provers[i].serial, dpaccs[i].tx())?;
                }
                BidderAction::Equivocate => {
                    let mut forged = p.clone();
                    forged.order.v_y += 1;
                    let _ = chain.reveal(
                        &provers[i].serial,
                        order_dpacc(setup, n, &forged, dpaccs[i].tx().nonce)?.tx(),
                    );
                }
                BidderAction::Withhold => {}
            }
        }
    }

    // Orders are read back from what was executed on chain.
    let by_serial: BTreeMap<_, usize> = provers
        .iter()
        .enumerate()
        .map(|(i, p)| (p.serial, i))
        .collect();
    let mut revealed: Vec<(usize, FbaOrder)> = chain
        .reveals()
        .iter()
        .filter(|r| r.result.fully_executed && r.height > commit_end && r.height <= reveal_end)
        .filter_map(|r| {
            let i = *by_serial.get(&r.serial?)?;
            let order = r.tx.instructions().iter().find_map(|ins| match ins {
                Instruction::Custom(b) => FbaOrder::decode(b).ok(),
                _ => None,
            })?;
            Some((i, order))
        })
        .collect();
    revealed.sort_by_key(|r| r.0);
    let orders: Vec<FbaOrder> = revealed.iter().map(|r| r.1).collect();

    let refund_all = |chain: &mut ChainState| -> Result<(), ProtocolError> {
        for (i, o) in &revealed {
            chain.escrow_transfer(
                setup.contract,
                Account::Wallet(participants[*i].wallet),
                &o.deposit(n, setup.x, setup.y),
            )?;
        }
        Ok(())
    };

    let mut result = FbaResult {
        status: BatchStatus::Settled,
        clearing: None,
        revealed: revealed.iter().map(|r| r.0).collect(),
        fills: Vec::new(),
        started_at: start,
        reveal_end,
    };
    if orders.is_empty() {
        result.status = BatchStatus::Void {
            reason: "no revealed orders".into(),
        };
        chain.advance_block();
        return Ok(result);
    }
    let clearing = post(&orders);
    if let Err(e) = verify_clearing(&orders, &clearing) {
        refund_all(chain)?;
        result.status = BatchStatus::Void {
            reason: e.to_string(),
        };
        result.clearing = Some(clearing);
        chain.advance_block();
        return Ok(result);
    }

    let mut filled: Vec<Option<&Fill>> = vec![None; orders.len()];
    for f in &clearing.fills {
        filled[f.order] = Some(f);
    }
    for (k, (i, o)) in revealed.iter().enumerate() {
        let (x, y) = filled[k].map_or((0, 0), |f| (f.x, f.y));
        let payout = match o.side {
            Side::BuyX => {
                let mut v = TokenVector::unit(n, setup.x, x);
                v.add_assign(&TokenVector::unit(n, setup.y, o.v_y - y))?;
                v
            }
            Side::BuyY => {
                let mut v = TokenVector::unit(n, setup.y, y);
                v.add_assign(&TokenVector::unit(n, setup.x, o.v_x - x))?;
                v
            }
        };
        chain.escrow_transfer(
            setup.contract,
            Account::Wallet(participants[*i].wallet),
            &payout,
        )?;
        if x > 0 {
            result.fills.push(ParticipantFill {
                wallet: participants[*i].wallet,
                side: o.side,
                x,
                y,
            });
        }
    }
    result.clearing = Some(clearing);
    chain.advance_block();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{int, ratio};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn buy(limit: u64, qty: u64) -> FbaOrder {
        FbaOrder::new(Side::BuyX, qty, limit * qty).unwrap()
    }

    fn sell(limit: u64, qty: u64) -> FbaOrder {
        FbaOrder::new(Side::BuyY, qty, limit * qty).unwrap()
    }

    /// Exhaustive oracle: volume at every order limit, recomputed from scratch.
    fn brute_max(orders: &[FbaOrder]) -> (u64, Vec<BigRational>) {
        let mut best = 0;
        let mut at = Vec::new();
        for o in orders {
            let p = o.limit();
            let d: u64 = orders
                .iter()
                .filter(|b| b.side == Side::BuyX && b.limit() >= p)
                .map(|b| b.v_x)
                .sum();
            let s: u64 = orders
                .iter()
                .filter(|b| b.side == Side::BuyY && b.limit() <= p)
                .map(|b| b.v_x)
                .sum();
            let v = d.min(s);
            if v > best {
                best = v;
                at = vec![p];
            } else if v == best {
                at.push(p);
            }
        }
        (best, at)
    }

    #[test]
    fn reference_book() {
        let orders = [buy(12, 10), buy(9, 5), sell(8, 6), sell(10, 8)];
        let c = clearing_price(&orders).unwrap();
        assert_eq!(c.volume, 10);
        assert_eq!(c.price, Some(int(11)));
        assert_eq!(brute_max(&orders).0, 10);
        verify_clearing(&orders, &c).unwrap();
        // Sellers share 10 of 14 pro rata: 4.28 and 5.71 round to 4 and 5,
        // the spare unit goes to the larger remainder.
        let xs: Vec<(usize, u64, u64)> = c.fills.iter().map(|f| (f.order, f.x, f.y)).collect();
        assert_eq!(xs, vec![(0, 10, 110), (2, 4, 44), (3, 6, 66)]);
    }

    #[test]
    fn uncrossed_book() {
        let c = clearing_price(&[buy(8, 5), sell(10, 5)]).unwrap();
        assert_eq!((c.price, c.volume), (None, 0));
        assert!(c.fills.is_empty());
    }

    #[test]
    fn symmetric_cross() {
        let orders = [buy(10, 10), sell(10, 10)];
        let c = clearing_price(&orders).unwrap();
        assert_eq!((c.price, c.volume), (Some(int(10)), 10));
    }

    #[test]
    fn empty_book_and_zero_orders() {
        assert_eq!(clearing_price(&[]), Err(FbaError::EmptyBook));
        assert_eq!(FbaOrder::new(Side::BuyX, 0, 1), Err(FbaError::ZeroAmount));
    }

    #[test]
    fn order_encoding_round_trip() {
        let o = FbaOrder::new(Side::BuyY, 3, 7).unwrap();
        assert_eq!(FbaOrder::decode(&o.encode()), Ok(o));
        assert_eq!(FbaOrder::decode(b"fba/v1"), Err(FbaError::Malformed));
    }

    #[test]
    fn verifier_rejects_tampering() {
        let orders = [buy(12, 10), buy(9, 5), sell(8, 6), sell(10, 8)];
        let good = clearing_price(&orders).unwrap();
        let mut c = good.clone();
        c.volume = 6;
        assert!(matches!(
            verify_clearing(&orders, &c),
            Err(VerifyError::NotMaximal { .. })
        ));
        let mut c = good.clone();
        c.price = Some(int(9));
        assert_eq!(verify_clearing(&orders, &c), Err(VerifyError::Price));
        let mut c = good.clone();
        c.fills[0].y -= 1;
        assert_eq!(
            verify_clearing(&orders, &c),
            Err(VerifyError::NotUniform(0))
        );
        let mut c = good;
        c.fills[1].x -= 1;
        c.fills[2].x += 1;
        c.fills[2].y = 77;
        c.fills[1].y = 33;
        assert_eq!(verify_clearing(&orders, &c), Err(VerifyError::Rationing(2)));
    }

    fn arb_order() -> impl Strategy<Value = FbaOrder> {
        (any::<bool>(), 1u64..30, 1u64..400).prop_map(|(b, x, y)| {
            FbaOrder::new(if b { Side::BuyX } else { Side::BuyY }, x, y).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn optimal_uniform_and_verified(orders in prop::collection::vec(arb_order(), 1..=20)) {
            let c = clearing_price(&orders).unwrap();
            let (best, at) = brute_max(&orders);
            prop_assert_eq!(c.volume, best);
            if best > 0 {
                let p = c.price.clone().unwrap();
                let lo = at.iter().min().unwrap();
                let hi = at.iter().max().unwrap();
                prop_assert_eq!(&p, &((lo + hi) / int(2)));
                let (mut paid, mut received) = (0u64, 0u64);
                for f in &c.fills {
                    let exact = &p * BigInt::from(f.x);
                    match orders[f.order].side {
                        Side::BuyX => {
                            prop_assert_eq!(int(f.y), exact.ceil());
                            prop_assert!(f.y <= orders[f.order].v_y);
                            paid += f.y;
                        }
                        Side::BuyY => {
                            prop_assert_eq!(int(f.y), exact.floor());
                            received += f.y;
                        }
                    }
                    prop_assert!(orders[f.order].accepts(&p));
                }
                prop_assert!(paid >= received);
            }
            prop_assert_eq!(verify_clearing(&orders, &c), Ok(()));
        }
    }

    fn tv(v: &[u64]) -> TokenVector {
        TokenVector::new(v.to_vec())
    }

    fn batch_chain(wallets: u32) -> ChainState {
        let mut c = ChainState::new(2, 3).unwrap();
        for i in 0..wallets {
            c.add_wallet(WalletId(i), tv(&[1000, 1000])).unwrap();
        }
        c.add_relayer(RelayerId(1), tv(&[0, 0])).unwrap();
        c
    }

    fn setup() -> FbaSetup {
        FbaSetup {
            contract: ContractId(3),
            relayer: RelayerId(1),
            x: 0,
            y: 1,
            fee: tv(&[0, 1]),
            collateral: tv(&[0, 4]),
            disposition: Disposition::Burn,
        }
    }

    fn participants(orders: &[FbaOrder], actions: &[BidderAction]) -> Vec<FbaParticipant> {
        orders
            .iter()
            .zip(actions)
            .enumerate()
            .map(|(i, (&order, &action))| FbaParticipant {
                wallet: WalletId(i as u32),
                order,
                action,
            })
            .collect()
    }

    #[test]
    fn batch_runs_over_two_delta_and_settles_at_one_price() {
        let orders = [buy(12, 10), buy(9, 5), sell(8, 6), sell(10, 8)];
        let mut chain = batch_chain(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = run_fba(
            &mut chain,
            &setup(),
            &participants(&orders, &[BidderAction::Reveal; 4]),
            &mut rng,
        )
        .unwrap();
        assert_eq!(r.blocks(), 6);
        assert_eq!(r.status, BatchStatus::Settled);
        assert_eq!(r.clearing.as_ref().unwrap().price, Some(int(11)));
        // Buyer 0: +10 X, pays 110 Y and a fee of 1.
        assert_eq!(
            chain.wallet(WalletId(0)).unwrap().balance(),
            &tv(&[1010, 889])
        );
        // Buyer 1 at limit 9 does not trade, gets its deposit back.
        assert_eq!(
            chain.wallet(WalletId(1)).unwrap().balance(),
            &tv(&[1000, 999])
        );
        assert_eq!(
            chain.wallet(WalletId(2)).unwrap().balance(),
            &tv(&[996, 1043])
        );
        assert_eq!(
            chain.wallet(WalletId(3)).unwrap().balance(),
            &tv(&[994, 1065])
        );
        assert_eq!(chain.escrow(ContractId(3)).unwrap().holdings, tv(&[0, 0]));
        assert_eq!(chain.violations(), 0);
    }

    #[test]
    fn bad_posting_voids_and_refunds() {
        let orders = [buy(12, 10), sell(8, 6)];
        let mut chain = batch_chain(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = run_fba_with(
            &mut chain,
            &setup(),
            &participants(&orders, &[BidderAction::Reveal; 2]),
            &mut rng,
            |o| {
                let mut c = clearing_price(o).unwrap();
                c.price = Some(ratio(13, 1));
                c
            },
        )
        .unwrap();
        assert!(matches!(r.status, BatchStatus::Void { .. }));
        assert_eq!(
            chain.wallet(WalletId(0)).unwrap().balance(),
            &tv(&[1000, 999])
        );
        assert_eq!(
            chain.wallet(WalletId(1)).unwrap().balance(),
            &tv(&[1000, 999])
        );
    }

    #[test]
    fn no_reveals_voids() {
        let orders = [buy(12, 10), sell(8, 6)];
        let mut chain = batch_chain(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = run_fba(
            &mut chain,
            &setup(),
            &participants(&orders, &[BidderAction::Withhold; 2]),
            &mut rng,
        )
        .unwrap();
        assert!(matches!(r.status, BatchStatus::Void { .. }));
        assert_eq!(chain.burn_sink(), &tv(&[0, 8]));
    }
}
