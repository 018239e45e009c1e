//! Liquidation of an undercollateralized position by sealed-bid auction.
//!
//! The collateral sits in a vault contract. Once the reference price drops
//! below the threshold the whole collateral is auctioned, the proceeds repay
//! the lender and any surplus goes back to the borrower.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::auction::{
    run_sealed_bid_auction, AuctionConfig, AuctionResult, AuctionSetup, Bidder, BidderAction,
};
use super::{ser_ratio, ProtocolError};
use crate::ledger::{
    Account, ChainState, ContractId, Instruction, TokenVector, Transaction, WalletId,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiquidationPosition {
    /// Units of X held as collateral.
    pub collateral: u64,
    /// Debt in Y.
    pub debt: u64,
    /// λ: the position is healthy while `ε·C ≥ λ·D`.
    #[serde(with = "ratio_str")]
    pub threshold: Ratio<u64>,
}

mod ratio_str {
    use num_rational::Ratio;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio<u64>, D::Error> {
        let s = String::deserialize(d)?;
        let (n, den) = s.split_once('/').unwrap_or((&s, "1"));
        let n = n.trim().parse().map_err(serde::de::Error::custom)?;
        let den: u64 = den.trim().parse().map_err(serde::de::Error::custom)?;
        if den == 0 {
            return Err(serde::de::Error::custom("zero denominator"));
        }
        Ok(Ratio::new(n, den))
    }
}

fn big(r: &Ratio<u64>) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

impl LiquidationPosition {
    /// `ε·C` in Y.
    pub fn value(&self, eps: &BigRational) -> BigRational {
        eps * BigInt::from(self.collateral)
    }

    pub fn is_healthy(&self, eps: &BigRational) -> bool {
        self.value(eps) >= big(&self.threshold) * BigInt::from(self.debt)
    }
}

/// How a bidder turns the reference price at the trigger into a bid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidRule {
    /// Bid the full market value `⌊ε·C⌋`.
    Value,
    /// Bid `⌊(1 − s)·ε·C⌋`.
    Shade(#[serde(with = "ratio_str")] Ratio<u64>),
    Fixed(u64),
}

impl BidRule {
    pub fn bid(&self, value: &BigRational) -> u64 {
        let v = match self {
            BidRule::Value => value.clone(),
            BidRule::Shade(s) => value * (BigRational::from_integer(1.into()) - big(s)),
            BidRule::Fixed(b) => return *b,
        };
        v.floor().to_integer().to_u64().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiquidationBidder {
    pub wallet: WalletId,
    pub rule: BidRule,
    pub action: BidderAction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiquidationSetup {
    /// Vault escrow holding the collateral.
    pub vault: ContractId,
    /// Token index of the collateral.
    pub x: usize,
    pub lender: Account,
    pub borrower: Account,
    /// Auction parameters. `seller` and `lot` are filled in from the vault.
    pub auction: AuctionSetup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LiquidationResult {
    pub trigger_height: u64,
    #[serde(serialize_with = "ser_ratio")]
    pub eps_at_trigger: BigRational,
    /// `ε·C` at the trigger block.
    #[serde(serialize_with = "ser_ratio")]
    pub value_at_trigger: BigRational,
    pub revenue: u64,
    pub repaid: u64,
    pub to_borrower: u64,
    pub auction: AuctionResult,
}

/// Opens the vault and moves the borrower's collateral into it.
pub fn open_vault(
    chain: &mut ChainState,
    vault: ContractId,
    borrower: WalletId,
    x: usize,
    collateral: u64,
    nonce: u64,
) -> Result<(), ProtocolError> {
    chain.add_escrow(vault)?;
    let amount = TokenVector::unit(chain.n_tokens(), x, collateral);
    let tx = Transaction::new(
        borrower,
        nonce,
        vec![Instruction::Bid {
            auction: vault,
            amount,
        }],
    )?;
    if !chain.submit_plain(&tx)?.fully_executed {
        return Err(ProtocolError::Config(
            "borrower cannot fund the vault".into(),
        ));
    }
    Ok(())
}

/// Waits for the first block on `path` (reference prices from the current
/// height on) at which the position is unhealthy, then auctions the
/// collateral. A position that stays healthy along the whole path is refused.
pub fn run_liquidation<R: Rng + ?Sized>(
    chain: &mut ChainState,
    cfg: &AuctionConfig,
    setup: &LiquidationSetup,
    position: &LiquidationPosition,
    path: &[BigRational],
    bidders: &[LiquidationBidder],
    rng: &mut R,
) -> Result<LiquidationResult, ProtocolError> {
    let t = path
        .iter()
        .position(|e| !position.is_healthy(e))
        .ok_or(ProtocolError::Healthy)?;
    for _ in 0..t {
        chain.advance_block();
    }
    let eps = path[t].clone();
    let value = position.value(&eps);
    let trigger_height = chain.height();

    let n = chain.n_tokens();
    let mut auction = setup.auction.clone();
    auction.seller = Account::Contract(setup.vault);
    auction.lot = Some((
        setup.vault,
        TokenVector::unit(n, setup.x, position.collateral),
    ));
    let bids: Vec<Bidder> = bidders
        .iter()
        .map(|b| Bidder {
            wallet: b.wallet,
            bid: b.rule.bid(&value),
            action: b.action,
        })
        .collect();
    let result = run_sealed_bid_auction(chain, cfg, &auction, &bids, rng)?;

    let revenue = if result.winner.is_some() {
        result.price
    } else {
        0
    };
    let repaid = revenue.min(position.debt);
    let to_borrower = revenue - repaid;
    let y = setup.auction.token;
    if repaid > 0 {
        chain.escrow_transfer(setup.vault, setup.lender, &TokenVector::unit(n, y, repaid))?;
    }
    if to_borrower > 0 {
        chain.escrow_transfer(
            setup.vault,
            setup.borrower,
            &TokenVector::unit(n, y, to_borrower),
        )?;
    }
    Ok(LiquidationResult {
        trigger_height,
        eps_at_trigger: eps,
        value_at_trigger: value,
        revenue,
        repaid,
        to_borrower,
        auction: result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Disposition, RelayerId};
    use crate::protocols::auction::PricingRule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const BORROWER: WalletId = WalletId(10);
    const LENDER: WalletId = WalletId(11);
    const VAULT: ContractId = ContractId(8);

    fn tv(v: &[u64]) -> TokenVector {
        TokenVector::new(v.to_vec())
    }

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn position() -> LiquidationPosition {
        // Healthy while ε·10 ≥ 1.2·10, i.e. ε ≥ 6/5.
        LiquidationPosition {
            collateral: 10,
            debt: 10,
            threshold: Ratio::new(6, 5),
        }
    }

    fn chain(bidders: u32) -> ChainState {
        let mut c = ChainState::new(2, 3).unwrap();
        for i in 0..bidders {
            c.add_wallet(WalletId(i), tv(&[0, 1000])).unwrap();
        }
        c.add_wallet(BORROWER, tv(&[10, 0])).unwrap();
        c.add_wallet(LENDER, tv(&[0, 0])).unwrap();
        c.add_relayer(RelayerId(1), tv(&[0, 0])).unwrap();
        open_vault(&mut c, VAULT, BORROWER, 0, 10, 1).unwrap();
        c
    }

    fn setup() -> LiquidationSetup {
        LiquidationSetup {
            vault: VAULT,
            x: 0,
            lender: Account::Wallet(LENDER),
            borrower: Account::Wallet(BORROWER),
            auction: AuctionSetup {
                contract: ContractId(7),
                relayer: RelayerId(1),
                token: 1,
                fee: tv(&[0, 1]),
                collateral: tv(&[0, 5]),
                disposition: Disposition::Burn,
                seller: Account::Burn,
                lot: None,
            },
        }
    }

    fn cfg() -> AuctionConfig {
        AuctionConfig {
            commit_window: 3,
            reveal_window: 3,
            pricing: PricingRule::FirstPrice,
            item: "collateral".into(),
            reserve: 0,
        }
    }

    fn run(rules: &[BidRule], path: &[BigRational], seed: u64) -> (ChainState, LiquidationResult) {
        let mut c = chain(rules.len() as u32);
        let bidders: Vec<_> = rules
            .iter()
            .enumerate()
            .map(|(i, &rule)| LiquidationBidder {
                wallet: WalletId(i as u32),
                rule,
                action: BidderAction::Reveal,
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let res = run_liquidation(
            &mut c,
            &cfg(),
            &setup(),
            &position(),
            path,
            &bidders,
            &mut rng,
        )
        .unwrap();
        (c, res)
    }

    #[test]
    fn health_boundary() {
        let p = position();
        assert!(p.is_healthy(&r(6, 5)));
        assert!(!p.is_healthy(&r(119, 100)));
    }

    #[test]
    fn symmetric_bidders_pay_market_value() {
        let path = [r(2, 1), r(3, 2), r(11, 10), r(1, 1)];
        let (mut c, res) = run(&[BidRule::Value; 3], &path, 4);
        assert_eq!(res.trigger_height, 2);
        assert_eq!(res.value_at_trigger, r(11, 1));
        assert_eq!(res.revenue, 11);
        assert_eq!((res.repaid, res.to_borrower), (10, 1));
        // Earliest bidder wins the three-way tie and receives the collateral.
        assert_eq!(res.auction.winner, Some(WalletId(0)));
        assert_eq!(
            c.wallet(WalletId(0)).unwrap().balance(),
            &tv(&[10, 1000 - 11 - 1])
        );
        assert_eq!(c.wallet(LENDER).unwrap().balance(), &tv(&[0, 10]));
        assert_eq!(c.wallet(BORROWER).unwrap().balance(), &tv(&[0, 1]));
        assert_eq!(c.escrow(VAULT).unwrap().holdings, tv(&[0, 0]));
        assert!(c.check_conservation());
    }

    #[test]
    fn single_bidder_pays_own_bid() {
        let (_, res) = run(&[BidRule::Fixed(7)], &[r(1, 1)], 0);
        assert_eq!((res.revenue, res.repaid, res.to_borrower), (7, 7, 0));
    }

    #[test]
    fn healthy_position_is_refused() {
        let mut c = chain(1);
        let b = [LiquidationBidder {
            wallet: WalletId(0),
            rule: BidRule::Value,
            action: BidderAction::Reveal,
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = run_liquidation(
            &mut c,
            &cfg(),
            &setup(),
            &position(),
            &[r(2, 1), r(6, 5)],
            &b,
            &mut rng,
        );
        assert_eq!(e.unwrap_err(), ProtocolError::Healthy);
        assert_eq!(c.height(), 0);
    }

    #[test]
    fn shaded_bids_lose_revenue() {
        let (_, res) = run(&[BidRule::Shade(Ratio::new(1, 5)); 2], &[r(1, 1)], 1);
        assert_eq!(res.revenue, 8);
    }

    // Payoff to `who` valuing the lot at `value`, from a full simulated run.
    fn payoff(bids: &[u64], who: usize, value: u64) -> i128 {
        let rules: Vec<_> = bids.iter().map(|&b| BidRule::Fixed(b)).collect();
        let (_, res) = run(&rules, &[r(1, 1)], 3);
        res.auction.bidders[who].payoff(value, 1)
    }

    // Best-response brute force over a bid grid for every bidder.
    fn is_equilibrium(profile: &[u64], value: u64, grid: &[u64]) -> bool {
        (0..profile.len()).all(|i| {
            let base = payoff(profile, i, value);
            grid.iter().all(|&b| {
                let mut dev = profile.to_vec();
                dev[i] = b;
                payoff(&dev, i, value) <= base
            })
        })
    }

    #[test]
    fn bidding_value_is_a_best_response_on_a_grid() {
        // ε = 1 at trigger, so every bidder values the 10 units of X at 10 Y.
        let grid: Vec<u64> = (5..=13).collect();
        assert!(is_equilibrium(&[10, 10, 10], 10, &grid));
        assert!(!is_equilibrium(&[8, 8, 8], 10, &grid));
        assert!(!is_equilibrium(&[10, 9, 9], 10, &grid));
        let (_, res) = run(&[BidRule::Value; 3], &[r(1, 1)], 5);
        assert_eq!(res.revenue, 10);
    }
}
