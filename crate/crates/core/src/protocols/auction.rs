//! Sealed-bid auctions: bids are committed as DPACCs for one window and
//! revealed in the next, then settled from whatever was revealed.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{enroll, relayer_for, submit, ProtocolError, Prover};
use crate::dpacc::{make_base_dpacc, BaseDpacc};
use crate::ledger::{
    Account, ChainState, ContractId, Disposition, Instruction, RelayerId, RevealWindow,
    TokenVector, WalletId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingRule {
    FirstPrice,
    SecondPrice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionConfig {
    /// Blocks during which bid commitments are accepted.
    pub commit_window: u64,
    /// Blocks during which bids may be revealed.
    pub reveal_window: u64,
    pub pricing: PricingRule,
    #[serde(default)]
    pub item: String,
    /// Lowest bid that can win. Zero means no reserve.
    #[serde(default)]
    pub reserve: u64,
}

impl AuctionConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.commit_window == 0 || self.reveal_window == 0 {
            return Err(ProtocolError::Config(
                "auction windows must be at least one block".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidderAction {
    Reveal,
    Withhold,
    /// Tries to reveal a different bid than the one committed, then gives up.
    Equivocate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bidder {
    pub wallet: WalletId,
    pub bid: u64,
    pub action: BidderAction,
}

/// Where the auction lives on chain and what a bid commitment must carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuctionSetup {
    /// Fresh escrow contract that receives the bids.
    pub contract: ContractId,
    pub relayer: RelayerId,
    /// Token the bids are denominated in.
    pub token: usize,
    pub fee: TokenVector,
    pub collateral: TokenVector,
    pub disposition: Disposition,
    /// Receives the sale price.
    pub seller: Account,
    /// Tokens handed to the winner out of a contract, if the item is on chain.
    pub lot: Option<(ContractId, TokenVector)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BidderOutcome {
    pub wallet: WalletId,
    pub bid: u64,
    pub action: BidderAction,
    pub revealed: bool,
    pub won: bool,
    /// Price paid if this bidder won.
    pub paid: u64,
    pub fee_paid: TokenVector,
    /// Burned, or left locked in the wallet, for not revealing.
    pub forfeited: TokenVector,
}

impl BidderOutcome {
    /// Payoff in the bid token for a bidder who values the item at `value`.
    ///
    /// The relayer fee is netted against the value of having the bid
    /// executed, which a bidder who commits at all must rate at least as
    /// high as the fee.
    pub fn payoff(&self, value: u64, token: usize) -> i128 {
        let won = if self.won {
            value as i128 - self.paid as i128
        } else {
            0
        };
        won - self.forfeited.get(token) as i128
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuctionResult {
    pub winner: Option<WalletId>,
    pub price: u64,
    pub burned: TokenVector,
    pub bidders: Vec<BidderOutcome>,
    /// Reveals rejected because the transaction did not match its commitment.
    pub aborted_reveals: u64,
    pub started_at: u64,
    pub settled_at: u64,
}

/// Winner index and price over `(bidder, amount)` pairs. The highest bid at or
/// above the reserve wins; ties go to the earliest entry.
pub fn settle(
    revealed: &[(WalletId, u64)],
    rule: PricingRule,
    reserve: u64,
) -> Option<(usize, u64)> {
    let mut best: Option<usize> = None;
    for (i, (_, b)) in revealed.iter().enumerate() {
        if *b >= reserve && best.is_none_or(|j| *b > revealed[j].1) {
            best = Some(i);
        }
    }
    let w = best?;
    let price = match rule {
        PricingRule::FirstPrice => revealed[w].1,
        PricingRule::SecondPrice => revealed
            .iter()
            .enumerate()
            .filter(|(i, (_, b))| *i != w && *b >= reserve)
            .map(|(_, (_, b))| *b)
            .max()
            .unwrap_or(reserve),
    };
    Some((w, price))
}

fn bid_dpacc(
    setup: &AuctionSetup,
    wallet: WalletId,
    nonce: u64,
    bid: u64,
) -> Result<BaseDpacc, ProtocolError> {
    let n = setup.fee.dim();
    Ok(make_base_dpacc(
        wallet,
        nonce,
        setup.relayer,
        setup.fee.clone(),
        setup.collateral.clone(),
        vec![Instruction::Bid {
            auction: setup.contract,
            amount: TokenVector::unit(n, setup.token, bid),
        }],
    )?)
}

/// Runs one auction from the current height: a commit phase of
/// `cfg.commit_window` blocks, a reveal phase of `cfg.reveal_window` blocks,
/// then settlement one block later once unrevealed commitments have timed out.
pub fn run_sealed_bid_auction<R: Rng + ?Sized>(
    chain: &mut ChainState,
    cfg: &AuctionConfig,
    setup: &AuctionSetup,
    bidders: &[Bidder],
    rng: &mut R,
) -> Result<AuctionResult, ProtocolError> {
    cfg.validate()?;
    let n = chain.n_tokens();
    chain.add_escrow(setup.contract)?;

    let mut provers: Vec<Prover> = Vec::with_capacity(bidders.len());
    let mut dpaccs = Vec::with_capacity(bidders.len());
    for b in bidders {
        let d = bid_dpacc(setup, b.wallet, rng.random(), b.bid)?;
        let need = setup
            .fee
            .checked_add(&setup.collateral)?
            .checked_add(&TokenVector::unit(n, setup.token, b.bid))?;
        provers.push(enroll(chain, b.wallet, need, rng)?);
        dpaccs.push(d);
    }
    let before: Vec<TokenVector> = bidders
        .iter()
        .map(|b| chain.wallet(b.wallet).map(|w| w.balance().clone()).unwrap())
        .collect();
    let burned_before = chain.burn_sink().clone();

    let start = chain.height();
    let commit_end = start + cfg.commit_window;
    let reveal_end = commit_end + cfg.reveal_window;
    let reach = cfg.commit_window.min(chain.delta());
    if !bidders.is_empty() {
        let (mut relayer, coms) = relayer_for(chain, setup.relayer, &setup.fee, &setup.collateral)?;
        for (p, dpacc) in provers.iter().zip(&dpaccs) {
            let target = start + 1 + rng.random_range(0..reach);
            submit(
                chain,
                &mut relayer,
                p,
                dpacc,
                &coms,
                RevealWindow::Until(reveal_end),
                setup.disposition,
                Some(target),
            )?;
        }
    }

    let reveal_at: Vec<u64> = bidders
        .iter()
        .map(|_| commit_end + 1 + rng.random_range(0..cfg.reveal_window))
        .collect();
    let mut aborted = 0;
    while chain.height() < reveal_end {
        chain.advance_block();
        let h = chain.height();
        for (i, b) in bidders.iter().enumerate() {
            if reveal_at[i] != h {
                continue;
            }
            match b.action {
                BidderAction::Reveal => {
                    chain.reveal(&provers[i].serial, dpaccs[i].tx())?;
                }
                BidderAction::Equivocate => {
                    let forged = bid_dpacc(setup, b.wallet, dpaccs[i].tx().nonce, b.bid + 1)?;
                    if chain.reveal(&provers[i].serial, forged.tx()).is_err() {
                        aborted += 1;
                    }
                }
                BidderAction::Withhold => {}
            }
        }
    }
    chain.advance_block();

    let by_serial: BTreeMap<_, usize> = provers
        .iter()
        .enumerate()
        .map(|(i, p)| (p.serial, i))
        .collect();
    let mut revealed_idx: Vec<usize> = chain
        .escrow(setup.contract)
        .map(|e| {
            e.bids
                .iter()
                .filter_map(|r| r.serial.and_then(|s| by_serial.get(&s).copied()))
                .collect()
        })
        .unwrap_or_default();
    revealed_idx.sort_unstable();
    let revealed: Vec<(WalletId, u64)> = revealed_idx
        .iter()
        .map(|&i| (bidders[i].wallet, bidders[i].bid))
        .collect();
    let outcome = settle(&revealed, cfg.pricing, cfg.reserve);

    let winner_idx = outcome.map(|(k, _)| revealed_idx[k]);
    let price = outcome.map_or(0, |(_, p)| p);
    for &i in &revealed_idx {
        let refund = if Some(i) == winner_idx {
            bidders[i].bid - price
        } else {
            bidders[i].bid
        };
        if refund > 0 {
            chain.escrow_transfer(
                setup.contract,
                Account::Wallet(bidders[i].wallet),
                &TokenVector::unit(n, setup.token, refund),
            )?;
        }
    }
    if let Some(w) = winner_idx {
        if price > 0 {
            chain.escrow_transfer(
                setup.contract,
                setup.seller,
                &TokenVector::unit(n, setup.token, price),
            )?;
        }
        if let Some((vault, lot)) = &setup.lot {
            chain.escrow_transfer(*vault, Account::Wallet(bidders[w].wallet), lot)?;
        }
    }

    let outcomes = bidders
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let revealed = revealed_idx.contains(&i);
            let forfeited = if revealed {
                TokenVector::zeros(n)
            } else {
                let w = chain.wallet(b.wallet).unwrap();
                match setup.disposition {
                    Disposition::Burn => before[i]
                        .checked_sub(w.balance())
                        .unwrap_or_else(|_| TokenVector::zeros(n)),
                    Disposition::Lock => w
                        .mapped(&provers[i].commitment)
                        .cloned()
                        .unwrap_or_else(|| TokenVector::zeros(n)),
                }
            };
            BidderOutcome {
                wallet: b.wallet,
                bid: b.bid,
                action: b.action,
                revealed,
                won: Some(i) == winner_idx,
                paid: if Some(i) == winner_idx { price } else { 0 },
                fee_paid: if revealed {
                    setup.fee.clone()
                } else {
                    TokenVector::zeros(n)
                },
                forfeited,
            }
        })
        .collect();

    Ok(AuctionResult {
        winner: winner_idx.map(|i| bidders[i].wallet),
        price,
        burned: chain.burn_sink().checked_sub(&burned_before)?,
        bidders: outcomes,
        aborted_reveals: aborted,
        started_at: start,
        settled_at: chain.height(),
    })
}
