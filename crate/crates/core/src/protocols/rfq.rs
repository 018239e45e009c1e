//! Request-for-quote with a fee escalator. The user commits to one of two
//! opposite trades at the reference price; market makers race down a fee
//! that rises each block, and the winner includes the commitment and backs
//! the quote with an escrow.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{enroll, ser_ratio, ProtocolError};
use crate::crypto::{build_accumulator, prove_set_pok, verify_set_pok, Digest, SetPoK};
use crate::dpacc::{
    build_bundle, eligible_commitments, make_base_dpacc, BaseDpacc, Relayer, RelayerPolicy,
};
use crate::ledger::{
    ChainState, CommitmentStatus, Disposition, FeeSchedule, Instruction, RelayerId, RevealOutcome,
    RevealWindow, TokenVector, WalletId,
};
use crate::market::{race, MarketMaker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfqSide {
    /// Sell X for εY.
    SellX,
    /// Sell εY for X.
    BuyX,
}

/// The two public digests a request commits to, one per direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RfqPair {
    pub com1: Digest,
    pub com2: Digest,
    #[serde(serialize_with = "crate::protocols::rfq::ser_ratio")]
    pub epsilon: BigRational,
    pub schedule: FeeSchedule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RfqSetup {
    /// Receives the (zero) tx1 fee; the escalating fee goes to whoever includes.
    pub venue: RelayerId,
    pub x: usize,
    pub y: usize,
    /// Units of X traded.
    pub size: u64,
    pub collateral: TokenVector,
    /// Fee growth per block, charged in Y.
    pub slope: u64,
    pub disposition: Disposition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfqAction {
    /// Reveal this many blocks after inclusion. Clamped to the window.
    Reveal {
        after: u64,
    },
    /// Reveal one block after the window closes.
    RevealLate,
    Withhold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum RfqOutcome {
    Filled {
        at: u64,
    },
    /// The payload ran but did not complete.
    Failed {
        at: u64,
    },
    LateBurned {
        burned: TokenVector,
    },
    /// Never revealed; the mapped tokens stay restricted.
    Locked,
    /// No market maker answered before the horizon.
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RfqResult {
    pub side: RfqSide,
    pub pair: RfqPair,
    pub quote_y: u64,
    pub winner: Option<u32>,
    pub included_at: Option<u64>,
    /// `fee(H)` at the inclusion height, in Y.
    pub fee: u64,
    pub outcome: RfqOutcome,
    pub finished_at: u64,
}

fn rfq_dpacc(
    setup: &RfqSetup,
    n: usize,
    user: WalletId,
    nonce: u64,
    side: RfqSide,
    quote_y: u64,
    schedule: &FeeSchedule,
) -> Result<BaseDpacc, ProtocolError> {
    let xs = TokenVector::unit(n, setup.x, setup.size);
    let ys = TokenVector::unit(n, setup.y, quote_y);
    let (give, take) = match side {
        RfqSide::SellX => (xs, ys),
        RfqSide::BuyX => (ys, xs),
    };
    Ok(make_base_dpacc(
        user,
        nonce,
        setup.venue,
        TokenVector::zeros(n),
        setup.collateral.clone(),
        vec![Instruction::RfqFill {
            give,
            take,
            schedule: schedule.clone(),
        }],
    )?)
}

/// Market-maker side check that a request's committed digest is one of the pair.
pub fn verify_pair_membership(pair: &RfqPair, pok: &SetPoK, target: &Digest) -> bool {
    build_accumulator(&[pair.com1, pair.com2]).is_ok_and(|acc| verify_set_pok(pok, &acc.root))
        && pok.member() == *target
}

/// Runs one request from the current height. The user commits to `side`; the
/// reveal window is Δ blocks after inclusion and the race horizon is Δ blocks
/// after creation.
#[allow(clippy::too_many_arguments)]
pub fn run_rfq<R: Rng + ?Sized>(
    chain: &mut ChainState,
    setup: &RfqSetup,
    user: WalletId,
    side: RfqSide,
    epsilon: &BigRational,
    mms: &[MarketMaker],
    action: RfqAction,
    rng: &mut R,
) -> Result<RfqResult, ProtocolError> {
    let n = chain.n_tokens();
    let delta = chain.delta();
    let h0 = chain.height();
    let quote_y = (epsilon * BigInt::from(setup.size))
        .floor()
        .to_integer()
        .to_u64()
        .ok_or_else(|| ProtocolError::Config("quote does not fit".into()))?;
    let schedule = FeeSchedule {
        created_at: h0,
        slope: TokenVector::unit(n, setup.y, setup.slope),
    };
    let nonce = rng.random();
    let sell = rfq_dpacc(setup, n, user, nonce, RfqSide::SellX, quote_y, &schedule)?;
    let buy = rfq_dpacc(setup, n, user, nonce, RfqSide::BuyX, quote_y, &schedule)?;
    let pair = RfqPair {
        com1: sell.digest(),
        com2: buy.digest(),
        epsilon: epsilon.clone(),
        schedule: schedule.clone(),
    };
    let chosen = match side {
        RfqSide::SellX => &sell,
        RfqSide::BuyX => &buy,
    };

    // Map enough for the chosen direction plus the largest fee the schedule can reach.
    let horizon = h0 + delta;
    let max_fee = TokenVector::unit(
        n,
        setup.y,
        setup.slope.saturating_mul(delta.saturating_sub(1)),
    );
    let give = match side {
        RfqSide::SellX => TokenVector::unit(n, setup.x, setup.size),
        RfqSide::BuyX => TokenVector::unit(n, setup.y, quote_y),
    };
    let prover = enroll(
        chain,
        user,
        setup.collateral.checked_add(&give)?.checked_add(&max_fee)?,
        rng,
    )?;

    // W_b: wallets able to take either side.
    let mut coms = Vec::new();
    for g in [
        TokenVector::unit(n, setup.x, setup.size),
        TokenVector::unit(n, setup.y, quote_y),
    ] {
        for c in eligible_commitments(chain, &setup.collateral.checked_add(&g)?) {
            if !coms.contains(&c) {
                coms.push(c);
            }
        }
    }
    if coms.is_empty() {
        return Err(ProtocolError::EmptyAnonymitySet);
    }
    let root = build_accumulator(&coms)?.root;
    let w = chain
        .wallet(user)
        .ok_or(crate::ledger::LedgerError::UnknownWallet(user))?;
    let bundle = build_bundle(w, &prover.serial, chosen, &coms)?;
    let set_pok = prove_set_pok(&chosen.digest(), &[pair.com1, pair.com2])?;

    let mut result = RfqResult {
        side,
        pair,
        quote_y,
        winner: None,
        included_at: None,
        fee: 0,
        outcome: RfqOutcome::Expired,
        finished_at: h0,
    };
    if !verify_pair_membership(&result.pair, &set_pok, &bundle.target()) {
        return Err(ProtocolError::Config(
            "request digest is not in its pair".into(),
        ));
    }
    let Some((mm, h)) = race(&schedule, mms, horizon) else {
        return Ok(result);
    };
    let mm_id = RelayerId(mm.id);
    let mut policy =
        RelayerPolicy::new(mm_id, TokenVector::zeros(n), setup.collateral.clone(), root);
    policy.payee = setup.venue;
    let mut relayer = Relayer::new(policy);
    let accepted = relayer.verify(&bundle)?;
    relayer.include(
        chain,
        &accepted,
        RevealWindow::AfterInclusion(delta),
        setup.disposition,
        Some(h),
    )?;

    while chain.height() < h {
        chain.advance_block();
    }
    let escrow = TokenVector::unit(n, setup.x, setup.size)
        .checked_add(&TokenVector::unit(n, setup.y, quote_y))?;
    chain.post_rfq_escrow(prover.serial, mm_id, &escrow)?;
    result.winner = Some(mm.id);
    result.included_at = Some(h);
    result.fee = schedule.fee_at(h).get(setup.y);

    let window_end = h + delta;
    let reveal_at = match action {
        RfqAction::Reveal { after } => Some(h + after.min(delta)),
        RfqAction::RevealLate => Some(window_end + 1),
        RfqAction::Withhold => None,
    };
    result.outcome = RfqOutcome::Locked;
    loop {
        if Some(chain.height()) == reveal_at {
            result.outcome = match chain.reveal(&prover.serial, chosen.tx())? {
                RevealOutcome::Executed(r) if r.fully_executed => {
                    RfqOutcome::Filled { at: chain.height() }
                }
                RevealOutcome::Executed(_) => RfqOutcome::Failed { at: chain.height() },
                RevealOutcome::Late { burned } => RfqOutcome::LateBurned { burned },
            };
        }
        if chain.height() > window_end && reveal_at.is_none_or(|r| chain.height() >= r) {
            break;
        }
        chain.advance_block();
    }
    if result.outcome == RfqOutcome::Locked {
        debug_assert_eq!(
            chain.record(&prover.serial).map(|r| r.status),
            Some(CommitmentStatus::Expired)
        );
    }
    result.finished_at = chain.height();
    Ok(result)
}
