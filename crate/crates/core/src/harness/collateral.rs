//! Collateral choice for a single prover, evaluated on the simulator.
//!
//! The prover commits a base transaction whose payload pays a merchant, then
//! either reveals at the start of the reveal phase or lets the commitment
//! time out. Locking tokens costs `lock_cost` per unit per block from mapping
//! until the tokens are released.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::HarnessError;
use crate::dpacc::make_base_dpacc;
use crate::ledger::{
    ChainState, Disposition, Instruction, RelayerId, RevealOutcome, RevealWindow, TokenVector,
    WalletId,
};
use crate::protocols::{enroll, relayer_for, submit, ProtocolError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollateralGame {
    pub grid: Vec<u64>,
    /// Smallest collateral the relayer accepts.
    pub policy_min: u64,
    /// Cost of locking one unit for one block.
    pub lock_cost: BigRational,
    pub fee: u64,
    /// Paid to the merchant by the committed payload.
    pub price: u64,
    /// What execution is worth to the prover beyond `price + fee`.
    pub surplus: u64,
    pub delta: u64,
    pub disposition: Disposition,
}

fn ser_opt<S: serde::Serializer>(r: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_some(&r.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PayoffRow {
    pub collateral: u64,
    /// Whether the relayer accepted the bundle at all.
    pub eligible: bool,
    #[serde(serialize_with = "ser_opt")]
    pub reveal: Option<BigRational>,
    #[serde(serialize_with = "ser_opt")]
    pub withhold: Option<BigRational>,
}

impl PayoffRow {
    /// What the prover gets from the better of its two actions; zero if rejected.
    pub fn best(&self) -> BigRational {
        match (&self.reveal, &self.withhold) {
            (Some(r), Some(w)) => r.max(w).clone(),
            _ => BigRational::zero(),
        }
    }
}

const PROVER: WalletId = WalletId(0);
const MERCHANT: WalletId = WalletId(1);
const RELAYER: RelayerId = RelayerId(0);

fn int(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Payoff of one action at collateral `c`, or `None` if the relayer refuses the bundle.
fn play(
    game: &CollateralGame,
    c: u64,
    reveal: bool,
    seed: u64,
) -> Result<Option<BigRational>, HarnessError> {
    let d = game.delta;
    let mut chain = ChainState::new(1, d).map_err(ProtocolError::from)?;
    let need = game.fee + c + game.price;
    chain
        .add_wallet(PROVER, TokenVector::new(vec![need]))
        .map_err(ProtocolError::from)?;
    chain
        .add_wallet(MERCHANT, TokenVector::zeros(1))
        .map_err(ProtocolError::from)?;
    chain
        .add_relayer(RELAYER, TokenVector::zeros(1))
        .map_err(ProtocolError::from)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let v = |n| TokenVector::new(vec![n]);
    let prover = enroll(&mut chain, PROVER, v(need), &mut rng)?;
    let before = chain.wallet(PROVER).unwrap().balance().get(0);
    let h0 = chain.height();
    let dpacc = make_base_dpacc(
        PROVER,
        1,
        RELAYER,
        v(game.fee),
        v(c),
        vec![Instruction::Send {
            to: MERCHANT,
            amount: v(game.price),
        }],
    )
    .map_err(ProtocolError::from)?;
    let (mut relayer, coms) = relayer_for(&chain, RELAYER, &v(game.fee), &v(game.policy_min))?;
    match submit(
        &mut chain,
        &mut relayer,
        &prover,
        &dpacc,
        &coms,
        RevealWindow::Until(h0 + 2 * d),
        game.disposition,
        Some(h0 + 1),
    ) {
        Ok(_) => {}
        Err(ProtocolError::Rejected(_)) => return Ok(None),
        Err(e) => return Err(e.into()),
    }

    let mut executed = false;
    let released_at;
    if reveal {
        while chain.height() < h0 + d + 1 {
            chain.advance_block();
        }
        let out = chain
            .reveal(&prover.serial, dpacc.tx())
            .map_err(ProtocolError::from)?;
        executed = matches!(out, RevealOutcome::Executed(ref r) if r.fully_executed);
        released_at = chain.height();
    } else {
        while chain.height() <= h0 + 2 * d {
            chain.advance_block();
        }
        released_at = chain.height();
    }
    let after = chain.wallet(PROVER).unwrap().balance().get(0);
    let value = if executed {
        int(game.price + game.fee + game.surplus)
    } else {
        BigRational::zero()
    };
    let locked = game.lock_cost.clone() * int(c) * int(released_at - h0);
    Ok(Some(value - int(before) + int(after) - locked))
}

/// Reveal and withhold payoffs for every grid point, from simulator runs.
pub fn payoff_table(game: &CollateralGame, seed: u64) -> Result<Vec<PayoffRow>, HarnessError> {
    if game.grid.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    game.grid
        .iter()
        .map(|&c| {
            let reveal = play(game, c, true, seed)?;
            let withhold = play(game, c, false, seed)?;
            Ok(PayoffRow {
                collateral: c,
                eligible: reveal.is_some(),
                reveal,
                withhold,
            })
        })
        .collect()
}

/// The grid point with the highest payoff; ties go to the smaller collateral.
pub fn best_response_collateral(game: &CollateralGame, seed: u64) -> Result<u64, HarnessError> {
    let table = payoff_table(game, seed)?;
    let mut best: Option<(&PayoffRow, BigRational)> = None;
    for row in &table {
        let p = row.best();
        let better = match &best {
            None => true,
            Some((b, bp)) => p > *bp || (p == *bp && row.collateral < b.collateral),
        };
        if better {
            best = Some((row, p));
        }
    }
    Ok(best.expect("grid is non-empty").0.collateral)
}
