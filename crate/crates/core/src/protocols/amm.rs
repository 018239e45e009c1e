//! Constant-product pool.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{enroll, relayer_for, ser_ratio, submit, ProtocolError, Prover};
use crate::dpacc::{make_base_dpacc, BaseDpacc};
use crate::ledger::{
    ChainState, ContractId, Disposition, Instruction, LedgerError, RelayerId, RevealOutcome,
    RevealWindow, SwapDirection, TokenVector, Transaction, WalletId,
};
use crate::market::arbitrageur_act;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AmmError {
    #[error("swap input must be at least one unit")]
    ZeroInput,
    #[error("swap output rounds down to zero")]
    DustOutput,
    #[error("pool fee must lie in [0, 1)")]
    InvalidFee,
    #[error("pool reserves must be positive")]
    EmptyReserves,
    #[error("token indices must differ")]
    SameToken,
    #[error("arithmetic overflow")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AmmPool {
    /// Token index of X.
    pub x: usize,
    /// Token index of Y.
    pub y: usize,
    rx: u64,
    ry: u64,
    fee_num: u64,
    fee_den: u64,
    /// Deposit a relayer must keep with the pool to route DPACC swaps.
    pub relayer_deposit: u64,
}

impl AmmPool {
    pub fn new(x: usize, y: usize, rx: u64, ry: u64, fee: Ratio<u64>) -> Result<Self, AmmError> {
        if x == y {
            return Err(AmmError::SameToken);
        }
        if rx == 0 || ry == 0 {
            return Err(AmmError::EmptyReserves);
        }
        if *fee.denom() == 0 || fee.numer() >= fee.denom() {
            return Err(AmmError::InvalidFee);
        }
        Ok(AmmPool {
            x,
            y,
            rx,
            ry,
            fee_num: *fee.numer(),
            fee_den: *fee.denom(),
            relayer_deposit: 0,
        })
    }

    pub fn reserves(&self) -> (u64, u64) {
        (self.rx, self.ry)
    }

    pub fn fee(&self) -> Ratio<u64> {
        Ratio::new(self.fee_num, self.fee_den)
    }

    /// `R_x · R_y`.
    pub fn k(&self) -> u128 {
        self.rx as u128 * self.ry as u128
    }

    /// Marginal price of X in Y, ignoring the fee.
    pub fn price(&self) -> BigRational {
        BigRational::new(BigInt::from(self.ry), BigInt::from(self.rx))
    }

    /// Reserves as a vector over `n` token types.
    pub fn holdings(&self, n: usize) -> TokenVector {
        let mut v = vec![0; n];
        v[self.x] = self.rx;
        v[self.y] = self.ry;
        TokenVector::new(v)
    }

    pub fn input_token(&self, dir: SwapDirection) -> usize {
        match dir {
            SwapDirection::XForY => self.x,
            SwapDirection::YForX => self.y,
        }
    }

    pub fn output_token(&self, dir: SwapDirection) -> usize {
        match dir {
            SwapDirection::XForY => self.y,
            SwapDirection::YForX => self.x,
        }
    }

    /// `⌊R_out·in(1−φ) / (R_in + in(1−φ))⌋`, without touching reserves.
    pub fn quote(&self, dir: SwapDirection, amount_in: u64) -> Result<u64, AmmError> {
        if amount_in == 0 {
            return Err(AmmError::ZeroInput);
        }
        let (r_in, r_out) = match dir {
            SwapDirection::XForY => (self.rx, self.ry),
            SwapDirection::YForX => (self.ry, self.rx),
        };
        let keep = (self.fee_den - self.fee_num) as u128;
        let eff = (amount_in as u128)
            .checked_mul(keep)
            .ok_or(AmmError::Overflow)?;
        let num = (r_out as u128).checked_mul(eff).ok_or(AmmError::Overflow)?;
        let den = (r_in as u128)
            .checked_mul(self.fee_den as u128)
            .and_then(|d| d.checked_add(eff))
            .ok_or(AmmError::Overflow)?;
        let out = (num / den) as u64;
        if out == 0 {
            return Err(AmmError::DustOutput);
        }
        Ok(out)
    }

    /// Adds tokens to the reserves without taking anything out.
    pub fn donate(&mut self, dx: u64, dy: u64) -> Result<(), AmmError> {
        let rx = self.rx.checked_add(dx).ok_or(AmmError::Overflow)?;
        let ry = self.ry.checked_add(dy).ok_or(AmmError::Overflow)?;
        (self.rx, self.ry) = (rx, ry);
        Ok(())
    }

    pub fn swap(&mut self, dir: SwapDirection, amount_in: u64) -> Result<u64, AmmError> {
        let out = self.quote(dir, amount_in)?;
        match dir {
            SwapDirection::XForY => {
                self.rx = self.rx.checked_add(amount_in).ok_or(AmmError::Overflow)?;
                self.ry -= out;
            }
            SwapDirection::YForX => {
                self.ry = self.ry.checked_add(amount_in).ok_or(AmmError::Overflow)?;
                self.rx -= out;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmmMode {
    /// Orders are committed blind and revealed in the next block.
    Dpacc,
    /// Orders sit in a public mempool for a block, where a sandwich attacker sees them.
    Transparent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmmOrder {
    pub user: WalletId,
    /// Block offset from the scenario start at which the order is submitted.
    pub at: u64,
    pub direction: SwapDirection,
    pub amount_in: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmmSetup {
    pub pool: ContractId,
    pub relayer: RelayerId,
    /// Block producer that arbitrages the pool to the reference price.
    pub producer: WalletId,
    /// Sandwich attacker, active only in transparent mode.
    pub attacker: WalletId,
    pub fee: TokenVector,
    pub collateral: TokenVector,
    pub disposition: Disposition,
    /// Fraction of the commit-time quote the user is willing to give up.
    pub slippage: Ratio<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserExecution {
    pub user: WalletId,
    pub direction: SwapDirection,
    pub amount_in: u64,
    pub committed_at: u64,
    pub executed_at: u64,
    #[serde(serialize_with = "ser_ratio")]
    pub eps_at_commit: BigRational,
    /// Pool price after the block's arbitrage, before anyone else trades.
    #[serde(serialize_with = "ser_ratio")]
    pub post_arb_price: BigRational,
    /// Reserves the user's swap actually ran against.
    pub reserves_before: (u64, u64),
    pub min_out: u64,
    /// `None` if the swap did not execute.
    pub amount_out: Option<u64>,
}

impl UserExecution {
    /// Y paid or received per unit of X.
    pub fn realized_price(&self) -> Option<BigRational> {
        let out = self.amount_out?;
        let (a, b) = match self.direction {
            SwapDirection::XForY => (out, self.amount_in),
            SwapDirection::YForX => (self.amount_in, out),
        };
        Some(BigRational::new(BigInt::from(a), BigInt::from(b)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AmmReport {
    pub mode: AmmMode,
    pub executions: Vec<UserExecution>,
    pub arbitrage_trades: u64,
    pub sandwiches: u64,
}

fn pool_of(chain: &ChainState, id: ContractId) -> Result<AmmPool, ProtocolError> {
    chain
        .pool(id)
        .cloned()
        .ok_or(ProtocolError::Ledger(LedgerError::UnknownContract(id)))
}

fn out_reserve(p: &AmmPool, dir: SwapDirection) -> u64 {
    match dir {
        SwapDirection::XForY => p.reserves().1,
        SwapDirection::YForX => p.reserves().0,
    }
}

fn plain_swap(
    chain: &mut ChainState,
    who: WalletId,
    nonce: u64,
    pool: ContractId,
    dir: SwapDirection,
    amount_in: u64,
    min_out: u64,
) -> Result<bool, ProtocolError> {
    let tx = Transaction::new(
        who,
        nonce,
        vec![Instruction::SwapAmm {
            pool,
            direction: dir,
            amount_in,
            min_out,
        }],
    )?;
    Ok(chain.submit_plain(&tx)?.fully_executed)
}

fn flip(dir: SwapDirection) -> SwapDirection {
    match dir {
        SwapDirection::XForY => SwapDirection::YForX,
        SwapDirection::YForX => SwapDirection::XForY,
    }
}

/// Largest front-run that still leaves the victim at least `min_out`.
fn front_run_size(
    pool: &AmmPool,
    dir: SwapDirection,
    victim_in: u64,
    min_out: u64,
    budget: u64,
) -> u64 {
    let ok = |a: u64| {
        let mut p = pool.clone();
        if a > 0 && p.swap(dir, a).is_err() {
            return true;
        }
        p.quote(dir, victim_in).is_ok_and(|q| q >= min_out)
    };
    if !ok(0) {
        return 0;
    }
    let (mut lo, mut hi) = (0u64, budget);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Runs the orders against the pool, one block per entry of `path` (the
/// reference price at each block, starting at the current height). Each
/// block the producer arbitrages first, then orders submitted in the previous
/// block execute, then new orders are submitted.
pub fn run_amm_scenario<R: Rng + ?Sized>(
    chain: &mut ChainState,
    setup: &AmmSetup,
    orders: &[AmmOrder],
    path: &[BigRational],
    mode: AmmMode,
    rng: &mut R,
) -> Result<AmmReport, ProtocolError> {
    let mut report = AmmReport {
        mode,
        executions: Vec::new(),
        arbitrage_trades: 0,
        sandwiches: 0,
    };
    if orders.is_empty() {
        return Ok(report);
    }
    let last = orders.iter().map(|o| o.at + 1).max().unwrap();
    if path.len() as u64 <= last {
        return Err(ProtocolError::Config(
            "price path shorter than the order schedule".into(),
        ));
    }
    let n = chain.n_tokens();
    let start = chain.height();
    let pool0 = pool_of(chain, setup.pool)?;

    // DPACC users map their tokens up front so the W_b snapshot covers them.
    let mut committed: Vec<Option<(Prover, BaseDpacc)>> = vec![None; orders.len()];
    let mut relayer = None;
    if mode == AmmMode::Dpacc {
        let mut provers = Vec::with_capacity(orders.len());
        for o in orders {
            let input = TokenVector::unit(n, pool0.input_token(o.direction), o.amount_in);
            let need = setup
                .fee
                .checked_add(&setup.collateral)?
                .checked_add(&input)?;
            provers.push(enroll(chain, o.user, need, rng)?);
        }
        relayer = Some(relayer_for(
            chain,
            setup.relayer,
            &setup.fee,
            &setup.collateral,
        )?);
        for (slot, p) in committed.iter_mut().zip(provers) {
            *slot = Some((
                p,
                make_base_dpacc(
                    WalletId(0),
                    0,
                    setup.relayer,
                    setup.fee.clone(),
                    setup.collateral.clone(),
                    vec![],
                )?,
            ));
        }
    }

    let mut nonce = rng.random::<u64>() >> 1;
    let mut next_nonce = || {
        nonce += 1;
        nonce
    };
    let mut execs: Vec<Option<UserExecution>> = vec![None; orders.len()];
    for t in 0..=last {
        if t > 0 {
            chain.advance_block();
        }
        let h = chain.height();
        let eps = &path[t as usize];

        let pool = pool_of(chain, setup.pool)?;
        if let Some(tr) = arbitrageur_act(&pool, eps) {
            if plain_swap(
                chain,
                setup.producer,
                next_nonce(),
                setup.pool,
                tr.direction,
                tr.amount_in,
                tr.amount_out,
            )? {
                report.arbitrage_trades += 1;
            }
        }
        let post_arb = pool_of(chain, setup.pool)?.price();

        for (i, o) in orders.iter().enumerate().filter(|(_, o)| o.at + 1 == t) {
            let e = execs[i].as_mut().expect("submitted a block earlier");
            e.post_arb_price = post_arb.clone();
            match mode {
                AmmMode::Dpacc => {
                    let before = pool_of(chain, setup.pool)?;
                    let (p, d) = committed[i].as_ref().unwrap();
                    let r = chain.reveal(&p.serial, d.tx())?;
                    let after = pool_of(chain, setup.pool)?;
                    e.reserves_before = before.reserves();
                    if matches!(r, RevealOutcome::Executed(ref x) if x.fully_executed) {
                        e.amount_out = Some(
                            out_reserve(&before, o.direction) - out_reserve(&after, o.direction),
                        );
                    }
                }
                AmmMode::Transparent => {
                    let pool = pool_of(chain, setup.pool)?;
                    let in_token = pool.input_token(o.direction);
                    let budget = chain
                        .wallet(setup.attacker)
                        .map_or(0, |w| w.residual().get(in_token));
                    let a = front_run_size(&pool, o.direction, o.amount_in, e.min_out, budget);
                    let mut got = 0;
                    if a > 0 {
                        if let Ok(q) = pool.quote(o.direction, a) {
                            if plain_swap(
                                chain,
                                setup.attacker,
                                next_nonce(),
                                setup.pool,
                                o.direction,
                                a,
                                q,
                            )? {
                                got = q;
                            }
                        }
                    }
                    let before = pool_of(chain, setup.pool)?;
                    e.reserves_before = before.reserves();
                    if plain_swap(
                        chain,
                        o.user,
                        next_nonce(),
                        setup.pool,
                        o.direction,
                        o.amount_in,
                        e.min_out,
                    )? {
                        let after = pool_of(chain, setup.pool)?;
                        e.amount_out = Some(
                            out_reserve(&before, o.direction) - out_reserve(&after, o.direction),
                        );
                    }
                    if got > 0 {
                        let back = pool_of(chain, setup.pool)?
                            .quote(flip(o.direction), got)
                            .unwrap_or(0);
                        if back > 0
                            && plain_swap(
                                chain,
                                setup.attacker,
                                next_nonce(),
                                setup.pool,
                                flip(o.direction),
                                got,
                                back,
                            )?
                        {
                            report.sandwiches += 1;
                        }
                    }
                }
            }
            e.executed_at = h;
        }

        for (i, o) in orders.iter().enumerate().filter(|(_, o)| o.at == t) {
            let pool = pool_of(chain, setup.pool)?;
            let quote = pool.quote(o.direction, o.amount_in).unwrap_or(0);
            let keep = Ratio::new(
                setup.slippage.denom() - setup.slippage.numer(),
                *setup.slippage.denom(),
            );
            let min_out = (Ratio::from_integer(quote as u128)
                * Ratio::new(*keep.numer() as u128, *keep.denom() as u128))
            .floor()
            .to_integer()
            .to_u64()
            .unwrap_or(0);
            if mode == AmmMode::Dpacc {
                let (p, d) = committed[i].as_mut().unwrap();
                *d = make_base_dpacc(
                    o.user,
                    next_nonce(),
                    setup.relayer,
                    setup.fee.clone(),
                    setup.collateral.clone(),
                    vec![Instruction::SwapAmm {
                        pool: setup.pool,
                        direction: o.direction,
                        amount_in: o.amount_in,
                        min_out,
                    }],
                )?;
                let (rel, coms) = relayer.as_mut().unwrap();
                let p = p.clone();
                submit(
                    chain,
                    rel,
                    &p,
                    d,
                    coms,
                    RevealWindow::AfterInclusion(chain.delta()),
                    setup.disposition,
                    Some(h + 1),
                )?;
                chain.pay_pool_deposit(setup.pool, setup.relayer)?;
            }
            execs[i] = Some(UserExecution {
                user: o.user,
                direction: o.direction,
                amount_in: o.amount_in,
                committed_at: h,
                executed_at: h,
                eps_at_commit: eps.clone(),
                post_arb_price: eps.clone(),
                reserves_before: (0, 0),
                min_out,
                amount_out: None,
            });
        }
    }
    let _ = start;
    report.executions = execs
        .into_iter()
        .map(|e| e.expect("every order is submitted"))
        .collect();
    Ok(report)
}
