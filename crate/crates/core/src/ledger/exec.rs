//! Instruction execution with break-point and lock semantics.
//!
//! Before the break-point each instruction applies on its own and execution
//! stops at the first invalid one, keeping what already ran. After the
//! break-point the remaining instructions apply as one group. Without a
//! break-point the whole transaction is one group.

use super::chain::{Accounts, BidRecord, ChainState};
use super::events::{Account, Effect};
use super::{ContractId, Instruction, RelayerId, TokenError, TokenVector, Transaction, WalletId};
use crate::protocols::amm::AmmError;
use crate::wallet::SpendContext;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("instruction spends outside the authorized tokens")]
    Unauthorized,
    #[error("unknown wallet {0}")]
    UnknownWallet(WalletId),
    #[error("unknown contract {0}")]
    UnknownContract(ContractId),
    #[error("swap output {got} below minimum {min}")]
    Slippage { got: u64, min: u64 },
    #[error("no including relayer to trade against")]
    NoCounterparty,
    #[error("relayer escrow cannot cover the quote")]
    EscrowShort,
    #[error(transparent)]
    Amm(#[from] AmmError),
    #[error(transparent)]
    Token(#[from] TokenError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecEnv {
    pub height: u64,
    /// Relayer that put the commitment on chain, if any.
    pub includer: Option<RelayerId>,
    pub inclusion_height: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecResult {
    /// Number of leading instructions whose effects persisted.
    pub executed_prefix_len: usize,
    pub fully_executed: bool,
    pub failure: Option<ExecError>,
}

fn spend(ctx: &mut SpendContext, amount: &TokenVector) -> Result<(), ExecError> {
    if !amount.fits_within(&ctx.available) {
        return Err(ExecError::Unauthorized);
    }
    ctx.available.sub_assign(amount)?;
    Ok(())
}

impl Accounts {
    fn debit(&mut self, ctx: &SpendContext, amount: &TokenVector) -> Result<(), ExecError> {
        let w = self
            .wallets
            .get_mut(&ctx.wallet)
            .ok_or(ExecError::UnknownWallet(ctx.wallet))?;
        Ok(w.debit_open(amount)?)
    }

    fn credit_wallet(&mut self, id: WalletId, amount: &TokenVector) -> Result<(), ExecError> {
        let w = self
            .wallets
            .get_mut(&id)
            .ok_or(ExecError::UnknownWallet(id))?;
        Ok(w.credit_residual(amount)?)
    }

    fn apply(
        &mut self,
        ins: &Instruction,
        ctx: &mut SpendContext,
        env: &ExecEnv,
        fx: &mut Vec<Effect>,
    ) -> Result<(), ExecError> {
        let n = ctx.available.dim();
        let me = Account::Wallet(ctx.wallet);
        match ins {
            Instruction::PayFee { to, amount } => {
                spend(ctx, amount)?;
                self.debit(ctx, amount)?;
                self.relayers
                    .entry(*to)
                    .or_insert_with(|| TokenVector::zeros(n))
                    .add_assign(amount)?;
                fx.push(Effect::Transfer {
                    from: me,
                    to: Account::Relayer(*to),
                    amount: amount.clone(),
                });
            }
            Instruction::Lock { amount } => {
                spend(ctx, amount)?;
                ctx.locked.add_assign(amount)?;
            }
            Instruction::BreakPoint | Instruction::Custom(_) => {}
            Instruction::Send { to, amount } => {
                if !self.wallets.contains_key(to) {
                    return Err(ExecError::UnknownWallet(*to));
                }
                spend(ctx, amount)?;
                self.debit(ctx, amount)?;
                self.credit_wallet(*to, amount)?;
                fx.push(Effect::Transfer {
                    from: me,
                    to: Account::Wallet(*to),
                    amount: amount.clone(),
                });
            }
            Instruction::Bid { auction, amount } => {
                if !self.escrows.contains_key(auction) {
                    return Err(ExecError::UnknownContract(*auction));
                }
                spend(ctx, amount)?;
                self.debit(ctx, amount)?;
                let e = self.escrows.get_mut(auction).unwrap();
                e.holdings.add_assign(amount)?;
                e.bids.push(BidRecord {
                    bidder: ctx.wallet,
                    serial: ctx.serial,
                    amount: amount.clone(),
                    height: env.height,
                });
                fx.push(Effect::Transfer {
                    from: me,
                    to: Account::Contract(*auction),
                    amount: amount.clone(),
                });
            }
            Instruction::SwapAmm {
                pool,
                direction,
                amount_in,
                min_out,
            } => {
                let p = self
                    .pools
                    .get_mut(pool)
                    .ok_or(ExecError::UnknownContract(*pool))?;
                let input = TokenVector::unit(n, p.input_token(*direction), *amount_in);
                let out_idx = p.output_token(*direction);
                let got = p.quote(*direction, *amount_in)?;
                if got < *min_out {
                    return Err(ExecError::Slippage { got, min: *min_out });
                }
                spend(ctx, &input)?;
                p.swap(*direction, *amount_in)?;
                self.debit(ctx, &input)?;
                self.credit_wallet(ctx.wallet, &TokenVector::unit(n, out_idx, got))?;
                fx.push(Effect::Swap {
                    pool: *pool,
                    amount_in: *amount_in,
                    amount_out: got,
                });
            }
            Instruction::RfqFill {
                give,
                take,
                schedule,
            } => {
                let relayer = env.includer.ok_or(ExecError::NoCounterparty)?;
                let serial = ctx.serial.ok_or(ExecError::NoCounterparty)?;
                let fee = schedule.fee_at(env.inclusion_height.unwrap_or(env.height));
                let from_take = fee.min(take);
                let rest = fee.checked_sub(&from_take)?;
                let escrow = self
                    .rfq_escrows
                    .get(&serial)
                    .filter(|e| e.relayer == relayer);
                if !escrow.is_some_and(|e| take.fits_within(&e.holdings)) {
                    return Err(ExecError::EscrowShort);
                }
                let paid = give.checked_add(&rest)?;
                spend(ctx, &paid)?;
                self.debit(ctx, &paid)?;
                self.rfq_escrows
                    .get_mut(&serial)
                    .unwrap()
                    .holdings
                    .sub_assign(take)?;
                let to_relayer = paid.checked_add(&from_take)?;
                self.relayers
                    .entry(relayer)
                    .or_insert_with(|| TokenVector::zeros(n))
                    .add_assign(&to_relayer)?;
                let received = take.checked_sub(&from_take)?;
                self.credit_wallet(ctx.wallet, &received)?;
                fx.push(Effect::Transfer {
                    from: me,
                    to: Account::Relayer(relayer),
                    amount: to_relayer,
                });
                fx.push(Effect::Transfer {
                    from: Account::Relayer(relayer),
                    to: me,
                    amount: received,
                });
            }
        }
        Ok(())
    }
}

impl ChainState {
    /// Runs `tx` against the tokens authorized by `ctx`. Locked tokens stay
    /// in the context; settling them is up to the caller.
    pub fn execute(
        &mut self,
        tx: &Transaction,
        ctx: &mut SpendContext,
        env: &ExecEnv,
    ) -> ExecResult {
        let ins = tx.instructions();
        let digest = self.events.enabled().then(|| tx.digest());
        let mut fx = Vec::new();
        let mut done = 0;
        let mut failure = None;

        let group_start = match tx.breakpoint() {
            Some(bp) => {
                for i in &ins[..=bp] {
                    let mut step = Vec::new();
                    let saved = (self.accounts.clone(), ctx.clone());
                    match self.accounts.apply(i, ctx, env, &mut step) {
                        Ok(()) => {
                            fx.append(&mut step);
                            done += 1;
                        }
                        Err(e) => {
                            (self.accounts, *ctx) = saved;
                            failure = Some(e);
                            break;
                        }
                    }
                }
                bp + 1
            }
            None => 0,
        };

        if failure.is_none() {
            let saved = (self.accounts.clone(), ctx.clone());
            let mut group = Vec::new();
            let r = ins[group_start..]
                .iter()
                .try_for_each(|i| self.accounts.apply(i, ctx, env, &mut group));
            match r {
                Ok(()) => {
                    fx.append(&mut group);
                    done = ins.len();
                }
                Err(e) => {
                    (self.accounts, *ctx) = saved;
                    failure = Some(e);
                }
            }
        }

        let full = failure.is_none();
        for e in fx {
            self.events.push(env.height, digest, e);
        }
        self.events.push(
            env.height,
            digest,
            Effect::Executed {
                sender: tx.sender,
                prefix_len: done,
                full,
            },
        );
        ExecResult {
            executed_prefix_len: done,
            fully_executed: full,
            failure,
        }
    }
}
