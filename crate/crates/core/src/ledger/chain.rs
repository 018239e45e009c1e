//! Chain state: heights, the global transaction commitment mapping, the
//! pending-inclusion queue and every token holder the conservation check sums.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::events::{Account, Effect, EventLog};
use super::exec::{ExecEnv, ExecResult};
use super::{ContractId, RelayerId, TokenError, TokenVector, Transaction, WalletId};
use crate::crypto::{verify_sig, Digest, Randomness, RootKey, Secret, Signature};
use crate::protocols::amm::AmmPool;
use crate::wallet::{new_wallet, SmartWallet, SpendContext, WalletError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("C_T entry for this serial is already set")]
    WriteOnce,
    #[error("signature does not verify under the serial")]
    BadSignature,
    #[error("cannot commit to the zero digest")]
    ZeroDigest,
    #[error("commitment for this serial is already pending or recorded")]
    AlreadyPending,
    #[error("unknown wallet {0}")]
    UnknownWallet(WalletId),
    #[error("unknown relayer {0}")]
    UnknownRelayer(RelayerId),
    #[error("unknown contract {0}")]
    UnknownContract(ContractId),
    #[error("id is already registered")]
    DuplicateId,
    #[error("tokens can only be minted at genesis")]
    MintAfterGenesis,
    #[error("no commitment recorded for this serial")]
    UnknownCommitment,
    #[error("reveal window is still open")]
    WindowOpen,
    #[error("tokens are not locked under the spend context")]
    NotLocked,
    #[error("Δ must be at least one block")]
    ZeroDelta,
    #[error("token vector has dimension {got}, chain uses {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error(transparent)]
    Wallet(#[from] WalletError),
}

/// What happens to collateral when a committed transaction does not execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    /// Burn exactly the collateral at the deadline and release the rest.
    Burn,
    /// Leave the whole mapped set locked forever.
    #[default]
    Lock,
}

/// `C_T`: serial → committed transaction digest. Absent keys read as zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GlobalCommitmentMap {
    entries: BTreeMap<Secret, Digest>,
}

impl GlobalCommitmentMap {
    pub fn get(&self, serial: &Secret) -> Digest {
        self.entries.get(serial).copied().unwrap_or(Digest::ZERO)
    }

    pub fn insert(
        &mut self,
        serial: Secret,
        digest: Digest,
        sig: &Signature,
    ) -> Result<(), LedgerError> {
        if digest.is_zero() {
            return Err(LedgerError::ZeroDigest);
        }
        if self.entries.contains_key(&serial) {
            return Err(LedgerError::WriteOnce);
        }
        if !verify_sig(&serial, &digest.0, sig) {
            return Err(LedgerError::BadSignature);
        }
        self.entries.insert(serial, digest);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Secret, &Digest)> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevealWindow {
    /// Open for this many blocks after the inclusion height, inclusive.
    AfterInclusion(u64),
    /// Open through this absolute height.
    Until(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitmentSubmission {
    pub serial: Secret,
    pub digest: Digest,
    pub sig: Signature,
    pub relayer: RelayerId,
    pub fee: TokenVector,
    pub collateral: TokenVector,
    pub window: RevealWindow,
    pub disposition: Disposition,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingItem {
    pub id: u64,
    pub submitted_at: u64,
    /// Height the relayer aims for; never later than `deadline`.
    pub target: u64,
    pub deadline: u64,
    pub submission: CommitmentSubmission,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum CommitmentStatus {
    Live,
    Revealed { at: u64, full: bool },
    Expired,
    LateBurned { at: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommitmentRecord {
    pub serial: Secret,
    pub digest: Digest,
    pub relayer: RelayerId,
    pub fee: TokenVector,
    pub collateral: TokenVector,
    pub disposition: Disposition,
    pub submitted_at: u64,
    pub included_at: u64,
    /// Last height at which a reveal counts as on time.
    pub window_end: u64,
    pub status: CommitmentStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InclusionRecord {
    pub id: u64,
    pub serial: Secret,
    pub submitted_at: u64,
    pub included_at: u64,
    pub deadline: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BidRecord {
    pub bidder: WalletId,
    pub serial: Option<Secret>,
    pub amount: TokenVector,
    pub height: u64,
}

/// Contract account that holds deposits (auction bids, batch orders, vaults).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Escrow {
    pub holdings: TokenVector,
    pub bids: Vec<BidRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RfqEscrow {
    pub relayer: RelayerId,
    pub holdings: TokenVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevealRecord {
    pub serial: Option<Secret>,
    pub tx: Transaction,
    pub height: u64,
    pub result: ExecResult,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RevealOutcome {
    Executed(ExecResult),
    /// Window had closed: nothing ran and the tokens still mapped under S were burned.
    Late {
        burned: TokenVector,
    },
}

/// Every token holder. Cloned wholesale to roll back an atomic segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Accounts {
    pub(crate) wallets: BTreeMap<WalletId, SmartWallet>,
    pub(crate) relayers: BTreeMap<RelayerId, TokenVector>,
    pub(crate) burn_sink: TokenVector,
    pub(crate) escrows: BTreeMap<ContractId, Escrow>,
    pub(crate) pools: BTreeMap<ContractId, AmmPool>,
    pub(crate) rfq_escrows: BTreeMap<Secret, RfqEscrow>,
}

impl Accounts {
    pub(crate) fn total(&self, n: usize) -> Result<TokenVector, TokenError> {
        let pools: Vec<TokenVector> = self.pools.values().map(|p| p.holdings(n)).collect();
        TokenVector::sum(
            n,
            self.wallets
                .values()
                .map(|w| w.balance())
                .chain(self.relayers.values())
                .chain([&self.burn_sink])
                .chain(self.escrows.values().map(|e| &e.holdings))
                .chain(&pools)
                .chain(self.rfq_escrows.values().map(|e| &e.holdings)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainState {
    height: u64,
    delta: u64,
    n: usize,
    total: TokenVector,
    pub(crate) accounts: Accounts,
    ct: GlobalCommitmentMap,
    pending: VecDeque<PendingItem>,
    next_id: u64,
    records: BTreeMap<Secret, CommitmentRecord>,
    inclusions: Vec<InclusionRecord>,
    reveals: Vec<RevealRecord>,
    pub(crate) events: EventLog,
    violations: u64,
}

impl ChainState {
    pub fn new(n: usize, delta: u64) -> Result<Self, LedgerError> {
        if delta == 0 {
            return Err(LedgerError::ZeroDelta);
        }
        Ok(ChainState {
            height: 0,
            delta,
            n,
            total: TokenVector::zeros(n),
            accounts: Accounts {
                wallets: BTreeMap::new(),
                relayers: BTreeMap::new(),
                burn_sink: TokenVector::zeros(n),
                escrows: BTreeMap::new(),
                pools: BTreeMap::new(),
                rfq_escrows: BTreeMap::new(),
            },
            ct: GlobalCommitmentMap::default(),
            pending: VecDeque::new(),
            next_id: 0,
            records: BTreeMap::new(),
            inclusions: Vec::new(),
            reveals: Vec::new(),
            events: EventLog::new(false),
            violations: 0,
        })
    }

    pub fn with_events(mut self, enabled: bool) -> Self {
        self.events = EventLog::new(enabled);
        self
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn n_tokens(&self) -> usize {
        self.n
    }

    /// `T`, fixed at genesis.
    pub fn total(&self) -> &TokenVector {
        &self.total
    }

    pub fn ct(&self) -> &GlobalCommitmentMap {
        &self.ct
    }

    pub fn wallet(&self, id: WalletId) -> Option<&SmartWallet> {
        self.accounts.wallets.get(&id)
    }

    pub fn wallets(&self) -> impl Iterator<Item = &SmartWallet> {
        self.accounts.wallets.values()
    }

    pub fn relayer_balance(&self, id: RelayerId) -> TokenVector {
        self.accounts
            .relayers
            .get(&id)
            .cloned()
            .unwrap_or_else(|| TokenVector::zeros(self.n))
    }

    pub fn burn_sink(&self) -> &TokenVector {
        &self.accounts.burn_sink
    }

    pub fn escrow(&self, id: ContractId) -> Option<&Escrow> {
        self.accounts.escrows.get(&id)
    }

    pub fn pool(&self, id: ContractId) -> Option<&AmmPool> {
        self.accounts.pools.get(&id)
    }

    pub fn rfq_escrow(&self, serial: &Secret) -> Option<&RfqEscrow> {
        self.accounts.rfq_escrows.get(serial)
    }

    pub fn record(&self, serial: &Secret) -> Option<&CommitmentRecord> {
        self.records.get(serial)
    }

    pub fn records(&self) -> impl Iterator<Item = &CommitmentRecord> {
        self.records.values()
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingItem> {
        self.pending.iter()
    }

    /// Commitments ever queued for inclusion.
    pub fn queued_count(&self) -> u64 {
        self.next_id
    }

    pub fn inclusions(&self) -> &[InclusionRecord] {
        &self.inclusions
    }

    pub fn reveals(&self) -> &[RevealRecord] {
        &self.reveals
    }

    pub fn events(&self) -> &EventLog {
        &self.events
    }

    /// Conservation failures seen at block boundaries.
    pub fn violations(&self) -> u64 {
        self.violations
    }

    /// JSON view of every wallet (key material omitted).
    pub fn wallet_snapshots(&self) -> serde_json::Value {
        serde_json::to_value(self.accounts.wallets.values().collect::<Vec<_>>())
            .expect("wallets serialize")
    }

    fn check_dim(&self, t: &TokenVector) -> Result<(), LedgerError> {
        if t.dim() == self.n {
            Ok(())
        } else {
            Err(LedgerError::Dimension {
                expected: self.n,
                got: t.dim(),
            })
        }
    }

    fn mint(&mut self, to: Account, amount: &TokenVector) -> Result<(), LedgerError> {
        if self.height != 0 {
            return Err(LedgerError::MintAfterGenesis);
        }
        self.check_dim(amount)?;
        self.total.add_assign(amount)?;
        self.events.push(
            0,
            None,
            Effect::Minted {
                to,
                amount: amount.clone(),
            },
        );
        Ok(())
    }

    pub fn add_wallet(&mut self, id: WalletId, initial: TokenVector) -> Result<(), LedgerError> {
        if self.accounts.wallets.contains_key(&id) {
            return Err(LedgerError::DuplicateId);
        }
        self.mint(Account::Wallet(id), &initial)?;
        self.accounts.wallets.insert(id, new_wallet(id, initial));
        Ok(())
    }

    pub fn add_relayer(&mut self, id: RelayerId, initial: TokenVector) -> Result<(), LedgerError> {
        if self.accounts.relayers.contains_key(&id) {
            return Err(LedgerError::DuplicateId);
        }
        self.mint(Account::Relayer(id), &initial)?;
        self.accounts.relayers.insert(id, initial);
        Ok(())
    }

    fn contract_taken(&self, id: ContractId) -> bool {
        self.accounts.escrows.contains_key(&id) || self.accounts.pools.contains_key(&id)
    }

    pub fn add_pool(&mut self, id: ContractId, pool: AmmPool) -> Result<(), LedgerError> {
        if self.contract_taken(id) {
            return Err(LedgerError::DuplicateId);
        }
        self.mint(Account::Contract(id), &pool.holdings(self.n))?;
        self.accounts.pools.insert(id, pool);
        Ok(())
    }

    /// Opens an empty deposit contract. Allowed at any height since nothing is minted.
    pub fn add_escrow(&mut self, id: ContractId) -> Result<(), LedgerError> {
        if self.contract_taken(id) {
            return Err(LedgerError::DuplicateId);
        }
        self.accounts.escrows.insert(
            id,
            Escrow {
                holdings: TokenVector::zeros(self.n),
                bids: Vec::new(),
            },
        );
        Ok(())
    }

    pub fn map_secret(
        &mut self,
        wallet: WalletId,
        key: RootKey,
        r: Randomness,
        tokens: TokenVector,
    ) -> Result<Digest, LedgerError> {
        let w = self
            .accounts
            .wallets
            .get_mut(&wallet)
            .ok_or(LedgerError::UnknownWallet(wallet))?;
        Ok(w.add_secret_mapping(key, r, tokens)?)
    }

    pub fn submit_global_commitment(
        &mut self,
        serial: Secret,
        digest: Digest,
        sig: &Signature,
    ) -> Result<(), LedgerError> {
        self.ct.insert(serial, digest, sig)
    }

    /// Queues a commitment for inclusion no later than `H + Δ`.
    pub fn queue_commitment(
        &mut self,
        sub: CommitmentSubmission,
        target: Option<u64>,
    ) -> Result<u64, LedgerError> {
        let s = sub.serial;
        if !self.ct.get(&s).is_zero()
            || self.records.contains_key(&s)
            || self.pending.iter().any(|p| p.submission.serial == s)
        {
            return Err(LedgerError::AlreadyPending);
        }
        if sub.digest.is_zero() {
            return Err(LedgerError::ZeroDigest);
        }
        if !verify_sig(&s, &sub.digest.0, &sub.sig) {
            return Err(LedgerError::BadSignature);
        }
        self.check_dim(&sub.fee)?;
        self.check_dim(&sub.collateral)?;
        let deadline = self.height + self.delta;
        let target = target.unwrap_or(deadline).clamp(self.height + 1, deadline);
        let id = self.next_id;
        self.next_id += 1;
        self.events.push(
            self.height,
            Some(sub.digest),
            Effect::CommitmentQueued {
                serial: s,
                relayer: sub.relayer,
                deadline,
            },
        );
        self.pending.push_back(PendingItem {
            id,
            submitted_at: self.height,
            target,
            deadline,
            submission: sub,
        });
        Ok(id)
    }

    /// Closes the current block: height, forced inclusion, expiries, conservation.
    pub fn advance_block(&mut self) {
        self.height += 1;
        let h = self.height;

        let (due, keep): (Vec<_>, Vec<_>) = self
            .pending
            .drain(..)
            .partition(|p| p.target <= h || p.deadline <= h);
        self.pending = keep.into();
        for item in due {
            self.include(item);
        }

        let expired: Vec<Secret> = self
            .records
            .values()
            .filter(|r| r.status == CommitmentStatus::Live && r.window_end < h)
            .map(|r| r.serial)
            .collect();
        for s in expired {
            self.timeout_collateral(&s).expect("window checked");
        }

        let reclaim: Vec<Secret> = self
            .accounts
            .rfq_escrows
            .keys()
            .filter(|s| self.records.get(s).is_some_and(|r| r.window_end < h))
            .copied()
            .collect();
        for s in reclaim {
            let e = self.accounts.rfq_escrows.remove(&s).unwrap();
            let bal = self
                .accounts
                .relayers
                .entry(e.relayer)
                .or_insert_with(|| TokenVector::zeros(self.n));
            bal.add_assign(&e.holdings).expect("escrow fits");
            self.events.push(
                h,
                None,
                Effect::EscrowReclaimed {
                    serial: s,
                    relayer: e.relayer,
                    amount: e.holdings,
                },
            );
        }

        self.check_conservation();
    }

    fn include(&mut self, item: PendingItem) {
        let h = self.height;
        let sub = item.submission;
        if let Err(e) = self.ct.insert(sub.serial, sub.digest, &sub.sig) {
            self.events.push(
                h,
                Some(sub.digest),
                Effect::InclusionFailed {
                    serial: sub.serial,
                    reason: e.to_string(),
                },
            );
            return;
        }
        let window_end = match sub.window {
            RevealWindow::AfterInclusion(n) => h + n,
            RevealWindow::Until(end) => end,
        };
        self.events.push(
            h,
            Some(sub.digest),
            Effect::CommitmentIncluded {
                serial: sub.serial,
                relayer: sub.relayer,
                submitted_at: item.submitted_at,
            },
        );
        self.inclusions.push(InclusionRecord {
            id: item.id,
            serial: sub.serial,
            submitted_at: item.submitted_at,
            included_at: h,
            deadline: item.deadline,
        });
        self.records.insert(
            sub.serial,
            CommitmentRecord {
                serial: sub.serial,
                digest: sub.digest,
                relayer: sub.relayer,
                fee: sub.fee,
                collateral: sub.collateral,
                disposition: sub.disposition,
                submitted_at: item.submitted_at,
                included_at: h,
                window_end,
                status: CommitmentStatus::Live,
            },
        );
    }

    pub fn check_conservation(&mut self) -> bool {
        let found = self.accounts.total(self.n);
        let ok = found.as_ref() == Ok(&self.total);
        if !ok {
            self.violations += 1;
            let found = found.unwrap_or_else(|_| TokenVector::new(vec![u64::MAX; self.n]));
            self.events.push(
                self.height,
                None,
                Effect::ConservationViolated {
                    expected: self.total.clone(),
                    found,
                },
            );
        }
        ok
    }

    fn holder_of(&self, serial: &Secret) -> Option<WalletId> {
        self.accounts
            .wallets
            .values()
            .find(|w| w.is_live(serial))
            .map(|w| w.id())
    }

    /// Disposes of an unrevealed commitment's collateral once its window has closed.
    pub fn timeout_collateral(&mut self, serial: &Secret) -> Result<(), LedgerError> {
        let rec = self
            .records
            .get(serial)
            .ok_or(LedgerError::UnknownCommitment)?;
        if rec.status != CommitmentStatus::Live {
            return Ok(());
        }
        if self.height <= rec.window_end {
            return Err(LedgerError::WindowOpen);
        }
        let (disposition, collateral, digest) =
            (rec.disposition, rec.collateral.clone(), rec.digest);
        if disposition == Disposition::Burn {
            if let Some(wid) = self.holder_of(serial) {
                let w = self.accounts.wallets.get_mut(&wid).unwrap();
                let com = w.commitment_for(serial).unwrap();
                let amount = collateral.min(w.mapped(&com).unwrap());
                w.take_from_mapped(&com, &amount, true)?;
                self.accounts.burn_sink.add_assign(&amount)?;
                self.events.push(
                    self.height,
                    Some(digest),
                    Effect::Burned {
                        from: Account::Wallet(wid),
                        amount,
                    },
                );
            }
        }
        self.records.get_mut(serial).unwrap().status = CommitmentStatus::Expired;
        self.events.push(
            self.height,
            Some(digest),
            Effect::TimedOut { serial: *serial },
        );
        Ok(())
    }

    /// Burns tokens locked earlier in the transaction behind `ctx`.
    pub fn burn(
        &mut self,
        ctx: &mut SpendContext,
        amount: &TokenVector,
    ) -> Result<(), LedgerError> {
        if !amount.fits_within(&ctx.locked) {
            return Err(LedgerError::NotLocked);
        }
        if amount.is_zero() {
            return Ok(());
        }
        let w = self
            .accounts
            .wallets
            .get_mut(&ctx.wallet)
            .ok_or(LedgerError::UnknownWallet(ctx.wallet))?;
        w.debit_open(amount)?;
        self.accounts.burn_sink.add_assign(amount)?;
        ctx.locked.sub_assign(amount)?;
        self.events.push(
            self.height,
            None,
            Effect::Burned {
                from: Account::Wallet(ctx.wallet),
                amount: amount.clone(),
            },
        );
        Ok(())
    }

    /// Ends a transaction: releases or disposes of locked tokens, then remaps leftovers.
    fn settle(
        &mut self,
        ctx: &mut SpendContext,
        full: bool,
        on_fail: Option<Disposition>,
    ) -> Result<(), LedgerError> {
        if !full && !ctx.locked.is_zero() {
            match on_fail {
                Some(Disposition::Burn) => {
                    let locked = ctx.locked.clone();
                    self.burn(ctx, &locked)?;
                }
                Some(Disposition::Lock) => {
                    let w = self.accounts.wallets.get_mut(&ctx.wallet).unwrap();
                    w.freeze_open(&ctx.locked)?;
                    self.events.push(
                        self.height,
                        None,
                        Effect::Frozen {
                            wallet: ctx.wallet,
                            amount: ctx.locked.clone(),
                        },
                    );
                }
                None => {}
            }
        }
        let w = self.accounts.wallets.get_mut(&ctx.wallet).unwrap();
        w.remap_defaults(ctx)?;
        Ok(())
    }

    /// Runs an uncommitted transaction from the sender's zero-commitment tokens.
    pub fn submit_plain(&mut self, tx: &Transaction) -> Result<ExecResult, LedgerError> {
        let w = self
            .accounts
            .wallets
            .get_mut(&tx.sender)
            .ok_or(LedgerError::UnknownWallet(tx.sender))?;
        let mut ctx = w.open_residual(tx)?;
        let env = ExecEnv {
            height: self.height,
            includer: None,
            inclusion_height: None,
        };
        let result = self.execute(tx, &mut ctx, &env);
        self.settle(&mut ctx, result.fully_executed, None)?;
        self.reveals.push(RevealRecord {
            serial: None,
            tx: tx.clone(),
            height: self.height,
            result: result.clone(),
        });
        Ok(result)
    }

    /// Reveals `tx` under `serial`. A mismatched or unknown reveal aborts with no state change.
    pub fn reveal(
        &mut self,
        serial: &Secret,
        tx: &Transaction,
    ) -> Result<RevealOutcome, LedgerError> {
        let h = self.height;
        let record = self.records.get(serial).cloned();
        if let Some(rec) = &record {
            let late = h > rec.window_end || rec.status == CommitmentStatus::Expired;
            if late
                && rec.digest == tx.digest()
                && matches!(
                    rec.status,
                    CommitmentStatus::Live | CommitmentStatus::Expired
                )
            {
                let burned = self.burn_late(serial, tx)?;
                return Ok(RevealOutcome::Late { burned });
            }
        }
        let w = self
            .accounts
            .wallets
            .get_mut(&tx.sender)
            .ok_or(LedgerError::UnknownWallet(tx.sender))?;
        let mut ctx = w.reveal_and_restrict(serial, tx, &self.ct)?;
        let env = ExecEnv {
            height: h,
            includer: record.as_ref().map(|r| r.relayer),
            inclusion_height: record.as_ref().map(|r| r.included_at),
        };
        let result = self.execute(tx, &mut ctx, &env);
        self.settle(
            &mut ctx,
            result.fully_executed,
            record.as_ref().map(|r| r.disposition),
        )?;
        if let Some(rec) = self.records.get_mut(serial) {
            rec.status = CommitmentStatus::Revealed {
                at: h,
                full: result.fully_executed,
            };
        }
        self.reveals.push(RevealRecord {
            serial: Some(*serial),
            tx: tx.clone(),
            height: h,
            result: result.clone(),
        });
        Ok(RevealOutcome::Executed(result))
    }

    fn burn_late(&mut self, serial: &Secret, tx: &Transaction) -> Result<TokenVector, LedgerError> {
        let h = self.height;
        let mut burned = TokenVector::zeros(self.n);
        let w = self
            .accounts
            .wallets
            .get_mut(&tx.sender)
            .ok_or(LedgerError::UnknownWallet(tx.sender))?;
        if let Some(com) = w.commitment_for(serial).filter(|_| w.is_live(serial)) {
            burned = w.mapped(&com).unwrap().clone();
            w.take_from_mapped(&com, &burned, true)?;
            self.accounts.burn_sink.add_assign(&burned)?;
            self.events.push(
                h,
                Some(tx.digest()),
                Effect::Burned {
                    from: Account::Wallet(tx.sender),
                    amount: burned.clone(),
                },
            );
        }
        self.records.get_mut(serial).unwrap().status = CommitmentStatus::LateBurned { at: h };
        self.events
            .push(h, Some(tx.digest()), Effect::LateReveal { serial: *serial });
        Ok(burned)
    }

    /// Pays out of a deposit contract.
    pub fn escrow_transfer(
        &mut self,
        from: ContractId,
        to: Account,
        amount: &TokenVector,
    ) -> Result<(), LedgerError> {
        self.check_dim(amount)?;
        let e = self
            .accounts
            .escrows
            .get(&from)
            .ok_or(LedgerError::UnknownContract(from))?;
        let rest = e.holdings.checked_sub(amount)?;
        match to {
            Account::Wallet(id) => self
                .accounts
                .wallets
                .get_mut(&id)
                .ok_or(LedgerError::UnknownWallet(id))?
                .credit_residual(amount)?,
            Account::Relayer(id) => self
                .accounts
                .relayers
                .entry(id)
                .or_insert_with(|| TokenVector::zeros(self.n))
                .add_assign(amount)?,
            Account::Contract(id) if id != from => self
                .accounts
                .escrows
                .get_mut(&id)
                .ok_or(LedgerError::UnknownContract(id))?
                .holdings
                .add_assign(amount)?,
            Account::Contract(_) => return Ok(()),
            Account::Burn => self.accounts.burn_sink.add_assign(amount)?,
        }
        self.accounts.escrows.get_mut(&from).unwrap().holdings = rest;
        self.events.push(
            self.height,
            None,
            Effect::Transfer {
                from: Account::Contract(from),
                to,
                amount: amount.clone(),
            },
        );
        Ok(())
    }

    /// Pays the pool's relayer deposit out of `relayer` into the pool's Y reserve.
    pub fn pay_pool_deposit(
        &mut self,
        pool: ContractId,
        relayer: RelayerId,
    ) -> Result<u64, LedgerError> {
        let p = self
            .accounts
            .pools
            .get(&pool)
            .ok_or(LedgerError::UnknownContract(pool))?;
        let (y, dep) = (p.y, p.relayer_deposit);
        if dep == 0 {
            return Ok(0);
        }
        let amount = TokenVector::unit(self.n, y, dep);
        let bal = self
            .accounts
            .relayers
            .get_mut(&relayer)
            .ok_or(LedgerError::UnknownRelayer(relayer))?;
        bal.sub_assign(&amount)?;
        self.accounts
            .pools
            .get_mut(&pool)
            .unwrap()
            .donate(0, dep)
            .map_err(|_| TokenError::Overflow(y))?;
        self.events.push(
            self.height,
            None,
            Effect::Transfer {
                from: Account::Relayer(relayer),
                to: Account::Contract(pool),
                amount,
            },
        );
        Ok(dep)
    }

    /// Moves relayer funds into the escrow backing quotes on `serial`'s commitment.
    /// Returned to the relayer once that commitment's window has closed.
    pub fn post_rfq_escrow(
        &mut self,
        serial: Secret,
        relayer: RelayerId,
        amount: &TokenVector,
    ) -> Result<(), LedgerError> {
        self.check_dim(amount)?;
        if !self.records.contains_key(&serial) {
            return Err(LedgerError::UnknownCommitment);
        }
        if self
            .accounts
            .rfq_escrows
            .get(&serial)
            .is_some_and(|e| e.relayer != relayer)
        {
            return Err(LedgerError::DuplicateId);
        }
        let bal = self
            .accounts
            .relayers
            .get_mut(&relayer)
            .ok_or(LedgerError::UnknownRelayer(relayer))?;
        bal.sub_assign(amount)?;
        let e = self
            .accounts
            .rfq_escrows
            .entry(serial)
            .or_insert_with(|| RfqEscrow {
                relayer,
                holdings: TokenVector::zeros(amount.dim()),
            });
        e.holdings.add_assign(amount)?;
        self.events.push(
            self.height,
            None,
            Effect::EscrowPosted {
                serial,
                relayer,
                amount: amount.clone(),
            },
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{derive_serial, sign};
    use crate::ledger::Instruction;
    use proptest::prelude::*;

    fn tv(v: &[u64]) -> TokenVector {
        TokenVector::new(v.to_vec())
    }

    fn key(i: u8) -> RootKey {
        RootKey::from_seed([i; 32])
    }

    fn chain() -> ChainState {
        let mut c = ChainState::new(2, 3).unwrap();
        c.add_wallet(WalletId(1), tv(&[10, 10])).unwrap();
        c.add_wallet(WalletId(2), tv(&[0, 0])).unwrap();
        c.add_relayer(RelayerId(7), tv(&[0, 0])).unwrap();
        c
    }

    fn base_tx(fee: u64, coll: u64, payload: Vec<Instruction>) -> Transaction {
        let mut ins = vec![
            Instruction::PayFee {
                to: RelayerId(7),
                amount: tv(&[fee, 0]),
            },
            Instruction::Lock {
                amount: tv(&[0, coll]),
            },
            Instruction::BreakPoint,
        ];
        ins.extend(payload);
        Transaction::new(WalletId(1), 0, ins).unwrap()
    }

    fn submission(k: &RootKey, tx: &Transaction, disposition: Disposition) -> CommitmentSubmission {
        let d = tx.digest();
        CommitmentSubmission {
            serial: derive_serial(k),
            digest: d,
            sig: sign(k, &d.0),
            relayer: RelayerId(7),
            fee: tv(&[1, 0]),
            collateral: tv(&[0, 2]),
            window: RevealWindow::AfterInclusion(3),
            disposition,
        }
    }

    #[test]
    fn write_once() {
        let mut ct = GlobalCommitmentMap::default();
        let k = key(1);
        let s = derive_serial(&k);
        let d = Digest([9; 32]);
        assert_eq!(ct.get(&s), Digest::ZERO);
        ct.insert(s, d, &sign(&k, &d.0)).unwrap();
        assert_eq!(ct.get(&s), d);
        let d2 = Digest([8; 32]);
        assert_eq!(
            ct.insert(s, d2, &sign(&k, &d2.0)),
            Err(LedgerError::WriteOnce)
        );
        assert_eq!(ct.get(&s), d);
        let s2 = derive_serial(&key(2));
        assert_eq!(
            ct.insert(s2, d, &sign(&k, &d.0)),
            Err(LedgerError::BadSignature)
        );
        assert_eq!(ct.get(&s2), Digest::ZERO);
    }

    #[test]
    fn inclusion_within_delta() {
        let mut c = chain();
        for _ in 0..10 {
            c.advance_block();
        }
        let k = key(1);
        let tx = base_tx(1, 2, vec![]);
        c.queue_commitment(submission(&k, &tx, Disposition::Lock), None)
            .unwrap();
        let k2 = key(2);
        let tx2 = Transaction::new(WalletId(2), 5, vec![Instruction::BreakPoint]).unwrap();
        c.queue_commitment(submission(&k2, &tx2, Disposition::Lock), None)
            .unwrap();
        for _ in 0..3 {
            c.advance_block();
        }
        assert_eq!(c.height(), 13);
        assert_eq!(c.ct().get(&derive_serial(&k)), tx.digest());
        let inc = c.inclusions();
        assert_eq!(inc.len(), 2);
        assert!(inc.iter().all(|i| i.included_at <= 13));
        assert_eq!(inc[0].serial, derive_serial(&k));
        assert_eq!(inc[1].serial, derive_serial(&k2));
    }

    #[test]
    fn empty_queue_only_moves_height() {
        let mut c = chain();
        let before = c.clone();
        c.advance_block();
        assert_eq!(c.height(), 1);
        assert_eq!(c.accounts, before.accounts);
        assert_eq!(c.violations(), 0);
    }

    #[test]
    fn early_target_respected() {
        let mut c = chain();
        let k = key(1);
        let tx = base_tx(1, 2, vec![]);
        c.queue_commitment(submission(&k, &tx, Disposition::Lock), Some(1))
            .unwrap();
        c.advance_block();
        assert_eq!(c.inclusions()[0].included_at, 1);
    }

    fn commit_and_include(c: &mut ChainState, k: &RootKey, tx: &Transaction, d: Disposition) {
        c.map_secret(WalletId(1), k.clone(), Randomness([3; 32]), tv(&[4, 4]))
            .unwrap();
        c.queue_commitment(submission(k, tx, d), Some(c.height() + 1))
            .unwrap();
        c.advance_block();
    }

    #[test]
    fn reveal_pays_fee_and_returns_collateral() {
        let mut c = chain();
        let k = key(1);
        let tx = base_tx(
            1,
            2,
            vec![Instruction::Send {
                to: WalletId(2),
                amount: tv(&[0, 1]),
            }],
        );
        commit_and_include(&mut c, &k, &tx, Disposition::Burn);
        let out = c.reveal(&derive_serial(&k), &tx).unwrap();
        let RevealOutcome::Executed(r) = out else {
            panic!()
        };
        assert!(r.fully_executed);
        assert_eq!(c.relayer_balance(RelayerId(7)), tv(&[1, 0]));
        assert_eq!(c.wallet(WalletId(2)).unwrap().balance(), &tv(&[0, 1]));
        let w = c.wallet(WalletId(1)).unwrap();
        assert_eq!(w.residual(), &tv(&[9, 9]));
        assert!(w.check_invariant());
        assert!(c.check_conservation());
    }

    #[test]
    fn failed_payload_keeps_prefix() {
        for d in [Disposition::Burn, Disposition::Lock] {
            let mut c = chain();
            let k = key(1);
            let tx = base_tx(
                1,
                2,
                vec![Instruction::Send {
                    to: WalletId(2),
                    amount: tv(&[0, 5]),
                }],
            );
            commit_and_include(&mut c, &k, &tx, d);
            let RevealOutcome::Executed(r) = c.reveal(&derive_serial(&k), &tx).unwrap() else {
                panic!()
            };
            assert!(!r.fully_executed);
            assert_eq!(r.executed_prefix_len, 3);
            assert_eq!(c.relayer_balance(RelayerId(7)), tv(&[1, 0]));
            assert_eq!(c.wallet(WalletId(2)).unwrap().balance(), &tv(&[0, 0]));
            let w = c.wallet(WalletId(1)).unwrap();
            match d {
                Disposition::Burn => assert_eq!(c.burn_sink(), &tv(&[0, 2])),
                Disposition::Lock => assert_eq!(w.frozen(), &tv(&[0, 2])),
            }
            assert!(w.check_invariant());
            assert!(c.check_conservation());
        }
    }

    #[test]
    fn mismatched_reveal_aborts_without_change() {
        let mut c = chain();
        let k = key(1);
        let tx = base_tx(1, 2, vec![]);
        commit_and_include(&mut c, &k, &tx, Disposition::Lock);
        let other = base_tx(1, 1, vec![]);
        let before = c.clone();
        assert!(matches!(
            c.reveal(&derive_serial(&k), &other),
            Err(LedgerError::Wallet(WalletError::DigestMismatch))
        ));
        assert_eq!(c, before);
    }

    #[test]
    fn timeout_dispositions() {
        let k = key(1);
        let s = derive_serial(&k);
        let tx = base_tx(1, 2, vec![]);

        let mut c = chain();
        commit_and_include(&mut c, &k, &tx, Disposition::Burn);
        assert_eq!(c.timeout_collateral(&s), Err(LedgerError::WindowOpen));
        for _ in 0..4 {
            c.advance_block();
        }
        assert_eq!(c.burn_sink(), &tv(&[0, 2]));
        assert_eq!(c.wallet(WalletId(1)).unwrap().residual(), &tv(&[10, 8]));
        assert_eq!(c.record(&s).unwrap().status, CommitmentStatus::Expired);

        let mut c = chain();
        commit_and_include(&mut c, &k, &tx, Disposition::Lock);
        for _ in 0..4 {
            c.advance_block();
        }
        let w = c.wallet(WalletId(1)).unwrap();
        assert_eq!(w.balance(), &tv(&[10, 10]));
        assert_eq!(w.residual(), &tv(&[6, 6]));
        assert!(c.burn_sink().is_zero());
        // A different transaction under the same serial can never unlock it.
        let other = base_tx(0, 0, vec![]);
        assert!(c.reveal(&s, &other).is_err());
        // The committed one is late and burns what is still mapped.
        assert_eq!(
            c.reveal(&s, &tx).unwrap(),
            RevealOutcome::Late {
                burned: tv(&[4, 4])
            }
        );
        assert_eq!(c.burn_sink(), &tv(&[4, 4]));
        assert!(c.check_conservation());

        // Revealed in time: timeout is a no-op.
        let mut c = chain();
        commit_and_include(&mut c, &k, &tx, Disposition::Burn);
        c.reveal(&s, &tx).unwrap();
        for _ in 0..4 {
            c.advance_block();
        }
        c.timeout_collateral(&s).unwrap();
        assert!(c.burn_sink().is_zero());
    }

    #[test]
    fn burn_requires_lock() {
        let mut c = chain();
        let tx = Transaction::new(
            WalletId(1),
            0,
            vec![Instruction::Lock {
                amount: tv(&[0, 5]),
            }],
        )
        .unwrap();
        let w = c.accounts.wallets.get_mut(&WalletId(1)).unwrap();
        let mut ctx = w.open_residual(&tx).unwrap();
        let env = ExecEnv {
            height: 0,
            includer: None,
            inclusion_height: None,
        };
        assert!(c.execute(&tx, &mut ctx, &env).fully_executed);
        assert_eq!(c.burn(&mut ctx, &tv(&[1, 0])), Err(LedgerError::NotLocked));
        c.burn(&mut ctx, &tv(&[0, 0])).unwrap();
        assert!(c.burn_sink().is_zero());
        c.burn(&mut ctx, &tv(&[0, 5])).unwrap();
        assert_eq!(c.burn_sink(), &tv(&[0, 5]));
        assert!(c.check_conservation());
    }

    #[test]
    fn mint_only_at_genesis() {
        let mut c = chain();
        c.advance_block();
        assert_eq!(
            c.add_wallet(WalletId(9), tv(&[1, 1])),
            Err(LedgerError::MintAfterGenesis)
        );
        assert!(ChainState::new(2, 0).is_err());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Plain {
            from: u32,
            to: u32,
            amount: [u64; 2],
        },
        Commit {
            wallet: u32,
            fee: u64,
            coll: u64,
            send: [u64; 2],
            disposition: bool,
        },
        Reveal(usize),
        Advance,
    }

    fn arb_op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u32..4, 0u32..4, [0u64..6, 0u64..6]).prop_map(|(from, to, amount)| Op::Plain {
                from,
                to,
                amount
            }),
            (0u32..4, 0u64..3, 0u64..3, [0u64..6, 0u64..6], any::<bool>()).prop_map(
                |(wallet, fee, coll, send, disposition)| Op::Commit {
                    wallet,
                    fee,
                    coll,
                    send,
                    disposition
                }
            ),
            (0usize..8).prop_map(Op::Reveal),
            Just(Op::Advance),
        ]
    }

    proptest! {
        #[test]
        fn conservation_and_write_once(ops in prop::collection::vec(arb_op(), 1..60)) {
            let mut c = ChainState::new(2, 2).unwrap();
            for i in 0..4 {
                c.add_wallet(WalletId(i), tv(&[8, 8])).unwrap();
            }
            c.add_relayer(RelayerId(7), tv(&[0, 0])).unwrap();
            let mut committed: Vec<(Secret, Transaction)> = Vec::new();
            let mut seen: BTreeMap<Secret, Digest> = BTreeMap::new();
            let mut next = 0u8;
            for op in ops {
                match op {
                    Op::Plain { from, to, amount } => {
                        let tx = Transaction::new(WalletId(from), 0, vec![Instruction::Send { to: WalletId(to), amount: tv(&amount) }]).unwrap();
                        c.submit_plain(&tx).unwrap();
                    }
                    Op::Commit { wallet, fee, coll, send, disposition } => {
                        next = next.wrapping_add(1);
                        let k = key(next);
                        let tx = Transaction::new(WalletId(wallet), next as u64, vec![
                            Instruction::PayFee { to: RelayerId(7), amount: tv(&[fee, 0]) },
                            Instruction::Lock { amount: tv(&[0, coll]) },
                            Instruction::BreakPoint,
                            Instruction::Send { to: WalletId((wallet + 1) % 4), amount: tv(&send) },
                        ]).unwrap();
                        if c.map_secret(WalletId(wallet), k.clone(), Randomness([next; 32]), tv(&[fee + 1, coll + 1])).is_ok() {
                            let d = if disposition { Disposition::Burn } else { Disposition::Lock };
                            let mut sub = submission(&k, &tx, d);
                            sub.fee = tv(&[fee, 0]);
                            sub.collateral = tv(&[0, coll]);
                            c.queue_commitment(sub, None).unwrap();
                            committed.push((derive_serial(&k), tx));
                        }
                    }
                    Op::Reveal(i) => {
                        if let Some((s, tx)) = committed.get(i) {
                            let _ = c.reveal(s, tx);
                        }
                    }
                    Op::Advance => c.advance_block(),
                }
                prop_assert!(c.check_conservation());
                for w in c.wallets() {
                    prop_assert!(w.check_invariant());
                }
                for (s, d) in c.ct().iter() {
                    if let Some(old) = seen.insert(*s, *d) {
                        prop_assert_eq!(old, *d);
                    }
                }
            }
            prop_assert_eq!(c.violations(), 0);
        }

        #[test]
        fn prefix_replay_matches_failed_payload(fee in 0u64..4, coll in 0u64..4, over in 11u64..20) {
            let tx = base_tx(fee, coll, vec![Instruction::Send { to: WalletId(2), amount: tv(&[0, over]) }]);
            let prefix = Transaction::new(WalletId(1), 0, tx.instructions()[..3].to_vec()).unwrap();
            let env = ExecEnv { height: 0, includer: None, inclusion_height: None };

            let mut a = chain();
            let mut ctx_a = a.accounts.wallets.get_mut(&WalletId(1)).unwrap().open_residual(&tx).unwrap();
            let ra = a.execute(&tx, &mut ctx_a, &env);
            let mut b = chain();
            let mut ctx_b = b.accounts.wallets.get_mut(&WalletId(1)).unwrap().open_residual(&prefix).unwrap();
            let rb = b.execute(&prefix, &mut ctx_b, &env);

            prop_assert!(!ra.fully_executed);
            prop_assert!(rb.fully_executed);
            prop_assert_eq!(ra.executed_prefix_len, 3);
            prop_assert_eq!(&a.accounts, &b.accounts);
            prop_assert_eq!(ctx_a, ctx_b);
        }
    }
}
