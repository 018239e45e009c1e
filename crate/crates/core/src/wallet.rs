//! Smart contract wallets: the secret commitment mapping and the reveal rules
//! that bind spending to the global transaction commitment mapping.
//!
//! Tokens of one type are fungible, so a "set of tokens" is an amount vector
//! and disjointness of mapped sets becomes additivity:
//!
//! ```text
//! residual + Σ mapped + open + frozen == balance
//! ```
//!
//! `residual` is the entry of the zero commitment. `open` holds tokens
//! released by a reveal for the duration of one transaction; `frozen` holds
//! tokens that can never be spent again.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::crypto::{commit, derive_serial, Commitment, Digest, Randomness, RootKey, Secret};
use crate::ledger::{GlobalCommitmentMap, TokenError, TokenVector, Transaction, WalletId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WalletError {
    #[error("requested tokens exceed the unmapped residual")]
    InsufficientResidual,
    #[error("serial already used by this wallet")]
    DuplicateSerial,
    #[error("no live commitment for this serial")]
    UnknownSerial,
    #[error("transaction sender {0} is not this wallet")]
    WrongSender(WalletId),
    #[error("C_T entry for this serial commits to a different transaction")]
    DigestMismatch,
    #[error("spend context belongs to another wallet")]
    ForeignContext,
    #[error(transparent)]
    Token(#[from] TokenError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MappedEntry {
    pub serial: Secret,
    pub tokens: TokenVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyEntry {
    pub root_key: RootKey,
    pub randomness: Randomness,
    pub commitment: Commitment,
}

/// Authorization for one transaction, produced by a reveal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpendContext {
    pub wallet: WalletId,
    pub authorized: TokenVector,
    /// Authorized tokens neither spent nor locked so far.
    pub available: TokenVector,
    pub locked: TokenVector,
    pub serial: Option<Secret>,
    /// `C_T(S)` at reveal time; zero when nothing was committed.
    pub committed: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SmartWallet {
    id: WalletId,
    balance: TokenVector,
    residual: TokenVector,
    secrets: BTreeMap<Commitment, MappedEntry>,
    open: TokenVector,
    frozen: TokenVector,
    #[serde(skip)]
    keys: BTreeMap<Secret, KeyEntry>,
}

pub fn new_wallet(id: WalletId, initial: TokenVector) -> SmartWallet {
    let n = initial.dim();
    SmartWallet {
        id,
        balance: initial.clone(),
        residual: initial,
        secrets: BTreeMap::new(),
        open: TokenVector::zeros(n),
        frozen: TokenVector::zeros(n),
        keys: BTreeMap::new(),
    }
}

impl SmartWallet {
    pub fn id(&self) -> WalletId {
        self.id
    }

    pub fn balance(&self) -> &TokenVector {
        &self.balance
    }

    /// Tokens mapped from the zero commitment.
    pub fn residual(&self) -> &TokenVector {
        &self.residual
    }

    pub fn frozen(&self) -> &TokenVector {
        &self.frozen
    }

    pub fn open(&self) -> &TokenVector {
        &self.open
    }

    pub fn mapped(&self, com: &Commitment) -> Option<&TokenVector> {
        self.secrets.get(com).map(|e| &e.tokens)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Commitment, &MappedEntry)> {
        self.secrets.iter()
    }

    pub fn commitment_for(&self, serial: &Secret) -> Option<Commitment> {
        self.keys.get(serial).map(|k| k.commitment)
    }

    pub fn key(&self, serial: &Secret) -> Option<&KeyEntry> {
        self.keys.get(serial)
    }

    pub fn is_live(&self, serial: &Secret) -> bool {
        self.commitment_for(serial)
            .is_some_and(|c| self.secrets.contains_key(&c))
    }

    /// Disjointness in vector form.
    pub fn check_invariant(&self) -> bool {
        let n = self.balance.dim();
        let parts = std::iter::once(&self.residual)
            .chain(self.secrets.values().map(|e| &e.tokens))
            .chain([&self.open, &self.frozen]);
        TokenVector::sum(n, parts).is_ok_and(|s| s == self.balance)
    }

    pub fn add_secret_mapping(
        &mut self,
        root_key: RootKey,
        r: Randomness,
        tokens: TokenVector,
    ) -> Result<Commitment, WalletError> {
        let serial = derive_serial(&root_key);
        if self.keys.contains_key(&serial) {
            return Err(WalletError::DuplicateSerial);
        }
        if !tokens.fits_within(&self.residual) {
            return Err(WalletError::InsufficientResidual);
        }
        let com = commit(&serial, &r);
        self.residual.sub_assign(&tokens)?;
        self.secrets.insert(com, MappedEntry { serial, tokens });
        self.keys.insert(
            serial,
            KeyEntry {
                root_key,
                randomness: r,
                commitment: com,
            },
        );
        Ok(com)
    }

    /// Opens the commitment behind `serial` for `tx`, or aborts with no state change.
    pub fn reveal_and_restrict(
        &mut self,
        serial: &Secret,
        tx: &Transaction,
        ct: &GlobalCommitmentMap,
    ) -> Result<SpendContext, WalletError> {
        if tx.sender != self.id {
            return Err(WalletError::WrongSender(tx.sender));
        }
        let com = self
            .commitment_for(serial)
            .ok_or(WalletError::UnknownSerial)?;
        if !self.secrets.contains_key(&com) {
            return Err(WalletError::UnknownSerial);
        }
        let committed = ct.get(serial);
        if !committed.is_zero() && committed != tx.digest() {
            return Err(WalletError::DigestMismatch);
        }
        let entry = self.secrets.remove(&com).expect("checked above");
        self.open.add_assign(&entry.tokens)?;
        Ok(SpendContext {
            wallet: self.id,
            available: entry.tokens.clone(),
            authorized: entry.tokens,
            locked: TokenVector::zeros(self.balance.dim()),
            serial: Some(*serial),
            committed,
        })
    }

    /// Spend from the zero commitment: no serial is revealed and nothing was committed.
    pub fn open_residual(&mut self, tx: &Transaction) -> Result<SpendContext, WalletError> {
        if tx.sender != self.id {
            return Err(WalletError::WrongSender(tx.sender));
        }
        let tokens = std::mem::replace(&mut self.residual, TokenVector::zeros(self.balance.dim()));
        self.open.add_assign(&tokens)?;
        Ok(SpendContext {
            wallet: self.id,
            available: tokens.clone(),
            authorized: tokens,
            locked: TokenVector::zeros(self.balance.dim()),
            serial: None,
            committed: Digest::ZERO,
        })
    }

    /// Returns every token still open after a transaction to the zero commitment.
    pub fn remap_defaults(&mut self, ctx: &SpendContext) -> Result<(), WalletError> {
        if ctx.wallet != self.id {
            return Err(WalletError::ForeignContext);
        }
        let open = std::mem::replace(&mut self.open, TokenVector::zeros(self.balance.dim()));
        self.residual.add_assign(&open)?;
        Ok(())
    }

    pub(crate) fn debit_open(&mut self, amount: &TokenVector) -> Result<(), TokenError> {
        let open = self.open.checked_sub(amount)?;
        let balance = self.balance.checked_sub(amount)?;
        self.open = open;
        self.balance = balance;
        Ok(())
    }

    pub(crate) fn credit_residual(&mut self, amount: &TokenVector) -> Result<(), TokenError> {
        let residual = self.residual.checked_add(amount)?;
        let balance = self.balance.checked_add(amount)?;
        self.residual = residual;
        self.balance = balance;
        Ok(())
    }

    pub(crate) fn freeze_open(&mut self, amount: &TokenVector) -> Result<(), TokenError> {
        let open = self.open.checked_sub(amount)?;
        self.frozen.add_assign(amount)?;
        self.open = open;
        Ok(())
    }

    /// Removes `amount` from a still-mapped commitment; the entry is dropped
    /// and its remainder returned to the zero commitment when `release_rest`.
    pub(crate) fn take_from_mapped(
        &mut self,
        com: &Commitment,
        amount: &TokenVector,
        release_rest: bool,
    ) -> Result<(), WalletError> {
        let entry = self.secrets.get(com).ok_or(WalletError::UnknownSerial)?;
        let rest = entry.tokens.checked_sub(amount)?;
        let balance = self.balance.checked_sub(amount)?;
        self.balance = balance;
        if release_rest {
            self.secrets.remove(com);
            self.residual.add_assign(&rest)?;
        } else {
            self.secrets.get_mut(com).unwrap().tokens = rest;
        }
        Ok(())
    }
}
