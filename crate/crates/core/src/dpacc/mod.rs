//! Base DPACC transactions, prover bundles and the relayer side of the protocol.

mod wire;

use serde::{Deserialize, Serialize};

pub use wire::{BundleJson, WireError};

use crate::crypto::{
    prove_balance_pok, prove_prefix_pok, sign, tagged_hash, verify_prefix_pok, verify_sig,
    BalancePoK, Commitment, CryptoError, Digest, PoKVerdict, PrefixPoK, ProofSystem, Secret,
    SerialRegistry, Signature, TransparentBackend,
};
use crate::ledger::{
    decode_prefix, ChainState, CommitmentSubmission, Disposition, Instruction, LedgerError,
    RelayerId, RevealOutcome, RevealWindow, TokenVector, Transaction, TxError, WalletId,
};
use crate::wallet::SmartWallet;

const BUNDLE_SIG_TAG: &[u8] = b"dpacc/bundle/v1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DpaccError {
    #[error("payload may not contain a break-point")]
    PayloadBreakPoint,
    #[error("wallet holds no key for this serial")]
    UnknownSerial,
    #[error("mapped tokens do not cover fee plus collateral")]
    Ineligible,
    #[error("no serial in this wallet is committed to the transaction")]
    NotCommitted,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// `tx = tx1 || tx2` with `tx1 = [PayFee, Lock, BreakPoint]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseDpacc {
    tx: Transaction,
    pub relayer: RelayerId,
    pub fee: TokenVector,
    pub collateral: TokenVector,
}

pub fn make_base_dpacc(
    sender: WalletId,
    nonce: u64,
    relayer: RelayerId,
    fee: TokenVector,
    collateral: TokenVector,
    payload: Vec<Instruction>,
) -> Result<BaseDpacc, DpaccError> {
    if payload.iter().any(|i| matches!(i, Instruction::BreakPoint)) {
        return Err(DpaccError::PayloadBreakPoint);
    }
    let mut ins = vec![
        Instruction::PayFee {
            to: relayer,
            amount: fee.clone(),
        },
        Instruction::Lock {
            amount: collateral.clone(),
        },
        Instruction::BreakPoint,
    ];
    ins.extend(payload);
    Ok(BaseDpacc {
        tx: Transaction::new(sender, nonce, ins)?,
        relayer,
        fee,
        collateral,
    })
}

impl BaseDpacc {
    pub fn tx(&self) -> &Transaction {
        &self.tx
    }

    pub fn digest(&self) -> Digest {
        self.tx.digest()
    }

    pub fn payload(&self) -> &[Instruction] {
        &self.tx.instructions()[3..]
    }

    pub fn tx1_bytes(&self) -> Vec<u8> {
        self.tx
            .split_at_breakpoint()
            .expect("base DPACC has a break-point")
            .0
    }

    /// Tokens the committed wallet must hold: fee plus collateral.
    pub fn requirement(&self) -> TokenVector {
        self.fee
            .checked_add(&self.collateral)
            .expect("fee and collateral fit")
    }
}

/// What a prover hands a relayer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DpaccBundle {
    pub balance: BalancePoK,
    pub prefix: PrefixPoK,
    /// Signature over `h(tx)`, posted to `C_T` on inclusion.
    pub commit_sig: Signature,
    /// Signature over both proofs.
    pub bundle_sig: Signature,
}

fn bundle_message(balance: &BalancePoK, prefix: &PrefixPoK) -> Digest {
    tagged_hash(
        BUNDLE_SIG_TAG,
        &[&balance.fingerprint().0, &prefix.fingerprint().0],
    )
}

impl DpaccBundle {
    pub fn serial(&self) -> Secret {
        self.balance.serial()
    }

    pub fn target(&self) -> Digest {
        self.prefix.target()
    }
}

/// Builds the bundle for the commitment behind `serial` in `w`, proving
/// membership in `coms` (the snapshot of `W_b`).
pub fn build_bundle(
    w: &SmartWallet,
    serial: &Secret,
    dpacc: &BaseDpacc,
    coms: &[Commitment],
) -> Result<DpaccBundle, DpaccError> {
    let key = w.key(serial).ok_or(DpaccError::UnknownSerial)?;
    let mapped = w.mapped(&key.commitment).ok_or(DpaccError::UnknownSerial)?;
    if !dpacc.requirement().fits_within(mapped) {
        return Err(DpaccError::Ineligible);
    }
    let balance = prove_balance_pok(&key.randomness, serial, coms)?;
    let (tx1, tx2) = dpacc
        .tx
        .split_at_breakpoint()
        .expect("base DPACC has a break-point");
    let prefix = prove_prefix_pok(&tx1, &tx2, &dpacc.digest())?;
    let commit_sig = sign(&key.root_key, &dpacc.digest().0);
    let bundle_sig = sign(&key.root_key, &bundle_message(&balance, &prefix).0);
    Ok(DpaccBundle {
        balance,
        prefix,
        commit_sig,
        bundle_sig,
    })
}

/// Commitments in `chain` whose mapped tokens cover `threshold`, in wallet order.
pub fn eligible_commitments(chain: &ChainState, threshold: &TokenVector) -> Vec<Commitment> {
    chain
        .wallets()
        .flat_map(|w| {
            w.entries()
                .filter(|(_, e)| threshold.fits_within(&e.tokens))
                .map(|(c, _)| *c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayerPolicy {
    pub relayer: RelayerId,
    /// Who the tx1 fee must be paid to. Usually the relayer itself.
    pub payee: RelayerId,
    pub fee: TokenVector,
    pub min_collateral: TokenVector,
    /// Accumulator root over the eligible commitments.
    pub eligible_root: Digest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    #[error("serial already seen")]
    Duplicate,
    #[error("balance proof does not verify against the eligible set")]
    Balance,
    #[error("prefix proof does not verify or tx1 is not a base prefix")]
    Prefix,
    #[error("tx1 does not pay the required fee to this relayer")]
    Fee,
    #[error("tx1 locks less than the minimum collateral")]
    Collateral,
    #[error("signature does not verify under the revealed serial")]
    Signature,
}

impl RelayerPolicy {
    pub fn new(
        relayer: RelayerId,
        fee: TokenVector,
        min_collateral: TokenVector,
        eligible_root: Digest,
    ) -> Self {
        RelayerPolicy {
            relayer,
            payee: relayer,
            fee,
            min_collateral,
            eligible_root,
        }
    }
}

/// A bundle that passed every relayer check. Only `Relayer::verify` makes one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptedBundle {
    pub serial: Secret,
    pub digest: Digest,
    pub commit_sig: Signature,
    pub fee: TokenVector,
    pub collateral: TokenVector,
}

#[derive(Debug, Clone)]
pub struct Relayer {
    pub policy: RelayerPolicy,
    registry: SerialRegistry,
    backend: TransparentBackend,
}

impl Relayer {
    pub fn new(policy: RelayerPolicy) -> Self {
        Relayer {
            policy,
            registry: SerialRegistry::new(),
            backend: TransparentBackend,
        }
    }

    pub fn seen(&self) -> &SerialRegistry {
        &self.registry
    }

    /// Checks a bundle. The serial is recorded only when every check passes.
    pub fn verify(&mut self, bundle: &DpaccBundle) -> Result<AcceptedBundle, RejectReason> {
        let s = bundle.serial();
        if self.registry.contains(&s) {
            return Err(RejectReason::Duplicate);
        }
        let target = bundle.target();
        if !verify_sig(
            &s,
            &bundle_message(&bundle.balance, &bundle.prefix).0,
            &bundle.bundle_sig,
        ) || !verify_sig(&s, &target.0, &bundle.commit_sig)
        {
            return Err(RejectReason::Signature);
        }
        if !verify_prefix_pok(&bundle.prefix, &target) {
            return Err(RejectReason::Prefix);
        }
        let (fee, collateral) = match decode_prefix(bundle.prefix.prefix()).as_deref() {
            Ok(
                [Instruction::PayFee { to, amount }, Instruction::Lock { amount: c }, Instruction::BreakPoint],
            ) => {
                if *to != self.policy.payee || !self.policy.fee.fits_within(amount) {
                    return Err(RejectReason::Fee);
                }
                (amount.clone(), c.clone())
            }
            _ => return Err(RejectReason::Prefix),
        };
        if !self.policy.min_collateral.fits_within(&collateral) {
            return Err(RejectReason::Collateral);
        }
        match self.backend.verify_balance(
            &bundle.balance,
            &self.policy.eligible_root,
            &mut self.registry,
        ) {
            PoKVerdict::Accept => {}
            PoKVerdict::Duplicate => return Err(RejectReason::Duplicate),
            PoKVerdict::Reject => return Err(RejectReason::Balance),
        }
        Ok(AcceptedBundle {
            serial: s,
            digest: target,
            commit_sig: bundle.commit_sig,
            fee,
            collateral,
        })
    }

    /// Queues the commitment so it lands within Δ blocks. `target` lets the
    /// relayer aim for an earlier block.
    pub fn include(
        &self,
        chain: &mut ChainState,
        accepted: &AcceptedBundle,
        window: RevealWindow,
        disposition: Disposition,
        target: Option<u64>,
    ) -> Result<u64, DpaccError> {
        let sub = CommitmentSubmission {
            serial: accepted.serial,
            digest: accepted.digest,
            sig: accepted.commit_sig,
            relayer: self.policy.relayer,
            fee: accepted.fee.clone(),
            collateral: accepted.collateral.clone(),
            window,
            disposition,
        };
        Ok(chain.queue_commitment(sub, target)?)
    }
}

/// Reveals `tx` from wallet `w`, using whichever of its serials is committed to `h(tx)`.
pub fn reveal(
    chain: &mut ChainState,
    w: WalletId,
    tx: &Transaction,
) -> Result<RevealOutcome, DpaccError> {
    let wallet = chain.wallet(w).ok_or(LedgerError::UnknownWallet(w))?;
    let d = tx.digest();
    let serial = wallet
        .entries()
        .map(|(_, e)| e.serial)
        .find(|s| chain.ct().get(s) == d)
        .ok_or(DpaccError::NotCommitted)?;
    Ok(chain.reveal(&serial, tx)?)
}

pub fn timeout_collateral(chain: &mut ChainState, serial: &Secret) -> Result<(), DpaccError> {
    Ok(chain.timeout_collateral(serial)?)
}
