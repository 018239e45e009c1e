//! Protocols run on top of DPACC commitments: sealed-bid auctions, batch
//! auctions, the RFQ fee escalator, AMM order flow and liquidations.
//!
//! Every runner drives an existing [`ChainState`] block by block, so several
//! protocols can share one chain.

pub mod amm;
pub mod auction;
pub mod fba;
pub mod liquidation;
pub mod rfq;

use num_rational::BigRational;
use rand::Rng;

use crate::crypto::{
    build_accumulator, derive_serial, Commitment, CryptoError, Randomness, RootKey, Secret,
};
use crate::dpacc::{
    build_bundle, eligible_commitments, BaseDpacc, DpaccError, RejectReason, Relayer, RelayerPolicy,
};
use crate::ledger::{
    ChainState, Disposition, LedgerError, RelayerId, RevealWindow, TokenError, TokenVector,
    TxError, WalletId,
};
use amm::AmmError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("relayer rejected the bundle: {0}")]
    Rejected(#[from] RejectReason),
    #[error("position is healthy, liquidation refused")]
    Healthy,
    #[error("no eligible commitments to prove membership in")]
    EmptyAnonymitySet,
    #[error(transparent)]
    Dpacc(#[from] DpaccError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Amm(#[from] AmmError),
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error(transparent)]
    Token(#[from] TokenError),
}

/// A wallet with one fresh commitment mapped for a single protocol action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prover {
    pub wallet: WalletId,
    pub serial: Secret,
    pub commitment: Commitment,
}

/// Maps `tokens` from the wallet's residual under a freshly drawn key.
pub fn enroll<R: Rng + ?Sized>(
    chain: &mut ChainState,
    wallet: WalletId,
    tokens: TokenVector,
    rng: &mut R,
) -> Result<Prover, ProtocolError> {
    let key = RootKey::from_seed(rng.random());
    let serial = derive_serial(&key);
    let commitment = chain.map_secret(wallet, key, Randomness(rng.random()), tokens)?;
    Ok(Prover {
        wallet,
        serial,
        commitment,
    })
}

/// Snapshot of `W_b` for `fee + collateral` and a relayer that checks against it.
pub fn relayer_for(
    chain: &ChainState,
    relayer: RelayerId,
    fee: &TokenVector,
    min_collateral: &TokenVector,
) -> Result<(Relayer, Vec<Commitment>), ProtocolError> {
    let threshold = fee.checked_add(min_collateral).map_err(LedgerError::from)?;
    let coms = eligible_commitments(chain, &threshold);
    if coms.is_empty() {
        return Err(ProtocolError::EmptyAnonymitySet);
    }
    let root = build_accumulator(&coms)?.root;
    Ok((
        Relayer::new(RelayerPolicy::new(
            relayer,
            fee.clone(),
            min_collateral.clone(),
            root,
        )),
        coms,
    ))
}

/// Builds the prover's bundle, has the relayer check it and queues the
/// commitment. Returns the pending item id.
#[allow(clippy::too_many_arguments)]
pub fn submit(
    chain: &mut ChainState,
    relayer: &mut Relayer,
    prover: &Prover,
    dpacc: &BaseDpacc,
    coms: &[Commitment],
    window: RevealWindow,
    disposition: Disposition,
    target: Option<u64>,
) -> Result<u64, ProtocolError> {
    let w = chain
        .wallet(prover.wallet)
        .ok_or(LedgerError::UnknownWallet(prover.wallet))?;
    let bundle = build_bundle(w, &prover.serial, dpacc, coms)?;
    let accepted = relayer.verify(&bundle)?;
    Ok(relayer.include(chain, &accepted, window, disposition, target)?)
}

pub(crate) fn ser_ratio<S: serde::Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}
