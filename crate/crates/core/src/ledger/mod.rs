//! Token model, transactions, the chain simulator and its execution engine.

mod chain;
mod events;
mod exec;
mod tokens;
mod tx;

pub use chain::{
    BidRecord, ChainState, CommitmentRecord, CommitmentStatus, CommitmentSubmission, Disposition,
    Escrow, GlobalCommitmentMap, InclusionRecord, LedgerError, PendingItem, RevealOutcome,
    RevealRecord, RevealWindow, RfqEscrow,
};
pub use events::{Account, Effect, Event, EventLog};
pub use exec::{ExecEnv, ExecError, ExecResult};
pub use tokens::{ContractId, RelayerId, TokenError, TokenVector, WalletId};
pub use tx::{
    decode_prefix, tx_digest_of_bytes, FeeSchedule, Instruction, SwapDirection, Transaction,
    TxError, TX_DIGEST_TAG,
};
