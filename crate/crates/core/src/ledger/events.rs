use serde::Serialize;

use super::{ContractId, RelayerId, TokenVector, WalletId};
use crate::crypto::{Digest, Secret};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum Account {
    Wallet(WalletId),
    Relayer(RelayerId),
    Contract(ContractId),
    Burn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "effect")]
pub enum Effect {
    Minted {
        to: Account,
        amount: TokenVector,
    },
    CommitmentQueued {
        serial: Secret,
        relayer: RelayerId,
        deadline: u64,
    },
    CommitmentIncluded {
        serial: Secret,
        relayer: RelayerId,
        submitted_at: u64,
    },
    InclusionFailed {
        serial: Secret,
        reason: String,
    },
    Executed {
        sender: WalletId,
        prefix_len: usize,
        full: bool,
    },
    Transfer {
        from: Account,
        to: Account,
        amount: TokenVector,
    },
    Swap {
        pool: ContractId,
        amount_in: u64,
        amount_out: u64,
    },
    Burned {
        from: Account,
        amount: TokenVector,
    },
    Frozen {
        wallet: WalletId,
        amount: TokenVector,
    },
    TimedOut {
        serial: Secret,
    },
    LateReveal {
        serial: Secret,
    },
    EscrowPosted {
        serial: Secret,
        relayer: RelayerId,
        amount: TokenVector,
    },
    EscrowReclaimed {
        serial: Secret,
        relayer: RelayerId,
        amount: TokenVector,
    },
    ConservationViolated {
        expected: TokenVector,
        found: TokenVector,
    },
}

/// One line of the chain log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    pub block: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx: Option<Digest>,
    #[serde(flatten)]
    pub effect: Effect,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    enabled: bool,
    events: Vec<Event>,
}

impl EventLog {
    pub fn new(enabled: bool) -> Self {
        EventLog {
            enabled,
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, block: u64, tx: Option<Digest>, effect: Effect) {
        if self.enabled {
            self.events.push(Event { block, tx, effect });
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }
}
