//! Seeded Monte-Carlo runs over the protocols, with per-trial records and
//! an aggregate report.

pub mod collateral;
pub mod config;
pub mod invariants;
pub mod metrics;
mod scenarios;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use collateral::{best_response_collateral, payoff_table, CollateralGame, PayoffRow};
pub use config::{load_config, load_config_with_seed, ConfigError, Protocol, Rat, ScenarioConfig};
pub use invariants::{fuzz_commitment_map, FuzzTally};
pub use metrics::{Aggregate, Check, MetricsReport, TrialRecord};

use crate::protocols::ProtocolError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("collateral grid is empty")]
    EmptyGrid,
    #[error("trial {trial}: {message}")]
    Trial { trial: u64, message: String },
}

/// Independent stream for one trial. Results do not depend on thread count
/// or scheduling.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub report: MetricsReport,
    /// Ledger events of trial 0 as NDJSON.
    pub events: String,
}

type TrialFn =
    fn(&ScenarioConfig, u64, &mut ChaCha8Rng, bool) -> Result<scenarios::Trial, ProtocolError>;

/// Runs `cfg.trials` trials of `protocol` in parallel and aggregates them.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    protocol: Protocol,
) -> Result<ScenarioOutput, HarnessError> {
    let errors = cfg.validate();
    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors).into());
    }
    let run: TrialFn = match protocol {
        Protocol::Auction => scenarios::auction_trial,
        Protocol::Fba => scenarios::fba_trial,
        Protocol::Rfq => scenarios::rfq_trial,
        Protocol::Amm => scenarios::amm_trial,
        Protocol::Liquidation => scenarios::liquidation_trial,
        Protocol::Invariants => invariants::invariants_trial,
    };
    let trials: Vec<scenarios::Trial> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t);
            run(cfg, t, &mut rng, t == 0).map_err(|e| HarnessError::Trial {
                trial: t,
                message: e.to_string(),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut events = String::new();
    let mut records = Vec::with_capacity(trials.len());
    for t in trials {
        if let Some(e) = t.events {
            events = e;
        }
        records.push(t.record);
    }
    let mut report = MetricsReport::new(protocol.name(), cfg.seed, records);
    match protocol {
        Protocol::Auction => scenarios::auction_report(&mut report),
        Protocol::Fba => scenarios::fba_report(&mut report, cfg),
        Protocol::Rfq => scenarios::rfq_report(&mut report, cfg),
        Protocol::Amm => scenarios::amm_report(&mut report),
        Protocol::Liquidation => scenarios::liquidation_report(&mut report),
        Protocol::Invariants => invariants::invariants_report(&mut report, cfg),
    }
    report.finish();
    Ok(ScenarioOutput { report, events })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64, trials: u64) -> ScenarioConfig {
        let mut c = ScenarioConfig::with_seed(seed);
        c.trials = trials;
        c
    }

    #[test]
    fn same_seed_same_report() {
        for p in [
            Protocol::Auction,
            Protocol::Fba,
            Protocol::Rfq,
            Protocol::Amm,
        ] {
            let a = run_scenario(&cfg(11, 6), p).unwrap();
            let b = run_scenario(&cfg(11, 6), p).unwrap();
            assert_eq!(a.report.to_json(), b.report.to_json(), "{p:?}");
            assert_eq!(a.events, b.events);
            assert!(!a.events.is_empty());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = run_scenario(&cfg(1, 4), Protocol::Auction).unwrap();
        let b = run_scenario(&cfg(2, 4), Protocol::Auction).unwrap();
        assert_ne!(a.report.records, b.report.records);
    }

    #[test]
    fn invalid_config_is_refused() {
        let mut c = cfg(1, 1);
        c.delta = 0;
        assert!(matches!(
            run_scenario(&c, Protocol::Auction),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn protocols_pass_on_defaults() {
        for p in [
            Protocol::Auction,
            Protocol::Fba,
            Protocol::Rfq,
            Protocol::Amm,
            Protocol::Liquidation,
        ] {
            let out = run_scenario(&cfg(7, 40), p).unwrap_or_else(|e| panic!("{p:?}: {e}"));
            assert!(out.report.passed(), "{}", out.report.to_json());
        }
    }
}
