//! Ledger-wide invariants: mixed-protocol conservation, `C_T` write-once
//! fuzzing and the Δ inclusion bound.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::collateral::{best_response_collateral, payoff_table, CollateralGame};
use super::config::ScenarioConfig;
use super::metrics::{MetricsReport, TrialRecord};
use super::scenarios::Trial;
use crate::crypto::{derive_serial, sign, Digest, Randomness, RootKey, Secret, Signature};
use crate::ledger::{
    ChainState, ContractId, Disposition, Instruction, LedgerError, RelayerId, SwapDirection,
    TokenVector, Transaction, WalletId,
};
use crate::market::{MarketMaker, PriceProcess};
use crate::protocols::amm::{run_amm_scenario, AmmMode, AmmOrder, AmmPool, AmmSetup};
use crate::protocols::auction::{
    run_sealed_bid_auction, AuctionConfig, AuctionSetup, Bidder, BidderAction, PricingRule,
};
use crate::protocols::fba::{run_fba, FbaOrder, FbaParticipant, FbaSetup, Side};
use crate::protocols::rfq::{run_rfq, RfqAction, RfqSetup, RfqSide};
use crate::protocols::ProtocolError;

const POOL: ContractId = ContractId(1);
const RELAYER: RelayerId = RelayerId(1);
const MMS: [RelayerId; 2] = [RelayerId(2), RelayerId(3)];

fn disposition(rng: &mut ChaCha8Rng) -> Disposition {
    if rng.random_bool(0.5) {
        Disposition::Burn
    } else {
        Disposition::Lock
    }
}

fn unit(n: usize, i: usize, a: u64) -> TokenVector {
    TokenVector::unit(n, i, a)
}

struct Mixed {
    chain: ChainState,
    wallets: Vec<WalletId>,
    next_contract: u32,
    steps: BTreeMap<&'static str, u64>,
    errors: Vec<String>,
}

impl Mixed {
    fn pick(&self, rng: &mut ChaCha8Rng, k: usize) -> Vec<WalletId> {
        let mut w = self.wallets.clone();
        w.shuffle(rng);
        w.truncate(k);
        w
    }

    fn contract(&mut self) -> ContractId {
        self.next_contract += 1;
        ContractId(self.next_contract)
    }

    fn note(&mut self, kind: &'static str, r: Result<(), ProtocolError>) {
        *self.steps.entry(kind).or_default() += 1;
        if let Err(e) = r {
            self.errors
                .push(format!("{kind} at block {}: {e}", self.chain.height()));
        }
    }

    fn auction(&mut self, rng: &mut ChaCha8Rng) -> Result<(), ProtocolError> {
        let n = self.chain.n_tokens();
        let d = self.chain.delta();
        let k = rng.random_range(2..=5.min(self.wallets.len() - 1));
        let mut who = self.pick(rng, k + 1);
        let seller = who.pop().unwrap();
        let bidders: Vec<Bidder> = who
            .into_iter()
            .map(|w| {
                let action = match rng.random_range(0..10) {
                    0..7 => BidderAction::Reveal,
                    7..9 => BidderAction::Withhold,
                    _ => BidderAction::Equivocate,
                };
                Bidder {
                    wallet: w,
                    bid: rng.random_range(1..=100),
                    action,
                }
            })
            .collect();
        let token = rng.random_range(0..n);
        let cfg = AuctionConfig {
            commit_window: rng.random_range(1..=d),
            reveal_window: rng.random_range(1..=d),
            pricing: if rng.random_bool(0.5) {
                PricingRule::FirstPrice
            } else {
                PricingRule::SecondPrice
            },
            item: "lot".into(),
            reserve: rng.random_range(0..20),
        };
        let setup = AuctionSetup {
            contract: self.contract(),
            relayer: RELAYER,
            token,
            fee: unit(n, token, rng.random_range(0..3)),
            collateral: unit(n, token, rng.random_range(0..6)),
            disposition: disposition(rng),
            seller: crate::ledger::Account::Wallet(seller),
            lot: None,
        };
        run_sealed_bid_auction(&mut self.chain, &cfg, &setup, &bidders, rng).map(|_| ())
    }

    fn fba(&mut self, rng: &mut ChaCha8Rng) -> Result<(), ProtocolError> {
        let n = self.chain.n_tokens();
        let k = rng.random_range(2..=4.min(self.wallets.len()));
        let parts: Vec<FbaParticipant> = self
            .pick(rng, k)
            .into_iter()
            .map(|w| {
                let qty = rng.random_range(1..=100);
                let side = if rng.random_bool(0.5) {
                    Side::BuyX
                } else {
                    Side::BuyY
                };
                let order =
                    FbaOrder::new(side, qty, qty * rng.random_range(90..=110)).expect("positive");
                let action = if rng.random_bool(0.9) {
                    BidderAction::Reveal
                } else {
                    BidderAction::Withhold
                };
                FbaParticipant {
                    wallet: w,
                    order,
                    action,
                }
            })
            .collect();
        let setup = FbaSetup {
            contract: self.contract(),
            relayer: RELAYER,
            x: 0,
            y: 1,
            fee: unit(n, 1, rng.random_range(0..3)),
            collateral: unit(n, 1, rng.random_range(0..6)),
            disposition: disposition(rng),
        };
        run_fba(&mut self.chain, &setup, &parts, rng).map(|_| ())
    }

    fn rfq(&mut self, rng: &mut ChaCha8Rng) -> Result<(), ProtocolError> {
        let n = self.chain.n_tokens();
        let d = self.chain.delta();
        let user = self.pick(rng, 1)[0];
        let k = rng.random_range(1..=MMS.len());
        let mms: Vec<MarketMaker> = MMS[..k]
            .iter()
            .map(|r| MarketMaker {
                id: r.0,
                latency: rng.random_range(0..=2),
                cost: unit(n, 1, rng.random_range(0..4)),
                valuation: BigRational::from_integer(BigInt::from(100)),
                inventory: TokenVector::zeros(n),
            })
            .collect();
        let setup = RfqSetup {
            venue: RELAYER,
            x: 0,
            y: 1,
            size: rng.random_range(1..=50),
            collateral: unit(n, 1, rng.random_range(0..6)),
            slope: rng.random_range(1..=2),
            disposition: disposition(rng),
        };
        let action = match rng.random_range(0..6) {
            0 => RfqAction::RevealLate,
            1 => RfqAction::Withhold,
            _ => RfqAction::Reveal {
                after: rng.random_range(0..=d),
            },
        };
        let side = if rng.random_bool(0.5) {
            RfqSide::SellX
        } else {
            RfqSide::BuyX
        };
        let eps = BigRational::new(BigInt::from(rng.random_range(95..=105)), BigInt::from(1));
        run_rfq(&mut self.chain, &setup, user, side, &eps, &mms, action, rng).map(|_| ())
    }

    fn amm(&mut self, rng: &mut ChaCha8Rng, step: &BigRational) -> Result<(), ProtocolError> {
        let n = self.chain.n_tokens();
        let who = self.pick(rng, 4);
        let k = rng.random_range(1..=2);
        let orders: Vec<AmmOrder> = who[2..2 + k]
            .iter()
            .map(|&w| {
                let direction = if rng.random_bool(0.5) {
                    SwapDirection::XForY
                } else {
                    SwapDirection::YForX
                };
                let amount_in = match direction {
                    SwapDirection::XForY => rng.random_range(1..=500),
                    SwapDirection::YForX => rng.random_range(100..=50_000),
                };
                AmmOrder {
                    user: w,
                    at: rng.random_range(0..=1),
                    direction,
                    amount_in,
                }
            })
            .collect();
        let mut p = PriceProcess::with_rng(
            self.chain.pool(POOL).unwrap().price(),
            step.clone(),
            ChaCha8Rng::seed_from_u64(rng.random()),
        )
        .map_err(|e| ProtocolError::Config(e.to_string()))?;
        let path = p.path(0, 3).into_iter().map(|(_, e)| e).collect::<Vec<_>>();
        let setup = AmmSetup {
            pool: POOL,
            relayer: RELAYER,
            producer: who[0],
            attacker: who[1],
            fee: unit(n, 1, rng.random_range(0..3)),
            collateral: unit(n, 1, rng.random_range(0..6)),
            disposition: disposition(rng),
            slippage: Ratio::new(rng.random_range(1..=5), 100),
        };
        let mode = if rng.random_bool(0.5) {
            AmmMode::Dpacc
        } else {
            AmmMode::Transparent
        };
        run_amm_scenario(&mut self.chain, &setup, &orders, &path, mode, rng).map(|_| ())
    }

    fn transfers(&mut self, rng: &mut ChaCha8Rng) -> Result<(), ProtocolError> {
        let n = self.chain.n_tokens();
        for _ in 0..rng.random_range(1..=4) {
            let pair = self.pick(rng, 2);
            let amount = unit(n, rng.random_range(0..n), rng.random_range(1..=1000));
            let tx = Transaction::new(
                pair[0],
                rng.random(),
                vec![Instruction::Send {
                    to: pair[1],
                    amount,
                }],
            )?;
            self.chain.submit_plain(&tx)?;
        }
        self.chain.advance_block();
        Ok(())
    }
}

/// One randomized run mixing every protocol on a single chain.
fn mixed_run(
    cfg: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
    events: bool,
) -> Result<(Mixed, u64), LedgerError> {
    let p = &cfg.invariants;
    let d = cfg.delta;
    let n = if cfg.wallets.is_empty() {
        rng.random_range(2..=p.max_tokens)
    } else {
        cfg.tokens
    };
    let mut chain = ChainState::new(n, d)?.with_events(events);
    let mut wallets = Vec::new();
    if cfg.wallets.is_empty() {
        for i in 0..rng.random_range(4..=p.max_wallets) {
            let bal: Vec<u64> = (0..n)
                .map(|_| rng.random_range(100_000..=10_000_000))
                .collect();
            chain.add_wallet(WalletId(i), TokenVector::new(bal))?;
            wallets.push(WalletId(i));
        }
    } else {
        for (i, w) in cfg.wallets.iter().enumerate() {
            chain.add_wallet(WalletId(i as u32), TokenVector::new(w.balance.clone()))?;
            wallets.push(WalletId(i as u32));
        }
    }
    chain.add_relayer(RELAYER, TokenVector::new(vec![1_000_000; n]))?;
    for r in MMS {
        chain.add_relayer(r, TokenVector::new(vec![1_000_000; n]))?;
    }
    let pool = AmmPool::new(0, 1, 1_000_000, 100_000_000, Ratio::new(3, 1000)).expect("valid pool");
    chain.add_pool(POOL, pool)?;
    let budget = rng.random_range(4 * d + 4..=p.max_blocks);
    Ok((
        Mixed {
            chain,
            wallets,
            next_contract: 100,
            steps: BTreeMap::new(),
            errors: Vec::new(),
        },
        budget,
    ))
}

/// Outcome of one `C_T` fuzz sequence.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct FuzzTally {
    pub ops: u64,
    /// `C_T` disagreed with the write-once model, or a rejected write changed it.
    pub write_once_violations: u64,
    pub mismatched_reveals: u64,
    /// Mismatched reveals that were accepted or changed state.
    pub reveal_violations: u64,
}

struct Key {
    seed: [u8; 32],
    serial: Secret,
    wallet: WalletId,
}

/// Random operations against `C_T` and the reveal path, compared with a
/// plain map that only ever gains keys.
pub fn fuzz_commitment_map(rng: &mut ChaCha8Rng, ops: u32) -> FuzzTally {
    let mut t = FuzzTally::default();
    let mut chain = ChainState::new(1, 2).expect("valid");
    for i in 0..3 {
        chain
            .add_wallet(WalletId(i), TokenVector::new(vec![1000]))
            .expect("fresh");
    }
    let mut keys: Vec<Key> = Vec::new();
    let mut model: BTreeMap<Secret, Digest> = BTreeMap::new();
    let mut txs: BTreeMap<Secret, Transaction> = BTreeMap::new();

    let send = |w: WalletId, nonce: u64, amount: u64| {
        Transaction::new(
            w,
            nonce,
            vec![Instruction::Send {
                to: WalletId((w.0 + 1) % 3),
                amount: TokenVector::new(vec![amount]),
            }],
        )
        .expect("no break-points")
    };

    for _ in 0..ops {
        t.ops += 1;
        let op = if keys.is_empty() {
            0
        } else {
            rng.random_range(0..7)
        };
        match op {
            0 => {
                let seed: [u8; 32] = rng.random();
                let wallet = WalletId(rng.random_range(0..3));
                let serial = derive_serial(&RootKey::from_seed(seed));
                if chain
                    .map_secret(
                        wallet,
                        RootKey::from_seed(seed),
                        Randomness(rng.random()),
                        TokenVector::new(vec![rng.random_range(1..=5)]),
                    )
                    .is_ok()
                {
                    keys.push(Key {
                        seed,
                        serial,
                        wallet,
                    });
                }
            }
            1 | 2 => {
                // Honest write: digest of a real transaction, signed under the key.
                let k = &keys[rng.random_range(0..keys.len())];
                let tx = send(k.wallet, rng.random(), rng.random_range(1..=3));
                let d = tx.digest();
                let sig = sign(&RootKey::from_seed(k.seed), &d.0);
                let before = chain.ct().get(&k.serial);
                let res = chain.submit_global_commitment(k.serial, d, &sig);
                let expect_ok = !model.contains_key(&k.serial);
                if res.is_ok() != expect_ok {
                    t.write_once_violations += 1;
                }
                if res.is_ok() {
                    model.insert(k.serial, d);
                    txs.insert(k.serial, tx);
                } else if chain.ct().get(&k.serial) != before {
                    t.write_once_violations += 1;
                }
            }
            3 => {
                // Forged signature or zero digest: always refused.
                let k = &keys[rng.random_range(0..keys.len())];
                let before = chain.ct().clone();
                let res = if rng.random_bool(0.5) {
                    chain.submit_global_commitment(
                        k.serial,
                        Digest(rng.random()),
                        &Signature([7; 64]),
                    )
                } else {
                    let sig = sign(&RootKey::from_seed(k.seed), &[0; 32]);
                    chain.submit_global_commitment(k.serial, Digest::ZERO, &sig)
                };
                if res.is_ok() || chain.ct() != &before {
                    t.write_once_violations += 1;
                }
            }
            4 | 5 => {
                // Reveal something other than what was committed.
                let k = &keys[rng.random_range(0..keys.len())];
                let tx = send(k.wallet, rng.random(), rng.random_range(1..=3));
                match model.get(&k.serial) {
                    Some(d) if *d != tx.digest() => {}
                    _ => continue,
                }
                t.mismatched_reveals += 1;
                let before = chain.clone();
                if chain.reveal(&k.serial, &tx).is_ok() || chain != before {
                    t.reveal_violations += 1;
                }
            }
            _ => {
                // Honest reveal of a committed transaction, or a block.
                let pending: Vec<&Secret> = txs.keys().collect();
                if pending.is_empty() || rng.random_bool(0.3) {
                    chain.advance_block();
                } else {
                    let s = *pending[rng.random_range(0..pending.len())];
                    let tx = txs.remove(&s).unwrap();
                    let _ = chain.reveal(&s, &tx);
                }
            }
        }
        if keys.iter().any(|k| {
            chain.ct().get(&k.serial) != model.get(&k.serial).copied().unwrap_or(Digest::ZERO)
        }) {
            t.write_once_violations += 1;
        }
    }
    t
}

pub(crate) fn invariants_trial(
    cfg: &ScenarioConfig,
    trial: u64,
    rng: &mut ChaCha8Rng,
    events: bool,
) -> Result<Trial, ProtocolError> {
    let d = cfg.delta;
    let (mut m, budget) = mixed_run(cfg, rng, events)?;
    let mut bad_blocks = 0u64;
    let mut wallet_breaks = 0u64;
    while m.chain.height() + 4 * d + 4 <= budget {
        let before = m.chain.violations();
        match rng.random_range(0..6) {
            0 => {
                let r = m.auction(rng);
                m.note("auction", r)
            }
            1 => {
                let r = m.fba(rng);
                m.note("fba", r)
            }
            2 => {
                let r = m.rfq(rng);
                m.note("rfq", r)
            }
            3 => {
                let r = m.amm(rng, &cfg.price_step.0);
                m.note("amm", r)
            }
            4 => {
                let r = m.transfers(rng);
                m.note("transfers", r)
            }
            _ => {
                for _ in 0..rng.random_range(1..=3) {
                    m.chain.advance_block();
                }
                m.note("idle", Ok(()))
            }
        }
        bad_blocks += m.chain.violations() - before;
        wallet_breaks += m.chain.wallets().filter(|w| !w.check_invariant()).count() as u64;
    }
    for _ in 0..=d {
        m.chain.advance_block();
    }
    let late = m
        .chain
        .inclusions()
        .iter()
        .filter(|i| i.included_at > i.submitted_at + d)
        .count();
    let all_included = m.chain.pending().next().is_none()
        && m.chain.inclusions().len() as u64 == m.chain.queued_count();

    let mut fuzz = FuzzTally::default();
    for _ in 0..cfg.invariants.fuzz_sequences {
        let f = fuzz_commitment_map(rng, cfg.invariants.fuzz_ops);
        fuzz.ops += f.ops;
        fuzz.write_once_violations += f.write_once_violations;
        fuzz.mismatched_reveals += f.mismatched_reveals;
        fuzz.reveal_violations += f.reveal_violations;
    }

    let mut r = TrialRecord::new(trial);
    r.set("tokens", m.chain.n_tokens() as u64);
    r.set("wallets", m.wallets.len() as u64);
    r.set("blocks", m.chain.height());
    r.set(
        "within_block_budget",
        m.chain.height() <= cfg.invariants.max_blocks,
    );
    for (k, v) in &m.steps {
        r.set(&format!("steps_{k}"), *v);
    }
    r.set("unbalanced_blocks", bad_blocks);
    r.set("wallet_invariant_ok", wallet_breaks == 0);
    r.set("protocol_errors", m.errors.len() as u64);
    if let Some(e) = m.errors.first() {
        r.set("first_error", e.clone());
    }
    r.set("commitments", m.chain.queued_count());
    r.set("late_inclusions", late as u64);
    r.set("inclusion_ok", late == 0 && all_included);
    r.set("fuzz_sequences", cfg.invariants.fuzz_sequences);
    r.set("fuzz_write_once_violations", fuzz.write_once_violations);
    r.set("fuzz_mismatched_reveals", fuzz.mismatched_reveals);
    r.set("fuzz_reveal_violations", fuzz.reveal_violations);
    r.set(
        "fuzz_ok",
        fuzz.write_once_violations == 0 && fuzz.reveal_violations == 0,
    );
    let ok = m.chain.check_conservation() && m.chain.violations() == 0;
    r.set("conservation", ok);
    Ok(Trial {
        record: r,
        events: events.then(|| m.chain.events().to_ndjson()),
    })
}

/// Lock costs at which the collateral best response is checked.
pub fn lock_costs() -> Vec<BigRational> {
    [(1, 1000), (1, 100), (1, 10), (1, 1)]
        .iter()
        .map(|&(a, b)| BigRational::new(BigInt::from(a), BigInt::from(b)))
        .collect()
}

pub fn collateral_game(cfg: &ScenarioConfig, lock_cost: BigRational) -> CollateralGame {
    let min = cfg.relayer.min_collateral;
    CollateralGame {
        grid: (0..=min.max(10)).collect(),
        policy_min: min,
        lock_cost,
        fee: cfg.relayer.fee,
        price: 20,
        surplus: 100,
        delta: cfg.delta,
        disposition: Disposition::Burn,
    }
}

pub(crate) fn invariants_report(report: &mut MetricsReport, cfg: &ScenarioConfig) {
    report.aggregate("blocks");
    report.aggregate("commitments");
    report.aggregate("protocol_errors");
    let unbalanced: f64 = report
        .records
        .iter()
        .filter_map(|r| r.num("unbalanced_blocks"))
        .sum();
    report.check(
        "every block balances",
        unbalanced == 0.0,
        format!("{unbalanced} unbalanced blocks"),
    );
    report.check_all("wallet partitions stay disjoint", "wallet_invariant_ok");
    report.check_all("runs stay within the block budget", "within_block_budget");
    report.check_all("every accepted bundle is included within Δ", "inclusion_ok");
    report.check_all(
        "C_T is write-once and mismatched reveals abort cleanly",
        "fuzz_ok",
    );
    let errors: f64 = report
        .records
        .iter()
        .filter_map(|r| r.num("protocol_errors"))
        .sum();
    report.check(
        "mixed runs complete without protocol errors",
        errors == 0.0,
        format!("{errors} errors"),
    );

    let mut ok = true;
    let mut detail = Vec::new();
    for cost in lock_costs() {
        let game = collateral_game(cfg, cost.clone());
        let br = best_response_collateral(&game, cfg.seed);
        let dominance = payoff_table(&game, cfg.seed).map(|t| {
            t.iter()
                .filter(|r| r.eligible && r.collateral > 0)
                .all(|r| {
                    r.reveal.clone().unwrap()
                        >= r.withhold.clone().unwrap() + BigInt::from(r.collateral)
                })
        });
        let good = br.as_ref().ok() == Some(&game.policy_min) && dominance.unwrap_or(false);
        ok &= good;
        detail.push(format!("cost {cost}: best response {br:?}"));
    }
    report.check(
        "collateral best response is the policy minimum",
        ok,
        detail.join("; "),
    );
}
