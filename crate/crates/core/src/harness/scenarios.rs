//! One Monte Carlo trial per protocol, plus the checks run over all trials.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Rat, ScenarioConfig};
use super::metrics::{MetricsReport, TrialRecord};
use crate::ledger::{
    Account, ChainState, ContractId, Disposition, RelayerId, SwapDirection, TokenVector, WalletId,
};
use crate::market::{to_f64, MarketMaker, PriceProcess};
use crate::protocols::amm::{run_amm_scenario, AmmMode, AmmOrder, AmmPool, AmmSetup};
use crate::protocols::auction::{
    run_sealed_bid_auction, AuctionConfig, AuctionSetup, Bidder, BidderAction, PricingRule,
};
use crate::protocols::fba::{run_fba, BatchStatus, FbaOrder, FbaParticipant, FbaSetup, Side};
use crate::protocols::liquidation::{
    open_vault, run_liquidation, BidRule, LiquidationBidder, LiquidationPosition, LiquidationSetup,
};
use crate::protocols::rfq::{run_rfq, RfqAction, RfqOutcome, RfqSetup, RfqSide};
use crate::protocols::ProtocolError;

pub(crate) const X: usize = 0;
pub(crate) const Y: usize = 1;

pub(crate) struct Trial {
    pub record: TrialRecord,
    pub events: Option<String>,
}

pub(crate) fn y_amount(n: usize, amount: u64) -> TokenVector {
    TokenVector::unit(n, Y, amount)
}

fn xy(n: usize, x: u64, y: u64) -> TokenVector {
    let mut v = vec![0; n];
    v[X] = x;
    v[Y] = y;
    TokenVector::new(v)
}

fn ceil_u64(r: &BigRational) -> u64 {
    r.ceil().to_integer().to_u64().unwrap_or(u64::MAX)
}

fn floor_u64(r: &BigRational) -> u64 {
    r.floor().to_integer().to_u64().unwrap_or(0)
}

fn ratio_u64(r: &Rat) -> Ratio<u64> {
    Ratio::new(
        r.0.numer().to_u64().unwrap_or(0),
        r.0.denom().to_u64().unwrap_or(1),
    )
}

fn finish_trial(chain: &mut ChainState, mut record: TrialRecord, events: bool) -> Trial {
    let ok = chain.check_conservation() && chain.violations() == 0;
    record.set("conservation", ok);
    Trial {
        record,
        events: events.then(|| chain.events().to_ndjson()),
    }
}

/// Highest revealed bid at or above the reserve, earliest on ties, with the
/// price under `rule`. Written without reference to the settlement code.
fn auction_oracle(
    revealed: &[(usize, u64)],
    rule: PricingRule,
    reserve: u64,
) -> Option<(usize, u64)> {
    let top = revealed
        .iter()
        .filter(|(_, b)| *b >= reserve)
        .map(|(_, b)| *b)
        .max()?;
    let winner = revealed.iter().find(|(_, b)| *b == top).unwrap().0;
    let price = match rule {
        PricingRule::FirstPrice => top,
        PricingRule::SecondPrice => {
            let mut rest: Vec<u64> = revealed
                .iter()
                .filter(|(i, b)| *i != winner && *b >= reserve)
                .map(|(_, b)| *b)
                .collect();
            rest.sort_unstable();
            rest.pop().unwrap_or(reserve)
        }
    };
    Some((winner, price))
}

fn auction_chain(
    cfg: &ScenarioConfig,
    k: usize,
    events: bool,
) -> Result<ChainState, ProtocolError> {
    let n = cfg.tokens;
    let mut c = ChainState::new(n, cfg.delta)?.with_events(events);
    let need = cfg.auction.max_bid + cfg.relayer.fee + cfg.relayer.min_collateral;
    for i in 0..k {
        c.add_wallet(WalletId(i as u32), y_amount(n, need + 10))?;
    }
    c.add_wallet(WalletId(999), TokenVector::zeros(n))?;
    c.add_relayer(RelayerId(1), TokenVector::zeros(n))?;
    Ok(c)
}

pub(crate) fn auction_trial(
    cfg: &ScenarioConfig,
    trial: u64,
    rng: &mut ChaCha8Rng,
    events: bool,
) -> Result<Trial, ProtocolError> {
    let a = &cfg.auction;
    let n = cfg.tokens;
    let k = rng.random_range(a.min_bidders..=a.max_bidders) as usize;
    let (pw, pe) = (to_f64(&a.withhold.0), to_f64(&a.equivocate.0));
    let bidders: Vec<Bidder> = (0..k)
        .map(|i| {
            let bid = rng.random_range(1..=a.max_bid);
            let u: f64 = rng.random();
            let action = if u < pw {
                BidderAction::Withhold
            } else if u < pw + pe {
                BidderAction::Equivocate
            } else {
                BidderAction::Reveal
            };
            Bidder {
                wallet: WalletId(i as u32),
                bid,
                action,
            }
        })
        .collect();
    let acfg = AuctionConfig {
        commit_window: a.commit_window.unwrap_or(cfg.delta),
        reveal_window: a.reveal_window.unwrap_or(cfg.delta),
        pricing: a.pricing,
        item: "lot".into(),
        reserve: a.reserve,
    };
    let setup = AuctionSetup {
        contract: ContractId(7),
        relayer: RelayerId(1),
        token: Y,
        fee: y_amount(n, cfg.relayer.fee),
        collateral: y_amount(n, cfg.relayer.min_collateral),
        disposition: cfg.disposition,
        seller: Account::Wallet(WalletId(999)),
        lot: None,
    };
    let flip = rng.random_range(0..k);
    let run_rng = rng.clone();

    let mut chain = auction_chain(cfg, k, events)?;
    let res = run_sealed_bid_auction(&mut chain, &acfg, &setup, &bidders, &mut run_rng.clone())?;

    let revealed: Vec<(usize, u64)> = bidders
        .iter()
        .enumerate()
        .filter(|(_, b)| b.action == BidderAction::Reveal)
        .map(|(i, b)| (i, b.bid))
        .collect();
    let oracle = auction_oracle(&revealed, a.pricing, a.reserve);
    let got = res.winner.map(|w| (w.0 as usize, res.price));
    let forfeit_exact = res.bidders.iter().filter(|o| !o.revealed).all(|o| {
        let expect = match cfg.disposition {
            Disposition::Burn => setup.collateral.clone(),
            Disposition::Lock => setup
                .fee
                .checked_add(&setup.collateral)
                .unwrap()
                .checked_add(&y_amount(n, o.bid))
                .unwrap(),
        };
        o.forfeited == expect
    });
    let equivocators = bidders
        .iter()
        .filter(|b| b.action == BidderAction::Equivocate)
        .count() as u64;

    // Same trial with bidder `flip` taking the other action.
    let mut alt = bidders.clone();
    alt[flip].action = if bidders[flip].action == BidderAction::Reveal {
        BidderAction::Withhold
    } else {
        BidderAction::Reveal
    };
    let mut alt_chain = auction_chain(cfg, k, false)?;
    let alt_res =
        run_sealed_bid_auction(&mut alt_chain, &acfg, &setup, &alt, &mut run_rng.clone())?;
    let value = bidders[flip].bid;
    let (mine, theirs) = (
        res.bidders[flip].payoff(value, Y),
        alt_res.bidders[flip].payoff(value, Y),
    );
    let (reveal_payoff, withhold_payoff) = if bidders[flip].action == BidderAction::Reveal {
        (mine, theirs)
    } else {
        (theirs, mine)
    };
    let c = cfg.relayer.min_collateral as i128;

    let mut r = TrialRecord::new(trial);
    r.set("bidders", k as u64);
    r.set("revealed", revealed.len() as u64);
    r.set("winner", res.winner.map(|w| w.0));
    r.set("price", res.price);
    r.set("burned", res.burned.get(Y));
    r.set("oracle_match", got == oracle);
    r.set("forfeit_exact", forfeit_exact);
    r.set("binding", res.aborted_reveals == equivocators);
    r.set("reveal_payoff", reveal_payoff as f64);
    r.set("withhold_payoff", withhold_payoff as f64);
    r.set(
        "reveal_dominates",
        reveal_payoff >= withhold_payoff + c && (c == 0 || reveal_payoff > withhold_payoff),
    );
    let alt_ok = alt_chain.check_conservation() && alt_chain.violations() == 0;
    let mut t = finish_trial(&mut chain, r, events);
    if !alt_ok {
        t.record.set("conservation", false);
    }
    Ok(t)
}

pub(crate) fn auction_report(report: &mut MetricsReport) {
    report.aggregate("price");
    report.aggregate("revealed");
    report.check_all(
        "auction settlement matches the brute-force oracle",
        "oracle_match",
    );
    report.check_all(
        "non-revealing bidders forfeit exactly their collateral",
        "forfeit_exact",
    );
    report.check_all("mismatched reveals are aborted", "binding");
    report.check_all(
        "revealing beats withholding by at least the collateral",
        "reveal_dominates",
    );
}

pub(crate) fn fba_trial(
    cfg: &ScenarioConfig,
    trial: u64,
    rng: &mut ChaCha8Rng,
    events: bool,
) -> Result<Trial, ProtocolError> {
    let f = &cfg.fba;
    let n = cfg.tokens;
    let eps = &cfg.initial_price.0;
    let q = f.maker_qty;
    let noise = f.noise_permille as i64;
    let fee_coll = cfg.relayer.fee + cfg.relayer.min_collateral;

    let mut chain = ChainState::new(n, cfg.delta)?.with_events(events);
    chain.add_relayer(RelayerId(1), TokenVector::zeros(n))?;
    let mut parts = Vec::new();
    let max_limit = eps * BigInt::from(2 * q);
    for i in 0..f.makers {
        let e = rng.random_range(-noise..=noise);
        let v_y = floor_u64(&(eps * BigInt::from(q) * BigInt::from(1000 + e) / BigInt::from(1000)));
        let w = WalletId(i);
        chain.add_wallet(w, xy(n, q + 1, ceil_u64(&max_limit) + 2 * fee_coll + 1))?;
        for side in [Side::BuyX, Side::BuyY] {
            parts.push(FbaParticipant {
                wallet: w,
                order: FbaOrder::new(side, q, v_y).expect("positive"),
                action: BidderAction::Reveal,
            });
        }
    }
    let user = WalletId(f.makers);
    let side = if rng.random_bool(0.5) {
        Side::BuyX
    } else {
        Side::BuyY
    };
    let qty = rng.random_range(1..=f.max_user_qty);
    let limit = match side {
        Side::BuyX => eps * BigInt::from(2),
        Side::BuyY => eps / BigInt::from(2),
    };
    let v_y = floor_u64(&(limit * BigInt::from(qty))).max(1);
    chain.add_wallet(user, xy(n, qty, v_y + fee_coll))?;
    parts.push(FbaParticipant {
        wallet: user,
        order: FbaOrder::new(side, qty, v_y).expect("positive"),
        action: BidderAction::Reveal,
    });

    let setup = FbaSetup {
        contract: ContractId(7),
        relayer: RelayerId(1),
        x: X,
        y: Y,
        fee: y_amount(n, cfg.relayer.fee),
        collateral: y_amount(n, cfg.relayer.min_collateral),
        disposition: cfg.disposition,
    };
    let res = run_fba(&mut chain, &setup, &parts, rng)?;

    let mut r = TrialRecord::new(trial);
    r.set("user_side", if side == Side::BuyX { "buy" } else { "sell" });
    r.set("user_qty", qty);
    r.set("settled", res.status == BatchStatus::Settled);
    r.set("batch_blocks", res.blocks());
    r.set("two_delta", res.blocks() == 2 * cfg.delta);
    if let Some(c) = &res.clearing {
        r.set("volume", c.volume);
        if let Some(p) = &c.price {
            r.set("clearing_price", p.to_string());
        }
    }
    let user_fill = res.fills.iter().find(|f| f.wallet == user && f.x > 0);
    if let (Some(fill), Some(p)) = (
        user_fill,
        res.clearing.as_ref().and_then(|c| c.price.as_ref()),
    ) {
        r.set("user_fill_x", fill.x);
        r.set("user_fill_y", fill.y);
        r.set("user_price", to_f64(p));
        r.set("user_price_gap", to_f64(&(p - eps)));
    }
    Ok(finish_trial(&mut chain, r, events))
}

pub(crate) fn fba_report(report: &mut MetricsReport, cfg: &ScenarioConfig) {
    report.aggregate("volume");
    report.aggregate("user_fill_x");
    let p = report.aggregate("user_price");
    let eps = to_f64(&cfg.initial_price.0);
    let gap = (p.mean - eps).abs();
    report.check(
        "user execution price within 3 SE of ε",
        p.n > 0 && gap <= 3.0 * p.se,
        format!(
            "mean {:.6} vs ε {eps}, |gap| {gap:.6}, 3 SE {:.6}, n {}",
            p.mean,
            3.0 * p.se,
            p.n
        ),
    );
    report.check_all("every batch settles", "settled");
    report.check_all("batch spans 2Δ blocks", "two_delta");
}

pub(crate) fn rfq_trial(
    cfg: &ScenarioConfig,
    trial: u64,
    rng: &mut ChaCha8Rng,
    events: bool,
) -> Result<Trial, ProtocolError> {
    let p = &cfg.rfq;
    let n = cfg.tokens;
    let eps = cfg.initial_price.0.clone();
    let quote = ceil_u64(&(&eps * BigInt::from(p.size)));
    let mut chain = ChainState::new(n, cfg.delta)?.with_events(events);
    let y_need = quote + p.slope * cfg.delta + cfg.relayer.min_collateral + 10;
    chain.add_wallet(WalletId(0), xy(n, p.size, y_need))?;
    chain.add_relayer(RelayerId(0), TokenVector::zeros(n))?;
    let mms: Vec<MarketMaker> = (1..=p.makers)
        .map(|id| MarketMaker {
            id,
            latency: rng.random_range(0..=p.max_latency),
            cost: y_amount(n, p.cost),
            valuation: eps.clone(),
            inventory: xy(n, p.size, quote),
        })
        .collect();
    for m in &mms {
        chain.add_relayer(RelayerId(m.id), xy(n, p.size, quote))?;
    }
    let setup = RfqSetup {
        venue: RelayerId(0),
        x: X,
        y: Y,
        size: p.size,
        collateral: y_amount(n, cfg.relayer.min_collateral),
        slope: p.slope,
        disposition: cfg.disposition,
    };
    let side = if rng.random_bool(0.5) {
        RfqSide::SellX
    } else {
        RfqSide::BuyX
    };
    let h0 = chain.height();
    let res = run_rfq(
        &mut chain,
        &setup,
        WalletId(0),
        side,
        &eps,
        &mms,
        RfqAction::Reveal { after: 0 },
        rng,
    )?;

    let mut r = TrialRecord::new(trial);
    r.set(
        "side",
        if side == RfqSide::SellX {
            "sell_x"
        } else {
            "buy_x"
        },
    );
    r.set("fee", res.fee);
    r.set("filled", matches!(res.outcome, RfqOutcome::Filled { .. }));
    r.set("winner", res.winner);
    r.set("wait", res.included_at.map(|h| h - h0));
    Ok(finish_trial(&mut chain, r, events))
}

pub(crate) fn rfq_report(report: &mut MetricsReport, cfg: &ScenarioConfig) {
    let fee = report.aggregate("fee");
    report.aggregate("wait");
    report.check_all("every request is filled", "filled");
    let p = &cfg.rfq;
    if p.cost == 0 && p.max_latency == 0 && p.makers >= 2 {
        let nonzero = report
            .records
            .iter()
            .filter(|r| r.num("fee") != Some(0.0))
            .count();
        report.check(
            "zero-cost makers fill at zero fee",
            nonzero == 0,
            format!("{nonzero} trials with a positive fee"),
        );
    }
    let c = p.cost as f64;
    report.check(
        "mean fee within 3 SE of the per-fill cost",
        (fee.mean - c).abs() <= 3.0 * fee.se,
        format!(
            "mean {:.6} vs cost {c}, 3 SE {:.6}, n {}",
            fee.mean,
            3.0 * fee.se,
            fee.n
        ),
    );
}

fn cp_out(r_in: u64, r_out: u64, amount_in: u64, fee: &BigRational) -> u64 {
    let eff = (BigRational::one() - fee) * BigInt::from(amount_in);
    floor_u64(&(&eff * BigInt::from(r_out) / (eff.clone() + BigInt::from(r_in))))
}

pub(crate) fn amm_trial(
    cfg: &ScenarioConfig,
    trial: u64,
    rng: &mut ChaCha8Rng,
    events: bool,
) -> Result<Trial, ProtocolError> {
    let m = &cfg.amm;
    let n = cfg.tokens;
    let eps0 = cfg.initial_price.0.clone();
    let rx = m.reserve_x;
    let ry = floor_u64(&(&eps0 * BigInt::from(rx))).max(1);
    let mut pool = AmmPool::new(X, Y, rx, ry, ratio_u64(&m.fee))?;
    pool.relayer_deposit = m.relayer_deposit;

    let mut prices = PriceProcess::with_rng(
        eps0.clone(),
        cfg.price_step.0.clone(),
        ChaCha8Rng::seed_from_u64(rng.random()),
    )
    .map_err(|e| ProtocolError::Config(e.to_string()))?;
    let path: Vec<BigRational> = prices
        .path(0, m.orders as usize + 1)
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    let y_per_x = ceil_u64(&eps0).max(1);
    let orders: Vec<AmmOrder> = (0..m.orders)
        .map(|i| {
            let direction = if rng.random_bool(0.5) {
                SwapDirection::XForY
            } else {
                SwapDirection::YForX
            };
            let size = rng.random_range(m.min_order..=m.max_order);
            let amount_in = if direction == SwapDirection::XForY {
                size
            } else {
                size * y_per_x
            };
            AmmOrder {
                user: WalletId(i),
                at: i as u64,
                direction,
                amount_in,
            }
        })
        .collect();

    let fee_coll = cfg.relayer.fee + cfg.relayer.min_collateral;
    let mut base = ChainState::new(n, cfg.delta)?;
    base.add_pool(ContractId(3), pool)?;
    for o in &orders {
        base.add_wallet(
            o.user,
            xy(n, 2 * m.max_order, 2 * m.max_order * y_per_x + fee_coll),
        )?;
    }
    base.add_wallet(WalletId(500), xy(n, 10 * rx, 10 * ry))?;
    base.add_wallet(WalletId(501), xy(n, 10 * rx, 10 * ry))?;
    base.add_relayer(
        RelayerId(1),
        y_amount(n, m.relayer_deposit * m.orders as u64),
    )?;
    let setup = AmmSetup {
        pool: ContractId(3),
        relayer: RelayerId(1),
        producer: WalletId(500),
        attacker: WalletId(501),
        fee: y_amount(n, cfg.relayer.fee),
        collateral: y_amount(n, cfg.relayer.min_collateral),
        disposition: cfg.disposition,
        slippage: ratio_u64(&m.slippage),
    };

    let run_rng = rng.clone();
    let mut blind_chain = base.clone().with_events(events);
    let blind = run_amm_scenario(
        &mut blind_chain,
        &setup,
        &orders,
        &path,
        AmmMode::Dpacc,
        &mut run_rng.clone(),
    )?;
    let mut open_chain = base;
    let open = run_amm_scenario(
        &mut open_chain,
        &setup,
        &orders,
        &path,
        AmmMode::Transparent,
        &mut run_rng.clone(),
    )?;

    let fee = &m.fee.0;
    let mut analytic = true;
    let mut dominates = true;
    let mut executed = 0u64;
    let mut gaps = Vec::new();
    let mut sandwich_loss = 0i128;
    for (b, o) in blind.executions.iter().zip(&open.executions) {
        let Some(out) = b.amount_out else { continue };
        executed += 1;
        let (r_in, r_out) = match b.direction {
            SwapDirection::XForY => b.reserves_before,
            SwapDirection::YForX => (b.reserves_before.1, b.reserves_before.0),
        };
        analytic &= out == cp_out(r_in, r_out, b.amount_in, fee);
        dominates &= o.amount_out.is_none_or(|t| t < out);
        sandwich_loss += out as i128 - o.amount_out.unwrap_or(0) as i128;
        let realized = b.realized_price().unwrap();
        gaps.push(to_f64(&((realized - &b.eps_at_commit) / &b.eps_at_commit)));
    }

    let mut r = TrialRecord::new(trial);
    r.set("orders", orders.len() as u64);
    r.set("executed", executed);
    r.set("arbitrage_trades", blind.arbitrage_trades);
    r.set("sandwiches", open.sandwiches);
    r.set("analytic_match", analytic);
    r.set("dpacc_dominates", dominates);
    r.set("sandwich_loss", sandwich_loss as f64);
    if !gaps.is_empty() {
        r.set(
            "relative_price_gap",
            gaps.iter().sum::<f64>() / gaps.len() as f64,
        );
    }
    let open_ok = open_chain.check_conservation() && open_chain.violations() == 0;
    let mut t = finish_trial(&mut blind_chain, r, events);
    if !open_ok {
        t.record.set("conservation", false);
    }
    Ok(t)
}

pub(crate) fn amm_report(report: &mut MetricsReport) {
    report.aggregate("relative_price_gap");
    report.aggregate("sandwich_loss");
    report.aggregate("executed");
    report.check_all(
        "blind execution equals the constant-product output on post-arbitrage reserves",
        "analytic_match",
    );
    report.check_all(
        "blind execution strictly beats the sandwiched execution",
        "dpacc_dominates",
    );
}

pub(crate) fn liquidation_trial(
    cfg: &ScenarioConfig,
    trial: u64,
    rng: &mut ChaCha8Rng,
    events: bool,
) -> Result<Trial, ProtocolError> {
    let l = &cfg.liquidation;
    let n = cfg.tokens;
    let position = LiquidationPosition {
        collateral: l.collateral,
        debt: l.debt,
        threshold: ratio_u64(&l.threshold),
    };
    let mut prices = PriceProcess::with_rng(
        l.initial_price.0.clone(),
        cfg.price_step.0.clone(),
        ChaCha8Rng::seed_from_u64(rng.random()),
    )
    .map_err(|e| ProtocolError::Config(e.to_string()))?;
    // The path stops at the first unhealthy price; nothing after it is used.
    let mut path = vec![prices.price().clone()];
    while position.is_healthy(path.last().unwrap()) && path.len() as u64 <= l.horizon {
        path.push(prices.step_price().clone());
    }

    let mut r = TrialRecord::new(trial);
    if position.is_healthy(path.last().unwrap()) {
        r.set("triggered", false);
        r.set("conservation", true);
        return Ok(Trial {
            record: r,
            events: None,
        });
    }
    let t = path.len() - 1;
    let bid_cap = floor_u64(&position.value(&path[t]));
    let mut chain = ChainState::new(n, cfg.delta)?.with_events(events);
    for i in 0..l.bidders {
        chain.add_wallet(
            WalletId(i),
            y_amount(n, bid_cap + cfg.relayer.fee + cfg.relayer.min_collateral),
        )?;
    }
    let (borrower, lender) = (WalletId(1000), WalletId(1001));
    chain.add_wallet(borrower, TokenVector::unit(n, X, l.collateral))?;
    chain.add_wallet(lender, TokenVector::zeros(n))?;
    chain.add_relayer(RelayerId(1), TokenVector::zeros(n))?;
    open_vault(
        &mut chain,
        ContractId(8),
        borrower,
        X,
        l.collateral,
        rng.random(),
    )?;

    let setup = LiquidationSetup {
        vault: ContractId(8),
        x: X,
        lender: Account::Wallet(lender),
        borrower: Account::Wallet(borrower),
        auction: AuctionSetup {
            contract: ContractId(7),
            relayer: RelayerId(1),
            token: Y,
            fee: y_amount(n, cfg.relayer.fee),
            collateral: y_amount(n, cfg.relayer.min_collateral),
            disposition: cfg.disposition,
            seller: Account::Burn,
            lot: None,
        },
    };
    let acfg = AuctionConfig {
        commit_window: cfg.delta,
        reveal_window: cfg.delta,
        pricing: PricingRule::FirstPrice,
        item: "collateral".into(),
        reserve: 0,
    };
    let bidders: Vec<LiquidationBidder> = (0..l.bidders)
        .map(|i| LiquidationBidder {
            wallet: WalletId(i),
            rule: BidRule::Value,
            action: BidderAction::Reveal,
        })
        .collect();
    let res = run_liquidation(&mut chain, &acfg, &setup, &position, &path, &bidders, rng)?;

    r.set("triggered", true);
    r.set("trigger_block", res.trigger_height);
    r.set("value_at_trigger", to_f64(&res.value_at_trigger));
    r.set("revenue", res.revenue);
    r.set("repaid", res.repaid);
    r.set("to_borrower", res.to_borrower);
    r.set(
        "shortfall",
        to_f64(&(res.value_at_trigger - BigInt::from(res.revenue))),
    );
    Ok(finish_trial(&mut chain, r, events))
}

pub(crate) fn liquidation_report(report: &mut MetricsReport) {
    let rev = report.aggregate("revenue");
    let val = report.aggregate("value_at_trigger");
    report.aggregate("shortfall");
    report.aggregate("trigger_block");
    report.check(
        "mean revenue ≥ mean ε·C at trigger − 3 SE",
        rev.n > 0 && rev.mean >= val.mean - 3.0 * rev.se,
        format!(
            "revenue {:.3} vs value {:.3}, 3 SE {:.3}, {} triggered paths",
            rev.mean,
            val.mean,
            3.0 * rev.se,
            rev.n
        ),
    );
}
