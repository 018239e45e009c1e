use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dpacc::harness::{run_scenario, Protocol, ScenarioConfig};
use dpacc::ledger::{
    Account, ChainState, ContractId, Disposition, RelayerId, TokenVector, WalletId,
};
use dpacc::protocols::auction::{
    run_sealed_bid_auction, AuctionConfig, AuctionSetup, Bidder, BidderAction, PricingRule,
};

fn auction_chain(bidders: &[Bidder]) -> ChainState {
    let mut chain = ChainState::new(2, 3).unwrap();
    for b in bidders {
        chain
            .add_wallet(b.wallet, TokenVector::new(vec![0, 500]))
            .unwrap();
    }
    chain
        .add_wallet(WalletId(99), TokenVector::zeros(2))
        .unwrap();
    chain
        .add_relayer(RelayerId(1), TokenVector::zeros(2))
        .unwrap();
    chain
}

fn setup(disposition: Disposition) -> AuctionSetup {
    AuctionSetup {
        contract: ContractId(5),
        relayer: RelayerId(1),
        token: 1,
        fee: TokenVector::new(vec![0, 2]),
        collateral: TokenVector::new(vec![0, 7]),
        disposition,
        seller: Account::Wallet(WalletId(99)),
        lot: None,
    }
}

#[test]
fn second_price_auction_settles_and_conserves() {
    let bidders = vec![
        Bidder {
            wallet: WalletId(1),
            bid: 40,
            action: BidderAction::Reveal,
        },
        Bidder {
            wallet: WalletId(2),
            bid: 90,
            action: BidderAction::Withhold,
        },
        Bidder {
            wallet: WalletId(3),
            bid: 55,
            action: BidderAction::Reveal,
        },
    ];
    let cfg = AuctionConfig {
        commit_window: 2,
        reveal_window: 2,
        pricing: PricingRule::SecondPrice,
        item: "lot".into(),
        reserve: 0,
    };
    let mut chain = auction_chain(&bidders);
    let res = run_sealed_bid_auction(
        &mut chain,
        &cfg,
        &setup(Disposition::Burn),
        &bidders,
        &mut ChaCha8Rng::seed_from_u64(3),
    )
    .unwrap();

    assert_eq!(res.winner, Some(WalletId(3)));
    assert_eq!(res.price, 40);
    assert_eq!(chain.wallet(WalletId(99)).unwrap().balance().get(1), 40);
    assert_eq!(chain.wallet(WalletId(2)).unwrap().balance().get(1), 493);
    assert_eq!(chain.burn_sink().get(1), 7);
    assert!(chain.check_conservation());
    assert_eq!(chain.violations(), 0);
}

#[test]
fn lock_mode_keeps_the_withheld_mapping_restricted() {
    let bidders = vec![
        Bidder {
            wallet: WalletId(1),
            bid: 30,
            action: BidderAction::Reveal,
        },
        Bidder {
            wallet: WalletId(2),
            bid: 20,
            action: BidderAction::Withhold,
        },
    ];
    let cfg = AuctionConfig {
        commit_window: 1,
        reveal_window: 1,
        pricing: PricingRule::FirstPrice,
        item: String::new(),
        reserve: 0,
    };
    let mut chain = auction_chain(&bidders);
    let res = run_sealed_bid_auction(
        &mut chain,
        &cfg,
        &setup(Disposition::Lock),
        &bidders,
        &mut ChaCha8Rng::seed_from_u64(9),
    )
    .unwrap();

    assert_eq!(res.winner, Some(WalletId(1)));
    assert_eq!(res.bidders[1].forfeited, TokenVector::new(vec![0, 29]));
    assert_eq!(chain.burn_sink(), &TokenVector::zeros(2));
    assert!(chain.check_conservation());
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let mut cfg = ScenarioConfig::with_seed(21);
    cfg.trials = 12;
    let wide = run_scenario(&cfg, Protocol::Rfq).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let narrow = pool.install(|| run_scenario(&cfg, Protocol::Rfq).unwrap());
    assert_eq!(wide.report.to_json(), narrow.report.to_json());
    assert_eq!(wide.events, narrow.events);
}

#[test]
fn invariant_runs_pass_with_burn_disposition() {
    let mut cfg = ScenarioConfig::with_seed(4);
    cfg.trials = 5;
    cfg.disposition = Disposition::Burn;
    let out = run_scenario(&cfg, Protocol::Invariants).unwrap();
    assert!(out.report.passed(), "{}", out.report.to_json());
    assert!(out
        .events
        .lines()
        .all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}
