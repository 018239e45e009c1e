//! Scenario configuration. TOML, strict: unknown keys are errors.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ledger::Disposition;
use crate::protocols::auction::PricingRule;

/// Exact rational read from `"3/1000"`, `"0.003"` or an integer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Rat(pub BigRational);

impl Rat {
    pub fn int(n: i64) -> Self {
        Rat(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn new(n: i64, d: i64) -> Self {
        Rat(BigRational::new(BigInt::from(n), BigInt::from(d)))
    }
}

impl FromStr for Rat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let bad = || format!("not a rational number: {s:?}");
        if let Some((n, d)) = s.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(format!("zero denominator in {s:?}"));
            }
            return Ok(Rat(BigRational::new(n, d)));
        }
        let (neg, body) = match s.strip_prefix('-') {
            Some(b) => (true, b),
            None => (false, s),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() && frac.is_empty()
            || !(int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()))
        {
            return Err(bad());
        }
        let digits: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
        let r = BigRational::new(digits, BigInt::from(10).pow(frac.len() as u32));
        Ok(Rat(if neg { -r } else { r }))
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = Rat;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an integer or a rational string such as \"3/1000\" or \"0.003\"")
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Rat, E> {
                v.parse().map_err(E::custom)
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<Rat, E> {
                Ok(Rat::int(v))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Rat, E> {
                Ok(Rat(BigRational::from_integer(BigInt::from(v))))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Auction,
    Fba,
    Rfq,
    Amm,
    Liquidation,
    Invariants,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Auction => "auction",
            Protocol::Fba => "fba",
            Protocol::Rfq => "rfq",
            Protocol::Amm => "amm",
            Protocol::Liquidation => "liquidation",
            Protocol::Invariants => "invariants",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalletSpec {
    pub balance: Vec<u64>,
}

/// Relayer policy, in units of token 1 (Y).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelayerSpec {
    pub fee: u64,
    pub min_collateral: u64,
}

impl Default for RelayerSpec {
    fn default() -> Self {
        RelayerSpec {
            fee: 1,
            min_collateral: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuctionParams {
    pub min_bidders: u32,
    pub max_bidders: u32,
    pub pricing: PricingRule,
    pub max_bid: u64,
    /// Probability a bidder withholds its reveal.
    pub withhold: Rat,
    /// Probability a bidder tries to reveal a different bid.
    pub equivocate: Rat,
    pub reserve: u64,
    /// Commit and reveal windows; Δ when absent.
    pub commit_window: Option<u64>,
    pub reveal_window: Option<u64>,
}

impl Default for AuctionParams {
    fn default() -> Self {
        AuctionParams {
            min_bidders: 3,
            max_bidders: 10,
            pricing: PricingRule::FirstPrice,
            max_bid: 100,
            withhold: Rat::new(1, 5),
            equivocate: Rat::int(0),
            reserve: 0,
            commit_window: None,
            reveal_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbaParams {
    pub makers: u32,
    /// X each maker quotes on each side.
    pub maker_qty: u64,
    /// Maker valuations are `ε·(1 + e/1000)` with `e` uniform in `[-noise, noise]`.
    pub noise_permille: u64,
    pub max_user_qty: u64,
}

impl Default for FbaParams {
    fn default() -> Self {
        FbaParams {
            makers: 3,
            maker_qty: 50,
            noise_permille: 20,
            max_user_qty: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfqParams {
    pub makers: u32,
    /// Per-fill cost of every maker, in Y.
    pub cost: u64,
    pub max_latency: u64,
    /// Fee escalator slope g, in Y per block.
    pub slope: u64,
    /// X traded per request.
    pub size: u64,
}

impl Default for RfqParams {
    fn default() -> Self {
        RfqParams {
            makers: 2,
            cost: 0,
            max_latency: 0,
            slope: 1,
            size: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmmParams {
    pub reserve_x: u64,
    pub fee: Rat,
    pub slippage: Rat,
    /// Deposit a relayer pays the pool per routed order, in Y.
    pub relayer_deposit: u64,
    pub orders: u32,
    /// Order sizes are drawn from `min_order..=max_order`, in units of X.
    pub min_order: u64,
    pub max_order: u64,
}

impl Default for AmmParams {
    fn default() -> Self {
        AmmParams {
            reserve_x: 1_000_000,
            fee: Rat::new(3, 1000),
            slippage: Rat::new(3, 100),
            relayer_deposit: 0,
            orders: 1,
            min_order: 100,
            max_order: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiquidationParams {
    pub bidders: u32,
    pub collateral: u64,
    pub debt: u64,
    pub threshold: Rat,
    /// Reference price of the collateral at the start of each path.
    pub initial_price: Rat,
    /// Blocks to watch for the trigger.
    pub horizon: u64,
}

impl Default for LiquidationParams {
    fn default() -> Self {
        LiquidationParams {
            bidders: 3,
            collateral: 1_000_000,
            debt: 800_000,
            threshold: Rat::new(6, 5),
            initial_price: Rat::int(1),
            horizon: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvariantParams {
    pub max_wallets: u32,
    pub max_tokens: usize,
    pub max_blocks: u64,
    /// C_T fuzz sequences per trial.
    pub fuzz_sequences: u32,
    pub fuzz_ops: u32,
}

impl Default for InvariantParams {
    fn default() -> Self {
        InvariantParams {
            max_wallets: 20,
            max_tokens: 3,
            max_blocks: 200,
            fuzz_sequences: 100,
            fuzz_ops: 12,
        }
    }
}

fn d_trials() -> u64 {
    1
}
fn d_delta() -> u64 {
    3
}
fn d_tokens() -> usize {
    2
}
fn d_step() -> Rat {
    Rat::new(1, 100)
}
fn d_price() -> Rat {
    Rat::int(100)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default = "d_trials")]
    pub trials: u64,
    /// Δ.
    #[serde(default = "d_delta")]
    pub delta: u64,
    /// δ, the relative step of the reference price per block.
    #[serde(default = "d_step")]
    pub price_step: Rat,
    /// ε at the start of each trial.
    #[serde(default = "d_price")]
    pub initial_price: Rat,
    #[serde(default = "d_tokens")]
    pub tokens: usize,
    #[serde(default)]
    pub disposition: Disposition,
    #[serde(default)]
    pub protocol: Option<Protocol>,
    /// Starting balances for the mixed-protocol invariant runs. Random when empty.
    #[serde(default)]
    pub wallets: Vec<WalletSpec>,
    #[serde(default)]
    pub relayer: RelayerSpec,
    #[serde(default)]
    pub auction: AuctionParams,
    #[serde(default)]
    pub fba: FbaParams,
    #[serde(default)]
    pub rfq: RfqParams,
    #[serde(default)]
    pub amm: AmmParams,
    #[serde(default)]
    pub liquidation: LiquidationParams,
    #[serde(default)]
    pub invariants: InvariantParams,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

fn prob(errs: &mut Vec<String>, name: &str, r: &Rat) {
    if r.0.is_negative() || r.0 > BigRational::one() {
        errs.push(format!("{name} must lie in [0, 1], got {r}"));
    }
}

fn unit_open(errs: &mut Vec<String>, name: &str, r: &Rat) {
    if r.0.is_negative() || r.0 >= BigRational::one() {
        errs.push(format!("{name} must lie in [0, 1), got {r}"));
    }
}

impl ScenarioConfig {
    /// A config with every default and the given seed.
    pub fn with_seed(seed: u64) -> Self {
        toml::from_str(&format!("seed = {seed}")).expect("defaults parse")
    }

    /// Every range problem at once; empty when the config is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        if self.trials == 0 {
            e.push("trials must be at least 1".into());
        }
        if self.delta == 0 {
            e.push("delta (Δ) must be at least 1".into());
        }
        unit_open(&mut e, "price_step", &self.price_step);
        if !self.initial_price.0.is_positive() {
            e.push(format!(
                "initial_price must be positive, got {}",
                self.initial_price
            ));
        }
        if !(2..=8).contains(&self.tokens) {
            e.push(format!("tokens must lie in 2..=8, got {}", self.tokens));
        }
        for (i, w) in self.wallets.iter().enumerate() {
            if w.balance.len() != self.tokens {
                e.push(format!(
                    "wallets[{i}].balance has {} entries, expected {}",
                    w.balance.len(),
                    self.tokens
                ));
            }
        }

        let a = &self.auction;
        if a.min_bidders == 0 || a.min_bidders > a.max_bidders {
            e.push(format!(
                "auction bidder range {}..={} is empty",
                a.min_bidders, a.max_bidders
            ));
        }
        if a.max_bid == 0 {
            e.push("auction.max_bid must be positive".into());
        }
        prob(&mut e, "auction.withhold", &a.withhold);
        prob(&mut e, "auction.equivocate", &a.equivocate);
        if a.withhold.0.clone() + &a.equivocate.0 > BigRational::one() {
            e.push("auction.withhold + auction.equivocate must not exceed 1".into());
        }
        if a.commit_window == Some(0) || a.reveal_window == Some(0) {
            e.push("auction windows must be at least one block".into());
        }

        let f = &self.fba;
        if f.makers < 2 {
            e.push("fba.makers must be at least 2 for competing quotes".into());
        }
        if f.maker_qty == 0 || f.max_user_qty == 0 {
            e.push("fba quantities must be positive".into());
        }
        if f.noise_permille >= 1000 {
            e.push("fba.noise_permille must be below 1000".into());
        }
        let scaled = self.initial_price.0.clone() * BigInt::from(f.maker_qty) / BigInt::from(1000);
        if !scaled.is_integer() {
            e.push(format!(
                "fba.maker_qty × initial_price / 1000 must be an integer so maker limits are exact, got {scaled}"
            ));
        }

        let r = &self.rfq;
        if r.makers == 0 {
            e.push("rfq.makers must be at least 1".into());
        }
        if r.size == 0 {
            e.push("rfq.size must be positive".into());
        }
        if r.slope == 0 && r.cost > 0 {
            e.push("rfq.slope must be positive when rfq.cost > 0".into());
        }

        let m = &self.amm;
        if m.reserve_x == 0 {
            e.push("amm.reserve_x must be positive".into());
        }
        unit_open(&mut e, "amm.fee", &m.fee);
        unit_open(&mut e, "amm.slippage", &m.slippage);
        if m.orders == 0 || m.min_order == 0 || m.min_order > m.max_order {
            e.push(format!(
                "amm.orders must be positive and 1 <= min_order <= max_order, got {}..={}",
                m.min_order, m.max_order
            ));
        }

        let l = &self.liquidation;
        if l.bidders == 0 {
            e.push("liquidation.bidders must be at least 1".into());
        }
        if l.collateral == 0 || l.horizon == 0 {
            e.push("liquidation.collateral and liquidation.horizon must be positive".into());
        }
        if !l.threshold.0.is_positive() || !l.initial_price.0.is_positive() {
            e.push("liquidation.threshold and liquidation.initial_price must be positive".into());
        }

        let v = &self.invariants;
        if v.max_wallets < 4 {
            e.push("invariants.max_wallets must be at least 4".into());
        }
        if !(2..=8).contains(&v.max_tokens) {
            e.push("invariants.max_tokens must lie in 2..=8".into());
        }
        if v.max_blocks < 4 * self.delta + 4 {
            e.push(format!(
                "invariants.max_blocks must be at least 4Δ + 4 = {}",
                4 * self.delta + 4
            ));
        }
        e
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_seed(text, None)
    }

    /// As [`parse`](Self::parse), with `seed` taking precedence over the file's.
    pub fn parse_with_seed(text: &str, seed: Option<u64>) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            ConfigError::Parse(e.to_string().trim_end().to_string())
        })?;
        if let Some(seed) = seed {
            let seed = i64::try_from(seed).map_err(|_| {
                ConfigError::Parse(format!("seed {seed} does not fit in a TOML integer"))
            })?;
            table.insert("seed".into(), toml::Value::Integer(seed));
        }
        let cfg: ScenarioConfig = table.try_into().map_err(|e: toml::de::Error| {
            ConfigError::Parse(e.to_string().trim_end().to_string())
        })?;
        let errs = cfg.validate();
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioConfig::parse(&text)
}

/// Reads `path` if given, else starts from defaults; `seed` overrides the file.
pub fn load_config_with_seed(
    path: Option<&Path>,
    seed: Option<u64>,
) -> Result<ScenarioConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.display().to_string(),
            source,
        })?,
        None => String::new(),
    };
    ScenarioConfig::parse_with_seed(&text, seed)
}
