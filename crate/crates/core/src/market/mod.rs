//! External market: a Martingale reference price and the agents that trade against it.

mod arbitrage;
mod mm;
mod price;

pub use arbitrage::{arbitrageur_act, in_band, ArbTrade};
pub use mm::{mm_accept_height, race, MarketMaker};
pub use price::{write_price_csv, PriceError, PriceProcess};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

#[cfg(test)]
pub(crate) fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub(crate) fn int(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
