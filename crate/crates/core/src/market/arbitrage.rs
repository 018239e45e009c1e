use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use super::int;
use crate::ledger::SwapDirection;
use crate::protocols::amm::AmmPool;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArbTrade {
    pub direction: SwapDirection,
    pub amount_in: u64,
    pub amount_out: u64,
    /// Profit valued in Y at the reference price.
    #[serde(skip)]
    pub profit: BigRational,
}

fn gamma(pool: &AmmPool) -> BigRational {
    let f = pool.fee();
    BigRational::new(
        BigInt::from(f.denom() - f.numer()),
        BigInt::from(*f.denom()),
    )
}

/// Whether the pool's marginal price lies in `[ε(1−φ), ε/(1−φ)]`.
pub fn in_band(pool: &AmmPool, eps: &BigRational) -> bool {
    let g = gamma(pool);
    let p = pool.price();
    p >= eps * &g && p <= eps / &g
}

fn profit(
    pool: &AmmPool,
    eps: &BigRational,
    dir: SwapDirection,
    amount: u64,
) -> Option<(u64, BigRational)> {
    let out = pool.quote(dir, amount).ok()?;
    let value = match dir {
        SwapDirection::XForY => int(out) - eps * int(amount),
        SwapDirection::YForX => eps * int(out) - int(amount),
    };
    Some((out, value))
}

/// Marginal price after trading `amount`, or `None` if the swap is not possible.
fn price_after(pool: &AmmPool, dir: SwapDirection, amount: u64) -> Option<BigRational> {
    let mut p = pool.clone();
    p.swap(dir, amount).ok()?;
    Some(p.price())
}

/// Distance from `p` to the band `[lo, hi]`.
fn band_gap(p: &BigRational, lo: &BigRational, hi: &BigRational) -> BigRational {
    if p < lo {
        lo - p
    } else if p > hi {
        p - hi
    } else {
        BigRational::zero()
    }
}

/// Smallest trade whose post-trade price reaches the near edge of the band.
/// Reaching it is monotone in the trade size, so this is a doubling search
/// followed by bisection.
fn entry_size(pool: &AmmPool, dir: SwapDirection, edge: &BigRational) -> Option<u64> {
    let reached = |d: u64| {
        price_after(pool, dir, d).is_some_and(|p| match dir {
            SwapDirection::XForY => p <= *edge,
            SwapDirection::YForX => p >= *edge,
        })
    };
    let mut hi = 1u64;
    while !reached(hi) {
        hi = hi.checked_mul(2)?;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if reached(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Trade that moves the pool's marginal price into `[ε(1−φ), ε/(1−φ)]`,
/// or `None` when it already lies there or the move would not be profitable.
///
/// Among the smallest size that reaches the band and the size one below, the
/// one ending nearer the band wins (ties to the smaller). With `φ = 0` the
/// band is the single point `ε`, so this lands on the closest reachable price.
pub fn arbitrageur_act(pool: &AmmPool, eps: &BigRational) -> Option<ArbTrade> {
    if in_band(pool, eps) {
        return None;
    }
    let g = gamma(pool);
    let (lo, hi) = (eps * &g, eps / &g);
    let (dir, edge) = if pool.price() > hi {
        (SwapDirection::XForY, &hi)
    } else {
        (SwapDirection::YForX, &lo)
    };
    let d = entry_size(pool, dir, edge)?;
    let gap_at = |d: u64| {
        if d == 0 {
            Some(band_gap(&pool.price(), &lo, &hi))
        } else {
            price_after(pool, dir, d).map(|p| band_gap(&p, &lo, &hi))
        }
    };
    let below = d - 1;
    let chosen = match gap_at(below) {
        Some(gb) if gb <= gap_at(d)? => below,
        _ => d,
    };
    if chosen == 0 {
        return None;
    }
    let (out, value) = profit(pool, eps, dir, chosen)?;
    (value > BigRational::zero()).then_some(ArbTrade {
        direction: dir,
        amount_in: chosen,
        amount_out: out,
        profit: value,
    })
}
