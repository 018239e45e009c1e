use num_rational::BigRational;
use serde::Serialize;

use crate::ledger::{FeeSchedule, TokenVector};

/// Quotes at its valuation of the reference price and fills once the
/// escalating fee covers its per-fill cost.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MarketMaker {
    pub id: u32,
    /// Blocks between seeing a request and being able to answer it.
    pub latency: u64,
    pub cost: TokenVector,
    #[serde(skip)]
    pub valuation: BigRational,
    pub inventory: TokenVector,
}

/// Earliest height at which `mm` takes the request: no earlier than
/// `created_at + 1 + latency` and with `fee(H) ≥ cost`. `None` past `horizon`.
pub fn mm_accept_height(schedule: &FeeSchedule, mm: &MarketMaker, horizon: u64) -> Option<u64> {
    let first = schedule.created_at + 1 + mm.latency;
    let mut steps = 0u64;
    for (c, g) in mm.cost.as_slice().iter().zip(schedule.slope.as_slice()) {
        if *c > 0 {
            if *g == 0 {
                return None;
            }
            steps = steps.max(c.div_ceil(*g));
        }
    }
    let h = first.max(schedule.created_at + 1 + steps);
    (h <= horizon).then_some(h)
}

/// Dutch-auction race: the first height wins; ties go to lower latency, then lower id.
pub fn race<'a>(
    schedule: &FeeSchedule,
    mms: &'a [MarketMaker],
    horizon: u64,
) -> Option<(&'a MarketMaker, u64)> {
    mms.iter()
        .filter_map(|m| mm_accept_height(schedule, m, horizon).map(|h| (m, h)))
        .min_by_key(|(m, h)| (*h, m.latency, m.id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::int;
    use proptest::prelude::*;

    fn mm(id: u32, latency: u64, cost: u64) -> MarketMaker {
        MarketMaker {
            id,
            latency,
            cost: TokenVector::new(vec![0, cost]),
            valuation: int(100),
            inventory: TokenVector::zeros(2),
        }
    }

    fn sched(created_at: u64, g: u64) -> FeeSchedule {
        FeeSchedule {
            created_at,
            slope: TokenVector::new(vec![0, g]),
        }
    }

    #[test]
    fn zero_cost_accepts_at_first_height_for_free() {
        let s = sched(10, 5);
        let h = mm_accept_height(&s, &mm(0, 0, 0), 100).unwrap();
        assert_eq!(h, 11);
        assert!(s.fee_at(h).is_zero());
    }

    #[test]
    fn threshold_rule() {
        let s = sched(10, 3);
        assert_eq!(mm_accept_height(&s, &mm(0, 0, 7), 100), Some(10 + 1 + 3));
        assert_eq!(mm_accept_height(&s, &mm(0, 0, 6), 100), Some(10 + 1 + 2));
        assert_eq!(mm_accept_height(&s, &mm(0, 0, 7), 13), None);
        assert_eq!(mm_accept_height(&sched(10, 0), &mm(0, 0, 1), 100), None);
    }

    #[test]
    fn lower_latency_wins() {
        let s = sched(0, 1);
        let mms = [mm(0, 2, 0), mm(1, 0, 0)];
        assert_eq!(race(&s, &mms, 50).map(|(m, h)| (m.id, h)), Some((1, 1)));
    }

    proptest! {
        #[test]
        fn matches_brute_force(created in 0u64..50, g in 0u64..5, cost in 0u64..30, latency in 0u64..5) {
            let s = sched(created, g);
            let m = mm(0, latency, cost);
            let horizon = created + 40;
            let brute = (created + 1 + latency..=horizon)
                .find(|h| m.cost.fits_within(&s.fee_at(*h)));
            prop_assert_eq!(mm_accept_height(&s, &m, horizon), brute);
        }
    }
}
