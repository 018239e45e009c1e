use std::io::Write;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::to_f64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PriceError {
    #[error("price must be positive")]
    NonPositive,
    #[error("step must lie in [0, 1)")]
    Step,
}

/// `ε_{t+1} = ε_t·(1±δ)`, each sign with probability ½.
#[derive(Debug, Clone)]
pub struct PriceProcess {
    price: BigRational,
    delta: BigRational,
    rng: ChaCha8Rng,
}

impl PriceProcess {
    pub fn new(price: BigRational, delta: BigRational, seed: u64) -> Result<Self, PriceError> {
        Self::with_rng(price, delta, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(
        price: BigRational,
        delta: BigRational,
        rng: ChaCha8Rng,
    ) -> Result<Self, PriceError> {
        if !price.is_positive() {
            return Err(PriceError::NonPositive);
        }
        if delta.is_negative() || delta >= BigRational::one() {
            return Err(PriceError::Step);
        }
        Ok(PriceProcess { price, delta, rng })
    }

    pub fn price(&self) -> &BigRational {
        &self.price
    }

    pub fn delta(&self) -> &BigRational {
        &self.delta
    }

    pub fn step_price(&mut self) -> &BigRational {
        let up = self.rng.random_bool(0.5);
        if !self.delta.is_zero() {
            let factor = if up {
                BigRational::one() + &self.delta
            } else {
                BigRational::one() - &self.delta
            };
            self.price *= factor;
        }
        &self.price
    }

    /// `steps` further prices, starting with the current one at height `start`.
    pub fn path(&mut self, start: u64, steps: usize) -> Vec<(u64, BigRational)> {
        let mut out = vec![(start, self.price.clone())];
        for i in 1..=steps {
            out.push((start + i as u64, self.step_price().clone()));
        }
        out
    }
}

/// CSV with columns `height,epsilon,epsilon_f64`; `epsilon` is exact (`a/b`).
pub fn write_price_csv<W: Write>(path: &[(u64, BigRational)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["height", "epsilon", "epsilon_f64"])?;
    for (h, p) in path {
        w.write_record([h.to_string(), p.to_string(), to_f64(p).to_string()])?;
    }
    w.flush()?;
    Ok(())
}
