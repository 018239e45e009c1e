use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("token vectors have different dimensions ({0} vs {1})")]
    Dimension(usize, usize),
    #[error("subtraction underflows in token {0}")]
    Underflow(usize),
    #[error("addition overflows in token {0}")]
    Overflow(usize),
}

/// Amounts of each of the `n` token types. Componentwise non-negative by construction.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenVector(Vec<u64>);

impl TokenVector {
    pub fn new(amounts: Vec<u64>) -> Self {
        TokenVector(amounts)
    }

    pub fn zeros(n: usize) -> Self {
        TokenVector(vec![0; n])
    }

    /// `amount` of token `i`, zero elsewhere.
    pub fn unit(n: usize, i: usize, amount: u64) -> Self {
        let mut v = vec![0; n];
        v[i] = amount;
        TokenVector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, i: usize) -> u64 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    fn check_dim(&self, other: &Self) -> Result<(), TokenError> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(TokenError::Dimension(self.dim(), other.dim()))
        }
    }

    /// Componentwise `self <= other`. Vectors of different dimension never compare.
    pub fn fits_within(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, TokenError> {
        self.check_dim(other)?;
        self.0
            .iter()
            .zip(&other.0)
            .enumerate()
            .map(|(i, (a, b))| a.checked_add(*b).ok_or(TokenError::Overflow(i)))
            .collect::<Result<_, _>>()
            .map(TokenVector)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, TokenError> {
        self.check_dim(other)?;
        self.0
            .iter()
            .zip(&other.0)
            .enumerate()
            .map(|(i, (a, b))| a.checked_sub(*b).ok_or(TokenError::Underflow(i)))
            .collect::<Result<_, _>>()
            .map(TokenVector)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<(), TokenError> {
        *self = self.checked_add(other)?;
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &Self) -> Result<(), TokenError> {
        *self = self.checked_sub(other)?;
        Ok(())
    }

    /// Componentwise minimum.
    pub fn min(&self, other: &Self) -> Self {
        TokenVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| *a.min(b))
                .collect(),
        )
    }

    pub fn scale(&self, k: u64) -> Result<Self, TokenError> {
        self.0
            .iter()
            .enumerate()
            .map(|(i, a)| a.checked_mul(k).ok_or(TokenError::Overflow(i)))
            .collect::<Result<_, _>>()
            .map(TokenVector)
    }

    /// Sum of an iterator of vectors of dimension `n`.
    pub fn sum<'a>(
        n: usize,
        items: impl IntoIterator<Item = &'a TokenVector>,
    ) -> Result<Self, TokenError> {
        let mut acc = TokenVector::zeros(n);
        for v in items {
            acc.add_assign(v)?;
        }
        Ok(acc)
    }
}

impl fmt::Debug for TokenVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<Vec<u64>> for TokenVector {
    fn from(v: Vec<u64>) -> Self {
        TokenVector(v)
    }
}

macro_rules! id {
    ($name:ident) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id!(WalletId);
id!(RelayerId);
id!(ContractId);
