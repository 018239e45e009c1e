//! Bundle wire format: length-prefixed canonical binary, plus a hex JSON form for debugging.

use serde::{Deserialize, Serialize};

use super::DpaccBundle;
use crate::crypto::{BalancePoK, CryptoError, PrefixPoK, Signature};

const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WireError {
    #[error("unsupported bundle version {0}")]
    Version(u8),
    #[error("bundle truncated")]
    Truncated,
    #[error("trailing bytes after bundle")]
    Trailing,
    #[error("bad hex: {0}")]
    Hex(#[from] hex::FromHexError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleJson {
    pub version: u8,
    pub balance_pok: String,
    pub prefix_pok: String,
    pub commit_sig: Signature,
    pub bundle_sig: Signature,
}

fn take<'a>(b: &mut &'a [u8], n: usize) -> Result<&'a [u8], WireError> {
    if b.len() < n {
        return Err(WireError::Truncated);
    }
    let (h, t) = b.split_at(n);
    *b = t;
    Ok(h)
}

fn take_field<'a>(b: &mut &'a [u8]) -> Result<&'a [u8], WireError> {
    let n = u32::from_le_bytes(take(b, 4)?.try_into().unwrap()) as usize;
    take(b, n)
}

impl DpaccBundle {
    /// `version u8 | u32 len | balance | u32 len | prefix | commit sig 64 | bundle sig 64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![VERSION];
        for field in [self.balance.encode(), self.prefix.encode()] {
            out.extend_from_slice(&(field.len() as u32).to_le_bytes());
            out.extend_from_slice(&field);
        }
        out.extend_from_slice(&self.commit_sig.0);
        out.extend_from_slice(&self.bundle_sig.0);
        out
    }

    pub fn from_bytes(mut b: &[u8]) -> Result<Self, WireError> {
        let v = take(&mut b, 1)?[0];
        if v != VERSION {
            return Err(WireError::Version(v));
        }
        let balance = BalancePoK::decode(take_field(&mut b)?)?;
        let prefix = PrefixPoK::decode(take_field(&mut b)?)?;
        let commit_sig = Signature::from_slice(take(&mut b, 64)?)?;
        let bundle_sig = Signature::from_slice(take(&mut b, 64)?)?;
        if !b.is_empty() {
            return Err(WireError::Trailing);
        }
        Ok(DpaccBundle {
            balance,
            prefix,
            commit_sig,
            bundle_sig,
        })
    }

    pub fn to_json(&self) -> BundleJson {
        BundleJson {
            version: VERSION,
            balance_pok: hex::encode(self.balance.encode()),
            prefix_pok: hex::encode(self.prefix.encode()),
            commit_sig: self.commit_sig,
            bundle_sig: self.bundle_sig,
        }
    }

    pub fn from_json(j: &BundleJson) -> Result<Self, WireError> {
        if j.version != VERSION {
            return Err(WireError::Version(j.version));
        }
        Ok(DpaccBundle {
            balance: BalancePoK::decode(&hex::decode(&j.balance_pok)?)?,
            prefix: PrefixPoK::decode(&hex::decode(&j.prefix_pok)?)?,
            commit_sig: j.commit_sig,
            bundle_sig: j.bundle_sig,
        })
    }
}
