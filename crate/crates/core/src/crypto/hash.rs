use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use super::CryptoError;

pub const COMMIT_TAG: &[u8] = b"dpacc/commit/v1";

/// SHA-256 over `len(tag) || tag || parts...`.
pub fn tagged_hash(tag: &[u8], parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    h.update([tag.len() as u8]);
    h.update(tag);
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

macro_rules! bytes32 {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; 32]);

        impl $name {
            pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
                let arr: [u8; 32] = bytes
                    .try_into()
                    .map_err(|_| CryptoError::Length { expected: 32, got: bytes.len() })?;
                Ok(Self(arr))
            }

            pub fn as_bytes(&self) -> &[u8; 32] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
                let v = hex::decode(s).map_err(|_| CryptoError::Malformed("hex"))?;
                Self::from_slice(&v)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({}…)", stringify!($name), &self.to_hex()[..12])
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

bytes32!(
    /// 32-byte digest: commitments, transaction hashes, accumulator roots.
    Digest
);
bytes32!(
    /// Serial number `S`. Doubles as the ed25519 verifying key of the root key it derives from.
    Secret
);
bytes32!(
    /// Commitment randomness `r`.
    Randomness
);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; 32]
    }
}

/// `h(S||r)`.
pub fn commit(s: &Secret, r: &Randomness) -> Digest {
    tagged_hash(COMMIT_TAG, &[&s.0, &r.0])
}

/// Length-checked variant of [`commit`] for untyped input.
pub fn commit_bytes(s: &[u8], r: &[u8]) -> Result<Digest, CryptoError> {
    Ok(commit(&Secret::from_slice(s)?, &Randomness::from_slice(r)?))
}
