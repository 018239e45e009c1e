use std::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{CryptoError, Secret};

/// Private key material from which a serial number is derived.
///
/// Backed by an ed25519 seed: the serial `S` is the verifying key, so any
/// party holding `S` can check signatures made with the root key.
#[derive(Clone, PartialEq, Eq)]
pub struct RootKey(SigningKey);

impl RootKey {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        RootKey(SigningKey::from_bytes(&seed))
    }

    pub fn seed(&self) -> [u8; 32] {
        self.0.to_bytes()
    }
}

impl fmt::Debug for RootKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RootKey(serial={:?})", derive_serial(self))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

impl Signature {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 64] = bytes.try_into().map_err(|_| CryptoError::Length {
            expected: 64,
            got: bytes.len(),
        })?;
        Ok(Signature(arr))
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}…)", &hex::encode(self.0)[..12])
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(s).map_err(serde::de::Error::custom)?;
        Signature::from_slice(&v).map_err(serde::de::Error::custom)
    }
}

pub fn derive_serial(key: &RootKey) -> Secret {
    Secret(key.0.verifying_key().to_bytes())
}

pub fn sign(key: &RootKey, msg: &[u8]) -> Signature {
    Signature(key.0.sign(msg).to_bytes())
}

/// False for a serial that is not a valid curve point, as well as for a bad signature.
pub fn verify_sig(serial: &Secret, msg: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&serial.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify_strict(msg, &sig).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(name: &str) -> Vec<Vec<u8>> {
        let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| hex::decode(l.trim()).unwrap())
            .collect()
    }

    #[test]
    fn serial_golden_vector() {
        // RFC 8032 section 7.1, test 1.
        let lines = fixture("serial.hex");
        let key = RootKey::from_seed(lines[0].clone().try_into().unwrap());
        assert_eq!(derive_serial(&key).0.to_vec(), lines[1]);
    }

    #[test]
    fn signature_golden_vector() {
        let keys = fixture("serial.hex");
        let lines = fixture("signature.hex");
        let key = RootKey::from_seed(keys[0].clone().try_into().unwrap());
        let sig = sign(&key, &lines[0]);
        assert_eq!(sig.0.to_vec(), lines[1]);
        assert!(verify_sig(&derive_serial(&key), &lines[0], &sig));
    }

    #[test]
    fn derive_serial_deterministic_and_distinct() {
        let a = RootKey::from_seed([1; 32]);
        let b = RootKey::from_seed([2; 32]);
        assert_eq!(derive_serial(&a), derive_serial(&a.clone()));
        assert_ne!(derive_serial(&a), derive_serial(&b));
    }

    #[test]
    fn sign_verify() {
        let a = RootKey::from_seed([1; 32]);
        let b = RootKey::from_seed([2; 32]);
        let msg = b"commit to tx".to_vec();
        let sig = sign(&a, &msg);
        assert!(verify_sig(&derive_serial(&a), &msg, &sig));
        assert!(!verify_sig(&derive_serial(&b), &msg, &sig));
        let mut flipped = msg.clone();
        flipped[0] ^= 1;
        assert!(!verify_sig(&derive_serial(&a), &flipped, &sig));
    }

    #[test]
    fn non_point_serial_rejects() {
        let a = RootKey::from_seed([1; 32]);
        let sig = sign(&a, b"m");
        // y = 2 does not decompress to a curve point.
        let mut bogus = [0u8; 32];
        bogus[0] = 2;
        assert!(!verify_sig(&Secret(bogus), b"m", &sig));
    }
}
