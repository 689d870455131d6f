use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use sha2::{Digest, Sha256};

pub type Hash32 = [u8; 32];

pub fn sha256(data: &[u8]) -> Hash32 {
    Sha256::digest(data).into()
}

/// Account address: the 32-byte ed25519 public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 32]);

impl Address {
    pub const ZERO: Address = Address([0; 32]);

    /// First 16 hex characters of SHA-256 over the address bytes.
    pub fn vid(&self) -> String {
        hex::encode(&sha256(&self.0)[..8])
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", &hex::encode(self.0)[..12])
    }
}

impl FromStr for Address {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| format!("bad address {s:?}: {e}"))?;
        Ok(Address(out))
    }
}

/// 64-byte ed25519 signature.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Sig(pub [u8; 64]);

impl Sig {
    pub const ZERO: Sig = Sig([0; 64]);
}

impl fmt::Debug for Sig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sig({}..)", &hex::encode(self.0)[..12])
    }
}

impl FromStr for Sig {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = [0u8; 64];
        hex::decode_to_slice(s, &mut out).map_err(|e| format!("bad signature: {e}"))?;
        Ok(Sig(out))
    }
}

impl fmt::Display for Sig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Clone)]
pub struct Keypair {
    key: SigningKey,
}

impl fmt::Debug for Keypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Keypair({:?})", self.address())
    }
}

impl Keypair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Keypair {
            key: SigningKey::from_bytes(&seed),
        }
    }

    /// Deterministic key for a textual name, used by the harness and examples.
    pub fn from_name(name: &str) -> Self {
        Keypair::from_seed(sha256(format!("lisps-key:{name}").as_bytes()))
    }

    pub fn seed(&self) -> [u8; 32] {
        self.key.to_bytes()
    }

    pub fn address(&self) -> Address {
        Address(self.key.verifying_key().to_bytes())
    }

    pub fn vid(&self) -> String {
        self.address().vid()
    }

    pub fn sign(&self, msg: &[u8]) -> Sig {
        Sig(self.key.sign(msg).to_bytes())
    }
}

pub fn verify(signer: &Address, msg: &[u8], sig: &Sig) -> bool {
    match VerifyingKey::from_bytes(&signer.0) {
        Ok(vk) => vk.verify_strict(msg, &Signature::from_bytes(&sig.0)).is_ok(),
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_answer() {
        assert_eq!(
            hex::encode(sha256(b"abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn sign_and_verify() {
        let k = Keypair::from_seed([7; 32]);
        let s = k.sign(b"hello");
        assert!(verify(&k.address(), b"hello", &s));
        assert!(!verify(&k.address(), b"hellp", &s));
        assert!(!verify(&Keypair::from_seed([8; 32]).address(), b"hello", &s));
    }

    #[test]
    fn vid_is_16_hex() {
        let v = Keypair::from_seed([1; 32]).vid();
        assert_eq!(v.len(), 16);
        assert!(v.bytes().all(|b| b.is_ascii_hexdigit()));
    }

    #[test]
    fn address_text_round_trip() {
        let a = Keypair::from_name("x").address();
        assert_eq!(a.to_string().parse::<Address>().unwrap(), a);
    }
}
