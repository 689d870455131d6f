use std::fmt;
use std::str::FromStr;

use crate::ledger::{Keypair, Sig};

/// `X-LISPS-Token` value: `<vid>:<nonce>:<signature-hex>`, where the nonce is the
/// requester's clock in unix milliseconds and the signature covers `nonce ‖ vid`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthToken {
    pub vid: String,
    pub nonce: String,
    pub signature: Sig,
}

pub const TOKEN_HEADER: &str = "X-LISPS-Token";

/// Bytes signed to prove control of `vid`.
pub fn challenge_message(nonce: &[u8], vid: &str) -> Vec<u8> {
    let mut m = nonce.to_vec();
    m.extend_from_slice(vid.as_bytes());
    m
}

impl AuthToken {
    pub fn issue(key: &Keypair, now_ms: u64) -> Self {
        let vid = key.vid();
        let nonce = now_ms.to_string();
        let signature = key.sign(&challenge_message(nonce.as_bytes(), &vid));
        AuthToken { vid, nonce, signature }
    }

    pub fn nonce_ms(&self) -> Option<u64> {
        self.nonce.parse().ok()
    }
}

impl fmt::Display for AuthToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.vid, self.nonce, self.signature)
    }
}

impl FromStr for AuthToken {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.trim().splitn(3, ':');
        let (Some(vid), Some(nonce), Some(sig)) = (parts.next(), parts.next(), parts.next()) else {
            return Err("expected vid:nonce:signature".into());
        };
        if vid.len() != 16 || !vid.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err("vid must be 16 lowercase hex characters".into());
        }
        if nonce.is_empty() || nonce.len() > 20 || !nonce.bytes().all(|b| b.is_ascii_digit()) {
            return Err("nonce must be decimal".into());
        }
        Ok(AuthToken {
            vid: vid.to_string(),
            nonce: nonce.to_string(),
            signature: sig.parse()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let t = AuthToken::issue(&Keypair::from_seed([4; 32]), 1_600_000_000_123);
        let s = t.to_string();
        assert!(s.starts_with(&format!("{}:1600000000123:", t.vid)));
        assert_eq!(s.parse::<AuthToken>().unwrap(), t);
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "abc", "zzzzzzzzzzzzzzzz:1:00", "0123456789abcdef:x:00", "0123456789abcdef:1:0g"] {
            assert!(bad.parse::<AuthToken>().is_err(), "{bad}");
        }
    }
}
