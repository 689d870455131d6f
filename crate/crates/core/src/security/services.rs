use std::sync::Mutex;
use std::time::Duration;

use super::token::challenge_message;
use super::view::{LedgerError, LedgerView};
use crate::ledger::{sha256, verify, Actions, Address, Call, Keypair, Receipt, Sig, Transaction};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualIdentity {
    pub vid: String,
    pub address: Address,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SecurityError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    /// Included on chain with a failure receipt.
    #[error("rejected: {0}")]
    Rejected(String),
}

/// Signing key plus a local nonce counter seeded from the ledger.
#[derive(Debug)]
pub struct Account {
    key: Keypair,
    next: Mutex<Option<u64>>,
}

impl Account {
    pub fn new(key: Keypair) -> Self {
        Account {
            key,
            next: Mutex::new(None),
        }
    }

    pub fn key(&self) -> &Keypair {
        &self.key
    }

    pub fn vid(&self) -> String {
        self.key.vid()
    }

    /// Signs `call` with the next nonce.
    pub fn sign(&self, view: &dyn LedgerView, call: &Call) -> Result<Transaction, LedgerError> {
        let mut next = self.next.lock().expect("nonce lock");
        let n = match *next {
            Some(n) => n,
            None => view.last_nonce(&self.key.address())? + 1,
        };
        *next = Some(n + 1);
        Ok(Transaction::call(&self.key, n, call))
    }

    /// Forgets the local counter so the next signature re-reads the committed nonce.
    pub fn resync(&self) {
        *self.next.lock().expect("nonce lock") = None;
    }

    /// Signs, submits and waits for inclusion; a failure receipt becomes `Rejected`.
    pub fn execute(&self, view: &dyn LedgerView, call: &Call, timeout: Duration) -> Result<Receipt, SecurityError> {
        let tx = self.sign(view, call)?;
        let receipt = view.submit_and_wait(&tx, timeout).inspect_err(|_| self.resync())?;
        match &receipt.outcome {
            Ok(()) => Ok(receipt),
            Err(reason) => Err(SecurityError::Rejected(reason.clone())),
        }
    }
}

/// Registers `address` through `registrar`, which needs `manage` on `registry`.
pub fn register_entity(
    view: &dyn LedgerView,
    registrar: &Account,
    address: Address,
    timeout: Duration,
) -> Result<VirtualIdentity, SecurityError> {
    let receipt = registrar.execute(view, &Call::Register { address }, timeout)?;
    Ok(VirtualIdentity {
        vid: address.vid(),
        address,
        height: receipt.height,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Unregistered,
    BadSignature,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accept => "accept",
            Verdict::Unregistered => "unregistered",
            Verdict::BadSignature => "bad-signature",
        }
    }
}

/// Checks a signature over `nonce ‖ vid` against the key registered for `vid`.
pub fn authenticate(view: &dyn LedgerView, vid: &str, nonce: &[u8], signature: &Sig) -> Result<Verdict, LedgerError> {
    Ok(match view.address_of(vid)? {
        None => Verdict::Unregistered,
        Some(a) if verify(&a, &challenge_message(nonce, vid), signature) => Verdict::Accept,
        Some(_) => Verdict::BadSignature,
    })
}

/// HIA key of a camera frame.
pub fn hia_key(camera_id: &str, frame_index: u64) -> String {
    format!("{camera_id}/frame/{frame_index}")
}

/// Records SHA-256 of `frame_bytes` under `key`; the recorder needs `manage` on the camera.
pub fn record_hashed_index(
    view: &dyn LedgerView,
    recorder: &Account,
    key: &str,
    frame_bytes: &[u8],
    timeout: Duration,
) -> Result<Receipt, SecurityError> {
    let call = Call::Record {
        key: key.to_string(),
        hash: sha256(frame_bytes),
    };
    recorder.execute(view, &call, timeout)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiaVerdict {
    Authentic,
    Tampered,
    Unknown,
}

impl HiaVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            HiaVerdict::Authentic => "authentic",
            HiaVerdict::Tampered => "tampered",
            HiaVerdict::Unknown => "unknown",
        }
    }
}

pub fn verify_hashed_index(view: &dyn LedgerView, key: &str, frame_bytes: &[u8]) -> Result<HiaVerdict, LedgerError> {
    Ok(match view.hia(key)? {
        None => HiaVerdict::Unknown,
        Some(e) if e.hash == sha256(frame_bytes) => HiaVerdict::Authentic,
        Some(_) => HiaVerdict::Tampered,
    })
}

/// Grants `actions` on `resource` to `subject` until `now_ms + ttl_ms`.
#[allow(clippy::too_many_arguments)]
pub fn grant_access(
    view: &dyn LedgerView,
    admin: &Account,
    subject: &str,
    resource: &str,
    actions: Actions,
    ttl_ms: u64,
    now_ms: u64,
    timeout: Duration,
) -> Result<Receipt, SecurityError> {
    let call = Call::Grant {
        subject: subject.to_string(),
        resource: resource.to_string(),
        actions,
        expiry_ms: now_ms.saturating_add(ttl_ms),
    };
    admin.execute(view, &call, timeout)
}
