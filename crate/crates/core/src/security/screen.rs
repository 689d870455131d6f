use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::token::{challenge_message, AuthToken};
use super::view::{LedgerError, LedgerView};
use crate::clock::Clock;
use crate::ledger::{covers, verify, Actions, Address, GrantEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenyReason {
    MissingToken,
    MalformedToken,
    StaleToken,
    Unregistered,
    BadSignature,
    NoGrant,
    LedgerUnavailable,
}

impl DenyReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DenyReason::MissingToken => "missing-token",
            DenyReason::MalformedToken => "malformed-token",
            DenyReason::StaleToken => "stale-token",
            DenyReason::Unregistered => "unregistered",
            DenyReason::BadSignature => "bad-signature",
            DenyReason::NoGrant => "no-grant",
            DenyReason::LedgerUnavailable => "ledger-unavailable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(DenyReason),
}

impl Decision {
    pub fn is_allow(self) -> bool {
        self == Decision::Allow
    }
}

#[derive(Debug, Clone)]
struct Snapshot {
    address: Option<Address>,
    grants: Vec<(String, GrantEntry)>,
    fetched_ms: u64,
}

const CACHE_LIMIT: usize = 4096;

/// Fail-closed access screening. Ledger reads per VID are cached for at most one block
/// interval; grant expiry is checked against the clock on every request.
pub struct AccessScreen {
    view: Arc<dyn LedgerView>,
    clock: Arc<dyn Clock>,
    freshness_ms: u64,
    cache_ttl_ms: u64,
    cache: Mutex<HashMap<String, Snapshot>>,
}

impl AccessScreen {
    /// Tokens older or newer than `freshness_ms` relative to the clock are refused.
    pub fn new(view: Arc<dyn LedgerView>, clock: Arc<dyn Clock>, freshness_ms: u64) -> Self {
        let cache_ttl_ms = view.block_interval_ms();
        AccessScreen {
            view,
            clock,
            freshness_ms,
            cache_ttl_ms,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn view(&self) -> &Arc<dyn LedgerView> {
        &self.view
    }

    fn snapshot(&self, vid: &str, now: u64) -> Result<Snapshot, LedgerError> {
        if let Some(s) = self.cache.lock().expect("cache lock").get(vid) {
            if now >= s.fetched_ms && now - s.fetched_ms < self.cache_ttl_ms {
                return Ok(s.clone());
            }
        }
        let address = self.view.address_of(vid)?;
        let grants = match address {
            Some(_) => self.view.grants(vid)?,
            None => Vec::new(),
        };
        let snap = Snapshot {
            address,
            grants,
            fetched_ms: now,
        };
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(vid.to_string(), snap.clone());
        Ok(snap)
    }

    /// Screens a request carrying the raw token header value.
    pub fn check(&self, token: Option<&str>, resource: &str, action: Actions) -> Decision {
        let Some(raw) = token else {
            return Decision::Deny(DenyReason::MissingToken);
        };
        let Ok(token) = raw.parse::<AuthToken>() else {
            return Decision::Deny(DenyReason::MalformedToken);
        };
        self.check_token(&token, resource, action)
    }

    pub fn check_token(&self, token: &AuthToken, resource: &str, action: Actions) -> Decision {
        let now = self.clock.now_ms();
        match token.nonce_ms() {
            Some(n) if n.abs_diff(now) <= self.freshness_ms => {}
            _ => return Decision::Deny(DenyReason::StaleToken),
        }
        let snap = match self.snapshot(&token.vid, now) {
            Ok(s) => s,
            Err(_) => return Decision::Deny(DenyReason::LedgerUnavailable),
        };
        let Some(address) = snap.address else {
            return Decision::Deny(DenyReason::Unregistered);
        };
        if !verify(&address, &challenge_message(token.nonce.as_bytes(), &token.vid), &token.signature) {
            return Decision::Deny(DenyReason::BadSignature);
        }
        Self::granted(&snap, resource, action, now)
    }

    /// Re-screens a holder admitted earlier, for long-lived streams: registration and an
    /// unexpired grant are checked again, token freshness is not.
    pub fn recheck(&self, vid: &str, resource: &str, action: Actions) -> Decision {
        let now = self.clock.now_ms();
        match self.snapshot(vid, now) {
            Err(_) => Decision::Deny(DenyReason::LedgerUnavailable),
            Ok(s) if s.address.is_none() => Decision::Deny(DenyReason::Unregistered),
            Ok(s) => Self::granted(&s, resource, action, now),
        }
    }

    fn granted(snap: &Snapshot, resource: &str, action: Actions, now: u64) -> Decision {
        let granted = snap
            .grants
            .iter()
            .any(|(r, g)| covers(r, resource) && g.actions.contains(action) && g.expiry_ms > now);
        if granted {
            Decision::Allow
        } else {
            Decision::Deny(DenyReason::NoGrant)
        }
    }
}
