//! The registry, HIA and ACL contracts as one deterministic state machine.

use std::collections::BTreeMap;

use super::codec::Writer;
use super::crypto::{sha256, Address, Hash32};
use super::tx::{Actions, Call, Transaction};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VidEntry {
    pub vid: String,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiaEntry {
    pub hash: Hash32,
    pub recorder: String,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrantEntry {
    pub actions: Actions,
    pub expiry_ms: u64,
    pub height: u64,
}

/// Why a transaction cannot be included at all (as opposed to a failure receipt).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Inadmissible {
    #[error("bad signature")]
    Signature,
    #[error("sender not registered")]
    UnknownSender,
    #[error("nonce {got}, expected {expected}")]
    Nonce { expected: u64, got: u64 },
}

/// Resource `granted` covers `requested` when equal, when it is a `/`-separated prefix,
/// or when it is the root `""`.
pub fn covers(granted: &str, requested: &str) -> bool {
    granted.is_empty()
        || requested == granted
        || (requested.len() > granted.len()
            && requested.starts_with(granted)
            && requested.as_bytes()[granted.len()] == b'/')
}

/// Resource whose `manage` right allows recording HIA key `key` (`cam-01/frame/7` ->
/// `camera/cam-01`).
pub fn hia_resource(key: &str) -> String {
    format!("camera/{}", key.split('/').next().unwrap_or(""))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContractState {
    registry: BTreeMap<Address, VidEntry>,
    by_vid: BTreeMap<String, Address>,
    hia: BTreeMap<String, HiaEntry>,
    acl: BTreeMap<(String, String), GrantEntry>,
    nonces: BTreeMap<Address, u64>,
}

impl ContractState {
    /// Genesis state: every admin registered with a non-expiring root grant.
    pub fn with_admins(admins: &[Address]) -> Self {
        let mut s = ContractState::default();
        for a in admins {
            s.insert_identity(*a, 0);
            s.acl.insert(
                (a.vid(), String::new()),
                GrantEntry {
                    actions: Actions::ALL,
                    expiry_ms: u64::MAX,
                    height: 0,
                },
            );
        }
        s
    }

    fn insert_identity(&mut self, address: Address, height: u64) {
        let vid = address.vid();
        self.by_vid.insert(vid.clone(), address);
        self.registry.insert(address, VidEntry { vid, height });
    }

    pub fn identity(&self, address: &Address) -> Option<&VidEntry> {
        self.registry.get(address)
    }

    pub fn address_of(&self, vid: &str) -> Option<Address> {
        self.by_vid.get(vid).copied()
    }

    pub fn hia(&self, key: &str) -> Option<&HiaEntry> {
        self.hia.get(key)
    }

    pub fn grant(&self, vid: &str, resource: &str) -> Option<&GrantEntry> {
        self.acl.get(&(vid.to_string(), resource.to_string()))
    }

    pub fn grants_of<'a>(&'a self, vid: &'a str) -> impl Iterator<Item = (&'a str, &'a GrantEntry)> + 'a {
        self.acl
            .range((vid.to_string(), String::new())..)
            .take_while(move |((v, _), _)| v == vid)
            .map(|((_, r), g)| (r.as_str(), g))
    }

    pub fn last_nonce(&self, address: &Address) -> u64 {
        self.nonces.get(address).copied().unwrap_or(0)
    }

    pub fn registered_count(&self) -> usize {
        self.registry.len()
    }

    pub fn hia_count(&self) -> usize {
        self.hia.len()
    }

    /// True when `vid` holds an unexpired grant covering `(resource, action)` at `now_ms`.
    pub fn allows(&self, vid: &str, resource: &str, action: Actions, now_ms: u64) -> bool {
        self.grants_of(vid)
            .any(|(r, g)| covers(r, resource) && g.actions.contains(action) && g.expiry_ms > now_ms)
    }

    pub fn check_admission(&self, tx: &Transaction) -> Result<(), Inadmissible> {
        if !self.registry.contains_key(&tx.sender) {
            return Err(Inadmissible::UnknownSender);
        }
        let expected = self.last_nonce(&tx.sender) + 1;
        if tx.nonce != expected {
            return Err(Inadmissible::Nonce {
                expected,
                got: tx.nonce,
            });
        }
        if !tx.verify_signature() {
            return Err(Inadmissible::Signature);
        }
        Ok(())
    }

    /// Applies an admitted transaction: the nonce always advances; the contract outcome is
    /// returned for the receipt and a failed call leaves contract state untouched.
    pub fn apply(&mut self, tx: &Transaction, height: u64, block_time_ms: u64) -> Result<(), String> {
        self.nonces.insert(tx.sender, tx.nonce);
        let call = match Call::decode(tx.contract, &tx.method, &tx.args) {
            None => return Err(format!("unknown method {}.{}", tx.contract.name(), tx.method)),
            Some(Err(e)) => return Err(format!("malformed arguments: {e}")),
            Some(Ok(c)) => c,
        };
        let sender_vid = self.registry[&tx.sender].vid.clone();
        match call {
            Call::Register { address } => {
                if !self.allows(&sender_vid, "registry", Actions::MANAGE, block_time_ms) {
                    return Err("not authorized to register".into());
                }
                if self.registry.contains_key(&address) {
                    return Err("already registered".into());
                }
                self.insert_identity(address, height);
            }
            Call::Record { key, hash } => {
                if key.is_empty() {
                    return Err("empty key".into());
                }
                if !self.allows(&sender_vid, &hia_resource(&key), Actions::MANAGE, block_time_ms) {
                    return Err("not authorized to record".into());
                }
                if self.hia.contains_key(&key) {
                    return Err("already recorded".into());
                }
                self.hia.insert(
                    key,
                    HiaEntry {
                        hash,
                        recorder: sender_vid,
                        height,
                    },
                );
            }
            Call::Grant {
                subject,
                resource,
                actions,
                expiry_ms,
            } => {
                if !self.allows(&sender_vid, &resource, Actions::MANAGE, block_time_ms) {
                    return Err("not authorized to grant".into());
                }
                if !self.by_vid.contains_key(&subject) {
                    return Err("unknown subject".into());
                }
                if actions.is_empty() {
                    return Err("empty action set".into());
                }
                if expiry_ms <= block_time_ms {
                    return Err("expiry not after grant time".into());
                }
                self.acl.insert(
                    (subject, resource),
                    GrantEntry {
                        actions,
                        expiry_ms,
                        height,
                    },
                );
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical encoding of all contract content. Inclusion heights are
    /// left out so that runs batching the same transactions differently agree.
    pub fn digest(&self) -> Hash32 {
        let mut w = Writer::new();
        w.str("LISPS-STATE-V1");
        w.u64(self.registry.len() as u64);
        for (a, e) in &self.registry {
            w.field(&a.0).str(&e.vid);
        }
        w.u64(self.hia.len() as u64);
        for (k, e) in &self.hia {
            w.str(k).field(&e.hash).str(&e.recorder);
        }
        w.u64(self.acl.len() as u64);
        for ((v, r), g) in &self.acl {
            w.str(v).str(r).u8(g.actions.bits()).u64(g.expiry_ms);
        }
        w.u64(self.nonces.len() as u64);
        for (a, n) in &self.nonces {
            w.field(&a.0).u64(*n);
        }
        sha256(&w.finish())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::crypto::Keypair;

    #[test]
    fn covering() {
        assert!(covers("", "camera/cam-01"));
        assert!(covers("camera", "camera/cam-01/features"));
        assert!(covers("camera/cam-01", "camera/cam-01"));
        assert!(!covers("camera/cam-0", "camera/cam-01"));
        assert!(!covers("camera/cam-01/features", "camera/cam-01"));
        assert_eq!(hia_resource("cam-01/frame/1024"), "camera/cam-01");
    }

    fn setup() -> (ContractState, Keypair, Keypair) {
        let admin = Keypair::from_seed([1; 32]);
        let edge = Keypair::from_seed([2; 32]);
        (ContractState::with_admins(&[admin.address()]), admin, edge)
    }

    fn run(s: &mut ContractState, k: &Keypair, call: Call) -> Result<(), String> {
        let tx = Transaction::call(k, s.last_nonce(&k.address()) + 1, &call);
        s.check_admission(&tx).map_err(|e| e.to_string())?;
        s.apply(&tx, 1, 1000)
    }

    #[test]
    fn register_then_record_write_once() {
        let (mut s, admin, edge) = setup();
        run(&mut s, &admin, Call::Register { address: edge.address() }).unwrap();
        assert_eq!(s.identity(&edge.address()).unwrap().vid, edge.vid());
        assert_eq!(
            run(&mut s, &admin, Call::Register { address: edge.address() }),
            Err("already registered".into())
        );
        let rec = |h| Call::Record {
            key: "cam-01/frame/1".into(),
            hash: [h; 32],
        };
        assert_eq!(run(&mut s, &edge, rec(1)), Err("not authorized to record".into()));
        run(
            &mut s,
            &admin,
            Call::Grant {
                subject: edge.vid(),
                resource: "camera/cam-01".into(),
                actions: Actions::MANAGE,
                expiry_ms: 10_000,
            },
        )
        .unwrap();
        run(&mut s, &edge, rec(1)).unwrap();
        assert_eq!(run(&mut s, &edge, rec(2)), Err("already recorded".into()));
        assert_eq!(s.hia("cam-01/frame/1").unwrap().hash, [1; 32]);
    }

    #[test]
    fn unknown_sender_and_nonce_gap() {
        let (s, admin, edge) = setup();
        let tx = Transaction::call(&edge, 1, &Call::Register { address: edge.address() });
        assert_eq!(s.check_admission(&tx), Err(Inadmissible::UnknownSender));
        let tx = Transaction::call(&admin, 2, &Call::Register { address: edge.address() });
        assert_eq!(s.check_admission(&tx), Err(Inadmissible::Nonce { expected: 1, got: 2 }));
    }

    #[test]
    fn non_admin_grant_denied_and_expiry() {
        let (mut s, admin, edge) = setup();
        run(&mut s, &admin, Call::Register { address: edge.address() }).unwrap();
        let g = Call::Grant {
            subject: edge.vid(),
            resource: "camera/cam-01/features".into(),
            actions: Actions::READ,
            expiry_ms: 61_000,
        };
        assert_eq!(run(&mut s, &edge, g.clone()), Err("not authorized to grant".into()));
        run(&mut s, &admin, g).unwrap();
        assert!(s.allows(&edge.vid(), "camera/cam-01/features", Actions::READ, 60_999));
        assert!(!s.allows(&edge.vid(), "camera/cam-01/features", Actions::READ, 61_000));
        assert!(!s.allows(&edge.vid(), "camera/cam-01/features", Actions::MANAGE, 0));
    }

    #[test]
    fn failed_call_only_advances_nonce() {
        let (mut s, admin, _) = setup();
        let before = s.clone();
        let tx = Transaction::new_signed(&admin, 1, crate::ledger::Contract::Hia, "erase", vec![]);
        assert!(s.apply(&tx, 1, 0).is_err());
        assert_eq!(s.last_nonce(&admin.address()), 1);
        assert_eq!(s.hia, before.hia);
        assert_eq!(s.acl, before.acl);
    }
}
