//! Text bodies exchanged between ledger nodes and their clients. Every body is a list of
//! `key value` lines unless noted.

use std::collections::BTreeMap;

use lisps_core::ledger::{Actions, Address, GrantEntry, Hash32, HiaEntry, Receipt};

/// Header naming the sender of a gossiped block or relayed transaction.
pub const FROM_HEADER: &str = "X-LISPS-From";
/// Set on transactions forwarded between miners so they are not forwarded again.
pub const RELAYED_HEADER: &str = "X-LISPS-Relayed";

pub fn kv(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} {v}\n")).collect()
}

pub fn parse_kv(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| {
            let (k, v) = l.split_once(' ').unwrap_or((l, ""));
            (!k.is_empty()).then(|| (k.to_string(), v.to_string()))
        })
        .collect()
}

pub fn parse_hash(s: &str) -> Option<Hash32> {
    let mut h = [0u8; 32];
    hex::decode_to_slice(s, &mut h).ok()?;
    Some(h)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Head {
    pub height: u64,
    pub hash: Hash32,
    pub slot: u64,
    pub time_ms: u64,
    pub block_interval_ms: u64,
    pub pending: usize,
}

impl Head {
    pub fn to_text(&self) -> String {
        kv(&[
            ("height", self.height.to_string()),
            ("hash", hex::encode(self.hash)),
            ("slot", self.slot.to_string()),
            ("time", self.time_ms.to_string()),
            ("interval", self.block_interval_ms.to_string()),
            ("pending", self.pending.to_string()),
        ])
    }

    pub fn parse(text: &str) -> Option<Head> {
        let m = parse_kv(text);
        Some(Head {
            height: m.get("height")?.parse().ok()?,
            hash: parse_hash(m.get("hash")?)?,
            slot: m.get("slot")?.parse().ok()?,
            time_ms: m.get("time")?.parse().ok()?,
            block_interval_ms: m.get("interval")?.parse().ok()?,
            pending: m.get("pending")?.parse().ok()?,
        })
    }
}

/// Registry entry plus the committed nonce of the address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identity {
    pub vid: String,
    pub address: Address,
    pub height: u64,
}

impl Identity {
    pub fn to_text(&self) -> String {
        kv(&[
            ("vid", self.vid.clone()),
            ("address", self.address.to_string()),
            ("height", self.height.to_string()),
        ])
    }

    pub fn parse(text: &str) -> Option<Identity> {
        let m = parse_kv(text);
        Some(Identity {
            vid: m.get("vid")?.clone(),
            address: m.get("address")?.parse().ok()?,
            height: m.get("height")?.parse().ok()?,
        })
    }
}

pub fn hia_text(e: &HiaEntry) -> String {
    kv(&[
        ("hash", hex::encode(e.hash)),
        ("recorder", e.recorder.clone()),
        ("height", e.height.to_string()),
    ])
}

pub fn parse_hia(text: &str) -> Option<HiaEntry> {
    let m = parse_kv(text);
    Some(HiaEntry {
        hash: parse_hash(m.get("hash")?)?,
        recorder: m.get("recorder")?.clone(),
        height: m.get("height")?.parse().ok()?,
    })
}

/// One `grant <actions> <expiry_ms> <height> <resource>` line per grant; the resource is
/// last because it may be empty or contain spaces.
pub fn grants_text<'a>(grants: impl IntoIterator<Item = (&'a str, &'a GrantEntry)>) -> String {
    grants
        .into_iter()
        .map(|(r, g)| format!("grant {} {} {} {r}\n", g.actions, g.expiry_ms, g.height))
        .collect()
}

pub fn parse_grants(text: &str) -> Option<Vec<(String, GrantEntry)>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let mut p = l.splitn(5, ' ');
            if p.next()? != "grant" {
                return None;
            }
            let actions: Actions = p.next()?.parse().ok()?;
            let expiry_ms = p.next()?.parse().ok()?;
            let height = p.next()?.parse().ok()?;
            let resource = p.next()?.to_string();
            Some((
                resource,
                GrantEntry {
                    actions,
                    expiry_ms,
                    height,
                },
            ))
        })
        .collect()
}

pub fn receipt_text(r: &Receipt) -> String {
    let status = match &r.outcome {
        Ok(()) => "ok".to_string(),
        Err(reason) => format!("failed {reason}"),
    };
    kv(&[
        ("tx", hex::encode(r.tx_id)),
        ("height", r.height.to_string()),
        ("index", r.index.to_string()),
        ("status", status),
    ])
}

pub fn parse_receipt(text: &str) -> Option<Receipt> {
    let m = parse_kv(text);
    let status = m.get("status")?;
    let outcome = if status == "ok" {
        Ok(())
    } else {
        Err(status.strip_prefix("failed ")?.to_string())
    };
    Some(Receipt {
        tx_id: parse_hash(m.get("tx")?)?,
        height: m.get("height")?.parse().ok()?,
        index: m.get("index")?.parse().ok()?,
        outcome,
    })
}
