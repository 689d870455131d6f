use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use lisps_core::ledger::{Address, GrantEntry, Hash32, HiaEntry, Receipt, Transaction};
use lisps_core::security::{LedgerError, LedgerView};

use crate::proto::{self, Head, Identity};

/// Blocking HTTP agent that reports non-2xx statuses as responses, not errors.
pub fn agent(timeout: Option<Duration>) -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(timeout)
        .build()
        .into()
}

pub fn base_url(addr: &str) -> String {
    let addr = addr.trim().trim_end_matches('/');
    if addr.starts_with("http://") || addr.starts_with("https://") {
        addr.to_string()
    } else {
        format!("http://{addr}")
    }
}

/// `LedgerView` over the HTTP API of one or more ledger nodes. Requests go to the last
/// node that answered and fail over to the others in order.
pub struct HttpLedger {
    nodes: Vec<String>,
    preferred: AtomicUsize,
    agent: ureq::Agent,
    interval_ms: u64,
}

enum Reply {
    Found(u16, String),
    Missing,
}

impl HttpLedger {
    /// Reads the block interval from the first reachable node.
    pub fn connect(nodes: &[String]) -> Result<Self, LedgerError> {
        if nodes.is_empty() {
            return Err(LedgerError::Unavailable("no ledger nodes given".into()));
        }
        let mut l = HttpLedger {
            nodes: nodes.iter().map(|n| base_url(n)).collect(),
            preferred: AtomicUsize::new(0),
            agent: agent(Some(Duration::from_secs(5))),
            interval_ms: 0,
        };
        let head = l.head()?;
        l.interval_ms = head.block_interval_ms;
        Ok(l)
    }

    /// Polls `connect` until a node answers or `timeout` passes.
    pub fn connect_within(nodes: &[String], timeout: Duration) -> Result<Self, LedgerError> {
        let start = std::time::Instant::now();
        loop {
            match HttpLedger::connect(nodes) {
                Ok(l) => return Ok(l),
                Err(e) if start.elapsed() >= timeout => return Err(e),
                Err(_) => std::thread::sleep(Duration::from_millis(100)),
            }
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn head(&self) -> Result<Head, LedgerError> {
        match self.get("/head")? {
            Reply::Found(200, body) => Head::parse(&body).ok_or_else(|| bad_body("/head")),
            _ => Err(LedgerError::Unavailable("no head".into())),
        }
    }

    pub fn digest(&self) -> Result<String, LedgerError> {
        match self.get("/state/digest")? {
            Reply::Found(200, body) => Ok(body.trim().to_string()),
            _ => Err(LedgerError::Unavailable("no digest".into())),
        }
    }

    fn order(&self) -> impl Iterator<Item = usize> + '_ {
        let first = self.preferred.load(Ordering::Relaxed);
        (0..self.nodes.len()).map(move |i| (first + i) % self.nodes.len())
    }

    /// 404 is an answer (`Missing`); 5xx and transport errors move on to the next node.
    fn get(&self, path: &str) -> Result<Reply, LedgerError> {
        let mut last = String::new();
        for i in self.order() {
            let url = format!("{}{path}", self.nodes[i]);
            match self.agent.get(&url).call() {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status >= 500 {
                        last = format!("{url}: status {status}");
                        continue;
                    }
                    self.preferred.store(i, Ordering::Relaxed);
                    if status == 404 {
                        return Ok(Reply::Missing);
                    }
                    let body = resp.body_mut().read_to_string().map_err(|e| LedgerError::Unavailable(e.to_string()))?;
                    return Ok(Reply::Found(status, body));
                }
                Err(e) => last = format!("{url}: {e}"),
            }
        }
        Err(LedgerError::Unavailable(last))
    }
}

fn bad_body(path: &str) -> LedgerError {
    LedgerError::Unavailable(format!("malformed response to {path}"))
}

/// Path-safe form of a free-text key.
fn escape(key: &str) -> String {
    key.bytes()
        .map(|b| {
            if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'/') {
                (b as char).to_string()
            } else {
                format!("%{b:02X}")
            }
        })
        .collect()
}

impl LedgerView for HttpLedger {
    fn address_of(&self, vid: &str) -> Result<Option<Address>, LedgerError> {
        if vid.len() != 16 || !vid.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Ok(None);
        }
        match self.get(&format!("/state/registry/{vid}"))? {
            Reply::Found(200, body) => Ok(Some(Identity::parse(&body).ok_or_else(|| bad_body("registry"))?.address)),
            _ => Ok(None),
        }
    }

    fn vid_of(&self, address: &Address) -> Result<Option<String>, LedgerError> {
        match self.get(&format!("/state/registry/{address}"))? {
            Reply::Found(200, body) => Ok(Some(Identity::parse(&body).ok_or_else(|| bad_body("registry"))?.vid)),
            _ => Ok(None),
        }
    }

    fn grants(&self, vid: &str) -> Result<Vec<(String, GrantEntry)>, LedgerError> {
        match self.get(&format!("/state/acl/{}", escape(vid)))? {
            Reply::Found(200, body) => proto::parse_grants(&body).ok_or_else(|| bad_body("acl")),
            _ => Ok(Vec::new()),
        }
    }

    fn hia(&self, key: &str) -> Result<Option<HiaEntry>, LedgerError> {
        match self.get(&format!("/state/hia/{}", escape(key)))? {
            Reply::Found(200, body) => Ok(Some(proto::parse_hia(&body).ok_or_else(|| bad_body("hia"))?)),
            _ => Ok(None),
        }
    }

    fn last_nonce(&self, address: &Address) -> Result<u64, LedgerError> {
        match self.get(&format!("/state/nonce/{address}"))? {
            Reply::Found(200, body) => body.trim().parse().map_err(|_| bad_body("nonce")),
            _ => Err(bad_body("nonce")),
        }
    }

    fn submit(&self, tx: &Transaction) -> Result<Hash32, LedgerError> {
        let bytes = tx.encode();
        let mut last = String::new();
        for i in self.order() {
            let url = format!("{}/tx", self.nodes[i]);
            match self.agent.post(&url).send(&bytes[..]) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let body = resp.body_mut().read_to_string().unwrap_or_default();
                    if status >= 500 {
                        last = format!("{url}: status {status}");
                        continue;
                    }
                    self.preferred.store(i, Ordering::Relaxed);
                    if status != 200 {
                        return Err(LedgerError::Refused(body.trim().to_string()));
                    }
                    return proto::parse_hash(body.trim()).ok_or_else(|| bad_body("/tx"));
                }
                Err(e) => last = format!("{url}: {e}"),
            }
        }
        Err(LedgerError::Unavailable(last))
    }

    fn receipt(&self, tx_id: &Hash32) -> Result<Option<Receipt>, LedgerError> {
        match self.get(&format!("/receipt/{}", hex::encode(tx_id)))? {
            Reply::Found(200, body) => Ok(Some(proto::parse_receipt(&body).ok_or_else(|| bad_body("receipt"))?)),
            _ => Ok(None),
        }
    }

    fn block_interval_ms(&self) -> u64 {
        self.interval_ms
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn urls_and_escaping() {
        assert_eq!(base_url("127.0.0.1:80/"), "http://127.0.0.1:80");
        assert_eq!(base_url("http://h:1"), "http://h:1");
        assert_eq!(escape("cam-01/frame/3"), "cam-01/frame/3");
        assert_eq!(escape("a b%"), "a%20b%25");
    }
}
