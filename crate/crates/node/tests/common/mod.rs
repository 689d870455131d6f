#![allow(dead_code)]

use std::io::Read;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use lisps_core::clock::{Clock, SystemClock};
use lisps_core::ledger::{Genesis, Keypair};
use lisps_node::client::agent;
use lisps_node::miner::{Miner, MinerOptions};
use lisps_node::HttpLedger;

pub fn admin() -> Keypair {
    Keypair::from_name("test-admin")
}

/// `n` in-process miners on loopback, peered through a shared peers file.
pub struct Cluster {
    pub miners: Vec<Miner>,
    _dir: tempfile::TempDir,
}

impl Cluster {
    pub fn start(n: usize, interval_ms: u64) -> Cluster {
        let dir = tempfile::tempdir().unwrap();
        let keys: Vec<Keypair> = (0..n).map(|i| Keypair::from_name(&format!("test-miner-{i}"))).collect();
        let genesis = Genesis {
            timestamp_ms: SystemClock.now_ms(),
            block_interval_ms: interval_ms,
            miners: keys.iter().map(Keypair::address).collect(),
            admins: vec![admin().address()],
        };
        let peers = dir.path().join("peers.txt");
        std::fs::write(&peers, "").unwrap();
        let miners: Vec<Miner> = keys
            .into_iter()
            .map(|k| {
                Miner::start(
                    "127.0.0.1:0",
                    MinerOptions {
                        genesis: genesis.clone(),
                        key: Some(k),
                        peers: vec![],
                        peers_file: Some(peers.clone()),
                        registrar: Some(admin()),
                        clock: Arc::new(SystemClock),
                        token_freshness_ms: 30_000,
                    },
                )
                .unwrap()
            })
            .collect();
        let list: Vec<String> = miners.iter().map(|m| m.addr().to_string()).collect();
        std::fs::write(&peers, list.join("\n")).unwrap();
        Cluster { miners, _dir: dir }
    }

    pub fn addrs(&self) -> Vec<String> {
        self.miners.iter().map(|m| m.addr().to_string()).collect()
    }

    pub fn ledger(&self) -> Arc<HttpLedger> {
        Arc::new(HttpLedger::connect(&self.addrs()).unwrap())
    }

    /// Waits until every miner has the same height (at least `min`) and digest.
    pub fn converge(&self, min: u64, timeout: Duration) -> bool {
        let start = Instant::now();
        while start.elapsed() < timeout {
            let h: Vec<u64> = self.miners.iter().map(Miner::height).collect();
            let d: Vec<String> = self.miners.iter().map(Miner::digest_hex).collect();
            if h[0] >= min && h.windows(2).all(|w| w[0] == w[1]) && d.windows(2).all(|w| w[0] == w[1]) {
                return true;
            }
            std::thread::sleep(Duration::from_millis(50));
        }
        false
    }
}

/// (status, body) of a request with optional headers and body.
pub fn http(method: &str, url: &str, headers: &[(&str, &str)], body: &[u8]) -> (u16, String) {
    let a = agent(Some(Duration::from_secs(30)));
    let resp = match method {
        "GET" => {
            let mut r = a.get(url);
            for (k, v) in headers {
                r = r.header(*k, *v);
            }
            r.call()
        }
        _ => {
            let mut r = a.post(url);
            for (k, v) in headers {
                r = r.header(*k, *v);
            }
            r.send(body)
        }
    };
    let mut resp = resp.unwrap();
    let status = resp.status().as_u16();
    let mut raw = Vec::new();
    resp.body_mut().as_reader().read_to_end(&mut raw).unwrap();
    (status, String::from_utf8_lossy(&raw).into_owned())
}

pub fn lisps() -> &'static Path {
    Path::new(env!("CARGO_BIN_EXE_lisps"))
}
