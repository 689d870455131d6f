use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use lisps_core::clock::Clock;
use lisps_core::ledger::{
    Actions, Address, Block, Contract, Genesis, GrantEntry, Hash32, HiaEntry, Keypair, LedgerNode, PoolError, Receipt,
    Sig, Transaction,
};
use lisps_core::security::{
    authenticate, verify_hashed_index, AccessScreen, Account, Decision, LedgerError, LedgerView, SecurityError,
    TOKEN_HEADER,
};

use crate::client::{agent, base_url};
use crate::proto::{self, Head, Identity, FROM_HEADER, RELAYED_HEADER};
use crate::server::{serve, ServerHandle};

pub struct MinerOptions {
    pub genesis: Genesis,
    /// Proposer key; `None` runs a non-mining replica.
    pub key: Option<Keypair>,
    pub peers: Vec<String>,
    /// Re-read on every sync round, one address per line.
    pub peers_file: Option<PathBuf>,
    /// Key used by `POST /register`; it needs `manage` on `registry`.
    pub registrar: Option<Keypair>,
    pub clock: Arc<dyn Clock>,
    pub token_freshness_ms: u64,
}

enum Outbound {
    Block(Vec<u8>),
    Tx(Vec<u8>),
}

struct Shared {
    node: Mutex<LedgerNode>,
    self_url: Mutex<String>,
    peers: Mutex<Vec<String>>,
    peers_file: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    outbound: Mutex<mpsc::Sender<Outbound>>,
    registrar: Option<Account>,
    freshness_ms: u64,
    interval_ms: u64,
}

impl Shared {
    fn node(&self) -> std::sync::MutexGuard<'_, LedgerNode> {
        self.node.lock().expect("node lock")
    }

    fn submit(&self, tx: Transaction, relayed: bool) -> Result<Hash32, PoolError> {
        let bytes = (!relayed).then(|| tx.encode());
        let id = self.node().submit(tx)?;
        if let Some(bytes) = bytes {
            let _ = self.outbound.lock().expect("outbound lock").send(Outbound::Tx(bytes));
        }
        Ok(id)
    }

    fn head(&self) -> Head {
        let node = self.node();
        let chain = node.chain();
        Head {
            height: chain.height(),
            hash: chain.head_hash(),
            slot: chain.head().header.slot,
            time_ms: chain.head().header.timestamp_ms,
            block_interval_ms: chain.genesis().block_interval_ms,
            pending: node.pool().len(),
        }
    }

    fn peers(&self) -> Vec<String> {
        if let Some(path) = &self.peers_file {
            if let Ok(text) = std::fs::read_to_string(path) {
                let me = self.self_url.lock().expect("url lock").clone();
                let list: Vec<String> = text
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(base_url)
                    .filter(|u| *u != me)
                    .collect();
                *self.peers.lock().expect("peers lock") = list;
            }
        }
        self.peers.lock().expect("peers lock").clone()
    }
}

/// `LedgerView` over the node's own chain; submissions are gossiped like `POST /tx`.
struct NodeView(Arc<Shared>);

impl LedgerView for NodeView {
    fn address_of(&self, vid: &str) -> Result<Option<Address>, LedgerError> {
        Ok(self.0.node().chain().state().address_of(vid))
    }
    fn vid_of(&self, address: &Address) -> Result<Option<String>, LedgerError> {
        Ok(self.0.node().chain().state().identity(address).map(|e| e.vid.clone()))
    }
    fn grants(&self, vid: &str) -> Result<Vec<(String, GrantEntry)>, LedgerError> {
        Ok(self
            .0
            .node()
            .chain()
            .state()
            .grants_of(vid)
            .map(|(r, g)| (r.to_string(), g.clone()))
            .collect())
    }
    fn hia(&self, key: &str) -> Result<Option<HiaEntry>, LedgerError> {
        Ok(self.0.node().chain().state().hia(key).cloned())
    }
    fn last_nonce(&self, address: &Address) -> Result<u64, LedgerError> {
        Ok(self.0.node().chain().state().last_nonce(address))
    }
    fn submit(&self, tx: &Transaction) -> Result<Hash32, LedgerError> {
        self.0
            .submit(tx.clone(), false)
            .map_err(|e| LedgerError::Refused(e.to_string()))
    }
    fn receipt(&self, tx_id: &Hash32) -> Result<Option<Receipt>, LedgerError> {
        Ok(self.0.node().chain().receipt(tx_id).cloned())
    }
    fn block_interval_ms(&self) -> u64 {
        self.0.interval_ms
    }
}

/// A running ledger node: HTTP API, slot ticker, gossip sender and catch-up sync.
pub struct Miner {
    shared: Arc<Shared>,
    server: ServerHandle,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl Miner {
    pub fn start(listen: &str, opts: MinerOptions) -> anyhow::Result<Miner> {
        opts.genesis.validate().map_err(anyhow::Error::msg)?;
        let interval_ms = opts.genesis.block_interval_ms;
        let (tx, rx) = mpsc::channel();
        let shared = Arc::new(Shared {
            node: Mutex::new(LedgerNode::new(opts.genesis, opts.key)),
            self_url: Mutex::new(String::new()),
            peers: Mutex::new(opts.peers.iter().map(|p| base_url(p)).collect()),
            peers_file: opts.peers_file,
            clock: opts.clock,
            outbound: Mutex::new(tx),
            registrar: opts.registrar.map(Account::new),
            freshness_ms: opts.token_freshness_ms,
            interval_ms,
        });
        let server = serve(listen, router(shared.clone()), 2)?;
        *shared.self_url.lock().expect("url lock") = server.url();
        let stop = Arc::new(AtomicBool::new(false));
        let threads = vec![
            spawn_named("ticker", {
                let (s, stop) = (shared.clone(), stop.clone());
                move || ticker(&s, &stop)
            })?,
            spawn_named("gossip", {
                let s = shared.clone();
                move || gossip(&s, rx)
            })?,
            spawn_named("sync", {
                let (s, stop) = (shared.clone(), stop.clone());
                move || sync_loop(&s, &stop)
            })?,
        ];
        Ok(Miner {
            shared,
            server,
            stop,
            threads,
        })
    }

    pub fn url(&self) -> String {
        self.server.url()
    }

    pub fn addr(&self) -> std::net::SocketAddr {
        self.server.addr()
    }

    pub fn with_node<R>(&self, f: impl FnOnce(&LedgerNode) -> R) -> R {
        f(&self.shared.node())
    }

    pub fn height(&self) -> u64 {
        self.shared.node().chain().height()
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.shared.node().chain().state().digest())
    }

    /// Stops ticking, syncing and serving.
    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // closing the channel ends the gossip thread
        *self.shared.outbound.lock().expect("outbound lock") = mpsc::channel().0;
        self.server.shutdown();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Serves until the process is killed.
    pub fn run_forever(self) {
        loop {
            std::thread::park();
        }
    }
}

impl Drop for Miner {
    fn drop(&mut self) {
        self.stop();
    }
}

fn spawn_named(name: &str, f: impl FnOnce() + Send + 'static) -> std::io::Result<JoinHandle<()>> {
    std::thread::Builder::new().name(name.to_string()).spawn(f)
}

/// Proposes once per own slot, a short grace period after the slot opens so the previous
/// block has time to arrive.
fn ticker(s: &Shared, stop: &AtomicBool) {
    let grace = (s.interval_ms / 10).min(200);
    while !stop.load(Ordering::SeqCst) {
        let now = s.clock.now_ms();
        let block = {
            let mut node = s.node();
            let slot = node.chain().slot_of(now);
            if slot > 0 && now >= node.chain().slot_start(slot) + grace {
                node.tick(now)
            } else {
                None
            }
        };
        if let Some(b) = block {
            log::debug!("proposed block {} in slot {}", b.height(), b.header.slot);
            let _ = s.outbound.lock().expect("outbound lock").send(Outbound::Block(b.encode()));
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

fn gossip(s: &Shared, rx: mpsc::Receiver<Outbound>) {
    let agent = agent(Some(Duration::from_secs(2)));
    while let Ok(msg) = rx.recv() {
        let me = s.self_url.lock().expect("url lock").clone();
        for peer in s.peers() {
            let (path, body) = match &msg {
                Outbound::Block(b) => ("block", b),
                Outbound::Tx(b) => ("tx", b),
            };
            let mut req = agent.post(format!("{peer}/{path}")).header(FROM_HEADER, me.as_str());
            if path == "tx" {
                req = req.header(RELAYED_HEADER, "1");
            }
            if let Err(e) = req.send(&body[..]) {
                log::debug!("gossip to {peer}: {e}");
            }
        }
    }
}

/// Pulls missing blocks from any peer whose head is higher.
fn sync_loop(s: &Shared, stop: &AtomicBool) {
    let agent = agent(Some(Duration::from_secs(2)));
    let period = Duration::from_millis((s.interval_ms / 2).clamp(50, 500));
    while !stop.load(Ordering::SeqCst) {
        for peer in s.peers() {
            let Some(head) = fetch_text(&agent, &format!("{peer}/head")).and_then(|t| Head::parse(&t)) else {
                continue;
            };
            let mut next = s.node().chain().height() + 1;
            while next <= head.height && !stop.load(Ordering::SeqCst) {
                let Some(block) = fetch_block(&agent, &peer, next) else { break };
                if let Err(e) = s.node().receive(block) {
                    log::debug!("sync from {peer} at {next}: {e}");
                    break;
                }
                next += 1;
            }
        }
        std::thread::sleep(period);
    }
}

fn fetch_text(agent: &ureq::Agent, url: &str) -> Option<String> {
    let mut r = agent.get(url).call().ok()?;
    (r.status() == 200).then(|| r.body_mut().read_to_string().ok()).flatten()
}

fn fetch_block(agent: &ureq::Agent, peer: &str, height: u64) -> Option<Block> {
    let mut r = agent.get(format!("{peer}/block/{height}")).call().ok()?;
    if r.status() != 200 {
        return None;
    }
    Block::decode(&r.body_mut().read_to_vec().ok()?).ok()
}

type St = State<Arc<Shared>>;

fn text(status: StatusCode, body: impl Into<String>) -> Response {
    (status, body.into()).into_response()
}

fn not_found() -> Response {
    text(StatusCode::NOT_FOUND, "not found\n")
}

fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/head", get(head))
        .route("/block", post(post_block))
        .route("/block/{height}", get(get_block))
        .route("/tx", post(post_tx))
        .route("/receipt/{id}", get(get_receipt))
        .route("/state/digest", get(digest))
        .route("/state/registry/{id}", get(registry))
        .route("/state/nonce/{address}", get(nonce))
        .route("/state/hia/{*key}", get(hia))
        .route("/state/acl/{vid}", get(acl))
        .route("/register", post(register))
        .route("/authenticate", post(authenticate_route))
        .route("/hia/record", post(hia_record))
        .route("/hia/verify", post(hia_verify))
        .route("/acl/grant", post(acl_grant))
        .route("/acl/check", get(acl_check))
        .with_state(shared)
}

async fn head(State(s): St) -> Response {
    text(StatusCode::OK, s.head().to_text())
}

async fn get_block(State(s): St, Path(height): Path<u64>) -> Response {
    match s.node().chain().block(height) {
        Some(b) => (StatusCode::OK, b.encode()).into_response(),
        None => not_found(),
    }
}

async fn post_block(State(s): St, body: Bytes) -> Response {
    let block = match Block::decode(&body) {
        Ok(b) => b,
        Err(e) => return text(StatusCode::BAD_REQUEST, format!("{e}\n")),
    };
    match s.node().receive(block) {
        Ok(()) => text(StatusCode::OK, "ok\n"),
        Err(e) => text(StatusCode::CONFLICT, format!("{e}\n")),
    }
}

async fn post_tx(State(s): St, headers: HeaderMap, body: Bytes) -> Response {
    let tx = match Transaction::decode(&body) {
        Ok(t) => t,
        Err(e) => return text(StatusCode::BAD_REQUEST, format!("{e}\n")),
    };
    match s.submit(tx, headers.contains_key(RELAYED_HEADER)) {
        Ok(id) => text(StatusCode::OK, format!("{}\n", hex::encode(id))),
        Err(e) => text(StatusCode::BAD_REQUEST, format!("{e}\n")),
    }
}

async fn get_receipt(State(s): St, Path(id): Path<String>) -> Response {
    let Some(id) = proto::parse_hash(&id) else {
        return text(StatusCode::BAD_REQUEST, "bad id\n");
    };
    match s.node().chain().receipt(&id) {
        Some(r) => text(StatusCode::OK, proto::receipt_text(r)),
        None => not_found(),
    }
}

async fn digest(State(s): St) -> Response {
    text(StatusCode::OK, format!("{}\n", hex::encode(s.node().chain().state().digest())))
}

async fn registry(State(s): St, Path(id): Path<String>) -> Response {
    let node = s.node();
    let state = node.chain().state();
    let address = match id.len() {
        64 => id.parse::<Address>().ok(),
        16 => state.address_of(&id),
        _ => None,
    };
    match address.and_then(|a| state.identity(&a).map(|e| (a, e))) {
        Some((address, e)) => text(
            StatusCode::OK,
            Identity {
                vid: e.vid.clone(),
                address,
                height: e.height,
            }
            .to_text(),
        ),
        None => not_found(),
    }
}

async fn nonce(State(s): St, Path(address): Path<String>) -> Response {
    match address.parse::<Address>() {
        Ok(a) => text(StatusCode::OK, format!("{}\n", s.node().chain().state().last_nonce(&a))),
        Err(e) => text(StatusCode::BAD_REQUEST, format!("{e}\n")),
    }
}

async fn hia(State(s): St, Path(key): Path<String>) -> Response {
    match s.node().chain().state().hia(&key) {
        Some(e) => text(StatusCode::OK, proto::hia_text(e)),
        None => not_found(),
    }
}

async fn acl(State(s): St, Path(vid): Path<String>) -> Response {
    let node = s.node();
    text(StatusCode::OK, proto::grants_text(node.chain().state().grants_of(&vid)))
}

/// Runs blocking ledger work off the async workers.
async fn blocking(f: impl FnOnce() -> Response + Send + 'static) -> Response {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| text(StatusCode::INTERNAL_SERVER_ERROR, format!("{e}\n")))
}

fn security_error(e: SecurityError) -> Response {
    match e {
        SecurityError::Rejected(r) => text(StatusCode::BAD_REQUEST, format!("rejected {r}\n")),
        SecurityError::Ledger(LedgerError::Refused(r)) => text(StatusCode::BAD_REQUEST, format!("refused {r}\n")),
        SecurityError::Ledger(e) => text(StatusCode::SERVICE_UNAVAILABLE, format!("{e}\n")),
    }
}

fn inclusion_timeout(s: &Shared) -> Duration {
    Duration::from_millis(s.interval_ms * (s.node().chain().genesis().miners.len() as u64 + 3))
}

/// Body `address <hex>`; registers the address through the node's registrar key.
async fn register(State(s): St, body: String) -> Response {
    let Some(address) = proto::parse_kv(&body).get("address").and_then(|a| a.parse::<Address>().ok()) else {
        return text(StatusCode::BAD_REQUEST, "expected `address <hex>`\n");
    };
    blocking(move || {
        let Some(registrar) = &s.registrar else {
            return text(StatusCode::SERVICE_UNAVAILABLE, "no registrar key configured\n");
        };
        let view = NodeView(s.clone());
        match lisps_core::security::register_entity(&view, registrar, address, inclusion_timeout(&s)) {
            Ok(id) => text(
                StatusCode::OK,
                Identity {
                    vid: id.vid,
                    address: id.address,
                    height: id.height,
                }
                .to_text(),
            ),
            Err(e) => security_error(e),
        }
    })
    .await
}

/// Body `vid`, `nonce`, `signature` lines; answers `accept`, `unregistered` or `bad-signature`.
async fn authenticate_route(State(s): St, body: String) -> Response {
    let m = proto::parse_kv(&body);
    let (Some(vid), Some(nonce), Some(sig)) = (
        m.get("vid"),
        m.get("nonce"),
        m.get("signature").and_then(|s| s.parse::<Sig>().ok()),
    ) else {
        return text(StatusCode::BAD_REQUEST, "expected vid, nonce and signature lines\n");
    };
    match authenticate(&NodeView(s), vid, nonce.as_bytes(), &sig) {
        Ok(v) => text(StatusCode::OK, format!("{}\n", v.as_str())),
        Err(e) => text(StatusCode::SERVICE_UNAVAILABLE, format!("{e}\n")),
    }
}

/// Submits a signed transaction for `contract` and waits for its receipt.
async fn contract_call(s: Arc<Shared>, contract: Contract, body: Bytes) -> Response {
    let tx = match Transaction::decode(&body) {
        Ok(t) if t.contract == contract => t,
        Ok(_) => return text(StatusCode::BAD_REQUEST, format!("expected a {} transaction\n", contract.name())),
        Err(e) => return text(StatusCode::BAD_REQUEST, format!("{e}\n")),
    };
    blocking(move || {
        let timeout = inclusion_timeout(&s);
        match NodeView(s).submit_and_wait(&tx, timeout) {
            Ok(r) if r.is_ok() => text(StatusCode::OK, proto::receipt_text(&r)),
            Ok(r) => text(StatusCode::BAD_REQUEST, proto::receipt_text(&r)),
            Err(e) => security_error(e.into()),
        }
    })
    .await
}

async fn hia_record(State(s): St, body: Bytes) -> Response {
    contract_call(s, Contract::Hia, body).await
}

async fn acl_grant(State(s): St, body: Bytes) -> Response {
    contract_call(s, Contract::Acl, body).await
}

/// Body is the exact frame bytes; `key` names the recorded index.
async fn hia_verify(State(s): St, Query(q): Query<HashMap<String, String>>, body: Bytes) -> Response {
    let Some(key) = q.get("key") else {
        return text(StatusCode::BAD_REQUEST, "missing key\n");
    };
    match verify_hashed_index(&NodeView(s), key, &body) {
        Ok(v) => text(StatusCode::OK, format!("{}\n", v.as_str())),
        Err(e) => text(StatusCode::SERVICE_UNAVAILABLE, format!("{e}\n")),
    }
}

/// `?vid=<vid>&res=<resource>&act=read|manage` screened against the token header. `vid`
/// is optional; when present it must name the token's holder.
async fn acl_check(State(s): St, Query(q): Query<HashMap<String, String>>, headers: HeaderMap) -> Response {
    let (Some(res), Some(act)) = (q.get("res"), q.get("act").and_then(|a| a.parse::<Actions>().ok())) else {
        return text(StatusCode::BAD_REQUEST, "expected res and act\n");
    };
    let token = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
    if let (Some(vid), Some(t)) = (q.get("vid"), token) {
        if t.split(':').next() != Some(vid.as_str()) {
            return text(StatusCode::FORBIDDEN, "deny vid-mismatch\n");
        }
    }
    let screen = AccessScreen::new(Arc::new(NodeView(s.clone())), s.clock.clone(), s.freshness_ms);
    match screen.check(token, res, act) {
        Decision::Allow => text(StatusCode::OK, "allow\n"),
        Decision::Deny(r) => text(StatusCode::FORBIDDEN, format!("deny {}\n", r.as_str())),
    }
}
