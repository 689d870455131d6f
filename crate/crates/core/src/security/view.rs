use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::clock::Clock;
use crate::ledger::{Address, Block, Genesis, GrantEntry, Hash32, HiaEntry, Keypair, LedgerNode, Receipt, Transaction};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("ledger unavailable: {0}")]
    Unavailable(String),
    #[error("transaction refused: {0}")]
    Refused(String),
    #[error("timed out waiting for inclusion")]
    Timeout,
}

/// Read access to committed ledger state plus transaction submission. Implemented
/// in-process by [`LocalLedger`] and over HTTP by the node crate.
pub trait LedgerView: Send + Sync {
    fn address_of(&self, vid: &str) -> Result<Option<Address>, LedgerError>;
    fn vid_of(&self, address: &Address) -> Result<Option<String>, LedgerError>;
    fn grants(&self, vid: &str) -> Result<Vec<(String, GrantEntry)>, LedgerError>;
    fn hia(&self, key: &str) -> Result<Option<HiaEntry>, LedgerError>;
    fn last_nonce(&self, address: &Address) -> Result<u64, LedgerError>;
    fn submit(&self, tx: &Transaction) -> Result<Hash32, LedgerError>;
    fn receipt(&self, tx_id: &Hash32) -> Result<Option<Receipt>, LedgerError>;
    fn block_interval_ms(&self) -> u64;

    /// Polls until `tx_id` is included or `timeout` passes.
    fn wait_receipt(&self, tx_id: &Hash32, timeout: Duration) -> Result<Receipt, LedgerError> {
        let start = Instant::now();
        loop {
            if let Some(r) = self.receipt(tx_id)? {
                return Ok(r);
            }
            if start.elapsed() >= timeout {
                return Err(LedgerError::Timeout);
            }
            std::thread::sleep(Duration::from_millis(20));
        }
    }

    fn submit_and_wait(&self, tx: &Transaction, timeout: Duration) -> Result<Receipt, LedgerError> {
        let id = self.submit(tx)?;
        self.wait_receipt(&id, timeout)
    }
}

impl<T: LedgerView + ?Sized> LedgerView for Arc<T> {
    fn address_of(&self, vid: &str) -> Result<Option<Address>, LedgerError> {
        (**self).address_of(vid)
    }
    fn vid_of(&self, address: &Address) -> Result<Option<String>, LedgerError> {
        (**self).vid_of(address)
    }
    fn grants(&self, vid: &str) -> Result<Vec<(String, GrantEntry)>, LedgerError> {
        (**self).grants(vid)
    }
    fn hia(&self, key: &str) -> Result<Option<HiaEntry>, LedgerError> {
        (**self).hia(key)
    }
    fn last_nonce(&self, address: &Address) -> Result<u64, LedgerError> {
        (**self).last_nonce(address)
    }
    fn submit(&self, tx: &Transaction) -> Result<Hash32, LedgerError> {
        (**self).submit(tx)
    }
    fn receipt(&self, tx_id: &Hash32) -> Result<Option<Receipt>, LedgerError> {
        (**self).receipt(tx_id)
    }
    fn block_interval_ms(&self) -> u64 {
        (**self).block_interval_ms()
    }
}

/// Single-miner ledger inside the process. With `auto_seal` every accepted submission is
/// sealed into a block at once; otherwise call [`LocalLedger::seal`].
pub struct LocalLedger {
    node: Mutex<LedgerNode>,
    clock: Arc<dyn Clock>,
    auto_seal: bool,
    available: AtomicBool,
}

impl LocalLedger {
    /// `miner` must be the only miner of `genesis`.
    pub fn new(genesis: Genesis, miner: Keypair, clock: Arc<dyn Clock>, auto_seal: bool) -> Self {
        LocalLedger {
            node: Mutex::new(LedgerNode::new(genesis, Some(miner))),
            clock,
            auto_seal,
            available: AtomicBool::new(true),
        }
    }

    /// Genesis with `miner` as sole miner and `admin` as sole admin, starting at the clock.
    pub fn single(miner: Keypair, admin: &Keypair, clock: Arc<dyn Clock>, block_interval_ms: u64) -> Self {
        let genesis = Genesis {
            timestamp_ms: clock.now_ms(),
            block_interval_ms,
            miners: vec![miner.address()],
            admins: vec![admin.address()],
        };
        LocalLedger::new(genesis, miner, clock, true)
    }

    /// Simulates an outage: every call fails while unavailable.
    pub fn set_available(&self, up: bool) {
        self.available.store(up, Ordering::SeqCst);
    }

    pub fn seal(&self) -> Option<Block> {
        let now = self.clock.now_ms();
        self.node.lock().expect("ledger lock").seal(now)
    }

    pub fn with_node<R>(&self, f: impl FnOnce(&LedgerNode) -> R) -> R {
        f(&self.node.lock().expect("ledger lock"))
    }

    fn up(&self) -> Result<std::sync::MutexGuard<'_, LedgerNode>, LedgerError> {
        if !self.available.load(Ordering::SeqCst) {
            return Err(LedgerError::Unavailable("node down".into()));
        }
        Ok(self.node.lock().expect("ledger lock"))
    }
}

impl LedgerView for LocalLedger {
    fn address_of(&self, vid: &str) -> Result<Option<Address>, LedgerError> {
        Ok(self.up()?.chain().state().address_of(vid))
    }

    fn vid_of(&self, address: &Address) -> Result<Option<String>, LedgerError> {
        Ok(self.up()?.chain().state().identity(address).map(|e| e.vid.clone()))
    }

    fn grants(&self, vid: &str) -> Result<Vec<(String, GrantEntry)>, LedgerError> {
        Ok(self
            .up()?
            .chain()
            .state()
            .grants_of(vid)
            .map(|(r, g)| (r.to_string(), g.clone()))
            .collect())
    }

    fn hia(&self, key: &str) -> Result<Option<HiaEntry>, LedgerError> {
        Ok(self.up()?.chain().state().hia(key).cloned())
    }

    fn last_nonce(&self, address: &Address) -> Result<u64, LedgerError> {
        Ok(self.up()?.chain().state().last_nonce(address))
    }

    fn submit(&self, tx: &Transaction) -> Result<Hash32, LedgerError> {
        let mut node = self.up()?;
        let id = node.submit(tx.clone()).map_err(|e| LedgerError::Refused(e.to_string()))?;
        if self.auto_seal {
            node.seal(self.clock.now_ms());
        }
        Ok(id)
    }

    fn receipt(&self, tx_id: &Hash32) -> Result<Option<Receipt>, LedgerError> {
        Ok(self.up()?.chain().receipt(tx_id).cloned())
    }

    fn block_interval_ms(&self) -> u64 {
        self.node.lock().expect("ledger lock").chain().genesis().block_interval_ms
    }
}
