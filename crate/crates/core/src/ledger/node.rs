use super::block::{Block, Genesis};
use super::chain::{Chain, Rejection};
use super::crypto::{Hash32, Keypair};
use super::pool::{PoolError, TxPool};
use super::tx::Transaction;

/// Single-threaded core of a ledger node: chain, pool and (for miners) the proposer key.
#[derive(Debug)]
pub struct LedgerNode {
    chain: Chain,
    pool: TxPool,
    key: Option<Keypair>,
}

impl LedgerNode {
    pub fn new(genesis: Genesis, key: Option<Keypair>) -> Self {
        LedgerNode {
            chain: Chain::new(genesis),
            pool: TxPool::default(),
            key,
        }
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn pool(&self) -> &TxPool {
        &self.pool
    }

    pub fn is_miner(&self) -> bool {
        self.key
            .as_ref()
            .is_some_and(|k| self.chain.genesis().miners.contains(&k.address()))
    }

    pub fn submit(&mut self, tx: Transaction) -> Result<Hash32, PoolError> {
        if let Some(r) = self.chain.receipt(&tx.id()) {
            return Ok(r.tx_id);
        }
        self.pool.add(tx, self.chain.state())
    }

    /// Proposes when `now_ms` falls in this node's turn and the slot is still open.
    pub fn tick(&mut self, now_ms: u64) -> Option<Block> {
        let key = self.key.as_ref()?;
        let slot = self.chain.slot_of(now_ms);
        if slot == 0 || slot <= self.chain.head().header.slot || self.chain.proposer_for_slot(slot) != key.address() {
            return None;
        }
        let block = self.chain.propose(slot, self.pool.pending(), key).ok()?;
        self.chain.append(block.clone()).expect("own proposal validates");
        self.pool.prune(self.chain.state());
        Some(block)
    }

    /// Proposes immediately at this node's first turn not earlier than `now_ms` and after
    /// the head, regardless of the wall clock. Used by in-process deployments.
    pub fn seal(&mut self, now_ms: u64) -> Option<Block> {
        let key = self.key.as_ref()?;
        let n = self.chain.genesis().miners.len() as u64;
        let mut slot = self.chain.slot_of(now_ms).max(self.chain.head().header.slot + 1);
        for _ in 0..n {
            if self.chain.proposer_for_slot(slot) == key.address() {
                let block = self.chain.propose(slot, self.pool.pending(), key).ok()?;
                self.chain.append(block.clone()).expect("own proposal validates");
                self.pool.prune(self.chain.state());
                return Some(block);
            }
            slot += 1;
        }
        None
    }

    pub fn receive(&mut self, block: Block) -> Result<(), Rejection> {
        self.chain.append(block)?;
        self.pool.prune(self.chain.state());
        Ok(())
    }
}
