use std::collections::HashSet;

use super::crypto::Hash32;
use super::state::{ContractState, Inadmissible};
use super::tx::Transaction;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PoolError {
    #[error("{0}")]
    Inadmissible(Inadmissible),
    #[error("duplicate transaction")]
    Duplicate,
    #[error("pool full")]
    Full,
}

/// Pending transactions in arrival order.
#[derive(Debug, Clone)]
pub struct TxPool {
    txs: Vec<Transaction>,
    ids: HashSet<Hash32>,
    capacity: usize,
}

impl Default for TxPool {
    fn default() -> Self {
        TxPool::new(100_000)
    }
}

impl TxPool {
    pub fn new(capacity: usize) -> Self {
        TxPool {
            txs: Vec::new(),
            ids: HashSet::new(),
            capacity,
        }
    }

    /// Accepts signed transactions from registered senders whose nonce is still ahead of
    /// the committed one. Nonce gaps wait in the pool.
    pub fn add(&mut self, tx: Transaction, state: &ContractState) -> Result<Hash32, PoolError> {
        if !tx.verify_signature() {
            return Err(PoolError::Inadmissible(Inadmissible::Signature));
        }
        if state.identity(&tx.sender).is_none() {
            return Err(PoolError::Inadmissible(Inadmissible::UnknownSender));
        }
        let last = state.last_nonce(&tx.sender);
        if tx.nonce <= last {
            return Err(PoolError::Inadmissible(Inadmissible::Nonce {
                expected: last + 1,
                got: tx.nonce,
            }));
        }
        let id = tx.id();
        if self.ids.contains(&id) || self.txs.iter().any(|t| t.sender == tx.sender && t.nonce == tx.nonce) {
            return Err(PoolError::Duplicate);
        }
        if self.txs.len() >= self.capacity {
            return Err(PoolError::Full);
        }
        self.ids.insert(id);
        self.txs.push(tx);
        Ok(id)
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.txs
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    /// Drops transactions whose nonce has been consumed on chain.
    pub fn prune(&mut self, state: &ContractState) {
        let ids = &mut self.ids;
        self.txs.retain(|tx| {
            let keep = tx.nonce > state.last_nonce(&tx.sender);
            if !keep {
                ids.remove(&tx.id());
            }
            keep
        });
    }
}
