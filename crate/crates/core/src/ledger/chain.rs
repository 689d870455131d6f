use std::collections::HashMap;

use super::block::{tx_root, Block, BlockHeader, Genesis};
use super::crypto::{Address, Hash32, Keypair};
use super::state::{ContractState, Inadmissible};
use super::tx::Transaction;
use super::codec::CodecError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub tx_id: Hash32,
    pub height: u64,
    pub index: usize,
    pub outcome: Result<(), String>,
}

impl Receipt {
    pub fn is_ok(&self) -> bool {
        self.outcome.is_ok()
    }
}

/// Reason a block is refused; the chain is unchanged.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("undecodable block: {0}")]
    Decode(CodecError),
    #[error("height {got}, expected {expected}")]
    Height { expected: u64, got: u64 },
    #[error("previous hash does not match the head")]
    BrokenLinkage,
    #[error("proposer is not a miner")]
    NotMiner,
    #[error("slot {got} not after head slot {head}")]
    StaleSlot { head: u64, got: u64 },
    #[error("timestamp does not fall in slot {slot}")]
    Timestamp { slot: u64 },
    #[error("out-of-turn proposer for slot {slot}")]
    OutOfTurn { slot: u64 },
    #[error("bad proposer signature")]
    ProposerSignature,
    #[error("transactions hash mismatch")]
    TxRoot,
    #[error("transaction {index}: {reason}")]
    Transaction { index: usize, reason: Inadmissible },
}

/// Validated chain with the folded contract state and receipts.
#[derive(Debug, Clone)]
pub struct Chain {
    genesis: Genesis,
    blocks: Vec<Block>,
    hashes: Vec<Hash32>,
    state: ContractState,
    receipts: HashMap<Hash32, Receipt>,
}

impl Chain {
    pub fn new(genesis: Genesis) -> Self {
        let g = Block::genesis(&genesis);
        Chain {
            hashes: vec![g.hash()],
            blocks: vec![g],
            state: ContractState::with_admins(&genesis.admins),
            genesis,
            receipts: HashMap::new(),
        }
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("genesis always present")
    }

    pub fn head_hash(&self) -> Hash32 {
        *self.hashes.last().expect("genesis always present")
    }

    pub fn height(&self) -> u64 {
        self.head().height()
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(usize::try_from(height).ok()?)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn state(&self) -> &ContractState {
        &self.state
    }

    pub fn receipt(&self, tx_id: &Hash32) -> Option<&Receipt> {
        self.receipts.get(tx_id)
    }

    /// Slot whose time window contains `time_ms`; 0 before the genesis time.
    pub fn slot_of(&self, time_ms: u64) -> u64 {
        match time_ms.checked_sub(self.genesis.timestamp_ms) {
            Some(d) => d / self.genesis.block_interval_ms + 1,
            None => 0,
        }
    }

    pub fn slot_start(&self, slot: u64) -> u64 {
        self.genesis.timestamp_ms + slot.saturating_sub(1) * self.genesis.block_interval_ms
    }

    pub fn proposer_for_slot(&self, slot: u64) -> Address {
        let n = self.genesis.miners.len() as u64;
        self.genesis.miners[(slot.saturating_sub(1) % n) as usize]
    }

    /// Checks `block` against the head and returns the state and receipts it produces.
    pub fn validate(&self, block: &Block) -> Result<(ContractState, Vec<Receipt>), Rejection> {
        let h = &block.header;
        let head = self.head();
        if h.height != head.height() + 1 {
            return Err(Rejection::Height {
                expected: head.height() + 1,
                got: h.height,
            });
        }
        if h.prev_hash != self.head_hash() {
            return Err(Rejection::BrokenLinkage);
        }
        if !self.genesis.miners.contains(&h.proposer) {
            return Err(Rejection::NotMiner);
        }
        if h.slot <= head.header.slot {
            return Err(Rejection::StaleSlot {
                head: head.header.slot,
                got: h.slot,
            });
        }
        if self.slot_of(h.timestamp_ms) != h.slot {
            return Err(Rejection::Timestamp { slot: h.slot });
        }
        if self.proposer_for_slot(h.slot) != h.proposer {
            return Err(Rejection::OutOfTurn { slot: h.slot });
        }
        if !block.verify_signature() {
            return Err(Rejection::ProposerSignature);
        }
        if tx_root(&block.txs) != h.tx_hash {
            return Err(Rejection::TxRoot);
        }
        let mut state = self.state.clone();
        let mut receipts = Vec::with_capacity(block.txs.len());
        for (index, tx) in block.txs.iter().enumerate() {
            state
                .check_admission(tx)
                .map_err(|reason| Rejection::Transaction { index, reason })?;
            let outcome = state.apply(tx, h.height, h.timestamp_ms);
            receipts.push(Receipt {
                tx_id: tx.id(),
                height: h.height,
                index,
                outcome,
            });
        }
        Ok((state, receipts))
    }

    pub fn append(&mut self, block: Block) -> Result<Vec<Receipt>, Rejection> {
        let (state, receipts) = self.validate(&block)?;
        self.state = state;
        for r in &receipts {
            self.receipts.insert(r.tx_id, r.clone());
        }
        self.hashes.push(block.hash());
        self.blocks.push(block);
        Ok(receipts)
    }

    /// Builds and signs the block for `slot` from `candidates`, skipping any that are not
    /// admissible in sequence. Fails if `key` is not the proposer for `slot`.
    pub fn propose(&self, slot: u64, candidates: &[Transaction], key: &Keypair) -> Result<Block, Rejection> {
        if self.proposer_for_slot(slot) != key.address() {
            return Err(Rejection::OutOfTurn { slot });
        }
        if slot <= self.head().header.slot {
            return Err(Rejection::StaleSlot {
                head: self.head().header.slot,
                got: slot,
            });
        }
        let timestamp_ms = self.slot_start(slot);
        let mut state = self.state.clone();
        let mut picked: Vec<Transaction> = Vec::new();
        let mut remaining: Vec<&Transaction> = candidates.iter().collect();
        // several passes so a later-arriving lower nonce still unblocks its successors
        loop {
            let before = picked.len();
            remaining.retain(|tx| {
                if state.check_admission(tx).is_ok() {
                    let _ = state.apply(tx, self.height() + 1, timestamp_ms);
                    picked.push((*tx).clone());
                    false
                } else {
                    true
                }
            });
            if picked.len() == before || picked.len() >= MAX_BLOCK_TXS {
                break;
            }
        }
        picked.truncate(MAX_BLOCK_TXS);
        let header = BlockHeader {
            height: self.height() + 1,
            prev_hash: self.head_hash(),
            timestamp_ms,
            slot,
            tx_hash: [0; 32],
            proposer: key.address(),
        };
        Ok(Block::build(header, picked, key))
    }

    /// Folds `blocks` (heights 1..) from `genesis`; on failure reports the offending height.
    pub fn replay(genesis: Genesis, blocks: &[Block]) -> Result<Chain, (u64, Rejection)> {
        let mut chain = Chain::new(genesis);
        for (i, b) in blocks.iter().enumerate() {
            chain.append(b.clone()).map_err(|e| (i as u64 + 1, e))?;
        }
        Ok(chain)
    }

    /// Like [`Chain::replay`] over encoded blocks. Index 0 must be the encoded genesis
    /// block, which must match `genesis`.
    pub fn validate_from_genesis(genesis: Genesis, encoded: &[Vec<u8>]) -> Result<Chain, (u64, Rejection)> {
        let mut chain = Chain::new(genesis);
        for (i, bytes) in encoded.iter().enumerate() {
            let block = Block::decode(bytes).map_err(|e| (i as u64, Rejection::Decode(e)))?;
            if i == 0 {
                if block != *chain.head() {
                    return Err((0, Rejection::BrokenLinkage));
                }
                continue;
            }
            chain.append(block).map_err(|e| (i as u64, e))?;
        }
        Ok(chain)
    }
}

pub const MAX_BLOCK_TXS: usize = 4096;
