use std::fmt;
use std::str::FromStr;

use super::codec::{CodecError, Reader, Writer};
use super::crypto::{sha256, verify, Address, Hash32, Keypair, Sig};
use super::tx::Transaction;

/// Fixed network parameters. Its hash is the transactions hash of block 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Genesis {
    pub timestamp_ms: u64,
    pub block_interval_ms: u64,
    /// Proposal order of the certificated miners.
    pub miners: Vec<Address>,
    /// Registered at genesis with `read,manage` on every resource.
    pub admins: Vec<Address>,
}

impl Genesis {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str("LISPS-GENESIS-V1")
            .u64(self.timestamp_ms)
            .u64(self.block_interval_ms)
            .u64(self.miners.len() as u64);
        for m in &self.miners {
            w.field(&m.0);
        }
        w.u64(self.admins.len() as u64);
        for a in &self.admins {
            w.field(&a.0);
        }
        w.finish()
    }

    pub fn hash(&self) -> Hash32 {
        sha256(&self.encode())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.miners.is_empty() {
            return Err("genesis needs at least one miner".into());
        }
        if self.block_interval_ms == 0 {
            return Err("block interval must be positive".into());
        }
        let mut sorted = self.miners.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.miners.len() {
            return Err("duplicate miner".into());
        }
        Ok(())
    }
}

/// Text form: `key = value` lines with `genesis_time_ms`, `block_interval_ms`, and one
/// `miner = <hex>` / `admin = <hex>` line per account, in order.
impl fmt::Display for Genesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "genesis_time_ms = {}", self.timestamp_ms)?;
        writeln!(f, "block_interval_ms = {}", self.block_interval_ms)?;
        for m in &self.miners {
            writeln!(f, "miner = {m}")?;
        }
        for a in &self.admins {
            writeln!(f, "admin = {a}")?;
        }
        Ok(())
    }
}

impl FromStr for Genesis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut g = Genesis {
            timestamp_ms: 0,
            block_interval_ms: 2_000,
            miners: vec![],
            admins: vec![],
        };
        for (i, line) in s.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            let v = v.trim();
            let num = |v: &str| v.parse::<u64>().map_err(|e| format!("line {}: {e}", i + 1));
            match k.trim() {
                "genesis_time_ms" => g.timestamp_ms = num(v)?,
                "block_interval_ms" => g.block_interval_ms = num(v)?,
                "miner" => g.miners.push(v.parse()?),
                "admin" => g.admins.push(v.parse()?),
                other => return Err(format!("line {}: unknown key {other:?}", i + 1)),
            }
        }
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Hash32,
    pub timestamp_ms: u64,
    /// Proposal turn; the proposer is `miners[(slot - 1) % n]`.
    pub slot: u64,
    pub tx_hash: Hash32,
    pub proposer: Address,
}

impl BlockHeader {
    pub fn encode(&self) -> Vec<u8> {
        Writer::new()
            .str("LISPS-BLOCK-V1")
            .u64(self.height)
            .field(&self.prev_hash)
            .u64(self.timestamp_ms)
            .u64(self.slot)
            .field(&self.tx_hash)
            .field(&self.proposer.0)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<Transaction>,
    /// Proposer signature over the block hash.
    pub signature: Sig,
}

/// Hash of the canonical transaction list.
pub fn tx_root(txs: &[Transaction]) -> Hash32 {
    let mut w = Writer::new();
    w.str("LISPS-TXS-V1").u64(txs.len() as u64);
    for tx in txs {
        w.field(&tx.encode());
    }
    sha256(&w.finish())
}

impl Block {
    pub fn genesis(g: &Genesis) -> Block {
        Block {
            header: BlockHeader {
                height: 0,
                prev_hash: [0; 32],
                timestamp_ms: g.timestamp_ms,
                slot: 0,
                tx_hash: g.hash(),
                proposer: Address::ZERO,
            },
            txs: vec![],
            signature: Sig::ZERO,
        }
    }

    pub fn build(header: BlockHeader, txs: Vec<Transaction>, key: &Keypair) -> Block {
        let mut b = Block {
            header,
            txs,
            signature: Sig::ZERO,
        };
        b.header.tx_hash = tx_root(&b.txs);
        b.header.proposer = key.address();
        b.signature = key.sign(&b.hash());
        b
    }

    /// SHA-256 of the canonical header encoding.
    pub fn hash(&self) -> Hash32 {
        sha256(&self.header.encode())
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    pub fn verify_signature(&self) -> bool {
        verify(&self.header.proposer, &self.hash(), &self.signature)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.field(&self.header.encode()).u64(self.txs.len() as u64);
        for tx in &self.txs {
            w.field(&tx.encode());
        }
        w.field(&self.signature.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Block, CodecError> {
        let mut r = Reader::new(bytes);
        let mut h = Reader::new(r.field()?);
        h.expect_tag("LISPS-BLOCK-V1")?;
        let header = BlockHeader {
            height: h.u64()?,
            prev_hash: h.fixed()?,
            timestamp_ms: h.u64()?,
            slot: h.u64()?,
            tx_hash: h.fixed()?,
            proposer: Address(h.fixed()?),
        };
        h.finish()?;
        let n = r.u64()?;
        let mut txs = Vec::new();
        for _ in 0..n {
            txs.push(Transaction::decode(r.field()?)?);
        }
        let signature = Sig(r.fixed()?);
        r.finish()?;
        Ok(Block {
            header,
            txs,
            signature,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::tx::{Call, Transaction};

    #[test]
    fn genesis_text_round_trip() {
        let g = Genesis {
            timestamp_ms: 5,
            block_interval_ms: 2000,
            miners: vec![Keypair::from_seed([1; 32]).address()],
            admins: vec![Keypair::from_seed([9; 32]).address()],
        };
        assert_eq!(g.to_string().parse::<Genesis>().unwrap(), g);
        assert!("block_interval_ms = 2000".parse::<Genesis>().is_err());
    }

    #[test]
    fn block_round_trip_and_signature() {
        let k = Keypair::from_seed([1; 32]);
        let tx = Transaction::call(&k, 1, &Call::Register { address: k.address() });
        let header = BlockHeader {
            height: 1,
            prev_hash: [4; 32],
            timestamp_ms: 10,
            slot: 1,
            tx_hash: [0; 32],
            proposer: Address::ZERO,
        };
        let b = Block::build(header, vec![tx], &k);
        assert!(b.verify_signature());
        assert_eq!(Block::decode(&b.encode()).unwrap(), b);
        assert_eq!(b.header.tx_hash, tx_root(&b.txs));
    }
}
