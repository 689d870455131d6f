//! Permissioned hash-chained ledger: canonical encoding, signed transactions, round-robin
//! proof-of-authority blocks and the registry/HIA/ACL contract state.

mod block;
mod chain;
pub mod codec;
mod crypto;
mod node;
mod pool;
mod state;
mod tx;

pub use block::{tx_root, Block, BlockHeader, Genesis};
pub use chain::{Chain, Receipt, Rejection, MAX_BLOCK_TXS};
pub use crypto::{sha256, verify, Address, Hash32, Keypair, Sig};
pub use node::LedgerNode;
pub use pool::{PoolError, TxPool};
pub use state::{covers, hia_resource, ContractState, GrantEntry, HiaEntry, Inadmissible, VidEntry};
pub use tx::{Actions, Call, Contract, Transaction};
