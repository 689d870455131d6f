#![allow(dead_code)]

use lisps_core::ledger::{Actions, Block, Call, Chain, Genesis, Keypair, Transaction};

pub struct Net {
    pub miners: Vec<Keypair>,
    pub admin: Keypair,
    pub chain: Chain,
}

pub fn seeded(b: u8) -> Keypair {
    Keypair::from_seed([b; 32])
}

impl Net {
    /// Miners seeded 1, 2, 3; admin seeded 9; genesis at t = 0, 2 s interval.
    pub fn new() -> Net {
        let miners = vec![seeded(1), seeded(2), seeded(3)];
        let admin = seeded(9);
        let genesis = Genesis {
            timestamp_ms: 0,
            block_interval_ms: 2_000,
            miners: miners.iter().map(Keypair::address).collect(),
            admins: vec![admin.address()],
        };
        Net {
            miners,
            admin,
            chain: Chain::new(genesis),
        }
    }

    pub fn in_turn(&self, slot: u64) -> &Keypair {
        &self.miners[((slot - 1) % 3) as usize]
    }

    /// Appends the next in-turn block carrying `txs`.
    pub fn mine(&mut self, txs: &[Transaction]) -> Block {
        let slot = self.chain.head().header.slot + 1;
        let b = self.chain.propose(slot, txs, &self.miners[((slot - 1) % 3) as usize].clone()).unwrap();
        self.chain.append(b.clone()).unwrap();
        b
    }

    pub fn nonce(&self, k: &Keypair) -> u64 {
        self.chain.state().last_nonce(&k.address()) + 1
    }

    pub fn tx(&self, k: &Keypair, call: Call) -> Transaction {
        Transaction::call(k, self.nonce(k), &call)
    }

    /// Registers `k` and grants it `manage` on `camera/<camera>`.
    pub fn enroll_recorder(&mut self, k: &Keypair, camera: &str) {
        let a = self.admin.clone();
        let t1 = Transaction::call(&a, self.nonce(&a), &Call::Register { address: k.address() });
        let t2 = Transaction::call(
            &a,
            self.nonce(&a) + 1,
            &Call::Grant {
                subject: k.vid(),
                resource: format!("camera/{camera}"),
                actions: Actions::MANAGE,
                expiry_ms: u64::MAX,
            },
        );
        self.mine(&[t1, t2]);
    }
}
