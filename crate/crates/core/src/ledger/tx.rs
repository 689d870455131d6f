use std::fmt;
use std::str::FromStr;

use super::codec::{CodecError, Reader, Writer};
use super::crypto::{sha256, verify, Address, Hash32, Keypair, Sig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Contract {
    Registry,
    Hia,
    Acl,
}

impl Contract {
    pub fn name(self) -> &'static str {
        match self {
            Contract::Registry => "registry",
            Contract::Hia => "hia",
            Contract::Acl => "acl",
        }
    }

    fn code(self) -> u8 {
        match self {
            Contract::Registry => 1,
            Contract::Hia => 2,
            Contract::Acl => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(Contract::Registry),
            2 => Some(Contract::Hia),
            3 => Some(Contract::Acl),
            _ => None,
        }
    }
}

impl FromStr for Contract {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "registry" => Ok(Contract::Registry),
            "hia" => Ok(Contract::Hia),
            "acl" => Ok(Contract::Acl),
            _ => Err(format!("unknown contract {s:?}")),
        }
    }
}

/// Subset of `{read, manage}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Actions(u8);

impl Actions {
    pub const NONE: Actions = Actions(0);
    pub const READ: Actions = Actions(1);
    pub const MANAGE: Actions = Actions(2);
    pub const ALL: Actions = Actions(3);

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(b: u8) -> Option<Self> {
        (b & !3 == 0).then_some(Actions(b))
    }

    pub fn contains(self, other: Actions) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn union(self, other: Actions) -> Actions {
        Actions(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Actions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(Actions::READ, "read"), (Actions::MANAGE, "manage")]
            .iter()
            .filter(|(a, _)| self.contains(*a))
            .map(|(_, n)| *n)
            .collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for Actions {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .try_fold(Actions::NONE, |acc, p| match p {
                "read" => Ok(acc.union(Actions::READ)),
                "manage" => Ok(acc.union(Actions::MANAGE)),
                _ => Err(format!("unknown action {p:?}")),
            })
    }
}

/// Contract calls with their canonical argument encodings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Call {
    /// registry.register: bind `address` to its VID.
    Register { address: Address },
    /// hia.record: write-once hash for `key`.
    Record { key: String, hash: Hash32 },
    /// acl.grant: capability for `subject` on `resource` until `expiry_ms`.
    Grant {
        subject: String,
        resource: String,
        actions: Actions,
        expiry_ms: u64,
    },
}

impl Call {
    pub fn target(&self) -> (Contract, &'static str) {
        match self {
            Call::Register { .. } => (Contract::Registry, "register"),
            Call::Record { .. } => (Contract::Hia, "record"),
            Call::Grant { .. } => (Contract::Acl, "grant"),
        }
    }

    pub fn encode_args(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Call::Register { address } => w.field(&address.0),
            Call::Record { key, hash } => w.str(key).field(hash),
            Call::Grant {
                subject,
                resource,
                actions,
                expiry_ms,
            } => w.str(subject).str(resource).u8(actions.bits()).u64(*expiry_ms),
        };
        w.finish()
    }

    /// `None` for an unknown method; `Some(Err)` for malformed arguments.
    pub fn decode(contract: Contract, method: &str, args: &[u8]) -> Option<Result<Call, CodecError>> {
        let mut r = Reader::new(args);
        let call = match (contract, method) {
            (Contract::Registry, "register") => r.fixed::<32>().map(|a| Call::Register { address: Address(a) }),
            (Contract::Hia, "record") => (|| {
                Ok(Call::Record {
                    key: r.str()?.to_string(),
                    hash: r.fixed::<32>()?,
                })
            })(),
            (Contract::Acl, "grant") => (|| {
                Ok(Call::Grant {
                    subject: r.str()?.to_string(),
                    resource: r.str()?.to_string(),
                    actions: Actions::from_bits(r.u8()?).ok_or(CodecError::Invalid("actions"))?,
                    expiry_ms: r.u64()?,
                })
            })(),
            _ => return None,
        };
        Some(call.and_then(|c| r.finish().map(|_| c)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub sender: Address,
    pub nonce: u64,
    pub contract: Contract,
    pub method: String,
    pub args: Vec<u8>,
    pub signature: Sig,
}

const TX_TAG: &str = "LISPS-TX-V1";

impl Transaction {
    pub fn new_signed(key: &Keypair, nonce: u64, contract: Contract, method: &str, args: Vec<u8>) -> Self {
        let mut tx = Transaction {
            sender: key.address(),
            nonce,
            contract,
            method: method.to_string(),
            args,
            signature: Sig::ZERO,
        };
        tx.signature = key.sign(&tx.signing_bytes());
        tx
    }

    pub fn call(key: &Keypair, nonce: u64, call: &Call) -> Self {
        let (contract, method) = call.target();
        Transaction::new_signed(key, nonce, contract, method, call.encode_args())
    }

    fn write_body(&self, w: &mut Writer) {
        w.str(TX_TAG)
            .field(&self.sender.0)
            .u64(self.nonce)
            .u8(self.contract.code())
            .str(&self.method)
            .field(&self.args);
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_body(&mut w);
        w.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_body(&mut w);
        w.field(&self.signature.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        r.expect_tag(TX_TAG)?;
        let tx = Transaction {
            sender: Address(r.fixed()?),
            nonce: r.u64()?,
            contract: Contract::from_code(r.u8()?).ok_or(CodecError::Invalid("contract"))?,
            method: r.str()?.to_string(),
            args: r.field()?.to_vec(),
            signature: Sig(r.fixed()?),
        };
        r.finish()?;
        Ok(tx)
    }

    pub fn id(&self) -> Hash32 {
        sha256(&self.encode())
    }

    pub fn verify_signature(&self) -> bool {
        verify(&self.sender, &self.signing_bytes(), &self.signature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tx_round_trip_and_signature() {
        let k = Keypair::from_seed([3; 32]);
        let call = Call::Grant {
            subject: "00112233aabbccdd".into(),
            resource: "camera/cam-01/features".into(),
            actions: Actions::READ,
            expiry_ms: 99,
        };
        let tx = Transaction::call(&k, 4, &call);
        assert!(tx.verify_signature());
        let back = Transaction::decode(&tx.encode()).unwrap();
        assert_eq!(back, tx);
        assert_eq!(Call::decode(back.contract, &back.method, &back.args), Some(Ok(call)));

        let mut forged = tx.clone();
        forged.nonce = 5;
        assert!(!forged.verify_signature());
    }

    #[test]
    fn unknown_method_is_none() {
        assert_eq!(Call::decode(Contract::Hia, "erase", &[]), None);
        assert!(matches!(Call::decode(Contract::Hia, "record", &[1, 2]), Some(Err(_))));
    }

    #[test]
    fn actions_text() {
        assert_eq!("read, manage".parse::<Actions>().unwrap(), Actions::ALL);
        assert_eq!(Actions::MANAGE.to_string(), "manage");
        assert!("write".parse::<Actions>().is_err());
        assert!(Actions::ALL.contains(Actions::READ));
        assert!(!Actions::READ.contains(Actions::MANAGE));
    }
}
