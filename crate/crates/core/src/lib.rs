pub mod abi;
pub mod crypto;
pub mod ir;
pub mod split;
pub mod ledger;
pub mod betting;
pub mod protocol;
pub mod scenario;

pub use betting::BettingConfig;
pub use crypto::{Address, Hash32, PrivateKey, Signature};
pub use ir::{ContractSpec, Word};
pub use ledger::Chain;
pub use protocol::{Policy, ProtocolRun, Schedule, Stage};
pub use scenario::ScenarioFile;
pub use split::{OffChainArtifact, OnChainArtifact, SignedCopy};
