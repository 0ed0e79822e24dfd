//! Two-server secure federated submodel learning.
//!
//! The crate is organised bottom-up:
//!
//! * [`group`] and [`primitives`]: the additive group `Z_{2^l}` (optionally grouped into
//!   `tau`-wide mega-elements) plus the deterministic PRG / PRF / random-oracle maps.
//! * [`dpf`]: tree-based two-party distributed point functions with full-domain evaluation and a
//!   byte-exact key format.
//! * [`udpf`]: the updatable variant, whose value can be re-targeted per epoch by shipping only a
//!   replacement final correction word.
//! * [`batch_code`]: aligned cuckoo / simple hash tables that turn a multi-index query into one
//!   point query per bin.
//! * [`protocol`]: private submodel retrieval (PSR) and secure submodel aggregation (SSA).
//! * [`analytics`]: closed-form communication cost and rate analysis.
//! * [`harness`]: deterministic in-process simulation with byte accounting and plaintext oracles.

pub mod analytics;
pub mod batch_code;
pub mod dpf;
pub mod error;
pub mod group;
pub mod harness;
pub mod primitives;
pub mod protocol;
pub mod udpf;


pub use batch_code::{CuckooTable, PositionIndex, SimpleTable, TableSpec};
pub use dpf::{CorrectionWord, DpfKey, DpfParams, DpfPublicPart, Party};
pub use error::{Error, Result};
pub use group::{GroupParams, GroupVector};
pub use primitives::Seed;
pub use udpf::{ClientTrapdoor, Hint, UdpfKey};


/// Computational security parameter in bits.
pub const LAMBDA: u32 = 128;
