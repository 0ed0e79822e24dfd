//! Private submodel retrieval (PSR) and secure submodel aggregation (SSA) between `n` clients
//! and two non-colluding servers.
//!
//! A client hashes its selection into a cuckoo table with `B` bins and issues one DPF key per
//! bin (dummy keys for empty bins) plus `sigma` stash keys over the whole domain. Servers hold
//! the simple table of the same hash functions, so bin `j`'s key only needs a domain of
//! `2^ceil(log2 theta)` points.

mod client;
mod server;
mod setup;
mod wire;

pub use client::{
    decode_public_parts, encode_public_parts, hint_envelope, psr_client_query, psr_client_reconstruct,
    ssa_client_upload, ssa_client_upload_udpf, ssa_udpf_round, ClientState, ClientUpload, KeyKind,
};
pub use server::{
    materialize_keys, materialize_udpf_keys, psr_server_answer, ssa_finalize, ssa_server_aggregate,
    ssa_server_aggregate_literal, AggregateTimings, ClientKeys, ServerShare, ShareKey, UdpfServer,
};
pub use setup::{DomainMode, SystemSetup};
pub use wire::{Envelope, Role, ENVELOPE_HEADER_BYTES};
