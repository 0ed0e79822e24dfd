//! Message envelope shared by every protocol message.
//!
//! ```text
//! "FSL1" | role (1) | round (8, BE) | client id (4, BE) | payload length (8, BE) | payload
//! ```

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FSL1";
pub const ENVELOPE_HEADER_BYTES: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Role {
    PsrQuery = 1,
    PsrAnswer = 2,
    SsaUpload = 3,
    SsaHint = 4,
    SsaShare = 5,
}

impl Role {
    pub fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Role::PsrQuery,
            2 => Role::PsrAnswer,
            3 => Role::SsaUpload,
            4 => Role::SsaHint,
            5 => Role::SsaShare,
            _ => return Err(Error::format(format!("unknown role byte {b}"))),
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            Role::PsrQuery => "PSR_Q",
            Role::PsrAnswer => "PSR_A",
            Role::SsaUpload => "SSA_U",
            Role::SsaHint => "SSA_HINT",
            Role::SsaShare => "SSA_SHARE",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub role: Role,
    pub round: u64,
    pub client_id: u32,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn new(role: Role, round: u64, client_id: u32, payload: Vec<u8>) -> Self {
        Self { role, round, client_id, payload }
    }

    pub fn encoded_len(&self) -> usize {
        ENVELOPE_HEADER_BYTES + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.push(self.role as u8);
        out.extend_from_slice(&self.round.to_be_bytes());
        out.extend_from_slice(&self.client_id.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < ENVELOPE_HEADER_BYTES || &bytes[..4] != MAGIC {
            return Err(Error::format("not an FSL1 envelope"));
        }
        let role = Role::from_byte(bytes[4])?;
        let round = u64::from_be_bytes(bytes[5..13].try_into().expect("8 bytes"));
        let client_id = u32::from_be_bytes(bytes[13..17].try_into().expect("4 bytes"));
        let len = u64::from_be_bytes(bytes[17..25].try_into().expect("8 bytes"));
        let payload = &bytes[ENVELOPE_HEADER_BYTES..];
        if payload.len() as u64 != len {
            return Err(Error::format(format!("payload length {} but header says {len}", payload.len())));
        }
        Ok(Self { role, round, client_id, payload: payload.to_vec() })
    }
}
