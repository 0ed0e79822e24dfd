//! The additive group `Z_{2^l}` and `tau`-wide vectors over it.
//!
//! Every weight, update, share and DPF output lives here. Elements are stored as `u128` values
//! already reduced modulo `2^l`, so addition is wrapping addition followed by a mask.

use crate::error::{Error, Result};
use std::fmt;

/// A single base-group element, always reduced modulo `2^l`.
pub type GroupElement = u128;

/// Shape of the output group: base width `l` and mega-element width `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GroupParams {
    l: u32,
    tau: u16,
}

impl GroupParams {
    pub fn new(l: u32, tau: usize) -> Result<Self> {
        if !matches!(l, 32 | 64 | 128) {
            return Err(Error::param(format!("group width l={l} must be one of 32, 64, 128")));
        }
        if tau == 0 || tau > u16::MAX as usize {
            return Err(Error::param(format!("mega-element width tau={tau} out of range")));
        }
        Ok(Self { l, tau: tau as u16 })
    }

    /// `l = 128, tau = 1`.
    pub fn default_scalar() -> Self {
        Self { l: 128, tau: 1 }
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn tau(&self) -> usize {
        self.tau as usize
    }

    /// Effective element size `L = tau * l` in bits.
    pub fn element_bits(&self) -> u64 {
        self.tau as u64 * self.l as u64
    }

    /// Bytes per base element on the wire.
    pub fn base_bytes(&self) -> usize {
        (self.l / 8) as usize
    }

    /// Bytes of one serialized [`GroupVector`].
    pub fn vector_bytes(&self) -> usize {
        self.base_bytes() * self.tau()
    }

    #[inline]
    pub fn mask(&self) -> u128 {
        if self.l == 128 {
            u128::MAX
        } else {
            (1u128 << self.l) - 1
        }
    }

    /// Same base width, scalar output.
    pub fn scalar(&self) -> Self {
        Self { l: self.l, tau: 1 }
    }
}

impl Default for GroupParams {
    fn default() -> Self {
        Self::default_scalar()
    }
}

/// A length-`tau` vector over `Z_{2^l}`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GroupVector {
    params: GroupParams,
    elems: Vec<GroupElement>,
}

impl fmt::Debug for GroupVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupVector(l={}, {:x?})", self.params.l, self.elems)
    }
}

impl GroupVector {
    pub fn zero(params: GroupParams) -> Self {
        Self { params, elems: vec![0; params.tau()] }
    }

    /// Builds a vector, reducing each component modulo `2^l`.
    pub fn from_elems(params: GroupParams, elems: Vec<u128>) -> Result<Self> {
        if elems.len() != params.tau() {
            return Err(Error::param(format!(
                "expected {} components, got {}",
                params.tau(),
                elems.len()
            )));
        }
        let mask = params.mask();
        Ok(Self { params, elems: elems.into_iter().map(|e| e & mask).collect() })
    }

    /// Every component set to `value` (reduced).
    pub fn splat(params: GroupParams, value: u128) -> Self {
        Self { params, elems: vec![value & params.mask(); params.tau()] }
    }

    pub fn params(&self) -> GroupParams {
        self.params
    }

    pub fn elems(&self) -> &[GroupElement] {
        &self.elems
    }

    pub fn is_zero(&self) -> bool {
        self.elems.iter().all(|&e| e == 0)
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.params != other.params {
            return Err(Error::param(format!(
                "group mismatch: {:?} vs {:?}",
                self.params, other.params
            )));
        }
        Ok(())
    }

    /// Component-wise sum modulo `2^l`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mask = self.params.mask();
        let elems = self
            .elems
            .iter()
            .zip(&other.elems)
            .map(|(a, b)| a.wrapping_sub(*b) & mask)
            .collect();
        Ok(Self { params: self.params, elems })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check(other)?;
        self.add_assign_unchecked(other);
        Ok(())
    }

    /// Caller guarantees matching parameters.
    #[inline]
    pub(crate) fn add_assign_unchecked(&mut self, other: &Self) {
        debug_assert_eq!(self.params, other.params);
        let mask = self.params.mask();
        for (a, b) in self.elems.iter_mut().zip(&other.elems) {
            *a = a.wrapping_add(*b) & mask;
        }
    }

    pub fn neg(&self) -> Self {
        let mask = self.params.mask();
        Self {
            params: self.params,
            elems: self.elems.iter().map(|a| a.wrapping_neg() & mask).collect(),
        }
    }

    /// Multiplies every component by a base-group scalar (PSR inner products).
    pub fn scale(&self, scalar: u128) -> Self {
        let mask = self.params.mask();
        Self {
            params: self.params,
            elems: self.elems.iter().map(|a| a.wrapping_mul(scalar) & mask).collect(),
        }
    }

    /// `l/8` big-endian bytes per component.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.params.vector_bytes());
        self.write_bytes(&mut out);
        out
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        let n = self.params.base_bytes();
        for e in &self.elems {
            out.extend_from_slice(&e.to_be_bytes()[16 - n..]);
        }
    }

    pub fn from_bytes(params: GroupParams, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != params.vector_bytes() {
            return Err(Error::format(format!(
                "group vector needs {} bytes, got {}",
                params.vector_bytes(),
                bytes.len()
            )));
        }
        Ok(Self { params, elems: bytes.chunks(params.base_bytes()).map(be_to_u128).collect() })
    }
}

pub(crate) fn be_to_u128(chunk: &[u8]) -> u128 {
    chunk.iter().fold(0u128, |acc, &b| (acc << 8) | b as u128)
}

/// Functional form of [`GroupVector::add`].
pub fn group_add(a: &GroupVector, b: &GroupVector) -> Result<GroupVector> {
    a.add(b)
}

/// Functional form of [`GroupVector::neg`].
pub fn group_neg(a: &GroupVector) -> GroupVector {
    a.neg()
}

/// Packs flat weights into `ceil(m / tau)` mega-elements, zero-padding the trailing group.
pub fn group_weights(params: GroupParams, weights: &[u128]) -> Vec<GroupVector> {
    let tau = params.tau();
    weights
        .chunks(tau)
        .map(|chunk| {
            let mut elems = chunk.iter().map(|w| w & params.mask()).collect::<Vec<_>>();
            elems.resize(tau, 0);
            GroupVector { params, elems }
        })
        .collect()
}

/// Inverse of [`group_weights`]: flattens and drops padding beyond `m`.
pub fn flatten_weights(vectors: &[GroupVector], m: usize) -> Vec<u128> {
    let mut out: Vec<u128> = vectors.iter().flat_map(|v| v.elems.iter().copied()).collect();
    out.truncate(m);
    out
}
