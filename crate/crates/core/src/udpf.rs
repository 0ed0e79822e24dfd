//! Updatable DPF.
//!
//! Identical tree to [`crate::dpf`], but leaf outputs are converted with the epoch-indexed random
//! oracle `H(s, e)` instead of the PRG. Because the mask at the leaf changes with the epoch, the
//! client can re-target `beta` for epoch `e + 1` by publishing only a fresh final correction word
//!
//! ```text
//! final_cw(e) = (-1)^{t1} * (beta' - H(s0, e) + H(s1, e))
//! ```
//!
//! which both servers install through [`UdpfKey::update`]. The client keeps a [`ClientTrapdoor`]
//! (the two leaf seeds on the programmed path plus `t1`) instead of both full keys.

use crate::dpf::{
    final_correction, gen_tree, leaf_share, DpfKey, DpfParams, DpfPublicPart, FullDomainEval, Party, PathLeaf,
};
use crate::error::{Error, Result};
use crate::group::{GroupParams, GroupVector};
use crate::primitives::{ro_hash_to_group, Seed};
use rand::{CryptoRng, RngCore};

const MAGIC_HINT: &[u8; 4] = b"UHNT";
/// Magic, epoch and count.
pub const HINT_HEADER_BYTES: usize = 16;

/// A DPF key bound to the epoch its final correction word was built for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UdpfKey {
    inner: DpfKey,
    epoch: u64,
}

/// Client-side state sufficient to issue hints for one key pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientTrapdoor {
    group: GroupParams,
    leaf: PathLeaf,
    epoch: u64,
}

/// Replacement final correction words for one epoch, in key order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hint {
    pub epoch: u64,
    pub new_final_cws: Vec<GroupVector>,
}

fn ro_final_cw(beta: &GroupVector, leaf: &PathLeaf, epoch: u64) -> GroupVector {
    let g = beta.params();
    final_correction(beta, &ro_hash_to_group(&leaf.s0, epoch, g), &ro_hash_to_group(&leaf.s1, epoch, g), leaf.t1)
}

/// Epoch-0 key pair from explicit root seeds.
pub fn udpf_gen_with_seeds(
    params: DpfParams,
    alpha: u64,
    beta: &GroupVector,
    roots: (Seed, Seed),
) -> Result<(UdpfKey, UdpfKey, ClientTrapdoor)> {
    if alpha >= params.domain_size() {
        return Err(Error::Domain { index: alpha, depth: params.depth() });
    }
    if beta.params() != params.group() {
        return Err(Error::param(format!(
            "beta group {:?} does not match key group {:?}",
            beta.params(),
            params.group()
        )));
    }
    let (cws, leaf) = gen_tree(params, alpha, roots);
    let public = DpfPublicPart { params, cws, final_cw: ro_final_cw(beta, &leaf, 0) };
    let k0 = UdpfKey { inner: public.clone().into_key(Party::Zero, roots.0), epoch: 0 };
    let k1 = UdpfKey { inner: public.into_key(Party::One, roots.1), epoch: 0 };
    Ok((k0, k1, ClientTrapdoor { group: params.group(), leaf, epoch: 0 }))
}

pub fn udpf_gen<R: RngCore + CryptoRng>(
    params: DpfParams,
    alpha: u64,
    beta: &GroupVector,
    rng: &mut R,
) -> Result<(UdpfKey, UdpfKey, ClientTrapdoor)> {
    udpf_gen_with_seeds(params, alpha, beta, (Seed::random(rng), Seed::random(rng)))
}

impl ClientTrapdoor {
    /// Last epoch a final correction word was issued for.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// New final correction word programming `beta_prime` at `epoch`, which must be the next one.
    pub fn next_cw(&mut self, beta_prime: &GroupVector, epoch: u64) -> Result<GroupVector> {
        let expected = self.epoch + 1;
        if epoch != expected {
            return Err(Error::Sequencing { expected, got: epoch });
        }
        if beta_prime.params() != self.group {
            return Err(Error::param("beta' group does not match the key group"));
        }
        self.epoch = epoch;
        Ok(ro_final_cw(beta_prime, &self.leaf, epoch))
    }
}

/// Single-key hint.
pub fn udpf_next(trapdoor: &mut ClientTrapdoor, beta_prime: &GroupVector, epoch: u64) -> Result<Hint> {
    let cw = trapdoor.next_cw(beta_prime, epoch)?;
    Ok(Hint { epoch, new_final_cws: vec![cw] })
}

/// One hint covering many keys; `trapdoors[i]` is re-targeted to `betas[i]`.
///
/// Either every trapdoor advances or none does.
pub fn udpf_next_batch(trapdoors: &mut [ClientTrapdoor], betas: &[GroupVector], epoch: u64) -> Result<Hint> {
    if trapdoors.len() != betas.len() {
        return Err(Error::param(format!("{} trapdoors but {} values", trapdoors.len(), betas.len())));
    }
    let mut staged = trapdoors.to_vec();
    let new_final_cws = staged
        .iter_mut()
        .zip(betas)
        .map(|(t, b)| t.next_cw(b, epoch))
        .collect::<Result<Vec<_>>>()?;
    trapdoors.clone_from_slice(&staged);
    Ok(Hint { epoch, new_final_cws })
}

/// Next computed from the two full keys: walks both trees in tandem, following the unique child
/// where the control bits differ, to recover the leaf seeds on the programmed path.
pub fn udpf_next_from_keys(k0: &UdpfKey, k1: &UdpfKey, beta_prime: &GroupVector, epoch: u64) -> Result<GroupVector> {
    if k0.inner.party() != Party::Zero || k1.inner.party() != Party::One {
        return Err(Error::param("keys must be ordered (party 0, party 1)"));
    }
    if k0.inner.public_part() != k1.inner.public_part() || k0.epoch != k1.epoch {
        return Err(Error::param("keys do not belong to the same pair"));
    }
    if epoch != k0.epoch + 1 {
        return Err(Error::Sequencing { expected: k0.epoch + 1, got: epoch });
    }
    let (mut s0, mut t0) = (*k0.inner.root_seed(), false);
    let (mut s1, mut t1) = (*k1.inner.root_seed(), true);
    for cw in k0.inner.public_part().correction_words() {
        let (l0, r0) = crate::dpf::descend(cw, &s0, t0);
        let (l1, r1) = crate::dpf::descend(cw, &s1, t1);
        if l0.1 != l1.1 {
            ((s0, t0), (s1, t1)) = (l0, l1);
        } else {
            ((s0, t0), (s1, t1)) = (r0, r1);
        }
    }
    debug_assert!(t0 != t1);
    Ok(ro_final_cw(beta_prime, &PathLeaf { s0, s1, t1 }, epoch))
}

impl UdpfKey {
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn inner(&self) -> &DpfKey {
        &self.inner
    }

    pub fn params(&self) -> DpfParams {
        self.inner.params()
    }

    pub fn party(&self) -> Party {
        self.inner.party()
    }

    /// Rebuilds a key from its public part and root seed (server side).
    pub fn from_parts(public: DpfPublicPart, party: Party, root_seed: Seed, epoch: u64) -> Self {
        Self { inner: public.into_key(party, root_seed), epoch }
    }

    pub fn eval(&self, x: u64) -> Result<GroupVector> {
        let (s, t) = self.inner.walk(x)?;
        let g = self.inner.params().group();
        Ok(leaf_share(self.inner.party(), ro_hash_to_group(&s, self.epoch, g), t, self.inner.public_part().final_cw()))
    }

    pub fn eval_full(&self) -> Result<Vec<GroupVector>> {
        let g = self.inner.params().group();
        let fcw = self.inner.public_part().final_cw();
        Ok(self
            .inner
            .leaves()?
            .into_iter()
            .map(|(s, t)| leaf_share(self.inner.party(), ro_hash_to_group(&s, self.epoch, g), t, fcw))
            .collect())
    }

    /// Installs entry `slot` of `hint`, moving the key to `hint.epoch`.
    pub fn update(&self, hint: &Hint, slot: usize) -> Result<UdpfKey> {
        if hint.epoch != self.epoch + 1 {
            return Err(Error::Sequencing { expected: self.epoch + 1, got: hint.epoch });
        }
        let cw = hint
            .new_final_cws
            .get(slot)
            .ok_or_else(|| Error::param(format!("hint has no entry {slot}")))?;
        if cw.params() != self.inner.params().group() {
            return Err(Error::param("hint group does not match key group"));
        }
        let mut inner = self.inner.clone();
        inner.public.final_cw = cw.clone();
        Ok(UdpfKey { inner, epoch: hint.epoch })
    }
}

impl FullDomainEval for UdpfKey {
    fn depth(&self) -> u32 {
        self.inner.params().depth()
    }

    fn eval_full(&self) -> Result<Vec<GroupVector>> {
        UdpfKey::eval_full(self)
    }
}

pub fn udpf_eval(key: &UdpfKey, x: u64) -> Result<GroupVector> {
    key.eval(x)
}

/// Single-entry form of [`UdpfKey::update`].
pub fn udpf_update(key: &UdpfKey, hint: &Hint) -> Result<UdpfKey> {
    if hint.new_final_cws.len() != 1 {
        return Err(Error::param("single-key update expects a one-entry hint"));
    }
    key.update(hint, 0)
}

impl Hint {
    /// Payload bits excluding the header: `count * tau * l`.
    pub fn payload_bits(&self) -> u64 {
        self.new_final_cws.iter().map(|c| c.params().element_bits()).sum()
    }

    /// `UHNT | epoch (8, BE) | count (4, BE) | final CWs`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HINT_HEADER_BYTES + self.payload_bits() as usize / 8);
        out.extend_from_slice(MAGIC_HINT);
        out.extend_from_slice(&self.epoch.to_be_bytes());
        out.extend_from_slice(&(self.new_final_cws.len() as u32).to_be_bytes());
        for cw in &self.new_final_cws {
            cw.write_bytes(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], group: GroupParams) -> Result<Self> {
        if bytes.len() < HINT_HEADER_BYTES || &bytes[..4] != MAGIC_HINT {
            return Err(Error::format("not a hint"));
        }
        let epoch = u64::from_be_bytes(bytes[4..12].try_into().expect("8 bytes"));
        let count = u32::from_be_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body = &bytes[HINT_HEADER_BYTES..];
        let width = group.vector_bytes();
        if body.len() != count * width {
            return Err(Error::format(format!("hint body {} bytes, expected {}", body.len(), count * width)));
        }
        let new_final_cws = body
            .chunks(width)
            .map(|c| GroupVector::from_bytes(group, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { epoch, new_final_cws })
    }
}
