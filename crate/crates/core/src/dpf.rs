//! Tree-based two-party distributed point function.
//!
//! Key generation walks the path to `alpha`, emitting one [`CorrectionWord`] per level so that
//! the two parties' seeds coincide everywhere off the path and differ (with opposite control bits)
//! on it. The final correction word programs `beta` at the leaf:
//!
//! ```text
//! final_cw = (-1)^{t1} * (beta - convert(s0) + convert(s1))
//! share_b(x) = (-1)^b * (convert(s_b(x)) + t_b(x) * final_cw)
//! ```
//!
//! Index bits are consumed most-significant first, one per tree level.
//!
//! The public part (correction words plus final correction word) is identical for both keys;
//! only the root seed differs.

use crate::error::{Error, Result};
use crate::group::{GroupParams, GroupVector};
use crate::primitives::{convert_to_group, prg_expand, Seed, SEED_BYTES};
use crate::LAMBDA;
use rand::{CryptoRng, RngCore};

/// Maximum depth for which [`DpfKey::eval_full`] will allocate the whole domain.
pub const MAX_FULL_DOMAIN_DEPTH: u32 = 24;

const MAGIC_KEY: &[u8; 4] = b"DPF1";
const MAGIC_PUBLIC: &[u8; 4] = b"DPFP";
/// Fixed header: magic, depth, l, tau.
pub const HEADER_BYTES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    Zero,
    One,
}

impl Party {
    pub fn index(self) -> usize {
        match self {
            Party::Zero => 0,
            Party::One => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Party::Zero),
            1 => Ok(Party::One),
            _ => Err(Error::param(format!("party must be 0 or 1, got {i}"))),
        }
    }

    pub fn both() -> [Party; 2] {
        [Party::Zero, Party::One]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DpfParams {
    depth: u32,
    group: GroupParams,
}

impl DpfParams {
    pub fn new(depth: u32, group: GroupParams) -> Result<Self> {
        if !(1..=32).contains(&depth) {
            return Err(Error::param(format!("depth {depth} outside 1..=32")));
        }
        Ok(Self { depth, group })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn group(&self) -> GroupParams {
        self.group
    }

    pub fn domain_size(&self) -> u64 {
        1u64 << self.depth
    }

    fn check_index(&self, x: u64) -> Result<()> {
        if x >= self.domain_size() {
            return Err(Error::Domain { index: x, depth: self.depth });
        }
        Ok(())
    }

    /// Information content of the public part, `depth*(lambda+2) + tau*l` bits.
    pub fn public_bits(&self) -> u64 {
        self.depth as u64 * (LAMBDA as u64 + 2) + self.group.element_bits()
    }

    /// Information content of a full key, `depth*(lambda+2) + lambda + tau*l` bits.
    pub fn key_bits(&self) -> u64 {
        self.public_bits() + LAMBDA as u64
    }

    fn control_bytes(&self) -> usize {
        (2 * self.depth as usize).div_ceil(8)
    }

    /// Serialized public part length, header included.
    pub fn public_serialized_len(&self) -> usize {
        HEADER_BYTES
            + SEED_BYTES * self.depth as usize
            + self.control_bytes()
            + self.group.vector_bytes()
    }

    /// Serialized key length, header included.
    pub fn key_serialized_len(&self) -> usize {
        self.public_serialized_len() + SEED_BYTES
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CorrectionWord {
    pub seed: Seed,
    pub t_left: bool,
    pub t_right: bool,
}

/// The part of a key that is shared by both parties.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DpfPublicPart {
    pub(crate) params: DpfParams,
    pub(crate) cws: Vec<CorrectionWord>,
    pub(crate) final_cw: GroupVector,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DpfKey {
    pub(crate) party: Party,
    pub(crate) root_seed: Seed,
    pub(crate) public: DpfPublicPart,
}

/// The leaf state on the programmed path, retained by the updatable variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct PathLeaf {
    pub s0: Seed,
    pub s1: Seed,
    pub t1: bool,
}

/// Builds the correction-word chain for `alpha` from the two root seeds.
pub(crate) fn gen_tree(params: DpfParams, alpha: u64, roots: (Seed, Seed)) -> (Vec<CorrectionWord>, PathLeaf) {
    let (mut s0, mut s1) = roots;
    let (mut t0, mut t1) = (false, true);
    let mut cws = Vec::with_capacity(params.depth as usize);
    for level in 0..params.depth {
        let bit = (alpha >> (params.depth - 1 - level)) & 1 == 1;
        let e0 = prg_expand(&s0);
        let e1 = prg_expand(&s1);
        let (lose0, lose1) = if bit { (e0.s_left, e1.s_left) } else { (e0.s_right, e1.s_right) };
        let mut seed_cw = lose0;
        seed_cw.xor_assign(&lose1);
        let cw = CorrectionWord {
            seed: seed_cw,
            t_left: e0.t_left ^ e1.t_left ^ bit ^ true,
            t_right: e0.t_right ^ e1.t_right ^ bit,
        };
        let (keep0, keep1, tk0, tk1, tcw) = if bit {
            (e0.s_right, e1.s_right, e0.t_right, e1.t_right, cw.t_right)
        } else {
            (e0.s_left, e1.s_left, e0.t_left, e1.t_left, cw.t_left)
        };
        s0 = keep0;
        s1 = keep1;
        if t0 {
            s0.xor_assign(&seed_cw);
        }
        if t1 {
            s1.xor_assign(&seed_cw);
        }
        let nt0 = tk0 ^ (t0 & tcw);
        let nt1 = tk1 ^ (t1 & tcw);
        t0 = nt0;
        t1 = nt1;
        cws.push(cw);
    }
    (cws, PathLeaf { s0, s1, t1 })
}

/// `(-1)^{t1} * (beta - c0 + c1)`.
pub(crate) fn final_correction(beta: &GroupVector, c0: &GroupVector, c1: &GroupVector, t1: bool) -> GroupVector {
    let mut v = beta.sub(c0).expect("same group");
    v.add_assign_unchecked(c1);
    if t1 {
        v.neg()
    } else {
        v
    }
}

/// One step down the tree from `(seed, t)` towards child `bit`.
#[inline]
pub(crate) fn descend(cw: &CorrectionWord, seed: &Seed, t: bool) -> ((Seed, bool), (Seed, bool)) {
    let mut e = prg_expand(seed);
    let (mut tl, mut tr) = (e.t_left, e.t_right);
    if t {
        e.s_left.xor_assign(&cw.seed);
        e.s_right.xor_assign(&cw.seed);
        tl ^= cw.t_left;
        tr ^= cw.t_right;
    }
    ((e.s_left, tl), (e.s_right, tr))
}

/// `(-1)^b * (conv + t * final_cw)`.
#[inline]
pub(crate) fn leaf_share(party: Party, mut conv: GroupVector, t: bool, final_cw: &GroupVector) -> GroupVector {
    if t {
        conv.add_assign_unchecked(final_cw);
    }
    match party {
        Party::Zero => conv,
        Party::One => conv.neg(),
    }
}

fn validate_gen(params: DpfParams, alpha: u64, beta: &GroupVector) -> Result<()> {
    params.check_index(alpha)?;
    if beta.params() != params.group {
        return Err(Error::param(format!(
            "beta group {:?} does not match key group {:?}",
            beta.params(),
            params.group
        )));
    }
    Ok(())
}

/// Generates a key pair for `f_{alpha,beta}` from explicit root seeds.
pub fn dpf_gen_with_seeds(params: DpfParams, alpha: u64, beta: &GroupVector, roots: (Seed, Seed)) -> Result<(DpfKey, DpfKey)> {
    validate_gen(params, alpha, beta)?;
    let (cws, leaf) = gen_tree(params, alpha, roots);
    let final_cw = final_correction(
        beta,
        &convert_to_group(&leaf.s0, params.group),
        &convert_to_group(&leaf.s1, params.group),
        leaf.t1,
    );
    let public = DpfPublicPart { params, cws, final_cw };
    Ok((
        DpfKey { party: Party::Zero, root_seed: roots.0, public: public.clone() },
        DpfKey { party: Party::One, root_seed: roots.1, public },
    ))
}

/// Generates a key pair with fresh root seeds.
pub fn dpf_gen<R: RngCore + CryptoRng>(params: DpfParams, alpha: u64, beta: &GroupVector, rng: &mut R) -> Result<(DpfKey, DpfKey)> {
    let roots = (Seed::random(rng), Seed::random(rng));
    dpf_gen_with_seeds(params, alpha, beta, roots)
}

/// A key that evaluates to zero everywhere: `Gen(0, 0)`.
pub fn dpf_gen_dummy(params: DpfParams, roots: (Seed, Seed)) -> (DpfKey, DpfKey) {
    dpf_gen_with_seeds(params, 0, &GroupVector::zero(params.group), roots).expect("alpha 0 is always in range")
}

impl DpfPublicPart {
    pub fn params(&self) -> DpfParams {
        self.params
    }

    pub fn correction_words(&self) -> &[CorrectionWord] {
        &self.cws
    }

    pub fn final_cw(&self) -> &GroupVector {
        &self.final_cw
    }

    /// Reattaches a private root seed.
    pub fn into_key(self, party: Party, root_seed: Seed) -> DpfKey {
        DpfKey { party, root_seed, public: self }
    }

    fn write_body(&self, out: &mut Vec<u8>) {
        for cw in &self.cws {
            out.extend_from_slice(&cw.seed.0);
        }
        let mut bits = vec![0u8; self.params.control_bytes()];
        for (level, cw) in self.cws.iter().enumerate() {
            let (i, j) = (2 * level, 2 * level + 1);
            bits[i / 8] |= (cw.t_left as u8) << (i % 8);
            bits[j / 8] |= (cw.t_right as u8) << (j % 8);
        }
        out.extend_from_slice(&bits);
        self.final_cw.write_bytes(out);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.params.public_serialized_len());
        write_header(&mut out, MAGIC_PUBLIC, self.params);
        self.write_body(&mut out);
        out
    }

    /// Parses one public part, which must span `bytes` exactly.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (params, body) = read_header(bytes, MAGIC_PUBLIC)?;
        if bytes.len() != params.public_serialized_len() {
            return Err(Error::format(format!(
                "public part needs {} bytes, got {}",
                params.public_serialized_len(),
                bytes.len()
            )));
        }
        Self::read_body(params, body)
    }

    /// Parses a public part from the front of `bytes`, returning the remainder.
    pub fn read_prefix(bytes: &[u8]) -> Result<(Self, &[u8])> {
        let (params, _) = read_header(bytes, MAGIC_PUBLIC)?;
        let len = params.public_serialized_len();
        if bytes.len() < len {
            return Err(Error::format("truncated public part"));
        }
        Ok((Self::read_body(params, &bytes[HEADER_BYTES..len])?, &bytes[len..]))
    }

    fn read_body(params: DpfParams, body: &[u8]) -> Result<Self> {
        let d = params.depth as usize;
        let (seeds, rest) = body.split_at(SEED_BYTES * d);
        let (bits, fcw) = rest.split_at(params.control_bytes());
        let used_bits = 2 * d;
        for bit in used_bits..bits.len() * 8 {
            if bits[bit / 8] >> (bit % 8) & 1 == 1 {
                return Err(Error::format("non-zero padding in control bits"));
            }
        }
        let get = |i: usize| bits[i / 8] >> (i % 8) & 1 == 1;
        let cws = seeds
            .chunks(SEED_BYTES)
            .enumerate()
            .map(|(level, s)| CorrectionWord {
                seed: Seed::from_slice(s).expect("chunk is seed sized"),
                t_left: get(2 * level),
                t_right: get(2 * level + 1),
            })
            .collect();
        let final_cw = GroupVector::from_bytes(params.group, fcw)?;
        Ok(Self { params, cws, final_cw })
    }
}

fn write_header(out: &mut Vec<u8>, magic: &[u8; 4], params: DpfParams) {
    out.extend_from_slice(magic);
    out.push(params.depth as u8);
    out.push(params.group.l() as u8);
    out.extend_from_slice(&(params.group.tau() as u16).to_be_bytes());
}

fn read_header<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<(DpfParams, &'a [u8])> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::format("truncated header"));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let depth = bytes[4] as u32;
    let l = bytes[5] as u32;
    let tau = u16::from_be_bytes([bytes[6], bytes[7]]) as usize;
    let group = GroupParams::new(l, tau).map_err(|e| Error::format(e.to_string()))?;
    let params = DpfParams::new(depth, group).map_err(|e| Error::format(e.to_string()))?;
    Ok((params, &bytes[HEADER_BYTES..]))
}

/// Anything that yields one share per point of its `2^depth` domain.
pub trait FullDomainEval {
    fn depth(&self) -> u32;
    fn eval_full(&self) -> Result<Vec<GroupVector>>;
}

impl DpfKey {
    pub fn party(&self) -> Party {
        self.party
    }

    pub fn params(&self) -> DpfParams {
        self.public.params
    }

    pub fn root_seed(&self) -> &Seed {
        &self.root_seed
    }

    pub fn public_part(&self) -> &DpfPublicPart {
        &self.public
    }

    pub(crate) fn root_t(&self) -> bool {
        self.party == Party::One
    }

    /// Walks to leaf `x`, returning its seed and control bit.
    pub(crate) fn walk(&self, x: u64) -> Result<(Seed, bool)> {
        let params = self.public.params;
        params.check_index(x)?;
        let (mut s, mut t) = (self.root_seed, self.root_t());
        for (level, cw) in self.public.cws.iter().enumerate() {
            let bit = (x >> (params.depth - 1 - level as u32)) & 1 == 1;
            let (l, r) = descend(cw, &s, t);
            (s, t) = if bit { r } else { l };
        }
        Ok((s, t))
    }

    /// All leaves in index order, sharing prefix work level by level.
    pub(crate) fn leaves(&self) -> Result<Vec<(Seed, bool)>> {
        let depth = self.public.params.depth;
        if depth > MAX_FULL_DOMAIN_DEPTH {
            return Err(Error::Resource(format!(
                "full-domain evaluation limited to depth {MAX_FULL_DOMAIN_DEPTH}, key has {depth}"
            )));
        }
        let mut level = vec![(self.root_seed, self.root_t())];
        for cw in &self.public.cws {
            let mut next = Vec::with_capacity(level.len() * 2);
            for (s, t) in &level {
                let (l, r) = descend(cw, s, *t);
                next.push(l);
                next.push(r);
            }
            level = next;
        }
        Ok(level)
    }

    pub fn eval(&self, x: u64) -> Result<GroupVector> {
        let (s, t) = self.walk(x)?;
        let group = self.public.params.group;
        Ok(leaf_share(self.party, convert_to_group(&s, group), t, &self.public.final_cw))
    }

    pub fn eval_full(&self) -> Result<Vec<GroupVector>> {
        let group = self.public.params.group;
        Ok(self
            .leaves()?
            .into_iter()
            .map(|(s, t)| leaf_share(self.party, convert_to_group(&s, group), t, &self.public.final_cw))
            .collect())
    }

    /// `DPF1 | depth | l | tau | root_seed | cw seeds | packed control bits | final_cw`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self.public.params;
        let mut out = Vec::with_capacity(params.key_serialized_len());
        write_header(&mut out, MAGIC_KEY, params);
        out.extend_from_slice(&self.root_seed.0);
        self.public.write_body(&mut out);
        out
    }

    /// The party index is not part of the encoding; the holder supplies it.
    pub fn from_bytes(bytes: &[u8], party: Party) -> Result<Self> {
        let (params, body) = read_header(bytes, MAGIC_KEY)?;
        if bytes.len() != params.key_serialized_len() {
            return Err(Error::format(format!(
                "key needs {} bytes, got {}",
                params.key_serialized_len(),
                bytes.len()
            )));
        }
        let root_seed = Seed::from_slice(&body[..SEED_BYTES])?;
        let public = DpfPublicPart::read_body(params, &body[SEED_BYTES..])?;
        Ok(Self { party, root_seed, public })
    }
}

impl FullDomainEval for DpfKey {
    fn depth(&self) -> u32 {
        self.public.params.depth
    }

    fn eval_full(&self) -> Result<Vec<GroupVector>> {
        DpfKey::eval_full(self)
    }
}

/// Functional form of [`DpfKey::eval`].
pub fn dpf_eval(key: &DpfKey, x: u64) -> Result<GroupVector> {
    key.eval(x)
}

/// Functional form of [`DpfKey::eval_full`].
pub fn dpf_eval_full(key: &DpfKey) -> Result<Vec<GroupVector>> {
    key.eval_full()
}

pub fn dpf_serialize(key: &DpfKey) -> Vec<u8> {
    key.to_bytes()
}

/// Deserializes a key and checks it against the expected parameters.
pub fn dpf_deserialize(bytes: &[u8], params: DpfParams, party: Party) -> Result<DpfKey> {
    let key = DpfKey::from_bytes(bytes, party)?;
    if key.params() != params {
        return Err(Error::format(format!("key parameters {:?} differ from expected {:?}", key.params(), params)));
    }
    Ok(key)
}
