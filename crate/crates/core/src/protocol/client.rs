use std::collections::{BTreeMap, HashMap};

use rand::{CryptoRng, RngCore};

use super::server::ServerShare;
use super::setup::SystemSetup;
use super::wire::{Envelope, Role};
use crate::batch_code::{build_cuckoo_table, CuckooTable};
use crate::dpf::{dpf_gen_with_seeds, DpfParams, DpfPublicPart, Party};
use crate::error::{Error, Result};
use crate::group::{GroupParams, GroupVector};
use crate::primitives::{prf_derive, Seed, SEED_BYTES};
use crate::udpf::{udpf_gen_with_seeds, udpf_next_batch, ClientTrapdoor, Hint};

/// Which function family the bin and stash keys belong to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyKind {
    Dpf,
    /// Updatable keys, re-targeted in later rounds by hints.
    Udpf,
}

/// One client's private inputs and per-round state.
#[derive(Clone, Debug)]
pub struct ClientState {
    id: u32,
    selection: Vec<u64>,
    updates: Vec<GroupVector>,
    cuckoo: CuckooTable,
    trapdoors: Option<Vec<ClientTrapdoor>>,
}

impl ClientState {
    /// Places `selection` into a fresh cuckoo table. Every index must belong to the setup domain.
    pub fn new(id: u32, setup: &SystemSetup, selection: Vec<u64>) -> Result<Self> {
        if let Some(&x) = selection.iter().find(|&&x| setup.domain_position(x).is_none()) {
            return Err(Error::param(format!("selected index {x} is not in the setup domain")));
        }
        let cuckoo = build_cuckoo_table(setup.spec(), &selection)?;
        Ok(Self { id, selection, updates: Vec::new(), cuckoo, trapdoors: None })
    }

    /// Sets the local update, one vector per selected index (in selection order).
    pub fn set_updates(&mut self, updates: Vec<GroupVector>) -> Result<()> {
        if updates.len() != self.selection.len() {
            return Err(Error::param(format!(
                "{} updates for {} selected indexes",
                updates.len(),
                self.selection.len()
            )));
        }
        self.updates = updates;
        Ok(())
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn selection(&self) -> &[u64] {
        &self.selection
    }

    pub fn updates(&self) -> &[GroupVector] {
        &self.updates
    }

    pub fn cuckoo(&self) -> &CuckooTable {
        &self.cuckoo
    }

    fn update_map(&self, group: GroupParams) -> Result<HashMap<u64, &GroupVector>> {
        if self.updates.len() != self.selection.len() {
            return Err(Error::Mode("client has no local update for this round".into()));
        }
        if let Some(u) = self.updates.iter().find(|u| u.params() != group) {
            return Err(Error::param(format!("update group {:?} does not match setup group {group:?}", u.params())));
        }
        Ok(self.selection.iter().copied().zip(self.updates.iter()).collect())
    }
}

/// Everything one client sends to one server in a round.
///
/// Only the upload addressed to server 0 carries public parts; server 0 forwards them to
/// server 1. Each server gets its own master seed, from which it derives the root seed of key
/// `j` as `prf(msk, j)` (stash key `t` uses index `B + t`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientUpload {
    pub client_id: u32,
    pub round: u64,
    pub role: Role,
    pub party: Party,
    pub master_seed: Seed,
    pub public_parts: Vec<DpfPublicPart>,
}

impl ClientUpload {
    /// `master seed | count (4, BE) | public parts`.
    pub fn payload(&self) -> Vec<u8> {
        let mut out = self.master_seed.0.to_vec();
        out.extend_from_slice(&encode_public_parts(&self.public_parts));
        out
    }

    pub fn to_envelope(&self) -> Envelope {
        Envelope::new(self.role, self.round, self.client_id, self.payload())
    }

    /// Parses an upload envelope received by `party`.
    pub fn from_envelope(env: &Envelope, party: Party) -> Result<Self> {
        if !matches!(env.role, Role::PsrQuery | Role::SsaUpload) {
            return Err(Error::format(format!("{} is not an upload role", env.role.label())));
        }
        if env.payload.len() < SEED_BYTES {
            return Err(Error::format("upload shorter than a master seed"));
        }
        let (seed, rest) = env.payload.split_at(SEED_BYTES);
        Ok(Self {
            client_id: env.client_id,
            round: env.round,
            role: env.role,
            party,
            master_seed: Seed::from_slice(seed)?,
            public_parts: decode_public_parts(rest)?,
        })
    }
}

/// `count (4, BE) | public parts`, the body server 0 forwards to server 1.
pub fn encode_public_parts(parts: &[DpfPublicPart]) -> Vec<u8> {
    let mut out = (parts.len() as u32).to_be_bytes().to_vec();
    for p in parts {
        out.extend_from_slice(&p.to_bytes());
    }
    out
}

pub fn decode_public_parts(bytes: &[u8]) -> Result<Vec<DpfPublicPart>> {
    if bytes.len() < 4 {
        return Err(Error::format("missing key count"));
    }
    let count = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    let mut rest = &bytes[4..];
    let mut parts = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let (p, r) = DpfPublicPart::read_prefix(rest)?;
        parts.push(p);
        rest = r;
    }
    if !rest.is_empty() {
        return Err(Error::format(format!("{} trailing bytes after {count} keys", rest.len())));
    }
    Ok(parts)
}

struct KeyBatch {
    public_parts: Vec<DpfPublicPart>,
    trapdoors: Vec<ClientTrapdoor>,
}

/// Generates the `B + sigma` keys of one upload. `beta_of(x)` gives the payload for selected index `x`.
fn gen_keys(
    state: &ClientState,
    setup: &SystemSetup,
    kind: KeyKind,
    group: GroupParams,
    beta_of: impl Fn(u64) -> GroupVector,
    msk: (&Seed, &Seed),
) -> Result<KeyBatch> {
    let bins = setup.bins();
    let zero = GroupVector::zero(group);
    let bin_params = setup.bin_params(group);
    let stash_params = setup.stash_params(group);
    let stash = state.cuckoo.stash();

    let mut targets: Vec<(DpfParams, u64, GroupVector)> = Vec::with_capacity(setup.key_count());
    for (j, slot) in state.cuckoo.slots().iter().enumerate() {
        targets.push(match slot {
            Some(x) => (bin_params, setup.simple().lookup_position(j, *x)? as u64, beta_of(*x)),
            None => (bin_params, 0, zero.clone()),
        });
    }
    for t in 0..setup.sigma() {
        targets.push(match stash.get(t) {
            Some(x) => {
                let pos = setup.domain_position(*x).expect("selection is inside the domain");
                (stash_params, pos as u64, beta_of(*x))
            }
            None => (stash_params, 0, zero.clone()),
        });
    }
    debug_assert_eq!(targets.len(), bins + setup.sigma());

    let mut public_parts = Vec::with_capacity(targets.len());
    let mut trapdoors = Vec::new();
    for (j, (params, alpha, beta)) in targets.into_iter().enumerate() {
        let roots = (prf_derive(msk.0, j as u64), prf_derive(msk.1, j as u64));
        match kind {
            KeyKind::Dpf => {
                let (k0, _) = dpf_gen_with_seeds(params, alpha, &beta, roots)?;
                public_parts.push(k0.public_part().clone());
            }
            KeyKind::Udpf => {
                let (k0, _, trapdoor) = udpf_gen_with_seeds(params, alpha, &beta, roots)?;
                public_parts.push(k0.inner().public_part().clone());
                trapdoors.push(trapdoor);
            }
        }
    }
    Ok(KeyBatch { public_parts, trapdoors })
}

fn split_uploads(
    state: &ClientState,
    role: Role,
    round: u64,
    msk0: Seed,
    msk1: Seed,
    public_parts: Vec<DpfPublicPart>,
) -> (ClientUpload, ClientUpload) {
    let to_s0 = ClientUpload {
        client_id: state.id,
        round,
        role,
        party: Party::Zero,
        master_seed: msk0,
        public_parts,
    };
    let to_s1 = ClientUpload {
        client_id: state.id,
        round,
        role,
        party: Party::One,
        master_seed: msk1,
        public_parts: Vec::new(),
    };
    (to_s0, to_s1)
}

/// Private retrieval query: each occupied bin programs the selected element's position with
/// value 1 (scalar group), empty bins and unused stash slots get dummy keys.
pub fn psr_client_query<R: RngCore + CryptoRng>(
    state: &ClientState,
    setup: &SystemSetup,
    round: u64,
    rng: &mut R,
) -> Result<(ClientUpload, ClientUpload)> {
    let group = setup.group().scalar();
    let one = GroupVector::splat(group, 1);
    let (msk0, msk1) = (Seed::random(rng), Seed::random(rng));
    let batch = gen_keys(state, setup, KeyKind::Dpf, group, |_| one.clone(), (&msk0, &msk1))?;
    Ok(split_uploads(state, Role::PsrQuery, round, msk0, msk1, batch.public_parts))
}

/// Aggregation upload: each occupied bin programs the element's position with its update.
pub fn ssa_client_upload<R: RngCore + CryptoRng>(
    state: &ClientState,
    setup: &SystemSetup,
    round: u64,
    rng: &mut R,
) -> Result<(ClientUpload, ClientUpload)> {
    let updates = state.update_map(setup.group())?;
    let (msk0, msk1) = (Seed::random(rng), Seed::random(rng));
    let batch = gen_keys(state, setup, KeyKind::Dpf, setup.group(), |x| updates[&x].clone(), (&msk0, &msk1))?;
    Ok(split_uploads(state, Role::SsaUpload, round, msk0, msk1, batch.public_parts))
}

/// First round of the updatable mode: like [`ssa_client_upload`] but with updatable keys. The
/// client keeps one trapdoor per key for later hint rounds.
pub fn ssa_client_upload_udpf<R: RngCore + CryptoRng>(
    state: &mut ClientState,
    setup: &SystemSetup,
    round: u64,
    rng: &mut R,
) -> Result<(ClientUpload, ClientUpload)> {
    if round != 0 {
        return Err(Error::Mode(format!("updatable keys are issued in round 0, not round {round}")));
    }
    let updates = state.update_map(setup.group())?;
    let (msk0, msk1) = (Seed::random(rng), Seed::random(rng));
    let batch = gen_keys(state, setup, KeyKind::Udpf, setup.group(), |x| updates[&x].clone(), (&msk0, &msk1))?;
    state.trapdoors = Some(batch.trapdoors);
    Ok(split_uploads(state, Role::SsaUpload, round, msk0, msk1, batch.public_parts))
}

/// Later rounds of the updatable mode: one hint re-targeting every key (dummies to zero).
///
/// The selection must be the one the keys were issued for.
pub fn ssa_udpf_round(state: &mut ClientState, setup: &SystemSetup, selection: &[u64], updates: Vec<GroupVector>, round: u64) -> Result<Hint> {
    if selection != state.selection.as_slice() {
        return Err(Error::Mode("selection changed after updatable keys were issued".into()));
    }
    if state.trapdoors.is_none() {
        return Err(Error::Mode("no updatable keys were issued".into()));
    }
    state.set_updates(updates)?;
    let group = setup.group();
    let map = state.update_map(group)?;
    let zero = GroupVector::zero(group);
    let stash = state.cuckoo.stash();
    let betas: Vec<GroupVector> = state
        .cuckoo
        .slots()
        .iter()
        .map(|s| s.map_or_else(|| zero.clone(), |x| map[&x].clone()))
        .chain((0..setup.sigma()).map(|t| stash.get(t).map_or_else(|| zero.clone(), |x| map[x].clone())))
        .collect();
    let trapdoors = state.trapdoors.as_mut().expect("checked above");
    udpf_next_batch(trapdoors, &betas, round)
}

pub fn hint_envelope(client_id: u32, hint: &Hint) -> Envelope {
    Envelope::new(Role::SsaHint, hint.epoch, client_id, hint.to_bytes())
}

/// Recombines the two servers' answers into the retrieved weight of every selected index.
pub fn psr_client_reconstruct(
    state: &ClientState,
    setup: &SystemSetup,
    share0: &ServerShare,
    share1: &ServerShare,
) -> Result<BTreeMap<u64, GroupVector>> {
    let want = setup.key_count();
    if share0.values.len() != want || share1.values.len() != want {
        return Err(Error::protocol(format!(
            "answer lengths {} and {}, expected {want}",
            share0.values.len(),
            share1.values.len()
        )));
    }
    let sum = |i: usize| share0.values[i].add(&share1.values[i]);
    let mut out = BTreeMap::new();
    for (j, slot) in state.cuckoo.slots().iter().enumerate() {
        if let Some(x) = slot {
            out.insert(*x, sum(j)?);
        }
    }
    for (t, x) in state.cuckoo.stash().iter().enumerate() {
        out.insert(*x, sum(setup.bins() + t)?);
    }
    Ok(out)
}
