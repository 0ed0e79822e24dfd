use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::client::ClientUpload;
use super::setup::SystemSetup;
use super::wire::{Envelope, Role};
use crate::batch_code::candidate_bins;
use crate::dpf::{DpfKey, DpfPublicPart, FullDomainEval, Party};
use crate::error::{Error, Result};
use crate::group::{GroupParams, GroupVector};
use crate::primitives::prf_derive;
use crate::udpf::{Hint, UdpfKey};

/// Key types a server can aggregate with.
pub trait ShareKey: FullDomainEval + Send + Sync {
    fn eval_point(&self, x: u64) -> Result<GroupVector>;
}

impl ShareKey for DpfKey {
    fn eval_point(&self, x: u64) -> Result<GroupVector> {
        self.eval(x)
    }
}

impl ShareKey for UdpfKey {
    fn eval_point(&self, x: u64) -> Result<GroupVector> {
        self.eval(x)
    }
}

/// One client's `B + sigma` keys as held by one server.
#[derive(Clone, Debug)]
pub struct ClientKeys<K> {
    pub client_id: u32,
    pub round: u64,
    pub keys: Vec<K>,
}

/// One server's share: per key for PSR answers, per domain coordinate for aggregation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerShare {
    pub party: Party,
    pub round: u64,
    pub values: Vec<GroupVector>,
}

impl ServerShare {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for v in &self.values {
            v.write_bytes(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], party: Party, round: u64, group: GroupParams) -> Result<Self> {
        let width = group.vector_bytes();
        if !bytes.len().is_multiple_of(width) {
            return Err(Error::format(format!("share of {} bytes is not a multiple of {width}", bytes.len())));
        }
        let values = bytes.chunks(width).map(|c| GroupVector::from_bytes(group, c)).collect::<Result<_>>()?;
        Ok(Self { party, round, values })
    }

    /// `role` is [`Role::PsrAnswer`] (to the client) or [`Role::SsaShare`] (to the other server).
    pub fn to_envelope(&self, role: Role, client_id: u32) -> Envelope {
        Envelope::new(role, self.round, client_id, self.to_bytes())
    }
}

/// Wall-clock split of an aggregation, summed over worker threads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AggregateTimings {
    pub eval: Duration,
    pub scatter: Duration,
}

fn check_shapes(setup: &SystemSetup, group: GroupParams, parts: &[DpfPublicPart]) -> Result<()> {
    if parts.len() != setup.key_count() {
        return Err(Error::protocol(format!("{} keys, expected {}", parts.len(), setup.key_count())));
    }
    let (bin, stash) = (setup.bin_params(group), setup.stash_params(group));
    for (j, p) in parts.iter().enumerate() {
        let want = if j < setup.bins() { bin } else { stash };
        if p.params() != want {
            return Err(Error::protocol(format!("key {j} has shape {:?}, expected {want:?}", p.params())));
        }
    }
    Ok(())
}

/// Rebuilds a server's keys from its master seed and the (possibly forwarded) public parts.
pub fn materialize_keys(
    setup: &SystemSetup,
    group: GroupParams,
    own: &ClientUpload,
    public_parts: &[DpfPublicPart],
) -> Result<ClientKeys<DpfKey>> {
    check_shapes(setup, group, public_parts)?;
    let keys = public_parts
        .iter()
        .enumerate()
        .map(|(j, p)| p.clone().into_key(own.party, prf_derive(&own.master_seed, j as u64)))
        .collect();
    Ok(ClientKeys { client_id: own.client_id, round: own.round, keys })
}

/// As [`materialize_keys`], for round-0 updatable keys.
pub fn materialize_udpf_keys(
    setup: &SystemSetup,
    own: &ClientUpload,
    public_parts: &[DpfPublicPart],
) -> Result<ClientKeys<UdpfKey>> {
    check_shapes(setup, setup.group(), public_parts)?;
    let keys = public_parts
        .iter()
        .enumerate()
        .map(|(j, p)| UdpfKey::from_parts(p.clone(), own.party, prf_derive(&own.master_seed, j as u64), own.round))
        .collect();
    Ok(ClientKeys { client_id: own.client_id, round: own.round, keys })
}

fn check_round<K>(clients: &[ClientKeys<K>], round: u64) -> Result<()> {
    match clients.iter().find(|c| c.round != round) {
        Some(c) => Err(Error::protocol(format!("client {} uploaded for round {}, aggregating round {round}", c.client_id, c.round))),
        None => Ok(()),
    }
}

fn add_into(acc: &mut [GroupVector], other: &[GroupVector]) {
    for (a, b) in acc.iter_mut().zip(other) {
        a.add_assign_unchecked(b);
    }
}

/// Share of the summed update over the setup domain.
///
/// Each bin key is evaluated once over its whole bin and the results are scattered to global
/// coordinates; stash keys cover the domain directly.
pub fn ssa_server_aggregate<K: ShareKey>(
    setup: &SystemSetup,
    party: Party,
    round: u64,
    clients: &[ClientKeys<K>],
) -> Result<(ServerShare, AggregateTimings)> {
    check_round(clients, round)?;
    let n = setup.domain().len();
    let zeros = || vec![GroupVector::zero(setup.group()); n];
    let eval_ns = AtomicU64::new(0);
    let scatter_ns = AtomicU64::new(0);
    let values = clients
        .par_iter()
        .try_fold(zeros, |mut acc, client| -> Result<Vec<GroupVector>> {
            if client.keys.len() != setup.key_count() {
                return Err(Error::protocol(format!("client {} sent {} keys", client.client_id, client.keys.len())));
            }
            for (j, key) in client.keys.iter().enumerate() {
                let start = Instant::now();
                let shares = key.eval_full()?;
                let mid = Instant::now();
                if j < setup.bins() {
                    for (d, &p) in setup.bin_positions(j).iter().enumerate() {
                        acc[p].add_assign_unchecked(&shares[d]);
                    }
                } else {
                    add_into(&mut acc, &shares[..n]);
                }
                eval_ns.fetch_add((mid - start).as_nanos() as u64, Ordering::Relaxed);
                scatter_ns.fetch_add(mid.elapsed().as_nanos() as u64, Ordering::Relaxed);
            }
            Ok(acc)
        })
        .try_reduce(zeros, |mut a, b| {
            add_into(&mut a, &b);
            Ok(a)
        })?;
    let timings = AggregateTimings {
        eval: Duration::from_nanos(eval_ns.into_inner()),
        scatter: Duration::from_nanos(scatter_ns.into_inner()),
    };
    Ok((ServerShare { party, round, values }, timings))
}

/// Per-coordinate form of [`ssa_server_aggregate`]: for every domain element, sum each client's
/// candidate-bin keys at the element's bin position plus every stash key at the element itself.
pub fn ssa_server_aggregate_literal<K: ShareKey>(
    setup: &SystemSetup,
    party: Party,
    round: u64,
    clients: &[ClientKeys<K>],
) -> Result<ServerShare> {
    check_round(clients, round)?;
    let spec = setup.spec();
    let mut values = Vec::with_capacity(setup.domain().len());
    for (p, &x) in setup.domain().iter().enumerate() {
        let mut acc = GroupVector::zero(setup.group());
        for client in clients {
            for h in candidate_bins(spec, x) {
                let pos = setup.simple().lookup_position(h, x)?;
                acc.add_assign(&client.keys[h].eval_point(pos as u64)?)?;
            }
            for t in 0..setup.sigma() {
                acc.add_assign(&client.keys[setup.bins() + t].eval_point(p as u64)?)?;
            }
        }
        values.push(acc);
    }
    Ok(ServerShare { party, round, values })
}

/// Answer to one retrieval query: per bin, the inner product of the bin's weights with the
/// key's shares; per stash key, the inner product over the whole domain.
pub fn psr_server_answer(setup: &SystemSetup, keys: &ClientKeys<DpfKey>, w: &[GroupVector]) -> Result<ServerShare> {
    let n = setup.domain().len();
    if w.len() != n {
        return Err(Error::param(format!("weight vector has {} entries, domain has {n}", w.len())));
    }
    if let Some(v) = w.iter().find(|v| v.params() != setup.group()) {
        return Err(Error::param(format!("weight group {:?} does not match setup", v.params())));
    }
    if keys.keys.len() != setup.key_count() {
        return Err(Error::protocol(format!("{} keys, expected {}", keys.keys.len(), setup.key_count())));
    }
    let party = keys.keys.first().map_or(Party::Zero, DpfKey::party);
    let values = keys
        .keys
        .par_iter()
        .enumerate()
        .map(|(j, key)| -> Result<GroupVector> {
            let shares = key.eval_full()?;
            let mut acc = GroupVector::zero(setup.group());
            let mut dot = |p: usize, s: &GroupVector| acc.add_assign_unchecked(&w[p].scale(s.elems()[0]));
            if j < setup.bins() {
                for (d, &p) in setup.bin_positions(j).iter().enumerate() {
                    dot(p, &shares[d]);
                }
            } else {
                for (p, s) in shares[..n].iter().enumerate() {
                    dot(p, s);
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ServerShare { party, round: keys.round, values })
}

/// Per-server store of updatable keys across rounds.
#[derive(Clone, Debug)]
pub struct UdpfServer {
    party: Party,
    clients: BTreeMap<u32, ClientKeys<UdpfKey>>,
}

impl UdpfServer {
    pub fn new(party: Party) -> Self {
        Self { party, clients: BTreeMap::new() }
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn install(&mut self, keys: ClientKeys<UdpfKey>) {
        self.clients.insert(keys.client_id, keys);
    }

    /// Re-targets every key of `client_id`; hint entry `j` goes to key `j`.
    pub fn apply_hint(&mut self, setup: &SystemSetup, client_id: u32, hint: &Hint) -> Result<()> {
        let client = self
            .clients
            .get_mut(&client_id)
            .ok_or_else(|| Error::protocol(format!("hint from unknown client {client_id}")))?;
        if hint.new_final_cws.len() != setup.key_count() {
            return Err(Error::protocol(format!(
                "hint carries {} entries, expected {}",
                hint.new_final_cws.len(),
                setup.key_count()
            )));
        }
        let keys = client
            .keys
            .iter()
            .enumerate()
            .map(|(j, k)| k.update(hint, j))
            .collect::<Result<Vec<_>>>()?;
        client.keys = keys;
        client.round = hint.epoch;
        Ok(())
    }

    pub fn aggregate(&self, setup: &SystemSetup, round: u64) -> Result<(ServerShare, AggregateTimings)> {
        let clients: Vec<ClientKeys<UdpfKey>> = self.clients.values().cloned().collect();
        ssa_server_aggregate(setup, self.party, round, &clients)
    }
}

/// Reconstructs the summed update and adds it to the previous model (length `m`).
///
/// With a restricted domain only the domain coordinates change.
pub fn ssa_finalize(
    setup: &SystemSetup,
    share0: &ServerShare,
    share1: &ServerShare,
    w_prev: &[GroupVector],
) -> Result<Vec<GroupVector>> {
    let n = setup.domain().len();
    if share0.values.len() != n || share1.values.len() != n {
        return Err(Error::protocol(format!(
            "share lengths {} and {}, domain has {n}",
            share0.values.len(),
            share1.values.len()
        )));
    }
    if share0.round != share1.round {
        return Err(Error::protocol(format!("shares from rounds {} and {}", share0.round, share1.round)));
    }
    if w_prev.len() as u64 != setup.spec().m {
        return Err(Error::param(format!("model has {} entries, expected {}", w_prev.len(), setup.spec().m)));
    }
    let mut w = w_prev.to_vec();
    for (p, &x) in setup.domain().iter().enumerate() {
        let delta = share0.values[p].add(&share1.values[p])?;
        w[x as usize].add_assign(&delta)?;
    }
    Ok(w)
}
