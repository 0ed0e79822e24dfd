//! In-process simulation of full rounds with byte accounting and plaintext oracles.
//!
//! All randomness of a run (selections, updates, weights, hash and key seeds) comes from one
//! ChaCha20 stream seeded by the scenario, so a scenario fully determines its transcript.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::batch_code::{recommend_params, TableSpec};
use crate::dpf::{Party, HEADER_BYTES as DPF_HEADER_BYTES};
use crate::error::{Error, Result};
use crate::group::{flatten_weights, group_weights, GroupParams, GroupVector};
use crate::primitives::Seed;
use crate::protocol::{
    decode_public_parts, encode_public_parts, hint_envelope, materialize_keys, materialize_udpf_keys, psr_client_query,
    psr_client_reconstruct, psr_server_answer, ssa_client_upload, ssa_client_upload_udpf, ssa_finalize,
    ssa_server_aggregate, ssa_udpf_round, ClientKeys, ClientState, ClientUpload, DomainMode, Envelope, Role,
    ServerShare, SystemSetup, UdpfServer, ENVELOPE_HEADER_BYTES,
};
use crate::udpf::Hint;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioMode {
    FullDomain,
    /// Tables cover only the union of this round's selections.
    UnionRestricted,
    /// Round 0 issues updatable keys; later rounds keep the selection and send hints only.
    UdpfFixed,
}

impl ScenarioMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioMode::FullDomain => "full_domain",
            ScenarioMode::UnionRestricted => "union_restricted",
            ScenarioMode::UdpfFixed => "udpf_fixed",
        }
    }
}

impl std::str::FromStr for ScenarioMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_domain" | "full" => Ok(ScenarioMode::FullDomain),
            "union_restricted" | "union" => Ok(ScenarioMode::UnionRestricted),
            "udpf_fixed" | "udpf" => Ok(ScenarioMode::UdpfFixed),
            _ => Err(Error::param(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialWeights {
    Random,
    Zero,
}

/// Selection sizes: the same for everyone, or one per client.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SelectionSizes {
    Uniform(usize),
    PerClient(Vec<usize>),
}

/// A complete run description.
///
/// `m` counts scalar weights. With `tau > 1` weights are grouped into `ceil(m / tau)`
/// mega-elements and `k` counts selected mega-elements.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub m: u64,
    pub k: SelectionSizes,
    pub n: usize,
    pub l: u32,
    pub tau: usize,
    /// `None` picks the recommended scale factor for `(m, k)`.
    pub epsilon: Option<f64>,
    pub eta: usize,
    pub sigma: usize,
    pub mode: ScenarioMode,
    pub rounds: u64,
    pub rng_seed: u64,
    pub weights: InitialWeights,
}

impl Scenario {
    pub fn new(m: u64, k: usize, n: usize) -> Self {
        Self {
            m,
            k: SelectionSizes::Uniform(k),
            n,
            l: 128,
            tau: 1,
            epsilon: None,
            eta: 3,
            sigma: 0,
            mode: ScenarioMode::FullDomain,
            rounds: 1,
            rng_seed: 0,
            weights: InitialWeights::Random,
        }
    }

    /// Number of (mega-)indexes clients select from.
    pub fn index_space(&self) -> u64 {
        self.m.div_ceil(self.tau as u64)
    }

    pub fn k_of(&self, client: usize) -> usize {
        match &self.k {
            SelectionSizes::Uniform(k) => *k,
            SelectionSizes::PerClient(v) => v[client],
        }
    }

    pub fn k_max(&self) -> usize {
        match &self.k {
            SelectionSizes::Uniform(k) => *k,
            SelectionSizes::PerClient(v) => v.iter().copied().max().unwrap_or(0),
        }
    }

    pub fn group(&self) -> Result<GroupParams> {
        GroupParams::new(self.l, self.tau)
    }

    pub fn resolved_epsilon(&self) -> Result<f64> {
        match self.epsilon {
            Some(e) => Ok(e),
            None => Ok(recommend_params(self.index_space(), self.k_max().max(1) as u64)?.epsilon),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.group()?;
        if self.m == 0 {
            return Err(Error::param("m must be positive"));
        }
        if let SelectionSizes::PerClient(v) = &self.k {
            if v.len() != self.n {
                return Err(Error::param(format!("{} selection sizes for n={} clients", v.len(), self.n)));
            }
        }
        if self.k_max() as u64 > self.index_space() {
            return Err(Error::param(format!("k={} exceeds index space {}", self.k_max(), self.index_space())));
        }
        if self.rounds == 0 {
            return Err(Error::param("rounds must be at least 1"));
        }
        u32::try_from(self.n).map_err(|_| Error::param("too many clients"))?;
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. `m` and `k` are required.
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = None;
        let mut k = None;
        let mut n = None;
        let mut s = Scenario::new(1, 0, 0);
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(a, b)| (a.trim(), b.trim()))
                .ok_or_else(|| Error::format(format!("line {}: expected key = value", no + 1)))?;
            let bad = || Error::format(format!("line {}: bad value {value:?} for {key}", no + 1));
            match key {
                "m" => m = Some(value.parse().map_err(|_| bad())?),
                "k" => {
                    k = Some(if value.contains(',') {
                        SelectionSizes::PerClient(
                            value.split(',').map(|v| v.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?,
                        )
                    } else {
                        SelectionSizes::Uniform(value.parse().map_err(|_| bad())?)
                    })
                }
                "n" => n = Some(value.parse().map_err(|_| bad())?),
                "l" => s.l = value.parse().map_err(|_| bad())?,
                "tau" => s.tau = value.parse().map_err(|_| bad())?,
                "epsilon" => s.epsilon = if value == "auto" { None } else { Some(value.parse().map_err(|_| bad())?) },
                "eta" => s.eta = value.parse().map_err(|_| bad())?,
                "sigma" => s.sigma = value.parse().map_err(|_| bad())?,
                "mode" => s.mode = value.parse()?,
                "rounds" => s.rounds = value.parse().map_err(|_| bad())?,
                "rng_seed" => s.rng_seed = value.parse().map_err(|_| bad())?,
                "weights" => {
                    s.weights = match value {
                        "random" => InitialWeights::Random,
                        "zero" => InitialWeights::Zero,
                        _ => return Err(bad()),
                    }
                }
                _ => return Err(Error::format(format!("line {}: unknown key {key:?}", no + 1))),
            }
        }
        s.m = m.ok_or_else(|| Error::format("scenario is missing m"))?;
        s.k = k.ok_or_else(|| Error::format("scenario is missing k"))?;
        s.n = match (n, &s.k) {
            (Some(n), _) => n,
            (None, SelectionSizes::PerClient(v)) => v.len(),
            (None, SelectionSizes::Uniform(_)) => 1,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let k = match &self.k {
            SelectionSizes::Uniform(k) => k.to_string(),
            SelectionSizes::PerClient(v) => v.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        };
        let eps = self.epsilon.map_or("auto".to_string(), |e| e.to_string());
        let weights = match self.weights {
            InitialWeights::Random => "random",
            InitialWeights::Zero => "zero",
        };
        format!(
            "m = {}\nk = {k}\nn = {}\nl = {}\ntau = {}\nepsilon = {eps}\neta = {}\nsigma = {}\nmode = {}\nrounds = {}\nrng_seed = {}\nweights = {weights}\n",
            self.m,
            self.n,
            self.l,
            self.tau,
            self.eta,
            self.sigma,
            self.mode.as_str(),
            self.rounds,
            self.rng_seed
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Client(u32),
    Server(u8),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Client(i) => write!(f, "C{i}"),
            Endpoint::Server(b) => write!(f, "S{b}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageRecord {
    pub round: u64,
    pub sender: Endpoint,
    pub receiver: Endpoint,
    pub role: Role,
    pub bytes: u64,
    /// First 8 bytes of SHA-256 of the encoded message, hex.
    pub digest: String,
}

/// Everything one client sent to the servers in one round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UploadRecord {
    pub client_id: u32,
    pub round: u64,
    /// `false` for hint-only rounds.
    pub full_keys: bool,
    pub total_bytes: u64,
    /// Envelope headers, key counts and per-key headers.
    pub header_bytes: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundTimings {
    pub gen: Duration,
    pub eval: Duration,
    pub aggregate: Duration,
}

/// Shape of the setup a round ran with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetupInfo {
    pub index_space: u64,
    pub domain_len: usize,
    pub bins: usize,
    pub theta: usize,
    pub depth: u32,
    pub l: u32,
    pub tau: usize,
    pub sigma: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTranscript {
    pub round: u64,
    pub psr: bool,
    pub setup: SetupInfo,
    pub messages: Vec<MessageRecord>,
    pub uploads: Vec<UploadRecord>,
    pub timings: RoundTimings,
    /// Model after the round (scalar weights).
    pub final_w: Vec<u128>,
    /// What the plaintext oracle says the model (or, for retrieval, the lookups) should be.
    pub oracle_w: Vec<u128>,
    pub oracle_match: bool,
    /// Selected indexes that ended up in a client stash, summed over clients.
    pub stash_entries: usize,
}

impl RoundTranscript {
    /// Each client sends one message to each server, or one hint to server 0.
    pub fn one_message_per_server(&self, n: usize) -> bool {
        (0..n as u32).all(|c| {
            let to = |b: u8| {
                self.messages.iter().filter(|m| m.sender == Endpoint::Client(c) && m.receiver == Endpoint::Server(b)).count()
            };
            let full = self.uploads.iter().any(|u| u.client_id == c && u.full_keys);
            if full {
                to(0) == 1 && to(1) == 1
            } else {
                to(0) == 1 && to(1) == 0
            }
        })
    }

    /// Only client-server and server-server channels appear.
    pub fn channels_ok(&self) -> bool {
        self.messages.iter().all(|m| {
            !matches!((m.sender, m.receiver), (Endpoint::Client(_), Endpoint::Client(_)))
                && m.sender != m.receiver
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    pub scenario: Scenario,
    pub rounds: Vec<RoundTranscript>,
}

pub const MESSAGES_CSV_HEADER: &str = "round,sender,receiver,role,bytes,digest";

impl Transcript {
    pub fn all_match(&self) -> bool {
        self.rounds.iter().all(|r| r.oracle_match)
    }

    pub fn final_w(&self) -> &[u128] {
        self.rounds.last().map_or(&[], |r| &r.final_w)
    }

    pub fn messages_csv(&self) -> String {
        let mut out = String::from(MESSAGES_CSV_HEADER);
        out.push('\n');
        for r in &self.rounds {
            for m in &r.messages {
                let _ = writeln!(out, "{},{},{},{},{},{}", m.round, m.sender, m.receiver, m.role.label(), m.bytes, m.digest);
            }
        }
        out
    }

    /// Byte-exact, timing-free rendering: messages plus a digest of every round's model.
    pub fn deterministic_text(&self) -> String {
        let mut out = self.messages_csv();
        for r in &self.rounds {
            let mut h = Sha256::new();
            for w in &r.final_w {
                h.update(w.to_be_bytes());
            }
            let _ = writeln!(out, "round {} w {} match {}", r.round, hex::encode(h.finalize()), r.oracle_match);
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# scenario");
        s.push_str(&self.scenario.to_text());
        for r in &self.rounds {
            let up: u64 = r.uploads.iter().map(|u| u.total_bytes).sum();
            let per = if r.uploads.is_empty() { 0 } else { up / r.uploads.len() as u64 };
            let _ = writeln!(
                s,
                "round {}: {} bins={} theta={} depth={} messages={} client_upload_bytes={} gen_ms={:.3} eval_ms={:.3} agg_ms={:.3} oracle_match={}",
                r.round,
                if r.psr { "psr" } else { "ssa" },
                r.setup.bins,
                r.setup.theta,
                r.setup.depth,
                r.messages.len(),
                per,
                ms(r.timings.gen),
                ms(r.timings.eval),
                ms(r.timings.aggregate),
                r.oracle_match
            );
        }
        s
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Scatter-sum over flat scalar weights: `w[x*tau + i] += u_i mod 2^l`. Touches no protocol code.
#[derive(Clone, Debug)]
pub struct PlaintextOracle {
    mask: u128,
    tau: usize,
    w: Vec<u128>,
}

impl PlaintextOracle {
    pub fn new(l: u32, tau: usize, w: Vec<u128>) -> Self {
        let mask = if l >= 128 { u128::MAX } else { (1u128 << l) - 1 };
        Self { mask, tau, w }
    }

    /// Adds one client's update for mega-index `x`; components past the model end are ignored.
    pub fn add(&mut self, x: u64, update: &[u128]) {
        for (i, u) in update.iter().enumerate() {
            if let Some(slot) = self.w.get_mut(x as usize * self.tau + i) {
                *slot = slot.wrapping_add(*u) & self.mask;
            }
        }
    }

    /// Direct lookup of mega-index `x`, zero-padded.
    pub fn lookup(&self, x: u64) -> Vec<u128> {
        (0..self.tau).map(|i| self.w.get(x as usize * self.tau + i).copied().unwrap_or(0)).collect()
    }

    pub fn weights(&self) -> &[u128] {
        &self.w
    }
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

struct Net {
    round: u64,
    messages: Vec<MessageRecord>,
}

impl Net {
    /// Records and "delivers" an envelope, returning the bytes the receiver parses.
    fn send(&mut self, from: Endpoint, to: Endpoint, env: &Envelope) -> Vec<u8> {
        let bytes = env.to_bytes();
        self.messages.push(MessageRecord {
            round: self.round,
            sender: from,
            receiver: to,
            role: env.role,
            bytes: bytes.len() as u64,
            digest: digest(&bytes),
        });
        bytes
    }
}

fn random_weights(s: &Scenario, rng: &mut ChaCha20Rng, mask: u128) -> Vec<u128> {
    match s.weights {
        InitialWeights::Random => (0..s.m).map(|_| rng.gen::<u128>() & mask).collect(),
        InitialWeights::Zero => vec![0; s.m as usize],
    }
}

fn draw_selection(rng: &mut ChaCha20Rng, space: u64, k: usize) -> Vec<u64> {
    let mut sel: Vec<u64> = sample(rng, space as usize, k).into_iter().map(|i| i as u64).collect();
    sel.sort_unstable();
    sel
}

/// Update vector for mega-index `x`, zero beyond the model end.
fn draw_update(rng: &mut ChaCha20Rng, g: GroupParams, m: u64, x: u64) -> GroupVector {
    let tau = g.tau() as u64;
    let elems = (0..tau)
        .map(|i| {
            let v = rng.gen::<u128>() & g.mask();
            if x * tau + i < m {
                v
            } else {
                0
            }
        })
        .collect();
    GroupVector::from_elems(g, elems).expect("tau components")
}

fn build_setup(s: &Scenario, hash_seed: Seed, mode: DomainMode) -> Result<SystemSetup> {
    let spec = TableSpec::new(s.index_space(), s.k_max().max(1), s.resolved_epsilon()?, hash_seed)?
        .with_eta(s.eta)?
        .with_sigma(s.sigma);
    SystemSetup::new(spec, s.group()?, s.n, mode)
}

fn setup_info(setup: &SystemSetup) -> SetupInfo {
    SetupInfo {
        index_space: setup.spec().m,
        domain_len: setup.domain().len(),
        bins: setup.bins(),
        theta: setup.simple().theta(),
        depth: setup.simple().depth(),
        l: setup.group().l(),
        tau: setup.group().tau(),
        sigma: setup.sigma(),
    }
}

fn upload_record(u0: &ClientUpload, b0: &[u8], b1: &[u8]) -> UploadRecord {
    let header = 2 * ENVELOPE_HEADER_BYTES + 4 + DPF_HEADER_BYTES * u0.public_parts.len();
    UploadRecord {
        client_id: u0.client_id,
        round: u0.round,
        full_keys: true,
        total_bytes: (b0.len() + b1.len()) as u64,
        header_bytes: header as u64,
    }
}

const S0: Endpoint = Endpoint::Server(0);
const S1: Endpoint = Endpoint::Server(1);

/// Server side of one full-key upload: parse what each server received and rebuild its keys.
struct Received {
    own0: ClientUpload,
    own1: ClientUpload,
    forwarded: Vec<crate::dpf::DpfPublicPart>,
}

fn deliver_upload(net: &mut Net, u0: &ClientUpload, u1: &ClientUpload) -> Result<(Received, UploadRecord)> {
    let c = Endpoint::Client(u0.client_id);
    let b0 = net.send(c, S0, &u0.to_envelope());
    let b1 = net.send(c, S1, &u1.to_envelope());
    let own0 = ClientUpload::from_envelope(&Envelope::from_bytes(&b0)?, Party::Zero)?;
    let own1 = ClientUpload::from_envelope(&Envelope::from_bytes(&b1)?, Party::One)?;
    let fwd = Envelope::new(own0.role, own0.round, own0.client_id, encode_public_parts(&own0.public_parts));
    let fb = net.send(S0, S1, &fwd);
    let forwarded = decode_public_parts(&Envelope::from_bytes(&fb)?.payload)?;
    let record = upload_record(u0, &b0, &b1);
    Ok((Received { own0, own1, forwarded }, record))
}

fn exchange_shares(net: &mut Net, a: &ServerShare, b: &ServerShare, g: GroupParams) -> Result<(ServerShare, ServerShare)> {
    let to1 = net.send(S0, S1, &a.to_envelope(Role::SsaShare, 0));
    let to0 = net.send(S1, S0, &b.to_envelope(Role::SsaShare, 0));
    let a = ServerShare::from_bytes(&Envelope::from_bytes(&to1)?.payload, Party::Zero, a.round, g)?;
    let b = ServerShare::from_bytes(&Envelope::from_bytes(&to0)?.payload, Party::One, b.round, g)?;
    Ok((a, b))
}

/// Runs every round of an aggregation scenario.
pub fn run_round(s: &Scenario) -> Result<Transcript> {
    s.validate()?;
    let g = s.group()?;
    let mut rng = ChaCha20Rng::seed_from_u64(s.rng_seed);
    let hash_seed = Seed::random(&mut rng);
    let mut w = random_weights(s, &mut rng, g.mask());
    let mut rounds = Vec::new();

    // Fixed-selection state for the updatable mode.
    let mut udpf: Option<(SystemSetup, Vec<ClientState>, [UdpfServer; 2])> = None;

    for round in 0..s.rounds {
        let mut net = Net { round, messages: Vec::new() };
        let mut oracle = PlaintextOracle::new(s.l, s.tau, w.clone());
        let mut timings = RoundTimings::default();
        let mut uploads = Vec::new();
        let mut stash_entries = 0;
        let space = s.index_space();

        let hint_round = s.mode == ScenarioMode::UdpfFixed && round > 0;
        let selections: Vec<Vec<u64>> = if hint_round {
            udpf.as_ref().expect("round 0 ran").1.iter().map(|c| c.selection().to_vec()).collect()
        } else {
            (0..s.n).map(|i| draw_selection(&mut rng, space, s.k_of(i))).collect()
        };
        let updates: Vec<Vec<GroupVector>> =
            selections.iter().map(|sel| sel.iter().map(|&x| draw_update(&mut rng, g, s.m, x)).collect()).collect();
        for (sel, ups) in selections.iter().zip(&updates) {
            for (x, u) in sel.iter().zip(ups) {
                oracle.add(*x, u.elems());
            }
        }

        let mode = match s.mode {
            ScenarioMode::UnionRestricted => {
                let union: BTreeSet<u64> = selections.iter().flatten().copied().collect();
                DomainMode::UnionRestricted(union.into_iter().collect())
            }
            _ => DomainMode::FullDomain,
        };
        if matches!(&mode, DomainMode::UnionRestricted(u) if u.is_empty()) {
            // Nobody selected anything: nothing to aggregate.
            let info = SetupInfo { index_space: space, domain_len: 0, bins: 0, theta: 0, depth: 0, l: s.l, tau: s.tau, sigma: s.sigma };
            let final_w = w.clone();
            rounds.push(RoundTranscript {
                round,
                psr: false,
                setup: info,
                messages: net.messages,
                uploads,
                timings,
                oracle_match: final_w == oracle.weights(),
                oracle_w: oracle.weights().to_vec(),
                final_w,
                stash_entries,
            });
            continue;
        }

        let (share0, share1, setup) = if s.mode == ScenarioMode::UdpfFixed {
            if round == 0 {
                let setup = build_setup(s, hash_seed, mode)?;
                let mut clients = Vec::new();
                let mut servers = [UdpfServer::new(Party::Zero), UdpfServer::new(Party::One)];
                for (i, (sel, ups)) in selections.iter().zip(&updates).enumerate() {
                    let mut c = ClientState::new(i as u32, &setup, sel.clone())?;
                    c.set_updates(ups.clone())?;
                    stash_entries += c.cuckoo().stash().len();
                    let t = Instant::now();
                    let (u0, u1) = ssa_client_upload_udpf(&mut c, &setup, round, &mut rng)?;
                    timings.gen += t.elapsed();
                    let (rx, rec) = deliver_upload(&mut net, &u0, &u1)?;
                    uploads.push(rec);
                    servers[0].install(materialize_udpf_keys(&setup, &rx.own0, &rx.own0.public_parts)?);
                    servers[1].install(materialize_udpf_keys(&setup, &rx.own1, &rx.forwarded)?);
                    clients.push(c);
                }
                udpf = Some((setup, clients, servers));
            } else {
                let (setup, clients, servers) = udpf.as_mut().expect("round 0 ran");
                for (c, ups) in clients.iter_mut().zip(&updates) {
                    stash_entries += c.cuckoo().stash().len();
                    let sel = c.selection().to_vec();
                    let t = Instant::now();
                    let hint = ssa_udpf_round(c, setup, &sel, ups.clone(), round)?;
                    timings.gen += t.elapsed();
                    let b0 = net.send(Endpoint::Client(c.id()), S0, &hint_envelope(c.id(), &hint));
                    let env = Envelope::from_bytes(&b0)?;
                    let fb = net.send(S0, S1, &env);
                    let h0 = Hint::from_bytes(&env.payload, setup.group())?;
                    let h1 = Hint::from_bytes(&Envelope::from_bytes(&fb)?.payload, setup.group())?;
                    servers[0].apply_hint(setup, c.id(), &h0)?;
                    servers[1].apply_hint(setup, c.id(), &h1)?;
                    uploads.push(UploadRecord {
                        client_id: c.id(),
                        round,
                        full_keys: false,
                        total_bytes: b0.len() as u64,
                        header_bytes: (ENVELOPE_HEADER_BYTES + crate::udpf::HINT_HEADER_BYTES) as u64,
                    });
                }
            }
            let (setup, _, servers) = udpf.as_ref().expect("set above");
            let t = Instant::now();
            let (a, ta) = servers[0].aggregate(setup, round)?;
            let (b, tb) = servers[1].aggregate(setup, round)?;
            let total = t.elapsed();
            timings.eval = ta.eval + tb.eval;
            timings.aggregate = total.saturating_sub(timings.eval);
            (a, b, setup.clone())
        } else {
            let setup = build_setup(s, hash_seed, mode)?;
            let (mut k0, mut k1) = (Vec::new(), Vec::new());
            for (i, (sel, ups)) in selections.iter().zip(&updates).enumerate() {
                let mut c = ClientState::new(i as u32, &setup, sel.clone())?;
                c.set_updates(ups.clone())?;
                stash_entries += c.cuckoo().stash().len();
                let t = Instant::now();
                let (u0, u1) = ssa_client_upload(&c, &setup, round, &mut rng)?;
                timings.gen += t.elapsed();
                let (rx, rec) = deliver_upload(&mut net, &u0, &u1)?;
                uploads.push(rec);
                k0.push(materialize_keys(&setup, g, &rx.own0, &rx.own0.public_parts)?);
                k1.push(materialize_keys(&setup, g, &rx.own1, &rx.forwarded)?);
            }
            let t = Instant::now();
            let (a, ta) = ssa_server_aggregate(&setup, Party::Zero, round, &k0)?;
            let (b, tb) = ssa_server_aggregate(&setup, Party::One, round, &k1)?;
            let total = t.elapsed();
            timings.eval = ta.eval + tb.eval;
            timings.aggregate = total.saturating_sub(timings.eval);
            (a, b, setup)
        };

        let (a, b) = exchange_shares(&mut net, &share0, &share1, g)?;
        let t = Instant::now();
        let prev = group_weights(g, &w);
        let next = ssa_finalize(&setup, &a, &b, &prev)?;
        timings.aggregate += t.elapsed();
        w = flatten_weights(&next, s.m as usize);
        rounds.push(RoundTranscript {
            round,
            psr: false,
            setup: setup_info(&setup),
            messages: net.messages,
            uploads,
            timings,
            oracle_match: w == oracle.weights(),
            oracle_w: oracle.weights().to_vec(),
            final_w: w.clone(),
            stash_entries,
        });
    }
    Ok(Transcript { scenario: s.clone(), rounds })
}

/// Retrieval rounds: every client queries its selection and checks the answer against direct
/// lookup. `final_w` holds the concatenated retrieved values and `oracle_w` the lookups.
pub fn run_psr(s: &Scenario) -> Result<Transcript> {
    s.validate()?;
    if s.mode == ScenarioMode::UdpfFixed {
        return Err(Error::Mode("retrieval does not use updatable keys".into()));
    }
    let g = s.group()?;
    let mut rng = ChaCha20Rng::seed_from_u64(s.rng_seed);
    let hash_seed = Seed::random(&mut rng);
    let w = random_weights(s, &mut rng, g.mask());
    let oracle = PlaintextOracle::new(s.l, s.tau, w.clone());
    let grouped = group_weights(g, &w);
    let mut rounds = Vec::new();
    for round in 0..s.rounds {
        let mut net = Net { round, messages: Vec::new() };
        let mut timings = RoundTimings::default();
        let mut uploads = Vec::new();
        let selections: Vec<Vec<u64>> = (0..s.n).map(|i| draw_selection(&mut rng, s.index_space(), s.k_of(i))).collect();
        let mode = match s.mode {
            ScenarioMode::UnionRestricted => {
                let union: BTreeSet<u64> = selections.iter().flatten().copied().collect();
                if union.is_empty() {
                    DomainMode::FullDomain
                } else {
                    DomainMode::UnionRestricted(union.into_iter().collect())
                }
            }
            _ => DomainMode::FullDomain,
        };
        let setup = build_setup(s, hash_seed, mode)?;
        let w_dom: Vec<GroupVector> = setup.domain().iter().map(|&x| grouped[x as usize].clone()).collect();
        let (mut got, mut want) = (Vec::new(), Vec::new());
        let mut stash_entries = 0;
        for (i, sel) in selections.iter().enumerate() {
            let c = ClientState::new(i as u32, &setup, sel.clone())?;
            stash_entries += c.cuckoo().stash().len();
            let t = Instant::now();
            let (u0, u1) = psr_client_query(&c, &setup, round, &mut rng)?;
            timings.gen += t.elapsed();
            let (rx, rec) = deliver_upload(&mut net, &u0, &u1)?;
            uploads.push(rec);
            let ks = g.scalar();
            let k0: ClientKeys<_> = materialize_keys(&setup, ks, &rx.own0, &rx.own0.public_parts)?;
            let k1: ClientKeys<_> = materialize_keys(&setup, ks, &rx.own1, &rx.forwarded)?;
            let t = Instant::now();
            let a0 = psr_server_answer(&setup, &k0, &w_dom)?;
            let a1 = psr_server_answer(&setup, &k1, &w_dom)?;
            timings.eval += t.elapsed();
            let cid = Endpoint::Client(i as u32);
            let r0 = net.send(S0, cid, &a0.to_envelope(Role::PsrAnswer, i as u32));
            let r1 = net.send(S1, cid, &a1.to_envelope(Role::PsrAnswer, i as u32));
            let a0 = ServerShare::from_bytes(&Envelope::from_bytes(&r0)?.payload, Party::Zero, round, g)?;
            let a1 = ServerShare::from_bytes(&Envelope::from_bytes(&r1)?.payload, Party::One, round, g)?;
            let t = Instant::now();
            let rec = psr_client_reconstruct(&c, &setup, &a0, &a1)?;
            timings.aggregate += t.elapsed();
            for &x in sel {
                let v = rec.get(&x).ok_or_else(|| Error::protocol(format!("index {x} not retrieved")))?;
                got.extend_from_slice(v.elems());
                want.extend(oracle.lookup(x));
            }
        }
        rounds.push(RoundTranscript {
            round,
            psr: true,
            setup: setup_info(&setup),
            messages: net.messages,
            uploads,
            timings,
            oracle_match: got == want,
            final_w: got,
            oracle_w: want,
            stash_entries,
        });
    }
    Ok(Transcript { scenario: s.clone(), rounds })
}

pub const BENCH_CSV_HEADER: &str =
    "m,k,c,tau,sigma,mode,round,client_upload_bytes,gen_ms,eval_ms,agg_ms,oracle_match";

/// Runs each scenario and emits one CSV row per round.
pub fn bench_sweep(grid: &[Scenario]) -> Result<String> {
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for s in grid {
        let t = run_round(s)?;
        for r in &t.rounds {
            let total: u64 = r.uploads.iter().map(|u| u.total_bytes).sum();
            let per = if r.uploads.is_empty() { 0 } else { total / r.uploads.len() as u64 };
            let _ = writeln!(
                out,
                "{},{},{:.4},{},{},{},{},{},{:.3},{:.3},{:.3},{}",
                s.m,
                s.k_max(),
                s.k_max() as f64 / s.index_space() as f64,
                s.tau,
                s.sigma,
                s.mode.as_str(),
                r.round,
                per,
                ms(r.timings.gen),
                ms(r.timings.eval),
                ms(r.timings.aggregate),
                r.oracle_match
            );
        }
    }
    Ok(out)
}
