//! Probabilistic batch codes from aligned cuckoo and simple hashing.
//!
//! Both tables use the same `B = ceil(epsilon * k)` bins and the same `eta` hash functions, so a
//! client's cuckoo slot `j` always holds an element of simple bin `j`. Simple bins are sorted
//! ascending; the rank of an element inside its bin is the DPF point the client programs.

use crate::error::{Error, Result};
use crate::primitives::Seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashSet};

/// Relocations attempted per insertion before the evicted element goes to the stash.
pub const MAX_RELOCATIONS: usize = 500;

/// Parameters every party must agree on.
#[derive(Clone, Debug, PartialEq)]
pub struct TableSpec {
    /// Size of the global index space.
    pub m: u64,
    /// Selection capacity per client.
    pub k: usize,
    pub epsilon: f64,
    pub eta: usize,
    pub sigma: usize,
    pub hash_seed: Seed,
    pub kappa: u32,
}

impl TableSpec {
    /// `eta = 3`, `sigma = 0`, `kappa = 40`.
    pub fn new(m: u64, k: usize, epsilon: f64, hash_seed: Seed) -> Result<Self> {
        let spec = Self { m, k, epsilon, eta: 3, sigma: 0, hash_seed, kappa: 40 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_eta(mut self, eta: usize) -> Result<Self> {
        self.eta = eta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_sigma(mut self, sigma: usize) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta < 2 {
            return Err(Error::param(format!("eta={} must be at least 2", self.eta)));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 1.0 {
            return Err(Error::param(format!("epsilon={} must exceed 1", self.epsilon)));
        }
        if self.m == 0 {
            return Err(Error::param("m must be positive"));
        }
        if self.bins() < self.k.max(1) {
            return Err(Error::param("bin count below selection capacity"));
        }
        Ok(())
    }

    /// `B = ceil(epsilon * k)`, at least one bin.
    pub fn bins(&self) -> usize {
        // Guard against products like 1.1 * 10 = 11.000000000000002.
        ((self.epsilon * self.k as f64 - 1e-9).ceil() as usize).max(1)
    }

    /// The `eta` raw hash values of `element`, each in `[0, B)`.
    pub fn hashes(&self, element: u64) -> Vec<usize> {
        let b = self.bins() as u64;
        let mut out = Vec::with_capacity(self.eta);
        let mut block = 0u32;
        while out.len() < self.eta {
            let mut h = Sha256::new();
            h.update(b"HSH");
            h.update(self.hash_seed.0);
            h.update(element.to_be_bytes());
            h.update(block.to_be_bytes());
            let digest = h.finalize();
            for chunk in digest.chunks(8) {
                if out.len() == self.eta {
                    break;
                }
                let v = u64::from_be_bytes(chunk.try_into().expect("8 bytes"));
                out.push((v % b) as usize);
            }
            block += 1;
        }
        out
    }

    /// Canonical `key = value` text with sorted keys, for setup comparison.
    pub fn canonical_text(&self) -> String {
        let fields: BTreeMap<&str, String> = [
            ("bins", self.bins().to_string()),
            ("epsilon", format!("{}", self.epsilon)),
            ("eta", self.eta.to_string()),
            ("hash_seed", hex::encode(self.hash_seed.0)),
            ("k", self.k.to_string()),
            ("kappa", self.kappa.to_string()),
            ("m", self.m.to_string()),
            ("sigma", self.sigma.to_string()),
        ]
        .into_iter()
        .collect();
        fields.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn from_canonical_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("bad line {line:?}")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| map.get(k).ok_or_else(|| Error::format(format!("missing field {k}")));
        let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| Error::format(format!("bad {k}"))) };
        let seed_hex = hex::decode(get("hash_seed")?).map_err(|_| Error::format("bad hash_seed"))?;
        let spec = Self {
            m: num("m")?,
            k: num("k")? as usize,
            epsilon: get("epsilon")?.parse().map_err(|_| Error::format("bad epsilon"))?,
            eta: num("eta")? as usize,
            sigma: num("sigma")? as usize,
            hash_seed: Seed::from_slice(&seed_hex)?,
            kappa: num("kappa")? as u32,
        };
        spec.validate()?;
        if spec.bins() as u64 != num("bins")? {
            return Err(Error::format("bins field inconsistent with epsilon and k"));
        }
        Ok(spec)
    }
}

/// Deduplicated candidate bins of `element`, in hash-function order.
pub fn candidate_bins(spec: &TableSpec, element: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(spec.eta);
    for h in spec.hashes(element) {
        if !out.contains(&h) {
            out.push(h);
        }
    }
    out
}

/// Every domain element inserted into each of its candidate bins.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleTable {
    spec: TableSpec,
    domain: Vec<u64>,
    bins: Vec<Vec<u64>>,
    theta: usize,
    depth: u32,
}

/// Inserts `domain` (strictly increasing) with simple hashing.
pub fn build_simple_table(spec: &TableSpec, domain: &[u64]) -> Result<SimpleTable> {
    spec.validate()?;
    if domain.is_empty() {
        return Err(Error::param("empty domain"));
    }
    if domain.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("domain must be strictly increasing"));
    }
    let mut bins = vec![Vec::new(); spec.bins()];
    for &x in domain {
        for b in candidate_bins(spec, x) {
            bins[b].push(x);
        }
    }
    let theta = bins.iter().map(Vec::len).max().unwrap_or(0);
    Ok(SimpleTable { spec: spec.clone(), domain: domain.to_vec(), bins, theta, depth: depth_for(theta) })
}

/// `ceil(log2 n)`, at least 1.
pub fn depth_for(n: usize) -> u32 {
    if n <= 2 {
        1
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

impl SimpleTable {
    pub fn spec(&self) -> &TableSpec {
        &self.spec
    }

    pub fn domain(&self) -> &[u64] {
        &self.domain
    }

    pub fn bins(&self) -> &[Vec<u64>] {
        &self.bins
    }

    pub fn bin(&self, j: usize) -> &[u64] {
        &self.bins[j]
    }

    /// Maximum bin size.
    pub fn theta(&self) -> usize {
        self.theta
    }

    /// Per-bin DPF depth, `ceil(log2 theta)` (at least 1).
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Rank of `element` within bin `bin`.
    pub fn lookup_position(&self, bin: usize, element: u64) -> Result<usize> {
        self.bins
            .get(bin)
            .and_then(|b| b.binary_search(&element).ok())
            .ok_or(Error::Lookup { bin, element })
    }
}

/// Functional form of [`SimpleTable::lookup_position`].
pub fn lookup_position(simple: &SimpleTable, bin: usize, element: u64) -> Result<usize> {
    simple.lookup_position(bin, element)
}

/// Per-element `(bin, position)` pairs over all candidate bins.
#[derive(Clone, Debug)]
pub struct PositionIndex {
    entries: Vec<Vec<(usize, usize)>>,
}

impl PositionIndex {
    pub fn build(simple: &SimpleTable) -> Self {
        let mut entries = vec![Vec::new(); simple.domain.len()];
        for (bin, members) in simple.bins.iter().enumerate() {
            for (pos, x) in members.iter().enumerate() {
                let i = simple.domain.binary_search(x).expect("bins hold domain elements");
                entries[i].push((bin, pos));
            }
        }
        Self { entries }
    }

    /// Entries for the element at `domain[domain_pos]`.
    pub fn positions(&self, domain_pos: usize) -> &[(usize, usize)] {
        &self.entries[domain_pos]
    }
}

/// One client's cuckoo table: each slot is empty or holds one selected element.
#[derive(Clone, Debug, PartialEq)]
pub struct CuckooTable {
    spec: TableSpec,
    slots: Vec<Option<u64>>,
    stash: Vec<u64>,
}

/// Random-walk cuckoo insertion with overflow into a stash of capacity `sigma`.
pub fn build_cuckoo_table(spec: &TableSpec, selection: &[u64]) -> Result<CuckooTable> {
    spec.validate()?;
    if selection.len() > spec.k {
        return Err(Error::param(format!("selection of {} exceeds capacity k={}", selection.len(), spec.k)));
    }
    let mut seen = HashSet::with_capacity(selection.len());
    for &x in selection {
        if x >= spec.m {
            return Err(Error::param(format!("index {x} outside index space of size {}", spec.m)));
        }
        if !seen.insert(x) {
            return Err(Error::param(format!("duplicate index {x} in selection")));
        }
    }
    let mut rng = ChaCha20Rng::from_seed(Sha256::digest([b"CKO".as_slice(), &spec.hash_seed.0].concat()).into());
    let mut slots: Vec<Option<u64>> = vec![None; spec.bins()];
    let mut stash = Vec::new();
    let mut unplaced = 0usize;
    for &x in selection {
        let mut current = x;
        let mut came_from = usize::MAX;
        let mut placed = false;
        for _ in 0..=MAX_RELOCATIONS {
            let cands = candidate_bins(spec, current);
            if let Some(&free) = cands.iter().find(|&&b| slots[b].is_none()) {
                slots[free] = Some(current);
                placed = true;
                break;
            }
            let choices: Vec<usize> = cands.iter().copied().filter(|&b| b != came_from).collect();
            let pick = if choices.is_empty() { cands[0] } else { choices[rng.gen_range(0..choices.len())] };
            current = slots[pick].replace(current).expect("occupied");
            came_from = pick;
        }
        if !placed {
            if stash.len() < spec.sigma {
                stash.push(current);
            } else {
                unplaced += 1;
            }
        }
    }
    if unplaced > 0 {
        return Err(Error::InsertionFailure { unplaced, stash_capacity: spec.sigma });
    }
    Ok(CuckooTable { spec: spec.clone(), slots, stash })
}

impl CuckooTable {
    pub fn spec(&self) -> &TableSpec {
        &self.spec
    }

    pub fn slots(&self) -> &[Option<u64>] {
        &self.slots
    }

    pub fn stash(&self) -> &[u64] {
        &self.stash
    }

    pub fn occupied(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }
}

/// Output of [`recommend_params`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Recommendation {
    pub epsilon: f64,
    pub theta_estimate: f64,
    pub depth: u32,
}

/// Scale factor by input-size bracket.
const SCALE_FACTORS: [(u32, f64); 4] = [(10, 1.25), (15, 1.25), (20, 1.27), (25, 1.28)];

/// Measured maximum simple-bin sizes: rows are compression rates, columns `log2 m` in
/// `{10, 15, 20, 25}`.
const MAX_BIN_SIZES: [(f64, [f64; 4]); 5] = [
    (0.01, [324.0, 315.0, 336.0, 366.0]),
    (0.10, [45.0, 54.0, 66.0, 78.0]),
    (0.30, [27.0, 36.0, 39.0, 48.0]),
    (0.50, [21.0, 24.0, 30.0, 36.0]),
    (0.70, [18.0, 21.0, 27.0, 30.0]),
];

/// Depth never needs to exceed this for `c >= 1%` and `m <= 2^25`.
pub const DEPTH_CAP: u32 = 9;

/// Scale factor and expected maximum simple-bin size for `k` selections out of `m`.
pub fn recommend_params(m: u64, k: u64) -> Result<Recommendation> {
    if m == 0 || k > m {
        return Err(Error::param(format!("need 0 < k <= m, got k={k}, m={m}")));
    }
    let log_m = (m as f64).log2();
    let epsilon = SCALE_FACTORS
        .iter()
        .find(|(lg, _)| log_m <= *lg as f64 + 1e-9)
        .map_or(SCALE_FACTORS[3].1, |&(_, e)| e);

    // Linear in log2 m between table columns, log-log in c between rows.
    let col = ((log_m.clamp(10.0, 25.0) - 10.0) / 5.0).min(2.999_999);
    let (ci, cf) = (col.floor() as usize, col.fract());
    let row_at = |row: &[f64; 4]| row[ci] * (1.0 - cf) + row[ci + 1] * cf;
    let c = (k.max(1) as f64) / m as f64;
    let theta = if c <= MAX_BIN_SIZES[0].0 {
        row_at(&MAX_BIN_SIZES[0].1) * MAX_BIN_SIZES[0].0 / c
    } else if c >= MAX_BIN_SIZES[4].0 {
        row_at(&MAX_BIN_SIZES[4].1)
    } else {
        let i = MAX_BIN_SIZES.windows(2).position(|w| c <= w[1].0).expect("c inside table range");
        let (c0, r0) = MAX_BIN_SIZES[i];
        let (c1, r1) = MAX_BIN_SIZES[i + 1];
        let t = (c.ln() - c0.ln()) / (c1.ln() - c0.ln());
        (row_at(&r0).ln() * (1.0 - t) + row_at(&r1).ln() * t).exp()
    };
    let mut depth = depth_for(theta.ceil() as usize);
    if c >= 0.01 && log_m <= 25.0 {
        depth = depth.min(DEPTH_CAP);
    }
    Ok(Recommendation { epsilon, theta_estimate: theta, depth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::index::sample;

    fn spec(m: u64, k: usize) -> TableSpec {
        TableSpec::new(m, k, 1.25, Seed([3; 16])).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(TableSpec::new(10, 4, 1.0, Seed::ZERO).is_err());
        assert!(spec(10, 4).with_eta(1).is_err());
        assert_eq!(TableSpec::new(100, 10, 1.1, Seed::ZERO).unwrap().bins(), 11);
        assert_eq!(spec(1 << 15, 3277).bins(), 4097);
    }

    #[test]
    fn canonical_text_round_trip() {
        let s = spec(1000, 17).with_sigma(2);
        let text = s.canonical_text();
        assert!(text.starts_with("bins = 22\n"));
        assert_eq!(TableSpec::from_canonical_text(&text).unwrap(), s);
        assert!(TableSpec::from_canonical_text(&text.replace("bins = 22", "bins = 23")).is_err());
    }

    #[test]
    fn depth_for_values() {
        assert_eq!(depth_for(1), 1);
        assert_eq!(depth_for(2), 1);
        assert_eq!(depth_for(3), 2);
        assert_eq!(depth_for(54), 6);
        assert_eq!(depth_for(64), 6);
        assert_eq!(depth_for(65), 7);
        assert_eq!(depth_for(366), 9);
    }

    #[test]
    fn single_element_domain() {
        let s = spec(100, 8);
        let t = build_simple_table(&s, &[42]).unwrap();
        let nonempty = t.bins().iter().filter(|b| !b.is_empty()).count();
        assert_eq!(nonempty, candidate_bins(&s, 42).len());
        assert!(nonempty <= 3);
        assert_eq!(t.theta(), 1);
        assert!(build_simple_table(&s, &[]).is_err());
        assert!(build_simple_table(&s, &[3, 3]).is_err());
    }

    #[test]
    fn simple_table_membership_and_positions() {
        let s = spec(512, 40);
        let domain: Vec<u64> = (0..512).collect();
        let t = build_simple_table(&s, &domain).unwrap();
        let idx = PositionIndex::build(&t);
        for &x in &domain {
            let cands = candidate_bins(&s, x);
            let entries = idx.positions(x as usize);
            assert_eq!(entries.len(), cands.len());
            for &(bin, pos) in entries {
                assert!(cands.contains(&bin));
                assert_eq!(t.bin(bin)[pos], x);
                assert_eq!(t.lookup_position(bin, x).unwrap(), pos);
            }
        }
        for b in t.bins() {
            assert!(b.windows(2).all(|w| w[0] < w[1]));
        }
        let total: usize = t.bins().iter().map(Vec::len).sum();
        let expected: usize = domain.iter().map(|&x| candidate_bins(&s, x).len()).sum();
        assert_eq!(total, expected);
    }

    #[test]
    fn lookup_rank_and_absent() {
        let s = spec(16, 2);
        let t = SimpleTable {
            spec: s,
            domain: vec![3, 7, 9],
            bins: vec![vec![3, 7, 9], vec![], vec![]],
            theta: 3,
            depth: 2,
        };
        assert_eq!(lookup_position(&t, 0, 7).unwrap(), 1);
        assert!(matches!(t.lookup_position(0, 4), Err(Error::Lookup { bin: 0, element: 4 })));
        assert!(t.lookup_position(5, 3).is_err());
    }

    #[test]
    fn colliding_hashes_are_deduplicated() {
        // Tiny bin counts make collisions common.
        let s = TableSpec::new(1000, 2, 1.5, Seed([1; 16])).unwrap();
        assert_eq!(s.bins(), 3);
        let mut sizes = HashSet::new();
        for x in 0..1000 {
            let c = candidate_bins(&s, x);
            assert!((1..=3).contains(&c.len()));
            sizes.insert(c.len());
        }
        assert!(sizes.contains(&2), "some element should have exactly two distinct bins");
    }

    #[test]
    fn five_element_example() {
        // Full set {0..4}, client selects {1, 4}.
        let s = TableSpec::new(5, 2, 1.5, Seed([5; 16])).unwrap();
        let domain: Vec<u64> = (0..5).collect();
        let simple = build_simple_table(&s, &domain).unwrap();
        let cuckoo = build_cuckoo_table(&s, &[1, 4]).unwrap();
        for bin in candidate_bins(&s, 4) {
            let pos = simple.lookup_position(bin, 4).unwrap();
            assert_eq!(simple.bin(bin)[pos], 4);
        }
        for (j, slot) in cuckoo.slots().iter().enumerate() {
            if let Some(u) = slot {
                assert!(simple.bin(j).contains(u));
            }
        }
    }

    #[test]
    fn empty_selection() {
        let t = build_cuckoo_table(&spec(100, 10), &[]).unwrap();
        assert_eq!(t.occupied(), 0);
        assert!(t.stash().is_empty());
        assert_eq!(t.slots().len(), 13);
    }

    #[test]
    fn cuckoo_rejects_bad_selection() {
        let s = spec(100, 3);
        assert!(build_cuckoo_table(&s, &[1, 2, 3, 4]).is_err());
        assert!(build_cuckoo_table(&s, &[1, 1]).is_err());
        assert!(build_cuckoo_table(&s, &[100]).is_err());
    }

    #[test]
    fn alignment_over_random_tables() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for trial in 0..200 {
            let m = rng.gen_range(16..400u64);
            let k = rng.gen_range(1..=(m as usize / 2).min(64));
            let s = TableSpec::new(m, k, 1.25 + rng.gen::<f64>(), Seed([trial as u8; 16])).unwrap();
            let domain: Vec<u64> = (0..m).collect();
            let simple = build_simple_table(&s, &domain).unwrap();
            let sel: Vec<u64> = sample(&mut rng, m as usize, k).into_iter().map(|i| i as u64).collect();
            let cuckoo = build_cuckoo_table(&s, &sel).unwrap();
            let mut placed: Vec<u64> = cuckoo.slots().iter().flatten().copied().collect();
            for (j, slot) in cuckoo.slots().iter().enumerate() {
                if let Some(u) = slot {
                    assert!(candidate_bins(&s, *u).contains(&j));
                    assert!(simple.bin(j).binary_search(u).is_ok());
                }
            }
            placed.extend(cuckoo.stash());
            placed.sort_unstable();
            let mut want = sel.clone();
            want.sort_unstable();
            assert_eq!(placed, want);
        }
    }

    #[test]
    fn stash_absorbs_overflow() {
        // Two hash functions over a domain of four elements: four selections cannot all be placed
        // in five bins whenever their candidate sets overlap too much.
        let mut used_stash = false;
        for seed in 0..50u8 {
            let s = TableSpec::new(6, 6, 1.01, Seed([seed; 16])).unwrap().with_eta(2).unwrap().with_sigma(6);
            let t = build_cuckoo_table(&s, &[0, 1, 2, 3, 4, 5]).unwrap();
            assert_eq!(t.occupied() + t.stash().len(), 6);
            used_stash |= !t.stash().is_empty();
            let strict = s.clone().with_sigma(0);
            if !t.stash().is_empty() {
                assert!(matches!(
                    build_cuckoo_table(&strict, &[0, 1, 2, 3, 4, 5]),
                    Err(Error::InsertionFailure { .. })
                ));
            }
        }
        assert!(used_stash);
    }

    #[test]
    fn builds_are_deterministic() {
        let s = spec(300, 30);
        let sel: Vec<u64> = (0..30).map(|i| i * 7).collect();
        assert_eq!(build_cuckoo_table(&s, &sel).unwrap(), build_cuckoo_table(&s, &sel).unwrap());
        let d: Vec<u64> = (0..300).collect();
        assert_eq!(build_simple_table(&s, &d).unwrap(), build_simple_table(&s, &d).unwrap());
    }

    #[test]
    fn recommendations_follow_tables() {
        let r = recommend_params(1 << 20, 1 << 20).unwrap();
        assert_eq!(r.epsilon, 1.27);
        let r = recommend_params(1 << 15, 3277).unwrap();
        assert_eq!(r.epsilon, 1.25);
        assert!((r.theta_estimate - 54.0).abs() < 0.1);
        assert_eq!(r.depth, 6);
        let r = recommend_params(1 << 25, (1 << 25) / 100).unwrap();
        assert_eq!(r.epsilon, 1.28);
        assert!((r.theta_estimate - 366.0).abs() < 1.0);
        assert_eq!(r.depth, 9);
        let r = recommend_params(1_048_576, 104_857).unwrap();
        assert_eq!(r.epsilon, 1.27);
        assert!(r.depth <= 9);
        assert!(recommend_params(10, 11).is_err());
    }

    #[test]
    fn recommendation_depth_capped() {
        for lg in [10u32, 13, 18, 25] {
            for pct in [1u64, 2, 5, 20, 60, 100] {
                let m = 1u64 << lg;
                let r = recommend_params(m, m * pct / 100).unwrap();
                assert!(r.depth <= DEPTH_CAP, "m=2^{lg} c={pct}%");
            }
        }
        assert!(recommend_params(1 << 20, 10).unwrap().depth > DEPTH_CAP);
    }
}
