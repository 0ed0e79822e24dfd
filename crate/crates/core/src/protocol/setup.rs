use crate::batch_code::{build_simple_table, depth_for, SimpleTable, TableSpec};
use crate::dpf::DpfParams;
use crate::error::{Error, Result};
use crate::group::GroupParams;

/// Which part of the index space the tables cover.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DomainMode {
    /// Every index in `[0, m)`.
    FullDomain,
    /// A public union of client selections (sorted, strictly increasing).
    UnionRestricted(Vec<u64>),
}

/// Public parameters every party derives identically before a round.
#[derive(Clone, Debug)]
pub struct SystemSetup {
    spec: TableSpec,
    group: GroupParams,
    simple: SimpleTable,
    n_clients: usize,
    mode: DomainMode,
    /// For each simple bin, the domain positions of its members.
    bin_positions: Vec<Vec<usize>>,
}

impl SystemSetup {
    pub fn new(spec: TableSpec, group: GroupParams, n_clients: usize, mode: DomainMode) -> Result<Self> {
        let domain: Vec<u64> = match &mode {
            DomainMode::FullDomain => (0..spec.m).collect(),
            DomainMode::UnionRestricted(u) => {
                if let Some(&x) = u.iter().find(|&&x| x >= spec.m) {
                    return Err(Error::param(format!("union index {x} outside index space")));
                }
                u.clone()
            }
        };
        let simple = build_simple_table(&spec, &domain)?;
        let bin_positions = simple
            .bins()
            .iter()
            .map(|bin| match &mode {
                DomainMode::FullDomain => bin.iter().map(|&x| x as usize).collect(),
                DomainMode::UnionRestricted(_) => {
                    bin.iter().map(|x| domain.binary_search(x).expect("bin members are in domain")).collect()
                }
            })
            .collect();
        Ok(Self { spec, group, simple, n_clients, mode, bin_positions })
    }

    pub fn spec(&self) -> &TableSpec {
        &self.spec
    }

    pub fn group(&self) -> GroupParams {
        self.group
    }

    pub fn simple(&self) -> &SimpleTable {
        &self.simple
    }

    pub fn n_clients(&self) -> usize {
        self.n_clients
    }

    pub fn mode(&self) -> &DomainMode {
        &self.mode
    }

    pub fn domain(&self) -> &[u64] {
        self.simple.domain()
    }

    pub fn bins(&self) -> usize {
        self.spec.bins()
    }

    pub fn sigma(&self) -> usize {
        self.spec.sigma
    }

    /// `B + sigma`: number of keys per client per server.
    pub fn key_count(&self) -> usize {
        self.bins() + self.sigma()
    }

    pub(crate) fn bin_positions(&self, bin: usize) -> &[usize] {
        &self.bin_positions[bin]
    }

    /// Index of `x` within the domain, if present.
    pub fn domain_position(&self, x: u64) -> Option<usize> {
        match self.mode {
            DomainMode::FullDomain => (x < self.spec.m).then_some(x as usize),
            DomainMode::UnionRestricted(_) => self.domain().binary_search(&x).ok(),
        }
    }

    /// DPF parameters for bin keys over `group`.
    pub fn bin_params(&self, group: GroupParams) -> DpfParams {
        DpfParams::new(self.simple.depth(), group).expect("simple depth is in range")
    }

    /// DPF parameters for stash keys: the whole domain.
    pub fn stash_params(&self, group: GroupParams) -> DpfParams {
        DpfParams::new(depth_for(self.domain().len()), group).expect("domain depth is in range")
    }

    /// Canonical text of the whole setup (table spec plus group and mode fields).
    pub fn canonical_text(&self) -> String {
        let mut s = self.spec.canonical_text();
        s.push_str(&format!("group_l = {}\ngroup_tau = {}\n", self.group.l(), self.group.tau()));
        match &self.mode {
            DomainMode::FullDomain => s.push_str("mode = full_domain\n"),
            DomainMode::UnionRestricted(u) => {
                let list: Vec<String> = u.iter().map(u64::to_string).collect();
                s.push_str(&format!("mode = union_restricted\nunion = {}\n", list.join(",")));
            }
        }
        s
    }
}
