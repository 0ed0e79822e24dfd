//! Closed-form communication costs and rates.
//!
//! All sizes are in bits. `m` and `k` count indexes of the protocol's index space, so with
//! mega-elements of width `tau` they count mega-indexes and the model holds `m * tau` scalars.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::harness::RoundTranscript;
use crate::LAMBDA;

/// Inputs of the cost formulas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostModel {
    pub lambda: u32,
    pub l: u32,
    pub tau: usize,
    pub epsilon: f64,
    /// `ceil(log2 theta)`.
    pub depth: u32,
    pub m: u64,
    /// May be fractional when derived from a compression rate.
    pub k: f64,
    pub sigma: usize,
}

impl CostModel {
    /// `lambda = l = 128`, `tau = 1`, `epsilon = 1.25`, depth 9, no stash.
    pub fn reference(m: u64, c: f64) -> Self {
        Self { lambda: LAMBDA, l: 128, tau: 1, epsilon: 1.25, depth: 9, m, k: c * m as f64, sigma: 0 }
    }

    pub fn with_tau(mut self, tau: usize) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_depth(mut self, depth: u32) -> Self {
        self.depth = depth;
        self
    }

    /// Compression rate `k / m`.
    pub fn c(&self) -> f64 {
        self.k / self.m as f64
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.tau == 0 || self.l == 0 || self.lambda == 0 || self.depth == 0 {
            return Err(Error::param("cost model fields must be positive"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 || self.k.is_nan() || self.k < 0.0 {
            return Err(Error::param("epsilon must be positive and k non-negative"));
        }
        Ok(())
    }

    /// `tau * l`, the width of one (mega-)element.
    fn element_bits(&self) -> f64 {
        self.tau as f64 * self.l as f64
    }

    /// Bits of one key's public part: `depth * (lambda + 2) + tau * l`.
    fn public_part_bits(&self, value_bits: f64) -> f64 {
        self.depth as f64 * (self.lambda as f64 + 2.0) + value_bits
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateReport {
    pub upload_bits: f64,
    /// `m * tau * l + lambda`: secret-sharing the whole update.
    pub trivial_bits: f64,
    /// `upload_bits / trivial_bits`.
    pub rate: f64,
    /// Rate per unit of compression: the rate is about `coefficient * c` for large `m`.
    pub coefficient: f64,
    /// `coefficient * c`.
    pub asymptotic_rate: f64,
    /// Largest compression rate with `rate <= 1`.
    pub threshold_c: f64,
}

impl RateReport {
    fn new(model: &CostModel, upload_bits: f64, coefficient: f64) -> Self {
        let trivial_bits = trivial_bits(model);
        Self {
            upload_bits,
            trivial_bits,
            rate: upload_bits / trivial_bits,
            coefficient,
            asymptotic_rate: coefficient * model.c(),
            threshold_c: 1.0 / coefficient,
        }
    }
}

pub fn trivial_bits(model: &CostModel) -> f64 {
    model.m as f64 * model.element_bits() + model.lambda as f64
}

/// Per-client aggregation upload, `epsilon*k*(depth*(lambda+2) + tau*l) + lambda`.
///
/// The stash adds keys over the whole domain whose cost has no closed form here.
pub fn basic_upload_bits(model: &CostModel) -> Result<f64> {
    model.validate()?;
    if model.sigma > 0 {
        return Err(Error::Unsupported(format!("closed form assumes no stash, sigma={}", model.sigma)));
    }
    Ok(model.epsilon * model.k * model.public_part_bits(model.element_bits()) + model.lambda as f64)
}

/// Retrieval query cost: as [`basic_upload_bits`] with scalar (`l`-bit) final correction words.
pub fn psr_upload_bits(model: &CostModel) -> Result<f64> {
    basic_upload_bits(&model.with_tau(1))
}

/// `epsilon * (depth*(lambda+2) + tau*l) / (tau*l)`.
pub fn rate_coefficient(model: &CostModel) -> f64 {
    model.epsilon * model.public_part_bits(model.element_bits()) / model.element_bits()
}

pub fn rate_basic(model: &CostModel) -> Result<RateReport> {
    let upload = basic_upload_bits(model)?;
    Ok(RateReport::new(model, upload, rate_coefficient(model)))
}

/// Mega-element rate `c * epsilon * ((lambda+2)*depth + tau*l) / (tau*l)`, reported as
/// `asymptotic_rate`; the exact ratio is in `rate`.
pub fn rate_mega(model: &CostModel) -> Result<RateReport> {
    rate_basic(model)
}

/// Rates of the updatable variant in round `round`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UdpfRates {
    /// Counting `k * tau * l` hint bits, one word per selected index.
    pub nominal: RateReport,
    /// Counting the words actually sent: one per bin and per stash slot, `ceil(epsilon*k) + sigma`.
    pub implemented: RateReport,
}

pub fn rate_udpf(model: &CostModel, round: u64) -> Result<UdpfRates> {
    if round == 0 {
        let r = rate_basic(model)?;
        return Ok(UdpfRates { nominal: r, implemented: r });
    }
    model.validate()?;
    let w = model.element_bits();
    let nominal = RateReport::new(model, model.k * w, 1.0);
    let words = (model.epsilon * model.k - 1e-9).ceil().max(0.0) + model.sigma as f64;
    let implemented = RateReport::new(model, words * w, model.epsilon);
    Ok(UdpfRates { nominal, implemented })
}

/// Measured upload of one client next to the closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconciliation {
    pub client_id: u32,
    pub round: u64,
    /// Client-to-server bytes in the transcript, times eight.
    pub measured_total_bits: u64,
    /// Envelope, key-count and per-key headers.
    pub header_bits: u64,
    /// `measured_total_bits - header_bits`.
    pub measured_bits: u64,
    /// `None` when the closed form does not apply (stash in use).
    pub formula_bits: Option<f64>,
    /// The formula counts one master seed; two are sent, one per server.
    pub formula_two_seed_bits: Option<f64>,
    pub deviation: Option<f64>,
}

impl Reconciliation {
    pub fn passes(&self) -> bool {
        self.deviation.is_some_and(|d| d.abs() < 0.01)
    }
}

/// Compares every full-key upload in `transcript` with the closed form of `model`.
pub fn reconcile(model: &CostModel, transcript: &RoundTranscript) -> Result<Vec<Reconciliation>> {
    let info = &transcript.setup;
    let expected_bins = (model.epsilon * model.k - 1e-9).ceil().max(1.0) as usize;
    if info.depth != model.depth
        || info.l != model.l
        || info.sigma != model.sigma
        || info.bins != expected_bins
        || (info.tau != model.tau && !transcript.psr)
    {
        return Err(Error::param(format!(
            "model (bins {expected_bins}, depth {}, l {}, tau {}, sigma {}) does not describe the transcript ({info:?})",
            model.depth, model.l, model.tau, model.sigma
        )));
    }
    let formula = if transcript.psr { psr_upload_bits(model) } else { basic_upload_bits(model) };
    let formula = formula.ok();
    Ok(transcript
        .uploads
        .iter()
        .filter(|u| u.full_keys)
        .map(|u| {
            let measured_total_bits = u.total_bytes * 8;
            let header_bits = u.header_bytes * 8;
            let measured_bits = measured_total_bits - header_bits;
            let deviation = formula.map(|f| (measured_bits as f64 - f) / f);
            Reconciliation {
                client_id: u.client_id,
                round: u.round,
                measured_total_bits,
                header_bits,
                measured_bits,
                formula_bits: formula,
                formula_two_seed_bits: formula.map(|f| f + model.lambda as f64),
                deviation,
            }
        })
        .collect())
}

pub const MIB_BITS: f64 = 8.0 * 1024.0 * 1024.0;

pub fn bits_to_mib(bits: f64) -> f64 {
    bits / MIB_BITS
}

pub const RATE_CSV_HEADER: &str = "m,k,c,depth,tau,upload_bits,trivial_bits,rate,threshold_c";

pub fn rate_csv_row(model: &CostModel, report: &RateReport) -> String {
    format!(
        "{},{},{:.6},{},{},{:.1},{:.1},{:.6},{:.6}",
        model.m,
        model.k,
        model.c(),
        model.depth,
        model.tau,
        report.upload_bits,
        report.trivial_bits,
        report.rate,
        report.threshold_c
    )
}

pub fn rate_csv(rows: &[(CostModel, RateReport)]) -> String {
    let mut out = String::from(RATE_CSV_HEADER);
    out.push('\n');
    for (m, r) in rows {
        out.push_str(&rate_csv_row(m, r));
        out.push('\n');
    }
    out
}

/// Human-readable report; thresholds to 0.1 percentage point.
pub fn rate_text(model: &CostModel, report: &RateReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "m = {}, k = {}, c = {:.2}%, depth = {}, tau = {}", model.m, model.k, model.c() * 100.0, model.depth, model.tau);
    let _ = writeln!(s, "upload      = {:.0} bits ({:.4} MiB)", report.upload_bits, bits_to_mib(report.upload_bits));
    let _ = writeln!(s, "trivial     = {:.0} bits ({:.4} MiB)", report.trivial_bits, bits_to_mib(report.trivial_bits));
    let _ = writeln!(s, "rate        = {:.4}", report.rate);
    let _ = writeln!(s, "coefficient = {:.4}", report.coefficient);
    let _ = writeln!(s, "threshold c = {:.1}%", report.threshold_c * 100.0);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_coefficient() {
        let m = CostModel::reference(1 << 20, 0.1);
        let r = rate_basic(&m).unwrap();
        assert!((r.coefficient - 1.25 * (130.0 * 9.0 + 128.0) / 128.0).abs() < 1e-12);
        assert!((r.coefficient - 12.68).abs() < 0.01);
        assert!(r.threshold_c > 0.078 && r.threshold_c < 0.079);
        // epsilon*(lambda+2)*depth + epsilon*l
        assert!((1.25f64 * 130.0 * 9.0 + 1.25 * 128.0 - 1622.5).abs() < 1e-9);
    }

    #[test]
    fn degenerate_and_stash() {
        let m = CostModel { k: 0.0, ..CostModel::reference(1024, 0.0) };
        assert_eq!(basic_upload_bits(&m).unwrap(), 128.0);
        let s = CostModel { sigma: 2, ..m };
        assert!(matches!(basic_upload_bits(&s), Err(Error::Unsupported(_))));
    }

    #[test]
    fn thresholds_are_monotone() {
        let base = CostModel::reference(1 << 20, 0.05);
        let mut last = f64::INFINITY;
        for d in 1..=12 {
            let t = rate_basic(&base.with_depth(d)).unwrap().threshold_c;
            assert!(t < last);
            last = t;
        }
        let mut last = 0.0;
        for tau in 1..=128 {
            let t = rate_mega(&base.with_tau(tau)).unwrap().threshold_c;
            assert!(t > last);
            last = t;
        }
        assert!(rate_mega(&base.with_tau(100)).unwrap().threshold_c > 0.7);
        let t18 = rate_mega(&base.with_tau(18)).unwrap().threshold_c;
        assert!((t18 - 0.5306).abs() < 1e-3);
    }

    #[test]
    fn udpf_rounds() {
        let m = CostModel::reference(1 << 20, 0.1);
        let r0 = rate_udpf(&m, 0).unwrap();
        assert_eq!(r0.nominal, rate_basic(&m).unwrap());
        let r1 = rate_udpf(&m, 1).unwrap();
        assert_eq!(r1.nominal.asymptotic_rate, m.c());
        assert!((r1.implemented.asymptotic_rate - 1.25 * m.c()).abs() < 1e-12);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let m = CostModel::reference(1 << 15, 0.01);
        let csv = rate_csv(&[(m, rate_basic(&m).unwrap())]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], RATE_CSV_HEADER);
        assert_eq!(lines[1].split(',').count(), 9);
    }
}
