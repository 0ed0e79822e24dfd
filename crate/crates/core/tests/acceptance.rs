//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use fsl_core::analytics::{bits_to_mib, rate_basic, rate_mega, rate_udpf, reconcile, CostModel};
use fsl_core::batch_code::{build_cuckoo_table, build_simple_table, recommend_params, TableSpec};
use fsl_core::dpf::{dpf_gen, DpfParams};
use fsl_core::harness::{run_psr, run_round, Scenario, ScenarioMode, SelectionSizes};
use fsl_core::udpf::{udpf_gen, udpf_next};
use fsl_core::{Error, GroupParams, GroupVector, Seed};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_vec(g: GroupParams, rng: &mut ChaCha20Rng) -> GroupVector {
    GroupVector::from_elems(g, (0..g.tau()).map(|_| rng.gen::<u128>() & g.mask()).collect()).unwrap()
}

fn random_group(rng: &mut ChaCha20Rng) -> GroupParams {
    let l = [32, 64, 128][rng.gen_range(0..3)];
    GroupParams::new(l, rng.gen_range(1..=3)).unwrap()
}

fn dpf_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut checked = 0u64;
    for depth in 1..=8u32 {
        for _ in 0..50 {
            let g = random_group(&mut rng);
            let params = DpfParams::new(depth, g).unwrap();
            let alpha = rng.gen_range(0..params.domain_size());
            let beta = random_vec(g, &mut rng);
            let (k0, k1) = dpf_gen(params, alpha, &beta, &mut rng).unwrap();
            let f0 = k0.eval_full().unwrap();
            let f1 = k1.eval_full().unwrap();
            for x in 0..params.domain_size() {
                let p0 = k0.eval(x).unwrap();
                let p1 = k1.eval(x).unwrap();
                if p0 != f0[x as usize] || p1 != f1[x as usize] {
                    return outcome(false, format!("full-domain differs from pointwise at depth {depth}, x={x}"));
                }
                let sum = p0.add(&p1).unwrap();
                let want = if x == alpha { beta.clone() } else { GroupVector::zero(g) };
                if sum != want {
                    return outcome(false, format!("wrong reconstruction at depth {depth}, alpha={alpha}, x={x}"));
                }
                checked += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(t < Duration::from_secs(30), format!("{checked} points over 400 keys in {:.2}s", t.as_secs_f64()))
}

fn key_size() -> Outcome {
    let params = DpfParams::new(9, GroupParams::new(128, 1).unwrap()).unwrap();
    let expected = 9 * (128 + 2) + 128 + 128;
    let mut rng = ChaCha20Rng::seed_from_u64(102);
    let beta = random_vec(params.group(), &mut rng);
    let (k0, _) = dpf_gen(params, 300, &beta, &mut rng).unwrap();
    let bytes = k0.to_bytes();
    let body = bytes.len() - fsl_core::dpf::HEADER_BYTES;
    // The byte-aligned body holds the key bits plus the zero padding of the control-bit field.
    let pass = params.key_bits() == 1426 && expected == 1426 && body == (1426usize).div_ceil(8);
    outcome(
        pass,
        format!("key_bits={} formula={expected} serialized body={body} bytes ({} bits incl. padding)", params.key_bits(), body * 8),
    )
}

fn udpf_chains() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(103);
    let mut chains = 0;
    for depth in 1..=8u32 {
        for _ in 0..4 {
            let g = random_group(&mut rng);
            let params = DpfParams::new(depth, g).unwrap();
            let alpha = rng.gen_range(0..params.domain_size());
            let beta = random_vec(g, &mut rng);
            let (mut k0, mut k1, mut trap) = udpf_gen(params, alpha, &beta, &mut rng).unwrap();
            let mut current = beta;
            for epoch in 0..10u64 {
                if epoch > 0 {
                    current = random_vec(g, &mut rng);
                    let hint = udpf_next(&mut trap, &current, epoch).unwrap();
                    if hint.payload_bits() != g.element_bits() {
                        return outcome(false, format!("hint payload {} bits, expected {}", hint.payload_bits(), g.element_bits()));
                    }
                    let bytes = hint.to_bytes();
                    let parsed = fsl_core::Hint::from_bytes(&bytes, g).unwrap();
                    k0 = k0.update(&parsed, 0).unwrap();
                    k1 = k1.update(&parsed, 0).unwrap();
                }
                let f0 = k0.eval_full().unwrap();
                let f1 = k1.eval_full().unwrap();
                for x in 0..params.domain_size() as usize {
                    let sum = f0[x].add(&f1[x]).unwrap();
                    let want = if x as u64 == alpha { current.clone() } else { GroupVector::zero(g) };
                    if sum != want {
                        return outcome(false, format!("depth {depth} epoch {epoch}: wrong value at {x}"));
                    }
                }
            }
            chains += 1;
        }
    }
    outcome(true, format!("{chains} chains x 10 epochs, exhaustive; hint payload = tau*l bits per key"))
}

/// The randomized grid shared by the aggregation and retrieval criteria.
fn grid() -> Vec<Scenario> {
    let mut rng = ChaCha20Rng::seed_from_u64(104);
    let modes = [ScenarioMode::FullDomain, ScenarioMode::UnionRestricted, ScenarioMode::UdpfFixed];
    (0..100)
        .map(|i| {
            let tau = if i % 2 == 0 { 1 } else { 3 };
            let m = rng.gen_range(16..=256u64);
            let space = m.div_ceil(tau as u64) as usize;
            let n = rng.gen_range(1..=5);
            let ks: Vec<usize> = (0..n).map(|_| rng.gen_range(0..=space.min(24))).collect();
            let mut s = Scenario::new(m, 0, n);
            s.k = SelectionSizes::PerClient(ks);
            s.tau = tau;
            s.l = [32, 64, 128][i % 3];
            s.mode = modes[(i / 2) % 3];
            s.rounds = if s.mode == ScenarioMode::UdpfFixed { 3 } else { 1 };
            s.rng_seed = 1000 + i as u64;
            if (i / 6) % 2 == 1 {
                // Two hash functions and barely enough bins push elements into the stash.
                s.eta = 2;
                s.epsilon = Some(1.2);
                s.sigma = 6;
            }
            s
        })
        .collect()
}

fn ssa_lossless() -> Outcome {
    let start = Instant::now();
    let mut runs = 0;
    let mut with_stash = 0;
    for s in grid() {
        match run_round(&s) {
            Ok(t) => {
                if !t.all_match() {
                    return outcome(false, format!("oracle mismatch for scenario:\n{}", s.to_text()));
                }
                if t.rounds.iter().any(|r| r.stash_entries > 0) {
                    with_stash += 1;
                }
                runs += 1;
            }
            Err(e) => return outcome(false, format!("run failed ({e}) for scenario:\n{}", s.to_text())),
        }
    }
    let t = start.elapsed();
    outcome(
        t < Duration::from_secs(120),
        format!("{runs} scenarios exact ({with_stash} with stash-resident selections) in {:.2}s", t.as_secs_f64()),
    )
}

fn psr_exact() -> Outcome {
    let mut runs = 0;
    let mut with_stash = 0;
    for mut s in grid() {
        if s.mode == ScenarioMode::UdpfFixed {
            s.mode = ScenarioMode::FullDomain;
            s.rounds = 1;
        }
        match run_psr(&s) {
            Ok(t) if t.all_match() => {
                runs += 1;
                with_stash += t.rounds.iter().any(|r| r.stash_entries > 0) as usize;
            }
            Ok(_) => return outcome(false, format!("retrieval mismatch for scenario:\n{}", s.to_text())),
            Err(e) => return outcome(false, format!("run failed ({e}) for scenario:\n{}", s.to_text())),
        }
    }
    outcome(true, format!("{runs} scenarios ({with_stash} with stash-resident selections), every retrieved weight equals direct lookup"))
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    ((got - want) / want).abs() <= tol
}

fn accounting() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    // Measured uploads.
    for (m, k) in [(1u64 << 15, 328usize), (1 << 12, 410), (1 << 10, 102)] {
        let mut s = Scenario::new(m, k, 2);
        s.epsilon = Some(1.25);
        let t = run_round(&s).unwrap();
        let r = &t.rounds[0];
        let model = CostModel {
            epsilon: 1.25,
            depth: r.setup.depth,
            m: r.setup.index_space,
            k: k as f64,
            ..CostModel::reference(m, 0.0)
        };
        let recs = reconcile(&model, r).unwrap();
        pass &= recs.iter().all(|rec| rec.passes());
        let worst = recs.iter().filter_map(|rec| rec.deviation).fold(0.0f64, |a, d| if d.abs() > a.abs() { d } else { a });
        notes.push(format!("measured m=2^{} k={k} depth={}: {:+.3}%", m.trailing_zeros(), r.setup.depth, worst * 100.0));
    }

    // Table cells by formula, in MiB.
    let cell = |m: u64, c: f64| bits_to_mib(rate_basic(&CostModel::reference(m, c)).unwrap().upload_bits);
    let base = |m: u64| bits_to_mib(m as f64 * 128.0);
    let checks = [
        ("2^15,1%", cell(1 << 15, 0.01), 0.063),
        ("2^20,10%", cell(1 << 20, 0.10), 20.28),
        ("baseline 2^10", base(1 << 10), 0.015),
        ("baseline 2^15", base(1 << 15), 0.5),
        ("baseline 2^20", base(1 << 20), 16.0),
    ];
    for (name, got, want) in checks {
        let ok = within(got, want, 0.02);
        pass &= ok;
        notes.push(format!("{name}: {got:.4} vs {want} ({:+.2}%){}", (got - want) / want * 100.0, if ok { "" } else { " OUT" }));
    }
    outcome(pass, notes.join("; "))
}

fn rate_constants() -> Outcome {
    let model = CostModel::reference(1 << 20, 0.1);
    let basic = rate_basic(&model).unwrap();
    let mega = rate_mega(&model.with_tau(18)).unwrap();
    let udpf = rate_udpf(&model, 1).unwrap();
    let psu = rate_basic(&model.with_depth(5)).unwrap();
    let pass = (basic.coefficient - 12.68).abs() <= 0.01
        && (0.078..=0.079).contains(&basic.threshold_c)
        && (0.530..=0.532).contains(&mega.threshold_c)
        && udpf.nominal.asymptotic_rate == model.c();
    outcome(
        pass,
        format!(
            "coefficient {:.4}, threshold {:.2}%, tau=18 threshold {:.2}%, later-round nominal rate {} = c; depth 5 threshold {:.2}%",
            basic.coefficient,
            basic.threshold_c * 100.0,
            mega.threshold_c * 100.0,
            udpf.nominal.asymptotic_rate,
            psu.threshold_c * 100.0
        ),
    )
}

fn cuckoo_params() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(108);
    let k = 1usize << 10;
    let m = 1u64 << 15;
    let eps = recommend_params(m, k as u64).unwrap().epsilon;
    let mut failures = 0;
    for _ in 0..1000 {
        let spec = TableSpec::new(m, k, eps, Seed::random(&mut rng)).unwrap();
        let sel: Vec<u64> = sample(&mut rng, m as usize, k).into_iter().map(|x| x as u64).collect();
        match build_cuckoo_table(&spec, &sel) {
            Ok(t) if t.stash().is_empty() => {}
            Ok(_) | Err(Error::InsertionFailure { .. }) => failures += 1,
            Err(e) => return outcome(false, format!("unexpected error {e}")),
        }
    }
    let mut pass = failures == 0;
    let mut notes = vec![format!("1000 insertions of k=2^10 (epsilon {eps}): {failures} failures")];

    let m = 1u64 << 10;
    let domain: Vec<u64> = (0..m).collect();
    for (c, table) in [(0.10, 45.0), (0.30, 27.0), (0.50, 21.0), (0.70, 18.0)] {
        let k = (c * m as f64).round() as usize;
        let eps = recommend_params(m, k as u64).unwrap().epsilon;
        // Largest bin over 10 hash seeds.
        let theta = (0..10)
            .map(|_| {
                let spec = TableSpec::new(m, k, eps, Seed::random(&mut rng)).unwrap();
                build_simple_table(&spec, &domain).unwrap().theta()
            })
            .max()
            .unwrap();
        let ok = within(theta as f64, table, 0.25);
        pass &= ok;
        notes.push(format!("theta(2^10,{:.0}%)={theta} vs {table} ({:+.1}%){}", c * 100.0, (theta as f64 - table) / table * 100.0, if ok { "" } else { " OUT" }));
    }
    outcome(pass, notes.join("; "))
}

fn performance() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut s = Scenario::new(1 << 15, 3277, 1);
    s.epsilon = Some(1.25);
    let start = Instant::now();
    let t = pool.install(|| run_round(&s)).unwrap();
    let round = start.elapsed();

    let mut rng = ChaCha20Rng::seed_from_u64(109);
    let params = DpfParams::new(16, GroupParams::new(128, 1).unwrap()).unwrap();
    let beta = random_vec(params.group(), &mut rng);
    let (k0, _) = dpf_gen(params, 12345, &beta, &mut rng).unwrap();
    let start = Instant::now();
    let out = k0.eval_full().unwrap();
    let eval = start.elapsed();
    let pass = t.all_match() && round < Duration::from_secs(60) && eval < Duration::from_secs(1) && out.len() == 1 << 16;
    outcome(
        pass,
        format!("SSA round m=2^15 c=10% n=1 single-threaded {:.2}s; depth-16 full-domain eval {:.3}s", round.as_secs_f64(), eval.as_secs_f64()),
    )
}

fn determinism() -> Outcome {
    let mut s = Scenario::new(200, 12, 3);
    s.mode = ScenarioMode::UdpfFixed;
    s.rounds = 3;
    s.tau = 3;
    s.sigma = 1;
    s.rng_seed = 77;
    let a = run_round(&s).unwrap().deterministic_text();
    let b = run_round(&s).unwrap().deterministic_text();
    let mut p = s.clone();
    p.mode = ScenarioMode::FullDomain;
    p.rounds = 1;
    let pa = run_psr(&p).unwrap().deterministic_text();
    let pb = run_psr(&p).unwrap().deterministic_text();
    outcome(a == b && pa == pb, format!("aggregation transcript {} bytes, retrieval transcript {} bytes, identical across runs", a.len(), pa.len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 dpf oracle equivalence", dpf_oracle),
        ("2 key size", key_size),
        ("3 udpf epoch chains", udpf_chains),
        ("4 ssa losslessness", ssa_lossless),
        ("5 psr exactness", psr_exact),
        ("6 communication accounting", accounting),
        ("7 rate constants", rate_constants),
        ("8 cuckoo parameters", cuckoo_params),
        ("9 performance sanity", performance),
        ("10 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
