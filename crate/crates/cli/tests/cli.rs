use std::path::PathBuf;
use std::process::{Command, Output};

fn fsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsl")).args(args).env_remove("FSL_OUT_DIR").output().expect("runs")
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn dpf_selftest_passes() {
    let o = fsl(&["dpf", "selftest", "--depth", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn dpf_gen_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = fsl(&["dpf", "gen", "--depth", "9", "--alpha", "300", "--beta-hex", "2a", "--seed", "3", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("1426 key bits"));
    let k0 = dir.path().join("key0.dpf");
    let k1 = dir.path().join("key1.dpf");
    // 8-byte header plus ceil(1426 / 8) bytes.
    assert_eq!(std::fs::metadata(&k0).unwrap().len(), 8 + 179);

    let eval = |key: &PathBuf, party: &str, x: &str| {
        let o = fsl(&["dpf", "eval", "--key", key.to_str().unwrap(), "--party", party, "--x", x]);
        assert_eq!(o.status.code(), Some(0));
        u128::from_str_radix(stdout(&o).trim(), 16).unwrap()
    };
    assert_eq!(eval(&k0, "0", "300").wrapping_add(eval(&k1, "1", "300")), 0x2a);
    assert_eq!(eval(&k0, "0", "17").wrapping_add(eval(&k1, "1", "17")), 0);

    let o = fsl(&["dpf", "eval", "--key", k0.to_str().unwrap(), "--party", "0", "--x", "512"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_bundled_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fsl"))
        .args(["run", &scenario("small_ssa.scn")])
        .env("FSL_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("oracle_match = true"));
    assert!(dir.path().join("small_ssa.ssa.messages.csv").exists());
    assert!(dir.path().join("small_ssa.ssa.summary.txt").exists());

    let out = dir.path().to_str().unwrap();
    let o = fsl(&["run", &scenario("udpf_3round.scn"), "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("udpf_3round.ssa.messages.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    for r in rows.iter().filter(|r| r[1].starts_with('C')) {
        if r[0] == "0" {
            assert_eq!(r[3], "SSA_U");
        } else {
            // Later rounds: one hint per client, sent to S0 only.
            assert_eq!((r[2], r[3], r[4]), ("S0", "SSA_HINT", "1321"));
        }
    }
    assert!(rows.iter().filter(|r| r[2].starts_with('C')).count() == 0);

    let o = fsl(&["run", &scenario("small_ssa.scn"), "--psr", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn run_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.scn");
    std::fs::write(&empty, "").unwrap();
    let o = fsl(&["run", empty.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    // Two hash functions, bins for exactly k items and no stash: insertion fails.
    let tight = dir.path().join("tight.scn");
    std::fs::write(&tight, "m = 4096\nk = 400\nepsilon = 1.0001\neta = 2\nsigma = 0\n").unwrap();
    let o = fsl(&["run", tight.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn rate_commands() {
    let o = fsl(&["rate", "--check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let o = fsl(&["rate", "--tau", "18"]);
    assert!(stdout(&o).contains("threshold c = 53.1%"));

    let o = fsl(&["rate", "--depth", "5"]);
    let s = stdout(&o);
    assert!(s.contains("threshold c = 13.2%"));
    assert!(s.contains("differs from the published 13.4%"));

    let o = fsl(&["rate", "--format", "csv", "--udpf-round", "1"]);
    let s = stdout(&o);
    assert!(s.starts_with("m,k,c,depth,tau,upload_bits,trivial_bits,rate,threshold_c\n"));
    assert_eq!(s.lines().count(), 4);
}

#[test]
fn params_commands() {
    let o = fsl(&["params", "--m", "1048576", "--k", "104857"]);
    let s = stdout(&o);
    assert!(s.contains("epsilon = 1.27"));
    let depth: u32 = s.lines().find_map(|l| l.strip_prefix("depth = ")).unwrap().parse().unwrap();
    assert!(depth <= 9);

    let o = fsl(&["params", "--m", "100", "--k", "100"]);
    assert!(stdout(&o).contains("warning"));

    assert_eq!(fsl(&["params", "--m", "10", "--k", "100"]).status.code(), Some(2));
    assert_eq!(fsl(&["params"]).status.code(), Some(2));
}

#[test]
fn bench_emits_csv() {
    let o = fsl(&["bench", "--log-m", "10", "--c", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let mut lines = s.lines();
    assert_eq!(lines.next().unwrap(), fsl_header());
    assert!(lines.next().unwrap().ends_with(",true"));
}

fn fsl_header() -> &'static str {
    "m,k,c,tau,sigma,mode,round,client_upload_bytes,gen_ms,eval_ms,agg_ms,oracle_match"
}
