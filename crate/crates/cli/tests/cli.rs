use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shotgrad"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("shotgrad-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn theory_csv_is_byte_identical_across_runs() {
    let dir = scratch("theory");
    let (a, b) = (dir.join("a.csv"), dir.join("b.csv"));
    for p in [&a, &b] {
        let o = run(&["theory", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ta, tb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    assert!(text.starts_with("method,m,eps_total"));
    assert_eq!(text.lines().count(), 1 + 3 * 25);
}

#[test]
fn grad_bench_is_reproducible_and_seeded() {
    let dir = scratch("bench");
    let cfg = dir.join("cfg.json");
    fs::write(
        &cfg,
        r#"{"n":6,"layers":2,"instances":2,"theta_draws":2,"budgets":[120],"methods":["BLGE","PSR"],"seed":3}"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let out = |name: &str, extra: &[&str]| {
        let p = dir.join(name);
        let mut args = vec!["grad-bench", "--config", c, "--out", p.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("relative_slope_mean"));
        fs::read(p).unwrap()
    };
    let a = out("a.csv", &[]);
    let b = out("b.csv", &["--threads", "1"]);
    let c2 = out("c.csv", &["--seed", "4"]);
    assert_eq!(a, b);
    assert_ne!(a, c2);
}

#[test]
fn alloc_reports_plan_and_prediction() {
    let dir = scratch("alloc");
    let cfg = dir.join("alloc.json");
    fs::write(
        &cfg,
        r#"{"prior":{"mu":[1,2,3],"a2":[0.1,0.01,0.001],"sigma2":1.0},"m":1000,"method":"BLGE"}"#,
    )
    .unwrap();
    let o = run(&["alloc", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rounds: u64 = v["plan"]["rounds"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_u64().unwrap())
        .sum();
    assert!(2 * rounds <= 1000);
    assert!(v["predicted"]["total"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes() {
    let dir = scratch("codes");
    // alloc needs a configuration
    assert_eq!(code(&run(&["alloc"])), 2);

    let bad = dir.join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&run(&["alloc", "--config", bad.to_str().unwrap()])), 2);

    let unknown = dir.join("unknown.json");
    fs::write(&unknown, r#"{"n":6,"bogus":1}"#).unwrap();
    assert_eq!(code(&run(&["grad-bench", "--config", unknown.to_str().unwrap()])), 2);

    let invalid = dir.join("invalid.json");
    fs::write(
        &invalid,
        r#"{"prior":{"mu":[2,1],"a2":[0.1,0.1],"sigma2":1.0},"m":100,"method":"ULGE"}"#,
    )
    .unwrap();
    assert_eq!(code(&run(&["alloc", "--config", invalid.to_str().unwrap()])), 2);

    let small = dir.join("small.json");
    fs::write(
        &small,
        r#"{"prior":{"mu":[1,2,3,4],"a2":[0.1,0.1,0.1,0.1],"sigma2":1.0},"m":5,"method":"ULGE"}"#,
    )
    .unwrap();
    let o = run(&["alloc", "--config", small.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let missing = dir.join("missing.json");
    assert_eq!(code(&run(&["theory", "--config", missing.to_str().unwrap()])), 1);
}
