use std::path::Path;
use std::process::{Command, Output};

fn ncf(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ncf"));
    cmd.args(args).env_remove("NCF_SEED");
    if let Some(s) = env_seed {
        cmd.env("NCF_SEED", s);
    }
    cmd.output().expect("spawn ncf")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn csv(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("results.csv")).unwrap()
}

const SMALL: &str = "mc.replicates = 40\nindex.len = 8\nmc.moment_samples = 2000\ndepths.approx = 0..=3\n";

#[test]
fn bound_prints_upsilon() {
    let out = ncf(&["bound", "--kappa", "1", "--rho", "0.5", "--d", "10", "--quantity", "upsilon"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",2.4412"));
}

#[test]
fn missing_config_is_a_config_error() {
    let out = ncf(&["run-all", "--config", "missing.cfg"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("config not found"));
    assert!(out.stdout.is_empty());
}

#[test]
fn verify_approx_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "plan.cfg", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = ncf(
            &["verify-approx", "--config", &cfg, "--seed", "7", "--output-dir", out.to_str().unwrap()],
            None,
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(csv(&a), csv(&b));
    assert!(csv(&a).starts_with("experiment,d,m,epsilon,estimate,stderr,bound,threshold,pass\n"));
}

#[test]
fn seed_sources_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "plan.cfg", SMALL);
    let run = |name: &str, extra: &[&str], env: Option<&str>| {
        let out = dir.path().join(name);
        let mut args = vec!["verify-swap", "--config", &cfg, "--output-dir", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert_eq!(ncf(&args, env).status.code(), Some(0));
        out
    };
    let flag = run("flag", &["--seed", "9"], Some("3"));
    let env = run("env", &[], Some("9"));
    let other = run("other", &[], Some("3"));
    assert_eq!(csv(&flag), csv(&env));
    assert_ne!(csv(&flag), csv(&other));

    // the echoed config reproduces the run on its own
    let resolved = flag.join("resolved_config.cfg");
    let again = dir.path().join("again");
    let o = ncf(
        &["verify-swap", "--config", resolved.to_str().unwrap(), "--output-dir", again.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(csv(&flag), csv(&again));
}

#[test]
fn tiny_replicate_counts_are_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "plan.cfg", "mc.replicates = 2\nindex.len = 4\nmc.moment_samples = 500\n");
    let out = dir.path().join("o");
    let o = ncf(&["run-all", "--config", &cfg, "--output-dir", out.to_str().unwrap()], None);
    assert_ne!(o.status.code(), Some(2));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("WARN"), "{text}");
    assert!(text.contains("SKIP deviation"), "{text}");
}

#[test]
fn plans_do_not_share_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let alone = write(dir.path(), "alone.cfg", &format!("name = a\n{SMALL}mc.experiments = approx\n"));
    let both = write(
        dir.path(),
        "both.cfg",
        &format!(
            "plans = a, b\n{SMALL}mc.experiments = approx\nb.model.type = brnn\nb.model.p = 1\n\
             b.model.matrix = 0.3, 0.2\nb.model.beta = 0.3\n"
        ),
    );
    let (x, y) = (dir.path().join("x"), dir.path().join("y"));
    assert_eq!(ncf(&["run-all", "--config", &alone, "--output-dir", x.to_str().unwrap()], None).status.code(), Some(0));
    assert_eq!(ncf(&["run-all", "--config", &both, "--output-dir", y.to_str().unwrap()], None).status.code(), Some(0));
    let a_rows: Vec<String> = csv(&x).lines().skip(1).map(|l| format!("a/{l}")).collect();
    let mixed = csv(&y);
    let mixed_a: Vec<&str> = mixed.lines().filter(|l| l.starts_with("a/")).collect();
    assert_eq!(a_rows, mixed_a);
    assert!(mixed.lines().any(|l| l.starts_with("b/")));
}
