use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] =
    &["--domain", "ferry:cars=2,locations=2", "--train-traces", "12", "--test-traces", "3", "--epochs", "3", "--selector-epochs", "2"];

fn psgplan(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psgplan")).arg("--out").arg(out).args(args).env_remove("PSGPLAN_OUT").output().unwrap()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = psgplan(out, args);
    assert!(o.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn ok_owned(out: &Path, args: Vec<String>) -> String {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(out, &refs)
}

#[test]
fn stage_chain_then_trivial_plan() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path();
    let p = |name: &str| o.join(name).display().to_string();
    ok_owned(o, with(&["gen"], SMALL));
    for f in ["domain.txt", "train.traces", "test.traces", "train.instances", "test.instances", "manifest-gen.toml"] {
        assert!(o.join(f).exists(), "{f} missing");
    }
    ok_owned(o, with(&["mask", "--domain-file", &p("domain.txt"), "--traces", &p("train.traces"), "--pct", "0,40"], SMALL));
    assert!(o.join("train-0.traces").exists() && o.join("train-40.traces").exists());

    let train = p("train-40.traces");
    let common = with(SMALL, &["--pct", "40", "--domain-file", &p("domain.txt"), "--traces", &train]);
    ok_owned(o, with(&["train"], &common.iter().map(String::as_str).collect::<Vec<_>>()));
    let loss = std::fs::read_to_string(o.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 4);
    let common_model = [common.clone(), vec!["--model".into(), p("model.ckpt")]].concat();
    ok_owned(o, [vec!["extract".to_string()], common_model].concat());
    assert!(o.join("preconditions.txt").exists());
    ok_owned(o, [vec!["train-selector".to_string()], common, vec!["--model".into(), p("learned.ckpt")]].concat());

    std::fs::write(o.join("trivial.instance"), "instance\ninit at-ferry(l1) empty-ferry at(c1,l1) at(c2,l2)\ngoal at(c1,l1)\n").unwrap();
    let stdout = ok(
        o,
        &[
            "plan",
            "--domain-file",
            &p("domain.txt"),
            "--model",
            &p("learned.ckpt"),
            "--selector",
            &p("selector.ckpt"),
            "--instance",
            &p("trivial.instance"),
        ],
    );
    assert_eq!(stdout.trim(), "; instance 0: plan");
    let results = std::fs::read_to_string(o.join("plan-results.csv")).unwrap();
    assert_eq!(results.lines().nth(1), Some("0,plan,0,true,0,0,0"));

    let eval = ok_owned(
        o,
        with(
            &["eval", "--domain-file", &p("domain.txt"), "--model", &p("learned.ckpt"), "--reference", &p("test.traces")],
            &["--selector", &p("selector.ckpt"), "--instances", &p("test.instances")],
        ),
    );
    assert!(eval.contains("precision,") && eval.contains("instances_solved,"));

    let manifest = std::fs::read_to_string(o.join("manifest-train.toml")).unwrap();
    assert!(manifest.contains("command = \"train\"") && manifest.contains("model.ckpt"));
}

#[test]
fn sweep_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "domain = \"ferry:cars=2,locations=2\"\ntrain_traces = 10\ntest_traces = 3\npercentages = [100, 0]\n\
         [training]\nepochs = 2\n[selector]\nepochs = 2\n",
    )
    .unwrap();
    let o = dir.path().join("out");
    let stdout = ok(&o, &["sweep", "--config", cfg.to_str().unwrap(), "--threads", "2"]);
    assert!(stdout.contains("100"));
    let csv = std::fs::read_to_string(o.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    for f in ["report.md", "learned-0.ckpt", "selector-100.ckpt", "preconditions-100.txt", "manifest-sweep.toml"] {
        assert!(o.join(f).exists(), "{f} missing");
    }
    assert!(std::fs::read_to_string(o.join("manifest-sweep.toml")).unwrap().contains("threads = 2"));
}

#[test]
fn bad_arguments_fail_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = psgplan(dir.path(), &["gen", "--no-such-flag"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Usage"), "{err}");

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "train_tracez = 3\n").unwrap();
    let o = psgplan(dir.path(), &["gen", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("train_tracez"));

    let o = psgplan(dir.path(), &["train", "--domain-file", "x", "--traces", "y"]);
    assert!(!o.status.success(), "train needs a single percentage");
}
