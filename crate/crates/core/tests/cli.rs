use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sleeping_bandits::algorithms::LearnerOptions;
use sleeping_bandits::environments::{read_availability_csv, read_losses_csv};
use sleeping_bandits::format::sig6;
use sleeping_bandits::{run_episode, seeding, Episode, Variant};

const SMALL: &str = r#"
id = "tiny"
arms = 3
horizon = 3
runs = 1
master_seed = 4

[[algorithms]]
variant = "exp3-mc"

[[algorithms]]
variant = "ftl"

[availability]
kind = "independent"
probabilities = [0.5, 0.6, 0.7]

[losses]
kind = "switching"
tau = 2
mu_best = 0.2
mu_other = 0.8
"#;

fn sleepbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sleepbench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_writes_one_row_per_algorithm_run_and_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", SMALL);
    let out = dir.path().join("out");
    let res = sleepbench(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));

    let csv = fs::read_to_string(out.join("tiny.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "experiment,algorithm,run,t,cumulative_regret,learner_loss,comparator_loss");
    assert_eq!(lines.len() - 1, 6);
    assert!(lines[1].starts_with("tiny,exp3-mc,0,1,"));
    assert!(lines[6].starts_with("tiny,ftl,0,3,"));

    let meta = fs::read_to_string(out.join("tiny.meta")).unwrap();
    for key in ["config_hash=", "library_version=", "empty_set_redraws=", "mc_max_samples.exp3-mc=unlimited"] {
        assert!(meta.contains(key), "missing {key}");
    }
}

#[test]
fn rerun_is_byte_identical_and_seed_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", &SMALL.replace("horizon = 3", "horizon = 200").replace("runs = 1", "runs = 3"));
    let read = |sub: &str, extra: &[&str]| {
        let out = dir.path().join(sub);
        let mut args = vec!["run", "--config", cfg.as_str(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert!(sleepbench(&args).status.success());
        fs::read(out.join("tiny.csv")).unwrap()
    };
    let a = read("a", &[]);
    let b = read("b", &["--parallel", "3"]);
    let c = read("c", &["--seed", "5"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn availability_sweep_has_four_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", SMALL);
    let out = dir.path().join("sweep");
    let res = sleepbench(&[
        "sweep",
        "--config",
        &cfg,
        "--axis",
        "availability",
        "--values",
        "0.3,0.5,0.7,0.9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let csv = fs::read_to_string(out.join("tiny_sweep_availability.csv")).unwrap();
    let mut blocks: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    blocks.dedup();
    assert_eq!(
        blocks,
        ["tiny_availability0.3", "tiny_availability0.5", "tiny_availability0.7", "tiny_availability0.9"]
    );
    // two algorithms, one run each
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
}

#[test]
fn arm_sweep_records_the_enumeration_cap_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("exp3-mc", "exp3-exact")
        .replace("kind = \"independent\"\nprobabilities = [0.5, 0.6, 0.7]", "kind = \"independent\"\nvalue = 0.6");
    let cfg = write_config(dir.path(), "tiny.toml", &text);
    let out = dir.path().join("k");
    let res = sleepbench(&["sweep", "--config", &cfg, "--axis", "K", "--values", "4,8", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));
    let csv = fs::read_to_string(out.join("tiny_sweep_K.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.ends_with(",ok")).count(), 4);

    let res = sleepbench(&["sweep", "--config", &cfg, "--axis", "K", "--values", "4,25,8", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));
    let csv = fs::read_to_string(out.join("tiny_sweep_K.csv")).unwrap();
    let k25: Vec<&str> = csv.lines().filter(|l| l.starts_with("tiny_K25,")).collect();
    assert_eq!(k25.len(), 1);
    assert!(k25[0].contains("error: enumeration_cap"));
    assert_eq!(csv.lines().filter(|l| l.ends_with(",ok")).count(), 4);
    assert!(stderr(&res).contains("enumeration_cap"));
}

#[test]
fn audit_with_loose_delta_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "audit.toml", "lemma = \"L1\"\ndelta = 0.999\ntrials = 50\nt = 100\n");
    let res = sleepbench(&["audit", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));
    let report = fs::read_to_string(dir.path().join("audit_L1.txt")).unwrap();
    assert!(report.contains("result=pass"));
    assert!(report.contains("bound="));
    assert!(report.contains("violation_fraction="));
}

#[test]
fn audit_with_zero_trials_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "audit.toml", "trials = 0\n");
    let res = sleepbench(&["audit", "--lemma", "L9", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(!res.status.success());
    let err = stderr(&res);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: config: "), "{err}");
    assert!(err.contains("trials"));
}

#[test]
fn invalid_config_reports_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &SMALL.replace("runs = 1", "runs = 0"));
    let res = sleepbench(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(!res.status.success());
    assert_eq!(stderr(&res).trim(), "error: config: config error at `runs`: must be at least 1");

    let cfg = write_config(dir.path(), "bad.toml", &SMALL.replace("exp3-mc", "sleeping-cat"));
    let res = sleepbench(&["run", "--config", &cfg]);
    assert!(!res.status.success());
    assert!(stderr(&res).starts_with("error: config: "));

    let res = sleepbench(&["run", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(stderr(&res).starts_with("error: config: "));
}

#[test]
fn dump_env_matches_what_run_plays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", SMALL);
    let res = sleepbench(&["dump-env", "--config", &cfg, "--run", "0", "--out", dir.path().to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));
    let losses = fs::read_to_string(dir.path().join("tiny_run0_losses.csv")).unwrap();
    let avail = fs::read_to_string(dir.path().join("tiny_run0_availability.csv")).unwrap();
    assert_eq!(losses.lines().next().unwrap(), "t,arm_0,arm_1,arm_2");
    assert_eq!(avail.lines().next().unwrap(), "t,mask");
    assert_eq!(losses.lines().count(), 4);
    assert_eq!(avail.lines().count(), 4);

    // replaying the dumped environment reproduces the regret column of `run`
    let matrix = read_losses_csv(losses.as_bytes()).unwrap();
    let sets = read_availability_csv(avail.as_bytes()).unwrap();
    let episode = Episode::new(matrix, sets).unwrap();
    let seed = seeding::derive_seed(4, 0, &seeding::learner_label("exp3-mc"));
    let trace = run_episode(Variant::Exp3Mc, LearnerOptions::default(), &episode, 3, seed).unwrap();

    assert!(sleepbench(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]).status.success());
    let csv = fs::read_to_string(dir.path().join("tiny.csv")).unwrap();
    let played: Vec<String> = csv
        .lines()
        .filter(|l| l.starts_with("tiny,exp3-mc,"))
        .map(|l| l.split(',').nth(4).unwrap().to_string())
        .collect();
    let replayed: Vec<String> = trace.rounds.iter().map(|o| sig6(o.cumulative_regret)).collect();
    assert_eq!(played, replayed);
}

#[test]
fn usage_errors_are_one_line() {
    let res = sleepbench(&["audit", "--lemma", "L4"]);
    assert_eq!(res.status.code(), Some(2));
    let err = stderr(&res);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: usage: "));
}
