use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use chung_lab_core::cli::output::read_rows_from;
use chung_lab_core::cli::{EXIT_INTERRUPTED, EXIT_OK, EXIT_USAGE};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chung-lab"))
}

struct Run {
    code: i32,
    out: PathBuf,
}

fn run(dir: &Path, name: &str, sub: &str, config: &str, extra: &[&str]) -> Run {
    let cfg = dir.join(format!("{name}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(name);
    let status = bin()
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    Run {
        code: status.status.code().unwrap(),
        out,
    }
}

/// CSV contents with the timestamp column dropped.
fn without_timestamps(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .map(|l| match l.rsplit_once(',') {
            Some((head, _)) if !l.starts_with('#') => head.to_string(),
            _ => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn smallball_config(shard: u64) -> String {
    format!(
        r#"
[campaign]
id = "sb"
seed = 99

[coefficient]
kind = "affine"
c0 = 1.0
c1 = 0.5
lipschitz = 0.5
sigma0 = 1.0

[smallball]
r = 0.25
lambdas = [0.5, 1.0, 1.5, 2.0]
modes = ["exceedance", "containment"]
trials = 200
shard_size = {shard}
fit = false
"#
    )
}

fn couple_config(shard: u64) -> String {
    format!(
        r#"
[campaign]
id = "cp"
seed = 5

[coefficient]
kind = "affine"
c0 = 2.0
c1 = 1.0
lipschitz = 1.0
sigma0 = 2.0

[scales]
a = 2.0
n_min = 2
n_max = 3
epsilon = 0.5

[couple]
replicates = 20
shard_size = {shard}
"#
    )
}

#[test]
fn identical_config_and_seed_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(dir.path(), "a", "smallball", &smallball_config(200), &["--workers", "1"]);
    let b = run(dir.path(), "b", "smallball", &smallball_config(200), &["--workers", "4"]);
    assert_eq!((a.code, b.code), (EXIT_OK, EXIT_OK));
    let csv_a = without_timestamps(&a.out.join("smallball.csv"));
    assert_eq!(csv_a, without_timestamps(&b.out.join("smallball.csv")));
    assert!(csv_a.starts_with("# schema_version=1\n"));

    let c = run(dir.path(), "c", "smallball", &smallball_config(200), &["--seed", "100"]);
    assert_ne!(csv_a, without_timestamps(&c.out.join("smallball.csv")));
}

#[test]
fn ten_shards_merge_to_the_single_shot_counts() {
    let dir = tempfile::tempdir().unwrap();
    let single = run(dir.path(), "single", "smallball", &smallball_config(200), &[]);
    let sharded = run(dir.path(), "sharded", "smallball", &smallball_config(20), &[]);
    assert_eq!((single.code, sharded.code), (EXIT_OK, EXIT_OK));
    assert_eq!(
        without_timestamps(&single.out.join("smallball.csv")),
        without_timestamps(&sharded.out.join("smallball.csv"))
    );

    let single = run(dir.path(), "cs", "couple", &couple_config(20), &[]);
    let sharded = run(dir.path(), "cm", "couple", &couple_config(2), &[]);
    assert_eq!((single.code, sharded.code), (EXIT_OK, EXIT_OK));
    assert_eq!(
        without_timestamps(&single.out.join("couple.csv")),
        without_timestamps(&sharded.out.join("couple.csv"))
    );
}

#[test]
fn interrupted_campaign_resumes_to_the_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smallball_config(20);
    let first = run(dir.path(), "r", "smallball", &cfg, &["--max-units", "3"]);
    assert_eq!(first.code, EXIT_INTERRUPTED);
    assert!(!first.out.join("smallball.csv").exists());
    assert!(first.out.join("smallball.checkpoint.jsonl").exists());

    let second = run(dir.path(), "r", "smallball", &cfg, &["--resume", "--max-units", "4"]);
    assert_eq!(second.code, EXIT_INTERRUPTED);
    let done = run(dir.path(), "r", "smallball", &cfg, &["--resume"]);
    assert_eq!(done.code, EXIT_OK);

    let fresh = run(dir.path(), "fresh", "smallball", &cfg, &[]);
    assert_eq!(
        without_timestamps(&done.out.join("smallball.csv")),
        without_timestamps(&fresh.out.join("smallball.csv"))
    );

    // a checkpoint from another seed is refused
    let other = run(dir.path(), "r", "smallball", &cfg, &["--resume", "--seed", "1"]);
    assert_eq!(other.code, EXIT_USAGE);
}

#[test]
fn tailfit_reads_smallball_output_and_refuses_other_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let sb = run(dir.path(), "sb", "smallball", &smallball_config(200), &[]);
    assert_eq!(sb.code, EXIT_OK);
    let input = sb.out.join("smallball.csv");
    let cfg = format!("[tailfit]\ninput = {:?}\n", input.to_str().unwrap());
    let tf = run(dir.path(), "tf", "tailfit", &cfg, &[]);
    assert_ne!(tf.code, EXIT_USAGE);
    let rows = read_rows_from(&tf.out.join("tailfit.csv")).unwrap();
    assert!(rows.iter().any(|r| r.statistic.starts_with("tail_")));

    let bad = dir.path().join("v2.csv");
    let text = fs::read_to_string(&input).unwrap().replacen("schema_version=1", "schema_version=2", 1);
    fs::write(&bad, text).unwrap();
    let cfg = format!("[tailfit]\ninput = {:?}\n", bad.to_str().unwrap());
    assert_eq!(run(dir.path(), "tf2", "tailfit", &cfg, &[]).code, EXIT_USAGE);
}

#[test]
fn invalid_configurations_exit_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let empty_lambdas = smallball_config(200).replace("lambdas = [0.5, 1.0, 1.5, 2.0]", "lambdas = []");
    assert_eq!(run(d, "e1", "smallball", &empty_lambdas, &[]).code, EXIT_USAGE);

    let empty_eps = "[bm_oracle]\nepsilons = []\nmonte_carlo = false\n";
    assert_eq!(run(d, "e2", "bm-oracle", empty_eps, &[]).code, EXIT_USAGE);

    let zero_sigma0 = couple_config(20)
        .replace("c0 = 2.0", "c0 = 0.0")
        .replace("sigma0 = 2.0", "sigma0 = 0.0");
    assert_eq!(run(d, "e3", "couple", &zero_sigma0, &[]).code, EXIT_USAGE);

    let unknown_key = format!("{}\n[extra]\nfoo = 1\n", couple_config(20));
    assert_eq!(run(d, "e4", "couple", &unknown_key, &[]).code, EXIT_USAGE);

    let false_lipschitz = couple_config(20).replace("lipschitz = 1.0", "lipschitz = 0.5");
    assert_eq!(run(d, "e5", "couple", &false_lipschitz, &[]).code, EXIT_USAGE);

    let missing_section = "[campaign]\nid = \"x\"\n";
    assert_eq!(run(d, "e6", "couple", missing_section, &[]).code, EXIT_USAGE);

    let status = bin().arg("no-such-command").output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
}

#[test]
fn kernel_check_and_bm_oracle_pass() {
    let dir = tempfile::tempdir().unwrap();
    let kc = run(dir.path(), "kc", "kernel-check", "[kernel_check]\n", &[]);
    assert_eq!(kc.code, EXIT_OK);
    let rows = read_rows_from(&kc.out.join("kernel-check.csv")).unwrap();
    assert!(rows.iter().all(|r| r.value.abs() < 1e-8));

    let bm = "[bm_oracle]\nepsilons = [1.0]\nmonte_carlo = false\n";
    let run = run(dir.path(), "bm", "bm-oracle", bm, &[]);
    assert_eq!(run.code, EXIT_OK);
    let rows = read_rows_from(&run.out.join("bm-oracle.csv")).unwrap();
    let series = rows.iter().find(|r| r.statistic == "bm_series").unwrap();
    assert!((series.value - 0.370_777_429_799_523_9).abs() < 1e-15);
}
