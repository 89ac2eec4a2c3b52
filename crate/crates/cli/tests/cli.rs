use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(ws: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_refresh-adam"));
    c.arg("--workspace").arg(ws);
    c
}

fn ok(mut c: Command) -> String {
    let out: Output = c.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(mut c: Command) -> String {
    let out = c.output().unwrap();
    assert!(!out.status.success(), "command unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

const MANIFEST: &str = r#"
experiment_id = "quad"
split = "development"
total_steps = 120
eval_every = 10
seeds = [1]

[task]
kind = "noisy_quadratic"
dim = 6
data_seed = 3
noise_scale = 0.5
train_samples = 32
val_samples = 32
batch_size = 2
condition = 10.0

[schedule]
lr_max = 0.05
lr_min = 0.005
warmup_steps = 5
"#;

fn count_runs(ws: &Path, id: &str) -> usize {
    fs::read_dir(ws.join("runs").join(id)).map_or(0, |d| d.count())
}

#[test]
fn grid_lists_thirteen_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok({
        let mut c = bin(dir.path());
        c.arg("grid");
        c
    });
    let rows: Vec<&str> = out.lines().skip(3).collect();
    assert_eq!(rows.len(), 13);
    assert!(rows[0].split_whitespace().nth(1) == Some("0"));
    assert!(out.contains("0.944") && out.contains("0.943765867"));
}

fn select(ws: &Path, t: &str, extra: &[&str]) -> String {
    let mut c = bin(ws);
    c.args(["select", "--t-es", t, "--r0", "1000"]).args(extra);
    ok(c)
}

#[test]
fn select_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = select(dir.path(), "10000", &[]);
    assert!(out.contains("0.900") && out.contains("[7199, 12802]"), "{out}");
    let out = select(dir.path(), "6000", &[]);
    assert!(out.contains("0.822") && out.contains("[4048, 7199]"), "{out}");
    let out = select(dir.path(), "500", &[]);
    let row = out.lines().nth(3).unwrap();
    assert!(row.split_whitespace().any(|c| c == "yes"), "{out}");
    assert_eq!(row.split_whitespace().nth(2), Some("0"));
    let out = select(dir.path(), "10000", &["--exact-interval"]);
    assert!(out.contains("[7199, 12801]"), "{out}");
}

#[test]
fn select_rejects_zero_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = bin(dir.path());
    c.args(["select", "--t-es", "0"]);
    assert!(fails(c).contains("horizon"));
}

#[test]
fn unreadable_manifest_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "experiment_id = [").unwrap();
    let mut c = bin(dir.path());
    c.args(["sweep", "--manifest"]).arg(&bad);
    assert!(fails(c).contains("configuration error"));
    let mut c = bin(dir.path());
    c.args(["sweep", "--manifest"]).arg(dir.path().join("missing.toml"));
    fails(c);
}

fn sweep(ws: &Path, manifest: &Path, extra: &[&str]) {
    let mut c = bin(ws);
    c.args(["sweep", "--manifest"]).arg(manifest).args(extra);
    ok(c);
}

#[test]
fn sweep_file_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("quad.toml");
    fs::write(&manifest, MANIFEST).unwrap();

    let single = dir.path().join("single");
    sweep(&single, &manifest, &["--refine-top-k", "0", "--extra-seeds", "0"]);
    assert_eq!(count_runs(&single, "quad"), 13);
    assert!(single.join("records/quad.toml").exists());

    let full = dir.path().join("full");
    sweep(&full, &manifest, &["--refine-top-k", "5", "--extra-seeds", "2"]);
    assert_eq!(count_runs(&full, "quad"), 23);
    let first = fs::read(full.join("records/quad.toml")).unwrap();
    let run = fs::read(full.join("runs/quad/beta_0.900_seed_1.csv")).unwrap();

    sweep(&full, &manifest, &["--refine-top-k", "5", "--extra-seeds", "2"]);
    assert_eq!(fs::read(full.join("records/quad.toml")).unwrap(), first);
    assert_eq!(fs::read(full.join("runs/quad/beta_0.900_seed_1.csv")).unwrap(), run);
    let text = String::from_utf8(run).unwrap();
    assert!(text.starts_with("# experiment=quad beta=0.9 seed=1 total_steps=120\nstep,split,loss\n"));
}

#[test]
fn duplicate_experiment_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.toml"), MANIFEST).unwrap();
    fs::write(dir.path().join("b.toml"), MANIFEST).unwrap();
    let mut c = bin(&dir.path().join("ws"));
    c.args(["sweep", "--manifest"]).arg(dir.path());
    assert!(fails(c).contains("more than one manifest"));
}

fn curves() -> String {
    let mut s = String::from("beta,seed,step,split,loss\n");
    for (beta, scale) in [("0.9", 1.0), ("0.944", 1.05), ("0.968", 1.2)] {
        for step in (0..=10_000).step_by(500) {
            let x = step as f64 / 10_000.0;
            let loss = scale * (1.0 + (x - 0.6).powi(2));
            s.push_str(&format!("{beta},1,{step},val,{loss}\n"));
        }
    }
    s
}

#[test]
fn import_then_select() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curves.csv");
    fs::write(&path, curves()).unwrap();
    let mut c = bin(dir.path());
    c.arg("import-curves").arg(&path).args(["--experiment-id", "ext", "--split", "held_out"]);
    let out = ok(c);
    assert_eq!(out.lines().skip(3).count(), 3, "{out}");
    assert!(out.contains("T_ES = 6000"), "{out}");

    let rec = fs::read_to_string(dir.path().join("records/ext.toml")).unwrap();
    assert!(rec.contains("t_es = 6000"));
    assert!(rec.contains("beta = 0.9437658674809651"));
    let out = select(dir.path(), "6000", &[]);
    assert!(out.contains("0.822"));
}

#[test]
fn import_rejects_missing_final_val() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curves.csv");
    let text: String = curves()
        .lines()
        .filter(|l| !l.starts_with("0.944,1,10000,"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&path, text).unwrap();
    let mut c = bin(dir.path());
    c.arg("import-curves").arg(&path).args(["--experiment-id", "ext"]);
    assert!(fails(c).contains("final step"));
}

#[test]
fn import_reports_bad_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curves.csv");
    fs::write(&path, "beta,seed,step,split,loss\n0.9,1,0,val,1\n0.9,1,5,bogus,1\n").unwrap();
    let mut c = bin(dir.path());
    c.arg("import-curves").arg(&path).args(["--experiment-id", "ext"]);
    assert!(fails(c).contains("line 3"));
}

fn swept_workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("quad.toml");
    fs::write(&manifest, MANIFEST).unwrap();
    sweep(dir.path(), &manifest, &[]);
    dir
}

#[test]
fn analyze_single_record() {
    let dir = swept_workspace();
    let csv = dir.path().join("gaps.csv");
    let mut c = bin(dir.path());
    c.args(["analyze", "--fixed-beta", "0.94377", "--csv"]).arg(&csv);
    let out = ok(c);
    assert!(out.contains("Refresh R0=1000") && out.contains("Fixed beta=0.944"));
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        // One development record: mean, max and CVaR coincide.
        assert_eq!(row[1], row[2]);
        assert_eq!(row[1], row[3]);
        assert_eq!(row[4], "");
        assert_eq!(row[9].split('/').nth(1), Some("1"));
    }
}

#[test]
fn calibrate_and_perturb() {
    let dir = swept_workspace();
    let mut c = bin(dir.path());
    c.args(["calibrate", "--candidates", "1000"]);
    let out = ok(c);
    assert!(out.contains("selected R0 = 1000"));

    let mut c = bin(dir.path());
    c.args(["calibrate"]);
    assert_eq!(ok(c).lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count(), 18);

    let run = |seed: &str, name: &str| {
        let csv = dir.path().join(name);
        let mut c = bin(dir.path());
        c.args(["perturb", "--seed", seed, "--draws", "5", "--sigmas", "0,0.03,0.06,0.10,0.15,0.20,0.25", "--csv"])
            .arg(&csv);
        ok(c);
        fs::read_to_string(csv).unwrap()
    };
    let a = run("4", "a.csv");
    assert_eq!(a, run("4", "b.csv"));
    assert_eq!(a.lines().count(), 8);

    let gaps = dir.path().join("gaps.csv");
    let mut c = bin(dir.path());
    c.arg("analyze").arg("--csv").arg(&gaps);
    ok(c);
    let analyze: Vec<String> = fs::read_to_string(gaps).unwrap().lines().nth(1).unwrap().split(',').map(String::from).collect();
    let sigma0: Vec<&str> = a.lines().nth(1).unwrap().split(',').collect();
    // mean, max and CVaR over all experiments.
    assert_eq!(sigma0[3..6], [&analyze[6][..], &analyze[7][..], &analyze[8][..]]);
}

#[test]
fn plot_data_rows() {
    let dir = swept_workspace();
    let csv = dir.path().join("plot.csv");
    let mut c = bin(dir.path());
    c.arg("plot-data").arg("--csv").arg(&csv);
    ok(c);
    let text = fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("experiment,beta_label,u,mean_best_val_loss,seed_spread"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 13);
    assert_eq!(rows[0][1..3], ["0", "0.0"]);
    let u: f64 = rows[4][2].parse().unwrap();
    assert_eq!(rows[4][1], "0.900");
    assert!((u - 1.0).abs() < 1e-12);
}

#[test]
fn analyze_without_records_fails() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = bin(dir.path());
    c.arg("analyze");
    assert!(fails(c).contains("no experiment records"));
}
