use refresh_adam::betagrid::build_grid;
use refresh_adam::harness::{
    condense, run_training, sweep, ExperimentManifest, OptimizerDefaults, RunLog, ScheduleSpec, SplitTag, SweepOptions,
};
use refresh_adam::io::{self, Workspace};
use refresh_adam::optim::OptimizerConfig;
use refresh_adam::schedule::LrSchedule;
use refresh_adam::tasks::{make_task, TaskSpec};

fn manifest() -> ExperimentManifest {
    io::parse_manifest(
        r#"
experiment_id = "nq"
split = "held_out"
total_steps = 300
eval_every = 25
seeds = [4, 9]

[task]
kind = "noisy_quadratic"
dim = 8
data_seed = 2
noise_scale = 0.5
train_samples = 64
val_samples = 64
batch_size = 2
condition = 10.0

[schedule]
lr_max = 0.02
"#,
    )
    .unwrap()
}

#[test]
fn manifest_defaults() {
    let m = manifest();
    assert_eq!(m.optimizer, OptimizerDefaults::default());
    assert_eq!(m.schedule, ScheduleSpec { lr_max: 0.02, lr_min: None, warmup_steps: 0 });
    assert_eq!((m.sweep.refine_top_k, m.sweep.extra_seeds), (5, 2));
    assert_eq!(m.seed_plan(2), vec![4, 9, 10]);
    let back = io::parse_manifest(&io::manifest_to_toml(&m).unwrap()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn unknown_manifest_keys_are_rejected() {
    let text = io::manifest_to_toml(&manifest()).unwrap().replace("eval_every", "eval_evry");
    assert!(io::parse_manifest(&text).is_err());
}

#[test]
fn long_memory_loses_on_a_short_run() {
    let spec = TaskSpec::noisy_quadratic(10, 3, 0.5, 20.0);
    let task = make_task(&spec, 1).unwrap();
    let schedule = LrSchedule::constant(0.05, 200).unwrap();
    let best = |beta: f64| {
        let config = OptimizerConfig::new(beta).unwrap();
        run_training("short", &task, &config, &schedule, 200, 10, 1).unwrap().best_val_loss()
    };
    assert!(best(0.999) > best(0.9), "{} vs {}", best(0.999), best(0.9));
}

#[test]
fn persisted_runs_rebuild_the_record() {
    let m = manifest();
    let grid = build_grid();
    let outcome = sweep(&m, &grid, &SweepOptions::from(&m.sweep)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(dir.path());
    for run in &outcome.runs {
        io::write_runlog(&ws.run_path(run), run).unwrap();
    }
    io::write_record(&ws.record_path("nq"), &outcome.record).unwrap();
    assert_eq!(io::read_record(&ws.record_path("nq")).unwrap(), outcome.record);
    assert_eq!(ws.record_files().unwrap().len(), 1);

    let mut logs: Vec<RunLog> = std::fs::read_dir(ws.runs_dir("nq"))
        .unwrap()
        .map(|e| io::read_runlog(&e.unwrap().path()).unwrap())
        .collect();
    assert_eq!(logs.len(), 13 + 5 * 2);
    logs.sort_by(|a, b| a.beta.total_cmp(&b.beta).then(a.seed.cmp(&b.seed)));
    let mut groups: Vec<(f64, Vec<&RunLog>)> = Vec::new();
    for log in &logs {
        match groups.last_mut() {
            Some((b, g)) if *b == log.beta => g.push(log),
            _ => groups.push((log.beta, vec![log])),
        }
    }
    // Seed order within a group matches the sweep's: first seed, then refinements.
    let rebuilt = condense("nq", SplitTag::HeldOut, 300, &groups, &m.horizon).unwrap();
    assert_eq!(rebuilt, outcome.record);
}

#[test]
fn sweep_records_full_precision_betas() {
    let m = manifest();
    let grid = build_grid();
    let outcome = sweep(&m, &grid, &SweepOptions { refine_top_k: 0, extra_seeds: 0 }).unwrap();
    assert!(outcome.record.on_grid(&grid));
    assert_eq!(outcome.record.betas(), grid.values());
    let text = io::record_to_toml(&outcome.record).unwrap();
    assert!(text.contains("beta = 0.9437658674809651"));
}
