use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use refresh_adam::betagrid::{build_grid, BetaGrid, select_beta, IntervalConvention, RefreshRule, DEFAULT_R0};
use refresh_adam::harness::{sweep, ExperimentRecord, HorizonSettings, SplitTag, SweepOptions};
use refresh_adam::horizon::DEFAULT_PATIENCE_FRACTION;
use refresh_adam::io::{self, CurveColumns, ImportOptions, Workspace};
use refresh_adam::metrics::{calibrate_r0, default_r0_candidates, fixed_report, refresh_report, DEFAULT_THRESHOLD};
use refresh_adam::perturb::{robustness_study, PerturbConfig, DEFAULT_DRAWS, DEFAULT_SIGMAS};
use refresh_adam::report::{self, Table};

/// Balanced Adam beta sweeps and the refresh-count rule.
#[derive(Parser)]
#[command(name = "refresh-adam", version)]
struct Cli {
    /// Root directory for run logs and experiment records.
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    /// Base seed for Monte Carlo draws.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Also write the main table as CSV to this path.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the 13-value beta grid.
    Grid,
    /// Pick beta for a horizon.
    Select {
        #[arg(long)]
        t_es: u64,
        #[arg(long, default_value_t = DEFAULT_R0)]
        r0: f64,
        /// Report disjoint integer stability intervals instead of the rounded ones.
        #[arg(long)]
        exact_interval: bool,
    },
    /// Run beta sweeps for one or more manifests (files or directories).
    Sweep {
        #[arg(long = "manifest", required = true, num_args = 1..)]
        manifests: Vec<PathBuf>,
        /// Overrides the manifest's number of betas rerun with extra seeds.
        #[arg(long)]
        refine_top_k: Option<usize>,
        /// Overrides the manifest's number of extra seeds per refined beta.
        #[arg(long)]
        extra_seeds: Option<usize>,
    },
    /// Build an experiment record from a long-format CSV of training curves.
    ImportCurves(ImportArgs),
    /// Relative gaps of the refresh rule (and fixed betas) to the oracle.
    Analyze {
        #[command(flatten)]
        records: RecordArgs,
        #[arg(long, default_value_t = DEFAULT_R0)]
        r0: f64,
        /// Add a fixed-beta baseline row; may be repeated.
        #[arg(long)]
        fixed_beta: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Also print per-experiment gaps.
        #[arg(long)]
        detail: bool,
    },
    /// Sweep R0 and pick the value with the smallest maximum development gap.
    Calibrate {
        #[command(flatten)]
        records: RecordArgs,
        /// Explicit comma-separated candidates.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["r0_min", "r0_max", "r0_step"])]
        candidates: Vec<f64>,
        #[arg(long)]
        r0_min: Option<f64>,
        #[arg(long)]
        r0_max: Option<f64>,
        #[arg(long)]
        r0_step: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Robustness of the rule to multiplicative noise on T_ES.
    Perturb {
        #[command(flatten)]
        records: RecordArgs,
        /// Comma-separated noise levels.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIGMAS.to_vec())]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_DRAWS)]
        draws: usize,
        #[arg(long, default_value_t = DEFAULT_R0)]
        r0: f64,
        #[arg(long)]
        fixed_beta: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Sweep curves on the u = -log10(1 - beta) axis.
    PlotData {
        #[command(flatten)]
        records: RecordArgs,
    },
}

#[derive(Args)]
struct RecordArgs {
    /// Record files; defaults to every record in the workspace.
    records: Vec<PathBuf>,
    /// Override a record's split, as `<experiment_id>=<dev|held_out>`; may be repeated.
    #[arg(long = "assign")]
    assign: Vec<String>,
}

#[derive(Args)]
struct ImportArgs {
    /// Long-format CSV with one row per (beta, seed, step, split) observation.
    path: PathBuf,
    #[arg(long)]
    experiment_id: String,
    #[arg(long, default_value = "development")]
    split: SplitTag,
    /// Defaults to the largest step in the file.
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long, default_value = "beta")]
    beta_col: String,
    #[arg(long, default_value = "seed")]
    seed_col: String,
    /// The file has no seed column; every row is seed 1.
    #[arg(long, conflicts_with = "seed_col")]
    no_seed_col: bool,
    #[arg(long, default_value = "step")]
    step_col: String,
    #[arg(long, default_value = "split")]
    split_col: String,
    #[arg(long, default_value = "loss")]
    loss_col: String,
    /// Keep betas as written instead of snapping them to the grid.
    #[arg(long)]
    no_snap: bool,
    #[arg(long, default_value_t = DEFAULT_PATIENCE_FRACTION)]
    patience_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    min_delta: f64,
    /// Also write the imported runs as run logs.
    #[arg(long)]
    write_runs: bool,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // Output piped into `head` and the like.
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let ws = Workspace::new(&cli.workspace);
    let table = match cli.command {
        Command::Grid => report::grid_table(&build_grid()),
        Command::Select { t_es, r0, exact_interval } => {
            let convention = if exact_interval {
                IntervalConvention::Exact
            } else {
                IntervalConvention::Reported
            };
            let rule = RefreshRule::new(r0, build_grid())?.with_convention(convention);
            report::selection_table(t_es, r0, &select_beta(&rule, t_es)?)
        }
        Command::Sweep {
            manifests,
            refine_top_k,
            extra_seeds,
        } => cmd_sweep(&ws, &manifests, refine_top_k, extra_seeds)?,
        Command::ImportCurves(args) => cmd_import(&ws, args)?,
        Command::Analyze {
            records,
            r0,
            fixed_beta,
            threshold,
            detail,
        } => {
            let records = load_records(&ws, &records)?;
            let grid = build_grid();
            let mut reports = vec![refresh_report(&records, &grid, r0, threshold)?];
            for b in fixed_beta {
                reports.push(fixed_report(&records, snap_beta(&grid, b), threshold)?);
            }
            if detail {
                for r in &reports {
                    out(&format!("{}\n", report::gap_detail_table(r).to_text()))?;
                }
            }
            report::gap_summary_table(&reports.iter().collect::<Vec<_>>())
        }
        Command::Calibrate {
            records,
            candidates,
            r0_min,
            r0_max,
            r0_step,
            threshold,
        } => {
            let records = load_records(&ws, &records)?;
            let candidates = candidate_list(candidates, r0_min, r0_max, r0_step)?;
            report::calibration_table(&calibrate_r0(&records, &build_grid(), &candidates, threshold)?)
        }
        Command::Perturb {
            records,
            sigmas,
            draws,
            r0,
            fixed_beta,
            threshold,
        } => {
            let records = load_records(&ws, &records)?;
            let config = PerturbConfig {
                sigmas,
                draws_per_experiment: draws,
                base_seed: cli.seed,
                r0,
            };
            let grid = build_grid();
            let fixed_beta = fixed_beta.map(|b| snap_beta(&grid, b));
            report::robustness_table(&robustness_study(&records, &grid, &config, fixed_beta, threshold)?)
        }
        Command::PlotData { records } => report::plot_data_table(&load_records(&ws, &records)?),
    };
    emit(&table, cli.csv.as_deref())
}

fn out(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(text.as_bytes())?;
    stdout.flush()?;
    Ok(())
}

fn emit(table: &Table, csv: Option<&Path>) -> Result<()> {
    out(&table.to_text())?;
    if let Some(path) = csv {
        io::atomic_write(path, table.to_csv()?.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn manifest_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|f| f.extension().is_some_and(|x| x == "toml"));
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("no manifest files found");
    }
    Ok(files)
}

fn cmd_sweep(ws: &Workspace, paths: &[PathBuf], top_k: Option<usize>, extra: Option<usize>) -> Result<Table> {
    let grid = build_grid();
    let manifests = manifest_files(paths)?
        .iter()
        .map(|p| io::load_manifest(p))
        .collect::<refresh_adam::Result<Vec<_>>>()?;
    let mut ids: Vec<&str> = manifests.iter().map(|m| m.experiment_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        bail!("experiment_id `{}` is used by more than one manifest", w[0]);
    }

    let mut summary = Table::new("Sweeps", &["experiment", "split", "runs", "T_ES", "best_beta", "record"]);
    for m in &manifests {
        let mut options = SweepOptions::from(&m.sweep);
        if let Some(k) = top_k {
            options.refine_top_k = k;
        }
        if let Some(e) = extra {
            options.extra_seeds = e;
        }
        eprintln!("sweeping {} ({} steps)", m.experiment_id, m.total_steps);
        let outcome = sweep(m, &grid, &options)?;
        for run in &outcome.runs {
            io::write_runlog(&ws.run_path(run), run)?;
        }
        let path = ws.record_path(&m.experiment_id);
        io::write_record(&path, &outcome.record)?;
        let best = refresh_adam::metrics::oracle_beta(&outcome.record)?;
        summary.push(vec![
            m.experiment_id.as_str().into(),
            m.split.to_string().into(),
            report::Cell::Int(outcome.runs.len() as u64),
            report::Cell::Int(outcome.record.t_es),
            refresh_adam::betagrid::beta_label(best).into(),
            path.display().to_string().into(),
        ]);
    }
    Ok(summary)
}

fn cmd_import(ws: &Workspace, args: ImportArgs) -> Result<Table> {
    let grid = build_grid();
    let options = ImportOptions {
        experiment_id: args.experiment_id,
        split: args.split,
        total_steps: args.total_steps,
        columns: CurveColumns {
            beta: args.beta_col,
            seed: (!args.no_seed_col).then_some(args.seed_col),
            step: args.step_col,
            split: args.split_col,
            loss: args.loss_col,
        },
        horizon: HorizonSettings {
            patience_fraction: args.patience_fraction,
            min_delta: args.min_delta,
        },
    };
    let file = File::open(&args.path).with_context(|| format!("opening {}", args.path.display()))?;
    let imported = io::import_curves(file, &options, (!args.no_snap).then_some(&grid))
        .with_context(|| format!("importing {}", args.path.display()))?;
    if args.write_runs {
        for run in &imported.runs {
            io::write_runlog(&ws.run_path(run), run)?;
        }
    }
    let path = ws.record_path(&imported.record.experiment_id);
    io::write_record(&path, &imported.record)?;
    eprintln!("wrote {}", path.display());
    Ok(report::record_table(&imported.record))
}

fn load_records(ws: &Workspace, args: &RecordArgs) -> Result<Vec<ExperimentRecord>> {
    let paths = if args.records.is_empty() {
        ws.record_files()?
    } else {
        args.records.clone()
    };
    if paths.is_empty() {
        bail!("no experiment records in {}", ws.records_dir().display());
    }
    let mut records = io::read_records(&paths)?;
    for a in &args.assign {
        let (id, split) = a
            .split_once('=')
            .with_context(|| format!("--assign expects <experiment_id>=<split>, got `{a}`"))?;
        let split: SplitTag = split.parse()?;
        let record = records
            .iter_mut()
            .find(|r| r.experiment_id == id)
            .with_context(|| format!("--assign: no record for experiment `{id}`"))?;
        record.split = split;
    }
    Ok(records)
}

/// Maps a rounded beta such as `0.94377` onto the exact grid value.
fn snap_beta(grid: &BetaGrid, beta: f64) -> f64 {
    grid.index_of(beta, io::SNAP_TOL).map_or(beta, |i| grid.value(i))
}

fn candidate_list(explicit: Vec<f64>, min: Option<f64>, max: Option<f64>, step: Option<f64>) -> Result<Vec<f64>> {
    if !explicit.is_empty() {
        return Ok(explicit);
    }
    if min.is_none() && max.is_none() && step.is_none() {
        return Ok(default_r0_candidates());
    }
    let (min, max, step) = (min.unwrap_or(300.0), max.unwrap_or(2000.0), step.unwrap_or(100.0));
    if !(min > 0.0 && max >= min && step > 0.0) {
        bail!("need 0 < r0-min <= r0-max and r0-step > 0");
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| min + i as f64 * step).collect())
}
