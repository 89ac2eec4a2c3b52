//! On-disk formats.
//!
//! - Manifests and experiment records are TOML.
//! - Run logs are one CSV per run: a comment line
//!   `# experiment=<id> beta=<exact> seed=<n> total_steps=<n>` (plus
//!   `diverged=<step>` for diverged runs), then `step,split,loss` rows.
//! - External curves are imported from a long CSV with one row per
//!   (beta, seed, step, split) observation.
//!
//! Every write goes through a temporary file in the target directory and an
//! atomic rename.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::betagrid::{beta_label, BetaGrid};
use crate::error::{Error, Result};
use crate::harness::{condense, ExperimentManifest, ExperimentRecord, HorizonSettings, LogRecord, Phase, RunLog, SplitTag};

/// Imported betas within this distance of a grid value are snapped to it, so
/// logs that store `0.9` or `0.944` line up with the exact grid.
pub const SNAP_TOL: f64 = 5e-4;

pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn parse_manifest(text: &str) -> Result<ExperimentManifest> {
    let manifest: ExperimentManifest = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<ExperimentManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    parse_manifest(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub fn manifest_to_toml(manifest: &ExperimentManifest) -> Result<String> {
    toml::to_string_pretty(manifest).map_err(|e| Error::config(e.to_string()))
}

pub fn record_to_toml(record: &ExperimentRecord) -> Result<String> {
    toml::to_string_pretty(record).map_err(|e| Error::config(e.to_string()))
}

pub fn parse_record(text: &str) -> Result<ExperimentRecord> {
    let record: ExperimentRecord = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
    record.validate()?;
    Ok(record)
}

pub fn write_record(path: &Path, record: &ExperimentRecord) -> Result<()> {
    atomic_write(path, record_to_toml(record)?.as_bytes())
}

pub fn read_record(path: &Path) -> Result<ExperimentRecord> {
    let text = fs::read_to_string(path)?;
    parse_record(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub fn runlog_to_csv(log: &RunLog) -> String {
    let mut out = format!(
        "# experiment={} beta={:?} seed={} total_steps={}",
        log.experiment_id, log.beta, log.seed, log.total_steps
    );
    if let Some(step) = log.diverged_at {
        out.push_str(&format!(" diverged={step}"));
    }
    out.push_str("\nstep,split,loss\n");
    for r in &log.records {
        out.push_str(&format!("{},{},{:?}\n", r.step, r.phase, r.loss));
    }
    out
}

fn header_value<'a>(fields: &BTreeMap<&str, &'a str>, key: &str) -> Result<&'a str> {
    fields.get(key).copied().ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("missing `{key}=` in the header comment"),
    })
}

fn parse_field<T: std::str::FromStr>(value: &str, what: &str, line: usize) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what} `{value}`"),
    })
}

pub fn parse_runlog(text: &str) -> Result<RunLog> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let comment = first.trim().strip_prefix('#').ok_or_else(|| Error::Parse {
        line: 1,
        message: "expected a `# experiment=...` header comment".into(),
    })?;
    let fields: BTreeMap<&str, &str> = comment.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
    let experiment_id = header_value(&fields, "experiment")?.to_string();
    let beta: f64 = parse_field(header_value(&fields, "beta")?, "beta", 1)?;
    let seed: u64 = parse_field(header_value(&fields, "seed")?, "seed", 1)?;
    let total_steps: u64 = parse_field(header_value(&fields, "total_steps")?, "total_steps", 1)?;
    let diverged_at = match fields.get("diverged") {
        Some(v) => Some(parse_field(v, "diverged step", 1)?),
        None => None,
    };

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rest.as_bytes());
    let headers = reader.headers().map_err(|e| csv_error(e, 2))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["step", "split", "loss"] {
        return Err(Error::Parse {
            line: 2,
            message: "expected the header `step,split,loss`".into(),
        });
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(e, 0))?;
        // One line for the comment, which the CSV reader never saw.
        let line = row.position().map_or(0, |p| p.line() as usize + 1);
        if row.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", row.len()),
            });
        }
        records.push(LogRecord {
            step: parse_field(&row[0], "step", line)?,
            phase: row[1].parse().map_err(|e: Error| Error::Parse {
                line,
                message: e.to_string(),
            })?,
            loss: parse_field(&row[2], "loss", line)?,
        });
    }
    let log = RunLog {
        experiment_id,
        beta,
        seed,
        total_steps,
        records,
        diverged_at,
    };
    log.validate()?;
    Ok(log)
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn write_runlog(path: &Path, log: &RunLog) -> Result<()> {
    atomic_write(path, runlog_to_csv(log).as_bytes())
}

pub fn read_runlog(path: &Path) -> Result<RunLog> {
    let text = fs::read_to_string(path)?;
    parse_runlog(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

/// Directory layout under a workspace root:
/// `runs/<experiment>/<file>.csv` and `records/<experiment>.toml`.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn runs_dir(&self, experiment_id: &str) -> PathBuf {
        self.root.join("runs").join(experiment_id)
    }

    pub fn run_path(&self, log: &RunLog) -> PathBuf {
        self.runs_dir(&log.experiment_id)
            .join(format!("beta_{}_seed_{}.csv", beta_label(log.beta), log.seed))
    }

    pub fn records_dir(&self) -> PathBuf {
        self.root.join("records")
    }

    pub fn record_path(&self, experiment_id: &str) -> PathBuf {
        self.records_dir().join(format!("{experiment_id}.toml"))
    }

    /// Record files in the workspace, sorted by file name.
    pub fn record_files(&self) -> Result<Vec<PathBuf>> {
        let dir = self.records_dir();
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|x| x == "toml"));
        files.sort();
        Ok(files)
    }
}

/// Reads records and rejects duplicate experiment ids.
pub fn read_records(paths: &[PathBuf]) -> Result<Vec<ExperimentRecord>> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let record = read_record(p)?;
        if let Some(prev) = seen.insert(record.experiment_id.clone(), p.clone()) {
            return Err(Error::config(format!(
                "experiment `{}` appears in both {} and {}",
                record.experiment_id,
                prev.display(),
                p.display()
            )));
        }
        out.push(record);
    }
    Ok(out)
}

/// Column names of a long-format curve file.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveColumns {
    pub beta: String,
    /// Without a seed column every row belongs to seed 1.
    pub seed: Option<String>,
    pub step: String,
    pub split: String,
    pub loss: String,
}

impl Default for CurveColumns {
    fn default() -> Self {
        Self {
            beta: "beta".into(),
            seed: Some("seed".into()),
            step: "step".into(),
            split: "split".into(),
            loss: "loss".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImportOptions {
    pub experiment_id: String,
    pub split: SplitTag,
    /// Defaults to the largest step in the file.
    pub total_steps: Option<u64>,
    pub columns: CurveColumns,
    pub horizon: HorizonSettings,
}

#[derive(Debug, Clone)]
pub struct Imported {
    pub record: ExperimentRecord,
    pub runs: Vec<RunLog>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("missing column `{name}`"),
    })
}

fn snap(beta: f64, grid: Option<&BetaGrid>) -> f64 {
    grid.and_then(|g| g.index_of(beta, SNAP_TOL)).map_or(beta, |i| grid.unwrap().value(i))
}

/// Builds run logs and a record from external training curves.
///
/// A non-finite loss marks its run as diverged at that step; later rows of
/// the run are dropped. Every other run needs a validation row at the final
/// step.
pub fn import_curves<R: Read>(input: R, options: &ImportOptions, grid: Option<&BetaGrid>) -> Result<Imported> {
    let cols = &options.columns;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    let i_beta = column(&headers, &cols.beta)?;
    let i_seed = cols.seed.as_deref().map(|c| column(&headers, c)).transpose()?;
    let i_step = column(&headers, &cols.step)?;
    let i_split = column(&headers, &cols.split)?;
    let i_loss = column(&headers, &cols.loss)?;

    // Keyed by (beta bits, seed); betas in [0, 1) order like their bit patterns.
    let mut runs: BTreeMap<(u64, u64), (Vec<LogRecord>, Option<u64>)> = BTreeMap::new();
    let mut max_step = 0;
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(e, 0))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let get = |i: usize| {
            row.get(i).ok_or_else(|| Error::Parse {
                line,
                message: format!("expected at least {} fields, found {}", i + 1, row.len()),
            })
        };
        let raw_beta: f64 = parse_field(get(i_beta)?, "beta", line)?;
        if !(0.0..1.0).contains(&raw_beta) {
            return Err(Error::Parse {
                line,
                message: format!("beta {raw_beta} outside [0, 1)"),
            });
        }
        let beta = snap(raw_beta, grid);
        let seed: u64 = match i_seed {
            Some(i) => parse_field(get(i)?, "seed", line)?,
            None => 1,
        };
        let step: u64 = parse_field(get(i_step)?, "step", line)?;
        let phase: Phase = get(i_split)?.parse().map_err(|e: Error| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let loss: f64 = parse_field(get(i_loss)?, "loss", line)?;
        if loss < 0.0 {
            return Err(Error::Parse {
                line,
                message: format!("negative loss {loss}"),
            });
        }
        max_step = max_step.max(step);
        let (records, diverged) = runs.entry((beta.to_bits(), seed)).or_default();
        if loss.is_finite() {
            records.push(LogRecord { step, phase, loss });
        } else {
            *diverged = Some(diverged.map_or(step, |d: u64| d.min(step)));
        }
    }
    if runs.is_empty() {
        return Err(Error::InsufficientData("curve file has no rows".into()));
    }
    let total_steps = options.total_steps.unwrap_or(max_step);
    if total_steps == 0 {
        return Err(Error::domain("total_steps must be positive"));
    }

    let mut logs = Vec::with_capacity(runs.len());
    for ((bits, seed), (mut records, diverged_at)) in runs {
        records.sort_by_key(|r| r.step);
        if let Some(d) = diverged_at {
            records.retain(|r| r.step < d);
        }
        if records.iter().any(|r| r.step > total_steps) {
            return Err(Error::domain(format!(
                "beta={} seed={seed}: steps beyond total_steps {total_steps}",
                f64::from_bits(bits)
            )));
        }
        let log = RunLog {
            experiment_id: options.experiment_id.clone(),
            beta: f64::from_bits(bits),
            seed,
            total_steps,
            records,
            diverged_at,
        };
        log.validate()?;
        logs.push(log);
    }

    let mut groups: Vec<(f64, Vec<&RunLog>)> = Vec::new();
    for log in &logs {
        match groups.last_mut() {
            Some((b, members)) if *b == log.beta => members.push(log),
            _ => groups.push((log.beta, vec![log])),
        }
    }
    let record = condense(&options.experiment_id, options.split, total_steps, &groups, &options.horizon)?;
    Ok(Imported { record, runs: logs })
}
