//! `laurent-lab --config run.toml --out dir` runs one experiment and writes
//! CSV tables plus `manifest.json` into `dir`.

mod config;
mod experiments;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use serde_json::{json, Value};

use config::{ConfigError, RunConfig};
use experiments::{Outcome, RunError};

const THREADS_ENV: &str = "LAURENT_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "laurent-lab", version, about = "Random Laurent-operator experiments")]
struct Args {
    /// TOML run config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to LAURENT_LAB_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

fn fail(code: u8, record: Value) -> ExitCode {
    eprintln!("{record}");
    ExitCode::from(code)
}

fn config_invalid(msg: impl std::fmt::Display) -> ExitCode {
    fail(2, json!({ "error": "ConfigInvalid", "message": msg.to_string() }))
}

fn threads(args: &Args) -> Result<Option<usize>, ConfigError> {
    let n = match args.threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(s) => Some(s.trim().parse().map_err(|_| ConfigError(format!("{THREADS_ENV} must be a positive integer, got {s:?}")))?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(ConfigError("thread count must be positive".into()));
    }
    Ok(n)
}

fn write_outputs(dir: &Path, outcome: &Outcome, manifest: &BTreeMap<String, Value>) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, table) in &outcome.tables {
        table.write_file(&dir.join(name))?;
    }
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), text + "\n")
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return config_invalid(e.to_string().trim_end()),
    };
    let mut cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return config_invalid(e),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out_dir = match args.out.clone().or_else(|| cfg.out.as_ref().map(PathBuf::from)) {
        Some(d) => d,
        None => return config_invalid("no output directory: pass --out or set `out`"),
    };
    cfg.out = None;
    if let Err(e) = cfg.validate() {
        return config_invalid(e);
    }
    let n_threads = match threads(&args) {
        Ok(n) => n,
        Err(e) => return config_invalid(e),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = n_threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => return fail(1, json!({ "error": "ThreadPool", "message": e.to_string() })),
    };

    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let outcome = match pool.install(|| experiments::run(&cfg)) {
        Ok(o) => o,
        Err(RunError::Config(e)) => return config_invalid(e),
        Err(RunError::Numerical(e)) => {
            return fail(3, json!({ "error": e.name, "module": e.module, "message": e.message }));
        }
    };

    let mut manifest = BTreeMap::new();
    manifest.insert("config".to_string(), serde_json::to_value(&cfg).expect("config serializes"));
    manifest.insert("kind".to_string(), json!(cfg.kind.name()));
    manifest.insert("seed".to_string(), json!(cfg.seed));
    manifest.insert("version".to_string(), json!(env!("CARGO_PKG_VERSION")));
    manifest.insert("threads".to_string(), json!(pool.current_num_threads()));
    manifest.insert("started_unix".to_string(), json!(started));
    manifest.insert("wall_time_s".to_string(), json!(clock.elapsed().as_secs_f64()));
    manifest.insert(
        "outputs".to_string(),
        json!(outcome.tables.iter().map(|(n, t)| json!({ "file": n, "rows": t.rows.len() })).collect::<Vec<_>>()),
    );
    manifest.insert("summary".to_string(), json!(outcome.summary));
    if let Err(e) = write_outputs(&out_dir, &outcome, &manifest) {
        return fail(1, json!({ "error": "Io", "message": e.to_string() }));
    }
    ExitCode::SUCCESS
}
