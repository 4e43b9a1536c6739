mod config;
mod output;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use elastoscat::{Error, Result};
use serde_json::{json, Value};

use config::RunConfig;
use output::{error_report, sha256_hex, up_to_date, Writer, VERSION};

/// Elastic scattering by many small rigid bodies.
#[derive(Debug, Parser)]
#[command(name = "elastoscat", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `output_dir` from the config, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel parts.
    #[arg(long)]
    threads: Option<usize>,
    /// Validate the config and print the execution plan without solving.
    #[arg(long)]
    dry_run: bool,
    /// Overrides `distribution.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write a matplotlib script next to each far-field CSV.
    #[arg(long)]
    plot_script: bool,
    /// Recompute even when the output directory holds a result for this config.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(status) => {
            println!("{status}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (code, report) = error_report(&e);
            eprintln!("error: {e}");
            println!("{report}");
            ExitCode::from(code as u8)
        }
    }
}

/// Hash of the effective configuration: canonical JSON with the output
/// location removed, plus the digest of any mesh file.
fn config_hash(cfg: &RunConfig) -> Result<String> {
    let mut v = serde_json::to_value(cfg)?;
    if let Value::Object(m) = &mut v {
        m.remove("output_dir");
    }
    if let Some(p) = &cfg.shape.mesh {
        v["mesh_sha256"] = json!(sha256_hex(&std::fs::read(p)?));
    }
    Ok(sha256_hex(serde_json::to_string(&v)?.as_bytes()))
}

fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os("ELASTOSCAT_OUT").map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: &Cli) -> Result<Value> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.distribution.seed = seed;
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidInput("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    let hash = config_hash(&cfg)?;
    let dir = output_dir(cli, &cfg);
    let cache_dir = dir.join("cache");
    let command = cfg.command.name();
    let manifest = format!("{command}.json");

    if cli.dry_run {
        let steps = pipeline::plan(&cfg, &cache_dir)?;
        return Ok(json!({
            "status": "plan",
            "command": command,
            "config_hash": hash,
            "version": VERSION,
            "output_dir": dir,
            "up_to_date": up_to_date(&dir, &manifest, &hash),
            "steps": steps,
        }));
    }
    if !cli.force && up_to_date(&dir, &manifest, &hash) {
        return Ok(status(command, &hash, &dir, &manifest, "up_to_date", None));
    }

    let mut ctx = pipeline::Context {
        config: &cfg,
        writer: Writer::new(dir.clone(), hash.clone()),
        cache_dir: &cache_dir,
        plot: cli.plot_script,
        cache: None,
    };
    let payload = pipeline::run(&mut ctx)?;
    let mut outputs = ctx.writer.written.clone();
    outputs.push(manifest.clone());
    let mut summary = json!({"command": command, "outputs": outputs});
    if let (Value::Object(s), Value::Object(p)) = (&mut summary, payload) {
        s.extend(p);
    }
    ctx.writer.json(&manifest, &summary)?;
    Ok(status(command, &hash, &dir, &manifest, "computed", ctx.cache.as_ref().map(|c| c.as_str())))
}

fn status(command: &str, hash: &str, dir: &Path, manifest: &str, state: &str, cache: Option<&str>) -> Value {
    json!({
        "status": "ok",
        "command": command,
        "config_hash": hash,
        "state": state,
        "capacitance_cache": cache,
        "report": dir.join(manifest),
    })
}
