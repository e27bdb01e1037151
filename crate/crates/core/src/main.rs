use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use surgsafe::catalog::Catalog;
use surgsafe::harness::{
    exit_code, golden_catalog, load_catalog_file, load_spec_file, replay, replay_dir,
    write_scenario, InputError, ReplayOptions, Scenario,
};
use surgsafe::model::SessionReport;
use surgsafe::service::{serve, AppState};
use surgsafe::specparse::{check_document, generate_instructions, write_instruction_pages, SpecDocument};

#[derive(Parser)]
#[command(name = "surgsafe", version, about = "Safety-rule compiler and session monitor for laparoscopic training")]
struct Cli {
    /// Catalog file; the built-in golden catalog when omitted (for `check`
    /// and `validate`, the spec's own catalog reference).
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the session id.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a trajectory (or every *.jsonl in a directory) and write reports.
    Check {
        path: PathBuf,
        /// Spec file; defaults to the trajectory header's specRef.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Write a scripted scenario (or `all`) with the golden catalog and specs.
    GenScenario { name: String },
    /// Report findings for a spec document.
    Validate { spec: PathBuf },
    /// Print catalog names starting with a prefix.
    Complete { prefix: String },
    /// Write one instruction page per step.
    Instructions { spec: PathBuf },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Directory for per-session event logs, enabling recovery on restart.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn catalog(path: Option<&Path>) -> Result<Catalog, InputError> {
    path.map_or_else(|| Ok(golden_catalog()), load_catalog_file)
}

fn summarize(path: &Path, r: &Result<SessionReport, InputError>, out: &Path) {
    match r {
        Ok(rep) => println!(
            "{}: {} ({} violations, {} achievements) -> {}",
            path.display(),
            if rep.proficient { "proficient" } else { "not proficient" },
            rep.violations.len(),
            rep.achievements.len(),
            out.join(&rep.session_id).display()
        ),
        Err(e) => eprintln!("{}: {e}", path.display()),
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Check { path, spec } => {
            let opts = ReplayOptions {
                spec,
                catalog: cli.catalog,
                seed: cli.seed,
            };
            if path.is_dir() {
                let results = replay_dir(&path, &out, &opts)?;
                let mut worst = 0;
                for (p, r) in &results {
                    summarize(p, r, &out);
                    worst = worst.max(exit_code(r));
                }
                Ok(worst as u8)
            } else {
                let r = replay(&path, &out, &opts);
                summarize(&path, &r, &out);
                Ok(exit_code(&r) as u8)
            }
        }
        Command::GenScenario { name } => {
            let dir = cli.out.unwrap_or_else(|| PathBuf::from("."));
            let scenarios = if name == "all" {
                Scenario::ALL.to_vec()
            } else {
                match name.parse::<Scenario>() {
                    Ok(s) => vec![s],
                    Err(e) => {
                        eprintln!("error: {e}");
                        return Ok(2);
                    }
                }
            };
            for s in scenarios {
                let p = write_scenario(s, &dir)
                    .with_context(|| format!("writing scenario to {}", dir.display()))?;
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Validate { spec } => {
            let text = std::fs::read_to_string(&spec)
                .with_context(|| format!("reading {}", spec.display()))?;
            let doc: SpecDocument = match serde_json::from_str(&text) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("{}: not a spec document: {e}", spec.display());
                    return Ok(2);
                }
            };
            let cat = match &cli.catalog {
                Some(p) => load_catalog_file(p)?,
                None => load_catalog_file(&spec.parent().unwrap_or(Path::new(".")).join(&doc.catalog))?,
            };
            let findings = check_document(&doc, &cat);
            println!("{}", serde_json::to_string_pretty(&findings)?);
            Ok(if findings.is_empty() { 0 } else { 1 })
        }
        Command::Complete { prefix } => {
            for name in catalog(cli.catalog.as_deref())?.complete(&prefix) {
                println!("{name}");
            }
            Ok(0)
        }
        Command::Instructions { spec } => {
            let (spec, cat) = match load_spec_file(&spec, cli.catalog.as_deref()) {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(2);
                }
            };
            let dir = cli.out.unwrap_or_else(|| PathBuf::from("instructions"));
            for p in write_instruction_pages(&generate_instructions(&spec, &cat), &dir)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Serve { addr, log_dir } => {
            let cat = catalog(cli.catalog.as_deref())?;
            if let Some(d) = &log_dir {
                std::fs::create_dir_all(d)?;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let state = AppState::new(cat, out, log_dir);
                let recovered = state.recover().await?;
                if !recovered.is_empty() {
                    eprintln!("recovered {} sessions", recovered.len());
                }
                let listener = tokio::net::TcpListener::bind(&addr).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                serve(listener, state).await?;
                anyhow::Ok(())
            })?;
            Ok(0)
        }
    }
}
