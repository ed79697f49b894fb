use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use todo_patcher::dataset::BlockGeometry;
use todo_patcher::pipeline::{
    compare_geometries, load_report, render_report, resolve_config_path, write_report, MineSummary, Overrides,
    Pipeline, PipelineError, RunConfig, RunLock, Stage, StageStatus,
};

/// Mine TODO comments, learn their code blocks and find methods missing them.
#[derive(Parser)]
#[command(name = "todo-patcher", version)]
struct Cli {
    /// Run config (JSON); defaults to $TODO_PATCHER_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    marker: Option<String>,
    /// Fixed detection threshold instead of the tuned one.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Block geometry, e.g. `cen=+1,con=2`.
    #[arg(long, global = true)]
    geometry: Option<BlockGeometry>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Mine,
    Extract,
    BuildDataset,
    Train,
    Tune,
    Detect,
    Patch,
    Evaluate,
    /// Print the results tables of an evaluated run.
    Report,
    /// Every stage from `mine` to `evaluate`, then the report.
    Pipeline,
    /// The full pipeline once per block geometry variant.
    CompareGeometry,
}

fn config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let path = resolve_config_path(cli.config.as_deref())?;
    let mut cfg = RunConfig::load(&path)?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        marker: cli.marker.clone(),
        threshold: cli.threshold,
        geometry: cli.geometry,
        workers: cli.workers,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn print_status(stage: Stage, status: StageStatus) {
    match status {
        StageStatus::Ran => println!("{stage}: done"),
        StageStatus::UpToDate => println!("{stage}: up to date"),
    }
}

fn report(cfg: &RunConfig) -> Result<(), PipelineError> {
    let _lock = RunLock::acquire(&cfg.output_dir)?;
    let r = load_report(&cfg.output_dir)?;
    write_report(&cfg.output_dir, &r)?;
    print!("{}", render_report(&r));
    Ok(())
}

/// Repositories that failed to mine in an otherwise finished run.
fn mine_failures(cfg: &RunConfig) -> usize {
    std::fs::read_to_string(cfg.output_dir.join("mine/summary.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<MineSummary>(&t).ok())
        .map_or(0, |s| {
            for (repo, e) in &s.failed {
                eprintln!("warning: {repo} was not mined: {e}");
            }
            s.failed.len()
        })
}

/// `Ok(true)` when results were written but some repositories failed.
fn run(cli: Cli) -> Result<bool, PipelineError> {
    let cfg = config(&cli)?;
    let stage = match cli.command {
        Command::Mine => Stage::Mine,
        Command::Extract => Stage::Extract,
        Command::BuildDataset => Stage::BuildDataset,
        Command::Train => Stage::Train,
        Command::Tune => Stage::Tune,
        Command::Detect => Stage::Detect,
        Command::Patch => Stage::Patch,
        Command::Evaluate => Stage::Evaluate,
        Command::Report => return report(&cfg).map(|_| false),
        Command::Pipeline => {
            {
                let mut p = Pipeline::open(cfg.clone())?;
                for (stage, status) in p.run_all()? {
                    print_status(stage, status);
                }
            }
            report(&cfg)?;
            return Ok(mine_failures(&cfg) > 0);
        }
        Command::CompareGeometry => {
            let cmp = compare_geometries(&cfg, &BlockGeometry::variants())?;
            print!("{}", cmp.render());
            return Ok(false);
        }
    };
    let mut p = Pipeline::open(cfg.clone())?;
    print_status(stage, p.run(stage)?);
    Ok(stage == Stage::Mine && mine_failures(&cfg) > 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
