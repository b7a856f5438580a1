use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use jointlab::commands::{self, Context};
use jointlab::config::{Overrides, RunConfig};
use jointlab::io::{self, Checkpoint, Manifest};
use jointlab::{parallel, selftest, Error};
use jointlab_core::evaluation::GridFixture;

#[derive(Parser)]
#[command(name = "jointlab", version, about = "Joint-auction mechanisms: exact, VCG baselines and BundleNet")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the number of evaluation samples.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Overrides the configured setting, e.g. U_2, U_5x5, LN_8x5.
    #[arg(long, global = true)]
    setting: Option<String>,
    /// Worker threads for evaluation.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Suppress progress on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train BundleNet on the configured setting.
    Train,
    /// Revenue and regret of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Optimal (single slot) and RVCG revenue on the configured setting.
    Exact,
    /// Reference rows for several settings, plus any checkpoints.
    Table {
        #[arg(long, value_delimiter = ',', required = true)]
        settings: Vec<String>,
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
    },
    /// Win probability of the first bundle over a grid of two free bids.
    Grid {
        /// shared_supplier or disjoint_pairs.
        #[arg(long, value_parser = parse_fixture)]
        fixture: GridFixture,
        /// Bid held fixed: the shared supplier's, or both second-pair bids.
        #[arg(long)]
        fixed: f64,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        /// Two-bundle single-slot checkpoint; the exact mechanism when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Fast property checks.
    Selftest,
    /// Run a checkpoint on one instance given as JSON.
    Forward {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        instance: PathBuf,
    },
}

fn parse_fixture(s: &str) -> Result<GridFixture, String> {
    GridFixture::parse(s).ok_or_else(|| format!("unknown fixture {s:?}"))
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides { setting: cli.setting.clone(), seed: cli.seed, samples: cli.samples }
}

/// The file config with overrides, or defaults when only `--setting` and
/// `--seed` are given.
fn run_config(cli: &Cli) -> Result<RunConfig, Error> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => match (&cli.setting, cli.seed) {
            (Some(s), Some(seed)) => RunConfig::new(s, seed),
            _ => return Err(Error::Config("give --config, or both --setting and --seed".into())),
        },
    };
    base.apply(&overrides(cli))
}

/// Evaluation settings for commands that read a checkpoint: the checkpoint's
/// config, with the file and flags layered on top when given.
fn checkpoint_config(cli: &Cli, ck: &Checkpoint) -> Result<RunConfig, Error> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => ck.config.clone(),
    };
    base.apply(&Overrides { setting: None, ..overrides(cli) })
}

fn finish(cli: &Cli, ctx: &Context, name: &str, config: &RunConfig, start: Instant, mut files: Vec<PathBuf>) -> Result<(), Error> {
    let path = cli.out_dir.join(format!("{name}.manifest.json"));
    let manifest = Manifest::new(name, config, start.elapsed(), ctx.workers, &files);
    io::write_json(&path, &manifest)?;
    files.push(path);
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn print_rows(rows: &[jointlab_core::evaluation::TableRow]) {
    for r in rows {
        let regret = r.regret.map_or_else(|| "-".to_string(), |x| format!("{x:.2e}"));
        eprintln!("{:<10} {:<12} {:.4} ± {:.4}  regret {regret}", r.setting, r.mechanism, r.revenue, r.stderr);
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let workers = cli.workers.unwrap_or_else(parallel::default_workers);
    let mut ctx = Context::new(cli.out_dir.clone(), workers)?;
    ctx.quiet = cli.quiet;
    let start = Instant::now();
    match &cli.command {
        Cmd::Train => {
            let config = run_config(cli)?;
            let trained = commands::train(&config, &ctx)?;
            finish(cli, &ctx, "train", &config, start, trained.files)
        }
        Cmd::Eval { checkpoint } => {
            let ck = Checkpoint::load(checkpoint)?;
            let config = checkpoint_config(cli, &ck)?;
            let ev = commands::eval(&ck, &config, &ctx)?;
            if !cli.quiet {
                print_rows(std::slice::from_ref(&ev.row));
            }
            finish(cli, &ctx, "eval", &config, start, ev.files)
        }
        Cmd::Exact => {
            let config = run_config(cli)?;
            let (rows, files) = commands::exact(&config, &ctx)?;
            if !cli.quiet {
                print_rows(&rows);
            }
            finish(cli, &ctx, "exact", &config, start, files)
        }
        Cmd::Table { settings, checkpoint } => {
            let mut config = match (&cli.config, cli.seed) {
                (Some(_), _) => run_config(cli)?,
                (None, Some(seed)) => RunConfig::new(&settings[0], seed).apply(&overrides(cli))?,
                (None, None) => return Err(Error::Config("give --config or --seed".into())),
            };
            if cli.setting.is_none() {
                config.setting = settings[0].clone();
            }
            let cks = checkpoint.iter().map(|p| Checkpoint::load(p)).collect::<Result<Vec<_>, _>>()?;
            let (rows, files) = commands::table(settings, &cks, &config, &ctx)?;
            if !cli.quiet {
                print_rows(&rows);
            }
            finish(cli, &ctx, "table", &config, start, files)
        }
        Cmd::Grid { fixture, fixed, resolution, checkpoint } => {
            let ck = checkpoint.as_deref().map(Checkpoint::load).transpose()?;
            let config = match (&ck, &cli.config, &cli.setting) {
                (Some(ck), _, _) => checkpoint_config(cli, ck)?,
                // grids draw no samples, so the seed is optional here
                (None, None, setting) => RunConfig::new(setting.as_deref().unwrap_or("U_2"), cli.seed.unwrap_or(0)),
                (None, Some(_), _) => run_config(cli)?,
            };
            if *resolution < 2 || !(0.0..=1.0).contains(fixed) {
                return Err(Error::Config("grid needs resolution >= 2 and fixed in [0, 1]".into()));
            }
            let (_, files) = commands::grid(*fixture, *fixed, *resolution, ck.as_ref(), &config, &ctx)?;
            finish(cli, &ctx, "grid", &config, start, files)
        }
        Cmd::Selftest => {
            let checks = selftest::run();
            let mut failed = 0;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(Error::Invariant(format!("{failed} selftest checks failed")));
            }
            Ok(())
        }
        Cmd::Forward { checkpoint, instance } => {
            let ck = Checkpoint::load(checkpoint)?;
            let out = commands::forward(&ck, Path::new(instance))?;
            println!("{}", serde_json::to_string_pretty(&out).expect("outcome serializes"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
