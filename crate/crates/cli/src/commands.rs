//! Subcommand implementations. Each returns the files it wrote.

use std::path::{Path, PathBuf};

use jointlab_core::bundlenet::NetConfig;
use jointlab_core::evaluation::{allocation_grid, AllocationGrid, Estimate, GridFixture, RegretSummary, Setting, TableRow};
use jointlab_core::mechanism::{Mechanism, Optimal, Rvcg};
use jointlab_core::outcome::AuctionOutcome;
use jointlab_core::rng;
use jointlab_core::training::{train as train_net, HistoryRow, TrainState};
use jointlab_core::AuctionInstance;

use crate::config::RunConfig;
use crate::io::{self, Checkpoint};
use crate::parallel::{par_regret, par_revenues};
use crate::Error;

/// Seed purposes, so training data and evaluation samples never overlap.
const TRAIN_DATA: u64 = 10;
const EVAL_DATA: u64 = 20;

pub struct Context {
    pub out_dir: PathBuf,
    pub pool: rayon::ThreadPool,
    pub workers: usize,
    pub quiet: bool,
}

impl Context {
    pub fn new(out_dir: PathBuf, workers: usize) -> Result<Self, Error> {
        Ok(Self { out_dir, pool: crate::parallel::pool(workers)?, workers, quiet: true })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub struct Trained {
    pub checkpoint: Checkpoint,
    pub history: Vec<HistoryRow>,
    pub files: Vec<PathBuf>,
}

/// Trains BundleNet on `config.setting`, writing `checkpoint.json`,
/// `history.csv` and any intermediate `checkpoint_pass<N>.json`.
pub fn train(config: &RunConfig, ctx: &Context) -> Result<Trained, Error> {
    io::ensure_dir(&ctx.out_dir)?;
    let setting = config.setting();
    let tc = config.train_config();
    let data = setting.sample(tc.samples, rng::derive(config.seed, TRAIN_DATA), 0);
    let net = NetConfig {
        n_bundles: setting.n_bundles,
        ctrs: setting.ctrs.clone(),
        width: tc.width,
        hidden_layers: tc.hidden_layers,
    };
    let mut files = Vec::new();
    let mut failure = None;
    let every = config.output.checkpoint_every;
    let (state, history) = train_net(net, &tc, &data, &setting.prior, |state: &TrainState, hist: &[HistoryRow]| {
        if let Some(h) = hist.last() {
            ctx.log(format!(
                "pass {:>3} step {:>6} revenue {:.4} regret {:.5} loss {:.4} rho {}",
                state.pass, h.step, h.revenue, h.mean_regret, h.loss, state.rho
            ));
        }
        if every > 0 && state.pass.is_multiple_of(every as u64) && failure.is_none() {
            let path = ctx.path(&format!("checkpoint_pass{}.json", state.pass));
            let ckpt = Checkpoint { config: config.clone(), state: state.clone() };
            match io::write_json(&path, &ckpt) {
                Ok(()) => files.push(path),
                Err(e) => failure = Some(e),
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if !state.net.is_valid() {
        return Err(Error::Invariant("training produced non-finite parameters".into()));
    }
    let checkpoint = Checkpoint { config: config.clone(), state };
    let ckpt_path = ctx.path("checkpoint.json");
    io::write_json(&ckpt_path, &checkpoint)?;
    let hist_path = ctx.path("history.csv");
    io::write_history(&hist_path, &history)?;
    files.push(ckpt_path);
    files.push(hist_path);
    Ok(Trained { checkpoint, history, files })
}

/// Revenue over `eval.samples` and, if `eval.regret_samples > 0`, regret
/// on a prefix of the same samples.
pub fn evaluate(
    mech: &(dyn Mechanism + Sync),
    setting: &Setting,
    config: &RunConfig,
    ctx: &Context,
) -> Result<(TableRow, Option<RegretSummary>), Error> {
    let seed = rng::derive(config.seed, EVAL_DATA);
    let ev = &config.eval;
    let values = par_revenues(&ctx.pool, mech, setting, config.reserve, ev.samples, seed, ev.chunk)?;
    let est = Estimate::from_values(&values);
    let regret = if ev.regret_samples > 0 {
        let k = ev.regret_samples.min(ev.samples);
        // smaller work units for the expensive regret search
        let chunk = ev.chunk.min(64);
        let (rows, batch) = par_regret(&ctx.pool, mech, setting, config.reserve, k, seed, chunk, &ev.regret)?;
        Some(RegretSummary::from_rows(&rows, &batch))
    } else {
        None
    };
    let row = TableRow {
        setting: setting.label.clone(),
        mechanism: mech.name().to_string(),
        revenue: est.mean,
        stderr: est.stderr,
        regret: regret.as_ref().map(|r| r.per_bidder_2n),
        samples: est.samples,
        seed: config.seed,
    };
    Ok((row, regret))
}

pub struct Evaluated {
    pub row: TableRow,
    pub regret: Option<RegretSummary>,
    pub files: Vec<PathBuf>,
}

/// Evaluates a checkpoint: `eval.csv` and `regret.json`.
pub fn eval(checkpoint: &Checkpoint, config: &RunConfig, ctx: &Context) -> Result<Evaluated, Error> {
    io::ensure_dir(&ctx.out_dir)?;
    let setting = checkpoint.config.setting();
    let (row, regret) = evaluate(&checkpoint.state.net, &setting, config, ctx)?;
    let csv = ctx.path("eval.csv");
    io::write_table(&csv, std::slice::from_ref(&row))?;
    let mut files = vec![csv];
    if let Some(r) = &regret {
        let p = ctx.path("regret.json");
        io::write_json(&p, r)?;
        files.push(p);
    }
    Ok(Evaluated { row, regret, files })
}

/// The reference mechanisms of a setting: optimal (single slot only) and RVCG.
pub fn reference_rows(setting: &Setting, config: &RunConfig, ctx: &Context) -> Result<Vec<TableRow>, Error> {
    let mut rows = Vec::new();
    if setting.n_slots() == 1 {
        let opt = Optimal { prior: setting.prior };
        rows.push(evaluate(&opt, setting, config, ctx)?.0);
    }
    rows.push(evaluate(&Rvcg::default(), setting, config, ctx)?.0);
    Ok(rows)
}

/// `exact.csv` for the configured setting.
pub fn exact(config: &RunConfig, ctx: &Context) -> Result<(Vec<TableRow>, Vec<PathBuf>), Error> {
    io::ensure_dir(&ctx.out_dir)?;
    let rows = reference_rows(&config.setting(), config, ctx)?;
    let path = ctx.path("exact.csv");
    io::write_table(&path, &rows)?;
    Ok((rows, vec![path]))
}

/// `table.csv` over several settings; checkpoints join the setting they were
/// trained on.
pub fn table(settings: &[String], checkpoints: &[Checkpoint], config: &RunConfig, ctx: &Context) -> Result<(Vec<TableRow>, Vec<PathBuf>), Error> {
    io::ensure_dir(&ctx.out_dir)?;
    let mut rows = Vec::new();
    for label in settings {
        let setting = Setting::parse(label)?;
        ctx.log(format!("setting {label}"));
        rows.extend(reference_rows(&setting, config, ctx)?);
        for ck in checkpoints.iter().filter(|c| &c.config.setting == label) {
            rows.push(evaluate(&ck.state.net, &setting, config, ctx)?.0);
        }
    }
    let path = ctx.path("table.csv");
    io::write_table(&path, &rows)?;
    Ok((rows, vec![path]))
}

/// Allocation grid of the exact mechanism (with its analytic boundary) or of
/// a two-bundle single-slot checkpoint.
pub fn grid(
    fixture: GridFixture,
    fixed: f64,
    resolution: usize,
    checkpoint: Option<&Checkpoint>,
    config: &RunConfig,
    ctx: &Context,
) -> Result<(AllocationGrid, Vec<PathBuf>), Error> {
    io::ensure_dir(&ctx.out_dir)?;
    let prior = config.setting().prior;
    let (grid, tag) = match checkpoint {
        Some(ck) => {
            let net = &ck.state.net;
            if net.n_bundles() != 2 || net.n_slots() != 1 {
                return Err(Error::Config("grid exports need a two-bundle single-slot checkpoint".into()));
            }
            (allocation_grid(net, fixture, fixed, resolution, None)?, "bundlenet")
        }
        None => {
            let opt = Optimal { prior };
            (allocation_grid(&opt, fixture, fixed, resolution, Some(&prior))?, "optimal")
        }
    };
    let stem = format!("grid_{tag}_{}_{fixed}", fixture.name());
    let path = ctx.path(&format!("{stem}.csv"));
    let boundary = ctx.path(&format!("{stem}_boundary.csv"));
    io::write_grid(&path, &boundary, &grid)?;
    let mut files = vec![path];
    if grid.boundary.is_some() {
        files.push(boundary);
    }
    Ok((grid, files))
}

/// Runs a checkpoint on one serialized instance.
pub fn forward(checkpoint: &Checkpoint, instance: &Path) -> Result<AuctionOutcome, Error> {
    let inst: AuctionInstance = io::read_json(instance)?;
    let out = checkpoint.state.net.run(&inst)?;
    out.check(&inst, 1e-9).map_err(|v| Error::Invariant(format!("{v:?}")))?;
    Ok(out)
}
