use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use weakhard::config::load_config;
use weakhard::perfsim::{draw_sample, simulate_closed_loop};
use weakhard::scheduler::{place_controller_priority, run_to_steady_state, Placement};
use weakhard::sweep::{analyze_period, emit_csv, format_float, run_sweep};
use weakhard::taskmodel::assign_rm_priorities;
use weakhard::{SweepConfig, Time};

/// Weakly-hard control/scheduling co-design sweeps.
#[derive(Parser)]
#[command(name = "weakhard", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze every controller period in the configured range and write CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Output CSV; defaults to the config's `output`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override `sweep.norm_bound`.
        #[arg(long)]
        norm_bound: Option<f64>,
        /// Restrict the range, e.g. `--from 100 --to 150`.
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        to: Option<u64>,
        /// Print why each incomplete row stopped early.
        #[arg(long, short)]
        verbose: bool,
    },
    /// Report placement, miss pattern, delays, gain and verdict for one period.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        period: Option<u64>,
        #[arg(long)]
        norm_bound: Option<f64>,
        /// Also dump the first sample's trajectory as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Dump the job trace up to the end of the steady hyper-period.
    Schedule {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        period: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a configuration and print a summary.
    Check {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, short)]
    config: PathBuf,
    /// Override `simulation.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<SweepConfig> {
        let mut cfg = load_config(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.sim.seed = seed;
        }
        Ok(cfg)
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn pick_period(cfg: &SweepConfig, period: Option<u64>) -> Result<Time> {
    match period.map(Time::from_ms).or(cfg.controller_period) {
        Some(t) if t > Time::ZERO => Ok(t),
        Some(_) => bail!("period must be positive"),
        None => bail!("no --period given and the config has no controller.period_ms"),
    }
}

fn sweep(
    cfg: &mut SweepConfig,
    out: Option<PathBuf>,
    from: Option<u64>,
    to: Option<u64>,
    verbose: bool,
) -> Result<()> {
    if let Some(f) = from {
        cfg.period_min_ms = f;
    }
    if let Some(t) = to {
        cfg.period_max_ms = t;
    }
    if cfg.period_min_ms == 0 || cfg.period_min_ms > cfg.period_max_ms {
        bail!("empty period range {}..={}", cfg.period_min_ms, cfg.period_max_ms);
    }
    let rows = run_sweep(cfg);
    let mut incomplete = 0;
    for row in &rows {
        if let Some(note) = &row.note {
            incomplete += 1;
            if verbose {
                eprintln!("T_c = {} ms: {note}", row.period_ms);
            }
        }
    }
    if incomplete > 0 && !verbose {
        eprintln!("{incomplete} of {} periods stopped early (use --verbose for details)", rows.len());
    }
    let out = out.or_else(|| cfg.output.clone());
    emit_csv(&rows, open_out(out.as_deref())?).context("writing CSV")?;
    Ok(())
}

fn analyze(cfg: &SweepConfig, period: Time, trajectory: Option<PathBuf>) -> Result<()> {
    let a = analyze_period(cfg, period);
    let mut o = io::stdout().lock();
    writeln!(o, "period            {period}")?;
    writeln!(o, "utilization       {:.4}", a.utilization)?;
    match &a.task_set {
        Some(ts) => {
            let order: Vec<String> = ts
                .by_priority()?
                .iter()
                .map(|t| format!("{}({})", t.id, t.priority.unwrap_or(0)))
                .collect();
            writeln!(o, "priority order    {}", order.join(" > "))?;
        }
        None => writeln!(o, "placement         infeasible")?,
    }
    if let Some(v) = &a.violated {
        writeln!(o, "violated task     {v}")?;
    }
    if let Some(p) = &a.pattern {
        let bits: String = p.misses.bits.iter().map(|&m| if m { '1' } else { '0' }).collect();
        let delays: Vec<String> = p.delays.delays.iter().map(usize::to_string).collect();
        writeln!(o, "hyper-period      {}", p.hyper_period)?;
        writeln!(o, "steady window     {}", p.steady.window)?;
        writeln!(o, "worst response    {}", p.worst_response)?;
        writeln!(o, "miss pattern      {bits}")?;
        writeln!(o, "delays            [{}]", delays.join(","))?;
    }
    let row = &a.row;
    if let (Some(m), Some(p_hat), Some(n_c)) = (row.m_min, row.p_hat, row.n_c) {
        writeln!(o, "(m, K)            ({m}, {})", row.k)?;
        writeln!(o, "p_hat             {p_hat}")?;
        writeln!(o, "N_c               {n_c}")?;
    }
    if let Some(g) = &a.gain {
        writeln!(o, "ratio             {}", format_float(g.ratio))?;
        writeln!(o, "gain norm         {} (bound {})", format_float(g.achieved_norm), g.norm_bound)?;
    }
    if let Some(v) = &a.verdict {
        writeln!(o, "max rho           {} at k = {}", format_float(v.max_spectral_radius), v.worst_k)?;
    }
    if let Some(s) = row.stable {
        writeln!(o, "stable            {s}")?;
    }
    if let Some(j) = row.mean_cost {
        writeln!(o, "mean J_c          {}", format_float(j))?;
    }
    if let Some(note) = &row.note {
        writeln!(o, "note              {note}")?;
    }

    if let Some(path) = trajectory {
        match (&a.gain, &a.pattern) {
            (Some(g), Some(p)) => {
                let (x0, phase) = draw_sample(&cfg.sim, p.delays.jobs_per_hyper_period(), 0);
                let tr = simulate_closed_loop(&cfg.plant, period, &g.f, &p.delays, &x0, phase, &cfg.sim)?;
                tr.write_csv(&cfg.plant.state_labels, open_out(Some(&path))?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            _ => eprintln!("no gain for this period; trajectory not written"),
        }
    }
    Ok(())
}

fn schedule(cfg: &SweepConfig, period: Time, out: Option<PathBuf>) -> Result<()> {
    let regular = assign_rm_priorities(&cfg.regular);
    // Without a feasible placement, trace the lowest-priority insertion.
    let tasks = match place_controller_priority(&regular, &cfg.controller_task(period))? {
        Placement::Feasible(ts) => ts.by_priority()?,
        Placement::Infeasible { .. } => {
            let mut tasks = regular;
            let n = tasks.len() as u32;
            tasks.push(cfg.controller_task(period).with_priority(n + 1));
            tasks
        }
    };
    match run_to_steady_state(&tasks) {
        Ok(steady) => {
            steady.trace.write_csv(open_out(out.as_deref())?).context("writing trace")?;
            eprintln!(
                "steady window {} of hyper-period {}",
                steady.window, steady.hyper_period
            );
        }
        Err(e) => eprintln!("T_c = {period}: {e}"),
    }
    Ok(())
}

fn check(cfg: &SweepConfig) -> Result<()> {
    let mut o = io::stdout().lock();
    let regular_u: f64 = cfg.regular.iter().map(|t| t.utilization()).sum();
    writeln!(o, "regular tasks     {}", cfg.regular.len())?;
    for t in assign_rm_priorities(&cfg.regular) {
        writeln!(o, "  {:<8} T = {:<8} C = {:<8} D = {}", t.id, t.period, t.wcet, t.deadline)?;
    }
    writeln!(o, "regular U         {regular_u:.4}")?;
    writeln!(
        o,
        "controller        {} C = {} (adds {}/T_c)",
        cfg.controller_id,
        cfg.controller_wcet,
        cfg.controller_wcet
    )?;
    writeln!(
        o,
        "periods           {}..={} ms step {} ({} points)",
        cfg.period_min_ms,
        cfg.period_max_ms,
        cfg.period_step_ms,
        cfg.periods().count()
    )?;
    let lo = Time::from_ms(cfg.period_min_ms);
    let hi = Time::from_ms(cfg.period_max_ms);
    writeln!(o, "total U           {:.4} at {lo} .. {:.4} at {hi}", cfg.utilization(lo), cfg.utilization(hi))?;
    writeln!(o, "plant             {} states, {} inputs", cfg.plant.states(), cfg.plant.inputs())?;
    writeln!(o, "K                 {}", cfg.k)?;
    writeln!(o, "norm bound        {}", cfg.norm_bound)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep { common, out, norm_bound, from, to, verbose } => {
            let mut cfg = common.load()?;
            if let Some(b) = norm_bound {
                cfg.norm_bound = b;
            }
            sweep(&mut cfg, out, from, to, verbose)
        }
        Command::Analyze { common, period, norm_bound, trajectory } => {
            let mut cfg = common.load()?;
            if let Some(b) = norm_bound {
                cfg.norm_bound = b;
            }
            let period = pick_period(&cfg, period)?;
            analyze(&cfg, period, trajectory)
        }
        Command::Schedule { common, period, out } => {
            let cfg = common.load()?;
            let period = pick_period(&cfg, period)?;
            schedule(&cfg, period, out)
        }
        Command::Check { common } => check(&common.load()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
