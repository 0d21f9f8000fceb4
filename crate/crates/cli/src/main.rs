use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chondrosim::diagnostics::DiagnosticsRecord;
use chondrosim::oracle::{rk4_sampled, write_trajectory_csv, HomogeneousState};
use chondrosim::output::{read_snapshot_dir, CsvDiagnostics, DiagnosticsSink, Sinks, SnapshotDir};
use chondrosim::sweep::{
    compare_to_limit, run_limit, run_sweep, write_limit_csv, write_sweep_csv, SweepConfig,
};
use chondrosim::weakform::{
    residual_table, test_family, write_residual_csv, Trajectory, EQUATION_NAMES,
};
use chondrosim::{parse_config, run, Error, RunConfig};

#[derive(Parser)]
#[command(
    name = "chondrosim",
    version,
    about = "Haptotaxis-chemotaxis stem-cell differentiation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write diagnostics.csv and snapshots.
    Run {
        #[command(flatten)]
        common: Common,
        /// Exit with status 3 if any bound certificate fails.
        #[arg(long)]
        strict: bool,
    },
    /// Vanishing-damping sweep over several eps values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.25, 0.125, 0.0625])]
        eps_list: Vec<f64>,
    },
    /// Weak-form residuals of the snapshots left by a previous `run`.
    Weakcheck {
        #[command(flatten)]
        common: Common,
        /// Largest cosine mode index of the test functions.
        #[arg(long, default_value_t = 2)]
        psi_kmax: usize,
        /// Time-taper exponents of the test functions.
        #[arg(long, value_delimiter = ',', default_values_t = [2u32])]
        psi_m: Vec<u32>,
    },
    /// Homogeneous RK4 reference for uniform initial data.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Numerical(String),
    Certificate(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Certificate(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Certificate(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

/// Passes records on and remembers the first failed certificate.
struct CertWatch<'a> {
    inner: &'a mut dyn DiagnosticsSink,
    first_failure: Option<DiagnosticsRecord>,
}

impl DiagnosticsSink for CertWatch<'_> {
    fn record(&mut self, rec: &DiagnosticsRecord) -> chondrosim::Result<()> {
        if self.first_failure.is_none() && !rec.certificates.all() {
            self.first_failure = Some(rec.clone());
        }
        self.inner.record(rec)
    }
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), Failure> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let cfg = parse_config(&text).map_err(|e| Failure::Config(e.to_string()))?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&out)?;
    fs::write(out.join("config_echo.txt"), cfg.echo())?;
    Ok((cfg, out))
}

fn cmd_run(common: &Common, strict: bool) -> Result<(), Failure> {
    let (cfg, out) = load(common)?;
    let scenario = cfg.scenario()?;
    let mut csv = CsvDiagnostics::new(BufWriter::new(File::create(out.join("diagnostics.csv"))?))?;
    let mut watch = CertWatch {
        inner: &mut csv,
        first_failure: None,
    };
    let mut snaps = if cfg.output.snapshots {
        Some(SnapshotDir::create(&out.join("snapshots"))?)
    } else {
        None
    };
    let outcome = {
        let mut sinks = Sinks::diagnostics(&mut watch);
        if let Some(s) = snaps.as_mut() {
            sinks = sinks.with_snapshots(s);
        }
        run(
            &scenario.initial,
            &scenario.model,
            &scenario.control,
            &scenario.monitor,
            &mut sinks,
        )
    };
    let failed = watch.first_failure.take();
    csv.flush()?;
    let outcome = outcome?;
    println!(
        "t = {} reached in {} steps; {} records; M1 = {}, tau* = {}",
        outcome.final_state.t,
        outcome.steps,
        outcome.records,
        outcome.bounds.m1,
        outcome.bounds.tau_star
    );
    if let Some(rec) = failed {
        let c = rec.certificates;
        let msg = format!(
            "certificate failed at t = {}: c1_mass {}, tau_linf {}, nonneg {}",
            rec.t, c.c1_mass_ok, c.tau_linf_ok, c.nonneg_ok
        );
        if strict {
            return Err(Failure::Certificate(msg));
        }
        eprintln!("warning: {msg}");
    }
    Ok(())
}

fn cmd_sweep(common: &Common, eps_list: Vec<f64>) -> Result<(), Failure> {
    let (cfg, out) = load(common)?;
    let sweep = SweepConfig::new(eps_list, cfg.scenario()?)?;
    let report = run_sweep(&sweep)?;
    write_sweep_csv(
        BufWriter::new(File::create(out.join("sweep.csv"))?),
        &report,
    )?;
    let limit = run_limit(&sweep)?;
    let distances = compare_to_limit(&report, &limit)?;
    write_limit_csv(
        BufWriter::new(File::create(out.join("limit.csv"))?),
        &report,
        &distances,
    )?;
    for (j, d) in report.pair_distances.iter().enumerate() {
        println!(
            "eps {} vs {}: c1 {:e}, c2 {:e}, chi {:e}, tau {:e}",
            report.members[j].eps,
            report.members[j + 1].eps,
            d[0],
            d[1],
            d[2],
            d[3]
        );
    }
    Ok(())
}

fn cmd_weakcheck(common: &Common, kmax: usize, ms: &[u32]) -> Result<(), Failure> {
    let (cfg, out) = load(common)?;
    let dir = out.join("snapshots");
    if !dir.join("snap_index.csv").exists() {
        return Err(Failure::Config(format!(
            "no snapshots in {}; run with output.snapshots = true first",
            dir.display()
        )));
    }
    let snaps = read_snapshot_dir(&dir, cfg.grid()?)?;
    let traj = Trajectory::new(snaps, cfg.model())?;
    let family = test_family(cfg.grid.dim, kmax, ms, traj.horizon())?;
    let rows = residual_table(&traj, &family, 0)?;
    write_residual_csv(
        BufWriter::new(File::create(out.join("residuals.csv"))?),
        &rows,
    )?;
    for name in EQUATION_NAMES {
        let worst = rows
            .iter()
            .filter(|r| r.equation == name)
            .map(|r| r.residual)
            .fold(0.0, f64::max);
        println!(
            "{name}: max residual {worst:e} over {} test functions",
            family.len()
        );
    }
    Ok(())
}

fn cmd_oracle(common: &Common) -> Result<(), Failure> {
    let (cfg, out) = load(common)?;
    let Some([c1, c2, chi, tau]) = cfg.uniform_initial() else {
        return Err(Failure::Config(
            "oracle needs uniform initial data: set c10/c20/chi0/tau0.uniform".into(),
        ));
    };
    let y0 = HomogeneousState::new(0.0, c1, c2, chi, tau)?;
    let measure = cfg.grid()?.measure();
    let c = &cfg.control;
    let states = rk4_sampled(
        &y0,
        &cfg.model(),
        measure,
        cfg.oracle_dt,
        c.t_end,
        c.save_every,
    )?;
    write_trajectory_csv(
        BufWriter::new(File::create(out.join("oracle.csv"))?),
        &states,
    )?;
    let last = states.last().expect("initial state is always recorded");
    println!(
        "t = {}: c1 = {}, c2 = {}, chi = {}, tau = {}",
        last.t, last.c1, last.c2, last.chi, last.tau
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, strict } => cmd_run(&common, strict),
        Command::Sweep { common, eps_list } => cmd_sweep(&common, eps_list),
        Command::Weakcheck {
            common,
            psi_kmax,
            psi_m,
        } => cmd_weakcheck(&common, psi_kmax, &psi_m),
        Command::Oracle { common } => cmd_oracle(&common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
