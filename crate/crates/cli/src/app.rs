use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dualaoi_core::{
    cs_mean_aoi, insertion_search, kkt_residual, optimize_ps, pac_build, ps_closed_form,
    ps_mean_aoi_numeric, ps_weighted_aoi, schedulers, simulate, simulate_replication, waterfill,
    AoiError, BinaryPattern, CyclicSchedule, Horizon, Pmf, Policy, SimConfig, SystemSpec,
    DEFAULT_EPSILON,
};

use crate::runner::{run_scenario, RunOverrides, DEFAULT_HORIZON, DEFAULT_SEED};
use crate::scenario::Scenario;
use crate::table::emit_csv;
use crate::timing::{emit_timing_csv, time_policies};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "dualaoi",
    version,
    about = "Mean AoI analysis, scheduling and simulation for sources with dedicated and shared servers"
)]
pub struct Cli {
    /// CSV destination (run, time-policies); stdout when absent
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Simulation seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Simulated time per replication
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Simulation replications
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Suppress summaries on stderr
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    /// Shared-server rate
    #[arg(long)]
    pub mu: f64,
    /// Dedicated-server rates, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub mu_dedicated: Vec<f64>,
    /// Weights, comma separated (default: equal)
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Rescale weights to sum to one
    #[arg(long)]
    pub normalize: bool,
}

impl SpecArgs {
    fn spec(&self) -> Result<SystemSpec, CliError> {
        let n = self.mu_dedicated.len();
        let w = self
            .weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / n as f64; n]);
        let r = if self.normalize || self.weights.is_none() {
            SystemSpec::relaxed(self.mu, self.mu_dedicated.clone(), w)
        } else {
            SystemSpec::new(self.mu, self.mu_dedicated.clone(), w)
        };
        r.map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mean AoI of one source under a probabilistic scheduler
    AnalyzePs {
        #[arg(long)]
        mu_n: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        p: f64,
    },
    /// Mean AoI of one source under a binary cyclic pattern (1 = serve, 2 = vacation)
    AnalyzeCs {
        #[arg(long)]
        mu_n: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        pattern: Vec<u8>,
    },
    /// Optimal probabilistic scheduler
    Optimize {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
    },
    /// Insertion-search cyclic schedule
    BuildIs {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = schedulers::DEFAULT_EXPLORATION)]
        exploration: usize,
        #[arg(long, default_value_t = schedulers::DEFAULT_MAX_LEN)]
        max_len: usize,
    },
    /// Probability-aided cyclic schedule
    BuildPac {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = schedulers::DEFAULT_MAX_PERIOD)]
        max_period: usize,
    },
    /// Simulate a pmf or a cyclic schedule
    Simulate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_delimiter = ',', conflicts_with = "schedule")]
        pmf: Option<Vec<f64>>,
        /// 1-based sources, comma separated
        #[arg(long, value_delimiter = ',')]
        schedule: Option<Vec<usize>>,
        /// Write the event log of replication 0 here
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
    /// Run a scenario file and write CSV
    Run { scenario: PathBuf },
    /// Time PS-opt, PAC and IS construction for a family of systems
    TimePolicies {
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 4, 6, 8, 10])]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 12)]
        is_cap: usize,
    },
}

fn rt(e: AoiError) -> CliError {
    CliError::Runtime(e.to_string())
}

fn cfg(e: AoiError) -> CliError {
    CliError::Config(e.to_string())
}

fn list(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn csv_sink<'a>(
    out: &Option<PathBuf>,
    stdout: &'a mut dyn Write,
) -> Result<Box<dyn Write + 'a>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::Runtime(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(stdout),
    })
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Runtime(e.to_string());
    match cli.command {
        Command::AnalyzePs { mu_n, mu, p } => {
            let closed = ps_closed_form(mu_n, mu, p).map_err(cfg)?;
            let numeric = ps_mean_aoi_numeric(mu_n, mu, p).map_err(rt)?;
            writeln!(stdout, "closed_form\t{closed}\nnumeric\t{numeric}").map_err(io)?;
        }
        Command::AnalyzeCs { mu_n, mu, pattern } => {
            let mask = pattern
                .iter()
                .map(|&c| match c {
                    1 => Ok(true),
                    2 => Ok(false),
                    other => Err(CliError::Config(format!(
                        "pattern entry {other}: use 1 (serve) or 2 (vacation)"
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let p = BinaryPattern::from_mask(&mask).map_err(cfg)?;
            let v = cs_mean_aoi(&p, mu_n, mu).map_err(|e| match e {
                AoiError::InvalidRate { .. } => cfg(e),
                other => rt(other),
            })?;
            writeln!(stdout, "mean_aoi\t{v}").map_err(io)?;
        }
        Command::Optimize { spec, epsilon } => {
            let spec = spec.spec()?;
            let state = waterfill(&spec, epsilon).map_err(cfg)?;
            let pmf = optimize_ps(&spec, epsilon).map_err(rt)?;
            writeln!(
                stdout,
                "p\t{}\nweighted_aoi\t{}\nlambda\t{}\niterations\t{}\nkkt_residual\t{:e}",
                list(pmf.probs()),
                ps_weighted_aoi(&spec, &pmf).map_err(rt)?,
                state.lambda,
                state.iterations,
                kkt_residual(&spec, &pmf).map_err(rt)?
            )
            .map_err(io)?;
        }
        Command::BuildIs {
            spec,
            exploration,
            max_len,
        } => {
            let spec = spec.spec()?;
            if max_len == 0 {
                return Err(CliError::Config("--max-len must be >= 1".into()));
            }
            let r = insertion_search(&spec, exploration, max_len).map_err(rt)?;
            writeln!(
                stdout,
                "schedule\t{}\nweighted_aoi\t{}\niterations\t{}",
                r.schedule, r.weighted_aoi, r.iterations
            )
            .map_err(io)?;
            for t in &r.trace {
                writeln!(
                    stdout,
                    "trace\t{}\t{}\t{}",
                    t.iteration, t.schedule, t.value
                )
                .map_err(io)?;
            }
        }
        Command::BuildPac { spec, max_period } => {
            let spec = spec.spec()?;
            let opt = optimize_ps(&spec, DEFAULT_EPSILON).map_err(rt)?;
            let r = pac_build(&spec, &opt, max_period).map_err(cfg)?;
            writeln!(
                stdout,
                "schedule\t{}\nslot_counts\t{:?}\nweighted_aoi\t{}\nps_opt_weighted_aoi\t{}",
                r.schedule,
                r.slot_counts,
                r.weighted_aoi,
                ps_weighted_aoi(&spec, &opt).map_err(rt)?
            )
            .map_err(io)?;
        }
        Command::Simulate {
            spec,
            pmf,
            schedule,
            event_log,
        } => {
            let spec = spec.spec()?;
            let n = spec.num_sources();
            let policy = match (pmf, schedule) {
                (Some(p), None) => Policy::Pmf(Pmf::new(p).map_err(cfg)?),
                (None, Some(s)) => Policy::Schedule(CyclicSchedule::new(s, n).map_err(cfg)?),
                (None, None) => Policy::Pmf(optimize_ps(&spec, DEFAULT_EPSILON).map_err(rt)?),
                (Some(_), Some(_)) => unreachable!("clap rejects both"),
            };
            let mut config = SimConfig::new(
                spec,
                policy,
                Horizon::Time(cli.horizon.unwrap_or(DEFAULT_HORIZON)),
                cli.seed.unwrap_or(DEFAULT_SEED),
            );
            if let Some(r) = cli.reps {
                config.replications = r;
            }
            config.validate().map_err(cfg)?;
            if let Some(path) = event_log {
                let mut f = BufWriter::new(File::create(&path).map_err(|e| {
                    CliError::Runtime(format!("cannot create {}: {e}", path.display()))
                })?);
                simulate_replication(&config, 0, Some(&mut f)).map_err(rt)?;
                f.flush().map_err(io)?;
            }
            let est = simulate(&config).map_err(rt)?;
            writeln!(stdout, "source\tsim_aoi\tci_halfwidth").map_err(io)?;
            for (i, (m, h)) in est.per_source_aoi.iter().zip(&est.ci_halfwidth).enumerate() {
                writeln!(stdout, "{}\t{m}\t{h}", i + 1).map_err(io)?;
            }
            writeln!(
                stdout,
                "*\t{}\t{}",
                est.weighted_aoi, est.weighted_ci_halfwidth
            )
            .map_err(io)?;
            if !cli.quiet {
                eprintln!(
                    "{} events over {} replications",
                    est.events, config.replications
                );
            }
        }
        Command::Run { scenario } => {
            let sc = Scenario::from_path(&scenario)?;
            let ov = RunOverrides {
                seed: cli.seed,
                horizon: cli.horizon,
                replications: cli.reps,
            };
            if ov.horizon.is_some_and(|h| !(h.is_finite() && h > 0.0)) {
                return Err(CliError::Config("--horizon must be positive".into()));
            }
            if ov.replications == Some(0) {
                return Err(CliError::Config("--reps must be >= 1".into()));
            }
            let rows = run_scenario(&sc, &ov)?;
            emit_csv(&rows, csv_sink(&cli.out, stdout)?)?;
            if !cli.quiet {
                eprintln!("{}: {} rows", sc.name, rows.len());
            }
        }
        Command::TimePolicies { ns, is_cap } => {
            let rows = time_policies(&ns, is_cap)?;
            emit_timing_csv(&rows, csv_sink(&cli.out, stdout)?)?;
        }
    }
    Ok(())
}

/// Parse `args`, run the command and return the process exit code
/// (0 success, 1 configuration error, 2 runtime error).
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("dualaoi: {e}");
            e.exit_code()
        }
    }
}
