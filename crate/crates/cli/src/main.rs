use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use proxcmo::gains::Theorem;
use proxcmo_cli::config::{
    ExperimentKind, FlagOverrides, GainOverrides, IntegratorOverrides, RunConfig,
};
use proxcmo_cli::{report, run, run_exit_code, CliError};

#[derive(Parser)]
#[command(
    name = "proxcmo",
    version,
    about = "Run proximal controlled-multiplier experiments and gain certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write trajectories plus a summary JSON.
    Run(RunArgs),
    /// Evaluate a convergence certificate (same as `run --experiment certify`).
    Certify(RunArgs),
    /// Tabulate one or more summary files.
    Report(ReportArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<ExperimentKind>,
    /// Method tag; repeat or separate with commas.
    #[arg(long = "method", value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Output directory (default: $PROXCMO_OUT_DIR, then the config, then ./proxcmo-out).
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    kp: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    ki: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    k1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    k2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    k3: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,

    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    max_step: Option<f64>,
    #[arg(long)]
    min_step: Option<f64>,
    /// Residual at which integration stops; 0 disables the stop.
    #[arg(long)]
    stop_residual: Option<f64>,
    #[arg(long)]
    record_stride: Option<usize>,

    /// Lasso unknowns.
    #[arg(long)]
    n: Option<usize>,
    /// Lasso measurements.
    #[arg(long)]
    m: Option<usize>,
    /// Lasso sparsity.
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    /// Sysid: replace the measurement by a noise-free least-squares fit.
    #[arg(long)]
    noise_free: bool,

    #[arg(long)]
    theorem: Option<Theorem>,
    #[arg(long, allow_hyphen_values = true)]
    mf: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    lf: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<f64>,
}

impl RunArgs {
    fn flags(&self) -> FlagOverrides {
        FlagOverrides {
            experiment: self.experiment,
            methods: self.methods.clone(),
            seed: self.seed,
            runs: self.runs,
            gains: GainOverrides {
                mu: self.mu,
                kp: self.kp,
                ki: self.ki,
                k1: self.k1,
                k2: self.k2,
                k3: self.k3,
                gamma: self.gamma,
            },
            integrator: IntegratorOverrides {
                t_end: self.t_end,
                abs_tol: self.abs_tol,
                rel_tol: self.rel_tol,
                max_step: self.max_step,
                min_step: self.min_step,
                stop_residual: self.stop_residual,
                record_stride: self.record_stride,
            },
            n: self.n,
            m: self.m,
            s: self.s,
            rho: self.rho,
            noise_free: self.noise_free,
            theorem: self.theorem,
            mf: self.mf,
            lf: self.lf,
            a1: self.a1,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Args)]
struct ReportArgs {
    /// Summary JSON files.
    summaries: Vec<PathBuf>,
    /// CSV destination (default: report.csv in the output directory).
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_command(args: RunArgs, force_certify: bool) -> Result<i32, CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let mut flags = args.flags();
    if force_certify {
        if flags
            .experiment
            .is_some_and(|e| e != ExperimentKind::Certify)
        {
            return Err(CliError::Config(
                "`certify` does not take another --experiment".into(),
            ));
        }
        flags.experiment = Some(ExperimentKind::Certify);
    }
    cfg.merge_flags(&flags);
    let out = cfg.resolve_out_dir(args.out.as_deref());
    let summary = run::cmd_run(&cfg, &out)?;
    if let Some(cert) = &summary.certificate {
        println!(
            "{}",
            serde_json::to_string_pretty(cert).expect("certificate serializes")
        );
    } else {
        let labelled = vec![(run::summary_file_name(summary.experiment), summary.clone())];
        print!("{}", report::build_report(&labelled)?.to_text());
    }
    eprintln!(
        "wrote {}",
        out.join(run::summary_file_name(summary.experiment))
            .display()
    );
    if summary.integrator_failures > 0 {
        eprintln!(
            "{} integrator failure(s); see the summary",
            summary.integrator_failures
        );
    }
    Ok(run_exit_code(&summary))
}

fn report_command(args: ReportArgs) -> Result<i32, CliError> {
    if args.summaries.is_empty() {
        return Err(CliError::Config(
            "report needs at least one summary file".into(),
        ));
    }
    let csv = args.csv.unwrap_or_else(|| {
        RunConfig::default()
            .resolve_out_dir(args.out.as_deref())
            .join("report.csv")
    });
    let r = report::cmd_report(&args.summaries, &csv)?;
    print!("{}", r.to_text());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => run_command(a, false),
        Command::Certify(a) => run_command(a, true),
        Command::Report(a) => report_command(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
