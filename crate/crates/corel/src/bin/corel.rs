use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use corel::diagnostics::{pe_curve, quadform_lb_mc};
use corel::latent_id::IdMethod;
use corel::lqg_model::{check_assumptions, LqgModel};
use corel::matstat::rng_from_seed;
use corel::model_io::{load_model, LoadError};
use corel::pipeline::{default_history_len, run_corel, run_sweep, EvalMode, RunConfig, RunRecord};
use corel::repr_learn::DEFAULT_RANK_RATIO;

#[derive(Parser)]
#[command(name = "corel", version, about = "Cost-driven state representation learning for LQG control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing assumptions of a model file
    Check {
        #[arg(long)]
        model: PathBuf,
    },
    /// One learning run; writes a run-record JSON file
    Run {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cartesian sweep over methods × T × seeds; writes a CSV
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "T", value_delimiter = ',', required = true)]
        t: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<IdMethod>,
        #[arg(long = "H", default_value = "auto")]
        h: String,
        #[arg(long = "sigma-u", default_value_t = 1.0)]
        sigma_u: f64,
        #[arg(long = "d-x", default_value = "auto")]
        d_x: String,
        /// Cap on concurrent sweep cells (default: hardware parallelism)
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Diagnostics reports
    Diag {
        #[command(subcommand)]
        what: DiagCommand,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long = "T")]
    t: usize,
    #[arg(long = "H", default_value = "auto")]
    h: String,
    #[arg(long = "sigma-u", default_value_t = 1.0)]
    sigma_u: f64,
    #[arg(long, default_value = "explicit")]
    method: IdMethod,
    #[arg(long = "d-x", default_value = "auto")]
    d_x: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// analytic | rollout
    #[arg(long, default_value = "analytic")]
    eval: String,
}

#[derive(Subcommand)]
enum DiagCommand {
    /// Minimum-eigenvalue growth of the lifted covariate Gram matrix
    Pe {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "T", value_delimiter = ',', required = true)]
        t: Vec<usize>,
        #[arg(long = "H", default_value_t = 4)]
        h: usize,
        #[arg(long = "sigma-u", default_value_t = 1.0)]
        sigma_u: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo check of the Gaussian quadratic-form lower bound
    Quadform {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Check { model } => cmd_check(&model),
        Command::Run { model, run, out } => cmd_run(&model, &run, &out),
        Command::Sweep { model, t, seeds, methods, h, sigma_u, d_x, threads, out } => {
            cmd_sweep(&model, &t, &seeds, &methods, &h, sigma_u, &d_x, threads, &out)
        }
        Command::Diag { what } => cmd_diag(what),
    }
}

fn load_or_exit(path: &Path) -> Result<LqgModel, ExitCode> {
    match load_model(path) {
        Ok(m) => Ok(m),
        Err(e @ LoadError::Parse { .. }) | Err(e @ LoadError::Invalid(_)) => {
            eprintln!("{e}");
            Err(ExitCode::from(2))
        }
        Err(e) => {
            eprintln!("{e}");
            Err(ExitCode::from(2))
        }
    }
}

fn cmd_check(path: &Path) -> ExitCode {
    let model = match load_or_exit(path) {
        Ok(m) => m,
        Err(code) => return code,
    };
    let report = check_assumptions(&model);
    for (item, witness, pass) in report.lines() {
        println!("{item}: {} ({witness})", if pass { "PASS" } else { "FAIL" });
    }
    if report.all_pass() {
        println!("all assumptions hold");
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn parse_auto_usize(text: &str, what: &str) -> Result<Option<usize>, ExitCode> {
    if text == "auto" {
        return Ok(None);
    }
    match text.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(Some(v)),
        _ => {
            eprintln!("invalid {what}: '{text}' (expected a positive integer or 'auto')");
            Err(ExitCode::from(2))
        }
    }
}

fn build_config(model: &LqgModel, args: &RunArgs) -> Result<RunConfig, ExitCode> {
    let h = parse_auto_usize(&args.h, "--H")?;
    let d_x = parse_auto_usize(&args.d_x, "--d-x")?;
    let h_used = match h {
        Some(h) => h,
        None => default_history_len(model, args.t).map_err(|e| {
            eprintln!("cannot select H automatically: {e}");
            ExitCode::from(1)
        })?,
    };
    let eval = match args.eval.as_str() {
        "analytic" => EvalMode::Analytic,
        "rollout" => EvalMode::Rollout { t_eval: 1_000_000, burn_in: (10 * h_used).max(500) },
        other => {
            eprintln!("invalid --eval: '{other}' (expected analytic|rollout)");
            return Err(ExitCode::from(2));
        }
    };
    Ok(RunConfig {
        t: args.t,
        h: Some(h_used),
        sigma_u: args.sigma_u,
        d_x,
        rank_threshold_ratio: DEFAULT_RANK_RATIO,
        method: args.method,
        seed: args.seed,
        eval,
    })
}

fn cmd_run(model_path: &Path, args: &RunArgs, out: &Path) -> ExitCode {
    let model = match load_or_exit(model_path) {
        Ok(m) => m,
        Err(code) => return code,
    };
    let config = match build_config(&model, args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let record = run_corel(&config, &model);
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    if let Err(e) = std::fs::write(out, json) {
        eprintln!("cannot write {}: {e}", out.display());
        return ExitCode::from(1);
    }
    println!("{}", record.summary_line());
    if record.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

/// 17 significant digits, enough to reparse the exact f64.
fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), g17)
}

fn sweep_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(
        "method,T,seed,gap,J_hat,J_star,M_err,A_err,B_err,Q_err,K_err,gram_min_eig,d_x_used,status\n",
    );
    for r in records {
        let e = r.errors.as_ref();
        let status = match &r.failure {
            None => "ok".to_string(),
            Some(reason) => reason.replace([',', '\n'], ";"),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.config.method,
            r.config.t,
            r.config.seed,
            csv_opt(r.gap),
            csv_opt(r.j_hat),
            csv_opt(r.j_star),
            csv_opt(e.map(|e| e.m_err)),
            csv_opt(e.map(|e| e.a_err)),
            csv_opt(e.map(|e| e.b_err)),
            csv_opt(e.map(|e| e.q_err)),
            csv_opt(e.map(|e| e.k_err)),
            csv_opt(r.gram_min_eig),
            r.d_x_used.map_or_else(|| "nan".to_string(), |d| d.to_string()),
            status,
        ));
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    model_path: &Path,
    ts: &[usize],
    seeds: &[u64],
    methods: &[IdMethod],
    h: &str,
    sigma_u: f64,
    d_x: &str,
    threads: Option<usize>,
    out: &Path,
) -> ExitCode {
    let model = match load_or_exit(model_path) {
        Ok(m) => m,
        Err(code) => return code,
    };
    if ts.is_empty() || seeds.is_empty() || methods.is_empty() {
        eprintln!("sweep grids must be nonempty");
        return ExitCode::from(2);
    }
    let h = match parse_auto_usize(h, "--H") {
        Ok(v) => v,
        Err(code) => return code,
    };
    let d_x = match parse_auto_usize(d_x, "--d-x") {
        Ok(v) => v,
        Err(code) => return code,
    };
    let base = RunConfig {
        t: ts[0],
        h,
        sigma_u,
        d_x,
        rank_threshold_ratio: DEFAULT_RANK_RATIO,
        method: methods[0],
        seed: seeds[0],
        eval: EvalMode::Analytic,
    };
    let mut records = match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build();
            match pool {
                Ok(pool) => pool.install(|| run_sweep(&model, ts, seeds, methods, &base)),
                Err(e) => {
                    eprintln!("cannot build thread pool: {e}");
                    return ExitCode::from(1);
                }
            }
        }
        None => run_sweep(&model, ts, seeds, methods, &base),
    };
    records.sort_by(|a, b| {
        (a.config.method.to_string(), a.config.t, a.config.seed).cmp(&(
            b.config.method.to_string(),
            b.config.t,
            b.config.seed,
        ))
    });
    if let Err(e) = std::fs::write(out, sweep_csv(&records)) {
        eprintln!("cannot write {}: {e}", out.display());
        return ExitCode::from(1);
    }
    for r in &records {
        println!("{}", r.summary_line());
    }
    ExitCode::SUCCESS
}

fn write_json_report<T: serde::Serialize>(report: &T, out: Option<&Path>) -> ExitCode {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    if let Some(path) = out {
        if let Err(e) = std::fs::write(path, &json) {
            eprintln!("cannot write {}: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    println!("{json}");
    ExitCode::SUCCESS
}

fn cmd_diag(what: DiagCommand) -> ExitCode {
    match what {
        DiagCommand::Pe { model, t, h, sigma_u, seed, out } => {
            let model = match load_or_exit(&model) {
                Ok(m) => m,
                Err(code) => return code,
            };
            let mut rng = rng_from_seed(seed);
            match pe_curve(&model, h, sigma_u, &t, &mut rng) {
                Ok(curve) => write_json_report(&curve, out.as_deref()),
                Err(e) => {
                    eprintln!("pe diagnostic failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
        DiagCommand::Quadform { d, trials, samples, seed, out } => {
            let mut rng = rng_from_seed(seed);
            match quadform_lb_mc(d, trials, samples, &mut rng) {
                Ok(report) => write_json_report(&report, out.as_deref()),
                Err(e) => {
                    eprintln!("quadform diagnostic failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
