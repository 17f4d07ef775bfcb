use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lasso_flow::harness::acceptance::{run_acceptance, AcceptanceConfig};
use lasso_flow::harness::{
    gen_instance, run_experiment_1, run_experiment_2, solve_problem, ExperimentConfig, ExperimentReport, RunSettings,
};
use lasso_flow::LassoProblem;

#[derive(Parser)]
#[command(name = "lasso-flow", version, about = "Elastic-net Lasso by a prescribed-time KKT flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance as JSON.
    Gen {
        #[arg(long, default_value_t = 10)]
        nx: usize,
        #[arg(long, default_value_t = 20)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 0.1)]
        rho: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one instance and write the solution, trajectory CSV and plot.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        tp: f64,
        #[arg(long, default_value_t = 1.0)]
        init_scale: f64,
        #[arg(long)]
        rtol: Option<f64>,
        #[arg(long)]
        atol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Several prescribed settling times from the all-ones start.
    Exp1(ExperimentArgs),
    /// Several scaled starts with one settling time.
    Exp2(ExperimentArgs),
    /// Run the acceptance suite; exits nonzero if any criterion fails.
    Check {
        #[arg(long, default_value = "acceptance-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON config; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    tp: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    init_scales: Option<Vec<f64>>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long)]
    no_plots: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(self, base: ExperimentConfig) -> lasso_flow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => base.clone(),
        };
        // the subcommand fixes the experiment kind
        c.experiment = base.experiment;
        if let Some(v) = self.nx {
            c.n_x = v;
        }
        if let Some(v) = self.m {
            c.m = v;
        }
        if let Some(v) = self.tau {
            c.tau = v;
        }
        if let Some(v) = self.rho {
            c.rho = v;
        }
        if let Some(v) = self.n {
            c.n_problems = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.tp {
            c.t_p_list = v;
        }
        if let Some(v) = self.init_scales {
            c.init_scales = v;
        }
        if let Some(v) = self.rtol {
            c.rtol = v;
        }
        if let Some(v) = self.atol {
            c.atol = v;
        }
        if self.no_plots {
            c.write_plots = false;
        }
        if let Some(v) = self.out {
            c.output_dir = v;
        }
        Ok(c)
    }
}

fn summarize(report: &ExperimentReport) {
    let a = &report.aggregate;
    println!(
        "{} runs ({} failed, {} unsettled); max ‖x(T_p) − x*‖∞ = {:.3e}",
        a.runs, a.failed_runs, a.unsettled_runs, a.max_final_error_inf
    );
    for c in &a.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        let measured = c.measured.map_or("n/a".into(), |m| format!("{m:.3e}"));
        println!("[{status}] {} (measured {measured}, threshold {:e})", c.name, c.threshold);
    }
    println!("report: {}", report.config.output_dir.join("report.json").display());
}

fn run(cli: Cli) -> lasso_flow::Result<bool> {
    match cli.command {
        Command::Gen {
            nx,
            m,
            tau,
            rho,
            seed,
            out,
        } => {
            gen_instance(nx, m, tau, rho, seed)?.save(&out)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Solve {
            problem,
            tp,
            init_scale,
            rtol,
            atol,
            out,
        } => {
            let p = LassoProblem::load(&problem)?;
            let mut settings = RunSettings::default();
            settings.rtol = rtol.unwrap_or(settings.rtol);
            settings.atol = atol.unwrap_or(settings.atol);
            let res = solve_problem(&p, tp, init_scale, &settings, &out)?;
            let o = &res.outcome;
            match o.settle_time {
                Some(ts) => println!("settled at t = {ts:.6} (predicted {:.6})", o.predicted_settle_time),
                None => println!("did not settle by T_p = {tp}"),
            }
            println!("objective {:.12}, ‖x − x*‖∞ = {:.3e}", res.solution.objective, o.final_error_inf);
            println!("wrote {}", res.solution_path.display());
            Ok(true)
        }
        Command::Exp1(args) => {
            let report = run_experiment_1(&args.resolve(ExperimentConfig::prescribed_times())?)?;
            summarize(&report);
            Ok(report.aggregate.passed)
        }
        Command::Exp2(args) => {
            let report = run_experiment_2(&args.resolve(ExperimentConfig::initial_conditions())?)?;
            summarize(&report);
            Ok(report.aggregate.passed)
        }
        Command::Check { out, seed } => {
            let mut cfg = AcceptanceConfig::new(out);
            cfg.seed = seed;
            let results = run_acceptance(&cfg);
            for r in &results {
                println!("{r}");
            }
            Ok(results.iter().all(|r| r.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
