//! Command-line front end: abstract, synthesize, simulate, evaluate,
//! export, and bench subcommands over config files or built-in models.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;

use pacsynth::abstraction::{build_imdp, build_states_actions};
use pacsynth::harness::config::load_config;
use pacsynth::harness::models::{builtin_model, MODEL_NAMES};
use pacsynth::harness::{
    emit_results, monte_carlo, offline_plan, online_control, HarnessError, NoiseSampler,
    ProblemSpec, SeededRng, Verdict,
};
use pacsynth::imdp::explicit::export_explicit;
use pacsynth::linsys::GroupedSystem;
use pacsynth::scenario::TableCache;

#[derive(Parser)]
#[command(
    name = "pacsynth",
    about = "Certified reach-avoid controller synthesis from noise samples",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Problem configuration file (TOML).
    #[arg(long, conflicts_with = "model")]
    config: Option<PathBuf>,
    /// Built-in model name.
    #[arg(long)]
    model: Option<String>,
    /// Seed for all randomness (sampling and simulation).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for result files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl ModelArgs {
    fn spec(&self) -> Result<ProblemSpec, HarnessError> {
        match (&self.config, &self.model) {
            (Some(path), None) => load_config(path),
            (None, Some(name)) => builtin_model(name),
            _ => Err(HarnessError::Config(format!(
                "pass exactly one of --config / --model (builtins: {})",
                MODEL_NAMES.join(", ")
            ))),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the abstraction once and print its size.
    Abstract {
        #[command(flatten)]
        common: ModelArgs,
        /// Sample count for the interval computation (default: the plan's N0).
        #[arg(long)]
        n: Option<usize>,
        /// Also write the explicit-state files.
        #[arg(long)]
        export: bool,
    },
    /// Run the offline planning loop until certified, refuted, or out of budget.
    Synthesize {
        #[command(flatten)]
        common: ModelArgs,
    },
    /// Synthesize, then write closed-loop trajectories.
    Simulate {
        #[command(flatten)]
        common: ModelArgs,
        /// Number of trajectories to write.
        #[arg(long, default_value_t = 5)]
        runs: usize,
    },
    /// Synthesize, then estimate the empirical satisfaction rate.
    Evaluate {
        #[command(flatten)]
        common: ModelArgs,
        /// Monte Carlo runs.
        #[arg(long, default_value_t = 10_000)]
        mc_runs: usize,
    },
    /// Build one abstraction and write the explicit-state files.
    Export {
        #[command(flatten)]
        common: ModelArgs,
        /// Sample count for the interval computation (default: the plan's N0).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run a built-in benchmark end to end (synthesize + evaluate).
    Bench {
        /// Built-in model name.
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        mc_runs: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode, HarnessError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Abstract { common, n, export } => {
            let spec = common.spec()?;
            abstract_once(&spec, common.seed, n, export.then_some(common.out.as_path()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Export { common, n } => {
            let spec = common.spec()?;
            abstract_once(&spec, common.seed, n, Some(common.out.as_path()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Synthesize { common } => {
            let spec = common.spec()?;
            let cache = TableCache::new();
            let out = offline_plan(&spec, &cache, common.seed)?;
            emit_results(
                &out.report,
                Some((&spec.partition, &out.values_low)),
                &[],
                &common.out,
            )?;
            print_outcome(&out.report);
            Ok(exit(out.report.verdict))
        }
        Command::Simulate { common, runs } => {
            let spec = common.spec()?;
            let cache = TableCache::new();
            let out = offline_plan(&spec, &cache, common.seed)?;
            print_outcome(&out.report);
            let Some(policy) = &out.policy else {
                eprintln!("no policy to simulate");
                return Ok(exit(out.report.verdict));
            };
            let steps = match spec.grouped_horizon()? {
                pacsynth::imdp::Horizon::Finite(k) => k,
                pacsynth::imdp::Horizon::Infinite => 10 * spec.partition.num_cells(),
            };
            let mut trajectories = Vec::with_capacity(runs);
            let mut sampler = NoiseSampler::new(&spec.noise, out.gsys.state_dim())?;
            for i in 0..runs {
                let mut rng = SeededRng::seed_from_u64(common.seed);
                rng.set_stream((2 << 32) + i as u64);
                trajectories.push(online_control(
                    &out.gsys,
                    &spec.partition,
                    policy,
                    &spec.x0,
                    steps,
                    &mut sampler,
                    &mut rng,
                    None,
                )?);
            }
            let sat = trajectories.iter().filter(|t| t.sat).count();
            println!("simulated {runs} runs: {sat} satisfied");
            emit_results(
                &out.report,
                Some((&spec.partition, &out.values_low)),
                &trajectories,
                &common.out,
            )?;
            Ok(exit(out.report.verdict))
        }
        Command::Evaluate { common, mc_runs } => {
            let spec = common.spec()?;
            evaluate(&spec, common.seed, mc_runs, &common.out)
        }
        Command::Bench {
            model,
            seed,
            out,
            mc_runs,
        } => {
            let spec = builtin_model(&model)?;
            evaluate(&spec, seed, mc_runs, &out)
        }
    }
}

fn abstract_once(
    spec: &ProblemSpec,
    seed: u64,
    n: Option<usize>,
    export_dir: Option<&std::path::Path>,
) -> Result<(), HarnessError> {
    let gsys = GroupedSystem::group_steps(&spec.system, spec.group)?;
    let skeleton = build_states_actions(&spec.partition, &gsys)?;
    println!(
        "states: {}  choices: {}",
        skeleton.num_states(),
        skeleton.num_choices()
    );
    let n = n.unwrap_or(spec.sampling.n0);
    let mut sampler = NoiseSampler::new(&spec.noise, gsys.state_dim())?;
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(1);
    let samples = sampler.draw_batch(n, &gsys, &mut rng)?;
    let cache = TableCache::new();
    let table = cache.get_or_build(n, spec.beta())?;
    let s_init = match spec.partition.locate(&spec.x0) {
        pacsynth::geometry::RegionId::Cell(c) => c,
        _ => return Err(HarnessError::InitialOutsideDomain),
    };
    let (imdp, conf) = build_imdp(
        &skeleton,
        &spec.partition,
        &samples,
        &table,
        spec.mode(),
        s_init,
    )?;
    println!(
        "N = {n}: transitions: {}  beta = {:.3e}  alpha = {:.3e}",
        imdp.num_transitions(),
        conf.beta,
        conf.alpha
    );
    if let Some(dir) = export_dir {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let prefix = dir.join("imdp");
        let (sta, tra) = export_explicit(&imdp, &prefix)?;
        println!("wrote {} and {}", sta.display(), tra.display());
    }
    Ok(())
}

fn evaluate(
    spec: &ProblemSpec,
    seed: u64,
    mc_runs: usize,
    out_dir: &std::path::Path,
) -> Result<ExitCode, HarnessError> {
    let cache = TableCache::new();
    let mut out = offline_plan(spec, &cache, seed)?;
    print_outcome(&out.report);
    if let Some(policy) = &out.policy {
        let steps = match spec.grouped_horizon()? {
            pacsynth::imdp::Horizon::Finite(k) => k,
            pacsynth::imdp::Horizon::Infinite => 10 * spec.partition.num_cells(),
        };
        let mc = monte_carlo(
            &out.gsys,
            &spec.partition,
            policy,
            &spec.x0,
            steps,
            &spec.noise,
            mc_runs,
            seed,
        )?;
        println!(
            "monte carlo: {}/{} satisfied, rate {:.4} (+-{:.4})",
            mc.successes, mc.runs, mc.rate, mc.std_err
        );
        out.report.mc = Some(mc);
    }
    emit_results(
        &out.report,
        Some((&spec.partition, &out.values_low)),
        &[],
        out_dir,
    )?;
    Ok(exit(out.report.verdict))
}

fn print_outcome(report: &pacsynth::harness::RunReport) {
    for (i, rec) in report.iterations.iter().enumerate() {
        println!(
            "iter {i}: N = {}, Pr_low = {:.4}, Pr_up = {:.4} \
             (sample {:.0} ms, intervals {:.0} ms, build {:.0} ms, solve {:.0} ms)",
            rec.n_samples,
            rec.pr_low_init,
            rec.pr_up_init,
            rec.t_sample_ms,
            rec.t_intervals_ms,
            rec.t_build_ms,
            rec.t_solve_ms
        );
    }
    println!(
        "verdict: {} (beta = {:.3e}, alpha = {:.3e})",
        report.verdict.as_str(),
        report.beta,
        report.alpha
    );
}

fn exit(verdict: Verdict) -> ExitCode {
    ExitCode::from(verdict.exit_code() as u8)
}
