use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccrl_core::curriculum::CurriculumMode;
use ccrl_core::env::{write_trace, EnvConfig, ExplorationEnv};
use ccrl_core::harness::{
    bench, count_marks, evaluate_maps, render_trace, run_training, EvalReport, HarnessError, RunConfig,
    ScriptedCoveragePolicy,
};
use ccrl_core::maps::{self, TEST_MAPS};
use ccrl_core::nn::{checkpoint_scalar, Network};
use ccrl_core::policy::{run_episodes, GreedyPolicy, Policy, SampledPolicy};
use ccrl_core::seeding::{derive_seed, domain, rng_from};
use ccrl_core::Scalar;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "ccrl", version, about = "Grid exploration with cumulative curriculum PPO")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; replaces the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Output directory (train, eval) or file (render).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeArg {
    Ccrl,
    Cl,
    Flat,
}

impl From<ModeArg> for CurriculumMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ccrl => CurriculumMode::Ccrl,
            ModeArg::Cl => CurriculumMode::Cl,
            ModeArg::Flat => CurriculumMode::Flat,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one run per seed and write logs and checkpoints.
    Train {
        /// Override the transition budget.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Evaluate a checkpoint (or the scripted coverage policy) on maps.
    Eval {
        #[arg(long, required_unless_present = "scripted")]
        checkpoint: Option<PathBuf>,
        /// Use the ground-truth coverage policy instead of a checkpoint.
        #[arg(long)]
        scripted: bool,
        /// Comma-separated map names; defaults to the held-out test maps.
        #[arg(long, value_delimiter = ',')]
        maps: Vec<String>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        /// Comma-separated evaluation seeds (default 0..5).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Sample actions instead of taking the most likely one.
        #[arg(long)]
        sample: bool,
        /// Also record one episode on the first map to this CSV trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Measure single-step simulator latency with random actions.
    Bench {
        #[arg(long, default_value = "1")]
        map: String,
        #[arg(long, default_value_t = 100_000)]
        steps: usize,
    },
    /// Draw a recorded trajectory over the reconstructed belief map (PGM).
    Render {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        map: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    if let Some(m) = common.mode {
        cfg.mode = m.into();
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn map_config(cfg: &RunConfig, name: &str) -> Result<EnvConfig, HarnessError> {
    if maps::named_text(name).is_none() {
        return Err(HarnessError::UnknownMap(name.to_string()));
    }
    Ok(cfg.env_config(name))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Train { budget } => {
            if let Some(b) = budget {
                cfg.transition_budget = b;
            }
            let summary = run_training(&cfg)?;
            for s in &summary.seeds {
                println!(
                    "seed {}: {:?}, {} transitions, {} updates -> {}",
                    s.seed,
                    s.status,
                    s.total_transitions,
                    s.updates,
                    s.dir.display()
                );
            }
            print!("{}", fs::read_to_string(cfg.output_dir.join("aggregate.txt"))?);
        }
        Command::Eval { checkpoint, scripted, maps, episodes, seeds, sample, trace } => {
            let names: Vec<String> =
                if maps.is_empty() { TEST_MAPS.iter().map(|(n, _)| n.to_string()).collect() } else { maps };
            let envs = names.iter().map(|n| map_config(&cfg, n)).collect::<Result<Vec<_>, _>>()?;
            let seeds = if !seeds.is_empty() {
                seeds
            } else if let Some(s) = cli.common.seed {
                vec![s]
            } else {
                (0..5).collect()
            };
            if episodes == 0 {
                return Err(HarnessError::Config("--episodes must be positive".into()));
            }
            let out = cli.common.out.clone().unwrap_or_else(|| PathBuf::from("eval_out"));
            let report = if scripted {
                if let Some(t) = &trace {
                    record_trace::<f64, _>(&envs[0], seeds[0], ScriptedCoveragePolicy::new(), t)?;
                }
                evaluate_maps::<f64, _, _>(&envs, &seeds, episodes, |_| ScriptedCoveragePolicy::new())?
            } else {
                let path = checkpoint.expect("clap requires a checkpoint without --scripted");
                let text = fs::read_to_string(&path)
                    .map_err(|e| HarnessError::MissingFile(format!("{}: {e}", path.display())))?;
                match checkpoint_scalar(&text) {
                    Some("f32") => eval_network::<f32>(&text, &envs, &seeds, episodes, sample, trace.as_deref())?,
                    _ => eval_network::<f64>(&text, &envs, &seeds, episodes, sample, trace.as_deref())?,
                }
            };
            fs::create_dir_all(&out)?;
            fs::write(out.join("episodes.csv"), report.episodes_csv())?;
            fs::write(out.join("summary.csv"), report.summary_csv())?;
            print!("{}", report.summary_table());
        }
        Command::Bench { map, steps } => {
            let env = map_config(&cfg, &map)?;
            let seed = cli.common.seed.unwrap_or(0);
            let r = bench(&env, steps, seed)?;
            println!("bench {map}: {}", r.summary());
        }
        Command::Render { trace, map } => {
            let env = map_config(&cfg, &map)?;
            let file =
                fs::File::open(&trace).map_err(|e| HarnessError::MissingFile(format!("{}: {e}", trace.display())))?;
            let rows = ccrl_core::env::read_trace(file).map_err(|e| HarnessError::Trace(e.to_string()))?;
            let grid = env.load_base_map()?;
            let image = render_trace(&grid, &rows, &env.lidar)?;
            let out = cli.common.out.clone().unwrap_or_else(|| trace.with_extension("pgm"));
            fs::write(&out, image.to_pgm())?;
            println!("{} trajectory marks -> {}", count_marks(&image), out.display());
        }
    }
    Ok(())
}

fn eval_network<T: Scalar>(
    text: &str,
    envs: &[EnvConfig],
    seeds: &[u64],
    episodes: usize,
    sample: bool,
    trace: Option<&Path>,
) -> Result<EvalReport, HarnessError> {
    let net = Network::<T>::load(text.as_bytes())?;
    if let Some(t) = trace {
        if sample {
            let p = SampledPolicy { net: &net, rng: rng_from(derive_seed(seeds[0], domain::POLICY, 0)) };
            record_trace::<T, _>(&envs[0], seeds[0], p, t)?;
        } else {
            record_trace::<T, _>(&envs[0], seeds[0], GreedyPolicy(&net), t)?;
        }
    }
    if sample {
        evaluate_maps::<T, _, _>(envs, seeds, episodes, |s| SampledPolicy {
            net: &net,
            rng: rng_from(derive_seed(s, domain::POLICY, 0)),
        })
    } else {
        evaluate_maps::<T, _, _>(envs, seeds, episodes, |_| GreedyPolicy(&net))
    }
}

fn record_trace<T: Scalar, P: Policy<T>>(
    cfg: &EnvConfig,
    seed: u64,
    mut policy: P,
    path: &Path,
) -> Result<(), HarnessError> {
    let mut env = ExplorationEnv::<T>::new(cfg.clone())?;
    env.reset(derive_seed(seed, domain::EVAL, 0))?;
    env.enable_trace();
    let mut envs = vec![env];
    run_episodes(&mut policy, &mut envs)?;
    let rows = envs[0].take_trace().unwrap_or_default();
    write_trace(&rows, fs::File::create(path)?)?;
    Ok(())
}
