use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use depsens::benchmarks::Benchmark;
use depsens::experiment::{run_experiment, run_experiment_in_pool, ExperimentConfig, ExperimentError};
use depsens::RngSeed;

#[derive(Parser)]
#[command(name = "depsens", version, about = "Dependence-based sensitivity analysis experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its report.
    Run {
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Print the available benchmark functions.
    ListBenchmarks,
    /// Print the available sensitivity indices.
    ListIndices,
}

const DEFAULT_OUT: &str = "results";

const BENCHMARKS: [(&str, &str, &str); 6] = [
    ("linkletter_eta1", "linkletter", "10 inputs, linear with slopes halving over the first eight"),
    ("loeppky_eta2", "loeppky", "10 inputs, first three dominant, weak pairwise interactions"),
    ("ishigami_eta3", "ishigami", "3 inputs on [-pi, pi]^3, X3 acts only through interaction"),
    ("morris_eta4", "morris", "30 inputs, the first k (1..=10) active; needs k"),
    ("soblev_eta5", "soblev", "one input per coefficient in b (default: 20 inputs, 8 active)"),
    ("synthetic_map", "", "field-valued output on a grid x grid lattice; needs grid, optional inputs"),
];

const INDICES: [(&str, &str); 8] = [
    ("sobol_first_pf", "first-order Sobol index, pick-and-freeze (benchmark sources only)"),
    ("sobol_total_pf", "total-effect Sobol index, pick-and-freeze (benchmark sources only)"),
    ("fdiv", "f-divergence index from a KDE density ratio; choice = kl_neg_log | kl_tlogt | hellinger | total_variation | pearson_chi2 | neyman_chi2"),
    ("mi_ksg", "k-nearest-neighbour mutual information; k (default 4)"),
    ("dcor", "distance correlation; alpha in (0, 2) (default 1)"),
    ("dcor_pf", "distance correlation between paired pick-and-freeze outputs"),
    ("hsic", "normalized HSIC; kernel_x, kernel_y"),
    ("hsic_pf", "normalized HSIC between paired pick-and-freeze outputs; kernel"),
];

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            threads,
            out,
        } => run(config, seed, threads, out),
        Command::Validate { config } => match ExperimentConfig::from_path(&config) {
            Ok(cfg) => {
                println!("{}: ok (config hash {})", config.display(), cfg.hash());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&ExperimentError::Config(e).to_string_with(&config), 2),
        },
        Command::ListBenchmarks => {
            assert_eq!(BENCHMARKS.len(), Benchmark::NAMES.len());
            for (name, alias, about) in BENCHMARKS {
                let alias = if alias.is_empty() { String::new() } else { format!(" (alias {alias})") };
                println!("{name}{alias}: {about}");
            }
            ExitCode::SUCCESS
        }
        Command::ListIndices => {
            for (name, about) in INDICES {
                println!("{name}: {about}");
            }
            ExitCode::SUCCESS
        }
    }
}

fn run(config: PathBuf, seed: Option<u64>, threads: Option<usize>, out: Option<PathBuf>) -> ExitCode {
    let mut cfg = match ExperimentConfig::from_path(&config) {
        Ok(cfg) => cfg,
        Err(e) => return fail(&ExperimentError::Config(e).to_string_with(&config), 2),
    };
    if let Some(seed) = seed {
        cfg.seed = RngSeed(seed);
    }
    if threads == Some(0) {
        return fail("--threads must be at least 1", 2);
    }
    let out = out.unwrap_or_else(|| match &cfg.output_dir {
        Some(dir) => cfg.base_dir.join(dir),
        None => PathBuf::from(DEFAULT_OUT),
    });
    let result = match threads {
        Some(t) => run_experiment_in_pool(&cfg, &out, t),
        None => run_experiment(&cfg, &out),
    };
    match result {
        Ok(results) => {
            println!(
                "wrote {} ({} indices, {} replicates, {:.2} s)",
                out.join("results.json").display(),
                results.indices.len(),
                results.metadata.replicates,
                results.metadata.wall_time_seconds
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            fail(&e.to_string_with(&config), code)
        }
    }
}

fn fail(message: &str, code: i32) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code as u8)
}

trait WithPath {
    fn to_string_with(&self, config: &std::path::Path) -> String;
}

impl WithPath for ExperimentError {
    fn to_string_with(&self, config: &std::path::Path) -> String {
        match self {
            ExperimentError::Config(e) => format!("{}: {e}", config.display()),
            other => other.to_string(),
        }
    }
}
