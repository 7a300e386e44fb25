use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flashbayes::config::ExperimentConfig;
use flashbayes::io;
use flashbayes::pipeline::{self, ChainRun};
use flashbayes::solver::SgfemSurrogate;

/// Bayesian laser-flash analysis with a stochastic Galerkin surrogate.
#[derive(Parser)]
#[command(name = "flashbayes", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML). Relative paths inside it resolve
    /// against its directory.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set chain.seed=7`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config, &self.overrides)?;
        let base = self.config.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic forward solve at given parameters.
    Forward {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        intensity: f64,
        /// Output CSV (default: stdout).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Synthetic noisy data from a forward solve.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        intensity: f64,
        #[arg(long, default_value_t = 0.05)]
        noise_sd: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV (default: paths.data).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Offline stage: solve the parametric problem and store the surrogate.
    BuildSurrogate {
        #[command(flatten)]
        common: Common,
        /// Output file (default: paths.surrogate).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Sample the posterior of (lambda, I) given paths.data.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Number of parallel chains (overrides chain.chains).
        #[arg(long)]
        chains: Option<usize>,
        /// Use full solves for every evaluation.
        #[arg(long)]
        no_surrogate: bool,
    },
    /// Summaries, histograms and the posterior-mean fit from chain files.
    Summarize {
        #[command(flatten)]
        common: Common,
        /// Chain CSVs (default: every chain_*.csv under paths.output).
        chains: Vec<PathBuf>,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_surrogate(config: &ExperimentConfig) -> Result<SgfemSurrogate> {
    let path = &config.paths.surrogate;
    io::read_surrogate_checked(path, &config.surrogate_hash())
        .with_context(|| format!("loading surrogate {}", path.display()))
}

fn chain_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if let Some(seed) = name
            .strip_prefix("chain_")
            .and_then(|s| s.strip_suffix(".csv"))
        {
            if let Ok(seed) = seed.parse() {
                files.push((seed, path));
            }
        }
    }
    files.sort();
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Forward {
            common,
            lambda,
            intensity,
            out,
        } => {
            let config = common.load()?;
            let model = pipeline::forward_model(&config)?;
            let t = model.plain_solve(lambda, intensity)?;
            match out {
                Some(p) => {
                    let mut w = create(&p)?;
                    io::write_thermogram(&mut w, &t)?;
                    w.flush()?;
                }
                None => io::write_thermogram(std::io::stdout().lock(), &t)?,
            }
        }
        Command::Synth {
            common,
            lambda,
            intensity,
            noise_sd,
            seed,
            out,
        } => {
            let config = common.load()?;
            let model = pipeline::forward_model(&config)?;
            let t = pipeline::synthesize_data(&model, lambda, intensity, noise_sd, seed)?;
            let path = out.unwrap_or(config.paths.data);
            let mut w = create(&path)?;
            io::write_thermogram(&mut w, &t)?;
            w.flush()?;
            println!("wrote {} points to {}", t.len(), path.display());
        }
        Command::BuildSurrogate { common, out } => {
            let config = common.load()?;
            let (surrogate, _, report) = pipeline::build_surrogate(&config)?;
            let path = out.unwrap_or(config.paths.surrogate.clone());
            let mut w = create(&path)?;
            io::write_surrogate(&mut w, &surrogate)?;
            w.flush()?;
            println!("n_h={}", report.n_h);
            println!("n_k={}", report.n_k);
            println!("n_t={}", report.n_t);
            println!("n_d={}", report.n_d);
            println!("assembly_seconds={}", report.assembly_seconds);
            println!("solve_seconds={}", report.solve_seconds);
            println!("hash={}", surrogate.input_hash);
            println!("surrogate={}", path.display());
        }
        Command::Sample {
            common,
            chains,
            no_surrogate,
        } => {
            let mut config = common.load()?;
            if let Some(n) = chains {
                if n == 0 {
                    bail!("--chains must be at least 1");
                }
                config.chain.chains = n;
            }
            let data = io::read_thermogram_file(&config.paths.data)
                .with_context(|| format!("reading data {}", config.paths.data.display()))?;
            let surrogate = if no_surrogate {
                None
            } else {
                Some(load_surrogate(&config)?)
            };
            let model = pipeline::forward_model(&config)?;
            let out = &config.paths.output;
            fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            let runs = pipeline::run_chains(&config, &data, surrogate.as_ref(), &model, Some(out))?;
            let mut w = create(&out.join("sample_report.txt"))?;
            for ChainRun { stats, tuning, .. } in &runs {
                let line = format!(
                    "chain_{seed}: beta={} acceptance={} fallback_fraction={} retained={}{}",
                    stats.beta,
                    stats.acceptance_rate(),
                    stats.fallback_fraction(),
                    config.chain.samples.saturating_sub(config.chain.burn_in) / config.chain.thin,
                    tuning.map_or(String::new(), |t| format!(
                        " tuned_rounds={} pilot_acceptance={}",
                        t.rounds, t.acceptance
                    )),
                    seed = stats.seed,
                );
                println!("{line}");
                writeln!(w, "{line}")?;
            }
            w.flush()?;
        }
        Command::Summarize { common, chains } => {
            let config = common.load()?;
            let files = if chains.is_empty() {
                chain_files(&config.paths.output)?
            } else {
                chains
            };
            if files.is_empty() {
                bail!("no chain files found in {}", config.paths.output.display());
            }
            let mut samples = Vec::new();
            let mut stats = Vec::new();
            for f in &files {
                let chain = io::read_chain_file(f)?;
                let seed = chain
                    .get("seed")
                    .and_then(|s| s.parse().ok())
                    .unwrap_or_default();
                let beta = chain
                    .get("beta")
                    .and_then(|s| s.parse().ok())
                    .unwrap_or(f64::NAN);
                let proposed = chain.samples.len();
                let accepted = chain.samples.iter().filter(|s| s.accepted).count();
                let fallback = chain.samples.iter().filter(|s| !s.used_surrogate).count();
                stats.push(flashbayes::mcmc::ChainStats {
                    accepted,
                    proposed,
                    fallback_count: fallback,
                    evaluations: proposed,
                    seed,
                    beta,
                    ..Default::default()
                });
                samples.push(chain.samples);
            }
            let surrogate = match load_surrogate(&config) {
                Ok(s) => Some(s),
                Err(e) => {
                    log::warn!("{e:#}; the posterior-mean fit uses a full solve");
                    None
                }
            };
            let model = pipeline::forward_model(&config)?;
            let (summary, fit, used_surrogate) =
                pipeline::summarize_chains(&config, &samples, surrogate.as_ref(), &model)?;
            let out = &config.paths.output;
            fs::create_dir_all(out)?;
            let mut w = create(&out.join("summary.txt"))?;
            io::write_summary(&mut w, &summary, &stats)?;
            writeln!(w, "posterior_mean_fit_used_surrogate={used_surrogate}")?;
            w.flush()?;
            io::write_histograms(out, &summary)?;
            let mut w = create(&out.join("posterior_mean_thermogram.csv"))?;
            io::write_thermogram(&mut w, &fit)?;
            w.flush()?;
            io::write_summary(std::io::stdout().lock(), &summary, &stats)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
