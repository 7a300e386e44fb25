//! End-to-end stages driven by an [`ExperimentConfig`].

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::{posterior_mean_thermogram, summarize, PosteriorSummary, SummaryOptions};
use crate::bayes::PosteriorTarget;
use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::io::ChainWriter;
use crate::mcmc::{
    rwmh_with, tune_beta, ChainConfig, ChainSample, ChainStats, GaussianRandomWalk, InitialState,
    PilotConfig, TuneResult,
};
use crate::pce::build_basis;
use crate::solver::{ForwardModel, SgfemOptions, SgfemSurrogate, Thermogram};

pub fn forward_model(config: &ExperimentConfig) -> Result<ForwardModel> {
    ForwardModel::build(
        config.geometry,
        config.material,
        config.profile,
        config.disc,
        config.discretization.h_target,
    )
}

/// Deterministic thermogram at the truth plus iid Gaussian noise.
pub fn synthesize_data(
    model: &ForwardModel,
    lambda: f64,
    intensity: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<Thermogram> {
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(invalid(format!(
            "noise sd must be non-negative, got {noise_sd}"
        )));
    }
    let mut t = model.plain_solve(lambda, intensity)?;
    if noise_sd > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sd).map_err(|e| invalid(e.to_string()))?;
        for v in &mut t.temps {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildReport {
    pub n_h: usize,
    pub n_k: usize,
    pub n_t: usize,
    pub n_d: usize,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
}

/// Offline stage: mesh, assemble and solve the parametric problem.
pub fn build_surrogate(
    config: &ExperimentConfig,
) -> Result<(SgfemSurrogate, ForwardModel, BuildReport)> {
    let started = Instant::now();
    let model = forward_model(config)?;
    let assembly_seconds = started.elapsed().as_secs_f64();
    let basis = build_basis(config.disc.degree);
    let options = SgfemOptions {
        strategy: config.discretization.solver,
        ..Default::default()
    };
    let started = Instant::now();
    let mut surrogate = model.sgfem_solve(&basis, &config.bounds, &options)?;
    let solve_seconds = started.elapsed().as_secs_f64();
    surrogate.input_hash = config.surrogate_hash();
    let report = BuildReport {
        n_h: model.ops.n_h,
        n_k: basis.len(),
        n_t: config.disc.n_steps,
        n_d: config.disc.n_obs,
        assembly_seconds,
        solve_seconds,
    };
    Ok((surrogate, model, report))
}

/// One finished chain.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub stats: ChainStats,
    pub tuning: Option<TuneResult>,
    pub samples: Vec<ChainSample>,
}

fn run_one(
    config: &ExperimentConfig,
    data: &Thermogram,
    surrogate: Option<&SgfemSurrogate>,
    model: &ForwardModel,
    seed: u64,
    output: Option<&Path>,
) -> Result<ChainRun> {
    let c = &config.chain;
    let mut target = PosteriorTarget::new(data, config.prior, surrogate, model)?;
    let mut initial = match c.initial {
        Some(x) => InitialState::Explicit(x),
        None => InitialState::Draw,
    };
    let tuning = match c.beta {
        Some(_) => None,
        None => {
            // pilot seeds live in a separate range from the chain seeds
            let mut pilot = PilotConfig::new(0.05, seed ^ 0x5bd1_e995_0000_0000);
            pilot.batch_len = c.pilot_batch;
            pilot.initial = initial;
            let r = tune_beta(&mut target, &pilot)?;
            initial = InitialState::Explicit(r.state);
            Some(r)
        }
    };
    let beta = c
        .beta
        .or(tuning.map(|t| t.beta))
        .expect("beta is set or tuned");
    let chain = ChainConfig {
        total: c.samples,
        burn_in: c.burn_in,
        thin: c.thin,
        beta,
        seed,
        initial,
        runaway_bound: c.runaway_bound,
    };
    let mut writer = match output {
        Some(dir) => {
            let f = File::create(dir.join(format!("chain_{seed}.csv")))?;
            Some(ChainWriter::new(
                BufWriter::new(f),
                seed,
                beta,
                c.burn_in,
                c.thin,
            )?)
        }
        None => None,
    };
    let mut samples = Vec::with_capacity(chain.retained());
    let stats = rwmh_with(&mut target, &GaussianRandomWalk { beta }, &chain, |s| {
        if let Some(w) = writer.as_mut() {
            w.write(s)?;
        }
        samples.push(*s);
        Ok(())
    })?;
    if let Some(w) = writer {
        w.finish()?;
    }
    log::info!(
        "chain {seed}: acceptance {:.3}, fallback fraction {:.4}",
        stats.acceptance_rate(),
        stats.fallback_fraction()
    );
    Ok(ChainRun {
        stats,
        tuning,
        samples,
    })
}

/// Runs `config.chain.chains` independent chains in parallel with seeds
/// `seed, seed + 1, ...` and returns them in seed order. Chain CSVs go to
/// `output` when given.
pub fn run_chains(
    config: &ExperimentConfig,
    data: &Thermogram,
    surrogate: Option<&SgfemSurrogate>,
    model: &ForwardModel,
    output: Option<&Path>,
) -> Result<Vec<ChainRun>> {
    let seeds: Vec<u64> = (0..config.chain.chains as u64)
        .map(|k| config.chain.seed.wrapping_add(k))
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| scope.spawn(move || run_one(config, data, surrogate, model, seed, output)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .map_err(|_| Error::Sampler("chain thread panicked".into()))?
            })
            .collect()
    })
}

pub fn summary_options(config: &ExperimentConfig) -> SummaryOptions {
    SummaryOptions {
        bins: config.analysis.bins,
        joint_bins: config.analysis.joint_bins,
        windows: config
            .analysis
            .windows
            .as_ref()
            .map(|w| w.iter().map(|p| (p[0], p[1])).collect()),
        heat_capacity: config.material.heat_capacity(),
    }
}

/// Pools chains (in the given order) into a posterior summary and the model
/// thermogram at the posterior mean.
pub fn summarize_chains(
    config: &ExperimentConfig,
    chains: &[Vec<ChainSample>],
    surrogate: Option<&SgfemSurrogate>,
    model: &ForwardModel,
) -> Result<(PosteriorSummary, Thermogram, bool)> {
    let thetas: Vec<[f64; 2]> = chains.iter().flatten().map(|s| s.theta).collect();
    let summary = summarize(&thetas, &summary_options(config))?;
    let (mean_fit, used_surrogate) = posterior_mean_thermogram(&summary, surrogate, model)?;
    Ok((summary, mean_fit, used_surrogate))
}
