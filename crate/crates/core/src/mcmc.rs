//! Random walk Metropolis-Hastings over a two-dimensional state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{invalid, Error, Result};

pub type State = [f64; 2];

/// Value of an unnormalized log density and which model produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEval {
    pub log_density: f64,
    pub used_surrogate: bool,
}

impl TargetEval {
    pub fn exact(log_density: f64) -> Self {
        Self {
            log_density,
            used_surrogate: false,
        }
    }
}

/// Unnormalized log density. `&mut self` lets implementations keep scratch
/// buffers; each chain owns its target.
pub trait LogTarget {
    fn evaluate(&mut self, x: State) -> Result<TargetEval>;

    /// Random starting point, if the target knows how to draw one.
    fn draw_initial(&mut self, _rng: &mut ChaCha8Rng) -> Option<State> {
        None
    }
}

/// Adapts a closure returning a log density.
pub struct FnTarget<F>(pub F);

impl<F: FnMut(State) -> f64> LogTarget for FnTarget<F> {
    fn evaluate(&mut self, x: State) -> Result<TargetEval> {
        Ok(TargetEval::exact((self.0)(x)))
    }
}

pub trait Proposal {
    fn propose(&self, from: State, rng: &mut ChaCha8Rng) -> State;

    /// `ln q(from | to) - ln q(to | from)`; zero for symmetric kernels.
    fn log_q_ratio(&self, _from: State, _to: State) -> f64 {
        0.0
    }
}

/// Isotropic Gaussian increments with standard deviation `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianRandomWalk {
    pub beta: f64,
}

impl Proposal for GaussianRandomWalk {
    fn propose(&self, from: State, rng: &mut ChaCha8Rng) -> State {
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        [from[0] + self.beta * z0, from[1] + self.beta * z1]
    }
}

/// Metropolis-Hastings decision for uniform draw `u` in `[0, 1)`.
/// A non-finite proposed density is a rejection.
pub fn metropolis_accept(log_current: f64, log_proposed: f64, log_q_ratio: f64, u: f64) -> bool {
    if !log_proposed.is_finite() {
        return false;
    }
    let log_ratio = log_proposed - log_current + log_q_ratio;
    log_ratio >= 0.0 || u.ln() < log_ratio
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "theta")]
pub enum InitialState {
    /// Ask the target for a draw (retried while the density is not finite).
    Draw,
    Explicit(State),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    /// Total number of states `M`, including the initial one.
    pub total: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub beta: f64,
    pub seed: u64,
    pub initial: InitialState,
    /// Abort when any coordinate leaves `[-bound, bound]`.
    pub runaway_bound: f64,
}

impl ChainConfig {
    pub fn new(total: usize, burn_in: usize, beta: f64, seed: u64) -> Self {
        Self {
            total,
            burn_in,
            thin: 1,
            beta,
            seed,
            initial: InitialState::Draw,
            runaway_bound: 80.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total <= self.burn_in {
            return Err(invalid(format!(
                "chain.samples = {} must exceed chain.burn_in = {}",
                self.total, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(invalid("chain.thin must be at least 1"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(invalid(format!(
                "chain.beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.runaway_bound > 0.0) {
            return Err(invalid("chain.runaway_bound must be positive"));
        }
        Ok(())
    }

    /// Number of retained states, `floor((M - n_B) / thin)`.
    pub fn retained(&self) -> usize {
        retained_count(self.total, self.burn_in, self.thin)
    }
}

fn retained_count(len: usize, burn_in: usize, thin: usize) -> usize {
    (len - burn_in) / thin
}

fn is_retained(index: usize, burn_in: usize, thin: usize, count: usize) -> bool {
    index >= burn_in && (index - burn_in).is_multiple_of(thin) && (index - burn_in) / thin < count
}

/// Drops the first `burn_in` entries and keeps every `thin`-th one after that.
pub fn postprocess<T: Clone>(raw: &[T], burn_in: usize, thin: usize) -> Result<Vec<T>> {
    if burn_in >= raw.len() {
        return Err(invalid(format!(
            "burn-in {burn_in} is not shorter than the chain ({})",
            raw.len()
        )));
    }
    if thin == 0 {
        return Err(invalid("thin must be at least 1"));
    }
    let count = retained_count(raw.len(), burn_in, thin);
    Ok((0..count)
        .map(|i| raw[burn_in + i * thin].clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSample {
    /// Position in the unthinned chain.
    pub index: usize,
    pub theta: State,
    /// Whether the move into this state was accepted (false for the initial state).
    pub accepted: bool,
    pub used_surrogate: bool,
}

/// Counters for one run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChainStats {
    pub accepted: usize,
    pub proposed: usize,
    /// Target evaluations that did not use the surrogate.
    pub fallback_count: usize,
    pub evaluations: usize,
    pub seed: u64,
    pub beta: f64,
    pub burn_in: usize,
    pub thin: usize,
}

impl ChainStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn fallback_fraction(&self) -> f64 {
        if self.evaluations == 0 {
            0.0
        } else {
            self.fallback_count as f64 / self.evaluations as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<ChainSample>,
    pub stats: ChainStats,
}

impl Chain {
    pub fn thetas(&self) -> impl Iterator<Item = State> + '_ {
        self.samples.iter().map(|s| s.theta)
    }
}

const INITIAL_ATTEMPTS: usize = 100;

fn start(
    target: &mut impl LogTarget,
    initial: InitialState,
    rng: &mut ChaCha8Rng,
    stats: &mut ChainStats,
) -> Result<(State, TargetEval)> {
    for _ in 0..INITIAL_ATTEMPTS {
        let x = match initial {
            InitialState::Explicit(x) => x,
            InitialState::Draw => target.draw_initial(rng).ok_or_else(|| {
                Error::Sampler("target cannot draw an initial state; give one explicitly".into())
            })?,
        };
        let eval = target.evaluate(x)?;
        stats.evaluations += 1;
        stats.fallback_count += usize::from(!eval.used_surrogate);
        if eval.log_density.is_finite() {
            return Ok((x, eval));
        }
        if matches!(initial, InitialState::Explicit(_)) {
            break;
        }
    }
    Err(Error::Sampler(
        "log target is not finite at any initial state tried".into(),
    ))
}

/// Runs the chain and streams each retained state to `sink`.
pub fn rwmh_with(
    target: &mut impl LogTarget,
    proposal: &impl Proposal,
    config: &ChainConfig,
    mut sink: impl FnMut(&ChainSample) -> Result<()>,
) -> Result<ChainStats> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stats = ChainStats {
        seed: config.seed,
        beta: config.beta,
        burn_in: config.burn_in,
        thin: config.thin,
        ..Default::default()
    };
    let (mut x, mut current) = start(target, config.initial, &mut rng, &mut stats)?;
    let count = config.retained();
    let mut sample = ChainSample {
        index: 0,
        theta: x,
        accepted: false,
        used_surrogate: current.used_surrogate,
    };
    if is_retained(0, config.burn_in, config.thin, count) {
        sink(&sample)?;
    }
    for index in 1..config.total {
        let candidate = proposal.propose(x, &mut rng);
        let eval = target.evaluate(candidate)?;
        stats.evaluations += 1;
        stats.proposed += 1;
        stats.fallback_count += usize::from(!eval.used_surrogate);
        let u: f64 = rng.random();
        let accepted = metropolis_accept(
            current.log_density,
            eval.log_density,
            proposal.log_q_ratio(x, candidate),
            u,
        );
        if accepted {
            x = candidate;
            current = eval;
            stats.accepted += 1;
            if x.iter().any(|v| v.abs() > config.runaway_bound) {
                return Err(Error::Sampler(format!(
                    "chain ran away to ({}, {}) at step {index}; the target may be improper",
                    x[0], x[1]
                )));
            }
        }
        sample = ChainSample {
            index,
            theta: x,
            accepted,
            used_surrogate: current.used_surrogate,
        };
        if is_retained(index, config.burn_in, config.thin, count) {
            sink(&sample)?;
        }
    }
    Ok(stats)
}

/// Runs the chain and keeps the retained states in memory.
pub fn rwmh(
    target: &mut impl LogTarget,
    proposal: &impl Proposal,
    config: &ChainConfig,
) -> Result<Chain> {
    let mut samples = Vec::with_capacity(config.retained());
    let stats = rwmh_with(target, proposal, config, |s| {
        samples.push(*s);
        Ok(())
    })?;
    Ok(Chain { samples, stats })
}

/// Pilot run settings for [`tune_beta`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotConfig {
    pub initial_beta: f64,
    /// Steps per tuning batch (at least 1,000).
    pub batch_len: usize,
    pub max_rounds: usize,
    pub target_acceptance: f64,
    /// Half-width of the acceptance band counted as converged.
    pub band: f64,
    pub seed: u64,
    pub initial: InitialState,
}

impl PilotConfig {
    pub fn new(initial_beta: f64, seed: u64) -> Self {
        Self {
            initial_beta,
            batch_len: 2000,
            max_rounds: 60,
            target_acceptance: 0.23,
            band: 0.02,
            seed,
            initial: InitialState::Draw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneResult {
    pub beta: f64,
    /// Acceptance measured in the batches that produced `beta`.
    pub acceptance: f64,
    pub rounds: usize,
    pub converged: bool,
    /// Last pilot state, a warm start for the production chain.
    pub state: State,
}

/// `Phi^{-1}(p)` of the standard normal.
fn probit(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Adjusts the random walk scale over successive pilot batches until the
/// acceptance rate settles near the target. Uses the Gaussian-limit relation
/// `acc = 2 Phi(-c beta)`, damped, so a well-tuned `beta` is a fixed point.
pub fn tune_beta(target: &mut impl LogTarget, pilot: &PilotConfig) -> Result<TuneResult> {
    if pilot.batch_len < 1000 {
        return Err(invalid(format!(
            "pilot batches need at least 1000 steps, got {}",
            pilot.batch_len
        )));
    }
    if !(pilot.initial_beta.is_finite() && pilot.initial_beta > 0.0) {
        return Err(invalid("pilot initial beta must be positive"));
    }
    if pilot.max_rounds == 0 {
        return Err(invalid("pilot needs at least one round"));
    }
    let goal = pilot.target_acceptance;
    let mut beta = pilot.initial_beta;
    let mut initial = pilot.initial;
    let mut state = [0.0; 2];
    let mut streak: Vec<(f64, f64)> = Vec::new();
    let mut best = (f64::INFINITY, beta, 0.0);
    for round in 0..pilot.max_rounds {
        let mut config = ChainConfig::new(
            pilot.batch_len + 1,
            0,
            beta,
            pilot.seed.wrapping_add(round as u64),
        );
        config.initial = initial;
        config.runaway_bound = f64::INFINITY;
        let mut last = state;
        let stats = rwmh_with(target, &GaussianRandomWalk { beta }, &config, |s| {
            last = s.theta;
            Ok(())
        })?;
        state = last;
        initial = InitialState::Explicit(state);
        let acc = stats.acceptance_rate();
        log::debug!("pilot round {round}: beta = {beta:.4e}, acceptance = {acc:.3}");

        let miss = (acc - goal).abs();
        if miss < best.0 {
            best = (miss, beta, acc);
        }
        if miss < pilot.band {
            streak.push((beta, acc));
            if streak.len() == 3 {
                let beta = (streak.iter().map(|(b, _)| b.ln()).sum::<f64>() / 3.0).exp();
                let acceptance = streak.iter().map(|(_, a)| a).sum::<f64>() / 3.0;
                return Ok(TuneResult {
                    beta,
                    acceptance,
                    rounds: round + 1,
                    converged: true,
                    state,
                });
            }
        } else {
            streak.clear();
        }
        let clamped = acc.clamp(0.01, 0.99);
        let ratio = probit(goal / 2.0) / probit(clamped / 2.0);
        beta *= ratio.powf(0.7);
    }
    let (_, beta, acceptance) = best;
    if !(0.1..=0.5).contains(&acceptance) {
        log::warn!("beta tuning did not converge; best pilot acceptance {acceptance:.3} at beta {beta:.4e}");
    } else {
        log::warn!(
            "beta tuning did not settle within {} rounds; using beta {beta:.4e}",
            pilot.max_rounds
        );
    }
    Ok(TuneResult {
        beta,
        acceptance,
        rounds: pilot.max_rounds,
        converged: false,
        state,
    })
}
