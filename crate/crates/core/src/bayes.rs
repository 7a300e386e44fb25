//! Priors, the noise-marginalized likelihood and the posterior log density on
//! `theta = (ln lambda, ln I)`.
//!
//! With Gaussian noise of unknown variance `sigma^2 ~ InvGamma(alpha, beta)`,
//! integrating `sigma^2` out leaves a multivariate t density in the residual
//! with `nu = 2 alpha` degrees of freedom and scale `beta / alpha`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::mcmc::{LogTarget, State, TargetEval};
use crate::solver::{ForwardModel, SgfemSurrogate, SurrogateBox, Thermogram};

/// Log-normal prior on `lambda` and inverse-gamma prior on the noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub m_lambda: f64,
    pub s_lambda: f64,
    pub alpha_sigma: f64,
    pub beta_sigma: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::from_moments(328.5, 50.0, 3.0, 0.0079).expect("default prior is valid")
    }
}

impl PriorSpec {
    /// Prior whose `lambda` marginal has mean `mu` and standard deviation `sd`.
    pub fn from_moments(mu: f64, sd: f64, alpha_sigma: f64, beta_sigma: f64) -> Result<Self> {
        let (m_lambda, s_lambda) = lognormal_hyperparams(mu, sd)?;
        let prior = Self {
            m_lambda,
            s_lambda,
            alpha_sigma,
            beta_sigma,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m_lambda.is_finite() && self.s_lambda.is_finite() && self.s_lambda > 0.0) {
            return Err(invalid("prior: s_lambda must be positive and finite"));
        }
        if !(self.alpha_sigma.is_finite() && self.alpha_sigma > 1.0) {
            return Err(invalid(format!(
                "prior.alpha_sigma must exceed 1, got {}",
                self.alpha_sigma
            )));
        }
        if !(self.beta_sigma.is_finite() && self.beta_sigma > 0.0) {
            return Err(invalid(format!(
                "prior.beta_sigma must be positive, got {}",
                self.beta_sigma
            )));
        }
        Ok(())
    }
}

/// `(m, s)` of the log-normal with mean `mu` and standard deviation `sigma`.
pub fn lognormal_hyperparams(mu: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(mu.is_finite() && mu > 0.0 && sigma.is_finite() && sigma > 0.0) {
        return Err(invalid(format!(
            "log-normal moments must be positive, got mean {mu}, sd {sigma}"
        )));
    }
    let s2 = (sigma / mu).powi(2).ln_1p();
    Ok((mu.ln() - 0.5 * s2, s2.sqrt()))
}

/// Parameters in log space: `theta1 = ln lambda`, `theta2 = ln I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub theta1: f64,
    pub theta2: f64,
}

impl Theta {
    pub fn from_physical(lambda: f64, intensity: f64) -> Self {
        Self {
            theta1: lambda.ln(),
            theta2: intensity.ln(),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.theta1.exp()
    }

    pub fn intensity(&self) -> f64 {
        self.theta2.exp()
    }

    pub fn as_state(&self) -> State {
        [self.theta1, self.theta2]
    }
}

impl From<State> for Theta {
    fn from(x: State) -> Self {
        Self {
            theta1: x[0],
            theta2: x[1],
        }
    }
}

/// Unnormalized log prior: Gaussian in `theta1`, `exp(theta2)` (improper) in `theta2`.
pub fn log_prior(theta: Theta, prior: &PriorSpec) -> f64 {
    let z = theta.theta1 - prior.m_lambda;
    -z * z / (2.0 * prior.s_lambda * prior.s_lambda) + theta.theta2
}

/// `||d - g||^2 / (2 sigma2)`.
pub fn potential(d: &[f64], g: &[f64], sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    Ok(squared_residual(d, g)? / (2.0 * sigma2))
}

fn squared_residual(d: &[f64], g: &[f64]) -> Result<f64> {
    if d.len() != g.len() {
        return Err(Error::InvalidInput(format!(
            "data has {} points but the model has {}",
            d.len(),
            g.len()
        )));
    }
    Ok(d.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Multivariate t log density for a fixed number of observations, with the
/// normalizing constant precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalLikelihood {
    nu: f64,
    scale: f64,
    n: usize,
    constant: f64,
}

impl MarginalLikelihood {
    pub fn new(prior: &PriorSpec, n: usize) -> Self {
        let nu = 2.0 * prior.alpha_sigma;
        let scale = prior.beta_sigma / prior.alpha_sigma;
        let half = 0.5 * (nu + n as f64);
        let constant = ln_gamma(half)
            - ln_gamma(0.5 * nu)
            - 0.5 * n as f64 * (nu * std::f64::consts::PI * scale).ln();
        Self {
            nu,
            scale,
            n,
            constant,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Log density as a function of `||d - g||^2`.
    pub fn from_squared_residual(&self, sq: f64) -> f64 {
        self.constant - 0.5 * (self.nu + self.n as f64) * (sq / (self.nu * self.scale)).ln_1p()
    }
}

/// Log of the noise-marginalized likelihood of data `d` given model output `g`.
pub fn log_marginal_likelihood(d: &[f64], g: &[f64], prior: &PriorSpec) -> Result<f64> {
    let sq = squared_residual(d, g)?;
    Ok(MarginalLikelihood::new(prior, d.len()).from_squared_residual(sq))
}

/// Which forward model a target evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Surrogate inside its box, deterministic solve outside.
    Auto,
    Surrogate,
    Plain,
}

/// Posterior log density of `theta` given one thermogram.
pub struct PosteriorTarget<'a> {
    data: &'a [f64],
    prior: PriorSpec,
    likelihood: MarginalLikelihood,
    surrogate: Option<&'a SgfemSurrogate>,
    model: &'a ForwardModel,
    /// Range of the initial `ln I` draw.
    intensity_range: (f64, f64),
    psi: Vec<f64>,
    g: Vec<f64>,
}

fn check_times(data: &[f64], model: &[f64], what: &str) -> Result<()> {
    if data.len() != model.len() {
        return Err(Error::InvalidInput(format!(
            "data has {} observation times but the {what} has {}",
            data.len(),
            model.len()
        )));
    }
    let span = model
        .last()
        .copied()
        .unwrap_or(1.0)
        .abs()
        .max(f64::MIN_POSITIVE);
    if let Some((a, b)) = data
        .iter()
        .zip(model)
        .find(|(a, b)| (*a - *b).abs() > 1e-9 * span)
    {
        return Err(Error::InvalidInput(format!(
            "data time {a} does not match {what} time {b}"
        )));
    }
    Ok(())
}

impl<'a> PosteriorTarget<'a> {
    pub fn new(
        data: &'a Thermogram,
        prior: PriorSpec,
        surrogate: Option<&'a SgfemSurrogate>,
        model: &'a ForwardModel,
    ) -> Result<Self> {
        prior.validate()?;
        check_times(
            &data.times,
            &model.disc.measurement_times(),
            "forward model",
        )?;
        let bounds = match surrogate {
            Some(s) => {
                check_times(&data.times, &s.times, "surrogate")?;
                s.bounds
            }
            None => SurrogateBox::default(),
        };
        let n_k = surrogate.map_or(0, |s| s.n_modes());
        Ok(Self {
            data: &data.temps,
            prior,
            likelihood: MarginalLikelihood::new(&prior, data.len()),
            surrogate,
            model,
            intensity_range: bounds.intensity_range(),
            psi: vec![0.0; n_k],
            g: vec![0.0; data.len()],
        })
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    /// Model thermogram at `theta` through the requested branch.
    pub fn model_output(&mut self, theta: Theta, branch: Branch) -> Result<(Vec<f64>, bool)> {
        let used = self.fill_model(theta, branch)?;
        Ok((self.g.clone(), used))
    }

    fn fill_model(&mut self, theta: Theta, branch: Branch) -> Result<bool> {
        let (lambda, intensity) = (theta.lambda(), theta.intensity());
        let surrogate = match (branch, self.surrogate) {
            (Branch::Plain, _) | (Branch::Auto, None) => None,
            (Branch::Surrogate, None) => return Err(invalid("no surrogate available")),
            (Branch::Auto, Some(s)) => Some(s).filter(|s| s.bounds.contains(lambda, intensity)),
            (Branch::Surrogate, Some(s)) => Some(s),
        };
        match surrogate {
            Some(s) => {
                let y = s.bounds.to_reference(lambda, intensity);
                s.evaluate_into(y, &mut self.psi, &mut self.g)?;
                Ok(true)
            }
            None => {
                let t = self.model.plain_solve(lambda, intensity)?;
                self.g.copy_from_slice(&t.temps);
                Ok(false)
            }
        }
    }

    pub fn evaluate_with(&mut self, theta: Theta, branch: Branch) -> Result<TargetEval> {
        if !(theta.theta1.is_finite() && theta.theta2.is_finite()) {
            return Err(invalid("theta must be finite"));
        }
        let used_surrogate = self.fill_model(theta, branch)?;
        let sq = squared_residual(self.data, &self.g)?;
        let log_density = self.likelihood.from_squared_residual(sq) + log_prior(theta, &self.prior);
        Ok(TargetEval {
            log_density,
            used_surrogate,
        })
    }
}

impl LogTarget for PosteriorTarget<'_> {
    fn evaluate(&mut self, x: State) -> Result<TargetEval> {
        // exp overflow makes the plain solve reject the point; that is a rejection, not a failure
        if !(x[0].is_finite() && x[1].is_finite())
            || x[0].exp() == f64::INFINITY
            || x[1].exp() == f64::INFINITY
        {
            return Ok(TargetEval {
                log_density: f64::NEG_INFINITY,
                used_surrogate: false,
            });
        }
        self.evaluate_with(Theta::from(x), Branch::Auto)
    }

    /// `theta1` from its prior; `theta2` uniform over the log of the box's
    /// intensity range, since its prior cannot be sampled.
    fn draw_initial(&mut self, rng: &mut ChaCha8Rng) -> Option<State> {
        let normal = Normal::new(self.prior.m_lambda, self.prior.s_lambda).ok()?;
        let (lo, hi) = self.intensity_range;
        let lo = lo.max(hi * 1e-6);
        Some([normal.sample(rng), rng.random_range(lo.ln()..=hi.ln())])
    }
}
