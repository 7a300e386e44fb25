//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any fails. Run with `cargo test --test acceptance`.

use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use flashbayes::bayes::{log_marginal_likelihood, PosteriorTarget, PriorSpec};
use flashbayes::config::ExperimentConfig;
use flashbayes::fem::LaserProfile;
use flashbayes::io;
use flashbayes::mcmc::{rwmh, ChainConfig, FnTarget, GaussianRandomWalk, InitialState, State};
use flashbayes::pce::build_basis;
use flashbayes::pipeline;
use flashbayes::quadrature::gauss_legendre;
use flashbayes::solver::{
    plain_solve_trajectory, DiscretizationParams, ForwardModel, SgfemOptions, SgfemSurrogate,
    SurrogateBox, Thermogram,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;
type Criterion = (&'static str, f64, fn() -> Outcome);

const LAMBDA_TRUE: f64 = 355.15;
const INTENSITY_TRUE: f64 = 1.1816e12;
const NOISE_SD: f64 = 0.05;
const DESK_H: f64 = 1.75e-4;

fn copper_config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/copper.toml");
    ExperimentConfig::load(&path, &[]).expect("shipped config loads")
}

fn with_overrides(sets: &[&str]) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/copper.toml");
    let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::load(&path, &sets).expect("config with overrides loads")
}

fn model_for(config: &ExperimentConfig, n_t: usize, n_d: usize, k: usize, h: f64) -> ForwardModel {
    let disc = DiscretizationParams::new(config.geometry.duration, n_t, n_d, k).unwrap();
    ForwardModel::build(config.geometry, config.material, config.profile, disc, h).unwrap()
}

fn rise(t: &Thermogram, ta: f64) -> f64 {
    t.temps.iter().fold(0.0f64, |a, v| a.max((v - ta).abs()))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let (lo, frac) = (pos.floor() as usize, pos.fract());
    if lo + 1 < sorted.len() {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    } else {
        sorted[lo]
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Desk-scale experiment shared by the end-to-end criteria: the shipped
/// config (n_h near 1000, k = 6, 400 steps) and synthetic data at the truth.
struct Desk {
    config: ExperimentConfig,
    model: ForwardModel,
    surrogate: SgfemSurrogate,
    data: Thermogram,
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let config = copper_config();
        let (surrogate, model, _) = pipeline::build_surrogate(&config).unwrap();
        let data =
            pipeline::synthesize_data(&model, LAMBDA_TRUE, INTENSITY_TRUE, NOISE_SD, 2024).unwrap();
        Desk {
            config,
            model,
            surrogate,
            data,
        }
    })
}

fn basis_dimension() -> Outcome {
    let n_k = build_basis(6).len();
    Ok((n_k == 28, format!("n_k = {n_k}")))
}

fn orthonormality() -> Outcome {
    let basis = build_basis(8);
    // 12 points integrate products of degree-8 polynomials exactly; rescale to
    // the uniform density on [-sqrt3, sqrt3]
    let (x, w) = gauss_legendre(12);
    let s3 = 3f64.sqrt();
    let n = basis.len();
    let mut gram = vec![0.0; n * n];
    for (xa, wa) in x.iter().zip(&w) {
        for (xb, wb) in x.iter().zip(&w) {
            let psi = basis.eval([s3 * xa, s3 * xb])?;
            let weight = 0.25 * wa * wb;
            for j in 0..n {
                for s in 0..n {
                    gram[j * n + s] += weight * psi[j] * psi[s];
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for j in 0..n {
        for s in 0..n {
            let delta = if j == s { 1.0 } else { 0.0 };
            worst = worst.max((gram[j * n + s] - delta).abs());
        }
    }
    Ok((
        worst <= 1e-12,
        format!("max |<psi_j psi_s> - delta| = {worst:.2e} over {n} modes"),
    ))
}

fn latin_hypercube(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let s3 = 3f64.sqrt();
    let mut cols: Vec<Vec<f64>> = (0..2)
        .map(|_| {
            let mut strata: Vec<usize> = (0..n).collect();
            strata.shuffle(rng);
            strata
                .iter()
                .map(|&k| -s3 + 2.0 * s3 * (k as f64 + rng.random::<f64>()) / n as f64)
                .collect()
        })
        .collect();
    let b = cols.pop().unwrap();
    let a = cols.pop().unwrap();
    a.into_iter().zip(b).map(|(x, y)| [x, y]).collect()
}

fn surrogate_equivalence() -> Outcome {
    let config = copper_config();
    let bounds = SurrogateBox::default();
    let ta = config.material.ambient_temperature;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let points = latin_hypercube(20, &mut rng);
    let plain_model = model_for(&config, 80, 81, 1, DESK_H);
    let plain: Vec<Thermogram> = points
        .iter()
        .map(|y| {
            let (l, i) = bounds.to_physical(*y);
            plain_model.plain_solve(l, i)
        })
        .collect::<Result<_, _>>()?;
    let mut errors = Vec::new();
    for k in [1, 2, 4, 6] {
        let model = model_for(&config, 80, 81, k, DESK_H);
        let s = model.sgfem_solve(&build_basis(k), &bounds, &SgfemOptions::default())?;
        let mut worst = 0.0f64;
        for (y, p) in points.iter().zip(&plain) {
            let g = s.evaluate(*y)?;
            worst = worst.max(max_abs_diff(&g.temps, &p.temps) / rise(p, ta));
        }
        errors.push((k, worst));
    }
    let err = |k| errors.iter().find(|e| e.0 == k).unwrap().1;
    let pass = err(6) <= 1e-3 && err(6) <= err(2) / 10.0;
    let detail = errors
        .iter()
        .map(|(k, e)| format!("k={k}: {e:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((
        pass,
        format!(
            "n_h = {}, rise-relative Linf error {detail}",
            plain_model.ops.n_h
        ),
    ))
}

fn fitted_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>()
}

/// Order measured in the discrete L2-in-time norm over the observation grid.
/// The pointwise error right after the flash decays like tau / t (non-smooth
/// source), so the max-in-time norm is reported but is pre-asymptotic here.
fn implicit_euler_order() -> Outcome {
    let config = copper_config();
    let reference =
        model_for(&config, 1600, 51, 1, 3.5e-4).plain_solve(LAMBDA_TRUE, INTENSITY_TRUE)?;
    let (mut l2, mut linf) = (Vec::new(), Vec::new());
    for n_t in [50, 100, 200] {
        let t = model_for(&config, n_t, 51, 1, 3.5e-4).plain_solve(LAMBDA_TRUE, INTENSITY_TRUE)?;
        let tau = (config.geometry.duration / n_t as f64).ln();
        let rms = (t
            .temps
            .iter()
            .zip(&reference.temps)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / t.len() as f64)
            .sqrt();
        l2.push((tau, rms.ln()));
        linf.push((tau, max_abs_diff(&t.temps, &reference.temps).ln()));
    }
    let order = fitted_slope(&l2);
    let errs: Vec<String> = l2.iter().map(|p| format!("{:.3e}", p.1.exp())).collect();
    Ok((
        (0.8..=1.2).contains(&order),
        format!(
            "order {order:.3} (rms errors {}); max-in-time order {:.3}",
            errs.join(", "),
            fitted_slope(&linf)
        ),
    ))
}

fn insulated(config: &mut ExperimentConfig) {
    config.material.heat_transfer = 0.0;
    config.profile = LaserProfile::Uniform;
}

fn energy_balance() -> Outcome {
    let mut config = copper_config();
    insulated(&mut config);
    let rc = config.material.heat_capacity();
    let g = config.geometry;
    // deposited energy per unit volume over heat capacity: I z_f (1 - e^{-H/z_f}) t_f / (H rho c)
    let expected = 1e12
        * g.penetration_depth
        * (1.0 - (-g.height / g.penetration_depth).exp())
        * g.flash_duration
        / (g.height * rc);
    let model = model_for(&config, 800, 401, 1, DESK_H);
    let ones = vec![1.0; model.ops.n_h];
    let volume: f64 = model.ops.mass.mul_vec(&ones).iter().sum();
    let mut terminal = 0.0;
    plain_solve_trajectory(
        &model.ops,
        &model.material,
        &model.geometry,
        &model.disc,
        350.0,
        1e12,
        |step, u| {
            if step == model.disc.n_steps {
                terminal = model.ops.mass.mul_vec(u).iter().sum::<f64>() / volume;
            }
        },
    )?;
    let target = 385.0 + 7.051;
    let rel = ((terminal - target) / target).abs();
    Ok((
        rel <= 5e-3,
        format!("terminal mean {terminal:.4} K vs {target:.3} K (deposited {expected:.4} K), rel {rel:.2e}"),
    ))
}

/// Rear-face rise of an insulated slab after an instantaneous surface pulse,
/// normalized to its limit.
fn slab_series(t: f64, alpha: f64, h: f64) -> f64 {
    let mut v = 1.0;
    for n in 1..200 {
        let sign = if n % 2 == 1 { -1.0 } else { 1.0 };
        v += 2.0
            * sign
            * (-(n * n) as f64 * std::f64::consts::PI.powi(2) * alpha * t / (h * h)).exp();
    }
    v
}

fn half_rise_time(times: &[f64], values: &[f64], half: f64) -> Option<f64> {
    let k = values.iter().position(|v| *v >= half)?;
    if k == 0 {
        return Some(times[0]);
    }
    let (t0, t1, v0, v1) = (times[k - 1], times[k], values[k - 1], values[k]);
    Some(t0 + (half - v0) / (v1 - v0) * (t1 - t0))
}

fn parker_half_rise() -> Outcome {
    let mut config = copper_config();
    insulated(&mut config);
    let lambda = 350.0;
    let alpha = lambda / config.material.heat_capacity();
    let h = config.geometry.height;
    let model = model_for(&config, 1600, 1601, 1, 1e-4);
    let t = model.plain_solve(lambda, 1e12)?;
    let ta = config.material.ambient_temperature;
    let rises: Vec<f64> = t.temps.iter().map(|v| v - ta).collect();
    let top = rises.iter().cloned().fold(0.0, f64::max);
    let t_half = half_rise_time(&t.times, &rises, 0.5 * top).ok_or("no half rise")?;
    let recovered = 0.1388 * h * h / t_half;
    let rel = (recovered / alpha - 1.0).abs();

    // the slab series on the same grid reproduces the 0.1388 constant
    let fine: Vec<f64> = (0..=20_000).map(|j| 0.04 * j as f64 / 20_000.0).collect();
    let series: Vec<f64> = fine
        .iter()
        .map(|&s| slab_series(s.max(1e-12), alpha, h))
        .collect();
    let oracle_half = half_rise_time(&fine, &series, 0.5).ok_or("series never reaches half")?;
    let constant = oracle_half * alpha / (h * h);
    let pass = rel <= 0.05 && (constant - 0.1388).abs() < 5e-4;
    Ok((
        pass,
        format!(
            "t_half {t_half:.4e} s, alpha {recovered:.4e} vs {alpha:.4e} (rel {rel:.2e}); series constant {constant:.5}"
        ),
    ))
}

fn conjugacy() -> Outcome {
    let prior = PriorSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (lo, hi, steps) = (-45.0f64, 25.0f64, 70_000usize);
    let du = (hi - lo) / steps as f64;
    let mut worst = 0.0f64;
    for case in 0..50 {
        let n = 1 + case % 10;
        let scale = 10f64.powf(rng.random_range(-3.0..0.5));
        let g: Vec<f64> = (0..n).map(|_| 385.0 + 5.0 * rng.random::<f64>()).collect();
        let d: Vec<f64> = g
            .iter()
            .map(|x| x + scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let closed = log_marginal_likelihood(&d, &g, &prior)?;
        let sq: f64 = d.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum();
        let (a, b) = (prior.alpha_sigma, prior.beta_sigma);
        let terms: Vec<f64> = (0..=steps)
            .map(|j| {
                let u = lo + j as f64 * du;
                let s2 = u.exp();
                let gauss =
                    -0.5 * n as f64 * (2.0 * std::f64::consts::PI * s2).ln() - sq / (2.0 * s2);
                let inv_gamma = a * b.ln() - ln_gamma(a) - (a + 1.0) * u - b / s2;
                let w = if j == 0 || j == steps { 0.5 } else { 1.0 };
                gauss + inv_gamma + u + (w * du).ln()
            })
            .collect();
        let quad = log_sum_exp(&terms);
        worst = worst.max(((closed - quad) / quad).abs());
    }
    Ok((
        worst <= 1e-6,
        format!("worst relative deviation {worst:.2e} over 50 residual vectors"),
    ))
}

fn gaussian_target() -> (impl FnMut(State) -> f64 + Clone, [f64; 2], [[f64; 2]; 2]) {
    let mean = [1.0, -0.5];
    let cov = [[1.0, 0.6], [0.6, 2.0]];
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let inv = [
        [cov[1][1] / det, -cov[0][1] / det],
        [-cov[1][0] / det, cov[0][0] / det],
    ];
    let f = move |x: State| {
        let (a, b) = (x[0] - mean[0], x[1] - mean[1]);
        -0.5 * (a * a * inv[0][0] + 2.0 * a * b * inv[0][1] + b * b * inv[1][1])
    };
    (f, mean, cov)
}

fn draw_gaussian(mean: [f64; 2], cov: [[f64; 2]; 2], rng: &mut ChaCha8Rng) -> State {
    let l11 = cov[0][0].sqrt();
    let l21 = cov[1][0] / l11;
    let l22 = (cov[1][1] - l21 * l21).sqrt();
    let (z1, z2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
    [mean[0] + l11 * z1, mean[1] + l21 * z1 + l22 * z2]
}

fn sampler_correctness() -> Outcome {
    let (f, mean, cov) = gaussian_target();
    let beta = 2.4 / 2f64.sqrt();
    let config = ChainConfig {
        initial: InitialState::Explicit(mean),
        ..ChainConfig::new(200_000, 0, beta, 5)
    };
    let chain = rwmh(
        &mut FnTarget(f.clone()),
        &GaussianRandomWalk { beta },
        &config,
    )?;
    let xs: Vec<State> = chain.thetas().collect();
    let n = xs.len() as f64;
    let m = [
        xs.iter().map(|x| x[0]).sum::<f64>() / n,
        xs.iter().map(|x| x[1]).sum::<f64>() / n,
    ];
    let mut c = [[0.0; 2]; 2];
    for x in &xs {
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] += (x[i] - m[i]) * (x[j] - m[j]) / (n - 1.0);
            }
        }
    }
    let mean_err = (m[0] - mean[0]).abs().max((m[1] - mean[1]).abs());
    let cov_err = (0..4)
        .map(|k| (c[k / 2][k % 2] - cov[k / 2][k % 2]).abs())
        .fold(0.0, f64::max);

    // Monte Carlo error of the mean from stationary starts
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut pts = Vec::new();
    for len in [1_000usize, 10_000, 100_000] {
        let mut sq = 0.0;
        let reps = 100;
        for r in 0..reps {
            let start = draw_gaussian(mean, cov, &mut rng);
            let cfg = ChainConfig {
                initial: InitialState::Explicit(start),
                ..ChainConfig::new(len, 0, beta, 1000 + r)
            };
            let ch = rwmh(&mut FnTarget(f.clone()), &GaussianRandomWalk { beta }, &cfg)?;
            let k = ch.samples.len() as f64;
            let est = ch
                .thetas()
                .fold([0.0, 0.0], |a, x| [a[0] + x[0] / k, a[1] + x[1] / k]);
            sq += (est[0] - mean[0]).powi(2) + (est[1] - mean[1]).powi(2);
        }
        pts.push(((len as f64).ln(), (sq / reps as f64).sqrt().ln()));
    }
    let slope = fitted_slope(&pts);
    let pass = mean_err <= 0.02 && cov_err <= 0.05 && (slope + 0.5).abs() <= 0.15;
    Ok((
        pass,
        format!(
            "mean err {mean_err:.4}, cov err {cov_err:.4}, acceptance {:.3}, MC error slope {slope:.3}",
            chain.stats.acceptance_rate()
        ),
    ))
}

fn central_interval(mut v: Vec<f64>) -> (f64, f64) {
    v.sort_by(|a, b| a.total_cmp(b));
    (quantile(&v, 0.025), quantile(&v, 0.975))
}

fn posterior_recovery() -> Outcome {
    let d = desk();
    let mut config = d.config.clone();
    config.chain.samples = 500_000;
    config.chain.burn_in = 10_000;
    config.chain.seed = 41;
    let runs = pipeline::run_chains(&config, &d.data, Some(&d.surrogate), &d.model, None)?;
    let run = &runs[0];
    let acceptance = run.stats.acceptance_rate();
    let lambdas: Vec<f64> = run.samples.iter().map(|s| s.theta[0].exp()).collect();
    let intensities: Vec<f64> = run.samples.iter().map(|s| s.theta[1].exp()).collect();
    let (summary, _, _) = pipeline::summarize_chains(
        &config,
        std::slice::from_ref(&run.samples),
        Some(&d.surrogate),
        &d.model,
    )?;
    let (l_lo, l_hi) = central_interval(lambdas);
    let (i_lo, i_hi) = central_interval(intensities);
    let corr = summary.corr_lambda_intensity.unwrap_or(f64::NAN);
    let pass = (0.15..=0.35).contains(&acceptance)
        && (l_lo..=l_hi).contains(&LAMBDA_TRUE)
        && (i_lo..=i_hi).contains(&INTENSITY_TRUE)
        && corr < 0.0;
    Ok((
        pass,
        format!(
            "acceptance {acceptance:.3} (beta {:.3e}); lambda 95% [{l_lo:.2}, {l_hi:.2}], I 95% [{i_lo:.5e}, {i_hi:.5e}], corr {corr:.3}, fallback {:.4}",
            run.stats.beta,
            run.stats.fallback_fraction()
        ),
    ))
}

/// Wall time per target evaluation of one fixed-beta chain started at the truth.
fn per_sample_seconds(
    data: &Thermogram,
    config: &ExperimentConfig,
    s: &SgfemSurrogate,
    model: &ForwardModel,
    beta: f64,
    seed: u64,
) -> f64 {
    let mut target = PosteriorTarget::new(data, config.prior, Some(s), model).unwrap();
    let start = [LAMBDA_TRUE.ln(), INTENSITY_TRUE.ln()];
    let cfg = ChainConfig {
        initial: InitialState::Explicit(start),
        ..ChainConfig::new(100_000, 0, beta, seed)
    };
    let t0 = Instant::now();
    let chain = rwmh(&mut target, &GaussianRandomWalk { beta }, &cfg).unwrap();
    t0.elapsed().as_secs_f64() / chain.stats.evaluations.max(1) as f64
}

fn speedup() -> Outcome {
    let d = desk();
    let beta = 1.5e-3;
    let plain_seconds = (0..5)
        .map(|_| {
            let t0 = Instant::now();
            d.model.plain_solve(LAMBDA_TRUE, INTENSITY_TRUE).unwrap();
            t0.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min);

    let fine_config = with_overrides(&["discretization.h_target=8.75e-5"]);
    let (fine_surrogate, fine_model, _) = pipeline::build_surrogate(&fine_config)?;
    // interleaved repeats, best of each, so warm-up and frequency drift hit both alike
    let (mut coarse, mut fine) = (f64::INFINITY, f64::INFINITY);
    for rep in 0..5 {
        coarse = coarse.min(per_sample_seconds(
            &d.data,
            &d.config,
            &d.surrogate,
            &d.model,
            beta,
            500 + rep,
        ));
        fine = fine.min(per_sample_seconds(
            &d.data,
            &fine_config,
            &fine_surrogate,
            &fine_model,
            beta,
            500 + rep,
        ));
    }
    let ratio = coarse / plain_seconds;
    let drift = fine / coarse - 1.0;
    let pass = ratio <= 0.01 && drift.abs() <= 0.2;
    Ok((
        pass,
        format!(
            "plain solve {plain_seconds:.3e} s (n_h {}), per sample {coarse:.3e} s (ratio {ratio:.2e}); n_h {} per sample {fine:.3e} s (change {:+.1}%)",
            d.model.ops.n_h,
            fine_model.ops.n_h,
            100.0 * drift
        ),
    ))
}

/// Best least-squares fit over a lambda scan; the output is affine in I, so
/// the optimal I at each lambda is closed form.
fn profile_fit(
    model: &ForwardModel,
    data: &Thermogram,
) -> Result<(f64, f64), Box<dyn std::error::Error>> {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for j in 0..=120 {
        let lambda = 150.0 * (507.0f64 / 150.0).powf(j as f64 / 120.0);
        let g0 = model.plain_solve(lambda, 0.0)?;
        let g1 = model.plain_solve(lambda, 1e12)?;
        let basis: Vec<f64> = g1.temps.iter().zip(&g0.temps).map(|(a, b)| a - b).collect();
        let resid: Vec<f64> = data
            .temps
            .iter()
            .zip(&g0.temps)
            .map(|(a, b)| a - b)
            .collect();
        let scale = resid.iter().zip(&basis).map(|(r, b)| r * b).sum::<f64>()
            / basis.iter().map(|b| b * b).sum::<f64>();
        let intensity = (scale * 1e12).max(0.0);
        let misfit: f64 = resid
            .iter()
            .zip(&basis)
            .map(|(r, b)| (r - scale.max(0.0) * b).powi(2))
            .sum();
        if misfit < best.0 {
            best = (misfit, lambda, intensity);
        }
    }
    Ok((best.1, best.2))
}

fn profile_direction() -> Outcome {
    let d = desk();
    let mut uniform = d.config.clone();
    uniform.chain.samples = 100_000;
    uniform.chain.seed = 61;
    let u_runs = pipeline::run_chains(&uniform, &d.data, Some(&d.surrogate), &d.model, None)?;
    let (u_summary, _, _) = pipeline::summarize_chains(
        &uniform,
        std::slice::from_ref(&u_runs[0].samples),
        Some(&d.surrogate),
        &d.model,
    )?;

    let mut gaussian = uniform.clone();
    gaussian.profile = LaserProfile::Gaussian {
        width: gaussian.geometry.radius / 3.0,
    };
    let g_model = pipeline::forward_model(&gaussian)?;
    let (l_fit, i_fit) = profile_fit(&g_model, &d.data)?;
    gaussian.bounds =
        SurrogateBox::from_ranges((0.8 * l_fit, 1.2 * l_fit), (0.8 * i_fit, 1.2 * i_fit));
    gaussian.bounds.validate()?;
    let (g_surrogate, g_model, _) = pipeline::build_surrogate(&gaussian)?;
    let g_runs = pipeline::run_chains(&gaussian, &d.data, Some(&g_surrogate), &g_model, None)?;
    let (g_summary, _, _) = pipeline::summarize_chains(
        &gaussian,
        std::slice::from_ref(&g_runs[0].samples),
        Some(&g_surrogate),
        &g_model,
    )?;
    let pass = g_summary.mean_lambda < u_summary.mean_lambda;
    Ok((
        pass,
        format!(
            "posterior mean lambda: uniform {:.2}, gaussian r_f=R/3 {:.2} (box centred on LS fit {l_fit:.1}, {i_fit:.4e}; fallback {:.4})",
            u_summary.mean_lambda,
            g_summary.mean_lambda,
            g_runs[0].stats.fallback_fraction()
        ),
    ))
}

fn reproducibility() -> Outcome {
    let d = desk();
    let mut config = d.config.clone();
    config.chain.samples = 30_000;
    config.chain.burn_in = 3_000;
    config.chain.chains = 2;
    config.chain.seed = 7;
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir()?;
        let runs = pipeline::run_chains(
            &config,
            &d.data,
            Some(&d.surrogate),
            &d.model,
            Some(dir.path()),
        )?;
        let chains: Vec<_> = runs.iter().map(|r| r.samples.clone()).collect();
        let stats: Vec<_> = runs.iter().map(|r| r.stats).collect();
        let (summary, _, _) =
            pipeline::summarize_chains(&config, &chains, Some(&d.surrogate), &d.model)?;
        let mut text = Vec::new();
        io::write_summary(&mut text, &summary, &stats)?;
        let files: Vec<Vec<u8>> = (7..9)
            .map(|s| std::fs::read(dir.path().join(format!("chain_{s}.csv"))))
            .collect::<Result<_, _>>()?;
        outputs.push((files, text));
    }
    let same_chains = outputs[0].0 == outputs[1].0;
    let same_summary = outputs[0].1 == outputs[1].1;
    let bytes: usize = outputs[0].0.iter().map(|f| f.len()).sum();
    Ok((
        same_chains && same_summary,
        format!("chain CSVs identical: {same_chains} ({bytes} bytes), summaries identical: {same_summary}"),
    ))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("basis dimension", 1.0, basis_dimension),
        ("orthonormality", 1.0, orthonormality),
        ("surrogate-oracle equivalence", 300.0, surrogate_equivalence),
        ("implicit Euler order", 120.0, implicit_euler_order),
        ("energy balance", 30.0, energy_balance),
        ("Parker half-rise", 30.0, parker_half_rise),
        ("conjugacy", 10.0, conjugacy),
        ("sampler correctness", 60.0, sampler_correctness),
        ("posterior recovery", 600.0, posterior_recovery),
        ("speedup", 300.0, speedup),
        ("profile-study direction", 900.0, profile_direction),
        ("reproducibility", 120.0, reproducibility),
    ];
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = run();
        let secs = t0.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok((ok, detail)) => (ok && secs < *budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {name}: {} | {detail} | {secs:.1} s (budget {budget} s)",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
