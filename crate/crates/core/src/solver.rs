//! Implicit Euler time stepping of the deterministic and the parametric
//! (stochastic Galerkin) heat problems.
//!
//! Both solvers factor their time-constant system matrix once and reuse it for
//! every step. The parametric solver works on the coefficient block
//! `U[i][j]` (finite element node `i`, chaos mode `j`) stored row-major, which
//! interleaves the modes of each node and keeps the Kronecker system banded.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fem::{assemble_operators, FemOperators, LaserProfile, MaterialProperties};
use crate::linalg::{Pattern, SparseMatrix, SpdFactor};
use crate::mesh::{build_rect_mesh, ExperimentGeometry};
use crate::pce::{PceBasis, GAMMA_HALF_WIDTH};

/// Time grid and chaos degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationParams {
    /// Number of implicit Euler steps `n_t`.
    pub n_steps: usize,
    /// Number of equally spaced observation times `n_d`, including `t = 0`.
    pub n_obs: usize,
    /// Total polynomial degree `k` of the surrogate.
    pub degree: usize,
    /// Step size `tau = T / n_t` (s).
    pub tau: f64,
}

impl DiscretizationParams {
    pub fn new(duration: f64, n_steps: usize, n_obs: usize, degree: usize) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(invalid(format!(
                "duration must be positive, got {duration}"
            )));
        }
        if n_steps == 0 {
            return Err(invalid("discretization.n_t must be at least 1"));
        }
        if n_obs < 2 {
            return Err(invalid("discretization.n_d must be at least 2"));
        }
        if !n_steps.is_multiple_of(n_obs - 1) {
            return Err(invalid(format!(
                "discretization.n_t = {n_steps} must be a multiple of (n_d - 1) = {}",
                n_obs - 1
            )));
        }
        Ok(Self {
            n_steps,
            n_obs,
            degree,
            tau: duration / n_steps as f64,
        })
    }

    pub fn duration(&self) -> f64 {
        self.tau * self.n_steps as f64
    }

    pub fn steps_per_observation(&self) -> usize {
        self.n_steps / (self.n_obs - 1)
    }

    pub fn measurement_times(&self) -> Vec<f64> {
        let dt = self.duration() / (self.n_obs - 1) as f64;
        (0..self.n_obs).map(|m| m as f64 * dt).collect()
    }

    /// Whether the flash ends exactly on a step boundary.
    pub fn resolves_flash(&self, flash_duration: f64) -> bool {
        let ratio = flash_duration / self.tau;
        (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0)
    }

    fn check_against(&self, geometry: &ExperimentGeometry) -> Result<()> {
        if (self.duration() - geometry.duration).abs() > 1e-12 * geometry.duration {
            return Err(invalid(format!(
                "time grid covers {} s but the experiment lasts {} s",
                self.duration(),
                geometry.duration
            )));
        }
        Ok(())
    }
}

/// Fraction of implicit Euler step `n` (covering `[(n-1) tau, n tau]`) during
/// which the laser is on. Equals the right-endpoint indicator whenever the flash
/// duration is a whole number of steps, and keeps the deposited energy exact
/// otherwise.
pub fn pulse_fraction(step: usize, tau: f64, flash_duration: f64) -> f64 {
    let t0 = (step - 1) as f64 * tau;
    let t1 = step as f64 * tau;
    let frac = ((t1.min(flash_duration) - t0) / tau).clamp(0.0, 1.0);
    if frac < 1e-9 {
        0.0
    } else if frac > 1.0 - 1e-9 {
        1.0
    } else {
        frac
    }
}

/// Affine maps `lambda = mu_l + nu_l y1`, `I = mu_I + nu_I y2` from the reference
/// square `[-sqrt 3, sqrt 3]^2` onto the surrogate's parameter box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateBox {
    pub mu_lambda: f64,
    pub nu_lambda: f64,
    pub mu_intensity: f64,
    pub nu_intensity: f64,
}

impl Default for SurrogateBox {
    /// `lambda` in [150, 507] W/(m K), `I` in [0.6e12, 1.8e12] W/m^3.
    fn default() -> Self {
        Self::from_ranges((150.0, 507.0), (0.6e12, 1.8e12))
    }
}

impl SurrogateBox {
    pub fn from_ranges(lambda: (f64, f64), intensity: (f64, f64)) -> Self {
        Self {
            mu_lambda: 0.5 * (lambda.0 + lambda.1),
            nu_lambda: 0.5 * (lambda.1 - lambda.0) / GAMMA_HALF_WIDTH,
            mu_intensity: 0.5 * (intensity.0 + intensity.1),
            nu_intensity: 0.5 * (intensity.1 - intensity.0) / GAMMA_HALF_WIDTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mu_lambda,
            self.nu_lambda,
            self.mu_intensity,
            self.nu_intensity,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid("surrogate box entries must be finite"));
        }
        if self.nu_lambda <= 0.0 || self.nu_intensity <= 0.0 {
            return Err(invalid(
                "surrogate box half-widths nu_lambda, nu_I must be positive",
            ));
        }
        if self.mu_lambda - GAMMA_HALF_WIDTH * self.nu_lambda <= 0.0 {
            return Err(invalid("surrogate box admits non-positive conductivity"));
        }
        // a zero lower bound comes back as -eps after the half-width division
        if self.mu_intensity - GAMMA_HALF_WIDTH * self.nu_intensity < -1e-12 * self.mu_intensity {
            return Err(invalid("surrogate box admits negative intensity"));
        }
        Ok(())
    }

    pub fn lambda_range(&self) -> (f64, f64) {
        let w = GAMMA_HALF_WIDTH * self.nu_lambda;
        (self.mu_lambda - w, self.mu_lambda + w)
    }

    pub fn intensity_range(&self) -> (f64, f64) {
        let w = GAMMA_HALF_WIDTH * self.nu_intensity;
        (self.mu_intensity - w, self.mu_intensity + w)
    }

    /// Reference point to physical `(lambda, I)`.
    pub fn to_physical(&self, y: [f64; 2]) -> (f64, f64) {
        (
            self.mu_lambda + self.nu_lambda * y[0],
            self.mu_intensity + self.nu_intensity * y[1],
        )
    }

    /// Physical `(lambda, I)` to reference point.
    pub fn to_reference(&self, lambda: f64, intensity: f64) -> [f64; 2] {
        [
            (lambda - self.mu_lambda) / self.nu_lambda,
            (intensity - self.mu_intensity) / self.nu_intensity,
        ]
    }

    /// Closed-box test; admits round-off from the affine map at the faces.
    pub fn contains_reference(y: [f64; 2]) -> bool {
        y.iter()
            .all(|v| v.abs() <= GAMMA_HALF_WIDTH * (1.0 + 1e-12))
    }

    pub fn contains(&self, lambda: f64, intensity: f64) -> bool {
        Self::contains_reference(self.to_reference(lambda, intensity))
    }
}

/// Disc-averaged top-face temperatures at the measurement times.
#[derive(Debug, Clone, PartialEq)]
pub struct Thermogram {
    pub times: Vec<f64>,
    pub temps: Vec<f64>,
}

impl Thermogram {
    pub fn new(times: Vec<f64>, temps: Vec<f64>) -> Result<Self> {
        if times.len() != temps.len() {
            return Err(Error::InvalidInput(format!(
                "thermogram has {} times but {} temperatures",
                times.len(),
                temps.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "thermogram times must be strictly increasing".into(),
            ));
        }
        Ok(Self { times, temps })
    }

    pub fn len(&self) -> usize {
        self.temps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temps.is_empty()
    }
}

fn check_conductivity_and_intensity(lambda: f64, intensity: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid(format!(
            "conductivity must be positive, got {lambda}"
        )));
    }
    if !(intensity.is_finite() && intensity >= 0.0) {
        return Err(invalid(format!(
            "intensity must be non-negative, got {intensity}"
        )));
    }
    Ok(())
}

/// Runs the deterministic solve and calls `visit(step, u)` for `u^0 .. u^{n_t}`.
pub fn plain_solve_trajectory(
    ops: &FemOperators,
    material: &MaterialProperties,
    geometry: &ExperimentGeometry,
    disc: &DiscretizationParams,
    lambda: f64,
    intensity: f64,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<()> {
    check_conductivity_and_intensity(lambda, intensity)?;
    disc.check_against(geometry)?;
    let rc = material.heat_capacity();
    let tau = disc.tau;
    let kappa = material.heat_transfer;
    let ta = material.ambient_temperature;

    let system = SparseMatrix::combination(&[
        (rc, &ops.mass),
        (tau * lambda, &ops.stiffness),
        (tau * kappa, &ops.face_mass),
    ]);
    let factor = SpdFactor::from_sparse(&system)?;

    let n = ops.n_h;
    let mut u = vec![ta; n];
    let mut rhs = vec![0.0; n];
    visit(0, &u);
    for step in 1..=disc.n_steps {
        let s = pulse_fraction(step, tau, geometry.flash_duration);
        ops.mass.mul_vec_into(&u, &mut rhs);
        for i in 0..n {
            rhs[i] =
                rc * rhs[i] + tau * (s * intensity * ops.source[i] + kappa * ta * ops.face_load[i]);
        }
        u = factor.solve(&rhs);
        visit(step, &u);
    }
    Ok(())
}

/// Deterministic forward solve; returns the observed thermogram.
pub fn plain_solve(
    ops: &FemOperators,
    material: &MaterialProperties,
    geometry: &ExperimentGeometry,
    disc: &DiscretizationParams,
    lambda: f64,
    intensity: f64,
) -> Result<Thermogram> {
    let stride = disc.steps_per_observation();
    let mut temps = Vec::with_capacity(disc.n_obs);
    plain_solve_trajectory(
        ops,
        material,
        geometry,
        disc,
        lambda,
        intensity,
        |step, u| {
            if step % stride == 0 {
                temps.push(dot(&ops.observation, u));
            }
        },
    )?;
    Thermogram::new(disc.measurement_times(), temps)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How the Kronecker-structured step system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KroneckerStrategy {
    /// Direct for a single mode, PCG otherwise.
    #[default]
    Auto,
    /// One sparse factorization of the full `n_h n_k` system.
    Direct,
    /// Conjugate gradients preconditioned by the factored mean-parameter block.
    Pcg,
}

#[derive(Debug, Clone)]
pub struct SgfemOptions {
    pub strategy: KroneckerStrategy,
    /// Relative residual target for the PCG strategy.
    pub pcg_tolerance: f64,
    pub pcg_max_iterations: usize,
    /// Steps at which the full coefficient block is retained.
    pub keep_fields_at: Vec<usize>,
}

impl Default for SgfemOptions {
    fn default() -> Self {
        Self {
            strategy: KroneckerStrategy::Auto,
            pcg_tolerance: 1e-12,
            pcg_max_iterations: 500,
            keep_fields_at: Vec::new(),
        }
    }
}

/// Full coefficient block `u_ij` at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateField {
    pub step: usize,
    /// Row-major `n_h x n_k`.
    pub coefficients: Vec<f64>,
}

/// Precomputed parametric solution reduced to the observation functional.
#[derive(Debug, Clone)]
pub struct SgfemSurrogate {
    pub basis: PceBasis,
    pub bounds: SurrogateBox,
    pub disc: DiscretizationParams,
    pub times: Vec<f64>,
    /// Row-major `n_d x n_k`: `B[m][j] = w . u_j(t_m)`.
    observed: Vec<f64>,
    pub fields: Vec<SurrogateField>,
    /// Digest of every input that affects `B`, if known.
    pub input_hash: String,
}

impl SgfemSurrogate {
    pub fn from_parts(
        basis: PceBasis,
        bounds: SurrogateBox,
        disc: DiscretizationParams,
        times: Vec<f64>,
        observed: Vec<f64>,
    ) -> Result<Self> {
        if times.len() != disc.n_obs || observed.len() != disc.n_obs * basis.len() {
            return Err(Error::InvalidInput(format!(
                "surrogate matrix has {} entries, expected {} x {}",
                observed.len(),
                disc.n_obs,
                basis.len()
            )));
        }
        if basis.degree() != disc.degree {
            return Err(Error::InvalidInput(
                "surrogate basis degree disagrees with discretization".into(),
            ));
        }
        Ok(Self {
            basis,
            bounds,
            disc,
            times,
            observed,
            fields: Vec::new(),
            input_hash: String::new(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.times.len()
    }

    pub fn n_modes(&self) -> usize {
        self.basis.len()
    }

    pub fn observation_matrix(&self) -> &[f64] {
        &self.observed
    }

    pub fn row(&self, m: usize) -> &[f64] {
        let nk = self.n_modes();
        &self.observed[m * nk..(m + 1) * nk]
    }

    /// `temps = B psi` for given basis values.
    pub fn apply_into(&self, psi: &[f64], out: &mut [f64]) {
        let nk = self.n_modes();
        for (o, row) in out.iter_mut().zip(self.observed.chunks_exact(nk)) {
            *o = row.iter().zip(psi).map(|(b, p)| b * p).sum();
        }
    }

    /// Thermogram at reference point `y`; costs `O(n_d n_k)`, no solves.
    pub fn evaluate_into(&self, y: [f64; 2], psi: &mut [f64], out: &mut [f64]) -> Result<()> {
        if !SurrogateBox::contains_reference(y) {
            return Err(Error::OutOfBox(y[0], y[1]));
        }
        self.basis.eval_into(y, psi)?;
        self.apply_into(psi, out);
        Ok(())
    }

    pub fn evaluate(&self, y: [f64; 2]) -> Result<Thermogram> {
        let mut psi = vec![0.0; self.n_modes()];
        let mut temps = vec![0.0; self.n_obs()];
        self.evaluate_into(y, &mut psi, &mut temps)?;
        Ok(Thermogram {
            times: self.times.clone(),
            temps,
        })
    }

    /// Thermogram at physical parameters inside the box.
    pub fn evaluate_physical(&self, lambda: f64, intensity: f64) -> Result<Thermogram> {
        self.evaluate(self.bounds.to_reference(lambda, intensity))
    }
}

/// Solves the stochastic Galerkin system for the parametric problem with
/// `lambda(y1)` and `I(y2)` given by `bounds`.
pub fn sgfem_solve(
    ops: &FemOperators,
    material: &MaterialProperties,
    geometry: &ExperimentGeometry,
    basis: &PceBasis,
    bounds: &SurrogateBox,
    disc: &DiscretizationParams,
    options: &SgfemOptions,
) -> Result<SgfemSurrogate> {
    bounds.validate()?;
    disc.check_against(geometry)?;
    if basis.degree() != disc.degree {
        return Err(invalid("basis degree disagrees with discretization degree"));
    }
    let started = Instant::now();
    let rc = material.heat_capacity();
    let tau = disc.tau;
    let kappa = material.heat_transfer;
    let ta = material.ambient_temperature;
    let nh = ops.n_h;
    let nk = basis.len();

    // mean block rc M + tau (mu K + kappa Mb); the y1 fluctuation adds tau nu (G1 x K)
    let mean_block = SparseMatrix::combination(&[
        (rc, &ops.mass),
        (tau * bounds.mu_lambda, &ops.stiffness),
        (tau * kappa, &ops.face_mass),
    ]);
    let g1 = basis.coupling(0);
    let fluct = tau * bounds.nu_lambda;

    // projection of I(y2) = mu_I + nu_I y2 onto the basis: mu_I e1 + nu_I G2 e1
    let g2 = basis.coupling(1);
    let intensity_modes: Vec<f64> = (0..nk)
        .map(|j| bounds.mu_intensity * f64::from(j == 0) + bounds.nu_intensity * g2.get(j, 0))
        .collect();

    let strategy = match options.strategy {
        // the mean preconditioner stays spectrally equivalent for any admissible box,
        // so CG needs a handful of iterations while the Kronecker factor fills badly
        KroneckerStrategy::Auto if nk == 1 => KroneckerStrategy::Direct,
        KroneckerStrategy::Auto => KroneckerStrategy::Pcg,
        s => s,
    };

    let mut stepper = match strategy {
        KroneckerStrategy::Direct => {
            let system = kronecker_system(&mean_block, &ops.stiffness, g1, fluct);
            let factor = SpdFactor::from_sparse(&system)?;
            log::info!(
                "stochastic Galerkin system: n = {}, factor nnz = {}",
                nh * nk,
                factor.factor_nnz()
            );
            Stepper::Direct(Box::new(factor))
        }
        _ => Stepper::Pcg(Box::new(MeanPcg {
            preconditioner: SpdFactor::from_sparse(&mean_block)?,
            mean_block: &mean_block,
            stiffness: &ops.stiffness,
            coupling: g1,
            fluct,
            nk,
            tolerance: options.pcg_tolerance,
            max_iterations: options.pcg_max_iterations,
            iterations: 0,
        })),
    };

    let stride = disc.steps_per_observation();
    let mut u = vec![0.0; nh * nk];
    for i in 0..nh {
        u[i * nk] = ta;
    }
    let mut observed = Vec::with_capacity(disc.n_obs * nk);
    let mut fields = Vec::new();
    let record = |u: &[f64], observed: &mut Vec<f64>| {
        for j in 0..nk {
            observed.push((0..nh).map(|i| ops.observation[i] * u[i * nk + j]).sum());
        }
    };
    record(&u, &mut observed);
    if options.keep_fields_at.contains(&0) {
        fields.push(SurrogateField {
            step: 0,
            coefficients: u.clone(),
        });
    }

    let mut rhs = vec![0.0; nh * nk];
    for step in 1..=disc.n_steps {
        let s = pulse_fraction(step, tau, geometry.flash_duration);
        ops.mass.mul_block_into(&u, nk, &mut rhs);
        for i in 0..nh {
            let row = &mut rhs[i * nk..(i + 1) * nk];
            for (j, r) in row.iter_mut().enumerate() {
                *r = rc * *r + tau * s * ops.source[i] * intensity_modes[j];
            }
            row[0] += tau * kappa * ta * ops.face_load[i];
        }
        stepper.solve(&rhs, &mut u)?;
        if step % stride == 0 {
            record(&u, &mut observed);
        }
        if options.keep_fields_at.contains(&step) {
            fields.push(SurrogateField {
                step,
                coefficients: u.clone(),
            });
        }
    }

    if let Stepper::Pcg(p) = &stepper {
        log::info!(
            "stochastic Galerkin PCG: {} iterations over {} steps",
            p.iterations,
            disc.n_steps
        );
    }
    log::info!(
        "stochastic Galerkin solve finished in {:.3} s",
        started.elapsed().as_secs_f64()
    );

    let mut surrogate = SgfemSurrogate::from_parts(
        basis.clone(),
        *bounds,
        *disc,
        disc.measurement_times(),
        observed,
    )?;
    surrogate.fields = fields;
    Ok(surrogate)
}

/// Assembles `A0 (x) E + fluct K (x) G1` in node-major interleaved ordering
/// (unknown `(i, j)` at `i n_k + j`).
fn kronecker_system(
    mean_block: &SparseMatrix,
    stiffness: &SparseMatrix,
    coupling: &SparseMatrix,
    fluct: f64,
) -> SparseMatrix {
    let sp = mean_block.pattern();
    let cp = coupling.pattern();
    let nh = sp.n();
    let nk = cp.n();
    let mut rows = Vec::with_capacity(nh * nk);
    for i in 0..nh {
        for j in 0..nk {
            let mut row = Vec::with_capacity(sp.row(i).len() * cp.row(j).len());
            for &ip in sp.row(i) {
                row.extend(cp.row(j).iter().map(|&jp| ip * nk + jp));
            }
            rows.push(row);
        }
    }
    let pattern = std::sync::Arc::new(Pattern::from_rows(rows));
    let mut system = SparseMatrix::zeros(pattern);
    for i in 0..nh {
        for (k, &ip) in sp.row(i).iter().enumerate() {
            let offset = sp.row_range(i).start + k;
            let a0 = mean_block.data()[offset];
            let kv = stiffness.data()[offset];
            for j in 0..nk {
                system.add(i * nk + j, ip * nk + j, a0);
                for (c, &jp) in cp.row(j).iter().enumerate() {
                    let g = coupling.data()[cp.row_range(j).start + c];
                    if g != 0.0 {
                        system.add(i * nk + j, ip * nk + jp, fluct * kv * g);
                    }
                }
            }
        }
    }
    system
}

enum Stepper<'a> {
    Direct(Box<SpdFactor>),
    Pcg(Box<MeanPcg<'a>>),
}

impl Stepper<'_> {
    /// Overwrites `u` with the solution; `u` holds the previous step on entry.
    fn solve(&mut self, rhs: &[f64], u: &mut [f64]) -> Result<()> {
        match self {
            Stepper::Direct(f) => {
                let x = f.solve(rhs);
                u.copy_from_slice(&x);
                Ok(())
            }
            Stepper::Pcg(p) => p.solve(rhs, u),
        }
    }
}

/// Matrix-free CG on the Kronecker system with the block-diagonal
/// preconditioner `E (x) A0`.
struct MeanPcg<'a> {
    preconditioner: SpdFactor,
    mean_block: &'a SparseMatrix,
    stiffness: &'a SparseMatrix,
    coupling: &'a SparseMatrix,
    fluct: f64,
    nk: usize,
    tolerance: f64,
    max_iterations: usize,
    iterations: usize,
}

impl MeanPcg<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64], scratch: &mut [f64]) {
        let nk = self.nk;
        self.mean_block.mul_block_into(x, nk, y);
        self.stiffness.mul_block_into(x, nk, scratch);
        let cp = self.coupling.pattern();
        let cd = self.coupling.data();
        for (yi, si) in y.chunks_exact_mut(nk).zip(scratch.chunks_exact(nk)) {
            for j in 0..nk {
                let mut acc = 0.0;
                for k in cp.row_range(j) {
                    acc += cd[k] * si[cp.row(j)[k - cp.row_range(j).start]];
                }
                yi[j] += self.fluct * acc;
            }
        }
    }

    fn solve(&mut self, rhs: &[f64], x: &mut [f64]) -> Result<()> {
        let n = rhs.len();
        let mut r = vec![0.0; n];
        let mut ap = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        self.apply(x, &mut ap, &mut scratch);
        for k in 0..n {
            r[k] = rhs[k] - ap[k];
        }
        let rhs_norm = dot(rhs, rhs).sqrt();
        let target = self.tolerance * rhs_norm;
        if dot(&r, &r).sqrt() <= target {
            return Ok(());
        }
        let mut z = r.clone();
        self.preconditioner.solve_block(&mut z, self.nk);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for it in 1..=self.max_iterations {
            self.apply(&p, &mut ap, &mut scratch);
            let alpha = rz / dot(&p, &ap);
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            if dot(&r, &r).sqrt() <= target {
                self.iterations += it;
                return Ok(());
            }
            z.copy_from_slice(&r);
            self.preconditioner.solve_block(&mut z, self.nk);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        Err(Error::Solver(format!(
            "PCG did not reach relative residual {} in {} iterations",
            self.tolerance, self.max_iterations
        )))
    }
}

/// Owned bundle of everything a deterministic solve needs.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub ops: FemOperators,
    pub material: MaterialProperties,
    pub geometry: ExperimentGeometry,
    pub profile: LaserProfile,
    pub disc: DiscretizationParams,
    /// Mesh size target the operators were built with.
    pub h_target: f64,
}

impl ForwardModel {
    /// Meshes the sample and assembles its operators.
    pub fn build(
        geometry: ExperimentGeometry,
        material: MaterialProperties,
        profile: LaserProfile,
        disc: DiscretizationParams,
        h_target: f64,
    ) -> Result<Self> {
        let mesh = build_rect_mesh(&geometry, h_target)?;
        let ops = assemble_operators(&mesh, &geometry, &material, &profile)?;
        disc.check_against(&geometry)?;
        Ok(Self {
            ops,
            material,
            geometry,
            profile,
            disc,
            h_target,
        })
    }

    pub fn plain_solve(&self, lambda: f64, intensity: f64) -> Result<Thermogram> {
        plain_solve(
            &self.ops,
            &self.material,
            &self.geometry,
            &self.disc,
            lambda,
            intensity,
        )
    }

    pub fn sgfem_solve(
        &self,
        basis: &PceBasis,
        bounds: &SurrogateBox,
        options: &SgfemOptions,
    ) -> Result<SgfemSurrogate> {
        sgfem_solve(
            &self.ops,
            &self.material,
            &self.geometry,
            basis,
            bounds,
            &self.disc,
            options,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pce::build_basis;

    fn coarse(
        profile: LaserProfile,
        material: MaterialProperties,
        n_t: usize,
        n_d: usize,
        k: usize,
    ) -> ForwardModel {
        let geo = ExperimentGeometry::copper_reference();
        let disc = DiscretizationParams::new(geo.duration, n_t, n_d, k).unwrap();
        ForwardModel::build(geo, material, profile, disc, 5.0e-4).unwrap()
    }

    fn copper(n_t: usize, n_d: usize, k: usize) -> ForwardModel {
        coarse(
            LaserProfile::Uniform,
            MaterialProperties::copper_reference(),
            n_t,
            n_d,
            k,
        )
    }

    #[test]
    fn discretization_rejects_incompatible_grids() {
        assert!(DiscretizationParams::new(1.0, 400, 401, 6).is_ok());
        assert!(DiscretizationParams::new(1.0, 400, 7, 6).is_err());
        assert!(DiscretizationParams::new(1.0, 0, 2, 6).is_err());
        assert!(DiscretizationParams::new(0.0, 4, 2, 6).is_err());
        let d = DiscretizationParams::new(1.0, 400, 401, 6).unwrap();
        assert!(d.resolves_flash(1.0e-2));
        assert!(!d.resolves_flash(1.0e-3));
    }

    #[test]
    fn pulse_fractions_deposit_the_whole_flash() {
        for (tau, tf) in [
            (1.0 / 80.0, 0.01),
            (0.0025, 0.01),
            (0.02, 0.01),
            (0.003, 0.01),
        ] {
            let total: f64 = (1..=20).map(|n| pulse_fraction(n, tau, tf)).sum();
            assert!((total * tau - tf).abs() < 1e-15, "tau = {tau}");
        }
        assert_eq!(pulse_fraction(4, 0.0025, 0.01), 1.0);
        assert_eq!(pulse_fraction(5, 0.0025, 0.01), 0.0);
    }

    #[test]
    fn default_box_and_maps() {
        let b = SurrogateBox::default();
        assert_eq!(b.mu_lambda, 328.5);
        assert!(
            (b.lambda_range().0 - 150.0).abs() < 1e-12
                && (b.lambda_range().1 - 507.0).abs() < 1e-12
        );
        assert!((b.intensity_range().1 / 1.8e12 - 1.0).abs() < 1e-15);
        let y = b.to_reference(400.0, 1.0e12);
        let (l, i) = b.to_physical(y);
        assert!((l - 400.0).abs() < 1e-12 && (i / 1.0e12 - 1.0).abs() < 1e-15);
        assert!(b.contains(507.0, 1.8e12) && !b.contains(508.0, 1.0e12));
        assert!(b.validate().is_ok());
        assert!(SurrogateBox::from_ranges((-1.0, 5.0), (0.0, 1.0))
            .validate()
            .is_err());
    }

    #[test]
    fn zero_intensity_stays_at_ambient() {
        let m = copper(40, 11, 0);
        let g = m.plain_solve(390.0, 0.0).unwrap();
        for t in &g.temps {
            assert!((t - 385.0).abs() < 1e-9);
        }
    }

    #[test]
    fn insulated_sample_conserves_energy() {
        let material = MaterialProperties {
            heat_transfer: 0.0,
            ..MaterialProperties::copper_reference()
        };
        let m = coarse(
            LaserProfile::Gaussian { width: 4.0e-3 },
            material,
            40,
            41,
            0,
        );
        let ones = vec![1.0; m.ops.n_h];
        let m1 = m.ops.mass.mul_vec(&ones);
        let deposited = m.geometry.flash_duration * 1.0e12 * m.ops.source.iter().sum::<f64>();
        let mut last = 0.0;
        plain_solve_trajectory(
            &m.ops,
            &m.material,
            &m.geometry,
            &m.disc,
            390.0,
            1.0e12,
            |_, u| {
                last = m.material.heat_capacity() * dot(&m1, u);
            },
        )
        .unwrap();
        let initial = m.material.heat_capacity() * m1.iter().sum::<f64>() * 385.0;
        assert!(((last - initial) - deposited).abs() < 1e-10 * deposited);
    }

    #[test]
    fn temperature_rise_is_linear_in_intensity() {
        let m = copper(40, 11, 0);
        let a = m.plain_solve(300.0, 0.7e12).unwrap();
        let b = m.plain_solve(300.0, 1.4e12).unwrap();
        for (x, y) in a.temps.iter().zip(&b.temps) {
            assert!(((y - 385.0) - 2.0 * (x - 385.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn plain_solve_rejects_bad_parameters() {
        let m = copper(40, 11, 0);
        assert!(m.plain_solve(0.0, 1e12).is_err());
        assert!(m.plain_solve(300.0, -1.0).is_err());
        assert!(m.plain_solve(f64::NAN, 1e12).is_err());
    }

    #[test]
    fn degree_zero_surrogate_is_the_mean_solve() {
        let m = copper(40, 11, 0);
        let bounds = SurrogateBox::default();
        let s = m
            .sgfem_solve(&build_basis(0), &bounds, &SgfemOptions::default())
            .unwrap();
        let plain = m
            .plain_solve(bounds.mu_lambda, bounds.mu_intensity)
            .unwrap();
        let surr = s.evaluate([0.0, 0.0]).unwrap();
        for (a, b) in plain.temps.iter().zip(&surr.temps) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn first_surrogate_row_is_the_initial_state() {
        let m = copper(40, 11, 3);
        let s = m
            .sgfem_solve(
                &build_basis(3),
                &SurrogateBox::default(),
                &SgfemOptions::default(),
            )
            .unwrap();
        let row = s.row(0);
        assert!((row[0] - 385.0).abs() < 1e-12);
        assert!(row[1..].iter().all(|v| v.abs() < 1e-12));
        assert!(matches!(s.evaluate([1.8, 0.0]), Err(Error::OutOfBox(..))));
    }

    #[test]
    fn direct_and_pcg_strategies_agree() {
        let m = copper(40, 11, 4);
        let basis = build_basis(4);
        let bounds = SurrogateBox::default();
        let direct = SgfemOptions {
            strategy: KroneckerStrategy::Direct,
            keep_fields_at: vec![40],
            ..Default::default()
        };
        let pcg = SgfemOptions {
            strategy: KroneckerStrategy::Pcg,
            keep_fields_at: vec![40],
            ..Default::default()
        };
        let a = m.sgfem_solve(&basis, &bounds, &direct).unwrap();
        let b = m.sgfem_solve(&basis, &bounds, &pcg).unwrap();
        for (x, y) in a.observation_matrix().iter().zip(b.observation_matrix()) {
            assert!((x - y).abs() < 1e-8 * (1.0 + x.abs()));
        }
        let (fa, fb) = (&a.fields[0].coefficients, &b.fields[0].coefficients);
        assert_eq!(a.fields[0].step, 40);
        for (x, y) in fa.iter().zip(fb) {
            assert!((x - y).abs() < 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn surrogate_tracks_plain_solves_inside_the_box() {
        let m = copper(40, 11, 6);
        let bounds = SurrogateBox::default();
        let s = m
            .sgfem_solve(&build_basis(6), &bounds, &SgfemOptions::default())
            .unwrap();
        for y in [[0.5, -0.3], [-1.2, 1.0], [1.5, 1.5]] {
            let (l, i) = bounds.to_physical(y);
            let plain = m.plain_solve(l, i).unwrap();
            let surr = s.evaluate(y).unwrap();
            let rise = plain.temps.iter().fold(0.0f64, |a, t| a.max(t - 385.0));
            let err = plain
                .temps
                .iter()
                .zip(&surr.temps)
                .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            assert!(err < 1e-2 * rise, "y = {y:?}: err {err}, rise {rise}");
        }
    }
}
