//! CMA-ES minimizer with box constraints, and the readout optimization over
//! photon number, flux bias and drive detuning.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersive::{DispersiveModel, TlsMode};
use crate::dynamics::{
    fixed_flux_trajectory, synthesize_compensation_with, CompensationOptions, DrivePulse,
    MeasurementDephasing,
};
use crate::error::{ensure_finite, ensure_positive, FluxError, Result};
use crate::linalg::symmetric_eigen;
use crate::readout::{fidelity, simulate_shots, NoiseModel};

/// Step-size collapse threshold.
pub const SIGMA_FLOOR: f64 = 1e-12;
/// Generations without improvement, per dimension, before stopping.
pub const STAGNATION_PER_DIM: usize = 20;
/// Weight of the squared distance to the box in the penalized objective.
pub const BOX_PENALTY: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmaConfig {
    pub x0: Vec<f64>,
    pub sigma0: f64,
    /// Defaults to `4 + floor(3 ln d)`.
    #[serde(default)]
    pub population: Option<usize>,
    pub budget: usize,
    pub bounds: Vec<(f64, f64)>,
    #[serde(default)]
    pub seed: u64,
}

impl CmaConfig {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn lambda(&self) -> usize {
        self.population
            .unwrap_or_else(|| 4 + (3.0 * (self.dim() as f64).ln()).floor() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(FluxError::validation("cma.x0", "empty start vector"));
        }
        for &x in &self.x0 {
            ensure_finite("cma.x0", x)?;
        }
        ensure_positive("cma.sigma0", self.sigma0)?;
        if self.lambda() < 2 {
            return Err(FluxError::validation("cma.population", "must be >= 2"));
        }
        if self.budget < self.lambda() {
            return Err(FluxError::validation(
                "cma.budget",
                format!("budget {} is below the population {}", self.budget, self.lambda()),
            ));
        }
        if self.bounds.len() != d {
            return Err(FluxError::validation(
                "cma.bounds",
                format!("{} intervals for {d} dimensions", self.bounds.len()),
            ));
        }
        for &(lo, hi) in &self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(FluxError::validation("cma.bounds", format!("bad interval [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.bounds)
            .map(|(&v, &(lo, hi))| v.clamp(lo, hi))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub evaluations: usize,
    pub best_value: f64,
    pub best_x: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Budget,
    SigmaCollapse,
    Stagnation,
    DegenerateBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaResult {
    /// Always inside the box.
    pub best_x: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    pub termination: Termination,
    pub history: Vec<GenerationRecord>,
}

/// `(mu/mu_w, lambda)` CMA-ES with cumulative step-size adaptation and
/// rank-one plus rank-mu covariance updates. Candidates are projected onto
/// the box before evaluation; ranking uses the objective at the projection
/// plus `BOX_PENALTY` times the squared projection distance. Non-finite
/// objective values rank last.
pub fn cma_es_minimize<F>(objective: F, config: &CmaConfig) -> Result<CmaResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let d = config.dim();
    let df = d as f64;
    let lambda = config.lambda();
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let c_sigma = (mu_eff + 2.0) / (df + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (df + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / df) / (df + 4.0 + 2.0 * mu_eff / df);
    let c_1 = 2.0 / ((df + 1.3).powi(2) + mu_eff);
    let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((df + 2.0).powi(2) + mu_eff));
    let chi_n = df.sqrt() * (1.0 - 1.0 / (4.0 * df) + 1.0 / (21.0 * df * df));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mean = config.x0.clone();
    let mut sigma = config.sigma0;
    let mut cov = Mat::<f64>::identity(d, d);
    let mut basis = Mat::<f64>::identity(d, d);
    let mut scales = vec![1.0; d];
    let mut p_sigma = vec![0.0; d];
    let mut p_c = vec![0.0; d];

    let degenerate = config.bounds.iter().all(|&(lo, hi)| lo == hi);
    let mut best_x = config.project(&config.x0);
    let mut best_value = f64::INFINITY;
    let mut best_generation = 0;
    let mut evaluations = 0;
    let mut history = Vec::new();
    let mut generation = 0;

    let termination = loop {
        if evaluations + lambda > config.budget {
            break Termination::Budget;
        }
        generation += 1;
        let z: Vec<Vec<f64>> = (0..lambda)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let y: Vec<Vec<f64>> = z
            .iter()
            .map(|zk| {
                (0..d)
                    .map(|i| (0..d).map(|j| basis[(i, j)] * scales[j] * zk[j]).sum())
                    .collect()
            })
            .collect();
        let xs: Vec<Vec<f64>> = y
            .iter()
            .map(|yk| mean.iter().zip(yk).map(|(m, v)| m + sigma * v).collect())
            .collect();
        let scored: Vec<(Vec<f64>, f64, f64)> = xs
            .par_iter()
            .map(|x| {
                let p = config.project(x);
                let raw = objective(&p);
                let raw = if raw.is_finite() { raw } else { f64::INFINITY };
                let dist2: f64 = x.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
                (p, raw, raw + BOX_PENALTY * dist2)
            })
            .collect();
        evaluations += lambda;

        let mut improved = false;
        for (p, raw, _) in &scored {
            if *raw < best_value {
                best_value = *raw;
                best_x = p.clone();
                improved = true;
            }
        }
        if improved {
            best_generation = generation;
        }
        history.push(GenerationRecord {
            generation,
            evaluations,
            best_value,
            best_x: best_x.clone(),
            sigma,
        });
        if degenerate {
            break Termination::DegenerateBox;
        }

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| scored[a].2.total_cmp(&scored[b].2).then(a.cmp(&b)));

        let old_mean = mean.clone();
        let mut y_w = vec![0.0; d];
        for (w, &k) in weights.iter().zip(&order) {
            for i in 0..d {
                y_w[i] += w * y[k][i];
            }
        }
        for i in 0..d {
            mean[i] = old_mean[i] + sigma * y_w[i];
        }

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let bt_y: Vec<f64> = (0..d)
            .map(|j| (0..d).map(|i| basis[(i, j)] * y_w[i]).sum::<f64>() / scales[j])
            .collect();
        let c_inv_sqrt_y: Vec<f64> = (0..d)
            .map(|i| (0..d).map(|j| basis[(i, j)] * bt_y[j]).sum())
            .collect();
        let ps_coeff = (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt();
        for i in 0..d {
            p_sigma[i] = (1.0 - c_sigma) * p_sigma[i] + ps_coeff * c_inv_sqrt_y[i];
        }
        let ps_norm = p_sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h_sigma = ps_norm / (1.0 - (1.0 - c_sigma).powi(2 * generation as i32)).sqrt()
            < (1.4 + 2.0 / (df + 1.0)) * chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        let pc_coeff = (c_c * (2.0 - c_c) * mu_eff).sqrt();
        for i in 0..d {
            p_c[i] = (1.0 - c_c) * p_c[i] + h * pc_coeff * y_w[i];
        }

        let delta_h = (1.0 - h) * c_c * (2.0 - c_c);
        for i in 0..d {
            for j in 0..=i {
                let mut rank_mu = 0.0;
                for (w, &k) in weights.iter().zip(&order) {
                    rank_mu += w * y[k][i] * y[k][j];
                }
                let v = (1.0 - c_1 - c_mu + c_1 * delta_h) * cov[(i, j)]
                    + c_1 * p_c[i] * p_c[j]
                    + c_mu * rank_mu;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        sigma *= ((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0)).exp();

        let eig = symmetric_eigen(&cov)?;
        basis = eig.vectors;
        scales = eig.values.iter().map(|&v| v.max(1e-300).sqrt()).collect();

        if !(sigma >= SIGMA_FLOOR) {
            break Termination::SigmaCollapse;
        }
        if generation - best_generation >= STAGNATION_PER_DIM * d {
            break Termination::Stagnation;
        }
    };

    Ok(CmaResult {
        best_x,
        best_value,
        evaluations,
        termination,
        history,
    })
}

/// The three readout knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutSettings {
    pub n_bar: f64,
    pub phi_start: f64,
    /// MHz.
    pub detuning: f64,
}

impl ReadoutSettings {
    pub fn from_slice(x: &[f64]) -> Self {
        ReadoutSettings {
            n_bar: x[0],
            phi_start: x[1],
            detuning: x[2],
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.n_bar, self.phi_start, self.detuning]
    }
}

/// End-to-end readout error for given settings and pulse duration. Must be
/// deterministic in its inputs.
pub trait ReadoutObjective: Sync {
    fn error(&self, settings: &ReadoutSettings, duration: f64) -> Result<f64>;

    /// Shots behind one error estimate, for the binomial confidence.
    fn shots(&self) -> usize {
        0
    }
}

/// Score given to candidates whose evaluation fails.
pub const FAILED_CANDIDATE_PENALTY: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutOptimum {
    pub settings: ReadoutSettings,
    pub error: f64,
    /// Binomial standard error; zero when the objective does not sample.
    pub error_stderr: f64,
    pub failed_candidates: usize,
    pub result: CmaResult,
}

/// Minimize the readout error over the `(n_bar, phi_start, detuning)` box of
/// `config`. The search runs in box-normalized coordinates, so `sigma0` is a
/// fraction of each interval's width; `x0` and `bounds` are physical.
pub fn optimize_readout<O: ReadoutObjective>(
    objective: &O,
    duration: f64,
    config: &CmaConfig,
) -> Result<ReadoutOptimum> {
    ensure_positive("duration", duration)?;
    if config.dim() != 3 {
        return Err(FluxError::validation(
            "cma.x0",
            "readout optimization takes (n_bar, phi_start, detuning)",
        ));
    }
    config.validate()?;
    let to_physical = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(&config.bounds)
            .map(|(&v, &(lo, hi))| lo + v * (hi - lo))
            .collect()
    };
    let unit = CmaConfig {
        x0: config
            .x0
            .iter()
            .zip(&config.bounds)
            .map(|(&x, &(lo, hi))| if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
            .collect(),
        bounds: config
            .bounds
            .iter()
            .map(|&(lo, hi)| if hi > lo { (0.0, 1.0) } else { (0.0, 0.0) })
            .collect(),
        ..config.clone()
    };
    let failures = std::sync::atomic::AtomicUsize::new(0);
    let mut result = cma_es_minimize(
        |u| {
            let x = to_physical(u);
            match objective.error(&ReadoutSettings::from_slice(&x), duration) {
                Ok(e) => e,
                Err(e) => {
                    log::debug!("candidate {x:?} failed: {e}");
                    failures.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    FAILED_CANDIDATE_PENALTY
                }
            }
        },
        &unit,
    )?;
    result.best_x = to_physical(&result.best_x);
    for record in &mut result.history {
        record.best_x = to_physical(&record.best_x);
    }
    let error = result.best_value;
    let shots = objective.shots();
    let error_stderr = if shots > 0 {
        let e = error.clamp(0.0, 1.0);
        (e * (1.0 - e) / shots as f64).sqrt()
    } else {
        0.0
    };
    Ok(ReadoutOptimum {
        settings: ReadoutSettings::from_slice(&result.best_x),
        error,
        error_stderr,
        failed_candidates: failures.into_inner(),
        result,
    })
}

pub const DEFAULT_SHOTS: usize = 4096;

/// Where the measurement-dephasing rate comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DephasingSource {
    Fixed(MeasurementDephasing),
    /// `chi` of the model at the candidate's flux bias.
    ChiAtBias,
}

/// Synthesized trajectory plus simulated shots for both preparations, scored
/// as `1 - fidelity`. A fixed seed gives common random numbers across
/// candidates.
pub struct SimulatedReadout<'a, M: DispersiveModel> {
    pub model: &'a M,
    pub kappa: f64,
    pub catalog: &'a [TlsMode],
    pub noise: NoiseModel,
    pub options: CompensationOptions,
    pub compensate: bool,
    /// Broadening source; `None` disables dephasing broadening.
    pub dephasing: Option<DephasingSource>,
    pub shots: usize,
    pub seed: u64,
}

impl<M: DispersiveModel> SimulatedReadout<'_, M> {
    fn dephasing_at(&self, settings: &ReadoutSettings) -> Result<Option<MeasurementDephasing>> {
        match self.dephasing {
            None => Ok(None),
            Some(DephasingSource::Fixed(d)) => Ok(Some(d)),
            Some(DephasingSource::ChiAtBias) => Ok(Some(MeasurementDephasing {
                chi: self.model.point(settings.phi_start)?.chi,
                kappa: self.kappa,
            })),
        }
    }
}

impl<M: DispersiveModel> ReadoutObjective for SimulatedReadout<'_, M> {
    fn error(&self, settings: &ReadoutSettings, duration: f64) -> Result<f64> {
        let pulse = DrivePulse::for_photons(settings.n_bar, settings.detuning, duration, self.kappa);
        let trajectory = if self.compensate {
            synthesize_compensation_with(self.model, &pulse, self.kappa, settings.phi_start, &self.options)?
        } else {
            fixed_flux_trajectory(self.model, &pulse, self.kappa, settings.phi_start, &self.options)?
        };
        let dephasing = self.dephasing_at(settings)?;
        let rate = |n: f64| dephasing.map_or(0.0, |d| d.rate(n));
        let zeros = simulate_shots(&trajectory, self.catalog, &self.noise, rate, 0, self.shots, self.seed)?;
        let ones = simulate_shots(
            &trajectory,
            self.catalog,
            &self.noise,
            rate,
            1,
            self.shots,
            self.seed.wrapping_add(1),
        )?;
        Ok(1.0 - fidelity(&zeros, &ones)?)
    }

    fn shots(&self) -> usize {
        2 * self.shots
    }
}
