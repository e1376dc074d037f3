//! Stochastic three-window single-shot readout along a trajectory, with
//! threshold assignment, double-Gaussian fitting, post-selection and the
//! M1/M2/M3 error taxonomy.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersive::TlsMode;
use crate::dynamics::ReadoutTrajectory;
use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, FluxError, Result};

/// IQ noise and signal model. The two state means sit at
/// `threshold -/+ separation_scale * c / 2`, where `c` is the window average
/// of `sqrt(n)`, and the Gaussian width is `1 / sqrt(eta * integration_time)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub eta: f64,
    /// us, measured from the start of each window.
    pub integration_time: f64,
    pub separation_scale: f64,
    /// Assignment threshold; the excited side is above it.
    pub threshold: f64,
    /// Probability that the prepared state is flipped before M1.
    pub preparation_error: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            eta: 0.17,
            integration_time: 1.0,
            separation_scale: 4.0,
            threshold: 0.0,
            preparation_error: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(FluxError::validation("noise.eta", format!("must lie in (0, 1], got {}", self.eta)));
        }
        ensure_positive("noise.integration_time", self.integration_time)?;
        ensure_non_negative("noise.separation_scale", self.separation_scale)?;
        ensure_finite("noise.threshold", self.threshold)?;
        if !(0.0..=1.0).contains(&self.preparation_error) {
            return Err(FluxError::validation("noise.preparation_error", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        1.0 / (self.eta * self.integration_time).sqrt()
    }
}

/// Outcomes of the three consecutive measurements of one shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub m1: u8,
    pub m2: u8,
    pub m3: u8,
    pub iq1: f64,
    pub iq2: f64,
    pub iq3: f64,
}

impl ShotRecord {
    pub fn bits(&self) -> [u8; 3] {
        [self.m1, self.m2, self.m3]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostSelectionConfig {
    pub threshold: f64,
    pub gap: f64,
}

impl PostSelectionConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("postselect.threshold", self.threshold)?;
        ensure_non_negative("postselect.gap", self.gap)
    }

    pub fn keeps(&self, record: &ShotRecord) -> bool {
        (record.iq1 - self.threshold).abs() >= 0.5 * self.gap
    }
}

/// 1 strictly above the threshold, else 0.
pub fn assign(iq: f64, threshold: f64) -> u8 {
    u8::from(iq > threshold)
}

/// Unit-peak Lorentzian in the detuning `delta` for full width `width`
/// (same units).
pub fn lorentzian(delta: f64, width: f64) -> f64 {
    let x = 2.0 * delta / width;
    1.0 / (1.0 + x * x)
}

/// Piecewise-constant transition hazards along a trajectory, evaluated at
/// interval midpoints, with running integrals for inverse sampling.
#[derive(Debug, Clone)]
pub struct HazardProfile {
    times: Vec<f64>,
    /// Cumulative hazard out of state 0 (index 0) and state 1 (index 1).
    cumulative: [Vec<f64>; 2],
}

impl HazardProfile {
    /// `dephasing` maps photon number to a rate in us^-1; it widens every
    /// TLS line by `dephasing / 2 pi` MHz.
    pub fn new<D>(trajectory: &ReadoutTrajectory, catalog: &[TlsMode], dephasing: D) -> Result<Self>
    where
        D: Fn(f64) -> f64,
    {
        trajectory.validate()?;
        for tls in catalog {
            tls.validate()?;
        }
        let times: Vec<f64> = trajectory.samples.iter().map(|s| s.t).collect();
        let mut up = vec![0.0];
        let mut down = vec![0.0];
        for w in trajectory.samples.windows(2) {
            let mid = trajectory.at(0.5 * (w[0].t + w[1].t));
            let broadening = dephasing(mid.n_bar) / TAU;
            let (mut g_up, mut g_down) = (0.0, 0.0);
            for tls in catalog {
                let delta = (mid.f01_shifted - tls.f_tls) * 1e3;
                let l = lorentzian(delta, tls.linewidth + broadening);
                g_up += tls.gamma_up * l;
                g_down += tls.gamma_down * l;
            }
            let h = w[1].t - w[0].t;
            up.push(up[up.len() - 1] + g_up * h);
            down.push(down[down.len() - 1] + g_down * h);
        }
        Ok(HazardProfile {
            times,
            cumulative: [up, down],
        })
    }

    /// Constant rates over `[0, duration]`, sampled on `intervals` steps.
    pub fn constant(duration: f64, gamma_up: f64, gamma_down: f64, intervals: usize) -> Result<Self> {
        ensure_positive("duration", duration)?;
        ensure_non_negative("gamma_up", gamma_up)?;
        ensure_non_negative("gamma_down", gamma_down)?;
        let intervals = intervals.max(1);
        let times: Vec<f64> = (0..=intervals).map(|i| duration * i as f64 / intervals as f64).collect();
        Ok(HazardProfile {
            cumulative: [
                times.iter().map(|t| gamma_up * t).collect(),
                times.iter().map(|t| gamma_down * t).collect(),
            ],
            times,
        })
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    fn cumulative_at(&self, state: u8, t: f64) -> f64 {
        let c = &self.cumulative[state as usize];
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            return c[0];
        }
        if k >= self.times.len() {
            return c[c.len() - 1];
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        c[k - 1] + (c[k] - c[k - 1]) * (t - t0) / (t1 - t0)
    }

    /// Time at which the cumulative hazard of `state` reaches `target`, if
    /// within the profile.
    fn crossing(&self, state: u8, target: f64) -> Option<f64> {
        let c = &self.cumulative[state as usize];
        if target > c[c.len() - 1] {
            return None;
        }
        let k = c.partition_point(|&x| x < target).max(1);
        let (c0, c1) = (c[k - 1], c[k]);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        if c1 == c0 {
            return Some(t1);
        }
        Some(t0 + (t1 - t0) * (target - c0) / (c1 - c0))
    }

    /// Run the two-state chain across one window starting in `state`.
    /// Returns the final state and the times at which it flipped.
    pub fn evolve<R: Rng + ?Sized>(&self, mut state: u8, rng: &mut R) -> (u8, Vec<f64>) {
        let mut t = self.start();
        let mut flips = Vec::new();
        loop {
            let e: f64 = Exp1.sample(rng);
            let target = self.cumulative_at(state, t) + e;
            match self.crossing(state, target) {
                Some(next) if next <= self.end() => {
                    t = next.max(t);
                    flips.push(t);
                    state ^= 1;
                }
                _ => return (state, flips),
            }
        }
    }
}

/// Fraction of `[t0, t1]` spent in state 1, given the initial state and the
/// flip times.
fn excited_fraction(initial: u8, flips: &[f64], t0: f64, t1: f64) -> f64 {
    if t1 <= t0 {
        return f64::from(initial);
    }
    let mut state = initial;
    let mut last = t0;
    let mut excited = 0.0;
    for &f in flips {
        let f = f.clamp(t0, t1);
        if state == 1 {
            excited += f - last;
        }
        last = f;
        state ^= 1;
    }
    if state == 1 {
        excited += t1 - last;
    }
    excited / (t1 - t0)
}

/// Window average of `sqrt(n)` over `[t0, t1]` of the trajectory.
fn mean_amplitude(trajectory: &ReadoutTrajectory, t0: f64, t1: f64) -> f64 {
    if t1 <= t0 {
        return trajectory.at(t0).n_bar.sqrt();
    }
    let knots = trajectory.knots(t0, t1);
    let area: f64 = knots
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].n_bar.sqrt() + w[1].n_bar.sqrt()))
        .sum();
    area / (t1 - t0)
}

/// Per-shot generator: stream `index` of a ChaCha8 generator keyed by `seed`.
pub fn shot_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Simulate `count` three-window shots. Each window replays the trajectory;
/// the qubit state carries over from one window to the next.
pub fn simulate_shots<D>(
    trajectory: &ReadoutTrajectory,
    catalog: &[TlsMode],
    noise: &NoiseModel,
    dephasing: D,
    initial_state: u8,
    count: usize,
    seed: u64,
) -> Result<Vec<ShotRecord>>
where
    D: Fn(f64) -> f64,
{
    noise.validate()?;
    if initial_state > 1 {
        return Err(FluxError::validation("initial_state", "must be 0 or 1"));
    }
    if count == 0 {
        return Err(FluxError::validation("count", "need at least one shot"));
    }
    let hazards = HazardProfile::new(trajectory, catalog, dephasing)?;
    let t0 = trajectory.start();
    let t1 = (t0 + noise.integration_time).min(trajectory.end());
    let half_separation = 0.5 * noise.separation_scale * mean_amplitude(trajectory, t0, t1);
    let sigma = noise.sigma();

    let records = (0..count)
        .into_par_iter()
        .map(|index| {
            let mut rng = shot_rng(seed, index as u64);
            let mut state = initial_state;
            if noise.preparation_error > 0.0 && rng.random::<f64>() < noise.preparation_error {
                state ^= 1;
            }
            let mut window = || {
                let start = state;
                let (end, flips) = hazards.evolve(state, &mut rng);
                state = end;
                let p1 = excited_fraction(start, &flips, t0, t1);
                let mean = noise.threshold + half_separation * (2.0 * p1 - 1.0);
                let z: f64 = StandardNormal.sample(&mut rng);
                mean + sigma * z
            };
            let (iq1, iq2, iq3) = (window(), window(), window());
            ShotRecord {
                m1: assign(iq1, noise.threshold),
                m2: assign(iq2, noise.threshold),
                m3: assign(iq3, noise.threshold),
                iq1,
                iq2,
                iq3,
            }
        })
        .collect();
    Ok(records)
}

/// One bin of the histogram residual profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub center: f64,
    pub observed: f64,
    pub expected: f64,
    pub residual: f64,
}

/// Equal-width double Gaussian `w N(mu0, sigma) + (1 - w) N(mu1, sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleGaussianFit {
    pub mu0: f64,
    pub mu1: f64,
    pub sigma: f64,
    pub w: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// One weight collapsed to (near) zero, leaving that mean unconstrained.
    pub degenerate_weight: bool,
    pub residuals: Vec<HistogramBin>,
}

impl DoubleGaussianFit {
    pub fn density(&self, x: f64) -> f64 {
        let g = |mu: f64| (-0.5 * ((x - mu) / self.sigma).powi(2)).exp() / (self.sigma * (2.0 * PI).sqrt());
        self.w * g(self.mu0) + (1.0 - self.w) * g(self.mu1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureInit {
    pub mu0: f64,
    pub mu1: f64,
    pub sigma: f64,
    pub w: f64,
}

pub const MIN_FIT_SAMPLES: usize = 1000;
const RESIDUAL_BINS: usize = 60;

/// Maximum-likelihood fit by expectation-maximization. Without `init`,
/// starts from the quartiles.
pub fn fit_double_gaussian(values: &[f64], init: Option<MixtureInit>) -> Result<DoubleGaussianFit> {
    if values.len() < MIN_FIT_SAMPLES {
        return Err(FluxError::validation(
            "iq_values",
            format!("need >= {MIN_FIT_SAMPLES} samples, got {}", values.len()),
        ));
    }
    for &v in values {
        ensure_finite("iq_values", v)?;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(FluxError::Fit("all samples identical: degenerate mixture".into()));
    }
    let init = init.unwrap_or_else(|| {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        MixtureInit {
            mu0: sorted[sorted.len() / 4],
            mu1: sorted[3 * sorted.len() / 4],
            sigma: 0.5 * var.sqrt(),
            w: 0.5,
        }
    });
    let (mut mu0, mut mu1, mut sigma, mut w) = (init.mu0, init.mu1, init.sigma, init.w);
    if !(sigma > 0.0) || !(0.0..=1.0).contains(&w) {
        return Err(FluxError::validation("init", "sigma must be > 0 and w in [0, 1]"));
    }
    let sigma_floor = 1e-6 * var.sqrt();

    let log_likelihood = |mu0: f64, mu1: f64, sigma: f64, w: f64| -> f64 {
        let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
        values
            .iter()
            .map(|&x| {
                let a = w * (-0.5 * ((x - mu0) / sigma).powi(2)).exp();
                let b = (1.0 - w) * (-0.5 * ((x - mu1) / sigma).powi(2)).exp();
                ((a + b) * norm).max(f64::MIN_POSITIVE).ln()
            })
            .sum()
    };

    let mut ll = log_likelihood(mu0, mu1, sigma, w);
    let mut iterations = 0;
    for iter in 1..=5000 {
        iterations = iter;
        let (mut r_sum, mut r_x, mut q_x) = (0.0, 0.0, 0.0);
        let resp: Vec<f64> = values
            .iter()
            .map(|&x| {
                // log-domain to stay finite for far-apart means
                let la = w.max(1e-300).ln() - 0.5 * ((x - mu0) / sigma).powi(2);
                let lb = (1.0 - w).max(1e-300).ln() - 0.5 * ((x - mu1) / sigma).powi(2);
                let m = la.max(lb);
                let (ea, eb) = ((la - m).exp(), (lb - m).exp());
                ea / (ea + eb)
            })
            .collect();
        for (&x, &r) in values.iter().zip(&resp) {
            r_sum += r;
            r_x += r * x;
            q_x += (1.0 - r) * x;
        }
        let new_w = r_sum / n;
        let new_mu0 = if r_sum > 0.0 { r_x / r_sum } else { mu0 };
        let new_mu1 = if n - r_sum > 0.0 { q_x / (n - r_sum) } else { mu1 };
        let s2 = values
            .iter()
            .zip(&resp)
            .map(|(&x, &r)| r * (x - new_mu0).powi(2) + (1.0 - r) * (x - new_mu1).powi(2))
            .sum::<f64>()
            / n;
        mu0 = new_mu0;
        mu1 = new_mu1;
        w = new_w;
        sigma = s2.sqrt().max(sigma_floor);
        let new_ll = log_likelihood(mu0, mu1, sigma, w);
        let converged = (new_ll - ll).abs() <= 1e-12 * new_ll.abs().max(1.0);
        ll = new_ll;
        if converged {
            break;
        }
    }
    if (mu1 - mu0).abs() < 1e-6 * sigma {
        return Err(FluxError::Fit(format!("means coincide at {mu0}: degenerate mixture")));
    }
    let degenerate_weight = w < 1e-3 || w > 1.0 - 1e-3;
    let mut fit = DoubleGaussianFit {
        mu0,
        mu1,
        sigma,
        w,
        log_likelihood: ll,
        iterations,
        degenerate_weight,
        residuals: Vec::new(),
    };
    fit.residuals = residual_profile(values, &fit, RESIDUAL_BINS);
    Ok(fit)
}

/// Observed minus fitted counts per histogram bin spanning the data range.
pub fn residual_profile(values: &[f64], fit: &DoubleGaussianFit, bins: usize) -> Vec<HistogramBin> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = bins.max(1);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0.0; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1.0;
    }
    let n = values.len() as f64;
    (0..bins)
        .map(|b| {
            let center = lo + (b as f64 + 0.5) * width;
            let expected = n * width * fit.density(center);
            HistogramBin {
                center,
                observed: counts[b],
                expected,
                residual: counts[b] - expected,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostSelectPoint {
    pub gap: f64,
    pub retained: f64,
    /// M2 error among retained records; NaN when nothing is retained.
    pub error: f64,
}

/// M2 error against `truth` after discarding records whose M1 signal lies
/// within `gap / 2` of the threshold, for each gap.
pub fn postselect_error_curve(
    records: &[ShotRecord],
    threshold: f64,
    gaps: &[f64],
    truth: u8,
) -> Result<Vec<PostSelectPoint>> {
    if records.is_empty() {
        return Err(FluxError::validation("records", "no records"));
    }
    if truth > 1 {
        return Err(FluxError::validation("truth", "must be 0 or 1"));
    }
    gaps.iter()
        .map(|&gap| {
            let cfg = PostSelectionConfig { threshold, gap };
            cfg.validate()?;
            let (mut kept, mut wrong) = (0usize, 0usize);
            for r in records.iter().filter(|r| cfg.keeps(r)) {
                kept += 1;
                wrong += usize::from(r.m2 != truth);
            }
            Ok(PostSelectPoint {
                gap,
                retained: kept as f64 / records.len() as f64,
                error: if kept == 0 { f64::NAN } else { wrong as f64 / kept as f64 },
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorClass {
    Correct,
    AssignmentError,
    TransitionError,
    Other,
}

impl ErrorClass {
    pub fn of(bits: [u8; 3]) -> Self {
        let [m1, m2, m3] = bits;
        if m1 == m2 && m2 == m3 {
            ErrorClass::Correct
        } else if m1 == m3 {
            ErrorClass::AssignmentError
        } else if m2 == m3 {
            ErrorClass::TransitionError
        } else {
            ErrorClass::Other
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub correct: usize,
    pub assignment_error: usize,
    pub transition_error: usize,
    pub other: usize,
}

impl ErrorCounts {
    pub fn total(&self) -> usize {
        self.correct + self.assignment_error + self.transition_error + self.other
    }
}

pub fn classify_errors(records: &[ShotRecord]) -> Result<ErrorCounts> {
    let mut counts = ErrorCounts::default();
    for r in records {
        if r.bits().iter().any(|&b| b > 1) {
            return Err(FluxError::validation("records", "outcome bits must be 0 or 1"));
        }
        match ErrorClass::of(r.bits()) {
            ErrorClass::Correct => counts.correct += 1,
            ErrorClass::AssignmentError => counts.assignment_error += 1,
            ErrorClass::TransitionError => counts.transition_error += 1,
            ErrorClass::Other => counts.other += 1,
        }
    }
    Ok(counts)
}

/// `F = 1 - (P(1|0) + P(0|1)) / 2` from the M2 outcomes of shots prepared in
/// 0 and in 1.
pub fn fidelity(prepared_0: &[ShotRecord], prepared_1: &[ShotRecord]) -> Result<f64> {
    if prepared_0.is_empty() || prepared_1.is_empty() {
        return Err(FluxError::validation("records", "need shots from both preparations"));
    }
    let p10 = prepared_0.iter().filter(|r| r.m2 == 1).count() as f64 / prepared_0.len() as f64;
    let p01 = prepared_1.iter().filter(|r| r.m2 == 0).count() as f64 / prepared_1.len() as f64;
    Ok(1.0 - 0.5 * (p10 + p01))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TrajectorySample;

    fn flat_trajectory(f01: f64, n: f64, duration: f64) -> ReadoutTrajectory {
        let dt = 0.01;
        let count = (duration / dt).round() as usize + 1;
        let samples = (0..count)
            .map(|i| TrajectorySample {
                t: i as f64 * dt,
                phi_ext: PI,
                n_bar: n,
                f01_shifted: f01,
            })
            .collect();
        ReadoutTrajectory::new(dt, samples).unwrap()
    }

    fn record(m1: u8, m2: u8, m3: u8) -> ShotRecord {
        ShotRecord {
            m1,
            m2,
            m3,
            iq1: 0.0,
            iq2: 0.0,
            iq3: 0.0,
        }
    }

    #[test]
    fn assign_breaks_ties_to_ground() {
        assert_eq!(assign(0.3, 0.3), 0);
        assert_eq!(assign(0.31, 0.3), 1);
        assert_eq!(assign(-1.0, 0.0), 0);
    }

    #[test]
    fn taxonomy_examples() {
        assert_eq!(ErrorClass::of([0, 1, 0]), ErrorClass::AssignmentError);
        assert_eq!(ErrorClass::of([0, 1, 1]), ErrorClass::TransitionError);
        assert_eq!(ErrorClass::of([1, 1, 1]), ErrorClass::Correct);
        assert_eq!(ErrorClass::of([1, 1, 0]), ErrorClass::Other);
        let counts = classify_errors(&[record(0, 1, 0), record(0, 1, 1), record(0, 0, 0)]).unwrap();
        assert_eq!((counts.assignment_error, counts.transition_error, counts.correct), (1, 1, 1));
    }

    #[test]
    fn fidelity_arithmetic() {
        let zeros: Vec<_> = (0..100).map(|i| record(0, u8::from(i == 0), 0)).collect();
        let ones: Vec<_> = (0..100).map(|i| record(1, u8::from(i >= 3), 1)).collect();
        assert!((fidelity(&zeros, &ones).unwrap() - 0.98).abs() < 1e-12);
        assert!(fidelity(&[], &ones).is_err());
    }

    #[test]
    fn transition_free_noiseless_readout() {
        let traj = flat_trajectory(0.6, 10.0, 1.0);
        let noise = NoiseModel {
            eta: 1.0,
            separation_scale: 100.0,
            ..NoiseModel::default()
        };
        for initial in [0, 1] {
            let shots = simulate_shots(&traj, &[], &noise, |_| 0.0, initial, 2000, 7).unwrap();
            assert!(shots.iter().all(|r| r.bits() == [initial; 3]));
        }
    }

    #[test]
    fn shots_are_seed_deterministic() {
        let traj = flat_trajectory(0.6, 4.0, 0.5);
        let tls = TlsMode {
            f_tls: 0.6,
            gamma_down: 0.5,
            gamma_up: 0.1,
            linewidth: 1.0,
        };
        let noise = NoiseModel::default();
        let a = simulate_shots(&traj, &[tls], &noise, |_| 0.0, 1, 500, 42).unwrap();
        let b = simulate_shots(&traj, &[tls], &noise, |_| 0.0, 1, 500, 42).unwrap();
        let c = simulate_shots(&traj, &[tls], &noise, |_| 0.0, 1, 500, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn excited_fraction_counts_dwell() {
        assert_eq!(excited_fraction(1, &[], 0.0, 1.0), 1.0);
        assert!((excited_fraction(1, &[0.25], 0.0, 1.0) - 0.25).abs() < 1e-15);
        assert!((excited_fraction(0, &[0.25, 0.5], 0.0, 1.0) - 0.25).abs() < 1e-15);
        assert!((excited_fraction(1, &[2.0], 0.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hazard_crossing_inverts_cumulative() {
        let h = HazardProfile::constant(2.0, 0.0, 1.5, 10).unwrap();
        let t = h.crossing(1, 1.5).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        assert!(h.crossing(1, 3.5).is_none());
        assert!(h.crossing(0, 0.1).is_none());
    }

    #[test]
    fn postselect_zero_gap_keeps_everything() {
        let recs: Vec<_> = (0..10)
            .map(|i| ShotRecord {
                iq1: i as f64 - 5.0,
                ..record(0, 0, 0)
            })
            .collect();
        let curve = postselect_error_curve(&recs, 0.0, &[0.0, 2.0, 100.0], 0).unwrap();
        assert_eq!(curve[0].retained, 1.0);
        assert!(curve[1].retained < 1.0);
        assert!(curve[2].error.is_nan());
        assert!(postselect_error_curve(&recs, 0.0, &[-1.0], 0).is_err());
        assert!(postselect_error_curve(&[], 0.0, &[0.0], 0).is_err());
    }

    #[test]
    fn double_gaussian_needs_enough_samples_and_distinct_means() {
        assert!(fit_double_gaussian(&[0.0; 10], None).is_err());
        assert!(matches!(fit_double_gaussian(&[1.0; 2000], None), Err(FluxError::Fit(_))));
    }

    #[test]
    fn noise_model_rejects_bad_eta() {
        let bad = NoiseModel {
            eta: 0.0,
            ..NoiseModel::default()
        };
        assert!(bad.validate().is_err());
        let bad = NoiseModel {
            eta: 1.5,
            ..NoiseModel::default()
        };
        assert!(bad.validate().is_err());
    }
}
