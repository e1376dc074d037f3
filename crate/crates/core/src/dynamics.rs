//! Resonator photon dynamics, kappa fitting, synchronized flux compensation
//! and Ramsey verification of a readout trajectory.
//!
//! Times are in microseconds, frequencies in GHz (qubit) or MHz (resonator
//! drive, kappa, detuning); MHz and us^-1 are interchangeable up to 2 pi.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::dispersive::{ChebyshevDispersion, DispersiveModel, DressedDispersion};
use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, FluxError, Result};
use crate::spectrum::{DeviceParams, NumericsConfig};

/// Square readout pulse. `epsilon` and `detuning` in MHz, `duration` in us.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrivePulse {
    pub epsilon: f64,
    pub detuning: f64,
    pub duration: f64,
}

impl DrivePulse {
    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("pulse.epsilon", self.epsilon)?;
        ensure_finite("pulse.detuning", self.detuning)?;
        ensure_positive("pulse.duration", self.duration)
    }

    /// Steady-state photon number `4 eps^2 / (kappa^2 + 4 Delta^2)`.
    pub fn steady_photons(&self, kappa: f64) -> f64 {
        4.0 * self.epsilon * self.epsilon / (kappa * kappa + 4.0 * self.detuning * self.detuning)
    }

    /// Pulse whose steady state holds `n_bar` photons.
    pub fn for_photons(n_bar: f64, detuning: f64, duration: f64, kappa: f64) -> Self {
        let epsilon = (n_bar.max(0.0) * (kappa * kappa + 4.0 * detuning * detuning) / 4.0).sqrt();
        DrivePulse {
            epsilon,
            detuning,
            duration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulsePhase {
    RingUp,
    RingDown,
}

/// Mean photon number `t` us after the pulse starts (ring-up) or stops
/// (ring-down, assuming the steady state was reached).
pub fn photon_number(t: f64, pulse: &DrivePulse, kappa: f64, phase: PulsePhase) -> Result<f64> {
    ensure_non_negative("t", t)?;
    ensure_positive("kappa", kappa)?;
    let n_bar = pulse.steady_photons(kappa);
    let k = TAU * kappa;
    Ok(match phase {
        PulsePhase::RingUp => {
            let beat = if pulse.detuning.abs() < kappa / 100.0 {
                1.0
            } else {
                (TAU * pulse.detuning * t).cos()
            };
            n_bar * (1.0 + (-k * t).exp() - 2.0 * beat * (-0.5 * k * t).exp())
        }
        PulsePhase::RingDown => n_bar * (-k * t).exp(),
    })
}

/// Photon number over the whole timeline: ring-up while the pulse is on,
/// then exponential decay from the value reached at the end of the pulse.
pub fn photon_number_at(t: f64, pulse: &DrivePulse, kappa: f64) -> f64 {
    let t = t.max(0.0);
    if t <= pulse.duration {
        photon_number(t, pulse, kappa, PulsePhase::RingUp).unwrap_or(0.0)
    } else {
        let at_end = photon_number(pulse.duration, pulse, kappa, PulsePhase::RingUp).unwrap_or(0.0);
        at_end * (-TAU * kappa * (t - pulse.duration)).exp()
    }
}

/// Squared signal contrast at one delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastSample {
    pub t: f64,
    pub contrast_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaFit {
    /// MHz.
    pub kappa: f64,
    /// Contrast squared per photon.
    pub n_bar_scale: f64,
    pub residual: f64,
}

fn unit_photon_profile(t: f64, duration: f64, kappa: f64) -> f64 {
    let k = TAU * kappa;
    let ring_up = |s: f64| 1.0 + (-k * s).exp() - 2.0 * (-0.5 * k * s).exp();
    if t <= duration {
        ring_up(t.max(0.0))
    } else {
        ring_up(duration) * (-k * (t - duration)).exp()
    }
}

/// Least-squares fit of `scale * <n(t)>` (zero detuning) to contrast data
/// spanning ring-up and ring-down. The scale is eliminated analytically and
/// kappa found by a log-grid scan followed by golden-section refinement.
pub fn fit_kappa(samples: &[ContrastSample], pulse_duration: f64) -> Result<KappaFit> {
    ensure_positive("pulse_duration", pulse_duration)?;
    for s in samples {
        ensure_finite("samples.t", s.t)?;
        ensure_finite("samples.contrast_sq", s.contrast_sq)?;
    }
    let up = samples.iter().filter(|s| s.t <= pulse_duration).count();
    let down = samples.len() - up;
    if up < 2 || down < 2 {
        return Err(FluxError::validation(
            "samples",
            format!("need >= 2 ring-up and >= 2 ring-down samples, got {up} and {down}"),
        ));
    }
    let yy: f64 = samples.iter().map(|s| s.contrast_sq * s.contrast_sq).sum();
    if yy == 0.0 {
        return Err(FluxError::Fit("all-zero contrast: kappa not identifiable".into()));
    }

    // Residual summed directly: yy - ym^2/mm cancels near a perfect fit.
    let projected = |kappa: f64| -> (f64, f64) {
        let model: Vec<f64> = samples
            .iter()
            .map(|s| unit_photon_profile(s.t, pulse_duration, kappa))
            .collect();
        let (mut ym, mut mm) = (0.0, 0.0);
        for (s, m) in samples.iter().zip(&model) {
            ym += s.contrast_sq * m;
            mm += m * m;
        }
        if mm == 0.0 {
            return (yy, 0.0);
        }
        let scale = ym / mm;
        let residual = samples
            .iter()
            .zip(&model)
            .map(|(s, m)| (s.contrast_sq - scale * m).powi(2))
            .sum();
        (residual, scale)
    };
    let cost = |log_k: f64| projected(log_k.exp()).0;

    let (lo, hi, steps) = (1e-3_f64.ln(), 1e3_f64.ln(), 400);
    let grid: Vec<f64> = (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect();
    let costs: Vec<f64> = grid.iter().map(|&x| cost(x)).collect();
    let best = (0..costs.len())
        .min_by(|&a, &b| costs[a].total_cmp(&costs[b]))
        .unwrap_or(0);
    if best == 0 || best == steps {
        return Err(FluxError::Fit(format!(
            "kappa at the search boundary ({:.3e} MHz): not identifiable",
            grid[best].exp()
        )));
    }

    let (mut a, mut b) = (grid[best - 1], grid[best + 1]);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while (b - a).abs() > 1e-13 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = cost(d);
        }
    }
    let kappa = (0.5 * (a + b)).exp();
    let (residual, scale) = projected(kappa);
    if !(scale > 0.0) {
        return Err(FluxError::Fit("non-positive photon scale".into()));
    }
    Ok(KappaFit {
        kappa,
        n_bar_scale: scale,
        residual,
    })
}

/// One time sample of a readout trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub phi_ext: f64,
    pub n_bar: f64,
    /// GHz.
    pub f01_shifted: f64,
}

/// Uniformly sampled (flux, photon number, Stark-shifted frequency) path.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutTrajectory {
    pub dt: f64,
    pub samples: Vec<TrajectorySample>,
}

impl ReadoutTrajectory {
    pub fn new(dt: f64, samples: Vec<TrajectorySample>) -> Result<Self> {
        let traj = ReadoutTrajectory { dt, samples };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("trajectory.dt", self.dt)?;
        if self.samples.is_empty() {
            return Err(FluxError::validation("trajectory", "no samples"));
        }
        let t0 = self.samples[0].t;
        for (i, s) in self.samples.iter().enumerate() {
            let expected = t0 + i as f64 * self.dt;
            if (s.t - expected).abs() > 1e-9 * self.dt.max(1.0) {
                return Err(FluxError::validation(
                    "trajectory",
                    format!("sample {i} at t = {} breaks uniform spacing {}", s.t, self.dt),
                ));
            }
            if !(s.n_bar >= 0.0) {
                return Err(FluxError::validation(
                    "trajectory.n_bar",
                    format!("negative photon number at sample {i}"),
                ));
            }
            ensure_finite("trajectory.phi_ext", s.phi_ext)?;
            ensure_finite("trajectory.f01_shifted", s.f01_shifted)?;
        }
        Ok(())
    }

    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Linear interpolation; the first and last samples are held outside.
    pub fn at(&self, t: f64) -> TrajectorySample {
        let first = self.samples[0];
        let last = self.samples[self.samples.len() - 1];
        if t <= first.t {
            return TrajectorySample { t, ..first };
        }
        if t >= last.t {
            return TrajectorySample { t, ..last };
        }
        let pos = (t - first.t) / self.dt;
        let i = (pos.floor() as usize).min(self.samples.len() - 2);
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        TrajectorySample {
            t,
            phi_ext: a.phi_ext + w * (b.phi_ext - a.phi_ext),
            n_bar: a.n_bar + w * (b.n_bar - a.n_bar),
            f01_shifted: a.f01_shifted + w * (b.f01_shifted - a.f01_shifted),
        }
    }

    /// Knots for integrating over `[t0, t1]`: the endpoints plus every sample
    /// strictly inside.
    pub fn knots(&self, t0: f64, t1: f64) -> Vec<TrajectorySample> {
        let mut out = vec![self.at(t0)];
        out.extend(self.samples.iter().filter(|s| s.t > t0 && s.t < t1).copied());
        out.push(self.at(t1));
        out
    }
}

/// Sampling and search settings for compensation synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompensationOptions {
    /// us.
    pub dt: f64,
    /// Half-width of the allowed flux excursion around `phi_start`, rad.
    pub flux_window: f64,
    /// Ring-down time simulated after the pulse, us.
    pub tail: f64,
    /// Chebyshev nodes used to tabulate `f01` and `chi` over the window.
    pub nodes: usize,
}

impl Default for CompensationOptions {
    fn default() -> Self {
        CompensationOptions {
            dt: 0.005,
            flux_window: 0.05 * PI,
            tail: 0.3,
            nodes: 32,
        }
    }
}

impl CompensationOptions {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("compensation.dt", self.dt)?;
        ensure_positive("compensation.flux_window", self.flux_window)?;
        ensure_non_negative("compensation.tail", self.tail)?;
        if self.nodes < 4 {
            return Err(FluxError::validation("compensation.nodes", "need at least 4"));
        }
        Ok(())
    }

    fn times(&self, pulse: &DrivePulse) -> Vec<f64> {
        let total = pulse.duration + self.tail;
        let count = (total / self.dt).round() as usize + 1;
        (0..count).map(|i| i as f64 * self.dt).collect()
    }
}

/// Interpolated `f01`/`chi` model covering the compensation window around
/// `phi_start`.
pub fn window_model(
    params: &DeviceParams,
    numerics: &NumericsConfig,
    phi_start: f64,
    opts: &CompensationOptions,
) -> Result<ChebyshevDispersion> {
    let exact = DressedDispersion::new(params, numerics)?;
    let margin = 1e-3 * opts.flux_window;
    ChebyshevDispersion::build(
        &exact,
        phi_start - opts.flux_window - margin,
        phi_start + opts.flux_window + margin,
        opts.nodes,
    )
}

/// Flux pulse holding `f01(phi) + n(t) chi(phi)` at its zero-photon value.
pub fn synthesize_compensation(
    params: &DeviceParams,
    numerics: &NumericsConfig,
    pulse: &DrivePulse,
    kappa: f64,
    phi_start: f64,
    opts: &CompensationOptions,
) -> Result<ReadoutTrajectory> {
    opts.validate()?;
    let model = window_model(params, numerics, phi_start, opts)?;
    synthesize_compensation_with(&model, pulse, kappa, phi_start, opts)
}

/// [`synthesize_compensation`] against an arbitrary dispersive model.
pub fn synthesize_compensation_with<M: DispersiveModel>(
    model: &M,
    pulse: &DrivePulse,
    kappa: f64,
    phi_start: f64,
    opts: &CompensationOptions,
) -> Result<ReadoutTrajectory> {
    pulse.validate()?;
    opts.validate()?;
    ensure_positive("kappa", kappa)?;
    ensure_finite("phi_start", phi_start)?;
    let target = model.point(phi_start)?.f01;
    let lo_limit = phi_start - opts.flux_window;
    let hi_limit = phi_start + opts.flux_window;

    let mut samples = Vec::new();
    let mut phi_prev = phi_start;
    let mut direction = 1.0;
    for (index, t) in opts.times(pulse).into_iter().enumerate() {
        let n = photon_number_at(t, pulse, kappa);
        let residual = |phi: f64| -> Result<f64> {
            let p = model.point(phi)?;
            Ok(p.f01 + n * p.chi * 1e-3 - target)
        };
        let phi = solve_near(&residual, phi_prev, direction, lo_limit, hi_limit).map_err(|reason| {
            FluxError::Synthesis { index, t, reason }
        })?;
        if phi != phi_prev {
            direction = (phi - phi_prev).signum();
        }
        phi_prev = phi;
        samples.push(TrajectorySample {
            t,
            phi_ext: phi,
            n_bar: n,
            f01_shifted: target,
        });
    }
    ReadoutTrajectory::new(opts.dt, samples)
}

/// Root of `f` nearest to `start` inside `[lo, hi]`, bracketed by expanding
/// symmetric steps and refined by bisection.
fn solve_near<F>(f: &F, start: f64, preferred: f64, lo: f64, hi: f64) -> std::result::Result<f64, String>
where
    F: Fn(f64) -> Result<f64>,
{
    let eval = |phi: f64| f(phi).map_err(|e| e.to_string());
    let f0 = eval(start)?;
    if f0.abs() < 1e-13 {
        return Ok(start);
    }
    let mut step = (hi - lo) * 1e-6;
    loop {
        let mut bracket = None;
        for dir in [preferred, -preferred] {
            let end = (start + dir * step).clamp(lo, hi);
            if end == start {
                continue;
            }
            let fe = eval(end)?;
            if fe == 0.0 {
                return Ok(end);
            }
            if fe.signum() != f0.signum() {
                bracket = Some((start, f0, end));
                break;
            }
        }
        if let Some((a, fa, b)) = bracket {
            return bisect(&eval, a, fa, b);
        }
        if start - step <= lo && start + step >= hi {
            return Err(format!(
                "no bracketing root within flux window [{lo:.6}, {hi:.6}] (residual {f0:.3e} GHz at {start:.6})"
            ));
        }
        step *= 2.0;
    }
}

fn bisect<F>(f: &F, a: f64, fa: f64, b: f64) -> std::result::Result<f64, String>
where
    F: Fn(f64) -> std::result::Result<f64, String>,
{
    let (mut lo, mut hi) = if a < b { (a, b) } else { (b, a) };
    let lo_sign = if a < b { fa.signum() } else { -fa.signum() };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid)?;
        if v.abs() < 1e-13 {
            return Ok(mid);
        }
        if v.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Trajectory at constant flux: the Stark shift is left uncompensated.
pub fn fixed_flux_trajectory<M: DispersiveModel>(
    model: &M,
    pulse: &DrivePulse,
    kappa: f64,
    phi: f64,
    opts: &CompensationOptions,
) -> Result<ReadoutTrajectory> {
    pulse.validate()?;
    opts.validate()?;
    ensure_positive("kappa", kappa)?;
    let point = model.point(phi)?;
    let samples = opts
        .times(pulse)
        .into_iter()
        .map(|t| {
            let n = photon_number_at(t, pulse, kappa);
            TrajectorySample {
                t,
                phi_ext: phi,
                n_bar: n,
                f01_shifted: point.f01 + n * point.chi * 1e-3,
            }
        })
        .collect();
    ReadoutTrajectory::new(opts.dt, samples)
}

/// Dispersive measurement-induced dephasing `8 (2 pi chi)^2 n / (2 pi kappa)`
/// in us^-1, with `chi` and `kappa` in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementDephasing {
    pub chi: f64,
    pub kappa: f64,
}

impl MeasurementDephasing {
    pub fn rate(&self, n: f64) -> f64 {
        let chi = TAU * self.chi;
        8.0 * chi * chi * n.max(0.0) / (TAU * self.kappa)
    }
}

/// Ramsey excited-state probability, indexed `[delay][drive]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RamseyMap {
    pub drive_freqs: Vec<f64>,
    pub delays: Vec<f64>,
    pub probability: Vec<Vec<f64>>,
}

impl RamseyMap {
    /// Drive frequency of maximal probability at each delay.
    pub fn fringe_centers(&self) -> Vec<f64> {
        self.probability
            .iter()
            .map(|row| {
                let best = (0..row.len())
                    .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                self.drive_freqs[best]
            })
            .collect()
    }
}

/// Ramsey fringes with the `pi/2` pair spanning `[delay, delay + interval]`
/// of the trajectory: `P = (1 + C cos(phase)) / 2` with the phase accrued
/// against the drive and `C = exp(-int dephasing(n) dt)`.
pub fn simulate_ramsey<D>(
    trajectory: &ReadoutTrajectory,
    drive_freqs: &[f64],
    delays: &[f64],
    interval: f64,
    dephasing: D,
) -> Result<RamseyMap>
where
    D: Fn(f64) -> f64,
{
    trajectory.validate()?;
    ensure_positive("interval", interval)?;
    let mut probability = Vec::with_capacity(delays.len());
    for &t0 in delays {
        ensure_finite("delay", t0)?;
        let knots = trajectory.knots(t0, t0 + interval);
        let (mut freq_area, mut decay) = (0.0, 0.0);
        for w in knots.windows(2) {
            let h = w[1].t - w[0].t;
            freq_area += 0.5 * h * (w[0].f01_shifted + w[1].f01_shifted);
            decay += 0.5 * h * (dephasing(w[0].n_bar) + dephasing(w[1].n_bar));
        }
        let contrast = (-decay).exp();
        let row = drive_freqs
            .iter()
            .map(|&fd| {
                // GHz * us = 1e3 cycles
                let phase = TAU * 1e3 * (freq_area - fd * interval);
                0.5 * (1.0 + contrast * phase.cos())
            })
            .collect();
        probability.push(row);
    }
    Ok(RamseyMap {
        drive_freqs: drive_freqs.to_vec(),
        delays: delays.to_vec(),
        probability,
    })
}
