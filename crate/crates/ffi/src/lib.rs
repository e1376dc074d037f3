//! C ABI over `fluxread`.
//!
//! Every entry point returns a [`FluxStatus`]; on failure the message is
//! kept per thread and read back with [`fluxread_last_error`]. Results that
//! own memory are returned as opaque handles released by the matching
//! `_free` function. Array outputs follow a two-call protocol: pass a null
//! buffer to learn the length, then a buffer at least that long.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_void};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fluxread::dispersive::{dispersive_shift, TlsMode};
use fluxread::dynamics::{
    photon_number, synthesize_compensation, CompensationOptions, DrivePulse, MeasurementDephasing, PulsePhase,
    ReadoutTrajectory, TrajectorySample,
};
use fluxread::mist::{dressed_coherent_state, mist_error_metric};
use fluxread::optimize::{cma_es_minimize, CmaConfig};
use fluxread::readout::{classify_errors, fidelity, simulate_shots, NoiseModel, ShotRecord};
use fluxread::spectrum::{
    build_coupled_and_label, diagonalize_fluxonium, DeviceParams, DressedLabeling, FluxoniumSpectrum,
    NumericsConfig,
};
use fluxread::{Complex64, FluxError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    Numerical = 3,
    Resource = 4,
    Labeling = 5,
    Fit = 6,
    Synthesis = 7,
    Io = 8,
    Config = 9,
    Usage = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

impl From<&FluxError> for FluxStatus {
    fn from(e: &FluxError) -> Self {
        match e {
            FluxError::Validation { .. } => FluxStatus::Validation,
            FluxError::Numerical { .. } => FluxStatus::Numerical,
            FluxError::Resource(_) => FluxStatus::Resource,
            FluxError::Labeling(_) => FluxStatus::Labeling,
            FluxError::Fit(_) => FluxStatus::Fit,
            FluxError::Synthesis { .. } => FluxStatus::Synthesis,
            FluxError::Io { .. } => FluxStatus::Io,
            FluxError::Config { .. } => FluxStatus::Config,
            FluxError::Usage(_) => FluxStatus::Usage,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: FluxStatus, msg: impl Into<String>) -> FluxStatus {
    set_error(msg.into());
    status
}

fn guard<F>(f: F) -> FluxStatus
where
    F: FnOnce() -> Result<(), FluxStatus>,
{
    set_error(String::new());
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FluxStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(FluxStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn check<T>(r: fluxread::Result<T>) -> Result<T, FluxStatus> {
    r.map_err(|e| fail(FluxStatus::from(&e), e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, FluxStatus> {
    p.as_ref()
        .ok_or_else(|| fail(FluxStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, FluxStatus> {
    p.as_mut()
        .ok_or_else(|| fail(FluxStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], FluxStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(FluxStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copy `src` into `buf` under the two-call protocol.
unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, len: usize, written: *mut usize) -> Result<(), FluxStatus> {
    let written = out(written, "written")?;
    *written = src.len();
    if buf.is_null() {
        return Ok(());
    }
    if len < src.len() {
        return Err(fail(
            FluxStatus::BufferTooSmall,
            format!("buffer holds {len}, need {}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copy the calling thread's last error message, NUL-terminated and
/// truncated to `len`. Returns the full message length excluding the NUL.
#[no_mangle]
pub unsafe extern "C" fn fluxread_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Energies in GHz, `kappa` in MHz.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FluxDeviceParams {
    pub e_c: f64,
    pub e_j: f64,
    pub e_l: f64,
    pub f_r: f64,
    pub g_na: f64,
    pub kappa: f64,
}

impl From<FluxDeviceParams> for DeviceParams {
    fn from(p: FluxDeviceParams) -> Self {
        DeviceParams {
            e_c: p.e_c,
            e_j: p.e_j,
            e_l: p.e_l,
            f_r: p.f_r,
            g_na: p.g_na,
            kappa: p.kappa,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FluxNumerics {
    pub n_osc: usize,
    pub n_keep: usize,
    pub n_ph: usize,
    pub dasi_dg: f64,
}

impl From<FluxNumerics> for NumericsConfig {
    fn from(n: FluxNumerics) -> Self {
        NumericsConfig {
            n_osc: n.n_osc,
            n_keep: n.n_keep,
            n_ph: n.n_ph,
            dasi_dg: n.dasi_dg,
        }
    }
}

/// Constants of the measured reference device.
#[no_mangle]
pub unsafe extern "C" fn fluxread_device_measured(params: *mut FluxDeviceParams) -> FluxStatus {
    guard(|| {
        let p = DeviceParams::measured();
        *out(params, "params")? = FluxDeviceParams {
            e_c: p.e_c,
            e_j: p.e_j,
            e_l: p.e_l,
            f_r: p.f_r,
            g_na: p.g_na,
            kappa: p.kappa,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fluxread_numerics_default(numerics: *mut FluxNumerics) -> FluxStatus {
    guard(|| {
        let n = NumericsConfig::default();
        *out(numerics, "numerics")? = FluxNumerics {
            n_osc: n.n_osc,
            n_keep: n.n_keep,
            n_ph: n.n_ph,
            dasi_dg: n.dasi_dg,
        };
        Ok(())
    })
}

/// Bare fluxonium spectrum at one flux.
pub struct FluxSpectrum(FluxoniumSpectrum);

#[no_mangle]
pub unsafe extern "C" fn fluxread_spectrum_new(
    params: *const FluxDeviceParams,
    numerics: *const FluxNumerics,
    phi_ext: f64,
    handle: *mut *mut FluxSpectrum,
) -> FluxStatus {
    guard(|| {
        let slot = out(handle, "handle")?;
        *slot = ptr::null_mut();
        let p: DeviceParams = (*deref(params, "params")?).into();
        let n: NumericsConfig = (*deref(numerics, "numerics")?).into();
        let spec = check(diagonalize_fluxonium(&p, phi_ext, &n))?;
        *slot = Box::into_raw(Box::new(FluxSpectrum(spec)));
        Ok(())
    })
}

/// Zero-referenced energies (GHz), ascending.
#[no_mangle]
pub unsafe extern "C" fn fluxread_spectrum_energies(
    handle: *const FluxSpectrum,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> FluxStatus {
    guard(|| {
        let spec = deref(handle, "handle")?;
        copy_out(&spec.0.energies, buf, len, written)
    })
}

#[no_mangle]
pub unsafe extern "C" fn fluxread_spectrum_free(handle: *mut FluxSpectrum) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Dressed qubit-resonator eigenstates labeled by (level, photons).
pub struct FluxLabeling(DressedLabeling);

#[no_mangle]
pub unsafe extern "C" fn fluxread_labeling_new(
    params: *const FluxDeviceParams,
    numerics: *const FluxNumerics,
    phi_ext: f64,
    handle: *mut *mut FluxLabeling,
) -> FluxStatus {
    guard(|| {
        let slot = out(handle, "handle")?;
        *slot = ptr::null_mut();
        let p: DeviceParams = (*deref(params, "params")?).into();
        let n: NumericsConfig = (*deref(numerics, "numerics")?).into();
        let lab = check(build_coupled_and_label(&p, phi_ext, &n))?;
        *slot = Box::into_raw(Box::new(FluxLabeling(lab)));
        Ok(())
    })
}

/// Dressed energy (GHz) of label `(level, photons)`.
#[no_mangle]
pub unsafe extern "C" fn fluxread_labeling_energy(
    handle: *const FluxLabeling,
    level: usize,
    photons: usize,
    energy: *mut f64,
) -> FluxStatus {
    guard(|| {
        let lab = deref(handle, "handle")?;
        *out(energy, "energy")? = check(lab.0.energy(level, photons))?;
        Ok(())
    })
}

/// Number of labels flagged ambiguous during the coupling ramp.
#[no_mangle]
pub unsafe extern "C" fn fluxread_labeling_ambiguous_count(handle: *const FluxLabeling, count: *mut usize) -> FluxStatus {
    guard(|| {
        let lab = deref(handle, "handle")?;
        *out(count, "count")? = lab.0.ambiguous.len();
        Ok(())
    })
}

/// `f01` in GHz and `chi` in MHz.
#[no_mangle]
pub unsafe extern "C" fn fluxread_labeling_dispersive(
    handle: *const FluxLabeling,
    f01: *mut f64,
    chi: *mut f64,
) -> FluxStatus {
    guard(|| {
        let lab = deref(handle, "handle")?;
        let point = check(dispersive_shift(&lab.0))?;
        *out(f01, "f01")? = point.f01;
        *out(chi, "chi")? = point.chi;
        Ok(())
    })
}

/// MIST metric of the dressed coherent state of `level` with `n_bar` photons.
#[no_mangle]
pub unsafe extern "C" fn fluxread_mist_metric(
    handle: *const FluxLabeling,
    level: usize,
    n_bar: f64,
    epsilon: *mut f64,
) -> FluxStatus {
    guard(|| {
        let lab = deref(handle, "handle")?;
        if !(n_bar >= 0.0) {
            return Err(fail(FluxStatus::Validation, "invalid `n_bar`: must be >= 0"));
        }
        let alpha = Complex64::new(n_bar.sqrt(), 0.0);
        let state = check(dressed_coherent_state(&lab.0, level, alpha))?;
        *out(epsilon, "epsilon")? = check(mist_error_metric(&state, &lab.0, alpha))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fluxread_labeling_free(handle: *mut FluxLabeling) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Square pulse: `epsilon` and `detuning` in MHz, `duration` in us.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FluxPulse {
    pub epsilon: f64,
    pub detuning: f64,
    pub duration: f64,
}

impl From<FluxPulse> for DrivePulse {
    fn from(p: FluxPulse) -> Self {
        DrivePulse {
            epsilon: p.epsilon,
            detuning: p.detuning,
            duration: p.duration,
        }
    }
}

/// Mean photon number `t` us into the ring-up, or into the ring-down when
/// `ring_down` is set.
#[no_mangle]
pub unsafe extern "C" fn fluxread_photon_number(
    t: f64,
    pulse: *const FluxPulse,
    kappa: f64,
    ring_down: bool,
    n: *mut f64,
) -> FluxStatus {
    guard(|| {
        let pulse: DrivePulse = (*deref(pulse, "pulse")?).into();
        let phase = if ring_down { PulsePhase::RingDown } else { PulsePhase::RingUp };
        *out(n, "n")? = check(photon_number(t, &pulse, kappa, phase))?;
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FluxTrajectorySample {
    pub t: f64,
    pub phi_ext: f64,
    pub n_bar: f64,
    pub f01_shifted: f64,
}

/// Sampled readout trajectory.
pub struct FluxTrajectory(ReadoutTrajectory);

/// Flux pulse that holds the Stark-shifted qubit frequency constant.
/// `flux_window` is the half-width of the allowed excursion (rad), `tail`
/// the ring-down time simulated after the pulse (us).
#[no_mangle]
pub unsafe extern "C" fn fluxread_trajectory_compensated(
    params: *const FluxDeviceParams,
    numerics: *const FluxNumerics,
    pulse: *const FluxPulse,
    phi_start: f64,
    dt: f64,
    flux_window: f64,
    tail: f64,
    handle: *mut *mut FluxTrajectory,
) -> FluxStatus {
    guard(|| {
        let slot = out(handle, "handle")?;
        *slot = ptr::null_mut();
        let p: DeviceParams = (*deref(params, "params")?).into();
        let n: NumericsConfig = (*deref(numerics, "numerics")?).into();
        let pulse: DrivePulse = (*deref(pulse, "pulse")?).into();
        let opts = CompensationOptions {
            dt,
            flux_window,
            tail,
            ..CompensationOptions::default()
        };
        let traj = check(synthesize_compensation(&p, &n, &pulse, p.kappa, phi_start, &opts))?;
        *slot = Box::into_raw(Box::new(FluxTrajectory(traj)));
        Ok(())
    })
}

/// Build a trajectory from caller samples with uniform spacing `dt`.
#[no_mangle]
pub unsafe extern "C" fn fluxread_trajectory_from_samples(
    samples: *const FluxTrajectorySample,
    len: usize,
    dt: f64,
    handle: *mut *mut FluxTrajectory,
) -> FluxStatus {
    guard(|| {
        let slot = out(handle, "handle")?;
        *slot = ptr::null_mut();
        let samples = slice(samples, len, "samples")?
            .iter()
            .map(|s| TrajectorySample {
                t: s.t,
                phi_ext: s.phi_ext,
                n_bar: s.n_bar,
                f01_shifted: s.f01_shifted,
            })
            .collect();
        let traj = check(ReadoutTrajectory::new(dt, samples))?;
        *slot = Box::into_raw(Box::new(FluxTrajectory(traj)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fluxread_trajectory_samples(
    handle: *const FluxTrajectory,
    buf: *mut FluxTrajectorySample,
    len: usize,
    written: *mut usize,
) -> FluxStatus {
    guard(|| {
        let traj = deref(handle, "handle")?;
        let samples: Vec<FluxTrajectorySample> = traj
            .0
            .samples
            .iter()
            .map(|s| FluxTrajectorySample {
                t: s.t,
                phi_ext: s.phi_ext,
                n_bar: s.n_bar,
                f01_shifted: s.f01_shifted,
            })
            .collect();
        copy_out(&samples, buf, len, written)
    })
}

#[no_mangle]
pub unsafe extern "C" fn fluxread_trajectory_free(handle: *mut FluxTrajectory) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// `f_tls` GHz, rates us^-1, `linewidth` MHz (FWHM).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FluxTls {
    pub f_tls: f64,
    pub gamma_down: f64,
    pub gamma_up: f64,
    pub linewidth: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FluxNoise {
    pub eta: f64,
    pub integration_time: f64,
    pub separation_scale: f64,
    pub threshold: f64,
    pub preparation_error: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxShot {
    pub m1: u8,
    pub m2: u8,
    pub m3: u8,
    pub iq1: f64,
    pub iq2: f64,
    pub iq3: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FluxErrorCounts {
    pub correct: usize,
    pub assignment_error: usize,
    pub transition_error: usize,
    pub other: usize,
}

/// Simulated single-shot records.
pub struct FluxShots(Vec<ShotRecord>);

/// Simulate `count` three-window shots. TLS lines are broadened by the
/// measurement-dephasing rate for `chi` (MHz) and `kappa` (MHz); pass
/// `chi = 0` to disable broadening.
#[no_mangle]
pub unsafe extern "C" fn fluxread_shots_simulate(
    trajectory: *const FluxTrajectory,
    tls: *const FluxTls,
    n_tls: usize,
    noise: *const FluxNoise,
    chi: f64,
    kappa: f64,
    initial_state: u8,
    count: usize,
    seed: u64,
    handle: *mut *mut FluxShots,
) -> FluxStatus {
    guard(|| {
        let slot = out(handle, "handle")?;
        *slot = ptr::null_mut();
        let traj = deref(trajectory, "trajectory")?;
        let catalog: Vec<TlsMode> = slice(tls, n_tls, "tls")?
            .iter()
            .map(|t| TlsMode {
                f_tls: t.f_tls,
                gamma_down: t.gamma_down,
                gamma_up: t.gamma_up,
                linewidth: t.linewidth,
            })
            .collect();
        let nz = deref(noise, "noise")?;
        let noise = NoiseModel {
            eta: nz.eta,
            integration_time: nz.integration_time,
            separation_scale: nz.separation_scale,
            threshold: nz.threshold,
            preparation_error: nz.preparation_error,
        };
        let dephasing = MeasurementDephasing { chi, kappa };
        let rate = |n: f64| if chi == 0.0 { 0.0 } else { dephasing.rate(n) };
        let shots = check(simulate_shots(&traj.0, &catalog, &noise, rate, initial_state, count, seed))?;
        *slot = Box::into_raw(Box::new(FluxShots(shots)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fluxread_shots_records(
    handle: *const FluxShots,
    buf: *mut FluxShot,
    len: usize,
    written: *mut usize,
) -> FluxStatus {
    guard(|| {
        let shots = deref(handle, "handle")?;
        let records: Vec<FluxShot> = shots
            .0
            .iter()
            .map(|r| FluxShot {
                m1: r.m1,
                m2: r.m2,
                m3: r.m3,
                iq1: r.iq1,
                iq2: r.iq2,
                iq3: r.iq3,
            })
            .collect();
        copy_out(&records, buf, len, written)
    })
}

#[no_mangle]
pub unsafe extern "C" fn fluxread_shots_classify(handle: *const FluxShots, counts: *mut FluxErrorCounts) -> FluxStatus {
    guard(|| {
        let shots = deref(handle, "handle")?;
        let c = check(classify_errors(&shots.0))?;
        *out(counts, "counts")? = FluxErrorCounts {
            correct: c.correct,
            assignment_error: c.assignment_error,
            transition_error: c.transition_error,
            other: c.other,
        };
        Ok(())
    })
}

/// `1 - (P(1|0) + P(0|1)) / 2` on M2.
#[no_mangle]
pub unsafe extern "C" fn fluxread_shots_fidelity(
    prepared_0: *const FluxShots,
    prepared_1: *const FluxShots,
    value: *mut f64,
) -> FluxStatus {
    guard(|| {
        let a = deref(prepared_0, "prepared_0")?;
        let b = deref(prepared_1, "prepared_1")?;
        *out(value, "value")? = check(fidelity(&a.0, &b.0))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fluxread_shots_free(handle: *mut FluxShots) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Objective for [`fluxread_cma_minimize`]: `x` points at `dim` values.
pub type FluxObjective = Option<unsafe extern "C" fn(x: *const f64, dim: usize, user: *mut c_void) -> f64>;

struct UserData(*mut c_void);
// The callback is only ever invoked from one thread at a time.
unsafe impl Send for UserData {}
unsafe impl Sync for UserData {}

/// Minimize `objective` over the box `[lower, upper]` by CMA-ES.
/// `population = 0` selects the default. The callback is invoked
/// sequentially, possibly from a worker thread. `best_x` receives `dim`
/// values.
#[no_mangle]
pub unsafe extern "C" fn fluxread_cma_minimize(
    objective: FluxObjective,
    user: *mut c_void,
    x0: *const f64,
    lower: *const f64,
    upper: *const f64,
    dim: usize,
    sigma0: f64,
    budget: usize,
    population: usize,
    seed: u64,
    best_x: *mut f64,
    best_value: *mut f64,
    evaluations: *mut usize,
) -> FluxStatus {
    guard(|| {
        let Some(f) = objective else {
            return Err(fail(FluxStatus::NullPointer, "`objective` is null"));
        };
        let x0 = slice(x0, dim, "x0")?;
        let lower = slice(lower, dim, "lower")?;
        let upper = slice(upper, dim, "upper")?;
        if best_x.is_null() {
            return Err(fail(FluxStatus::NullPointer, "`best_x` is null"));
        }
        let best_value = out(best_value, "best_value")?;
        let config = CmaConfig {
            x0: x0.to_vec(),
            sigma0,
            population: (population > 0).then_some(population),
            budget,
            bounds: lower.iter().copied().zip(upper.iter().copied()).collect(),
            seed,
        };
        let user = UserData(user);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| fail(FluxStatus::Resource, e.to_string()))?;
        let result = pool.install(|| {
            let user = &user;
            cma_es_minimize(|x| f(x.as_ptr(), x.len(), user.0), &config)
        });
        let result = check(result)?;
        ptr::copy_nonoverlapping(result.best_x.as_ptr(), best_x, dim);
        *best_value = result.best_value;
        if let Some(e) = evaluations.as_mut() {
            *e = result.evaluations;
        }
        Ok(())
    })
}
