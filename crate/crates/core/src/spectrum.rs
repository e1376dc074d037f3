//! Fluxonium and fluxonium–resonator spectra.
//!
//! The bare fluxonium is diagonalized in the harmonic-oscillator basis of its
//! LC part, `4 E_C n^2 + E_L phi^2 / 2`, with
//!
//! ```text
//! phi = phi_0 (b + b^+) / sqrt(2),   n = i (b^+ - b) / (sqrt(2) phi_0),   phi_0 = (8 E_C / E_L)^(1/4)
//! ```
//!
//! The lowest `n_keep` levels are then coupled to a resonator truncated at
//! `n_ph` Fock states through `g n (a + a^+)` and the dressed states are
//! labeled by discrete adiabatic state identification: the coupling is ramped
//! from zero in steps of `dasi_dg` and every dressed state inherits the label
//! of the previous-step state it overlaps most.
//!
//! All energies are ordinary frequencies in GHz.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, FluxError, Result};
use crate::linalg::{self, symmetric_eigen};

/// Largest product-basis dimension accepted for dense diagonalization.
pub const MAX_DENSE_DIM: usize = 6000;

/// Overlap below which a DASI step is flagged as ambiguous.
pub const AMBIGUITY_THRESHOLD: f64 = 0.5;

const OVERLAP_TIE: f64 = 1e-12;

/// Fitted circuit constants. Energies in GHz, `kappa` in MHz (kappa / 2 pi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    pub e_c: f64,
    pub e_j: f64,
    pub e_l: f64,
    pub f_r: f64,
    pub g_na: f64,
    pub kappa: f64,
}

impl DeviceParams {
    /// Constants of the measured fluxonium device.
    pub fn measured() -> Self {
        DeviceParams {
            e_c: 1.848,
            e_j: 4.684,
            e_l: 0.491,
            f_r: 7.105,
            g_na: 0.0537,
            kappa: 3.50,
        }
    }

    /// `e_j` and `g_na` may be zero (harmonic and uncoupled limits); every
    /// other field must be strictly positive.
    pub fn validate(&self) -> Result<()> {
        ensure_positive("device.e_c", self.e_c)?;
        ensure_non_negative("device.e_j", self.e_j)?;
        ensure_positive("device.e_l", self.e_l)?;
        ensure_positive("device.f_r", self.f_r)?;
        ensure_non_negative("device.g_na", self.g_na)?;
        ensure_positive("device.kappa", self.kappa)?;
        if self.e_j > 0.0 && self.e_j <= self.e_l {
            log::warn!(
                "e_j = {} <= e_l = {}: outside the fluxonium regime of the reference device",
                self.e_j,
                self.e_l
            );
        }
        Ok(())
    }

    pub fn plasma_frequency(&self) -> f64 {
        (8.0 * self.e_c * self.e_l).sqrt()
    }

    pub fn with_coupling(mut self, g_na: f64) -> Self {
        self.g_na = g_na;
        self
    }
}

/// Basis sizes and the DASI coupling increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub n_osc: usize,
    pub n_keep: usize,
    pub n_ph: usize,
    /// GHz.
    pub dasi_dg: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            n_osc: 100,
            n_keep: 12,
            n_ph: 60,
            dasi_dg: 0.001,
        }
    }
}

impl NumericsConfig {
    pub fn validate(&self, params: &DeviceParams) -> Result<()> {
        if self.n_osc < 10 {
            return Err(FluxError::validation(
                "numerics.n_osc",
                format!("must be >= 10, got {}", self.n_osc),
            ));
        }
        if self.n_keep < 2 || self.n_keep > self.n_osc {
            return Err(FluxError::validation(
                "numerics.n_keep",
                format!("must satisfy 2 <= n_keep <= n_osc ({}), got {}", self.n_osc, self.n_keep),
            ));
        }
        if self.n_ph < 1 {
            return Err(FluxError::validation("numerics.n_ph", "must be >= 1"));
        }
        ensure_positive("numerics.dasi_dg", self.dasi_dg)?;
        if params.g_na > 0.0 && self.dasi_dg > params.g_na {
            return Err(FluxError::validation(
                "numerics.dasi_dg",
                format!("must not exceed g_na = {}, got {}", params.g_na, self.dasi_dg),
            ));
        }
        Ok(())
    }

    pub fn with_photons(mut self, n_ph: usize) -> Self {
        self.n_ph = n_ph;
        self
    }
}

/// Oscillator-basis operators of one fluxonium, independent of the external
/// flux. Build once and call [`FluxoniumBasis::diagonalize`] per flux point.
#[derive(Debug, Clone)]
pub struct FluxoniumBasis {
    params: DeviceParams,
    n_osc: usize,
    cos_phi: Mat<f64>,
    sin_phi: Mat<f64>,
    /// Real antisymmetric `K` with `n = i K`.
    charge: Mat<f64>,
}

impl FluxoniumBasis {
    pub fn new(params: &DeviceParams, n_osc: usize) -> Result<Self> {
        params.validate()?;
        if n_osc < 10 {
            return Err(FluxError::validation(
                "numerics.n_osc",
                format!("must be >= 10, got {n_osc}"),
            ));
        }
        let phi0 = (8.0 * params.e_c / params.e_l).powf(0.25);

        // cos and sin of phi are matrix functions of the position operator;
        // evaluating them in a padded basis and truncating keeps the retained
        // block free of edge effects.
        let padded = 2 * n_osc + 20;
        let mut position = Mat::<f64>::zeros(padded, padded);
        for m in 0..padded - 1 {
            let x = phi0 * ((m + 1) as f64 / 2.0).sqrt();
            position[(m, m + 1)] = x;
            position[(m + 1, m)] = x;
        }
        let evd = symmetric_eigen(&position)?;
        let mut cos_phi = Mat::<f64>::zeros(n_osc, n_osc);
        let mut sin_phi = Mat::<f64>::zeros(n_osc, n_osc);
        for (q, &x) in evd.values.iter().enumerate() {
            let (s, c) = x.sin_cos();
            for j in 0..n_osc {
                let vj = evd.vectors[(j, q)];
                if vj == 0.0 {
                    continue;
                }
                for i in 0..n_osc {
                    let w = evd.vectors[(i, q)] * vj;
                    cos_phi[(i, j)] += c * w;
                    sin_phi[(i, j)] += s * w;
                }
            }
        }
        linalg::symmetrize(&mut cos_phi);
        linalg::symmetrize(&mut sin_phi);

        let mut charge = Mat::<f64>::zeros(n_osc, n_osc);
        let scale = 1.0 / (2.0_f64.sqrt() * phi0);
        for m in 0..n_osc - 1 {
            let v = scale * ((m + 1) as f64).sqrt();
            charge[(m + 1, m)] = v;
            charge[(m, m + 1)] = -v;
        }

        Ok(FluxoniumBasis {
            params: *params,
            n_osc,
            cos_phi,
            sin_phi,
            charge,
        })
    }

    pub fn n_osc(&self) -> usize {
        self.n_osc
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    /// `4 E_C n^2 + E_L phi^2 / 2 - E_J cos(phi - phi_ext)` in the oscillator basis.
    pub fn hamiltonian(&self, phi_ext: f64) -> Mat<f64> {
        let p = &self.params;
        let omega = p.plasma_frequency();
        let (s, c) = phi_ext.sin_cos();
        // cos(phi - phi_ext) = cos(phi) cos(phi_ext) + sin(phi) sin(phi_ext)
        let mut h = Mat::<f64>::from_fn(self.n_osc, self.n_osc, |i, j| {
            -p.e_j * (c * self.cos_phi[(i, j)] + s * self.sin_phi[(i, j)])
        });
        for m in 0..self.n_osc {
            h[(m, m)] += omega * (m as f64 + 0.5);
        }
        h
    }

    pub fn diagonalize(&self, phi_ext: f64) -> Result<FluxoniumSpectrum> {
        ensure_finite("phi_ext", phi_ext)?;
        let h = self.hamiltonian(phi_ext);
        let evd = symmetric_eigen(&h)?;
        let mut vectors = evd.vectors;
        linalg::fix_column_signs(&mut vectors);
        let ground = evd.values[0];
        let energies: Vec<f64> = evd.values.iter().map(|e| e - ground).collect();
        // <i|n|j> = i (V^T K V)_ij
        let kv = self.charge.as_ref() * vectors.as_ref();
        let mut charge = linalg::transpose_mul(&vectors, &kv);
        antisymmetrize(&mut charge);
        Ok(FluxoniumSpectrum {
            phi_ext,
            energies,
            eigenvectors: vectors,
            charge_imag: charge,
        })
    }
}

fn antisymmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        m[(j, j)] = 0.0;
        for i in 0..j {
            let avg = 0.5 * (m[(i, j)] - m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = -avg;
        }
    }
}

/// Eigen-decomposition of the bare fluxonium at one flux point.
#[derive(Debug, Clone)]
pub struct FluxoniumSpectrum {
    pub phi_ext: f64,
    /// Ascending, GHz, `energies[0] == 0`.
    pub energies: Vec<f64>,
    /// Columns are eigenvectors in the oscillator basis.
    pub eigenvectors: Mat<f64>,
    /// Real antisymmetric `A` with `<i|n|j> = i A_ij`.
    pub charge_imag: Mat<f64>,
}

impl FluxoniumSpectrum {
    pub fn levels(&self) -> usize {
        self.energies.len()
    }

    pub fn f01(&self) -> f64 {
        self.energies[1]
    }

    pub fn charge_element(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(0.0, self.charge_imag[(i, j)])
    }
}

pub fn diagonalize_fluxonium(
    params: &DeviceParams,
    phi_ext: f64,
    numerics: &NumericsConfig,
) -> Result<FluxoniumSpectrum> {
    FluxoniumBasis::new(params, numerics.n_osc)?.diagonalize(phi_ext)
}

/// `energies[j] - energies[i]` for `i < j`.
pub fn transition_frequency(spec: &FluxoniumSpectrum, i: usize, j: usize) -> Result<f64> {
    if i >= j {
        return Err(FluxError::validation(
            "transition",
            format!("need i < j, got ({i}, {j})"),
        ));
    }
    if j >= spec.levels() {
        return Err(FluxError::validation(
            "transition",
            format!("level {j} out of range ({} retained)", spec.levels()),
        ));
    }
    Ok(spec.energies[j] - spec.energies[i])
}

/// A DASI step where a label's best overlap fell below [`AMBIGUITY_THRESHOLD`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbiguousLabel {
    pub level: usize,
    pub photons: usize,
    pub overlap: f64,
    pub coupling: f64,
}

/// Dressed eigenstates of the coupled system labeled by bare `(k, n)`.
///
/// Vectors are stored in the resonator frame rotated by `exp(i pi a^+ a / 2)`,
/// where the coupling `g A (a - a^+)` is real. The physical amplitude on the
/// product state `|k', n'>` is `(-i)^{n'}` times the stored component; use
/// [`DressedLabeling::physical_state`] for physical-frame vectors.
/// Product index is `k * n_ph + n`.
#[derive(Debug, Clone)]
pub struct DressedLabeling {
    pub phi_ext: f64,
    pub g_target: f64,
    pub n_keep: usize,
    pub n_ph: usize,
    /// Ascending by eigenindex, GHz.
    pub dressed_energies: Vec<f64>,
    /// Column `c` is eigenvector `c`, sign fixed by adiabatic continuity.
    pub dressed_vectors: Mat<f64>,
    /// Bare energies `E_k + n f_r` of the retained product states.
    pub bare_energies: Vec<f64>,
    index_of_label: Vec<usize>,
    label_of_index: Vec<(usize, usize)>,
    min_overlap: Vec<f64>,
    pub ambiguous: Vec<AmbiguousLabel>,
}

impl DressedLabeling {
    pub fn dim(&self) -> usize {
        self.n_keep * self.n_ph
    }

    fn product_index(&self, k: usize, n: usize) -> usize {
        k * self.n_ph + n
    }

    pub fn index_of(&self, k: usize, n: usize) -> Option<usize> {
        if k < self.n_keep && n < self.n_ph {
            Some(self.index_of_label[self.product_index(k, n)])
        } else {
            None
        }
    }

    pub fn label_of(&self, index: usize) -> Option<(usize, usize)> {
        self.label_of_index.get(index).copied()
    }

    /// Dressed energy of the state labeled `(k, n)`, if that label carries
    /// no ambiguity flag.
    pub fn energy(&self, k: usize, n: usize) -> Result<f64> {
        let idx = self.index_of(k, n).ok_or_else(|| {
            FluxError::validation(
                "label",
                format!("({k}, {n}) outside the {}x{} truncated ladder", self.n_keep, self.n_ph),
            )
        })?;
        if self.min_overlap[self.product_index(k, n)] < AMBIGUITY_THRESHOLD {
            return Err(FluxError::Labeling(format!(
                "label ({k}, {n}) is ambiguous (overlap {:.3})",
                self.min_overlap[self.product_index(k, n)]
            )));
        }
        Ok(self.dressed_energies[idx])
    }

    /// Smallest overlap seen along the coupling ramp; NaN outside the ladder.
    pub fn min_overlap(&self, k: usize, n: usize) -> f64 {
        if k < self.n_keep && n < self.n_ph {
            self.min_overlap[self.product_index(k, n)]
        } else {
            f64::NAN
        }
    }

    /// Stored (rotated-frame) vector of the state labeled `(k, n)`.
    pub fn rotated_vector(&self, k: usize, n: usize) -> Option<Vec<f64>> {
        let idx = self.index_of(k, n)?;
        Some((0..self.dim()).map(|r| self.dressed_vectors[(r, idx)]).collect())
    }

    /// Physical-frame vector of the state labeled `(k, n)` in the product basis.
    pub fn physical_state(&self, k: usize, n: usize) -> Option<Vec<Complex64>> {
        let rotated = self.rotated_vector(k, n)?;
        Some(
            rotated
                .iter()
                .enumerate()
                .map(|(r, &v)| minus_i_pow(r % self.n_ph) * v)
                .collect(),
        )
    }
}

/// `(-i)^n`.
pub(crate) fn minus_i_pow(n: usize) -> Complex64 {
    match n % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

/// Uncoupled diagonal and real coupling operator `A (x) (a - a^+)` of the
/// truncated product space, in the rotated resonator frame.
pub struct CoupledOperators {
    pub n_keep: usize,
    pub n_ph: usize,
    pub bare: Vec<f64>,
    pub coupling: Mat<f64>,
}

impl CoupledOperators {
    pub fn new(spec: &FluxoniumSpectrum, f_r: f64, n_keep: usize, n_ph: usize) -> Result<Self> {
        if n_keep > spec.levels() {
            return Err(FluxError::validation(
                "numerics.n_keep",
                format!("only {} fluxonium levels available", spec.levels()),
            ));
        }
        let dim = n_keep * n_ph;
        if dim > MAX_DENSE_DIM {
            return Err(FluxError::Resource(format!(
                "coupled dimension {dim} = {n_keep} x {n_ph} exceeds the dense limit {MAX_DENSE_DIM}"
            )));
        }
        let mut bare = vec![0.0; dim];
        for k in 0..n_keep {
            for n in 0..n_ph {
                bare[k * n_ph + n] = spec.energies[k] + n as f64 * f_r;
            }
        }
        let mut coupling = Mat::<f64>::zeros(dim, dim);
        for k in 0..n_keep {
            for l in 0..n_keep {
                let a_kl = spec.charge_imag[(k, l)];
                if a_kl == 0.0 {
                    continue;
                }
                for n in 0..n_ph - 1 {
                    // (a - a^+): +sqrt(n+1) at (n, n+1), -sqrt(n+1) at (n+1, n)
                    let s = ((n + 1) as f64).sqrt();
                    coupling[(k * n_ph + n, l * n_ph + n + 1)] = a_kl * s;
                    coupling[(k * n_ph + n + 1, l * n_ph + n)] = -a_kl * s;
                }
            }
        }
        Ok(CoupledOperators {
            n_keep,
            n_ph,
            bare,
            coupling,
        })
    }

    pub fn dim(&self) -> usize {
        self.bare.len()
    }

    pub fn hamiltonian(&self, g: f64) -> Mat<f64> {
        let mut h = Mat::<f64>::from_fn(self.dim(), self.dim(), |i, j| g * self.coupling[(i, j)]);
        for (i, &e) in self.bare.iter().enumerate() {
            h[(i, i)] += e;
        }
        h
    }
}

/// Pre-diagonalize the fluxonium, couple its lowest `n_keep` levels to the
/// resonator and label the dressed states by DASI.
pub fn build_coupled_and_label(
    params: &DeviceParams,
    phi_ext: f64,
    numerics: &NumericsConfig,
) -> Result<DressedLabeling> {
    numerics.validate(params)?;
    let basis = FluxoniumBasis::new(params, numerics.n_osc)?;
    label_with_basis(&basis, phi_ext, numerics)
}

/// [`build_coupled_and_label`] reusing an existing oscillator basis.
pub fn label_with_basis(
    basis: &FluxoniumBasis,
    phi_ext: f64,
    numerics: &NumericsConfig,
) -> Result<DressedLabeling> {
    let params = basis.params();
    numerics.validate(params)?;
    let dim = numerics.n_keep * numerics.n_ph;
    if dim > MAX_DENSE_DIM {
        return Err(FluxError::Resource(format!(
            "coupled dimension {dim} exceeds the dense limit {MAX_DENSE_DIM}; lower n_keep or n_ph"
        )));
    }
    let spec = basis.diagonalize(phi_ext)?;
    let ops = CoupledOperators::new(&spec, params.f_r, numerics.n_keep, numerics.n_ph)?;
    dasi(&ops, phi_ext, params.g_na, numerics.dasi_dg)
}

/// Ramp the coupling from 0 to `g_target` and track labels by maximal overlap.
pub fn dasi(ops: &CoupledOperators, phi_ext: f64, g_target: f64, dg: f64) -> Result<DressedLabeling> {
    let dim = ops.dim();
    let n_ph = ops.n_ph;
    // Column l holds the current state carrying label l.
    let mut tracked = Mat::<f64>::identity(dim, dim);
    let mut tracked_energy = ops.bare.clone();
    let mut assignment: Vec<usize> = (0..dim).collect();
    let mut min_overlap = vec![1.0_f64; dim];
    let mut ambiguous = Vec::new();
    let mut final_values = ops.bare.clone();
    let mut final_vectors = Mat::<f64>::identity(dim, dim);

    let steps = if g_target > 0.0 {
        (g_target / dg - 1e-9).ceil().max(1.0) as usize
    } else {
        0
    };
    if g_target == 0.0 {
        // The uncoupled spectrum is exactly the product basis; sort it so the
        // eigenindex order is ascending like the coupled case.
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| ops.bare[a].total_cmp(&ops.bare[b]).then(a.cmp(&b)));
        final_values = order.iter().map(|&l| ops.bare[l]).collect();
        final_vectors = Mat::<f64>::from_fn(dim, dim, |r, c| if r == order[c] { 1.0 } else { 0.0 });
        for (c, &l) in order.iter().enumerate() {
            assignment[l] = c;
        }
    }

    for step in 1..=steps {
        let g = (step as f64 * dg).min(g_target);
        let evd = symmetric_eigen(&ops.hamiltonian(g))?;
        let overlaps = linalg::transpose_mul(&tracked, &evd.vectors);
        assignment = assign_labels(&overlaps, &tracked_energy, &evd.values);

        let mut next = Mat::<f64>::zeros(dim, dim);
        for (l, &c) in assignment.iter().enumerate() {
            let o = overlaps[(l, c)];
            let sign = if o < 0.0 { -1.0 } else { 1.0 };
            for r in 0..dim {
                next[(r, l)] = sign * evd.vectors[(r, c)];
            }
            tracked_energy[l] = evd.values[c];
            let mag = o.abs();
            if mag < min_overlap[l] {
                min_overlap[l] = mag;
            }
            if mag < AMBIGUITY_THRESHOLD {
                ambiguous.push(AmbiguousLabel {
                    level: l / n_ph,
                    photons: l % n_ph,
                    overlap: mag,
                    coupling: g,
                });
            }
        }
        tracked = next;
        if step == steps {
            final_values = evd.values;
            final_vectors = Mat::<f64>::zeros(dim, dim);
            for (l, &c) in assignment.iter().enumerate() {
                for r in 0..dim {
                    final_vectors[(r, c)] = tracked[(r, l)];
                }
            }
        }
    }

    if !ambiguous.is_empty() {
        log::debug!(
            "DASI at phi_ext = {phi_ext:.6}: {} ambiguous label steps",
            ambiguous.len()
        );
    }

    let mut label_of_index = vec![(0, 0); dim];
    for (l, &c) in assignment.iter().enumerate() {
        label_of_index[c] = (l / n_ph, l % n_ph);
    }
    Ok(DressedLabeling {
        phi_ext,
        g_target,
        n_keep: ops.n_keep,
        n_ph,
        dressed_energies: final_values,
        dressed_vectors: final_vectors,
        bare_energies: ops.bare.clone(),
        index_of_label: assignment,
        label_of_index,
        min_overlap,
        ambiguous,
    })
}

/// Whether candidate `(overlap_a, distance_a)` beats `(overlap_b, distance_b)`:
/// larger overlap wins, near-equal overlaps go to the smaller energy distance.
fn beats(oa: f64, da: f64, ob: f64, db: f64) -> bool {
    if (oa - ob).abs() > OVERLAP_TIE {
        oa > ob
    } else {
        da < db
    }
}

/// Bijection label -> eigenindex maximizing overlaps. Mutual best matches are
/// taken directly; the remainder is resolved greedily by descending overlap.
fn assign_labels(overlaps: &Mat<f64>, prev_energy: &[f64], values: &[f64]) -> Vec<usize> {
    let dim = values.len();
    let score = |l: usize, c: usize| (overlaps[(l, c)].abs(), (values[c] - prev_energy[l]).abs());

    let mut row_best = vec![0usize; dim];
    let mut col_best = vec![0usize; dim];
    for l in 0..dim {
        let mut best = 0;
        for c in 1..dim {
            let (o, d) = score(l, c);
            let (ob, db) = score(l, best);
            if beats(o, d, ob, db) {
                best = c;
            }
        }
        row_best[l] = best;
    }
    for c in 0..dim {
        let mut best = 0;
        for l in 1..dim {
            let (o, d) = score(l, c);
            let (ob, db) = score(best, c);
            if beats(o, d, ob, db) {
                best = l;
            }
        }
        col_best[c] = best;
    }

    let mut assignment = vec![usize::MAX; dim];
    let mut col_taken = vec![false; dim];
    for l in 0..dim {
        let c = row_best[l];
        if col_best[c] == l {
            assignment[l] = c;
            col_taken[c] = true;
        }
    }

    let rows: Vec<usize> = (0..dim).filter(|&l| assignment[l] == usize::MAX).collect();
    if rows.is_empty() {
        return assignment;
    }
    let cols: Vec<usize> = (0..dim).filter(|&c| !col_taken[c]).collect();
    let mut pairs: Vec<(usize, usize)> = rows
        .iter()
        .flat_map(|&l| cols.iter().map(move |&c| (l, c)))
        .collect();
    pairs.sort_by(|&(la, ca), &(lb, cb)| {
        let (oa, da) = score(la, ca);
        let (ob, db) = score(lb, cb);
        if beats(oa, da, ob, db) {
            std::cmp::Ordering::Less
        } else if beats(ob, db, oa, da) {
            std::cmp::Ordering::Greater
        } else {
            (la, ca).cmp(&(lb, cb))
        }
    });
    for (l, c) in pairs {
        if assignment[l] == usize::MAX && !col_taken[c] {
            assignment[l] = c;
            col_taken[c] = true;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small() -> NumericsConfig {
        NumericsConfig {
            n_osc: 60,
            n_keep: 6,
            n_ph: 6,
            dasi_dg: 0.005,
        }
    }

    #[test]
    fn harmonic_limit_is_equally_spaced() {
        let p = DeviceParams {
            e_j: 0.0,
            ..DeviceParams::measured()
        };
        let spec = diagonalize_fluxonium(&p, 0.7, &NumericsConfig::default()).unwrap();
        let omega = p.plasma_frequency();
        assert!((omega - 2.6942).abs() < 1e-4);
        for k in 1..10 {
            let gap = spec.energies[k] - spec.energies[k - 1];
            assert!(((gap - omega) / omega).abs() < 1e-9, "gap {k}: {gap}");
        }
    }

    // Frozen from a Richardson-extrapolated finite-difference solve on a
    // phase grid (independent of the oscillator basis used here).
    const FD_F01_PI: f64 = 0.602470868;
    const FD_F13_PI: f64 = 8.056590271;
    const FD_F13_2: f64 = 6.943883513;

    #[test]
    fn sweet_spot_spectrum_matches_phase_grid_oracle() {
        let spec =
            diagonalize_fluxonium(&DeviceParams::measured(), PI, &NumericsConfig::default()).unwrap();
        assert!((spec.f01() - FD_F01_PI).abs() < 1e-6, "f01 = {}", spec.f01());
        assert_eq!(transition_frequency(&spec, 0, 1).unwrap(), spec.f01());
        let f13 = transition_frequency(&spec, 1, 3).unwrap();
        assert!((f13 - FD_F13_PI).abs() < 1e-6, "f13 = {f13}");
        let off = diagonalize_fluxonium(&DeviceParams::measured(), 2.0, &NumericsConfig::default()).unwrap();
        assert!((transition_frequency(&off, 1, 3).unwrap() - FD_F13_2).abs() < 1e-6);
    }

    #[test]
    fn transition_rejects_bad_indices() {
        let spec = diagonalize_fluxonium(&DeviceParams::measured(), PI, &small()).unwrap();
        assert!(transition_frequency(&spec, 2, 2).is_err());
        assert!(transition_frequency(&spec, 3, 1).is_err());
        assert!(transition_frequency(&spec, 0, 60).is_err());
    }

    #[test]
    fn nan_flux_is_a_validation_error() {
        let r = diagonalize_fluxonium(&DeviceParams::measured(), f64::NAN, &small());
        assert!(matches!(r, Err(FluxError::Validation { .. })));
    }

    #[test]
    fn small_oscillator_basis_is_rejected() {
        let n = NumericsConfig { n_osc: 8, ..small() };
        assert!(diagonalize_fluxonium(&DeviceParams::measured(), PI, &n).is_err());
    }

    #[test]
    fn charge_matrix_is_hermitian_and_basis_orthonormal() {
        let spec = diagonalize_fluxonium(&DeviceParams::measured(), 2.1, &small()).unwrap();
        let n = spec.levels();
        for i in 0..n {
            for j in 0..n {
                let a = spec.charge_element(i, j);
                let b = spec.charge_element(j, i).conj();
                assert!((a - b).norm() < 1e-10);
            }
        }
        let gram = linalg::transpose_mul(&spec.eigenvectors, &spec.eigenvectors);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn uncoupled_labeling_is_identity() {
        let p = DeviceParams::measured().with_coupling(0.0);
        let lab = build_coupled_and_label(&p, 2.5, &small()).unwrap();
        for k in 0..6 {
            for n in 0..6 {
                let idx = lab.index_of(k, n).unwrap();
                assert_eq!(lab.label_of(idx), Some((k, n)));
                assert_eq!(lab.dressed_energies[idx], lab.bare_energies[k * 6 + n]);
                let v = lab.rotated_vector(k, n).unwrap();
                assert_eq!(v[k * 6 + n], 1.0);
            }
        }
        assert!(lab.ambiguous.is_empty());
    }

    #[test]
    fn coupled_hamiltonian_is_symmetric() {
        let spec = diagonalize_fluxonium(&DeviceParams::measured(), 2.9, &small()).unwrap();
        let ops = CoupledOperators::new(&spec, 7.105, 6, 8).unwrap();
        assert!(linalg::hermiticity_residual(&ops.hamiltonian(0.0537)) < 1e-12);
    }

    #[test]
    fn dimension_guard_is_a_resource_error() {
        let n = NumericsConfig {
            n_osc: 100,
            n_keep: 100,
            n_ph: 61,
            dasi_dg: 0.001,
        };
        let r = build_coupled_and_label(&DeviceParams::measured(), PI, &n);
        assert!(matches!(r, Err(FluxError::Resource(_))));
    }

    #[test]
    fn labels_form_a_bijection() {
        let lab = build_coupled_and_label(&DeviceParams::measured(), PI, &small()).unwrap();
        let mut seen = vec![false; lab.dim()];
        for k in 0..lab.n_keep {
            for n in 0..lab.n_ph {
                let idx = lab.index_of(k, n).unwrap();
                assert!(!seen[idx]);
                seen[idx] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn tie_break_prefers_energy_proximity() {
        assert!(beats(0.7, 0.1, 0.7, 0.2));
        assert!(!beats(0.7, 0.3, 0.7, 0.2));
        assert!(beats(0.8, 5.0, 0.7, 0.0));
    }
}
