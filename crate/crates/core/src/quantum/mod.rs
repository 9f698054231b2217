//! Exact quantum dynamics in the symmetric spin sector: Schrödinger evolution
//! for the LMG model and the closed Dicke model, and the Lindblad master
//! equation for the open Dicke model on a truncated Fock space.

mod envelope;
pub mod operators;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use envelope::{beat_period, decay_time, fall_time, peak_envelope, BeatPeriod};
pub use operators::{dicke_hamiltonian, lmg_hamiltonian, Csr, OperatorSet, SpinOps, SplitHamiltonian};

use crate::drive::Drive;
use crate::dtwa::InitialStateSpec;
use crate::error::{Error, Result};
use crate::integrate::{breakpoints, integrate_ode, SampleGrid};
use crate::models::{ModelKind, ModelParams};
use crate::series::{SeriesMeta, TrajectorySeries};

/// Columns of a quantum observable series.
pub const QUANTUM_COLUMNS: [&str; 7] = [
    "jx_mean",
    "jz_mean",
    "n_photon",
    "re_a",
    "im_a",
    "trace_or_norm",
    "top_fock_pop",
];

/// Largest tolerated drift of the norm or trace.
pub const CONSERVATION_TOLERANCE: f64 = 1e-6;
/// Largest tolerated population of the highest Fock level.
pub const TRUNCATION_TOLERANCE: f64 = 1e-6;

/// Pure state or density matrix with its Hilbert-space layout.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Vector {
        psi: Vec<Complex64>,
        n_spins: usize,
        /// Fock cutoff for the Dicke model, `None` for spin-only models.
        n_max: Option<usize>,
    },
    /// Row-major density matrix.
    DensityMatrix {
        rho: Vec<Complex64>,
        n_spins: usize,
        n_max: usize,
    },
}

impl QuantumState {
    pub fn n_spins(&self) -> usize {
        match self {
            QuantumState::Vector { n_spins, .. } | QuantumState::DensityMatrix { n_spins, .. } => *n_spins,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Vector { psi, .. } => psi.len(),
            QuantumState::DensityMatrix { n_spins, n_max, .. } => (n_spins + 1) * (n_max + 1),
        }
    }

    /// Norm squared of a vector, trace of a density matrix.
    pub fn trace(&self) -> f64 {
        match self {
            QuantumState::Vector { psi, .. } => psi.iter().map(|c| c.norm_sqr()).sum(),
            QuantumState::DensityMatrix { rho, .. } => {
                let d = self.dim();
                (0..d).map(|i| rho[i * d + i].re).sum()
            }
        }
    }

    /// Density matrix as a dense nalgebra matrix.
    pub fn density(&self) -> DMatrix<Complex64> {
        match self {
            QuantumState::Vector { psi, .. } => {
                let v = DVector::from_column_slice(psi);
                &v * v.adjoint()
            }
            QuantumState::DensityMatrix { rho, .. } => {
                let d = self.dim();
                DMatrix::from_row_slice(d, d, rho)
            }
        }
    }

    /// Smallest eigenvalue of the (Hermitian) density matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let rho = self.density();
        let h = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Largest `|ρ - ρ†|` entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let rho = self.density();
        (&rho - rho.adjoint()).iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }
}

/// Coherent spin amplitudes along the unit vector `n`.
pub fn coherent_spin(n_spins: usize, dir: [f64; 3]) -> Vec<Complex64> {
    let theta = dir[2].clamp(-1.0, 1.0).acos();
    let phi = dir[1].atan2(dir[0]);
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let mut ln_binom = 0.0f64;
    (0..=n_spins)
        .map(|k| {
            if k > 0 {
                ln_binom += ((n_spins - k + 1) as f64).ln() - (k as f64).ln();
            }
            let mag = (0.5 * ln_binom).exp() * c.powi(k as i32) * s.powi((n_spins - k) as i32);
            Complex64::from_polar(mag, phi * (n_spins - k) as f64)
        })
        .collect()
}

/// Initial quantum state for a spec.
///
/// Polarized and symmetry-broken states are spin coherent states along the
/// spec's direction; for the Dicke model (`n_max` given) the cavity starts in
/// the vacuum.
pub fn initial_state(spec: &InitialStateSpec, n_spins: usize, n_max: Option<usize>, density: bool) -> Result<QuantumState> {
    if n_spins == 0 {
        return Err(Error::Domain("need at least one spin".into()));
    }
    spec.validate()?;
    let spin = coherent_spin(n_spins, spec.direction());
    let mut psi = spin.clone();
    if let Some(nm) = n_max {
        if nm == 0 {
            return Err(Error::Domain("n_max must be at least 1".into()));
        }
        psi.resize((nm + 1) * (n_spins + 1), Complex64::new(0.0, 0.0));
    }
    if !density {
        return Ok(QuantumState::Vector { psi, n_spins, n_max });
    }
    let n_max = n_max.ok_or_else(|| Error::Domain("density matrices need a Fock cutoff".into()))?;
    let d = psi.len();
    let mut rho = vec![Complex64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for j in 0..d {
            rho[i * d + j] = psi[i] * psi[j].conj();
        }
    }
    Ok(QuantumState::DensityMatrix { rho, n_spins, n_max })
}

/// Cutoff `max(16, ceil(16 λ0² N/(ωp² + κ²)))` from the steady-state photon number.
pub fn default_n_max(params: &ModelParams, n_spins: usize) -> usize {
    let lambda0 = params.drive.lambda0() * params.lambda_cr();
    let est = 4.0 * lambda0 * lambda0 * n_spins as f64 / (params.omega_p.powi(2) + params.kappa.powi(2)) * 4.0;
    16usize.max(est.ceil() as usize)
}

/// Step and sampling resolution for quantum runs, per drive period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumNumerics {
    /// RK4 steps per drive period (sinusoidal drives and Lindblad runs). The
    /// step is further capped by the spectral bound of the generator.
    pub steps_per_period: usize,
    pub samples_per_period: usize,
}

impl Default for QuantumNumerics {
    fn default() -> Self {
        QuantumNumerics {
            steps_per_period: 256,
            samples_per_period: 32,
        }
    }
}

/// Which closed model a Schrödinger run evolves.
#[derive(Debug, Clone, Copy, PartialEq)]
enum ClosedModel {
    Lmg,
    Dicke { n_max: usize, lambda_cr: f64 },
}

impl ClosedModel {
    /// Prefactor of the coupling operator for coupling ratio `r`.
    fn g(&self, ratio: f64) -> f64 {
        match *self {
            ClosedModel::Lmg => ratio * ratio,
            ClosedModel::Dicke { lambda_cr, .. } => ratio * lambda_cr,
        }
    }
}

fn max_ratio(drive: &Drive, horizon: f64) -> f64 {
    match *drive.protocol() {
        crate::drive::DriveProtocol::Sinusoidal { lambda0, modulation, .. } => lambda0 * (1.0 + modulation),
        _ => {
            let lambda0 = drive.protocol().lambda0();
            let mut m = lambda0;
            if let (crate::drive::DriveProtocol::BinaryNoisyAmplitude { .. }, Some(r)) = (drive.protocol(), drive.realization()) {
                let n = (horizon / drive.period()).ceil() as usize;
                for v in r.values.iter().take(n) {
                    m = m.max(lambda0 * (1.0 + v));
                }
            }
            m
        }
    }
}

fn meta_for(kind: ModelKind, params: &ModelParams, drive: &Drive, horizon: f64, numerics: &QuantumNumerics, dt: f64, extra: serde_json::Value) -> Result<SeriesMeta> {
    Ok(SeriesMeta {
        model: Some(kind),
        omega_d: params.drive.omega_d(),
        samples_per_period: numerics.samples_per_period,
        dt,
        seed: drive.realization().map(|r| r.seed),
        drive_active: drive.is_active(horizon),
        params: Some(serde_json::json!({ "model": serde_json::to_value(params)?, "quantum": extra })),
        extra: Default::default(),
    })
}

/// Observables of a pure state; `s` is the spin dimension.
fn vector_observables(psi: &[Complex64], spin: &SpinOps, n_max: Option<usize>) -> [f64; 7] {
    let s = spin.dim();
    let nf = spin.n_spins as f64;
    let levels = n_max.unwrap_or(0) + 1;
    let (mut jx, mut jz, mut np, mut a, mut norm, mut top) = (0.0, 0.0, 0.0, Complex64::new(0.0, 0.0), 0.0, 0.0);
    for n in 0..levels {
        for i in 0..s {
            let p = psi[n * s + i];
            let w = p.norm_sqr();
            norm += w;
            jz += spin.m[i] * w;
            np += n as f64 * w;
            if i + 1 < s {
                jx += 2.0 * spin.jx_off(i) * (psi[n * s + i + 1].conj() * p).re;
            }
            if n >= 1 {
                a += psi[(n - 1) * s + i].conj() * p * (n as f64).sqrt();
            }
            if n_max.is_some() && n + 1 == levels {
                top += w;
            }
        }
    }
    [jx / nf, jz / nf, np, a.re, a.im, norm, top]
}

fn density_observables(rho: &[Complex64], spin: &SpinOps, n_max: usize) -> [f64; 7] {
    let s = spin.dim();
    let d = s * (n_max + 1);
    let nf = spin.n_spins as f64;
    let (mut jx, mut jz, mut np, mut a, mut tr, mut top) = (0.0, 0.0, 0.0, Complex64::new(0.0, 0.0), 0.0, 0.0);
    for n in 0..=n_max {
        for i in 0..s {
            let p = n * s + i;
            let w = rho[p * d + p].re;
            tr += w;
            jz += spin.m[i] * w;
            np += n as f64 * w;
            if i + 1 < s {
                jx += spin.jx_off(i) * (rho[p * d + p + 1].re + rho[(p + 1) * d + p].re);
            }
            if n >= 1 {
                a += rho[p * d + p - s] * (n as f64).sqrt();
            }
            if n == n_max {
                top += w;
            }
        }
    }
    [jx / nf, jz / nf, np, a.re, a.im, tr, top]
}

/// Check the conservation and truncation diagnostics of one sample.
fn check_sample(row: &[f64; 7], t: f64, n_max: Option<usize>, what: &'static str) -> Result<()> {
    let drift = (row[5] - 1.0).abs();
    if !drift.is_finite() {
        return Err(Error::Diverged { last_valid_time: t });
    }
    if drift > CONSERVATION_TOLERANCE {
        return Err(Error::StepSize {
            quantity: what,
            drift,
            limit: CONSERVATION_TOLERANCE,
            time: t,
        });
    }
    if let Some(nm) = n_max {
        if row[6] > TRUNCATION_TOLERANCE {
            return Err(Error::Truncation {
                population: row[6],
                time: t,
                n_max: nm,
                suggested_n_max: (nm as f64 * 1.5).ceil() as usize,
            });
        }
    }
    Ok(())
}

/// Eigendecomposition of `H(g)`, cached per distinct coupling value.
struct PropagatorCache<'a> {
    h: &'a SplitHamiltonian,
    cache: HashMap<u64, SymmetricEigen<f64, nalgebra::Dyn>>,
}

impl<'a> PropagatorCache<'a> {
    fn new(h: &'a SplitHamiltonian) -> Self {
        PropagatorCache {
            h,
            cache: HashMap::new(),
        }
    }

    /// `psi <- exp(-i H(g) dt) psi`.
    fn apply(&mut self, g: f64, dt: f64, psi: &mut [Complex64]) {
        let h = self.h;
        let eig = self
            .cache
            .entry(g.to_bits())
            .or_insert_with(|| SymmetricEigen::new(h.dense(g)));
        let re = DVector::from_iterator(psi.len(), psi.iter().map(|c| c.re));
        let im = DVector::from_iterator(psi.len(), psi.iter().map(|c| c.im));
        let (wr, wi) = (eig.eigenvectors.tr_mul(&re), eig.eigenvectors.tr_mul(&im));
        let mut rot_re = DVector::zeros(psi.len());
        let mut rot_im = DVector::zeros(psi.len());
        for k in 0..psi.len() {
            let ph = Complex64::from_polar(1.0, -eig.eigenvalues[k] * dt) * Complex64::new(wr[k], wi[k]);
            rot_re[k] = ph.re;
            rot_im[k] = ph.im;
        }
        let (out_re, out_im) = (&eig.eigenvectors * rot_re, &eig.eigenvectors * rot_im);
        for (k, c) in psi.iter_mut().enumerate() {
            *c = Complex64::new(out_re[k], out_im[k]);
        }
    }
}

/// Schrödinger evolution of the LMG model or the closed (κ = 0) Dicke model.
///
/// Binary drives use exact segment propagators; smooth drives use RK4 without
/// renormalization. Fails when the norm drifts by more than 1e-6 or, for the
/// Dicke model, when the top Fock level is populated above 1e-6.
pub fn evolve_schrodinger(
    params: &ModelParams,
    drive: &Drive,
    psi0: &QuantumState,
    n_periods: usize,
    numerics: &QuantumNumerics,
) -> Result<TrajectorySeries> {
    evolve_schrodinger_with_state(params, drive, psi0, n_periods, numerics).map(|r| r.0)
}

/// [`evolve_schrodinger`] that also returns the final state.
pub fn evolve_schrodinger_with_state(
    params: &ModelParams,
    drive: &Drive,
    psi0: &QuantumState,
    n_periods: usize,
    numerics: &QuantumNumerics,
) -> Result<(TrajectorySeries, QuantumState)> {
    params.validate()?;
    let QuantumState::Vector { psi, n_spins, n_max } = psi0 else {
        return Err(Error::Domain("Schrödinger evolution needs a state vector".into()));
    };
    let kind = params.kind();
    let spin = SpinOps::new(*n_spins)?;
    let (model, h) = match (kind, n_max) {
        (ModelKind::Lmg, None) => (ClosedModel::Lmg, lmg_hamiltonian(&spin, params.omega0)),
        (ModelKind::Dm, Some(nm)) if params.kappa == 0.0 => (
            ClosedModel::Dicke {
                n_max: *nm,
                lambda_cr: params.lambda_cr(),
            },
            dicke_hamiltonian(&spin, *nm, params.omega0, params.omega_p),
        ),
        (ModelKind::Dm, Some(_)) => {
            return Err(Error::Domain("open Dicke model needs Lindblad evolution".into()));
        }
        _ => {
            return Err(Error::Domain(format!(
                "no Schrödinger evolution for {kind} with this state layout"
            )));
        }
    };
    if psi.len() != h.dim() {
        return Err(Error::Domain(format!("state has dimension {}, model needs {}", psi.len(), h.dim())));
    }
    if n_periods == 0 {
        return Err(Error::Domain("horizon must cover at least one drive period".into()));
    }
    let period = drive.period();
    let horizon = n_periods as f64 * period;
    let grid = SampleGrid::new(period, numerics.samples_per_period, horizon)?;
    let switches = drive.switch_times(horizon);
    let fock = match model {
        ClosedModel::Dicke { n_max, .. } => Some(n_max),
        ClosedModel::Lmg => None,
    };
    let mut rows = Vec::with_capacity(grid.len());
    let mut failure = None;
    let mut record = |t: f64, psi: &[Complex64], rows: &mut Vec<(f64, [f64; 7])>| {
        let row = vector_observables(psi, &spin, fock);
        if failure.is_none() {
            if let Err(e) = check_sample(&row, t, fock, "norm") {
                failure = Some(e);
            }
        }
        rows.push((t, row));
    };
    let dt;
    let last;
    if drive.protocol().is_binary() {
        dt = 0.0;
        let mut state = psi.clone();
        let mut cache = PropagatorCache::new(&h);
        let points = breakpoints(&grid, &switches);
        record(0.0, &state, &mut rows);
        for pair in points.windows(2) {
            let (a, b) = (pair[0].t, pair[1].t);
            cache.apply(model.g(drive.coupling(0.5 * (a + b))), b - a, &mut state);
            if pair[1].sample.is_some() {
                record(b, &state, &mut rows);
            }
        }
        last = state;
    } else {
        let bound = h.norm_bound(model.g(max_ratio(drive, horizon)));
        // RK4 loses norm at a rate ~ (‖H‖dt)^6/72 per step; keep the total
        // loss over the horizon at a tenth of the conservation tolerance
        let z = (7.2 * CONSERVATION_TOLERANCE / (bound * horizon).max(1.0)).powf(0.2).min(1.0);
        dt = (period / numerics.steps_per_period as f64).min(z / bound);
        last = integrate_ode(
            |stage, s: &Vec<Complex64>, out: &mut Vec<Complex64>| {
                h.apply_schrodinger(model.g(drive.coupling_for(stage)), s, out)
            },
            psi.clone(),
            &switches,
            &grid,
            dt,
            |_, t, s| record(t, s, &mut rows),
        )?;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let meta = meta_for(kind, params, drive, horizon, numerics, dt, serde_json::json!({ "n_spins": n_spins, "n_max": n_max }))?;
    let mut series = TrajectorySeries::with_columns(meta, &QUANTUM_COLUMNS, rows.len());
    for (t, row) in rows {
        series.push(t, &row);
    }
    let state = QuantumState::Vector {
        psi: last,
        n_spins: *n_spins,
        n_max: *n_max,
    };
    Ok((series, state))
}

/// `out = L(ρ)` for the open Dicke model, with `x` as scratch for `Hρ`.
#[allow(clippy::too_many_arguments)]
fn lindblad_rhs(h: &SplitHamiltonian, g: f64, kappa: f64, s: usize, n_max: usize, rho: &[Complex64], out: &mut [Complex64], x: &mut [Complex64]) {
    let d = h.dim();
    for r in 0..d {
        let row = &mut x[r * d..(r + 1) * d];
        let dr = h.diag[r];
        for (xv, rv) in row.iter_mut().zip(&rho[r * d..(r + 1) * d]) {
            *xv = rv * dr;
        }
        for (c, v) in h.coupling.row(r) {
            let gv = g * v;
            for (xv, rv) in row.iter_mut().zip(&rho[c * d..(c + 1) * d]) {
                *xv += rv * gv;
            }
        }
    }
    for p in 0..d {
        let np = p / s;
        for q in 0..d {
            let nq = q / s;
            // -i(Hρ - ρH) with ρH = (Hρ)†
            let comm = x[p * d + q] - x[q * d + p].conj();
            let mut v = Complex64::new(comm.im, -comm.re);
            let mut diss = -rho[p * d + q] * ((np + nq) as f64);
            if np < n_max && nq < n_max {
                diss += rho[(p + s) * d + q + s] * (2.0 * (((np + 1) * (nq + 1)) as f64).sqrt());
            }
            v += diss * kappa;
            out[p * d + q] = v;
        }
    }
}

/// Lindblad evolution of the open Dicke model with RK4 (no trace renormalization).
///
/// Fails with a step-size error when the trace drifts by more than 1e-6 and
/// with a truncation error when the top Fock level holds more than 1e-6.
pub fn evolve_lindblad(
    params: &ModelParams,
    drive: &Drive,
    rho0: &QuantumState,
    n_periods: usize,
    numerics: &QuantumNumerics,
) -> Result<TrajectorySeries> {
    evolve_lindblad_with_state(params, drive, rho0, n_periods, numerics).map(|r| r.0)
}

/// [`evolve_lindblad`] that also returns the final density matrix.
pub fn evolve_lindblad_with_state(
    params: &ModelParams,
    drive: &Drive,
    rho0: &QuantumState,
    n_periods: usize,
    numerics: &QuantumNumerics,
) -> Result<(TrajectorySeries, QuantumState)> {
    params.validate()?;
    let QuantumState::DensityMatrix { rho, n_spins, n_max } = rho0 else {
        return Err(Error::Domain("Lindblad evolution needs a density matrix".into()));
    };
    if params.kind() != ModelKind::Dm || !(params.kappa > 0.0) {
        return Err(Error::Domain(
            "Lindblad evolution needs the open Dicke model with finite κ > 0".into(),
        ));
    }
    if n_periods == 0 {
        return Err(Error::Domain("horizon must cover at least one drive period".into()));
    }
    let (n_spins, n_max) = (*n_spins, *n_max);
    let spin = SpinOps::new(n_spins)?;
    let s = spin.dim();
    let h = dicke_hamiltonian(&spin, n_max, params.omega0, params.omega_p);
    let lambda_cr = params.lambda_cr();
    let period = drive.period();
    let horizon = n_periods as f64 * period;
    let grid = SampleGrid::new(period, numerics.samples_per_period, horizon)?;
    let bound = 2.0 * h.norm_bound(lambda_cr * max_ratio(drive, horizon)) + 2.0 * params.kappa * n_max as f64;
    let dt = (period / numerics.steps_per_period as f64).min(2.0 / bound);
    let mut scratch = vec![Complex64::new(0.0, 0.0); rho.len()];
    let mut rows = Vec::with_capacity(grid.len());
    let mut failure = None;
    let last = integrate_ode(
        |stage, r: &Vec<Complex64>, out: &mut Vec<Complex64>| {
            let g = lambda_cr * drive.coupling_for(stage);
            lindblad_rhs(&h, g, params.kappa, s, n_max, r, out, &mut scratch)
        },
        rho.clone(),
        &drive.switch_times(horizon),
        &grid,
        dt,
        |_, t, r| {
            let row = density_observables(r, &spin, n_max);
            if failure.is_none() {
                if let Err(e) = check_sample(&row, t, Some(n_max), "trace") {
                    failure = Some(e);
                }
            }
            rows.push((t, row));
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let meta = meta_for(ModelKind::Dm, params, drive, horizon, numerics, dt, serde_json::json!({ "n_spins": n_spins, "n_max": n_max }))?;
    let mut series = TrajectorySeries::with_columns(meta, &QUANTUM_COLUMNS, rows.len());
    for (t, row) in rows {
        series.push(t, &row);
    }
    Ok((series, QuantumState::DensityMatrix { rho: last, n_spins, n_max }))
}

/// Lindblad run from `spec` that grows the Fock cutoff by 1.5x on truncation
/// errors, up to `max_retries` times. Returns the series and the cutoff used.
pub fn evolve_lindblad_adaptive(
    params: &ModelParams,
    drive: &Drive,
    spec: &InitialStateSpec,
    n_spins: usize,
    n_max: Option<usize>,
    n_periods: usize,
    numerics: &QuantumNumerics,
    max_retries: usize,
) -> Result<(TrajectorySeries, usize)> {
    let mut cutoff = n_max.unwrap_or_else(|| default_n_max(params, n_spins));
    let mut attempt = 0;
    loop {
        let rho0 = initial_state(spec, n_spins, Some(cutoff), true)?;
        match evolve_lindblad(params, drive, &rho0, n_periods, numerics) {
            Err(Error::Truncation { suggested_n_max, .. }) if attempt < max_retries => {
                cutoff = suggested_n_max;
                attempt += 1;
            }
            other => return other.map(|s| (s, cutoff)),
        }
    }
}
