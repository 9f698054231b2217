//! Discrete truncated Wigner approximation.
//!
//! Each trajectory starts from a discrete spin configuration: the component
//! along the mean direction is fixed at +1/2 and the two transverse components
//! are independent fair draws from {-1/2, +1/2}. Individual spins then follow
//! the semiclassical equations of the chosen model. For the open Dicke model
//! the photon quadratures `(a_R, a_I)` (unscaled, `<a> = a_R + i a_I`) carry
//! additive noise of amplitude `sqrt(κ/2)` per quadrature.
//!
//! Spin components are in spin-1/2 units, `J_μ = Σ_i s_i^μ`. With this
//! normalization the photon is driven by `2λ/sqrt(N) Σ s^x` and the spins feel
//! the field `4λ a_R / sqrt(N)`, which reproduces the collective mean-field
//! equations after summing over spins.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drive::Drive;
use crate::error::{Error, Result};
use crate::integrate::{integrate_ode, integrate_sde, SampleGrid};
use crate::mean_field::Numerics;
use crate::models::{broken_spin, Branch, MeanFieldModel, ModelKind, ModelParams};
use crate::rng;
use crate::series::{SeriesMeta, TrajectorySeries};

/// Photon seed used for polarized initial states in mean-field runs of the Dicke model.
pub const DEFAULT_PHOTON_SEED: f64 = 0.01;

fn default_photon() -> Complex64 {
    Complex64::new(DEFAULT_PHOTON_SEED, 0.0)
}

/// Initial state shared by the mean-field, DTWA and quantum levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialStateSpec {
    /// All spins along +x.
    PolarizedX {
        #[serde(default = "default_photon")]
        photon: Complex64,
    },
    /// All spins along -z.
    PolarizedNegZ {
        #[serde(default = "default_photon")]
        photon: Complex64,
    },
    /// Symmetry-broken steady state at coupling ratio `ratio = λ_ref/λ_cr`.
    MeanFieldBroken { ratio: f64, branch: Branch },
}

impl InitialStateSpec {
    pub fn polarized_x() -> Self {
        InitialStateSpec::PolarizedX {
            photon: default_photon(),
        }
    }

    pub fn polarized_neg_z() -> Self {
        InitialStateSpec::PolarizedNegZ {
            photon: default_photon(),
        }
    }

    pub fn broken(ratio: f64) -> Self {
        InitialStateSpec::MeanFieldBroken {
            ratio,
            branch: Branch::Plus,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialStateSpec::MeanFieldBroken { ratio, .. } if !(ratio > 1.0) => {
                Err(Error::Domain(format!(
                    "symmetry-broken initial state needs λ_ref > λ_cr, got ratio {ratio}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Unit vector of the mean spin direction.
    pub fn direction(&self) -> [f64; 3] {
        match *self {
            InitialStateSpec::PolarizedX { .. } => [1.0, 0.0, 0.0],
            InitialStateSpec::PolarizedNegZ { .. } => [0.0, 0.0, -1.0],
            InitialStateSpec::MeanFieldBroken { ratio, branch } => {
                let j = broken_spin(ratio, branch);
                [2.0 * j[0], 2.0 * j[1], 2.0 * j[2]]
            }
        }
    }

    /// Rescaled photon seed `a(0)`; zero for the symmetry-broken state,
    /// whose photon amplitude is fixed by the model.
    pub fn photon_seed(&self) -> Complex64 {
        match *self {
            InitialStateSpec::PolarizedX { photon } | InitialStateSpec::PolarizedNegZ { photon } => {
                photon
            }
            InitialStateSpec::MeanFieldBroken { .. } => Complex64::new(0.0, 0.0),
        }
    }

    /// Same spec with the reference coupling replaced (symmetry-broken only).
    pub fn with_reference_ratio(&self, ratio: f64) -> Self {
        match *self {
            InitialStateSpec::MeanFieldBroken { branch, .. } => {
                InitialStateSpec::MeanFieldBroken { ratio, branch }
            }
            other => other,
        }
    }
}

/// Right-handed orthonormal frame `(e1, e2)` completing `n`.
fn transverse_frame(n: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    // pick the coordinate axis least aligned with n
    let helper = if n[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let mut e1 = cross(helper, n);
    let norm = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|v| *v /= norm);
    let e2 = cross(n, e1);
    (e1, e2)
}

/// Sampled spin configuration plus photon quadratures for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinEnsemble {
    pub spins: Vec<[f64; 3]>,
    /// Unscaled photon quadratures `(a_R, a_I)`.
    pub photon: (f64, f64),
    pub seed: u64,
}

impl SpinEnsemble {
    pub fn n_spins(&self) -> usize {
        self.spins.len()
    }

    /// Flat state `[s_1x, s_1y, s_1z, ..., a_R, a_I]`.
    pub fn to_state(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.spins.iter().flat_map(|s| s.iter().copied()).collect();
        v.push(self.photon.0);
        v.push(self.photon.1);
        v
    }

    pub fn mean_spin(&self) -> [f64; 3] {
        let n = self.spins.len() as f64;
        let mut m = [0.0; 3];
        for s in &self.spins {
            for k in 0..3 {
                m[k] += s[k] / n;
            }
        }
        m
    }
}

/// Draw a discrete initial configuration of `n` spins.
pub fn sample_initial(spec: &InitialStateSpec, n: usize, seed: u64) -> Result<SpinEnsemble> {
    if n == 0 {
        return Err(Error::Domain("DTWA needs at least one spin".into()));
    }
    spec.validate()?;
    let dir = spec.direction();
    let (e1, e2) = match spec {
        // axis-aligned frames keep the fixed components exactly ±1/2
        InitialStateSpec::PolarizedX { .. } => ([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
        InitialStateSpec::PolarizedNegZ { .. } => ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
        InitialStateSpec::MeanFieldBroken { .. } => transverse_frame(dir),
    };
    let mut rng = rng::keyed_rng(seed, &[0xD7]);
    let spins = (0..n)
        .map(|_| {
            let u: f64 = if rng.random::<bool>() { 0.5 } else { -0.5 };
            let v: f64 = if rng.random::<bool>() { 0.5 } else { -0.5 };
            [
                0.5 * dir[0] + u * e1[0] + v * e2[0],
                0.5 * dir[1] + u * e1[1] + v * e2[1],
                0.5 * dir[2] + u * e1[2] + v * e2[2],
            ]
        })
        .collect();
    let a0 = spec.photon_seed() * (n as f64).sqrt();
    Ok(SpinEnsemble {
        spins,
        photon: (a0.re, a0.im),
        seed,
    })
}

/// Individual-spin right-hand side for one model.
#[derive(Debug, Clone, Copy)]
struct SpinFlow {
    kind: ModelKind,
    n: usize,
    omega0: f64,
    omega_p: f64,
    kappa: f64,
    model: MeanFieldModel,
}

impl SpinFlow {
    fn new(kind: ModelKind, params: &ModelParams, n: usize) -> Result<Self> {
        Ok(SpinFlow {
            kind,
            n,
            omega0: params.omega0,
            omega_p: params.omega_p,
            kappa: params.kappa,
            model: MeanFieldModel::new(kind, params)?,
        })
    }

    /// Shift `2λ²ω0(ωp²-κ²)/(κ²+ωp²)²` of the precession frequency in the
    /// atom-only model, written through the coupling ratio.
    fn adm_zeeman_shift(&self, ratio: f64) -> f64 {
        let (wp, k) = (self.omega_p, self.kappa);
        ratio * ratio * self.omega0 * self.omega0 * (wp * wp - k * k) / (2.0 * wp * (k * k + wp * wp))
    }

    fn derivative(&self, ratio: f64, s: &[f64], out: &mut [f64]) {
        let n = self.n;
        let nf = n as f64;
        let (spins, rest) = s.split_at(3 * n);
        let (dspins, drest) = out.split_at_mut(3 * n);
        let sum_x: f64 = spins.iter().step_by(3).sum();
        match self.kind {
            ModelKind::Dm => {
                let lambda = self.model.lambda(ratio);
                let (ar, ai) = (rest[0], rest[1]);
                let field = 4.0 * lambda * ar / nf.sqrt();
                for (ds, sp) in dspins.chunks_exact_mut(3).zip(spins.chunks_exact(3)) {
                    ds[0] = -self.omega0 * sp[1];
                    ds[1] = self.omega0 * sp[0] - field * sp[2];
                    ds[2] = field * sp[1];
                }
                drest[0] = -self.kappa * ar + self.omega_p * ai;
                drest[1] = -self.omega_p * ar - self.kappa * ai - 2.0 * lambda / nf.sqrt() * sum_x;
            }
            ModelKind::Adm | ModelKind::Lmg => {
                let c1 = self.model.exchange_coefficient(ratio) / nf;
                let (c2, w) = if self.kind == ModelKind::Adm {
                    let sum_y: f64 = spins.iter().skip(1).step_by(3).sum();
                    (
                        self.model.adm_coefficient(ratio) / nf * sum_y,
                        self.omega0 - self.adm_zeeman_shift(ratio) / nf,
                    )
                } else {
                    (0.0, self.omega0)
                };
                let gx = c1 * sum_x;
                for (ds, sp) in dspins.chunks_exact_mut(3).zip(spins.chunks_exact(3)) {
                    ds[0] = -w * sp[1];
                    ds[1] = w * sp[0] + (gx + c2) * sp[2];
                    ds[2] = -(gx + c2) * sp[1];
                }
                drest[0] = 0.0;
                drest[1] = 0.0;
            }
        }
    }
}

/// Options for an ensemble run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtwaRun {
    pub n_spins: usize,
    pub n_traj: usize,
    pub n_periods: usize,
    pub seed: u64,
}

/// Columns of an averaged DTWA series: means followed by standard errors.
pub const DTWA_COLUMNS: [&str; 12] = [
    "jx",
    "jy",
    "jz",
    "re_a",
    "im_a",
    "n_photon",
    "jx_stderr",
    "jy_stderr",
    "jz_stderr",
    "re_a_stderr",
    "im_a_stderr",
    "n_photon_stderr",
];

const N_OBS: usize = 6;
/// Trajectories per reduction block; fixed so results do not depend on the
/// number of worker threads.
const BLOCK: usize = 16;

/// Per-sample running sums of each observable and its square.
#[derive(Debug, Clone)]
struct Moments {
    sum: Vec<[f64; N_OBS]>,
    sum_sq: Vec<[f64; N_OBS]>,
}

impl Moments {
    fn zeros(len: usize) -> Self {
        Moments {
            sum: vec![[0.0; N_OBS]; len],
            sum_sq: vec![[0.0; N_OBS]; len],
        }
    }

    fn merge(mut self, other: &Moments) -> Self {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            for k in 0..N_OBS {
                a[k] += b[k];
            }
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            for k in 0..N_OBS {
                a[k] += b[k];
            }
        }
        self
    }
}

/// Pairwise reduction in a fixed tree order.
fn tree_reduce(mut parts: Vec<Moments>) -> Moments {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a.merge(&b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop().expect("at least one block")
}

fn observables(state: &[f64], n: usize) -> [f64; N_OBS] {
    let nf = n as f64;
    let mut j = [0.0; 3];
    for sp in state[..3 * n].chunks_exact(3) {
        j[0] += sp[0];
        j[1] += sp[1];
        j[2] += sp[2];
    }
    let (ar, ai) = (state[3 * n], state[3 * n + 1]);
    [
        j[0] / nf,
        j[1] / nf,
        j[2] / nf,
        ar / nf.sqrt(),
        ai / nf.sqrt(),
        ar * ar + ai * ai,
    ]
}

/// Evolve one trajectory and return its per-sample observables.
pub fn evolve_trajectory(
    kind: ModelKind,
    params: &ModelParams,
    drive: &Drive,
    ensemble: &SpinEnsemble,
    grid: &SampleGrid,
    numerics: &Numerics,
) -> Result<Vec<[f64; 6]>> {
    let n = ensemble.n_spins();
    let flow = SpinFlow::new(kind, params, n)?;
    let switches = drive.switch_times(grid.horizon);
    let mut rows = vec![[0.0; N_OBS]; grid.len()];
    let s0 = ensemble.to_state();
    let noisy = kind == ModelKind::Dm && params.kappa > 0.0;
    if noisy {
        let mut noise = vec![0.0; s0.len()];
        let amp = (params.kappa / 2.0).sqrt();
        noise[3 * n] = amp;
        noise[3 * n + 1] = amp;
        integrate_sde(
            |stage, s, out| flow.derivative(drive.coupling_for(stage), s, out),
            &noise,
            s0,
            &switches,
            grid,
            numerics.sde_dt(params, kind),
            ensemble.seed,
            |k, _, s| rows[k] = observables(s, n),
        )?;
    } else {
        integrate_ode(
            |stage, s: &Vec<f64>, out: &mut Vec<f64>| {
                flow.derivative(drive.coupling_for(stage), s, out)
            },
            s0,
            &switches,
            grid,
            numerics.dt_max(params, kind),
            |k, _, s| rows[k] = observables(s, n),
        )?;
    }
    Ok(rows)
}

/// Trajectory-averaged DTWA dynamics with per-sample standard errors.
///
/// Trajectory `i` uses seed `split(run.seed, [i])` both for its initial draw
/// and for its photon noise.
pub fn evolve_dtwa(
    kind: ModelKind,
    params: &ModelParams,
    drive: &Drive,
    spec: &InitialStateSpec,
    run: &DtwaRun,
    numerics: &Numerics,
) -> Result<TrajectorySeries> {
    if run.n_traj == 0 {
        return Err(Error::Domain("n_traj must be at least 1".into()));
    }
    if run.n_periods == 0 {
        return Err(Error::Domain("horizon must cover at least one drive period".into()));
    }
    spec.validate()?;
    let period = drive.period();
    let horizon = run.n_periods as f64 * period;
    let grid = SampleGrid::new(period, numerics.samples_per_period, horizon)?;
    let len = grid.len();
    let n_blocks = run.n_traj.div_ceil(BLOCK);
    let blocks: Vec<Moments> = (0..n_blocks)
        .into_par_iter()
        .map(|b| -> Result<Moments> {
            let mut m = Moments::zeros(len);
            for i in (b * BLOCK)..((b + 1) * BLOCK).min(run.n_traj) {
                let seed = rng::split(run.seed, &[i as u64]);
                let traj = sample_initial(spec, run.n_spins, seed)
                    .and_then(|e| evolve_trajectory(kind, params, drive, &e, &grid, numerics))
                    .map_err(|e| Error::Trajectory {
                        index: i,
                        source: Box::new(e),
                    })?;
                for (k, row) in traj.iter().enumerate() {
                    for o in 0..N_OBS {
                        m.sum[k][o] += row[o];
                        m.sum_sq[k][o] += row[o] * row[o];
                    }
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let total = tree_reduce(blocks);
    let nt = run.n_traj as f64;
    let meta = SeriesMeta {
        model: Some(kind),
        omega_d: params.drive.omega_d(),
        samples_per_period: numerics.samples_per_period,
        dt: if kind == ModelKind::Dm && params.kappa > 0.0 {
            numerics.sde_dt(params, kind)
        } else {
            numerics.dt_max(params, kind)
        },
        seed: Some(run.seed),
        drive_active: drive.is_active(horizon),
        params: Some(serde_json::json!({
            "model": params,
            "initial_state": spec,
            "n_spins": run.n_spins,
            "n_traj": run.n_traj,
        })),
        extra: Default::default(),
    };
    let mut series = TrajectorySeries::with_columns(meta, &DTWA_COLUMNS, len);
    let mut row = [0.0; 2 * N_OBS];
    for k in 0..len {
        for o in 0..N_OBS {
            let mean = total.sum[k][o] / nt;
            let var = if run.n_traj > 1 {
                ((total.sum_sq[k][o] - nt * mean * mean) / (nt - 1.0)).max(0.0)
            } else {
                0.0
            };
            row[o] = mean;
            row[N_OBS + o] = (var / nt).sqrt();
        }
        series.push(grid.time(k), &row);
    }
    Ok(series)
}
