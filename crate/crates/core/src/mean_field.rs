//! Mean-field trajectories: initial states, step-size policy and sampling.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::drive::Drive;
use crate::dtwa::InitialStateSpec;
use crate::error::{Error, Result};
use crate::integrate::{integrate_ode, SampleGrid};
use crate::models::{steady_state, MeanFieldModel, MeanFieldState, ModelKind, ModelParams};
use crate::series::{SeriesMeta, TrajectorySeries};

/// Column names of a mean-field series.
pub const MEAN_FIELD_COLUMNS: [&str; 6] = ["jx", "jy", "jz", "re_a", "im_a", "n_photon"];

/// Step and sampling resolution, all per drive period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// RK4 steps per drive period (`dt_max = T_d / steps_per_period`).
    pub steps_per_period: usize,
    /// Euler-Maruyama steps per drive period for stochastic runs.
    pub sde_steps_per_period: usize,
    /// Samples per drive period; must be a power of two.
    pub samples_per_period: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            steps_per_period: 2048,
            sde_steps_per_period: 4096,
            samples_per_period: 32,
        }
    }
}

impl Numerics {
    /// Step bound for a deterministic run. For the Dicke model the step is
    /// additionally held below `0.5/|κ + iωp|` so that strongly damped
    /// cavities stay inside the RK4 stability region.
    pub fn dt_max(&self, params: &ModelParams, kind: ModelKind) -> f64 {
        let dt = params.drive.period() / self.steps_per_period as f64;
        if kind == ModelKind::Dm {
            dt.min(0.5 / params.kappa.hypot(params.omega_p))
        } else {
            dt
        }
    }

    pub fn sde_dt(&self, params: &ModelParams, kind: ModelKind) -> f64 {
        let dt = params.drive.period() / self.sde_steps_per_period as f64;
        if kind == ModelKind::Dm {
            dt.min(0.25 / params.kappa.hypot(params.omega_p))
        } else {
            dt
        }
    }
}

/// Mean-field initial state for a given spec.
///
/// Polarized states carry the spec's photon seed (DM only); the
/// symmetry-broken state uses the steady-state spin and photon amplitude at
/// the reference coupling.
pub fn initial_state(
    spec: &InitialStateSpec,
    params: &ModelParams,
    kind: ModelKind,
) -> Result<MeanFieldState> {
    spec.validate()?;
    let mut s = match *spec {
        InitialStateSpec::PolarizedX { photon } => MeanFieldState::new(photon, [0.5, 0.0, 0.0]),
        InitialStateSpec::PolarizedNegZ { photon } => {
            MeanFieldState::new(photon, [0.0, 0.0, -0.5])
        }
        InitialStateSpec::MeanFieldBroken { ratio, branch } => steady_state(params, ratio, branch),
    };
    if !kind.has_photon() {
        s.a = Complex64::new(0.0, 0.0);
    }
    Ok(s)
}

/// Integrate the mean-field equations over `n_periods` drive periods.
pub fn simulate(
    kind: ModelKind,
    params: &ModelParams,
    drive: &Drive,
    s0: MeanFieldState,
    n_periods: usize,
    numerics: &Numerics,
) -> Result<TrajectorySeries> {
    if n_periods == 0 {
        return Err(Error::Domain("horizon must cover at least one drive period".into()));
    }
    let model = MeanFieldModel::new(kind, params)?;
    let period = drive.period();
    let horizon = n_periods as f64 * period;
    let grid = SampleGrid::new(period, numerics.samples_per_period, horizon)?;
    let dt_max = numerics.dt_max(params, kind);
    let meta = SeriesMeta {
        model: Some(kind),
        omega_d: params.drive.omega_d(),
        samples_per_period: numerics.samples_per_period,
        dt: dt_max,
        seed: drive.realization().map(|r| r.seed),
        drive_active: drive.is_active(horizon),
        params: Some(serde_json::to_value(params)?),
        extra: Default::default(),
    };
    let mut series = TrajectorySeries::with_columns(meta, &MEAN_FIELD_COLUMNS, grid.len());
    let switches = drive.switch_times(horizon);
    integrate_ode(
        |stage, s: &MeanFieldState, out: &mut MeanFieldState| {
            *out = model.derivative(drive.coupling_for(stage), s)
        },
        s0,
        &switches,
        &grid,
        dt_max,
        |_, t, s| {
            series.push(
                t,
                &[s.j[0], s.j[1], s.j[2], s.a.re, s.a.im, s.a.norm_sqr()],
            )
        },
    )?;
    Ok(series)
}

/// Final state only, without recording a series.
pub fn propagate(
    kind: ModelKind,
    params: &ModelParams,
    drive: &Drive,
    s0: MeanFieldState,
    n_periods: usize,
    numerics: &Numerics,
) -> Result<MeanFieldState> {
    let model = MeanFieldModel::new(kind, params)?;
    let period = drive.period();
    let horizon = n_periods as f64 * period;
    let grid = SampleGrid::new(period, numerics.samples_per_period, horizon)?;
    integrate_ode(
        |stage, s: &MeanFieldState, out: &mut MeanFieldState| {
            *out = model.derivative(drive.coupling_for(stage), s)
        },
        s0,
        &drive.switch_times(horizon),
        &grid,
        numerics.dt_max(params, kind),
        |_, _, _| {},
    )
}
