//! Time-dependent coupling protocols.
//!
//! Couplings are expressed as the ratio `λ/λ_cr`. The models convert the ratio
//! to an absolute light-matter coupling when they need one (the open Dicke
//! model), while the adiabatically eliminated models only ever see the ratio.
//! This keeps the infinite-dissipation limit well defined.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Periodic protocol for the light-matter coupling `λ(t)/λ_cr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriveProtocol {
    /// Bang-bang switching: `λ0` for the first `duty` fraction of each period, then 0.
    Binary {
        lambda0: f64,
        duty: f64,
        omega_d: f64,
    },
    /// Binary drive whose duty cycle is redrawn each period from
    /// `[duty - duty_disorder, duty + duty_disorder]`.
    BinaryNoisyDuty {
        lambda0: f64,
        duty: f64,
        omega_d: f64,
        duty_disorder: f64,
    },
    /// Binary drive whose bright-time coupling is `λ0 (1 + x_n)` with
    /// `x_n` uniform in `[-amplitude_disorder, amplitude_disorder]`.
    BinaryNoisyAmplitude {
        lambda0: f64,
        duty: f64,
        omega_d: f64,
        amplitude_disorder: f64,
    },
    /// `λ0 [1 + modulation sin(ω_d t)]`.
    Sinusoidal {
        lambda0: f64,
        modulation: f64,
        omega_d: f64,
    },
}

/// Per-period disorder draws for one of the noisy binary variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub seed: u64,
    /// `D_n` for duty disorder, `λ_n/λ0` for amplitude disorder.
    pub values: Vec<f64>,
    /// Number of duty draws that fell outside `[0, 1]` and were clipped.
    #[serde(default)]
    pub clipped: usize,
}

impl DisorderRealization {
    pub fn n_periods(&self) -> usize {
        self.values.len()
    }
}

impl DriveProtocol {
    pub fn binary(lambda0: f64, duty: f64, omega_d: f64) -> Self {
        DriveProtocol::Binary {
            lambda0,
            duty,
            omega_d,
        }
    }

    pub fn sinusoidal(lambda0: f64, modulation: f64, omega_d: f64) -> Self {
        DriveProtocol::Sinusoidal {
            lambda0,
            modulation,
            omega_d,
        }
    }

    pub fn lambda0(&self) -> f64 {
        match *self {
            DriveProtocol::Binary { lambda0, .. }
            | DriveProtocol::BinaryNoisyDuty { lambda0, .. }
            | DriveProtocol::BinaryNoisyAmplitude { lambda0, .. }
            | DriveProtocol::Sinusoidal { lambda0, .. } => lambda0,
        }
    }

    pub fn omega_d(&self) -> f64 {
        match *self {
            DriveProtocol::Binary { omega_d, .. }
            | DriveProtocol::BinaryNoisyDuty { omega_d, .. }
            | DriveProtocol::BinaryNoisyAmplitude { omega_d, .. }
            | DriveProtocol::Sinusoidal { omega_d, .. } => omega_d,
        }
    }

    /// Nominal duty cycle; `None` for the sinusoidal drive.
    pub fn duty(&self) -> Option<f64> {
        match *self {
            DriveProtocol::Binary { duty, .. }
            | DriveProtocol::BinaryNoisyDuty { duty, .. }
            | DriveProtocol::BinaryNoisyAmplitude { duty, .. } => Some(duty),
            DriveProtocol::Sinusoidal { .. } => None,
        }
    }

    /// Drive period `T_d = 2π/ω_d`.
    pub fn period(&self) -> f64 {
        TAU / self.omega_d()
    }

    pub fn is_noisy(&self) -> bool {
        matches!(
            self,
            DriveProtocol::BinaryNoisyDuty { .. } | DriveProtocol::BinaryNoisyAmplitude { .. }
        )
    }

    pub fn is_binary(&self) -> bool {
        !matches!(self, DriveProtocol::Sinusoidal { .. })
    }

    /// Same protocol with the coupling replaced.
    pub fn with_lambda0(&self, value: f64) -> Self {
        let mut p = self.clone();
        match &mut p {
            DriveProtocol::Binary { lambda0, .. }
            | DriveProtocol::BinaryNoisyDuty { lambda0, .. }
            | DriveProtocol::BinaryNoisyAmplitude { lambda0, .. }
            | DriveProtocol::Sinusoidal { lambda0, .. } => *lambda0 = value,
        }
        p
    }

    /// Clean binary drive with the same nominal parameters.
    pub fn clean(&self) -> Self {
        match *self {
            DriveProtocol::BinaryNoisyDuty {
                lambda0,
                duty,
                omega_d,
                ..
            }
            | DriveProtocol::BinaryNoisyAmplitude {
                lambda0,
                duty,
                omega_d,
                ..
            } => DriveProtocol::binary(lambda0, duty, omega_d),
            _ => self.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let omega_d = self.omega_d();
        if !(omega_d > 0.0 && omega_d.is_finite()) {
            return bad(format!("drive frequency must be positive, got {omega_d}"));
        }
        let lambda0 = self.lambda0();
        if !(lambda0 >= 0.0 && lambda0.is_finite()) {
            return bad(format!("lambda0 must be nonnegative, got {lambda0}"));
        }
        if let Some(duty) = self.duty() {
            if !(0.0..=1.0).contains(&duty) {
                return bad(format!("duty cycle must lie in [0, 1], got {duty}"));
            }
        }
        match *self {
            DriveProtocol::BinaryNoisyDuty { duty_disorder, .. } if !(duty_disorder >= 0.0) => {
                bad(format!("duty disorder must be nonnegative, got {duty_disorder}"))
            }
            DriveProtocol::BinaryNoisyAmplitude {
                amplitude_disorder, ..
            } if !(amplitude_disorder >= 0.0) => bad(format!(
                "amplitude disorder must be nonnegative, got {amplitude_disorder}"
            )),
            DriveProtocol::Sinusoidal { modulation, .. } if !(modulation >= 0.0) => {
                bad(format!("modulation strength must be nonnegative, got {modulation}"))
            }
            _ => Ok(()),
        }
    }

    fn check_realization<'a>(
        &self,
        realization: Option<&'a DisorderRealization>,
        period_index: usize,
    ) -> Result<Option<&'a DisorderRealization>> {
        if !self.is_noisy() {
            return Ok(None);
        }
        match realization {
            None => Err(Error::Config(
                "noisy drive requires a disorder realization".into(),
            )),
            Some(r) if r.values.len() <= period_index => Err(Error::Config(format!(
                "disorder realization covers {} periods, period {} requested",
                r.values.len(),
                period_index
            ))),
            Some(r) => Ok(Some(r)),
        }
    }

    /// Coupling `λ(t)/λ_cr`.
    pub fn coupling_at(&self, realization: Option<&DisorderRealization>, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::Domain(format!("negative time {t}")));
        }
        let period = self.period();
        let n = (t / period).floor();
        let phase = t / period - n;
        let real = self.check_realization(realization, n as usize)?;
        let idx = n as usize;
        Ok(match *self {
            DriveProtocol::Binary { lambda0, duty, .. } => {
                if phase < duty {
                    lambda0
                } else {
                    0.0
                }
            }
            DriveProtocol::BinaryNoisyDuty { lambda0, .. } => {
                if phase < real.unwrap().values[idx] {
                    lambda0
                } else {
                    0.0
                }
            }
            DriveProtocol::BinaryNoisyAmplitude { lambda0, duty, .. } => {
                if phase < duty {
                    lambda0 * (1.0 + real.unwrap().values[idx])
                } else {
                    0.0
                }
            }
            DriveProtocol::Sinusoidal {
                lambda0,
                modulation,
                omega_d,
            } => lambda0 * (1.0 + modulation * (omega_d * t).sin()),
        })
    }

    /// Bright fraction of period `n`.
    fn duty_of_period(&self, realization: Option<&DisorderRealization>, n: usize) -> f64 {
        match *self {
            DriveProtocol::BinaryNoisyDuty { .. } => realization.unwrap().values[n],
            _ => self.duty().unwrap_or(1.0),
        }
    }

    /// Discontinuity times of a binary drive in `(0, horizon]`, strictly increasing.
    ///
    /// Includes every period boundary `n T_d` and every bright-to-dark switch
    /// `(n + D_n) T_d`; points that coincide (D = 0 or 1) appear once.
    /// Empty for the sinusoidal drive.
    pub fn switch_times(
        &self,
        realization: Option<&DisorderRealization>,
        horizon: f64,
    ) -> Result<Vec<f64>> {
        if !self.is_binary() {
            return Ok(Vec::new());
        }
        let period = self.period();
        let n_periods = (horizon / period - 1e-9).ceil().max(0.0) as usize;
        if n_periods > 0 {
            self.check_realization(realization, n_periods - 1)?;
        }
        let tol = 1e-12 * period;
        let mut out: Vec<f64> = Vec::with_capacity(2 * n_periods);
        let push = |t: f64, out: &mut Vec<f64>| {
            if t <= tol || t > horizon + tol {
                return;
            }
            if out.last().is_some_and(|&last| t - last <= tol) {
                return;
            }
            out.push(t.min(horizon));
        };
        for n in 0..n_periods {
            let start = n as f64 * period;
            let duty = self.duty_of_period(realization, n);
            push(start + duty * period, &mut out);
            push(start + period, &mut out);
        }
        Ok(out)
    }

    /// Draw one disorder realization covering `n_periods` periods.
    pub fn sample_disorder(&self, seed: u64, n_periods: usize) -> Result<DisorderRealization> {
        if n_periods == 0 {
            return Err(Error::Domain("disorder realization needs at least one period".into()));
        }
        let (center, half_width, clip) = match *self {
            DriveProtocol::BinaryNoisyDuty {
                duty,
                duty_disorder,
                ..
            } => (duty, duty_disorder, true),
            DriveProtocol::BinaryNoisyAmplitude {
                amplitude_disorder,
                ..
            } => (0.0, amplitude_disorder, false),
            _ => {
                return Err(Error::Config(
                    "disorder can only be sampled for noisy binary drives".into(),
                ))
            }
        };
        let mut clipped = 0;
        let values = (0..n_periods)
            .map(|n| {
                let u: f64 = rng::keyed_rng(seed, &[n as u64]).random();
                let v = center + half_width * (2.0 * u - 1.0);
                if clip && !(0.0..=1.0).contains(&v) {
                    clipped += 1;
                    v.clamp(0.0, 1.0)
                } else {
                    v
                }
            })
            .collect();
        Ok(DisorderRealization {
            seed,
            values,
            clipped,
        })
    }

    /// Whether the coupling actually changes within `[0, horizon]`.
    pub fn is_active(&self, realization: Option<&DisorderRealization>, horizon: f64) -> bool {
        match *self {
            DriveProtocol::Sinusoidal {
                lambda0,
                modulation,
                ..
            } => lambda0 > 0.0 && modulation > 0.0,
            DriveProtocol::Binary { lambda0, duty, .. }
            | DriveProtocol::BinaryNoisyAmplitude { lambda0, duty, .. } => {
                lambda0 > 0.0 && duty > 0.0 && duty < 1.0
            }
            DriveProtocol::BinaryNoisyDuty { lambda0, .. } => {
                let n = (horizon / self.period()).ceil() as usize;
                lambda0 > 0.0
                    && realization.is_some_and(|r| {
                        r.values.iter().take(n.max(1)).any(|&d| d > 0.0 && d < 1.0)
                    })
            }
        }
    }
}

/// A protocol bound to its disorder realization, validated for a horizon.
///
/// Evaluation is infallible once constructed, which is what the integrators need.
#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    protocol: DriveProtocol,
    realization: Option<DisorderRealization>,
}

impl Drive {
    pub fn new(
        protocol: DriveProtocol,
        realization: Option<DisorderRealization>,
        horizon: f64,
    ) -> Result<Self> {
        protocol.validate()?;
        if protocol.is_noisy() {
            let n_periods = (horizon / protocol.period() - 1e-9).ceil().max(1.0) as usize;
            protocol.check_realization(realization.as_ref(), n_periods - 1)?;
        }
        let realization = if protocol.is_noisy() { realization } else { None };
        Ok(Drive {
            protocol,
            realization,
        })
    }

    /// Clean drive (non-noisy protocols only).
    pub fn clean(protocol: DriveProtocol) -> Result<Self> {
        Drive::new(protocol, None, 0.0)
    }

    pub fn protocol(&self) -> &DriveProtocol {
        &self.protocol
    }

    pub fn realization(&self) -> Option<&DisorderRealization> {
        self.realization.as_ref()
    }

    pub fn period(&self) -> f64 {
        self.protocol.period()
    }

    pub fn coupling(&self, t: f64) -> f64 {
        self.protocol
            .coupling_at(self.realization.as_ref(), t.max(0.0))
            .expect("drive validated at construction")
    }

    /// Coupling used for an integration stage: piecewise-constant drives are
    /// evaluated at the midpoint of the current segment, so a stage that sits
    /// on a segment boundary never picks up the neighbouring value.
    pub fn coupling_for(&self, stage: crate::integrate::Stage) -> f64 {
        if self.protocol.is_binary() {
            self.coupling(stage.segment_mid)
        } else {
            self.coupling(stage.t)
        }
    }

    pub fn switch_times(&self, horizon: f64) -> Vec<f64> {
        self.protocol
            .switch_times(self.realization.as_ref(), horizon)
            .expect("drive validated at construction")
    }

    pub fn is_active(&self, horizon: f64) -> bool {
        self.protocol.is_active(self.realization.as_ref(), horizon)
    }
}
