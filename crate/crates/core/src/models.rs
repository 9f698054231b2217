//! Mean-field equations of motion for the open Dicke model (DM), its
//! atom-only reduction (ADM) and the Lipkin-Meshkov-Glick model (LMG).
//!
//! Spin components use the spin-1/2 normalization: a fully polarized
//! ensemble has `|j| = 1/2`. The photon amplitude is rescaled as
//! `a = <a>/sqrt(N)`.

use std::ops::{Add, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::drive::DriveProtocol;
use crate::error::{Error, Result};
use crate::integrate::OdeState;

/// Dissipation strength at which the Dicke model hands over to the atom-only model.
pub const ADM_THRESHOLD: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dm,
    Adm,
    Lmg,
}

impl ModelKind {
    pub fn has_photon(self) -> bool {
        self == ModelKind::Dm
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Dm => "DM",
            ModelKind::Adm => "ADM",
            ModelKind::Lmg => "LMG",
        })
    }
}

/// Serde helper for dissipation rates that may be infinite (written as `"inf"`).
pub mod serde_kappa {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinite" | "infinity" => Ok(f64::INFINITY),
                other => other
                    .parse()
                    .map_err(|_| de::Error::custom(format!("invalid dissipation rate `{t}`"))),
            },
        }
    }
}

/// Physical constants plus the drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub omega0: f64,
    pub omega_p: f64,
    /// Photon decay rate; `f64::INFINITY` selects the LMG limit.
    #[serde(with = "serde_kappa")]
    pub kappa: f64,
    pub drive: DriveProtocol,
}

impl ModelParams {
    pub fn new(omega0: f64, omega_p: f64, kappa: f64, drive: DriveProtocol) -> Self {
        ModelParams {
            omega0,
            omega_p,
            kappa,
            drive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(Error::Config(format!("omega0 must be positive, got {}", self.omega0)));
        }
        if !(self.omega_p > 0.0 && self.omega_p.is_finite()) {
            return Err(Error::Config(format!("omega_p must be positive, got {}", self.omega_p)));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Config(format!("kappa must be nonnegative, got {}", self.kappa)));
        }
        self.drive.validate()
    }

    pub fn kind(&self) -> ModelKind {
        dispatch_model(self.kappa, self.omega0)
    }

    /// Critical coupling; infinite when `kappa` is.
    pub fn lambda_cr(&self) -> f64 {
        if self.kappa.is_infinite() {
            f64::INFINITY
        } else {
            critical_coupling(self.omega0, self.omega_p, self.kappa)
                .expect("frequencies validated")
        }
    }
}

/// Critical coupling `λ_cr = (1/2) sqrt((ω0/ωp)(ωp² + κ²))`.
pub fn critical_coupling(omega0: f64, omega_p: f64, kappa: f64) -> Result<f64> {
    if !(omega0 > 0.0) || !(omega_p > 0.0) {
        return Err(Error::Domain(format!(
            "frequencies must be positive (omega0 = {omega0}, omega_p = {omega_p})"
        )));
    }
    if !(kappa >= 0.0) {
        return Err(Error::Domain(format!("kappa must be nonnegative, got {kappa}")));
    }
    Ok(0.5 * ((omega0 / omega_p) * (omega_p * omega_p + kappa * kappa)).sqrt())
}

/// Model used for a given dissipation strength.
pub fn dispatch_model(kappa: f64, omega0: f64) -> ModelKind {
    if kappa.is_infinite() {
        ModelKind::Lmg
    } else if kappa / omega0 < ADM_THRESHOLD {
        ModelKind::Dm
    } else {
        ModelKind::Adm
    }
}

/// Duty cycle at which the dark time equals `(m + 1/2)` free precession periods.
///
/// `None` when that duty cycle falls outside `[0, 1]`.
pub fn instability_duty(omega_d: f64, omega0: f64, m: u32) -> Option<f64> {
    let d = 1.0 - (m as f64 + 0.5) * omega_d / omega0;
    (0.0..=1.0).contains(&d).then_some(d)
}

/// Rescaled photon amplitude and collective spin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub a: Complex64,
    pub j: [f64; 3],
}

impl MeanFieldState {
    pub fn new(a: Complex64, j: [f64; 3]) -> Self {
        MeanFieldState { a, j }
    }

    pub fn spin_length(&self) -> f64 {
        (self.j[0] * self.j[0] + self.j[1] * self.j[1] + self.j[2] * self.j[2]).sqrt()
    }

    /// Image under the ℤ₂ map `(a, j_x, j_y) -> (-a, -j_x, -j_y)`.
    pub fn parity(&self) -> Self {
        MeanFieldState {
            a: -self.a,
            j: [-self.j[0], -self.j[1], self.j[2]],
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let dj = (0..3).map(|k| (self.j[k] - other.j[k]).abs());
        dj.chain([(self.a - other.a).norm()]).fold(0.0, f64::max)
    }
}

impl Add for MeanFieldState {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        MeanFieldState {
            a: self.a + o.a,
            j: [self.j[0] + o.j[0], self.j[1] + o.j[1], self.j[2] + o.j[2]],
        }
    }
}

impl Mul<f64> for MeanFieldState {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        MeanFieldState {
            a: self.a * k,
            j: [self.j[0] * k, self.j[1] * k, self.j[2] * k],
        }
    }
}

impl OdeState for MeanFieldState {
    fn axpy(&mut self, k: f64, x: &Self) {
        self.a += x.a * k;
        for i in 0..3 {
            self.j[i] += k * x.j[i];
        }
    }

    fn is_finite(&self) -> bool {
        self.a.re.is_finite() && self.a.im.is_finite() && self.j.iter().all(|v| v.is_finite())
    }
}

/// Which of the two ℤ₂-broken steady states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// Unit-sphere direction (times 1/2) of the symmetry-broken spin for coupling ratio `r = λ/λ_cr`.
pub fn broken_spin(ratio: f64, branch: Branch) -> [f64; 3] {
    if ratio <= 1.0 {
        return [0.0, 0.0, -0.5];
    }
    let q = 1.0 / (ratio * ratio);
    [0.5 * branch.sign() * (1.0 - q * q).sqrt(), 0.0, -0.5 * q]
}

/// Steady state of the undriven model at coupling ratio `ratio = λ/λ_cr`.
///
/// Below threshold this is the normal state with all spins down. Above it the
/// spin follows the chosen symmetry-broken branch and, for a finite photon
/// loss rate, the photon amplitude is `a = -2λ j_x/(ωp - iκ)`, anti-correlated
/// in sign with `j_x`.
pub fn steady_state(params: &ModelParams, ratio: f64, branch: Branch) -> MeanFieldState {
    let j = broken_spin(ratio, branch);
    let a = if params.kappa.is_finite() && ratio > 1.0 {
        let lambda = ratio * params.lambda_cr();
        -Complex64::new(2.0 * lambda * j[0], 0.0) / Complex64::new(params.omega_p, -params.kappa)
    } else {
        Complex64::new(0.0, 0.0)
    };
    MeanFieldState { a, j }
}

/// Precomputed right-hand side for one model at fixed physical constants.
///
/// Couplings passed to [`MeanFieldModel::derivative`] are ratios `λ/λ_cr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldModel {
    pub kind: ModelKind,
    omega0: f64,
    omega_p: f64,
    kappa: f64,
    lambda_cr: f64,
}

impl MeanFieldModel {
    pub fn new(kind: ModelKind, params: &ModelParams) -> Result<Self> {
        params.validate()?;
        if kind != ModelKind::Lmg && params.kappa.is_infinite() {
            return Err(Error::Config(format!("{kind} needs a finite dissipation rate")));
        }
        Ok(MeanFieldModel {
            kind,
            omega0: params.omega0,
            omega_p: params.omega_p,
            kappa: params.kappa,
            lambda_cr: params.lambda_cr(),
        })
    }

    pub fn for_params(params: &ModelParams) -> Result<Self> {
        Self::new(params.kind(), params)
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn omega_p(&self) -> f64 {
        self.omega_p
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Absolute light-matter coupling for a ratio (DM only).
    pub fn lambda(&self, ratio: f64) -> f64 {
        ratio * self.lambda_cr
    }

    /// Coefficient `8λ²ωp/(κ²+ωp²)` of the effective `j_x j_z` interaction.
    /// Equals `2 ω0 r²` for every finite κ, and that value is kept for κ = ∞.
    pub fn exchange_coefficient(&self, ratio: f64) -> f64 {
        2.0 * self.omega0 * ratio * ratio
    }

    /// Coefficient `16λ²κωpω0/(κ²+ωp²)²` of the atom-only dissipative term.
    pub fn adm_coefficient(&self, ratio: f64) -> f64 {
        if self.kappa.is_infinite() {
            return 0.0;
        }
        let denom = self.kappa * self.kappa + self.omega_p * self.omega_p;
        4.0 * self.omega0 * self.omega0 * ratio * ratio * self.kappa / denom
    }

    /// Time derivative of the state at coupling ratio `ratio`.
    pub fn derivative(&self, ratio: f64, s: &MeanFieldState) -> MeanFieldState {
        let [jx, jy, jz] = s.j;
        let w0 = self.omega0;
        match self.kind {
            ModelKind::Dm => {
                let lambda = self.lambda(ratio);
                let da = -Complex64::new(self.kappa, self.omega_p) * s.a
                    - Complex64::new(0.0, 2.0 * lambda * jx);
                let field = 2.0 * lambda * 2.0 * s.a.re;
                MeanFieldState {
                    a: da,
                    j: [-w0 * jy, w0 * jx - field * jz, field * jy],
                }
            }
            ModelKind::Adm | ModelKind::Lmg => {
                let c1 = self.exchange_coefficient(ratio);
                let c2 = if self.kind == ModelKind::Adm {
                    self.adm_coefficient(ratio)
                } else {
                    0.0
                };
                MeanFieldState {
                    a: Complex64::new(0.0, 0.0),
                    j: [
                        -w0 * jy,
                        w0 * jx + c1 * jx * jz + c2 * jy * jz,
                        -c1 * jx * jy - c2 * jy * jy,
                    ],
                }
            }
        }
    }

    /// Mean-field energy per spin of the closed Dicke model,
    /// `ωp|a|² + ω0 j_z + 4λ Re(a) j_x`.
    pub fn dm_energy(&self, ratio: f64, s: &MeanFieldState) -> f64 {
        let lambda = self.lambda(ratio);
        self.omega_p * s.a.norm_sqr() + self.omega0 * s.j[2] + 4.0 * lambda * s.a.re * s.j[0]
    }

    /// Mean-field LMG energy per spin, `ω0 j_z - ω0 r² j_x²`.
    pub fn lmg_energy(&self, ratio: f64, s: &MeanFieldState) -> f64 {
        self.omega0 * s.j[2] - self.omega0 * ratio * ratio * s.j[0] * s.j[0]
    }
}

/// Free-function form of [`MeanFieldModel::derivative`].
pub fn mean_field_derivative(
    kind: ModelKind,
    params: &ModelParams,
    ratio: f64,
    s: &MeanFieldState,
) -> Result<MeanFieldState> {
    Ok(MeanFieldModel::new(kind, params)?.derivative(ratio, s))
}
