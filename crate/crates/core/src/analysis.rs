//! Spectral and dynamical diagnostics: windowed power spectra, TC lifetime,
//! decorrelator, crystalline fraction and the phase classifier.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::drive::Drive;
use crate::error::{Error, Result};
use crate::mean_field::{simulate, Numerics};
use crate::models::{MeanFieldState, ModelKind, ModelParams};
use crate::series::TrajectorySeries;

/// How the perturbed partner trajectory of the decorrelator is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// `j'_z = -sqrt(1 - j'_x²)/2`, as printed. Lands off the `|j| = 1/2` sphere
    /// unless `j_x ≈ 0`.
    Literal,
    /// `j'_z = -sqrt(1/4 - j'_x²)`, keeping the perturbed state on the sphere.
    OnSphere,
}

/// Thresholds and windows for all diagnostics. Times are in drive periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Decorrelator threshold separating thermal from nonthermal response.
    pub d_threshold: f64,
    /// A secondary spectral peak counts when `ln P` exceeds this.
    pub ln_p_threshold: f64,
    /// Decorrelator window start.
    pub t_i: f64,
    /// Decorrelator/spectral horizon; `None` uses the end of the series.
    pub t_f: Option<f64>,
    /// Shift of `j_x(0)` for the decorrelator partner.
    pub perturbation: f64,
    pub perturbation_form: Perturbation,
    /// Shortest spectral window.
    pub min_window: f64,
    /// Bins around each excluded line that cannot host a secondary peak.
    pub exclusion_bins: f64,
    /// Exclude every multiple of `ω_d/2`, not just `0`, `ω_d/2` and `ω_d`.
    pub exclude_all_harmonics: bool,
    /// Only use windows spanning an even number of periods, so that every
    /// multiple of `ω_d/2` sits on a frequency bin.
    pub even_windows: bool,
    /// Shortest lifetime labelled TC.
    pub min_tc_lifetime: f64,
    /// Relative tolerance of `j_x(t + T_d) = -j_x(t)`.
    pub alternation_tolerance: f64,
    /// Below this amplitude a signal is not considered oscillating.
    pub amplitude_floor: f64,
    /// Window at the end of the series used for the light-induced NP test.
    pub late_window: f64,
    pub np_photon_threshold: f64,
    pub np_jx_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            d_threshold: 0.01,
            ln_p_threshold: -8.0,
            t_i: 50.0,
            t_f: None,
            perturbation: 5e-4,
            perturbation_form: Perturbation::OnSphere,
            min_window: 16.0,
            exclusion_bins: 2.0,
            exclude_all_harmonics: true,
            even_windows: true,
            min_tc_lifetime: 16.0,
            alternation_tolerance: 0.1,
            amplitude_floor: 1e-3,
            late_window: 25.0,
            np_photon_threshold: 1e-4,
            np_jx_threshold: 1e-3,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t_i", self.t_i),
            ("min_window", self.min_window),
            ("late_window", self.late_window),
            ("d_threshold", self.d_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("analysis.{name} must be positive, got {v}")));
            }
        }
        if let Some(tf) = self.t_f {
            if !(tf > self.t_i) {
                return Err(Error::Config(format!("analysis.t_f ({tf}) must exceed t_i ({})", self.t_i)));
            }
        }
        if !(self.exclusion_bins >= 0.0 && self.alternation_tolerance > 0.0) {
            return Err(Error::Config("analysis tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

/// One-sided power spectrum of `j_x` over a window, normalized to unit sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    /// Angular frequencies `2πk/(t_end - t_start)`.
    pub omega: Vec<f64>,
    pub power: Vec<f64>,
    pub t_start: f64,
    pub t_end: f64,
}

impl PowerSpectrum {
    pub fn resolution(&self) -> f64 {
        TAU / (self.t_end - self.t_start)
    }

    /// Index of the bin nearest to `omega`.
    pub fn bin_of(&self, omega: f64) -> usize {
        ((omega / self.resolution()).round() as usize).min(self.power.len() - 1)
    }

    pub fn power_at(&self, omega: f64) -> f64 {
        self.power[self.bin_of(omega)]
    }

    /// Index of the strongest bin other than DC.
    pub fn dominant_bin(&self) -> Option<usize> {
        (1..self.power.len())
            .filter(|&k| self.power[k] > 0.0)
            .max_by(|&a, &b| self.power[a].total_cmp(&self.power[b]))
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "omega,power")?;
        for (o, p) in self.omega.iter().zip(&self.power) {
            writeln!(w, "{o:.17e},{p:.17e}")?;
        }
        Ok(())
    }
}

/// Spectrum of uniformly spaced samples spanning `duration`.
pub fn spectrum_of(values: &[f64], t_start: f64, t_end: f64, planner: &mut FftPlanner<f64>) -> PowerSpectrum {
    let n = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let mut power: Vec<f64> = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr();
            // fold the negative-frequency partner
            if k == 0 || (n % 2 == 0 && k == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    let total: f64 = power.iter().sum();
    if total > 0.0 && total.is_finite() {
        power.iter_mut().for_each(|p| *p /= total);
    } else {
        power.iter_mut().for_each(|p| *p = 0.0);
        power[0] = 1.0;
    }
    let dw = TAU / (t_end - t_start);
    PowerSpectrum {
        omega: (0..=half).map(|k| k as f64 * dw).collect(),
        power,
        t_start,
        t_end,
    }
}

/// Sample range `[lo, hi)` with `t_start <= t < t_end`.
fn window_indices(series: &TrajectorySeries, t_start: f64, t_end: f64) -> (usize, usize) {
    let eps = 1e-9 * series.stride();
    let lo = series.t.partition_point(|&t| t < t_start - eps);
    let hi = series.t.partition_point(|&t| t < t_end - eps);
    (lo, hi)
}

/// Normalized power spectrum of `j_x` over samples with `t_start <= t < t_end`.
pub fn power_spectrum(series: &TrajectorySeries, t_start: f64, t_end: f64) -> Result<PowerSpectrum> {
    let jx = series.jx()?;
    let last = series.t.last().copied().unwrap_or(0.0);
    let first = series.t.first().copied().unwrap_or(0.0);
    let slack = 1e-9 * series.stride();
    if !(t_start >= first - slack && t_end <= last + series.stride() + slack && t_end > t_start) {
        return Err(Error::Domain(format!(
            "spectral window [{t_start}, {t_end}] outside series [{first}, {last}]"
        )));
    }
    let (lo, hi) = window_indices(series, t_start, t_end);
    if hi - lo < 64 {
        return Err(Error::Domain(format!(
            "spectral window holds {} samples, need at least 64",
            hi - lo
        )));
    }
    Ok(spectrum_of(&jx[lo..hi], t_start, t_end, &mut FftPlanner::new()))
}

/// Frequencies `ω` around which no secondary peak may sit.
fn excluded_lines(omega_d: f64, max_omega: f64, cfg: &AnalysisConfig) -> Vec<f64> {
    if cfg.exclude_all_harmonics {
        let count = (max_omega / (omega_d / 2.0)).ceil() as usize + 1;
        (0..=count).map(|m| m as f64 * omega_d / 2.0).collect()
    } else {
        vec![0.0, omega_d / 2.0, omega_d]
    }
}

/// Bins holding a secondary peak: local maxima above the `ln P` threshold
/// outside the exclusion zones.
pub fn secondary_peaks(spec: &PowerSpectrum, omega_d: f64, cfg: &AnalysisConfig) -> Vec<usize> {
    let p = &spec.power;
    let dw = spec.resolution();
    let lines = excluded_lines(omega_d, *spec.omega.last().unwrap_or(&0.0), cfg);
    let floor = cfg.ln_p_threshold.exp();
    (1..p.len())
        .filter(|&k| {
            let left = p[k] > p[k - 1];
            let right = k + 1 == p.len() || p[k] >= p[k + 1];
            left && right && p[k] > floor
        })
        .filter(|&k| {
            let w = k as f64 * dw;
            lines
                .iter()
                .all(|&l| (w - l).abs() / dw > cfg.exclusion_bins + 1e-9)
        })
        .collect()
}

/// Lifetime of the period-doubled response, with the per-window verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lifetime {
    /// `T_TC` in units of time.
    pub t_tc: f64,
    /// `T_TC` in whole drive periods.
    pub periods: f64,
    /// Window starts (in drive periods) and whether each held a secondary peak.
    pub windows: Vec<(f64, bool)>,
}

impl Lifetime {
    pub fn every_window_has_peak(&self) -> bool {
        !self.windows.is_empty() && self.windows.iter().all(|w| w.1)
    }
}

/// TC lifetime from sliding spectral windows `[t', t_f)` with `t'` stepping
/// over whole drive periods.
pub fn tc_lifetime(series: &TrajectorySeries, omega_d: f64, t_f: f64, cfg: &AnalysisConfig) -> Result<Lifetime> {
    let jx = series.jx()?;
    let td = TAU / omega_d;
    let total = (t_f / td).round() as i64;
    let longest = total - cfg.min_window.ceil() as i64;
    if longest < 0 {
        return Err(Error::Domain(format!(
            "horizon {t_f} shorter than the minimum spectral window of {} periods",
            cfg.min_window
        )));
    }
    let mut planner = FftPlanner::new();
    let mut windows = Vec::new();
    for m in 0..=longest {
        if cfg.even_windows && (total - m) % 2 != 0 {
            continue;
        }
        let start = m as f64 * td;
        let (lo, hi) = window_indices(series, start, t_f);
        if hi - lo < 64 {
            return Err(Error::Domain("spectral window holds fewer than 64 samples".into()));
        }
        let spec = spectrum_of(&jx[lo..hi], start, t_f, &mut planner);
        windows.push((m as f64, !secondary_peaks(&spec, omega_d, cfg).is_empty()));
    }
    // smallest start after which no window has a secondary peak
    let periods = match windows.iter().rposition(|w| w.1) {
        None => total as f64 - windows[0].0,
        Some(last) if last + 1 < windows.len() => total as f64 - windows[last + 1].0,
        Some(_) => 0.0,
    };
    Ok(Lifetime {
        t_tc: periods * td,
        periods,
        windows,
    })
}

/// Partner state for the decorrelator.
pub fn perturbed(base: &MeanFieldState, cfg: &AnalysisConfig) -> MeanFieldState {
    let jx = base.j[0] - cfg.perturbation;
    let jz = match cfg.perturbation_form {
        Perturbation::Literal => -(1.0 - jx * jx).max(0.0).sqrt() / 2.0,
        Perturbation::OnSphere => -(0.25 - jx * jx).max(0.0).sqrt(),
    };
    MeanFieldState::new(base.a, [jx, 0.0, jz])
}

/// Mean over stroboscopic samples in `[t_i, t_f]` of `||j_x| - |j'_x||`.
pub fn decorrelator_from_series(a: &TrajectorySeries, b: &TrajectorySeries, t_i: f64, t_f: f64) -> Result<f64> {
    let strobe = |s: &TrajectorySeries| -> Result<Vec<f64>> {
        Ok(s.jx()?.iter().step_by(s.meta.samples_per_period).copied().collect())
    };
    let (ja, jb) = (strobe(a)?, strobe(b)?);
    let td = a.meta.drive_period();
    let lo = (t_i / td - 1e-9).ceil().max(0.0) as usize;
    let hi = ((t_f / td + 1e-9).floor() as usize).min(ja.len().min(jb.len()).saturating_sub(1));
    if hi < lo {
        return Err(Error::Domain(format!("empty decorrelator window [{t_i}, {t_f}]")));
    }
    let sum: f64 = (lo..=hi).map(|k| (ja[k].abs() - jb[k].abs()).abs()).sum();
    Ok(sum / (hi - lo + 1) as f64)
}

/// Evolve `base` and its perturbed partner and return `(d, base series)`.
#[allow(clippy::too_many_arguments)]
pub fn decorrelator(
    kind: ModelKind,
    params: &ModelParams,
    drive: &Drive,
    base: MeanFieldState,
    n_periods: usize,
    numerics: &Numerics,
    cfg: &AnalysisConfig,
) -> Result<(f64, TrajectorySeries)> {
    let a = simulate(kind, params, drive, base, n_periods, numerics)?;
    let b = simulate(kind, params, drive, perturbed(&base, cfg), n_periods, numerics)?;
    let td = drive.period();
    let t_f = cfg.t_f.map_or(n_periods as f64 * td, |p| p * td);
    let d = decorrelator_from_series(&a, &b, cfg.t_i * td, t_f)?;
    Ok((d, a))
}

/// Crystalline fraction: mean over realizations of the full-window power at `ω_d/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrystallineFraction {
    pub xi: f64,
    pub xi_stderr: f64,
    pub xi_clean: f64,
    pub relative: f64,
    pub relative_stderr: f64,
}

/// Power at `ω_d/2` over `[0, t_f)`.
pub fn subharmonic_weight(series: &TrajectorySeries, omega_d: f64, t_f: f64) -> Result<f64> {
    let t0 = series.t.first().copied().unwrap_or(0.0);
    Ok(power_spectrum(series, t0, t_f)?.power_at(omega_d / 2.0))
}

pub fn crystalline_fraction(weights: &[f64], clean_weight: f64) -> Result<CrystallineFraction> {
    if weights.is_empty() {
        return Err(Error::Domain("crystalline fraction needs at least one realization".into()));
    }
    let n = weights.len() as f64;
    let xi = weights.iter().sum::<f64>() / n;
    let var = if weights.len() > 1 {
        weights.iter().map(|w| (w - xi).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let xi_stderr = (var / n).sqrt();
    Ok(CrystallineFraction {
        xi,
        xi_stderr,
        xi_clean: clean_weight,
        relative: xi / clean_weight,
        relative_stderr: xi_stderr / clean_weight,
    })
}

/// Crystalline fraction of an ensemble of realization series against a clean reference.
pub fn crystalline_fraction_of(
    realizations: &[TrajectorySeries],
    clean: &TrajectorySeries,
    omega_d: f64,
    t_f: f64,
) -> Result<CrystallineFraction> {
    let weights = realizations
        .iter()
        .map(|s| subharmonic_weight(s, omega_d, t_f))
        .collect::<Result<Vec<_>>>()?;
    crystalline_fraction(&weights, subharmonic_weight(clean, omega_d, t_f)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseLabel {
    #[serde(rename = "TC")]
    Tc,
    #[serde(rename = "TQC")]
    Tqc,
    Thermal,
    LightInducedNP,
    Other,
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhaseLabel::Tc => "TC",
            PhaseLabel::Tqc => "TQC",
            PhaseLabel::Thermal => "Thermal",
            PhaseLabel::LightInducedNP => "LightInducedNP",
            PhaseLabel::Other => "Other",
        })
    }
}

/// Label plus every diagnostic that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: PhaseLabel,
    pub d: f64,
    /// Raw lifetime from the spectral scan, in drive periods.
    pub t_tc_raw: f64,
    /// Reported lifetime in drive periods; zero for thermal cells.
    pub t_tc: f64,
    /// Power at `ω_d/2` over the full horizon.
    pub xi: f64,
    pub n_photon_late: f64,
    pub jx_late: f64,
    pub alternates: bool,
    pub every_window_has_peak: bool,
    /// `round(ω_d / ω_dominant)`, when a dominant line exists.
    pub subharmonic_order: Option<u32>,
}

/// Does `j_x(t + T_d) = -j_x(t)` hold over `[t_start, t_end]`?
pub fn alternates(series: &TrajectorySeries, t_start: f64, t_end: f64, cfg: &AnalysisConfig) -> Result<bool> {
    let jx = series.jx()?;
    let s = series.meta.samples_per_period;
    let (lo, hi) = window_indices(series, t_start, t_end + 0.5 * series.stride());
    if hi <= lo + s {
        return Ok(false);
    }
    let amp = jx[lo..hi].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if amp < cfg.amplitude_floor {
        return Ok(false);
    }
    let worst = (lo..hi - s).fold(0.0f64, |m, i| m.max((jx[i + s] + jx[i]).abs()));
    Ok(worst <= cfg.alternation_tolerance * amp)
}

fn late_mean(series: &TrajectorySeries, name: &str, from: f64, to: f64, abs: bool) -> f64 {
    let Some(col) = series.column(name) else {
        return 0.0;
    };
    let (lo, hi) = window_indices(series, from, to + 0.5 * series.stride());
    if hi <= lo {
        return 0.0;
    }
    col[lo..hi].iter().map(|v| if abs { v.abs() } else { *v }).sum::<f64>() / (hi - lo) as f64
}

/// Phase label of a series with precomputed decorrelator `d`.
///
/// `coupling_ratio` is `λ0/λ_cr`.
pub fn classify_phase(series: &TrajectorySeries, d: f64, coupling_ratio: f64, cfg: &AnalysisConfig) -> Result<Classification> {
    let omega_d = series.meta.omega_d;
    let td = TAU / omega_d;
    let t_f = cfg
        .t_f
        .map_or_else(|| series.n_periods() as f64 * td, |p| p * td);
    let lifetime = tc_lifetime(series, omega_d, t_f, cfg)?;
    let t0 = series.t.first().copied().unwrap_or(0.0);
    let full = power_spectrum(series, t0, t_f)?;
    let xi = full.power_at(omega_d / 2.0);
    let late_from = t_f - cfg.late_window * td;
    let n_photon_late = late_mean(series, "n_photon", late_from, t_f, false);
    let jx_late = late_mean(series, if series.column("jx").is_some() { "jx" } else { "jx_mean" }, late_from, t_f, true);
    // the head of the window may still carry the transient from the initial state
    let alt = lifetime.t_tc > 0.0 && alternates(series, t_f - 0.5 * lifetime.t_tc, t_f, cfg)?;
    let subharmonic_order = full
        .dominant_bin()
        .map(|k| (omega_d / full.omega[k]).round() as u32);
    let thermal = d >= cfg.d_threshold;
    let label = if thermal {
        PhaseLabel::Thermal
    } else if coupling_ratio > 1.0 && n_photon_late < cfg.np_photon_threshold && jx_late < cfg.np_jx_threshold {
        PhaseLabel::LightInducedNP
    } else if lifetime.periods >= cfg.min_tc_lifetime && alt && series.meta.drive_active {
        PhaseLabel::Tc
    } else if lifetime.every_window_has_peak() {
        PhaseLabel::Tqc
    } else {
        PhaseLabel::Other
    };
    Ok(Classification {
        label,
        d,
        t_tc_raw: lifetime.periods,
        t_tc: if thermal { 0.0 } else { lifetime.periods },
        xi,
        n_photon_late,
        jx_late,
        alternates: alt,
        every_window_has_peak: lifetime.every_window_has_peak(),
        subharmonic_order,
    })
}
