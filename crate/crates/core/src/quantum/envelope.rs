//! Oscillation envelopes and beat periods of `<J_x>` traces.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TrajectorySeries;

/// Local maxima of `<J_x>/N` with parabolic refinement.
///
/// A three-point maximum is kept only when it is also the largest sample
/// within half a drive period on either side, which drops the small wiggles
/// of the intra-period micromotion.
pub fn peak_envelope(series: &TrajectorySeries) -> Result<Vec<(f64, f64)>> {
    let y = series.jx()?;
    if y.len() < 3 {
        return Err(Error::Domain(format!(
            "peak envelope needs at least 3 samples, got {}",
            y.len()
        )));
    }
    let h = series.stride();
    let reach = (series.meta.samples_per_period / 2).max(1);
    let mut out = Vec::new();
    for i in 1..y.len() - 1 {
        if !(y[i] > y[i - 1] && y[i] >= y[i + 1]) {
            continue;
        }
        let lo = i.saturating_sub(reach);
        let hi = (i + reach + 1).min(y.len());
        if y[lo..hi].iter().any(|&v| v > y[i]) {
            continue;
        }
        let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
        let curv = y0 - 2.0 * y1 + y2;
        let (dt, peak) = if curv < 0.0 {
            let delta = 0.5 * (y0 - y2) / curv;
            (delta * h, y1 - 0.25 * (y0 - y2) * delta)
        } else {
            (0.0, y1)
        };
        out.push((series.t[i] + dt, peak));
    }
    Ok(out)
}

/// Result of a beat-period estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BeatPeriod {
    Finite(f64),
    /// The envelope has no interior minimum: the beat (if any) is longer than
    /// the series.
    ExceedsHorizon,
}

impl BeatPeriod {
    pub fn value(&self) -> Option<f64> {
        match self {
            BeatPeriod::Finite(v) => Some(*v),
            BeatPeriod::ExceedsHorizon => None,
        }
    }

    /// Ordering key with the sentinel above every finite period.
    pub fn as_key(&self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }
}

/// Dip depth, relative to the envelope maximum, that counts as a beat minimum.
const MIN_DIP: f64 = 0.05;
const PAD: usize = 16;

/// Beat period from the dominant frequency of the mean-subtracted envelope.
///
/// The envelope is resampled linearly onto a uniform grid and zero-padded
/// before the transform; the peak bin is refined by a parabola through its
/// neighbours.
pub fn beat_period(envelope: &[(f64, f64)]) -> BeatPeriod {
    if envelope.len() < 4 {
        return BeatPeriod::ExceedsHorizon;
    }
    let v: Vec<f64> = envelope.iter().map(|e| e.1).collect();
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = MIN_DIP * scale;
    let has_dip = (1..v.len() - 1).any(|i| {
        let left = v[..i].iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let right = v[i + 1..].iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        v[i] < left - tol && v[i] < right - tol
    });
    if !has_dip || scale == 0.0 {
        return BeatPeriod::ExceedsHorizon;
    }
    let (t0, t1) = (envelope[0].0, envelope[envelope.len() - 1].0);
    let n = envelope.len();
    let h = (t1 - t0) / (n - 1) as f64;
    let mut uniform = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = t0 + k as f64 * h;
        while j + 2 < n && envelope[j + 1].0 < t {
            j += 1;
        }
        let (ta, va) = envelope[j];
        let (tb, vb) = envelope[j + 1];
        let w = if tb > ta { ((t - ta) / (tb - ta)).clamp(0.0, 1.0) } else { 0.0 };
        uniform.push(va + w * (vb - va));
    }
    let mean = uniform.iter().sum::<f64>() / n as f64;
    let len = n * PAD;
    let mut buf: Vec<Complex64> = uniform.iter().map(|&x| Complex64::new(x - mean, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let power: Vec<f64> = buf[..=len / 2].iter().map(|c| c.norm_sqr()).collect();
    // skip the mainlobe of the DC bin
    let start = PAD;
    let Some(k) = (start..power.len()).max_by(|&a, &b| power[a].total_cmp(&power[b])) else {
        return BeatPeriod::ExceedsHorizon;
    };
    let mut kf = k as f64;
    if k + 1 < power.len() {
        let (a, b, c) = (power[k - 1], power[k], power[k + 1]);
        let curv = a - 2.0 * b + c;
        if curv < 0.0 {
            kf += 0.5 * (a - c) / curv;
        }
    }
    BeatPeriod::Finite(len as f64 * h / kf)
}

/// Exponential decay time of an envelope.
///
/// Least-squares fit of `ln v` against `t` over the peaks from the first one
/// up to and including the first peak below `floor` times the first.
pub fn decay_time(envelope: &[(f64, f64)], floor: f64) -> Option<f64> {
    let v0 = envelope.first()?.1;
    if !(v0 > 0.0) {
        return None;
    }
    let mut pts = Vec::new();
    for &(t, v) in envelope {
        if !(v > 0.0) {
            break;
        }
        pts.push((t, v.ln()));
        if v < floor * v0 {
            break;
        }
    }
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -1.0 / slope)
}

/// First time the envelope drops below `fraction` of its first peak, by
/// linear interpolation between peaks.
pub fn fall_time(envelope: &[(f64, f64)], fraction: f64) -> Option<f64> {
    let v0 = envelope.first()?.1;
    let target = fraction * v0;
    envelope.windows(2).find(|w| w[1].1 < target).map(|w| {
        let ((ta, va), (tb, vb)) = (w[0], w[1]);
        ta + (tb - ta) * (va - target) / (va - vb)
    })
}
