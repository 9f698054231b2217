//! Fixed-step integrators that land exactly on drive discontinuities and
//! sample times.
//!
//! The time axis is cut at every switch time of the drive and every sample
//! time. Each piece is split into equal steps no longer than `dt_max`, so no
//! step straddles a discontinuity and every sample is taken at the end of a
//! step rather than interpolated.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// Vector-space operations needed by the integrators.
pub trait OdeState: Clone {
    /// `self += k * x`
    fn axpy(&mut self, k: f64, x: &Self);
    fn is_finite(&self) -> bool;
}

impl OdeState for Vec<f64> {
    fn axpy(&mut self, k: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            *s += k * v;
        }
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl OdeState for Vec<Complex64> {
    fn axpy(&mut self, k: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            *s += v * k;
        }
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

impl<const N: usize> OdeState for [f64; N] {
    fn axpy(&mut self, k: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            *s += k * v;
        }
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Where a right-hand-side evaluation happens.
///
/// `segment_mid` is the midpoint of the breakpoint interval containing the
/// step; piecewise-constant drives are evaluated there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub t: f64,
    pub segment_mid: f64,
}

/// Uniform sampling grid: `samples_per_period` samples per drive period,
/// from `t = 0` to `horizon` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrid {
    pub period: f64,
    pub samples_per_period: usize,
    pub horizon: f64,
}

impl SampleGrid {
    pub fn new(period: f64, samples_per_period: usize, horizon: f64) -> Result<Self> {
        if !(period > 0.0) || samples_per_period == 0 || !(horizon > 0.0) {
            return Err(Error::Domain(format!(
                "invalid sampling grid (period {period}, S {samples_per_period}, horizon {horizon})"
            )));
        }
        if !samples_per_period.is_power_of_two() {
            return Err(Error::Domain(format!(
                "samples per period must be a power of two, got {samples_per_period}"
            )));
        }
        Ok(SampleGrid {
            period,
            samples_per_period,
            horizon,
        })
    }

    pub fn stride(&self) -> f64 {
        self.period / self.samples_per_period as f64
    }

    pub fn len(&self) -> usize {
        (self.horizon / self.stride() + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.stride()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }
}

/// Breakpoint on the merged time axis; `sample` is the sample index when the
/// point is a sample time.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Breakpoint {
    pub(crate) t: f64,
    pub(crate) sample: Option<usize>,
}

pub(crate) fn breakpoints(grid: &SampleGrid, switches: &[f64]) -> Vec<Breakpoint> {
    let n = grid.len();
    let end = grid.time(n - 1);
    let tol = 1e-9 * grid.stride();
    let mut out = Vec::with_capacity(n + switches.len());
    let mut sw = switches.iter().copied().filter(|&t| t > tol && t < end - tol).peekable();
    for k in 0..n {
        let ts = grid.time(k);
        while let Some(&s) = sw.peek() {
            if s < ts - tol {
                out.push(Breakpoint { t: s, sample: None });
                sw.next();
            } else {
                if (s - ts).abs() <= tol {
                    sw.next();
                }
                break;
            }
        }
        out.push(Breakpoint {
            t: ts,
            sample: Some(k),
        });
    }
    out
}

/// Scratch buffers for one RK4 integration.
struct Rk4Scratch<S> {
    k: [S; 4],
    tmp: S,
}

impl<S: OdeState> Rk4Scratch<S> {
    fn new(s: &S) -> Self {
        Rk4Scratch {
            k: [s.clone(), s.clone(), s.clone(), s.clone()],
            tmp: s.clone(),
        }
    }

    #[inline]
    fn step<F>(&mut self, rhs: &mut F, t: f64, mid: f64, h: f64, s: &mut S)
    where
        F: FnMut(Stage, &S, &mut S),
    {
        let stage = |t| Stage { t, segment_mid: mid };
        let [k1, k2, k3, k4] = &mut self.k;
        rhs(stage(t), s, k1);
        self.tmp.clone_from(s);
        self.tmp.axpy(0.5 * h, k1);
        rhs(stage(t + 0.5 * h), &self.tmp, k2);
        self.tmp.clone_from(s);
        self.tmp.axpy(0.5 * h, k2);
        rhs(stage(t + 0.5 * h), &self.tmp, k3);
        self.tmp.clone_from(s);
        self.tmp.axpy(h, k3);
        rhs(stage(t + h), &self.tmp, k4);
        s.axpy(h / 6.0, k1);
        s.axpy(h / 3.0, k2);
        s.axpy(h / 3.0, k3);
        s.axpy(h / 6.0, k4);
    }
}

/// Classical fourth-order Runge-Kutta from `t = 0` over `grid`, calling
/// `sample(k, t, state)` at every sample time. Returns the final state.
///
/// `rhs(stage, s, out)` writes the time derivative at `s` into `out`.
pub fn integrate_ode<S, F, G>(
    mut rhs: F,
    s0: S,
    switches: &[f64],
    grid: &SampleGrid,
    dt_max: f64,
    mut sample: G,
) -> Result<S>
where
    S: OdeState,
    F: FnMut(Stage, &S, &mut S),
    G: FnMut(usize, f64, &S),
{
    if !(dt_max > 0.0) {
        return Err(Error::Domain(format!("dt_max must be positive, got {dt_max}")));
    }
    let points = breakpoints(grid, switches);
    let mut scratch = Rk4Scratch::new(&s0);
    let mut s = s0;
    sample(0, 0.0, &s);
    for pair in points.windows(2) {
        let (a, b) = (pair[0].t, pair[1].t);
        let n_steps = ((b - a) / dt_max).ceil().max(1.0) as usize;
        let h = (b - a) / n_steps as f64;
        let mid = 0.5 * (a + b);
        for i in 0..n_steps {
            let t = a + i as f64 * h;
            scratch.step(&mut rhs, t, mid, h, &mut s);
            if !s.is_finite() {
                return Err(Error::Diverged { last_valid_time: t });
            }
        }
        if let Some(k) = pair[1].sample {
            sample(k, b, &s);
        }
    }
    Ok(s)
}

/// Euler-Maruyama with additive constant-amplitude noise:
/// `s <- s + drift dt + σ_i sqrt(dt) ξ_i`, with `ξ_i` independent standard
/// normals drawn only for components with `σ_i != 0`.
///
/// Steps are cut at the same breakpoints as [`integrate_ode`], so `dt` is an
/// upper bound on the step length.
pub fn integrate_sde<F, G>(
    mut drift: F,
    noise: &[f64],
    s0: Vec<f64>,
    switches: &[f64],
    grid: &SampleGrid,
    dt: f64,
    seed: u64,
    mut sample: G,
) -> Result<Vec<f64>>
where
    F: FnMut(Stage, &[f64], &mut [f64]),
    G: FnMut(usize, f64, &[f64]),
{
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    if noise.len() != s0.len() {
        return Err(Error::Domain(format!(
            "noise has {} components, state has {}",
            noise.len(),
            s0.len()
        )));
    }
    let noisy: Vec<(usize, f64)> = noise
        .iter()
        .enumerate()
        .filter(|(_, &a)| a != 0.0)
        .map(|(i, &a)| (i, a))
        .collect();
    let mut rng = rng::keyed_rng(seed, &[0x5DE]);
    let points = breakpoints(grid, switches);
    let mut s = s0;
    let mut d = vec![0.0; s.len()];
    sample(0, 0.0, &s);
    for pair in points.windows(2) {
        let (a, b) = (pair[0].t, pair[1].t);
        let n_steps = ((b - a) / dt).ceil().max(1.0) as usize;
        let h = (b - a) / n_steps as f64;
        let sqrt_h = h.sqrt();
        let mid = 0.5 * (a + b);
        for i in 0..n_steps {
            let t = a + i as f64 * h;
            drift(Stage { t, segment_mid: mid }, &s, &mut d);
            s.axpy(h, &d);
            for &(idx, amp) in &noisy {
                let xi: f64 = rng.sample(StandardNormal);
                s[idx] += amp * sqrt_h * xi;
            }
            if !s.is_finite() {
                return Err(Error::Diverged { last_valid_time: t });
            }
        }
        if let Some(k) = pair[1].sample {
            sample(k, b, &s);
        }
    }
    Ok(s)
}
