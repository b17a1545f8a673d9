//! Phase-space diagnostics of the nondimensional concurrent reaction:
//! energy-surface sampling, Poincaré sections through `X_A2 = 0`,
//! filling fractions, largest Lyapunov exponents and modulation fits.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meanfield::{nondim_vector_field, MeanFieldState, NondimParams, VectorField};
use crate::ode::{DormandPrince, OdeError, StepOptions};
use crate::scalar::Real;
use crate::table::{Table, Value};

pub const DEFAULT_C1_GRID: [f64; 6] = [1e-4, 1e-3, 5e-3, 2e-2, 1e-1, 1.0];
pub const DEFAULT_RENORM_INTERVAL: f64 = 1.0;
pub const DEFAULT_LYAPUNOV_HORIZON: f64 = 5e3;
pub const DEFAULT_SECTION_TAU: f64 = 5e3;
pub const DEFAULT_GRID_RESOLUTION: usize = 32;
const MAX_REJECTIONS: usize = 10_000;
/// Tolerance on `|X_A2|` after crossing refinement.
const SECTION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChaosError {
    #[error("energy {0} not reached after {MAX_REJECTIONS} draws")]
    UnreachableEnergy(f64),
    #[error("section is empty")]
    EmptySection,
    #[error("grid resolution must be at least 8, got {0}")]
    GridTooCoarse(usize),
    #[error("series too short for a modulation fit ({0} samples)")]
    TooShort(usize),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// `X = Re α`, `P = Im α` of both modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePoint<T> {
    pub x_a: T,
    pub p_a: T,
    pub x_a2: T,
    pub p_a2: T,
}

impl<T: Real> QuadraturePoint<T> {
    pub fn from_state(s: &MeanFieldState<T>) -> Self {
        let (a, m) = (s.amplitudes[0], s.amplitudes[1]);
        Self {
            x_a: a.re,
            p_a: a.im,
            x_a2: m.re,
            p_a2: m.im,
        }
    }

    pub fn to_state(self) -> MeanFieldState<T> {
        MeanFieldState::new(vec![Complex::new(self.x_a, self.p_a), Complex::new(self.x_a2, self.p_a2)])
    }

    fn to_real(self) -> [T; 4] {
        [self.x_a, self.p_a, self.x_a2, self.p_a2]
    }

    fn from_real(y: &[T]) -> Self {
        Self {
            x_a: y[0],
            p_a: y[1],
            x_a2: y[2],
            p_a2: y[3],
        }
    }
}

/// Seeded points with `X_A2 = 0` on the energy surface `H̃ = E`.
///
/// `(X_A, P_A)` is drawn uniformly from the disk of radius `√E`, and
/// `P_A2` solves `c2 p² + 4c1 X_A P_A p + (X_A² + P_A² + 2X_A − E) = 0`
/// with a random choice of root. Draws without a real root are redrawn.
pub fn sample_energy_surface<T: Real>(
    energy: T,
    params: &NondimParams<T>,
    count: usize,
    seed: u64,
) -> Result<Vec<QuadraturePoint<T>>, ChaosError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = energy.abs().sqrt().max(T::one());
    let two = T::lit(2.0);
    let (c1, c2) = (params.c1, params.c2);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut found = None;
        for _ in 0..MAX_REJECTIONS {
            let r = radius * T::lit(rng.gen::<f64>()).sqrt();
            let phi = T::lit(rng.gen::<f64>() * std::f64::consts::TAU);
            let upper: bool = rng.gen();
            let (x, p) = (r * phi.cos(), r * phi.sin());
            let b = T::lit(4.0) * c1 * x * p;
            let c = x * x + p * p + two * x - energy;
            let root = if c2 == T::zero() {
                (b != T::zero()).then(|| -c / b)
            } else {
                let disc = b * b - T::lit(4.0) * c2 * c;
                (disc >= T::zero()).then(|| {
                    // numerically stable pair of roots
                    let sq = disc.sqrt();
                    let q = -(b + b.signum() * sq) / two;
                    let (r1, r2) = if q == T::zero() { (T::zero(), T::zero()) } else { (q / c2, c / q) };
                    if upper {
                        r1.max(r2)
                    } else {
                        r1.min(r2)
                    }
                })
            };
            if let Some(pm) = root.filter(|v| v.is_finite()) {
                found = Some(QuadraturePoint {
                    x_a: x,
                    p_a: p,
                    x_a2: T::zero(),
                    p_a2: pm,
                });
                break;
            }
        }
        out.push(found.ok_or(ChaosError::UnreachableEnergy(energy.as_f64()))?);
    }
    Ok(out)
}

/// One positive crossing of `X_A2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing<T> {
    pub tau: T,
    pub x_a: T,
    pub p_a: T,
    pub p_a2: T,
    /// Residual `X_A2` after refinement.
    pub x_a2: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionTrajectory<T> {
    pub id: usize,
    pub crossings: Vec<Crossing<T>>,
    /// The trajectory never leaves the section surface.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareSection<T> {
    pub trajectories: Vec<SectionTrajectory<T>>,
}

impl<T: Real> PoincareSection<T> {
    pub fn point_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.crossings.len()).sum()
    }

    /// `traj_id,tau,X_A,P_A,P_A2`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["traj_id", "tau", "X_A", "P_A", "P_A2"]);
        for tr in &self.trajectories {
            for c in &tr.crossings {
                t.push(vec![
                    Value::from(tr.id),
                    c.tau.as_f64().into(),
                    c.x_a.as_f64().into(),
                    c.p_a.as_f64().into(),
                    c.p_a2.as_f64().into(),
                ]);
            }
        }
        t
    }
}

fn eval_real<T: Real, F: VectorField<T> + ?Sized>(field: &F, y: &[T], dy: &mut [T]) {
    let z = [Complex::new(y[0], y[1]), Complex::new(y[2], y[3])];
    let mut dz = [Complex::new(T::zero(), T::zero()); 2];
    field.eval(&z, &mut dz);
    dy[..4].copy_from_slice(&[dz[0].re, dz[0].im, dz[1].re, dz[1].im]);
}

/// Hénon's trick: integrate `dy/dX_A2 = f/f_X` (and `dτ/dX_A2 = 1/f_X`)
/// from `y` to `X_A2 = 0`.
fn henon_refine<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    y: &[T],
    tau: T,
    options: StepOptions<T>,
) -> Result<(QuadraturePoint<T>, T), OdeError> {
    let rhs = |_x: T, w: &[T], dw: &mut [T]| {
        let mut f = [T::zero(); 4];
        eval_real(field, &w[..4], &mut f);
        let inv = T::one() / f[2];
        for k in 0..4 {
            dw[k] = f[k] * inv;
        }
        dw[4] = inv;
    };
    let start = [y[0], y[1], y[2], y[3], tau];
    let x0 = y[2];
    if x0 == T::zero() {
        return Ok((QuadraturePoint::from_real(y), tau));
    }
    // integrate in s = X_A2 − x0 ≥ 0 … or ≤ 0; flip to keep time increasing
    let dir = if x0 < T::zero() { T::one() } else { -T::one() };
    let flipped = |s: T, w: &[T], dw: &mut [T]| {
        rhs(s, w, dw);
        for v in dw.iter_mut() {
            *v *= dir;
        }
    };
    let mut dp = DormandPrince::new(flipped, T::zero(), start.to_vec(), options)?;
    let span = x0.abs();
    while dp.t() < span {
        dp.step(span)?;
    }
    let w = dp.y();
    Ok((QuadraturePoint::from_real(&w[..4]), w[4]))
}

/// Integrates one trajectory and records its positive crossings.
pub fn section_trajectory<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    id: usize,
    initial: &QuadraturePoint<T>,
    tau_max: T,
    options: StepOptions<T>,
) -> Result<SectionTrajectory<T>, ChaosError> {
    if field.modes() != 2 {
        return Err(ChaosError::Invalid("sections need a two-mode field".into()));
    }
    let rhs = |_t: T, y: &[T], dy: &mut [T]| eval_real(field, y, dy);
    let mut dp = DormandPrince::new(rhs, T::zero(), initial.to_real().to_vec(), options)?;
    let mut crossings = Vec::new();
    let mut prev = initial.to_real();
    let mut max_x = initial.x_a2.abs();
    let scale = initial.to_real().iter().fold(T::one(), |m, v| m.max(v.abs()));
    let mut dense = [T::zero(); 4];
    while dp.t() < tau_max {
        dp.step(tau_max)?;
        let y = dp.y();
        let (t0, t1) = (dp.t_prev(), dp.t());
        max_x = max_x.max(y[2].abs());
        if prev[2] < T::zero() && y[2] >= T::zero() {
            // bracket on the dense interpolant, then refine on the flow
            let (mut lo, mut hi) = (t0, t1);
            for _ in 0..60 {
                let mid = (lo + hi) * T::lit(0.5);
                dp.dense(mid, &mut dense);
                if dense[2] < T::zero() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            dp.dense(hi, &mut dense);
            let mut f_est = [T::zero(); 4];
            eval_real(field, &dense, &mut f_est);
            let mut f_prev = [T::zero(); 4];
            eval_real(field, &prev, &mut f_prev);
            // start from the accepted point unless the crossing is grazing there
            let (start, t_start) = if f_prev[2] > T::lit(0.5) * f_est[2] { (prev, t0) } else { (dense, hi) };
            let (mut q, mut tau) = henon_refine(field, &start, t_start, options)?;
            for _ in 0..3 {
                if q.x_a2.abs() < T::lit(SECTION_TOLERANCE) {
                    break;
                }
                (q, tau) = henon_refine(field, &q.to_real(), tau, options)?;
            }
            crossings.push(Crossing {
                tau,
                x_a: q.x_a,
                p_a: q.p_a,
                p_a2: q.p_a2,
                x_a2: q.x_a2,
            });
        }
        prev.copy_from_slice(&y[..4]);
    }
    let degenerate = max_x <= T::lit(1e-12) * scale;
    if degenerate {
        crossings.clear();
    }
    Ok(SectionTrajectory { id, crossings, degenerate })
}

/// Positive (`dX_A2/dτ > 0`) crossings of `X_A2 = 0` for each initial point,
/// refined to `|X_A2| < 1e−10`.
pub fn poincare_section<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    initials: &[QuadraturePoint<T>],
    tau_max: T,
    options: StepOptions<T>,
) -> Result<PoincareSection<T>, ChaosError> {
    let trajectories = initials
        .par_iter()
        .enumerate()
        .map(|(id, p)| section_trajectory(field, id, p, tau_max, options))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PoincareSection { trajectories })
}

/// Occupied fraction of a `G×G` grid over each trajectory's `(X_A, P_A)`
/// bounding box, averaged over trajectories with crossings.
pub fn filling_fraction<T: Real>(section: &PoincareSection<T>, resolution: usize) -> Result<f64, ChaosError> {
    if resolution < 8 {
        return Err(ChaosError::GridTooCoarse(resolution));
    }
    let g = resolution;
    let mut total = 0.0;
    let mut used = 0usize;
    for tr in &section.trajectories {
        if tr.crossings.is_empty() {
            continue;
        }
        let xs: Vec<f64> = tr.crossings.iter().map(|c| c.x_a.as_f64()).collect();
        let ps: Vec<f64> = tr.crossings.iter().map(|c| c.p_a.as_f64()).collect();
        let bounds = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let (x0, x1) = bounds(&xs);
        let (p0, p1) = bounds(&ps);
        let cell = |v: f64, lo: f64, hi: f64| {
            if hi > lo {
                (((v - lo) / (hi - lo) * g as f64) as usize).min(g - 1)
            } else {
                0
            }
        };
        let mut occupied = vec![false; g * g];
        for (&x, &p) in xs.iter().zip(&ps) {
            occupied[cell(x, x0, x1) * g + cell(p, p0, p1)] = true;
        }
        total += occupied.iter().filter(|&&o| o).count() as f64 / (g * g) as f64;
        used += 1;
    }
    if used == 0 {
        return Err(ChaosError::EmptySection);
    }
    Ok(total / used as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate<T> {
    pub lambda_max: T,
    pub horizon: T,
    /// Running estimate after each renormalization.
    pub convergence: Vec<T>,
}

/// Tangent-space Benettin estimate of the largest Lyapunov exponent.
///
/// The flow and its linearization are integrated together; the tangent
/// vector is renormalized every `renorm` and the log stretch factors are
/// averaged per unit `τ`. The first `transient` fraction of the horizon is
/// excluded from `lambda_max` (the running series covers everything).
pub fn lyapunov_max<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    initial: &MeanFieldState<T>,
    horizon: T,
    renorm: T,
    transient: T,
    options: StepOptions<T>,
) -> Result<LyapunovEstimate<T>, ChaosError> {
    if !(renorm > T::zero()) || !(horizon >= renorm) {
        return Err(ChaosError::Invalid("need 0 < renormalization interval <= horizon".into()));
    }
    if !(transient >= T::zero() && transient < T::one()) {
        return Err(ChaosError::Invalid("transient fraction must lie in [0, 1)".into()));
    }
    let n = field.modes();
    let rhs = |_t: T, y: &[T], dy: &mut [T]| {
        let z: Vec<Complex<T>> = y[..2 * n].chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
        let v: Vec<Complex<T>> = y[2 * n..].chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
        let mut f = vec![Complex::new(T::zero(), T::zero()); n];
        let mut jv = f.clone();
        field.eval(&z, &mut f);
        field.jvp(&z, &v, &mut jv);
        for (k, c) in f.iter().chain(&jv).enumerate() {
            dy[2 * k] = c.re;
            dy[2 * k + 1] = c.im;
        }
    };
    let mut y0 = initial.to_real();
    let unit = T::one() / T::from_count(2 * n as u64).sqrt();
    y0.extend(std::iter::repeat_n(unit, 2 * n));
    let mut dp = DormandPrince::new(rhs, T::zero(), y0, options)?;
    let intervals = (horizon / renorm).round().to_usize().unwrap_or(1).max(1);
    let skip = (transient * T::from_count(intervals as u64)).floor().to_usize().unwrap_or(0);
    let mut log_sum = T::zero();
    let mut kept_sum = T::zero();
    let mut convergence = Vec::with_capacity(intervals);
    let mut buf = vec![T::zero(); 4 * n];
    for k in 1..=intervals {
        let target = renorm * T::from_count(k as u64);
        while dp.t() < target {
            dp.step(target)?;
        }
        buf.copy_from_slice(dp.y());
        let norm = buf[2 * n..].iter().map(|v| *v * *v).sum::<T>().sqrt();
        if !(norm > T::zero() && norm.is_finite()) {
            return Err(OdeError::NonFinite { t: target.as_f64() }.into());
        }
        for v in &mut buf[2 * n..] {
            *v /= norm;
        }
        dp.reset_state(&buf);
        let stretch = norm.ln();
        log_sum += stretch;
        if k > skip {
            kept_sum += stretch;
        }
        convergence.push(log_sum / target);
    }
    let kept = T::from_count((intervals - skip) as u64) * renorm;
    Ok(LyapunovEstimate {
        lambda_max: kept_sum / kept,
        horizon: renorm * T::from_count(intervals as u64),
        convergence,
    })
}

/// Mean plus sinusoid fitted to the envelope of a fast oscillation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationFit<T> {
    pub mean: T,
    pub amplitude: T,
    pub frequency: T,
    /// RMS residual of the fit.
    pub residual: T,
    /// Number of envelope samples used (the raw series when no carrier).
    pub samples: usize,
}

/// Minimum number of local maxima for the series to count as a carrier
/// oscillation whose envelope is fitted.
const MIN_CARRIER_PEAKS: usize = 20;

/// Local maxima with parabolic refinement.
fn peaks(times: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
        if b > a && b >= c {
            let denom = a - 2.0 * b + c;
            let h = times[i + 1] - times[i];
            if denom < 0.0 {
                let shift = 0.5 * (a - c) / denom;
                out.push((times[i] + shift * h, b - 0.25 * (a - c) * shift));
            } else {
                out.push((times[i], b));
            }
        }
    }
    out
}

/// Least-squares `m + a cos ωt + b sin ωt` at fixed `ω`; returns
/// `(m, a, b, sum of squared residuals)`.
fn fit_at(t: &[f64], y: &[f64], w: f64) -> (f64, f64, f64, f64) {
    let n = t.len() as f64;
    let t_ref = t[0];
    let (mut sc, mut ss, mut scc, mut sss, mut scs, mut sy, mut syc, mut sys) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (&ti, &yi) in t.iter().zip(y) {
        let (s, c) = (w * (ti - t_ref)).sin_cos();
        sc += c;
        ss += s;
        scc += c * c;
        sss += s * s;
        scs += c * s;
        sy += yi;
        syc += yi * c;
        sys += yi * s;
    }
    // normal equations of the 3×3 system, solved by Cramer's rule
    let m = [[n, sc, ss], [sc, scc, scs], [ss, scs, sss]];
    let r = [sy, syc, sys];
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(m);
    let mean = y.iter().sum::<f64>() / n;
    if d.abs() < 1e-12 * n * n * n {
        let sse = y.iter().map(|v| (v - mean).powi(2)).sum();
        return (mean, 0.0, 0.0, sse);
    }
    let solve = |col: usize| {
        let mut mm = m;
        for row in 0..3 {
            mm[row][col] = r[row];
        }
        det3(mm) / d
    };
    let (c0, a, b) = (solve(0), solve(1), solve(2));
    let sse = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| {
            let (s, c) = (w * (ti - t_ref)).sin_cos();
            (yi - c0 - a * c - b * s).powi(2)
        })
        .sum();
    (c0, a, b, sse)
}

/// Envelope modulation of an oscillating series (peaks with parabolic
/// interpolation, then a scanned least-squares sinusoid fit). Series with
/// fewer than 20 maxima are fitted directly.
pub fn measure_modulation<T: Real>(times: &[T], values: &[T]) -> Result<ModulationFit<T>, ChaosError> {
    if times.len() != values.len() {
        return Err(ChaosError::Invalid("times and values differ in length".into()));
    }
    if times.len() < 16 {
        return Err(ChaosError::TooShort(times.len()));
    }
    let t: Vec<f64> = times.iter().map(|v| v.as_f64()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.as_f64()).collect();
    let env = peaks(&t, &y);
    let (ft, fy): (Vec<f64>, Vec<f64>) = if env.len() >= MIN_CARRIER_PEAKS {
        env.into_iter().unzip()
    } else {
        (t.clone(), y.clone())
    };
    let span = ft[ft.len() - 1] - ft[0];
    let mean = fy.iter().sum::<f64>() / fy.len() as f64;
    let spread = fy.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    let flat = spread <= 1e-12 * mean.abs().max(1.0);
    if flat || span <= 0.0 {
        let residual = (fy.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / fy.len() as f64).sqrt();
        return Ok(ModulationFit {
            mean: T::lit(mean),
            amplitude: T::zero(),
            frequency: T::zero(),
            residual: T::lit(residual),
            samples: fy.len(),
        });
    }
    // scan from one period per span up to the sample Nyquist frequency
    let dt = span / (ft.len() - 1) as f64;
    let w_lo = std::f64::consts::TAU / span;
    let w_hi = std::f64::consts::PI / dt;
    let scan = 4 * ft.len().clamp(64, 4000);
    let sse = |w: f64| fit_at(&ft, &fy, w).3;
    let mut best = (w_lo, f64::INFINITY);
    let mut grid = Vec::with_capacity(scan + 1);
    for i in 0..=scan {
        let w = w_lo + (w_hi - w_lo) * i as f64 / scan as f64;
        let e = sse(w);
        grid.push(w);
        if e < best.1 {
            best = (w, e);
        }
    }
    // golden-section refinement inside the neighbouring grid cells
    let step = (w_hi - w_lo) / scan as f64;
    let (mut a, mut b) = ((best.0 - step).max(w_lo * 0.5), best.0 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (sse(x1), sse(x2));
    for _ in 0..100 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = sse(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = sse(x2);
        }
    }
    let w = 0.5 * (a + b);
    let (m, ca, cb, e) = fit_at(&ft, &fy, w);
    Ok(ModulationFit {
        mean: T::lit(m),
        amplitude: T::lit(ca.hypot(cb)),
        frequency: T::lit(w),
        residual: T::lit((e / fy.len() as f64).sqrt()),
        samples: fy.len(),
    })
}

/// Settings of a regime scan over `c1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub energy: f64,
    pub c2: f64,
    pub c1_grid: Vec<f64>,
    pub trajectories: usize,
    pub seed: u64,
    pub section_tau: f64,
    pub lyapunov_horizon: f64,
    pub renorm_interval: f64,
    pub transient: f64,
    pub grid_resolution: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            energy: 100.0,
            c2: 1.1,
            c1_grid: DEFAULT_C1_GRID.to_vec(),
            trajectories: 8,
            seed: 0,
            section_tau: DEFAULT_SECTION_TAU,
            lyapunov_horizon: DEFAULT_LYAPUNOV_HORIZON,
            renorm_interval: DEFAULT_RENORM_INTERVAL,
            transient: 0.5,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimePoint {
    pub c1: f64,
    /// Mean over trajectories.
    pub lambda_max: f64,
    pub filling_fraction: f64,
}

/// Mean `λ_max` and filling fraction per `c1`, from the same seeded
/// initial conditions on the energy surface.
pub fn regime_scan(opts: &ScanOptions) -> Result<Vec<RegimePoint>, ChaosError> {
    opts.c1_grid
        .iter()
        .map(|&c1| {
            let params = NondimParams::<f64>::from_couplings(c1, opts.c2);
            let field = nondim_vector_field(params);
            let initials = sample_energy_surface(opts.energy, &params, opts.trajectories, opts.seed)?;
            let section = poincare_section(&field, &initials, opts.section_tau, StepOptions::default())?;
            let ff = filling_fraction(&section, opts.grid_resolution)?;
            let lambdas = initials
                .par_iter()
                .map(|p| {
                    lyapunov_max(
                        &field,
                        &p.to_state(),
                        opts.lyapunov_horizon,
                        opts.renorm_interval,
                        opts.transient,
                        StepOptions::default(),
                    )
                    .map(|e| e.lambda_max)
                })
                .collect::<Result<Vec<f64>, _>>()?;
            Ok(RegimePoint {
                c1,
                lambda_max: lambdas.iter().sum::<f64>() / lambdas.len() as f64,
                filling_fraction: ff,
            })
        })
        .collect()
}

/// `c1,lambda_max,filling_fraction`.
pub fn scan_table(points: &[RegimePoint]) -> Table {
    let mut t = Table::new(["c1", "lambda_max", "filling_fraction"]);
    for p in points {
        t.push(vec![p.c1.into(), p.lambda_max.into(), p.filling_fraction.into()]);
    }
    t
}
