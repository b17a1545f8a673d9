//! Dormand–Prince 5(4) integrator with PI step-size control and
//! fourth-order dense output.
//!
//! States are flat real vectors; complex amplitudes are stored as
//! interleaved `(re, im)` pairs by the callers.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("exceeded {max_steps} steps before t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("invalid integration interval or grid: {0}")]
    InvalidInterval(String),
}

/// Mixed local error tolerance `abs + rel·|y|` per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    pub rel: T,
    pub abs: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            rel: T::lit(1e-10),
            abs: T::lit(1e-12),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions<T> {
    pub tolerances: Tolerances<T>,
    /// First trial step; chosen automatically when `None`.
    pub initial_step: Option<T>,
    pub max_step: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> Default for StepOptions<T> {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            initial_step: None,
            max_step: None,
            max_steps: 50_000_000,
        }
    }
}

impl<T: Real> From<Tolerances<T>> for StepOptions<T> {
    fn from(tolerances: Tolerances<T>) -> Self {
        Self {
            tolerances,
            ..Self::default()
        }
    }
}

struct Tableau<T> {
    c: [T; 7],
    a: [[T; 6]; 7],
    /// Fifth minus fourth order weights.
    e: [T; 7],
    /// Dense output weights.
    d: [T; 7],
}

impl<T: Real> Tableau<T> {
    fn new() -> Self {
        let l = T::lit;
        let z = T::zero();
        Self {
            c: [z, l(0.2), l(0.3), l(0.8), l(8.0 / 9.0), T::one(), T::one()],
            a: [
                [z; 6],
                [l(0.2), z, z, z, z, z],
                [l(3.0 / 40.0), l(9.0 / 40.0), z, z, z, z],
                [l(44.0 / 45.0), l(-56.0 / 15.0), l(32.0 / 9.0), z, z, z],
                [
                    l(19372.0 / 6561.0),
                    l(-25360.0 / 2187.0),
                    l(64448.0 / 6561.0),
                    l(-212.0 / 729.0),
                    z,
                    z,
                ],
                [
                    l(9017.0 / 3168.0),
                    l(-355.0 / 33.0),
                    l(46732.0 / 5247.0),
                    l(49.0 / 176.0),
                    l(-5103.0 / 18656.0),
                    z,
                ],
                [
                    l(35.0 / 384.0),
                    z,
                    l(500.0 / 1113.0),
                    l(125.0 / 192.0),
                    l(-2187.0 / 6784.0),
                    l(11.0 / 84.0),
                ],
            ],
            e: [
                l(71.0 / 57600.0),
                z,
                l(-71.0 / 16695.0),
                l(71.0 / 1920.0),
                l(-17253.0 / 339200.0),
                l(22.0 / 525.0),
                l(-1.0 / 40.0),
            ],
            d: [
                l(-12715105075.0 / 11282082432.0),
                z,
                l(87487479700.0 / 32700410799.0),
                l(-10690763975.0 / 1880347072.0),
                l(701980252875.0 / 199316789632.0),
                l(-1453857185.0 / 822651844.0),
                l(69997945.0 / 29380423.0),
            ],
        }
    }
}

/// Stepper over a right-hand side `f(t, y, dy)`.
///
/// After every accepted step, [`DormandPrince::dense`] interpolates inside
/// the last step `[t_prev, t]`.
pub struct DormandPrince<T: Real, F> {
    f: F,
    tab: Tableau<T>,
    opts: StepOptions<T>,
    t: T,
    t_prev: T,
    y: Vec<T>,
    h: T,
    k: [Vec<T>; 7],
    cont: [Vec<T>; 5],
    scratch: Vec<T>,
    y_new: Vec<T>,
    err_prev: T,
    steps: usize,
    rejected: usize,
}

impl<T: Real, F: FnMut(T, &[T], &mut [T])> DormandPrince<T, F> {
    pub fn new(mut f: F, t0: T, y0: Vec<T>, opts: StepOptions<T>) -> Result<Self, OdeError> {
        let n = y0.len();
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite { t: t0.as_f64() });
        }
        let zeros = || vec![T::zero(); n];
        let mut k = [zeros(), zeros(), zeros(), zeros(), zeros(), zeros(), zeros()];
        f(t0, &y0, &mut k[0]);
        let mut s = Self {
            f,
            tab: Tableau::new(),
            opts,
            t: t0,
            t_prev: t0,
            y: y0.clone(),
            h: T::zero(),
            k,
            cont: [y0, zeros(), zeros(), zeros(), zeros()],
            scratch: zeros(),
            y_new: zeros(),
            err_prev: T::lit(1e-4),
            steps: 0,
            rejected: 0,
        };
        s.h = match opts.initial_step {
            Some(h) => h,
            None => s.initial_step(),
        };
        Ok(s)
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn t_prev(&self) -> T {
        self.t_prev
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn accepted_steps(&self) -> usize {
        self.steps
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    fn scale(&self, a: T, b: T) -> T {
        let tol = self.opts.tolerances;
        tol.abs + tol.rel * a.abs().max(b.abs())
    }

    /// Hairer's starting step heuristic.
    fn initial_step(&mut self) -> T {
        let n = self.y.len();
        let nf = T::from_count(n.max(1) as u64);
        let mut dnf = T::zero();
        let mut dny = T::zero();
        for i in 0..n {
            let sk = self.scale(self.y[i], self.y[i]);
            dnf += (self.k[0][i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let (dnf, dny) = ((dnf / nf).sqrt(), (dny / nf).sqrt());
        let mut h = if dnf <= T::lit(1e-10) || dny <= T::lit(1e-10) {
            T::lit(1e-6)
        } else {
            T::lit(0.01) * dny / dnf
        };
        if let Some(hmax) = self.opts.max_step {
            h = h.min(hmax);
        }
        for i in 0..n {
            self.scratch[i] = self.y[i] + h * self.k[0][i];
        }
        let mut k2 = vec![T::zero(); n];
        (self.f)(self.t + h, &self.scratch, &mut k2);
        let mut der2 = T::zero();
        for i in 0..n {
            let sk = self.scale(self.y[i], self.y[i]);
            der2 += ((k2[i] - self.k[0][i]) / sk).powi(2);
        }
        let der2 = (der2 / nf).sqrt() / h;
        let der12 = der2.max(dnf);
        let h1 = if der12 <= T::lit(1e-15) {
            T::lit(1e-6).max(h * T::lit(1e-3))
        } else {
            (T::lit(0.01) / der12).powf(T::lit(0.2))
        };
        let mut h = (T::lit(100.0) * h).min(h1);
        if let Some(hmax) = self.opts.max_step {
            h = h.min(hmax);
        }
        h
    }

    /// Takes one accepted step without passing `t_limit`.
    pub fn step(&mut self, t_limit: T) -> Result<(), OdeError> {
        let n = self.y.len();
        let safe = T::lit(0.9);
        let beta = T::lit(0.04);
        let expo = T::lit(0.2) - beta * T::lit(0.75);
        let fac_min = T::lit(0.2);
        let fac_max = T::lit(10.0);
        let mut last_reject = false;
        loop {
            if self.steps + self.rejected >= self.opts.max_steps {
                return Err(OdeError::TooManySteps {
                    t: self.t.as_f64(),
                    max_steps: self.opts.max_steps,
                });
            }
            let remaining = t_limit - self.t;
            if remaining <= T::zero() {
                return Err(OdeError::InvalidInterval(format!(
                    "step requested past the limit {}",
                    t_limit.as_f64()
                )));
            }
            if let Some(hmax) = self.opts.max_step {
                self.h = self.h.min(hmax);
            }
            let mut h = self.h;
            let hits_limit = h >= remaining;
            if hits_limit {
                h = remaining;
            }
            if h.abs() <= T::lit(10.0) * T::epsilon() * self.t.abs().max(T::one()) {
                return Err(OdeError::StepUnderflow { t: self.t.as_f64() });
            }

            for s in 1..7 {
                for i in 0..n {
                    let mut acc = self.y[i];
                    for j in 0..s {
                        let a = self.tab.a[s][j];
                        if a != T::zero() {
                            acc += h * a * self.k[j][i];
                        }
                    }
                    self.scratch[i] = acc;
                }
                if s == 6 {
                    self.y_new.copy_from_slice(&self.scratch);
                }
                let ts = if s == 6 { self.t + h } else { self.t + self.tab.c[s] * h };
                let (head, tail) = self.k.split_at_mut(s);
                let _ = head;
                (self.f)(ts, &self.scratch, &mut tail[0]);
            }

            let mut err = T::zero();
            let mut finite = true;
            for i in 0..n {
                let mut e = T::zero();
                for s in 0..7 {
                    e += self.tab.e[s] * self.k[s][i];
                }
                e *= h;
                let sk = self.scale(self.y[i], self.y_new[i]);
                err += (e / sk).powi(2);
                finite &= self.y_new[i].is_finite();
            }
            let err = (err / T::from_count(n.max(1) as u64)).sqrt();
            if !finite || !err.is_finite() {
                if h.abs() < T::lit(1e-300).max(T::min_positive_value()) {
                    return Err(OdeError::NonFinite { t: self.t.as_f64() });
                }
                self.rejected += 1;
                self.h = h * fac_min;
                last_reject = true;
                if self.h.abs() <= T::lit(10.0) * T::epsilon() * self.t.abs().max(T::one()) {
                    return Err(OdeError::NonFinite { t: self.t.as_f64() });
                }
                continue;
            }

            let fac11 = err.powf(expo);
            if err <= T::one() {
                let mut fac = fac11 / self.err_prev.powf(beta);
                fac = (fac / safe).max(T::one() / fac_max).min(T::one() / fac_min);
                let mut h_new = h / fac;
                if last_reject {
                    h_new = h_new.min(h);
                }
                self.err_prev = err.max(T::lit(1e-4));

                // dense output coefficients for [t, t + h]
                for i in 0..n {
                    let ydiff = self.y_new[i] - self.y[i];
                    let bspl = h * self.k[0][i] - ydiff;
                    self.cont[0][i] = self.y[i];
                    self.cont[1][i] = ydiff;
                    self.cont[2][i] = bspl;
                    self.cont[3][i] = ydiff - h * self.k[6][i] - bspl;
                    let mut dsum = T::zero();
                    for s in 0..7 {
                        dsum += self.tab.d[s] * self.k[s][i];
                    }
                    self.cont[4][i] = h * dsum;
                }
                self.t_prev = self.t;
                self.t = if hits_limit { t_limit } else { self.t + h };
                std::mem::swap(&mut self.y, &mut self.y_new);
                let (first, rest) = self.k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                self.h = h_new;
                self.steps += 1;
                return Ok(());
            }
            self.rejected += 1;
            last_reject = true;
            self.h = h / (T::one() / fac_min).min(fac11 / safe);
        }
    }

    /// Interpolated state at `t` inside the last accepted step.
    pub fn dense(&self, t: T, out: &mut [T]) {
        let h = self.t - self.t_prev;
        let theta = if h == T::zero() { T::one() } else { (t - self.t_prev) / h };
        let theta1 = T::one() - theta;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.cont[0][i]
                + theta
                    * (self.cont[1][i]
                        + theta1 * (self.cont[2][i] + theta * (self.cont[3][i] + theta1 * self.cont[4][i])));
        }
    }

    /// Overwrites the current state (e.g. after renormalizing a tangent
    /// vector) and restarts the derivative at it.
    pub fn reset_state(&mut self, y: &[T]) {
        self.y.copy_from_slice(y);
        (self.f)(self.t, &self.y, &mut self.k[0]);
        self.t_prev = self.t;
        self.cont[0].copy_from_slice(y);
        for c in &mut self.cont[1..] {
            c.iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

/// Uniform sampling grid `t0, t0 + dt, …` up to `t_end` (inclusive when it
/// falls on the grid within rounding).
pub fn uniform_grid<T: Real>(t0: T, t_end: T, dt: T) -> Result<Vec<T>, OdeError> {
    if !(dt > T::zero()) || !(t_end >= t0) {
        return Err(OdeError::InvalidInterval(format!(
            "t0 = {}, t_end = {}, dt = {}",
            t0.as_f64(),
            t_end.as_f64(),
            dt.as_f64()
        )));
    }
    let count = ((t_end - t0) / dt + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
    Ok((0..=count).map(|i| t0 + dt * T::from_count(i as u64)).collect())
}

/// Integrates from `times[0]` and returns the state at every time in the
/// strictly increasing `times`, interpolated with the dense output.
pub fn integrate_at<T: Real, F: FnMut(T, &[T], &mut [T])>(
    f: F,
    y0: Vec<T>,
    times: &[T],
    opts: StepOptions<T>,
) -> Result<Vec<Vec<T>>, OdeError> {
    let Some(&t0) = times.first() else {
        return Ok(Vec::new());
    };
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(OdeError::InvalidInterval("sample times must increase strictly".into()));
    }
    let n = y0.len();
    let mut out = Vec::with_capacity(times.len());
    out.push(y0.clone());
    let t_end = *times.last().expect("non-empty");
    if times.len() == 1 {
        return Ok(out);
    }
    let mut stepper = DormandPrince::new(f, t0, y0, opts)?;
    let mut next = 1;
    while next < times.len() {
        stepper.step(t_end)?;
        while next < times.len() && times[next] <= stepper.t() {
            let mut y = vec![T::zero(); n];
            if times[next] == stepper.t() {
                y.copy_from_slice(stepper.y());
            } else {
                stepper.dense(times[next], &mut y);
            }
            out.push(y);
            next += 1;
        }
    }
    Ok(out)
}
