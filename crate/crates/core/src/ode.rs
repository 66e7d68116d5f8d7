//! Explicit Runge-Kutta integrators for `dy/dt = f(t, y)` on flat buffers.
//!
//! [`Dopri5`] is the adaptive Dormand-Prince 5(4) pair; [`rk4`] is a
//! fixed-step classical Runge-Kutta kept for cross-checks.

use std::ops::{Add, Mul};

use num_complex::Complex64 as C64;

use crate::error::{invalid, numeric, Result};

/// Field element a state vector is made of.
pub trait Component: Copy + Default + Add<Output = Self> + Mul<f64, Output = Self> {
    fn magnitude(self) -> f64;
}

impl Component for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Component for C64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Step-size control for [`Dopri5`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; picked from the derivative scale when `None`.
    pub h_init: Option<f64>,
    /// Smallest step, relative to the current time scale, before giving up.
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-9,
            h_init: None,
            h_min: 1e-14,
            max_steps: 5_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combine<T: Component>(out: &mut [T], y: &[T], h: f64, terms: &[(f64, &[T])]) {
    for (n, o) in out.iter_mut().enumerate() {
        let mut acc = T::default();
        for (c, k) in terms {
            if *c != 0.0 {
                acc = acc + k[n] * *c;
            }
        }
        *o = y[n] + acc * h;
    }
}

/// Adaptive Dormand-Prince 5(4) integrator with FSAL.
pub struct Dopri5<T, F> {
    f: F,
    opts: OdeOptions,
    t: f64,
    y: Vec<T>,
    dy: Vec<T>,
    h: f64,
    steps: usize,
    k: [Vec<T>; 6],
    tmp: Vec<T>,
}

impl<T: Component, F: FnMut(f64, &[T], &mut [T])> Dopri5<T, F> {
    pub fn new(mut f: F, t0: f64, y0: Vec<T>, opts: OdeOptions) -> Result<Self> {
        if !(opts.rtol > 0.0 && opts.atol >= 0.0) {
            return Err(invalid("tolerances must be positive"));
        }
        let n = y0.len();
        let mut dy = vec![T::default(); n];
        f(t0, &y0, &mut dy);
        let h = match opts.h_init {
            Some(h) => h,
            None => {
                let scale = |v: &T, y: &T| v.magnitude() / (opts.atol + opts.rtol * y.magnitude());
                let d0 = y0.iter().zip(&y0).map(|(a, b)| scale(a, b).powi(2)).sum::<f64>().sqrt();
                let d1 = dy.iter().zip(&y0).map(|(a, b)| scale(a, b).powi(2)).sum::<f64>().sqrt();
                if d0 < 1e-5 || d1 < 1e-5 {
                    1e-6
                } else {
                    0.01 * d0 / d1
                }
            }
        };
        Ok(Dopri5 {
            f,
            opts,
            t: t0,
            y: y0,
            dy,
            h,
            steps: 0,
            k: std::array::from_fn(|_| vec![T::default(); n]),
            tmp: vec![T::default(); n],
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    /// Derivative at the current point.
    pub fn dy(&self) -> &[T] {
        &self.dy
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One accepted step, never past `t_stop`.
    pub fn step(&mut self, t_stop: f64) -> Result<()> {
        let n = self.y.len();
        loop {
            if self.steps >= self.opts.max_steps {
                return Err(numeric(format!("exceeded {} integration steps at t = {}", self.opts.max_steps, self.t)));
            }
            let remaining = t_stop - self.t;
            let mut h = self.h.min(remaining);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            let h_floor = self.opts.h_min * self.t.abs().max(1.0);
            if !last && h < h_floor {
                return Err(numeric(format!("step size underflow (h = {h:e}) at t = {}", self.t)));
            }
            let (t, f) = (self.t, &mut self.f);
            let [k2, k3, k4, k5, k6, k7] = &mut self.k;
            let y = &self.y;
            let k1 = &self.dy;
            let tmp = &mut self.tmp;
            combine(tmp, y, h, &[(A21, k1)]);
            f(t + C2 * h, tmp, k2);
            combine(tmp, y, h, &[(A31, k1), (A32, k2)]);
            f(t + C3 * h, tmp, k3);
            combine(tmp, y, h, &[(A41, k1), (A42, k2), (A43, k3)]);
            f(t + C4 * h, tmp, k4);
            combine(tmp, y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]);
            f(t + C5 * h, tmp, k5);
            combine(tmp, y, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]);
            f(t + h, tmp, k6);
            // tmp becomes the 5th-order solution
            combine(tmp, y, h, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
            f(t + h, tmp, k7);
            let mut err = 0.0;
            for i in 0..n {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
                let sc = self.opts.atol + self.opts.rtol * y[i].magnitude().max(tmp[i].magnitude());
                let r = e.magnitude() / sc;
                err += r * r;
            }
            let err = (err / n.max(1) as f64).sqrt();
            self.steps += 1;
            if !err.is_finite() {
                self.h = h * 0.1;
                if self.h < h_floor {
                    return Err(numeric(format!("non-finite derivative at t = {}", self.t)));
                }
                continue;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                self.t = if last { t_stop } else { t + h };
                std::mem::swap(&mut self.y, &mut self.tmp);
                std::mem::swap(&mut self.dy, &mut self.k[5]);
                // keep the proposed step unless it was clipped by t_stop
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
                return Ok(());
            }
            self.h = h * factor.min(1.0);
        }
    }

    /// Integrates up to `t_end` exactly.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        while self.t < t_end {
            self.step(t_end)?;
        }
        Ok(())
    }
}

/// Integrates `y0` and returns the state at each time in `times` (ascending, starting at `t0` or later).
pub fn solve_at<T: Component, F: FnMut(f64, &[T], &mut [T])>(
    f: F,
    t0: f64,
    y0: Vec<T>,
    times: &[f64],
    opts: OdeOptions,
) -> Result<Vec<Vec<T>>> {
    let mut s = Dopri5::new(f, t0, y0, opts)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t < s.t() {
            return Err(invalid("output times must be ascending"));
        }
        s.advance_to(t)?;
        out.push(s.y().to_vec());
    }
    Ok(out)
}

/// Fixed-step classical RK4 from `t0` to `t1`; `t1 < t0` integrates backwards.
pub fn rk4<T: Component, F: FnMut(f64, &[T], &mut [T])>(mut f: F, t0: f64, y0: &[T], t1: f64, steps: usize) -> Vec<T> {
    let n = y0.len();
    let h = (t1 - t0) / steps.max(1) as f64;
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![T::default(); n], vec![T::default(); n], vec![T::default(); n], vec![T::default(); n]);
    let mut tmp = vec![T::default(); n];
    for s in 0..steps.max(1) {
        let t = t0 + s as f64 * h;
        f(t, &y, &mut k1);
        combine(&mut tmp, &y, 0.5 * h, &[(1.0, &k1)]);
        f(t + 0.5 * h, &tmp, &mut k2);
        combine(&mut tmp, &y, 0.5 * h, &[(1.0, &k2)]);
        f(t + 0.5 * h, &tmp, &mut k3);
        combine(&mut tmp, &y, h, &[(1.0, &k3)]);
        f(t + h, &tmp, &mut k4);
        let y_old = y.clone();
        combine(&mut y, &y_old, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)]);
    }
    y
}
