//! Embedded Dormand–Prince 5(4) stepper with mixed absolute/relative error
//! control.
//!
//! The stepper only advances one accepted step at a time. Callers own the
//! integration loop so they can renormalize, switch charts or stop on events
//! between steps.

/// Right-hand side of `y' = f(t, y)` on a fixed-size state.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];
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

// Fifth-order weights (also row 7 of the tableau).
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// Difference between fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepError {
    /// Step size fell below the configured minimum.
    Underflow { t: f64, h: f64 },
    /// The right-hand side produced a non-finite value.
    NonFinite { t: f64 },
}

/// Adaptive driver state: tolerances, current step size and statistics.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub atol: f64,
    pub rtol: f64,
    pub h_min: f64,
    pub h_max: f64,
    h: f64,
    pub accepted: usize,
    pub rejected: usize,
}

fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += acc;
    }
    out
}

impl Stepper {
    pub fn new(tol: f64, h_initial: f64, h_max: f64) -> Self {
        Stepper {
            atol: tol,
            rtol: tol,
            h_min: 1e-14,
            h_max,
            h: h_initial.min(h_max),
            accepted: 0,
            rejected: 0,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn set_step_size(&mut self, h: f64) {
        self.h = h.min(self.h_max);
    }

    /// One trial step of size `h`; returns the fifth-order solution and the
    /// scaled error norm (accept when <= 1).
    pub fn trial<S: OdeSystem<N>, const N: usize>(
        &self,
        sys: &S,
        t: f64,
        y: &[f64; N],
        h: f64,
    ) -> ([f64; N], f64) {
        let k1 = sys.rhs(t, y);
        let y2 = axpy(y, &[(h * A21, &k1)]);
        let k2 = sys.rhs(t + C2 * h, &y2);
        let y3 = axpy(y, &[(h * A31, &k1), (h * A32, &k2)]);
        let k3 = sys.rhs(t + C3 * h, &y3);
        let y4 = axpy(y, &[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)]);
        let k4 = sys.rhs(t + C4 * h, &y4);
        let y5 = axpy(
            y,
            &[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)],
        );
        let k5 = sys.rhs(t + C5 * h, &y5);
        let y6 = axpy(
            y,
            &[
                (h * A61, &k1),
                (h * A62, &k2),
                (h * A63, &k3),
                (h * A64, &k4),
                (h * A65, &k5),
            ],
        );
        let k6 = sys.rhs(t + h, &y6);
        let y_new = axpy(
            y,
            &[(h * B1, &k1), (h * B3, &k3), (h * B4, &k4), (h * B5, &k5), (h * B6, &k6)],
        );
        let k7 = sys.rhs(t + h, &y_new);

        let mut err_sq = 0.0;
        for i in 0..N {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        (y_new, (err_sq / N as f64).sqrt())
    }

    /// Advance by one accepted step, never stepping past `t_limit`.
    pub fn advance<S: OdeSystem<N>, const N: usize>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64; N],
        t_limit: Option<f64>,
    ) -> Result<(f64, [f64; N]), StepError> {
        loop {
            let mut h = self.h.min(self.h_max);
            let mut clipped = false;
            if let Some(limit) = t_limit {
                if t + h >= limit {
                    h = limit - t;
                    clipped = true;
                }
            }
            if h < self.h_min && !clipped {
                return Err(StepError::Underflow { t, h });
            }
            let (y_new, err) = self.trial(sys, t, y, h);
            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                self.rejected += 1;
                self.h = h * 0.25;
                if self.h < self.h_min {
                    return Err(StepError::NonFinite { t });
                }
                continue;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                self.accepted += 1;
                // A clipped final step says nothing about the natural step size.
                if !clipped || factor < 1.0 {
                    self.h = (h * factor).min(self.h_max);
                }
                let t_new = if clipped { t_limit.unwrap() } else { t + h };
                return Ok((t_new, y_new));
            }
            self.rejected += 1;
            self.h = h * factor.min(1.0);
        }
    }
}
