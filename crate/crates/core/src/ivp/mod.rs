//! Adaptive initial-value integration over x in [0, x_end] with dense
//! output, plus continuous unwinding of the clockwise angle of planar paths.
//!
//! The integrator is the Dormand-Prince embedded 5(4) pair with PI step-size
//! control and the standard 4th-order continuous extension. Fields here are
//! smooth and non-stiff in x, so an explicit pair is the right tool.

mod angle;

pub use angle::{unwind_angle, AngleTrace};

/// Failure raised by a vector field callback during integration.
#[derive(Debug, Clone, thiserror::Error)]
pub enum FieldError {
    #[error("diffusion coefficient not strictly positive (a = {a})")]
    Parabolicity { a: f64 },
    #[error("{0}")]
    Domain(String),
    #[error("field produced a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum IvpError {
    /// State norm exceeded the configured bound before the right endpoint.
    /// Shooting orbits of dissipative problems stay bounded, so this is
    /// reported to the caller instead of being clamped.
    #[error("solution blew up at x = {x:.6} (|y| = {norm:.3e})")]
    BlowUp { x: f64, norm: f64 },
    #[error("step size underflow at x = {x:.6}")]
    StepUnderflow { x: f64 },
    #[error("field failed at x = {x:.6}: {error}")]
    Field { x: f64, error: FieldError },
    #[error("path magnitude vanished at x = {x:.6}")]
    PathVanishes { x: f64 },
    #[error("angle step bound could not be met near x = {x:.6}")]
    AngleStep { x: f64 },
}

/// One accepted step together with the dense-output coefficients on it.
#[derive(Debug, Clone)]
struct Segment {
    x0: f64,
    h: f64,
    /// 5 * dim coefficients of the quartic interpolant.
    cont: Vec<f64>,
}

/// Dense solution of an initial-value problem on [0, x_end]. Immutable
/// after construction; evaluation is borrow-only and thread-safe.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    dim: usize,
    segments: Vec<Segment>,
    x_end: f64,
    y_end: Vec<f64>,
    /// Largest scaled local error estimate among accepted steps.
    pub achieved_error: f64,
}

impl OdeSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x_end(&self) -> f64 {
        self.x_end
    }

    pub fn end_state(&self) -> &[f64] {
        &self.y_end
    }

    fn segment_at(&self, x: f64) -> &Segment {
        let mut lo = 0usize;
        let mut hi = self.segments.len() - 1;
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.segments[mid].x0 <= x {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        &self.segments[lo]
    }

    /// Evaluate the interpolant at `x` into `out`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert!((-1e-9..=self.x_end + 1e-9).contains(&x), "x out of range");
        let x = x.clamp(0.0, self.x_end);
        let seg = self.segment_at(x);
        let theta = ((x - seg.x0) / seg.h).clamp(0.0, 1.0);
        let th1 = 1.0 - theta;
        let n = self.dim;
        for i in 0..n {
            let c = &seg.cont[i * 5..i * 5 + 5];
            out[i] = c[0] + theta * (c[1] + th1 * (c[2] + theta * (c[3] + th1 * c[4])));
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval_component(&self, x: f64, i: usize) -> f64 {
        let x = x.clamp(0.0, self.x_end);
        let seg = self.segment_at(x);
        let theta = ((x - seg.x0) / seg.h).clamp(0.0, 1.0);
        let th1 = 1.0 - theta;
        let c = &seg.cont[i * 5..i * 5 + 5];
        c[0] + theta * (c[1] + th1 * (c[2] + theta * (c[3] + th1 * c[4])))
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
// Coefficients of the 4th-order continuous extension.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Debug, Clone)]
pub struct Integrator {
    pub rtol: f64,
    pub atol: f64,
    /// Norm bound triggering [`IvpError::BlowUp`].
    pub max_norm: f64,
    pub max_steps: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator {
            rtol: 1e-10,
            atol: 1e-12,
            max_norm: 1e8,
            max_steps: 1_000_000,
        }
    }
}

impl Integrator {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Integrator {
            rtol,
            atol,
            ..Integrator::default()
        }
    }

    /// Integrate y' = field(x, y) from y0 at x = 0 up to x_end.
    pub fn integrate<F>(
        &self,
        mut field: F,
        y0: &[f64],
        x_end: f64,
    ) -> Result<OdeSolution, IvpError>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), FieldError>,
    {
        let n = y0.len();
        let mut y = y0.to_vec();
        let mut x = 0.0f64;
        let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
        let mut y_stage = vec![0.0; n];
        let mut y_new = vec![0.0; n];

        let eval = |field: &mut F, x: f64, y: &[f64], out: &mut [f64]| -> Result<(), IvpError> {
            field(x, y, out).map_err(|error| IvpError::Field { x, error })?;
            if out.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(IvpError::Field {
                    x,
                    error: FieldError::NonFinite,
                })
            }
        };

        eval(&mut field, x, &y, &mut k[0])?;

        // initial step: conservative fraction of the interval, the
        // controller adapts within a few steps
        let mut h = (x_end / 100.0).clamp(1e-6, 1e-2);
        let mut facold: f64 = 1e-4;
        let mut segments: Vec<Segment> = Vec::new();
        let mut achieved = 0.0f64;

        const SAFETY: f64 = 0.9;
        const BETA: f64 = 0.04;
        const EXPO1: f64 = 0.2 - BETA * 0.75;

        let mut steps = 0usize;
        while x < x_end {
            steps += 1;
            if steps > self.max_steps {
                return Err(IvpError::StepUnderflow { x });
            }
            if h < 1e-14 * (1.0 + x.abs()) {
                let norm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                return if norm > 0.5 * self.max_norm {
                    Err(IvpError::BlowUp { x, norm })
                } else {
                    Err(IvpError::StepUnderflow { x })
                };
            }
            if x + h > x_end {
                h = x_end - x;
            }

            let mut stage_failed = false;
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        let a = A[s - 1][j];
                        if a != 0.0 {
                            acc += a * kj[i];
                        }
                    }
                    y_stage[i] = y[i] + h * acc;
                }
                match eval(&mut field, x + C[s] * h, &y_stage, &mut k[s]) {
                    Ok(()) => {}
                    Err(IvpError::Field {
                        error: FieldError::NonFinite,
                        ..
                    }) => {
                        // state escaping to infinity inside a trial step:
                        // retry with a smaller one before giving up
                        stage_failed = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if stage_failed {
                h *= 0.25;
                continue;
            }
            // stage 7 is evaluated at the 5th-order result itself (FSAL),
            // so y_stage now holds the candidate state
            y_new.copy_from_slice(&y_stage);

            // scaled error norm
            let mut err = 0.0f64;
            for i in 0..n {
                let e: f64 = (0..7).map(|s| (B5[s] - B4[s]) * k[s][i]).sum();
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err += (h * e / sc).powi(2);
            }
            err = (err / n as f64).sqrt();

            if !err.is_finite() {
                h *= 0.25;
                continue;
            }

            if err <= 1.0 {
                // accept: build the dense-output coefficients
                let mut cont = vec![0.0; 5 * n];
                for i in 0..n {
                    let ydiff = y_new[i] - y[i];
                    let bspl = h * k[0][i] - ydiff;
                    let c = &mut cont[i * 5..i * 5 + 5];
                    c[0] = y[i];
                    c[1] = ydiff;
                    c[2] = bspl;
                    c[3] = ydiff - h * k[6][i] - bspl;
                    c[4] = h * (0..7).map(|s| D[s] * k[s][i]).sum::<f64>();
                }
                segments.push(Segment { x0: x, h, cont });
                achieved = achieved.max(err * self.rtol);

                x += h;
                std::mem::swap(&mut y, &mut y_new);
                let norm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if norm > self.max_norm {
                    return Err(IvpError::BlowUp { x, norm });
                }
                k.swap(0, 6); // FSAL

                let fac = (err.powf(EXPO1) / facold.powf(BETA) / SAFETY).clamp(0.1, 5.0);
                facold = err.max(1e-4);
                h /= fac;
            } else {
                let fac = (err.powf(0.2) / SAFETY).clamp(1.0, 10.0);
                h /= fac;
            }
        }

        if segments.is_empty() {
            // zero-length interval: degenerate constant segment
            let mut cont = vec![0.0; 5 * n];
            for i in 0..n {
                cont[i * 5] = y[i];
            }
            segments.push(Segment {
                x0: 0.0,
                h: 1.0,
                cont,
            });
        }

        Ok(OdeSolution {
            dim: n,
            segments,
            x_end,
            y_end: y,
            achieved_error: achieved,
        })
    }
}

/// Fixed-step classical RK4 integration. This is the brute-force oracle the
/// tests compare the adaptive pair against; it has no error control.
pub fn rk4_fixed<F>(mut field: F, y0: &[f64], x_end: f64, steps: usize) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let h = x_end / steps as f64;
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for s in 0..steps {
        let x = s as f64 * h;
        field(x, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        field(x + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        field(x + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        field(x + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

#[cfg(test)]
mod tests;
