//! Continuous clockwise-angle unwinding of a planar path.
//!
//! With the convention (v1, v2) = (rho cos(nu), -rho sin(nu)) the angle is
//! nu = atan2(-v2, v1); a pure clockwise rotation of the vector increases
//! nu. Paths coming from a nonvanishing linear tangent system never pass
//! through the origin, so the raw angle can be unwound into a continuous
//! branch by keeping every sampling increment below pi/2 and refining the
//! sampling wherever that bound is violated.

use std::f64::consts::PI;

use super::IvpError;

/// Continuous angle along a path, sampled at monotone x values.
#[derive(Debug, Clone)]
pub struct AngleTrace {
    pub xs: Vec<f64>,
    pub nu: Vec<f64>,
}

impl AngleTrace {
    pub fn end(&self) -> f64 {
        *self.nu.last().expect("nonempty trace")
    }

    /// Linear interpolation between samples.
    pub fn at(&self, x: f64) -> f64 {
        let xs = &self.xs;
        if x <= xs[0] {
            return self.nu[0];
        }
        if x >= *xs.last().unwrap() {
            return self.end();
        }
        let i = xs.partition_point(|&v| v <= x) - 1;
        let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        self.nu[i] * (1.0 - t) + self.nu[i + 1] * t
    }

    /// Distance of the final angle to the nearest multiple of pi.
    pub fn end_margin_to_pi_grid(&self) -> f64 {
        let nu = self.end();
        let k = (nu / PI).round();
        (nu - k * PI).abs()
    }
}

fn raw_angle(v: (f64, f64)) -> f64 {
    (-v.1).atan2(v.0)
}

fn wrap_to_half_turn(d: f64) -> f64 {
    let mut d = d % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

const INITIAL_SAMPLES: usize = 128;
const MAX_DEPTH: u32 = 40;

/// Unwind the clockwise angle of `path` over [x0, x1].
///
/// The returned trace starts on the branch containing atan2, i.e.
/// nu(x0) in (-pi, pi], and is continuous: consecutive samples differ by
/// less than pi/2, with adaptive bisection of the sampling wherever the
/// path turns faster.
pub fn unwind_angle<F>(path: F, x0: f64, x1: f64) -> Result<AngleTrace, IvpError>
where
    F: Fn(f64) -> (f64, f64),
{
    assert!(x1 > x0, "empty interval");
    let mut max_mag: f64 = 0.0;
    let mut probe = |x: f64| -> Result<(f64, f64), IvpError> {
        let v = path(x);
        let mag = v.0.hypot(v.1);
        max_mag = max_mag.max(mag);
        if !mag.is_finite() || mag < 1e-12 * max_mag.max(1e-290) {
            return Err(IvpError::PathVanishes { x });
        }
        Ok(v)
    };

    let mut xs = Vec::with_capacity(INITIAL_SAMPLES + 1);
    let mut nu = Vec::with_capacity(INITIAL_SAMPLES + 1);
    let v0 = probe(x0)?;
    xs.push(x0);
    nu.push(raw_angle(v0));

    // stack of pending (x, raw_angle) targets, refined in place
    struct Frame {
        x: f64,
        raw: f64,
        depth: u32,
    }
    let mut pending: Vec<Frame> = Vec::new();
    for i in (1..=INITIAL_SAMPLES).rev() {
        let x = x0 + (x1 - x0) * i as f64 / INITIAL_SAMPLES as f64;
        let raw = raw_angle(probe(x)?);
        pending.push(Frame { x, raw, depth: 0 });
    }

    while let Some(frame) = pending.pop() {
        let cur_x = *xs.last().unwrap();
        let cur_nu = *nu.last().unwrap();
        let delta = wrap_to_half_turn(frame.raw - wrap_to_half_turn(cur_nu));
        if delta.abs() < PI / 2.0 {
            xs.push(frame.x);
            nu.push(cur_nu + delta);
        } else {
            if frame.depth >= MAX_DEPTH {
                return Err(IvpError::AngleStep { x: frame.x });
            }
            let mid = 0.5 * (cur_x + frame.x);
            let raw_mid = raw_angle(probe(mid)?);
            pending.push(Frame {
                depth: frame.depth + 1,
                ..frame
            });
            pending.push(Frame {
                x: mid,
                raw: raw_mid,
                depth: frame.depth + 1,
            });
        }
    }

    Ok(AngleTrace { xs, nu })
}
