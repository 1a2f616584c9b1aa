//! Particle tracking through a face velocity field.

use alloc::format;

use super::VelocityField;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrackingOptions {
    /// Integration stops here; the particle is then reported as censored.
    pub t_cap: f64,
    /// Step length as a fraction of the cell width at the local speed.
    pub step_fraction: f64,
    /// The step never exceeds `t_cap / min_divisions`.
    pub min_divisions: f64,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        Self {
            t_cap: 100.0,
            step_fraction: 0.1,
            min_divisions: 1e6,
        }
    }
}

/// First time the particle reaches `x = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hitting {
    pub time: f64,
    /// The particle had not left by `t_cap`; `time` equals `t_cap`.
    pub censored: bool,
    pub steps: usize,
}

const MAX_STEPS: usize = 100_000_000;

/// Integrates `dx/dt = v(x)` with classical RK4 from `start`.
pub fn hitting_time(v: &VelocityField, start: [f64; 2], opts: &TrackingOptions) -> Result<Hitting> {
    if !(opts.t_cap > 0.0 && opts.step_fraction > 0.0 && opts.min_divisions >= 1.0) {
        return Err(Error::invalid(format!("tracking options {opts:?}")));
    }
    if !(0.0..=1.0).contains(&start[0]) || !(0.0..=1.0).contains(&start[1]) {
        return Err(Error::domain(
            "hitting_time",
            format!("start {start:?} outside the unit square"),
        ));
    }
    let h = v.grid.h();
    let max_dt = opts.t_cap / opts.min_divisions;
    let field = |p: [f64; 2]| -> Result<[f64; 2]> {
        let u = v.sample(p[0], p[1]);
        if u[0].is_nan() || u[1].is_nan() {
            return Err(Error::Integration(format!("velocity is NaN at {p:?}")));
        }
        Ok(u)
    };
    let mut x = start;
    let mut t = 0.0;
    for steps in 0..MAX_STEPS {
        if t >= opts.t_cap {
            return Ok(Hitting {
                time: opts.t_cap,
                censored: true,
                steps,
            });
        }
        let k1 = field(x)?;
        let speed = libm::hypot(k1[0], k1[1]);
        let mut dt = if speed > 0.0 {
            (opts.step_fraction * h / speed).min(max_dt)
        } else {
            max_dt
        };
        dt = dt.min(opts.t_cap - t);
        let k2 = field([x[0] + 0.5 * dt * k1[0], x[1] + 0.5 * dt * k1[1]])?;
        let k3 = field([x[0] + 0.5 * dt * k2[0], x[1] + 0.5 * dt * k2[1]])?;
        let k4 = field([x[0] + dt * k3[0], x[1] + dt * k3[1]])?;
        let next = [
            x[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        if next[0] >= 1.0 {
            let frac = (1.0 - x[0]) / (next[0] - x[0]);
            return Ok(Hitting {
                time: t + frac * dt,
                censored: false,
                steps: steps + 1,
            });
        }
        // the walls are sealed, so anything past them is interpolation error
        x = [next[0].max(0.0), next[1].clamp(0.0, 1.0)];
        t += dt;
    }
    Err(Error::Integration(format!("no exit after {MAX_STEPS} steps")))
}
