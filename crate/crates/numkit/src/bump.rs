//! Smooth cutoffs and compactly supported test bumps.
//!
//! Two transition shapes are used deliberately: a C-infinity exponential
//! step for the physical-space cutoffs (where infinite smoothness
//! matters), and a C^3 polynomial smoothstep where a cheap fixed
//! polynomial transition is wanted.

/// exp(1 - 1/(1-s^2)) on |s| < 1, zero outside; equals 1 at s = 0.
pub fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// C-infinity monotone step: 0 for y <= 0, 1 for y >= 1.
pub fn step_smooth(y: f64) -> f64 {
    let e = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let a = e(y);
    let b = e(1.0 - y);
    a / (a + b)
}

/// C-infinity plateau cutoff: 1 on (-inf, a], 0 on [b, inf), a < b.
pub fn cutoff_smooth(x: f64, a: f64, b: f64) -> f64 {
    debug_assert!(a < b);
    step_smooth((b - x) / (b - a))
}

/// C^3 polynomial smoothstep: 0 for y <= 0, 1 for y >= 1,
/// y^4 (35 - 84 y + 70 y^2 - 20 y^3) in between.
pub fn smoothstep7(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else if y >= 1.0 {
        1.0
    } else {
        y * y * y * y * (35.0 - 84.0 * y + 70.0 * y * y - 20.0 * y * y * y)
    }
}

/// Polynomial plateau cutoff rising from 0 at a to 1 at b (a < b).
pub fn smoothstep_rise(x: f64, a: f64, b: f64) -> f64 {
    smoothstep7((x - a) / (b - a))
}

/// Compactly supported C-infinity bump with analytic derivatives,
/// amp * exp(1 - 1/(1-s^2)) with s = (x-center)/halfwidth.
#[derive(Debug, Clone, Copy)]
pub struct SmoothBump {
    pub center: f64,
    pub halfwidth: f64,
    pub amp: f64,
}

impl SmoothBump {
    pub fn value(&self, x: f64) -> f64 {
        let s = (x - self.center) / self.halfwidth;
        self.amp * bump(s)
    }

    /// (value, d/dx, d2/dx2); all vanish identically outside the support.
    pub fn jet2(&self, x: f64) -> (f64, f64, f64) {
        let s = (x - self.center) / self.halfwidth;
        if s.abs() >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let u = 1.0 - s * s;
        let f = self.amp * (1.0 - 1.0 / u).exp();
        // g(s) = d/ds log f = -2 s / u^2
        let g = -2.0 * s / (u * u);
        let gp = -2.0 / (u * u) - 8.0 * s * s / (u * u * u);
        let d1 = f * g / self.halfwidth;
        let d2 = f * (g * g + gp) / (self.halfwidth * self.halfwidth);
        (f, d1, d2)
    }
}
