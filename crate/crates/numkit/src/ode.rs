//! Adaptive Dormand-Prince 5(4) integration with stop predicates.
//!
//! The stepper records every accepted step together with the derivative,
//! so callers can build C^1 dense output (cubic or quintic Hermite) from
//! the sample list. Integration direction follows the sign of
//! `t_end - t0`. A control callback inspects each accepted sample and may
//! stop the run early with a reason string; this is how shooting code
//! detects sonic-set crossings or barrier violations without baking any
//! domain knowledge into the stepper.

use thiserror::Error;

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step magnitude; estimated from the derivative when None.
    pub h_init: Option<f64>,
    /// Maximum step magnitude.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-12, h_init: None, h_max: f64::INFINITY, max_steps: 2_000_000 }
    }
}

/// One accepted step: state and derivative at time t.
#[derive(Debug, Clone)]
pub struct OdeSample {
    pub t: f64,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
}

/// Decision returned by the step control callback.
pub enum StepOutcome {
    Continue,
    /// Stop integration and report the reason to the caller.
    Stop(String),
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t:.6e}")]
    StepUnderflow { t: f64 },
    #[error("step budget exhausted at t = {t:.6e}")]
    MaxSteps { t: f64 },
    #[error("non-finite state at t = {t:.6e}")]
    NonFinite { t: f64 },
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate dy/dt = f(t, y) from t0 to t_end.
///
/// Returns the accepted samples (first entry is the initial state) and the
/// stop reason if the control callback ended the run early. The final
/// sample lands exactly on t_end unless stopped.
pub fn dopri5<F, G>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    mut ctrl: G,
) -> Result<(Vec<OdeSample>, Option<String>), OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: FnMut(&OdeSample) -> StepOutcome,
{
    let dim = y0.len();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut dy = vec![0.0; dim];
    f(t, &y, &mut dy);

    let mut samples = Vec::new();
    let first = OdeSample { t, y: y.clone(), dy: dy.clone() };
    match ctrl(&first) {
        StepOutcome::Stop(reason) => {
            samples.push(first);
            return Ok((samples, Some(reason)));
        }
        StepOutcome::Continue => samples.push(first),
    }
    if span == 0.0 {
        return Ok((samples, None));
    }

    let mut h = opts.h_init.unwrap_or_else(|| {
        let dnorm = dy.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let ynorm = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let scale = (ynorm + opts.atol) / (dnorm + 1e-30);
        (1e-3 * scale).min(span / 10.0).max(span * 1e-12)
    });
    h = h.min(opts.h_max).min(span);

    let mut k = vec![vec![0.0; dim]; 7];
    k[0].copy_from_slice(&dy);
    let mut steps = 0usize;

    loop {
        if steps >= opts.max_steps {
            return Err(OdeError::MaxSteps { t });
        }
        steps += 1;

        let remaining = (t_end - t).abs();
        if h > remaining {
            h = remaining;
        }
        let hs = dir * h;

        // Stages (FSAL: k[0] already holds f(t, y)).
        let mut ytmp = vec![0.0; dim];
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                ytmp[i] = y[i] + hs * acc;
            }
            let ts = t + C[s] * hs;
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            f(ts, &ytmp, &mut tail[0]);
        }

        // 5th order solution and embedded error estimate.
        let mut ynew = vec![0.0; dim];
        let mut errnorm = 0.0f64;
        for i in 0..dim {
            let mut acc5 = 0.0;
            let mut acc4 = 0.0;
            for (j, kj) in k.iter().enumerate() {
                if B5[j] != 0.0 {
                    acc5 += B5[j] * kj[i];
                }
                if B4[j] != 0.0 {
                    acc4 += B4[j] * kj[i];
                }
            }
            ynew[i] = y[i] + hs * acc5;
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            let e = hs * (acc5 - acc4) / sc;
            errnorm += e * e;
        }
        errnorm = (errnorm / dim as f64).sqrt();

        if !errnorm.is_finite() || !ynew.iter().all(|v| v.is_finite()) {
            h *= 0.25;
            if h < 1e-14 * (t.abs() + 1.0) {
                return Err(OdeError::NonFinite { t });
            }
            // re-seed first stage and retry
            f(t, &y, &mut k[0]);
            continue;
        }

        if errnorm <= 1.0 {
            // accept
            t += hs;
            y.copy_from_slice(&ynew);
            let klast = k[6].clone();
            k[0].copy_from_slice(&klast);
            let sample = OdeSample { t, y: y.clone(), dy: klast };
            let decision = ctrl(&sample);
            samples.push(sample);
            if let StepOutcome::Stop(reason) = decision {
                return Ok((samples, Some(reason)));
            }
            if (t_end - t).abs() <= 1e-14 * (t.abs() + t_end.abs() + 1.0) {
                return Ok((samples, None));
            }
            let factor = if errnorm == 0.0 { 5.0 } else { (0.9 * errnorm.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * factor).min(opts.h_max);
        } else {
            let factor = (0.9 * errnorm.powf(-0.2)).clamp(0.1, 0.9);
            h *= factor;
            if h < 1e-16 * (t.abs() + 1.0) {
                return Err(OdeError::StepUnderflow { t });
            }
        }
    }
}
