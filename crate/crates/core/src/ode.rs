//! Explicit Runge-Kutta integrators on fixed-size real state vectors.
//!
//! [`dopri5`] is the Dormand-Prince 5(4) pair with PI step-size control and
//! the continuous extension of Hairer & Wanner, used for every closed
//! (unitary) evolution. [`rk4_step`] is the classical fixed-step scheme used
//! by the dissipative solver.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
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

// 5th-order minus embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Error-control settings for [`dopri5`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on the step; `None` means the full interval.
    pub max_step: Option<f64>,
}

impl AdaptiveOptions {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerances must be positive (rtol = {}, atol = {})",
                self.rtol, self.atol
            )));
        }
        Ok(())
    }
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 50_000_000,
            max_step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        if *c == 0.0 {
            continue;
        }
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

fn scaled_norm<const N: usize>(
    v: &[f64; N],
    y0: &[f64; N],
    y1: &[f64; N],
    o: &AdaptiveOptions,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = o.atol + o.rtol * y0[i].abs().max(y1[i].abs());
        acc += (v[i] / sc).powi(2);
    }
    (acc / N as f64).sqrt()
}

fn initial_step<const N: usize, F>(
    f: &mut F,
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    span: f64,
    o: &AdaptiveOptions,
) -> f64
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let zero = [0.0; N];
    let dnf = scaled_norm(f0, y0, &zero, o);
    let dny = scaled_norm(y0, y0, &zero, o);
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        0.01 * dny / dnf
    };
    h = h.min(span);
    let y1 = axpy(y0, h, &[(1.0, f0)]);
    let f1 = f(t0 + h, &y1);
    let diff: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let der2 = scaled_norm(&diff, y0, &zero, o) / h;
    let der12 = dnf.max(der2);
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(span)
}

/// Integrates y' = f(t, y) from `t0` and returns y at each of `sample_times`.
///
/// `sample_times` must be non-decreasing and ≥ `t0`; the state is reported by
/// the 4th-order continuous extension between accepted steps.
pub fn dopri5<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    sample_times: &[f64],
    opts: &AdaptiveOptions,
) -> Result<(Vec<[f64; N]>, StepStats)>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    opts.check()?;
    if let Some(bad) = sample_times.iter().find(|&&s| s < t0 || !s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sample time {bad} precedes the initial time {t0}"
        )));
    }
    if sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("sample times must be sorted".into()));
    }

    let mut out = Vec::with_capacity(sample_times.len());
    let mut stats = StepStats::default();
    let mut next = 0;
    while next < sample_times.len() && sample_times[next] == t0 {
        out.push(y0);
        next += 1;
    }
    let Some(&t_end) = sample_times.last() else {
        return Ok((out, stats));
    };
    if next == sample_times.len() {
        return Ok((out, stats));
    }

    let span = t_end - t0;
    let hmax = opts.max_step.unwrap_or(span).min(span);
    const SAFE: f64 = 0.9;
    const BETA: f64 = 0.04;
    const EXPO1: f64 = 0.2 - BETA * 0.75;
    const FAC_MIN: f64 = 0.2; // step may shrink to a fifth
    const FAC_MAX: f64 = 10.0;

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    stats.evaluations += 1;
    let mut h = initial_step(&mut f, t, &y, &k1, hmax, opts);
    stats.evaluations += 1;
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;

    while next < sample_times.len() {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::TooManySteps {
                t,
                t_end,
                max_steps: opts.max_steps,
            });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        // land exactly on t_end
        if t + 1.01 * h >= t_end {
            h = t_end - t;
        }

        let mut k = [[0.0; N]; 7];
        k[0] = k1;
        // the last stage is evaluated at the 5th-order solution (FSAL)
        let mut y_new = y;
        for s in 1..7 {
            let mut ys = y;
            for (j, a) in A[s].iter().enumerate().take(s) {
                if *a != 0.0 {
                    for i in 0..N {
                        ys[i] += h * a * k[j][i];
                    }
                }
            }
            k[s] = f(t + C[s] * h, &ys);
            if s == 6 {
                y_new = ys;
            }
        }
        stats.evaluations += 6;
        let err_vec: [f64; N] =
            std::array::from_fn(|i| h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>());
        let err = scaled_norm(&err_vec, &y, &y_new, opts);

        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            let mut fac = fac11 / facold.powf(BETA);
            fac = (fac / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            facold = err.max(1e-4);
            stats.accepted += 1;

            let t_new = t + h;
            // continuous extension on [t, t_new]
            while next < sample_times.len() && sample_times[next] <= t_new {
                let ts = sample_times[next];
                let theta = (ts - t) / h;
                let theta1 = 1.0 - theta;
                let ys: [f64; N] = std::array::from_fn(|i| {
                    let ydiff = y_new[i] - y[i];
                    let bspl = h * k[0][i] - ydiff;
                    let r4 = ydiff - h * k[6][i] - bspl;
                    let r5 = h * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>();
                    y[i] + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)))
                });
                out.push(if ts == t_new { y_new } else { ys });
                next += 1;
            }

            t = t_new;
            y = y_new;
            k1 = k[6];
            if h_new.abs() > hmax {
                h_new = hmax;
            }
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new;
        } else {
            h /= (fac11 / SAFE).min(1.0 / FAC_MIN);
            stats.rejected += 1;
            last_rejected = true;
        }
    }
    Ok((out, stats))
}

/// One classical fourth-order Runge-Kutta step.
#[inline]
pub fn rk4_step<const N: usize, F>(mut f: F, t: f64, y: &[f64; N], h: f64) -> [f64; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &[(1.0, &k1)]));
    let k3 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &[(1.0, &k2)]));
    let k4 = f(t + h, &axpy(y, h, &[(1.0, &k3)]));
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}
