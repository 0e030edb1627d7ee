//! Post-processing of sampled trajectories: extrema envelopes and the
//! dominant oscillation frequency of a late-time window.

use crate::error::{Error, Result};

/// Local maxima of |x(t)|, each refined by a parabola through its neighbours.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Envelope {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Envelope {
    /// Extracts the envelope of |values| sampled at `times`.
    pub fn of(times: &[f64], values: &[f64]) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        let a: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        let mut env = Envelope::default();
        for i in 1..a.len().saturating_sub(1) {
            if a[i] >= a[i - 1] && a[i] > a[i + 1] {
                let (t, v) = refine_peak(&times[i - 1..=i + 1], &a[i - 1..=i + 1]);
                env.times.push(t);
                env.values.push(v);
            }
        }
        Ok(env)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Envelope at t by linear interpolation between extrema; `None` outside
    /// the span of detected extrema.
    pub fn at(&self, t: f64) -> Option<f64> {
        let n = self.times.len();
        if n == 0 || t < self.times[0] || t > self.times[n - 1] {
            return None;
        }
        let k = self.times.partition_point(|&x| x <= t);
        if k == n {
            return Some(self.values[n - 1]);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let f = (t - t0) / (t1 - t0);
        Some(self.values[k - 1] + f * (self.values[k] - self.values[k - 1]))
    }

    /// Whether successive extrema never grow by more than `tol`.
    pub fn is_non_increasing(&self, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

/// Vertex of the parabola through three points; falls back to the middle
/// sample for non-uniform or degenerate stencils.
fn refine_peak(t: &[f64], a: &[f64]) -> (f64, f64) {
    let h = t[1] - t[0];
    let denom = a[0] - 2.0 * a[1] + a[2];
    if denom >= 0.0 || ((t[2] - t[1]) - h).abs() > 1e-9 * h.abs() {
        return (t[1], a[1]);
    }
    let off = 0.5 * (a[0] - a[2]) / denom;
    let off = off.clamp(-0.5, 0.5);
    (t[1] + off * h, a[1] - 0.25 * (a[0] - a[2]) * off)
}

/// Best single-sinusoid fit x ≈ offset + amplitude·cos(ωt + φ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyFit {
    pub omega: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Root-mean-square residual of the fit.
    pub rms_residual: f64,
}

/// Least-squares fit of a + b cos ωt + c sin ωt at fixed ω; returns (a, b, c, rss).
fn fit_at(t: &[f64], x: &[f64], omega: f64) -> (f64, f64, f64, f64) {
    let mut m = [[0.0; 3]; 3];
    let mut r = [0.0; 3];
    for (&ti, &xi) in t.iter().zip(x) {
        let (s, c) = (omega * ti).sin_cos();
        let basis = [1.0, c, s];
        for i in 0..3 {
            r[i] += basis[i] * xi;
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
        }
    }
    let coef = solve3(m, r).unwrap_or([x.iter().sum::<f64>() / x.len() as f64, 0.0, 0.0]);
    let rss = t
        .iter()
        .zip(x)
        .map(|(&ti, &xi)| {
            let (s, c) = (omega * ti).sin_cos();
            (xi - coef[0] - coef[1] * c - coef[2] * s).powi(2)
        })
        .sum();
    (coef[0], coef[1], coef[2], rss)
}

/// Gaussian elimination with partial pivoting on a 3×3 system.
fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<[f64; 3]> {
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    for col in 0..3 {
        let p = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[p][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, p);
        r.swap(col, p);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let pivot = m[col];
            for (dst, src) in m[row].iter_mut().zip(pivot).skip(col) {
                *dst -= f * src;
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| m[i][k] * x[k]).sum();
        x[i] = (r[i] - s) / m[i][i];
    }
    Some(x)
}

/// Dominant angular frequency in [omega_min, omega_max] of the samples with
/// t ≥ (1 − fraction)·t_last: grid scan of the least-squares residual
/// followed by golden-section refinement.
pub fn dominant_frequency(
    times: &[f64],
    values: &[f64],
    fraction: f64,
    omega_min: f64,
    omega_max: f64,
) -> Result<FrequencyFit> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::InvalidArgument(
            "need equally many, non-zero times and values".into(),
        ));
    }
    if !(fraction > 0.0 && fraction <= 1.0) || !(omega_min > 0.0 && omega_max > omega_min) {
        return Err(Error::InvalidArgument(format!(
            "invalid window fraction {fraction} or frequency range [{omega_min}, {omega_max}]"
        )));
    }
    let t_last = times[times.len() - 1];
    let start = t_last - fraction * (t_last - times[0]);
    let k0 = times.partition_point(|&t| t < start);
    let (t, x) = (&times[k0..], &values[k0..]);
    if t.len() < 8 {
        return Err(Error::InvalidArgument(format!(
            "only {} samples in the analysis window",
            t.len()
        )));
    }
    let span = t[t.len() - 1] - t[0];
    let step = (std::f64::consts::PI / (8.0 * span)).min((omega_max - omega_min) / 16.0);
    let n = ((omega_max - omega_min) / step).ceil() as usize;
    let rss = |w: f64| fit_at(t, x, w).3;
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for i in 0..=n {
        let r = rss(omega_min + i as f64 * step);
        if r < best {
            best = r;
            best_i = i;
        }
    }
    let mut lo = (omega_min + (best_i as f64 - 1.0) * step).max(omega_min);
    let mut hi = (omega_min + (best_i as f64 + 1.0) * step).min(omega_max);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (rss(a), rss(b));
    while hi - lo > 1e-10 * hi.max(1.0) {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = rss(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = rss(b);
        }
    }
    let omega = 0.5 * (lo + hi);
    let (off, c, s, r) = fit_at(t, x, omega);
    Ok(FrequencyFit {
        omega,
        amplitude: c.hypot(s),
        offset: off,
        rms_residual: (r / t.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_of_damped_cosine() {
        let t: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.05).collect();
        let x: Vec<f64> = t
            .iter()
            .map(|&t| (-0.03 * t).exp() * (1.3 * t).cos())
            .collect();
        let e = Envelope::of(&t, &x).unwrap();
        assert!(e.len() > 35);
        assert!(e.is_non_increasing(1e-9));
        for &tt in &[20.0, 60.0, 90.0] {
            let v = e.at(tt).unwrap();
            assert!((v - (-0.03 * tt).exp()).abs() < 5e-3, "t = {tt}: {v}");
        }
        assert!(e.at(0.0).is_none());
        assert!(e.at(200.0).is_none());
    }

    #[test]
    fn parabolic_refinement_finds_vertex() {
        let (t, v) = refine_peak(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.5]);
        // the parabola through these points peaks at t = 7/6 with value 49/48
        assert!((t - 7.0 / 6.0).abs() < 1e-12);
        assert!((v - 49.0 / 48.0).abs() < 1e-12);
    }

    #[test]
    fn frequency_of_pure_tone() {
        let t: Vec<f64> = (0..=5000).map(|i| i as f64 * 0.02).collect();
        let x: Vec<f64> = t
            .iter()
            .map(|&t| 0.3 + 0.2 * (2.0 * t + 0.4).cos())
            .collect();
        let f = dominant_frequency(&t, &x, 0.2, 0.05, 5.0).unwrap();
        assert!((f.omega - 2.0).abs() < 1e-6);
        assert!((f.amplitude - 0.2).abs() < 1e-6);
        assert!((f.offset - 0.3).abs() < 1e-6);
        assert!(f.rms_residual < 1e-6);
    }

    #[test]
    fn frequency_with_decaying_transient() {
        let t: Vec<f64> = (0..=10000).map(|i| i as f64 * 0.01).collect();
        let x: Vec<f64> = t
            .iter()
            .map(|&t| 0.1 * (1.0 * t).sin() + 0.5 * (-0.2 * t).exp() * (0.37 * t).cos())
            .collect();
        let f = dominant_frequency(&t, &x, 0.2, 0.05, 5.0).unwrap();
        assert!((f.omega - 1.0).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_windows() {
        let t = [0.0, 1.0, 2.0];
        assert!(dominant_frequency(&t, &[0.0; 3], 0.2, 0.1, 1.0).is_err());
        assert!(dominant_frequency(&t, &[0.0; 2], 0.2, 0.1, 1.0).is_err());
        assert!(dominant_frequency(&t, &[0.0; 3], 1.5, 0.1, 1.0).is_err());
        assert!(Envelope::of(&t, &[0.0; 2]).is_err());
    }
}
