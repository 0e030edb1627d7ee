//! Lossy-cavity bath: spectral densities and the correlation kernel
//! M(τ) = M′(τ) + iM″(τ) = (1/π)∫₀^∞ J(ω)[coth(ω/2T)cos ωτ − i sin ωτ] dω.
//!
//! At T = 0 the kernel of the effective Lorentzian density has the closed form
//!
//! M′(τ) = (4g²Ω/ω₁) e^{−Γτ} cos ω₁τ − (16Γg²Ω/π) B(τ)
//! M″(τ) = −(4g²Ω/ω₁) e^{−Γτ} sin ω₁τ
//!
//! with ω₁ = √(Ω² − Γ²) and the branch integral
//! B(τ) = ∫₀^∞ y e^{−yτ} / ((y² + Ω²)² − 4y²Γ²) dy.

use std::f64::consts::PI;

use num_complex::Complex64;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::quad::{integrate, QuadOptions};

/// Default truncation threshold of the kernel table, relative to the kernel scale.
pub const DEFAULT_THRESHOLD: f64 = 1e-6;
/// Default hard cap on the truncation horizon.
pub const DEFAULT_HORIZON_CAP: f64 = 1e4;

/// Beyond Ωτ = this value the branch integral uses its asymptotic series.
const BRANCH_ASYMPTOTIC_FROM: f64 = 40.0;

/// Largest Ωτ accepted by [`m_oracle`].
pub const ORACLE_TAU_MAX: f64 = 500.0;

/// Effective spectral density 16Γg²Ωω / ((Ω² − ω²)² + 4ω²Γ²).
pub fn j_eff(omega: f64, config: &SystemConfig) -> f64 {
    let (g, w0, gam) = (config.g, config.omega_cav, config.gamma_cav);
    let d = w0 * w0 - omega * omega;
    16.0 * gam * g * g * w0 * omega / (d * d + 4.0 * omega * omega * gam * gam)
}

/// Ohmic density (2Γ/Ω)·ω·e^{−ω/ω_c} of the oscillator bath damping the cavity.
pub fn j_ohmic(omega: f64, config: &SystemConfig) -> f64 {
    2.0 * config.gamma_cav / config.omega_cav * omega * (-omega / config.omega_c).exp()
}

fn omega1(config: &SystemConfig) -> f64 {
    let (w0, gam) = (config.omega_cav, config.gamma_cav);
    (w0 * w0 - gam * gam).sqrt()
}

/// Amplitude 4g²Ω/ω₁ of the damped-oscillation part of the kernel.
pub fn pole_amplitude(config: &SystemConfig) -> f64 {
    4.0 * config.g * config.g * config.omega_cav / omega1(config)
}

fn branch_prefactor(config: &SystemConfig) -> f64 {
    16.0 * config.gamma_cav * config.g * config.g * config.omega_cav / PI
}

/// M″(τ) at zero temperature.
pub fn m_imag(tau: f64, config: &SystemConfig) -> f64 {
    let w1 = omega1(config);
    -pole_amplitude(config) * (-config.gamma_cav * tau).exp() * (w1 * tau).sin()
}

/// M′(τ) at zero temperature.
pub fn m_real(tau: f64, config: &SystemConfig) -> Result<f64> {
    let w1 = omega1(config);
    let pole = pole_amplitude(config) * (-config.gamma_cav * tau).exp() * (w1 * tau).cos();
    let pre = branch_prefactor(config);
    if pre == 0.0 {
        return Ok(pole);
    }
    Ok(pole - pre * branch_integral(tau, config)?)
}

/// Coefficients dₙ of 1/((y² + Ω²)² − 4y²Γ²) = Σ dₙ y²ⁿ.
fn denominator_series(config: &SystemConfig, n: usize) -> Vec<f64> {
    let w4 = config.omega_cav.powi(4);
    let a = 2.0 * config.omega_cav.powi(2) - 4.0 * config.gamma_cav.powi(2);
    let mut d = Vec::with_capacity(n);
    d.push(1.0 / w4);
    if n > 1 {
        d.push(-a * d[0] / w4);
    }
    for k in 2..n {
        d.push(-(a * d[k - 1] + d[k - 2]) / w4);
    }
    d
}

/// Σ dₙ (2n + p)! / τ^{2n+p+1}, stopped at the smallest term.
fn laplace_asymptotic(tau: f64, config: &SystemConfig, p: usize) -> f64 {
    const TERMS: usize = 60;
    let d = denominator_series(config, TERMS);
    // (2n+p)!/τ^{2n+p+1}, built incrementally
    let mut moment = (1..=p).fold(1.0 / tau, |acc, k| acc * k as f64 / tau);
    let mut sum = 0.0;
    let mut last = f64::INFINITY;
    for (n, dn) in d.iter().enumerate() {
        let term = dn * moment;
        if term.abs() > last {
            break;
        }
        sum += term;
        last = term.abs();
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
        let m = (2 * n + p) as f64;
        moment *= (m + 1.0) * (m + 2.0) / (tau * tau);
    }
    sum
}

/// Integrates h(y)/((y² + Ω²)² − 4y²Γ²) over y ∈ (0, ∞) via y = Ωu/(1−u).
fn mapped_integral<H: Fn(f64) -> f64>(h: H, config: &SystemConfig, scale: f64) -> Result<f64> {
    let (w0, gam) = (config.omega_cav, config.gamma_cav);
    let f = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let y = w0 * u / (1.0 - u);
        let jac = w0 / ((1.0 - u) * (1.0 - u));
        let s = y * y + w0 * w0;
        let val = h(y) / (s * s - 4.0 * y * y * gam * gam) * jac;
        if val.is_finite() {
            val
        } else {
            0.0
        }
    };
    let opts = QuadOptions {
        epsabs: 1e-15 * scale,
        epsrel: 1e-12,
        max_intervals: 4000,
    };
    Ok(integrate(f, 0.0, 1.0, &opts)?.value)
}

/// B(τ) = ∫₀^∞ y e^{−yτ} / ((y² + Ω²)² − 4y²Γ²) dy.
pub fn branch_integral(tau: f64, config: &SystemConfig) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tau must be non-negative, got {tau}"
        )));
    }
    let w0 = config.omega_cav;
    if w0 * tau >= BRANCH_ASYMPTOTIC_FROM {
        return Ok(laplace_asymptotic(tau, config, 1));
    }
    mapped_integral(|y| y * (-y * tau).exp(), config, w0.powi(-2))
}

/// ∫_τ^∞ B(τ′) dτ′ = ∫₀^∞ e^{−yτ} / ((y² + Ω²)² − 4y²Γ²) dy.
fn branch_tail(tau: f64, config: &SystemConfig) -> Result<f64> {
    let w0 = config.omega_cav;
    if w0 * tau >= BRANCH_ASYMPTOTIC_FROM {
        return Ok(laplace_asymptotic(tau, config, 0));
    }
    mapped_integral(|y| (-y * tau).exp(), config, w0.powi(-3))
}

/// Monotone upper bound on |M′(τ)| and |M″(τ)| at T = 0.
pub fn kernel_envelope(tau: f64, config: &SystemConfig) -> Result<f64> {
    let pole = pole_amplitude(config) * (-config.gamma_cav * tau).exp();
    let pre = branch_prefactor(config);
    if pre == 0.0 {
        return Ok(pole);
    }
    Ok(pole + pre * branch_integral(tau, config)?)
}

/// coth(ω/2T)·J(ω), with the T = 0 and ω → 0 limits taken explicitly.
fn thermal_weighted(omega: f64, temperature: f64, config: &SystemConfig) -> f64 {
    let j = j_eff(omega, config);
    if temperature == 0.0 {
        return j;
    }
    if omega == 0.0 {
        // J(ω) ≈ (16Γg²/Ω³)ω near zero and coth(ω/2T) ≈ 2T/ω
        let w0 = config.omega_cav;
        return 16.0 * config.gamma_cav * config.g * config.g / (w0 * w0 * w0) * 2.0 * temperature;
    }
    j / (omega / (2.0 * temperature)).tanh()
}

/// Direct quadrature of the kernel from its spectral definition, at any
/// temperature. Valid for Ωτ ≤ [`ORACLE_TAU_MAX`].
pub fn m_oracle(tau: f64, config: &SystemConfig, temperature: f64) -> Result<Complex64> {
    let w0 = config.omega_cav;
    let limit = ORACLE_TAU_MAX / w0;
    if !(tau >= 0.0) || !(temperature >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "oracle needs tau >= 0 and temperature >= 0 (tau = {tau}, T = {temperature})"
        )));
    }
    if tau > limit {
        return Err(Error::OracleRange { tau, limit });
    }
    let scale = j_eff(w0, config).max(f64::MIN_POSITIVE);
    let opts = QuadOptions {
        epsabs: 1e-13 * scale,
        epsrel: 1e-12,
        max_intervals: 2000,
    };
    let fc = |w: f64| thermal_weighted(w, temperature, config);
    let fs = |w: f64| j_eff(w, config);

    let cutoff = if tau > 0.0 {
        (20.0 * w0).max(60.0 / tau)
    } else {
        20.0 * w0
    };
    let half_period = if tau > 0.0 { PI / tau } else { f64::INFINITY };
    let mut breaks = vec![0.0];
    let mut x: f64 = 0.0;
    while x < cutoff {
        let step = if x < 4.0 * w0 {
            (w0 / 8.0).min(half_period)
        } else {
            half_period.min(2.0 * w0)
        };
        x = (x + step).min(cutoff);
        breaks.push(x);
    }

    let mut re = 0.0;
    let mut im = 0.0;
    for w in breaks.windows(2) {
        re += integrate(|om| fc(om) * (om * tau).cos(), w[0], w[1], &opts)?.value;
        if tau > 0.0 {
            im += integrate(|om| fs(om) * (om * tau).sin(), w[0], w[1], &opts)?.value;
        }
    }

    if tau == 0.0 {
        // ω = W/u maps the tail onto (0, 1]
        let tail = integrate(
            |u| {
                if u <= 0.0 {
                    0.0
                } else {
                    fc(cutoff / u) * cutoff / (u * u)
                }
            },
            0.0,
            1.0,
            &opts,
        )?;
        re += tail.value;
    } else {
        // integration by parts on [W, ∞) for smooth, decaying amplitudes
        let wc = cutoff;
        let h = 1e-3 * wc;
        let derivs = |f: &dyn Fn(f64) -> f64| {
            let (a, b, c) = (f(wc - h), f(wc), f(wc + h));
            (b, (c - a) / (2.0 * h), (c - 2.0 * b + a) / (h * h))
        };
        let (s, c) = (wc * tau).sin_cos();
        let (f0, f1, f2) = derivs(&fc);
        re += -f0 * s / tau - f1 * c / (tau * tau) + f2 * s / tau.powi(3);
        let (f0, f1, f2) = derivs(&fs);
        im += f0 * c / tau - f1 * s / (tau * tau) - f2 * c / tau.powi(3);
    }
    Ok(Complex64::new(re / PI, -im / PI))
}

/// Kernel samples on the uniform grid τₖ = k·dτ, k = 0..=n, truncated where
/// the kernel envelope falls below the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub dtau: f64,
    pub tau_max: f64,
    pub m_real: Vec<f64>,
    pub m_imag: Vec<f64>,
    /// Bound on ∫_{τ_max}^∞ |M(τ)| dτ, the neglected part of each convolution.
    pub tail_bound: f64,
    pub threshold: f64,
}

impl KernelTable {
    pub fn len(&self) -> usize {
        self.m_real.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m_real.is_empty()
    }

    pub fn tau(&self, k: usize) -> f64 {
        k as f64 * self.dtau
    }

    pub fn tau_grid(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.tau(k)).collect()
    }

    /// Whether all samples vanish (no coupling).
    pub fn is_zero(&self) -> bool {
        self.m_real.iter().chain(&self.m_imag).all(|&m| m == 0.0)
    }
}

/// Builds the kernel table with the default horizon cap.
pub fn build_kernel_table(config: &SystemConfig, dtau: f64, threshold: f64) -> Result<KernelTable> {
    build_kernel_table_capped(config, dtau, threshold, DEFAULT_HORIZON_CAP)
}

/// Builds the kernel table; τ_max is the first grid time at which the
/// envelope drops below threshold·max(|M′(0)|, 4g²Ω/ω₁).
pub fn build_kernel_table_capped(
    config: &SystemConfig,
    dtau: f64,
    threshold: f64,
    cap: f64,
) -> Result<KernelTable> {
    if !(dtau > 0.0 && dtau.is_finite()) || !(threshold > 0.0) || !(cap > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kernel table needs dtau, threshold, cap > 0 (dtau = {dtau}, threshold = {threshold}, cap = {cap})"
        )));
    }
    if config.g == 0.0 {
        return Ok(KernelTable {
            dtau,
            tau_max: dtau,
            m_real: vec![0.0; 2],
            m_imag: vec![0.0; 2],
            tail_bound: 0.0,
            threshold,
        });
    }
    if config.gamma_cav == 0.0 {
        // undamped cavity: the kernel never decays
        return Err(Error::KernelHorizon {
            tau_max: f64::INFINITY,
            cap,
        });
    }

    let level = threshold * m_real(0.0, config)?.abs().max(pole_amplitude(config));
    let below = |tau: f64| -> Result<bool> { Ok(kernel_envelope(tau, config)? < level) };

    // bracket the crossing, then bisect
    let mut hi = dtau;
    while !below(hi)? {
        if hi > cap {
            return Err(Error::KernelHorizon { tau_max: hi, cap });
        }
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    if below(lo)? {
        lo = 0.0;
    }
    while hi - lo > 0.5 * dtau {
        let mid = 0.5 * (lo + hi);
        if below(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut n = ((hi / dtau).ceil() as usize).max(1);
    while !below(n as f64 * dtau)? {
        n += 1;
    }
    let tau_max = n as f64 * dtau;
    if tau_max > cap {
        return Err(Error::KernelHorizon { tau_max, cap });
    }

    let sample = |k: usize| -> Result<(f64, f64)> {
        let tau = k as f64 * dtau;
        Ok((m_real(tau, config)?, m_imag(tau, config)))
    };
    #[cfg(feature = "parallel")]
    let samples: Result<Vec<(f64, f64)>> = (0..=n).into_par_iter().map(sample).collect();
    #[cfg(not(feature = "parallel"))]
    let samples: Result<Vec<(f64, f64)>> = (0..=n).map(sample).collect();
    let (m_real, mut m_imag): (Vec<f64>, Vec<f64>) = samples?.into_iter().unzip();
    m_imag[0] = 0.0;

    let tail_bound = pole_amplitude(config) * (-config.gamma_cav * tau_max).exp()
        / config.gamma_cav
        + branch_prefactor(config) * branch_tail(tau_max, config)?;

    Ok(KernelTable {
        dtau,
        tau_max,
        m_real,
        m_imag,
        tail_bound,
        threshold,
    })
}
