//! Floquet quasienergies of the driven atom and coherent destruction of
//! tunneling (CDT).

use std::f64::consts::PI;

use num_complex::Complex64;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::closed::{evolve_u, Unitary2};
use crate::error::{Error, Result};
use crate::model::SystemConfig;

/// Largest zero index accepted by [`find_cdt_amplitude`].
pub const MAX_ZERO_INDEX: usize = 20;

/// Switch-over point between the ascending series and the Hankel expansion.
const SERIES_LIMIT: f64 = 12.0;

/// Bessel function J₀ of the first kind.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        j0_series(x)
    } else {
        j0_hankel(x)
    }
}

/// Σ (−x²/4)ᵏ / (k!)².
pub(crate) fn j0_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) && k > 2 {
            break;
        }
    }
    sum
}

/// Hankel asymptotic expansion J₀(x) ≈ √(2/πx)(P cos χ − Q sin χ), χ = x − π/4.
pub(crate) fn j0_hankel(x: f64) -> f64 {
    // |aₖ| = ∏(2j−1)² / (k! 8ᵏ); P takes even k, Q odd k
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term: f64 = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..40 {
        let m = (2 * k - 1) as f64;
        term *= m * m / (k as f64 * 8.0 * x);
        if term.abs() > last {
            break; // the series is asymptotic: stop at the smallest term
        }
        last = term.abs();
        match k % 4 {
            1 => q -= term,
            2 => p -= term,
            3 => q += term,
            _ => p += term,
        }
    }
    let chi = x - 0.25 * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// High-frequency quasienergy splitting Δ₀·J₀(s/ω_L).
///
/// This is the unfolded difference ε₂ − ε₁ of the effective Hamiltonian
/// −(Δ₀J₀/2)σ_z and can be negative.
pub fn cdt_splitting_highfreq(delta0: f64, s: f64, omega_l: f64) -> f64 {
    delta0 * bessel_j0(s / omega_l)
}

/// k-th positive zero of J₀, by bisection around McMahon's estimate.
pub fn bessel_j0_zero(k: usize) -> Result<f64> {
    if k == 0 || k > MAX_ZERO_INDEX {
        return Err(Error::InvalidArgument(format!(
            "zero index must lie in 1..={MAX_ZERO_INDEX}, got {k}"
        )));
    }
    let guess = (k as f64 - 0.25) * PI;
    let (mut lo, mut hi) = (guess - 0.4, guess + 0.4);
    let (mut flo, fhi) = (bessel_j0(lo), bessel_j0(hi));
    debug_assert!(flo * fhi < 0.0);
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        let fm = bessel_j0(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Driving amplitude s = ω_L·jₖ at which the k-th CDT condition holds.
pub fn find_cdt_amplitude(omega_l: f64, zero_index: usize) -> Result<f64> {
    if !(omega_l > 0.0 && omega_l.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "omega_l must be positive, got {omega_l}"
        )));
    }
    Ok(omega_l * bessel_j0_zero(zero_index)?)
}

/// Folds a quasienergy into [−ω/2, ω/2).
pub fn fold(eps: f64, omega: f64) -> f64 {
    let r = eps - omega * ((eps + 0.5 * omega) / omega).floor();
    if r >= 0.5 * omega {
        r - omega
    } else {
        r
    }
}

/// The two quasienergies of the driven atom, folded into the first zone.
///
/// `eps1` belongs to the Floquet state with the larger weight on |1⟩ at
/// t = 0, `eps2` to the one with the larger weight on |2⟩, so that
/// `signed_splitting` continues the undriven ε₂ − ε₁ = Δ₀ through
/// sign changes of J₀.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasienergyPair {
    pub eps1: f64,
    pub eps2: f64,
    /// ε₂ − ε₁ folded into [−ω_L/2, ω_L/2).
    pub signed_splitting: f64,
    /// |signed_splitting|.
    pub splitting: f64,
    /// Set when the monodromy eigenvalues coincide to 1e−12.
    pub degenerate: bool,
}

/// Eigenvalues and unit eigenvectors of a 2×2 matrix.
fn eigen2(m: &Unitary2) -> [(Complex64, [Complex64; 2]); 2] {
    let tr = m.trace();
    let disc = (tr * tr - 4.0 * m.det()).sqrt();
    let lambdas = [(tr + disc) * 0.5, (tr - disc) * 0.5];
    lambdas.map(|l| {
        let a = m.m;
        let c1 = [a[0][1], l - a[0][0]];
        let c2 = [l - a[1][1], a[1][0]];
        let n1 = c1[0].norm_sqr() + c1[1].norm_sqr();
        let n2 = c2[0].norm_sqr() + c2[1].norm_sqr();
        let (v, n) = if n1 >= n2 { (c1, n1) } else { (c2, n2) };
        if n < 1e-28 {
            // m is (numerically) a multiple of the identity
            (l, [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)])
        } else {
            let s = 1.0 / n.sqrt();
            (l, [v[0] * s, v[1] * s])
        }
    })
}

/// Quasienergies from the eigenphases of the monodromy U(𝒯, 0).
///
/// For an undriven configuration (s = 0) the drive period 2π/ω_L is still
/// used as the Floquet period.
pub fn quasienergies(config: &SystemConfig) -> Result<QuasienergyPair> {
    if !(config.omega_l > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "quasienergies need omega_l > 0, got {}",
            config.omega_l
        )));
    }
    let w = config.omega_l;
    let period = 2.0 * PI / w;
    let mono = evolve_u(period, 0.0, config)?;
    Ok(quasienergies_from_monodromy(&mono, w))
}

pub(crate) fn quasienergies_from_monodromy(mono: &Unitary2, omega_l: f64) -> QuasienergyPair {
    let eig = eigen2(mono);
    let degenerate = (eig[0].0 - eig[1].0).norm() < 1e-12;
    let phase = |l: Complex64| fold(-omega_l / (2.0 * PI) * l.arg(), omega_l);
    let (first, second) = if degenerate || eig[0].1[0].norm_sqr() >= eig[1].1[0].norm_sqr() {
        (eig[0].0, eig[1].0)
    } else {
        (eig[1].0, eig[0].0)
    };
    let eps1 = phase(first);
    let eps2 = phase(second);
    let signed = fold(eps2 - eps1, omega_l);
    QuasienergyPair {
        eps1,
        eps2,
        signed_splitting: signed,
        splitting: signed.abs(),
        degenerate,
    }
}

/// One point of a quasienergy-versus-amplitude scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub s_over_wl: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub splitting: f64,
    pub splitting_highfreq: f64,
}

/// Quasienergies for s = r·ω_L over the given ratios r, other parameters from `base`.
/// The `splitting` column is the signed ε₂ − ε₁.
pub fn quasienergy_sweep(base: &SystemConfig, ratios: &[f64]) -> Result<Vec<SweepRow>> {
    let row = |r: &f64| -> Result<SweepRow> {
        let cfg = SystemConfig {
            s: r * base.omega_l,
            ..*base
        };
        let q = quasienergies(&cfg)?;
        Ok(SweepRow {
            s_over_wl: *r,
            eps1: q.eps1,
            eps2: q.eps2,
            splitting: q.signed_splitting,
            splitting_highfreq: cdt_splitting_highfreq(base.delta0, cfg.s, base.omega_l),
        })
    };
    #[cfg(feature = "parallel")]
    let rows = ratios.par_iter().map(row).collect();
    #[cfg(not(feature = "parallel"))]
    let rows = ratios.iter().map(row).collect();
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference J₀ by Bessel's integral (1/π)∫₀^π cos(x sin θ) dθ with a
    /// composite Simpson rule; spectrally accurate for a periodic integrand.
    fn j0_integral(x: f64) -> f64 {
        let n = 2000;
        let h = PI / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let th = i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            s += w * (x * th.sin()).cos();
        }
        s * h / PI
    }

    fn cfg(s: f64, wl: f64) -> SystemConfig {
        SystemConfig {
            s,
            omega_l: wl,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn j0_values() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!(bessel_j0(2.4048).abs() < 1e-4);
        assert!(bessel_j0(5.520_078_110_286_311).abs() < 1e-8);
        assert_eq!(bessel_j0(-3.3), bessel_j0(3.3));
    }

    #[test]
    fn j0_matches_integral_representation() {
        let mut x = 0.0;
        while x <= 50.0 {
            let d = (bessel_j0(x) - j0_integral(x)).abs();
            assert!(d < 1e-10, "x = {x}: {d:e}");
            x += 0.173;
        }
    }

    #[test]
    fn series_and_hankel_agree_in_overlap() {
        for i in 0..=40 {
            let x = 10.0 + i as f64 * 0.1;
            let d = (j0_series(x) - j0_hankel(x)).abs();
            assert!(d < 1e-10, "x = {x}: {d:e}");
        }
    }

    #[test]
    fn j0_zeros() {
        let known = [
            2.404_825_557_695_773,
            5.520_078_110_286_311,
            8.653_727_912_911_013,
        ];
        for (k, z) in known.iter().enumerate() {
            assert!((bessel_j0_zero(k + 1).unwrap() - z).abs() < 1e-10);
        }
        let z20 = bessel_j0_zero(20).unwrap();
        assert!(bessel_j0(z20).abs() < 1e-10);
        assert!(bessel_j0_zero(0).is_err());
        assert!(bessel_j0_zero(21).is_err());
    }

    #[test]
    fn cdt_amplitudes() {
        assert!((find_cdt_amplitude(50.0, 1).unwrap() - 120.241).abs() < 5e-3);
        assert!((find_cdt_amplitude(1.0, 1).unwrap() - 2.4048).abs() < 1e-4);
        assert!(find_cdt_amplitude(0.0, 1).is_err());
        assert!(find_cdt_amplitude(1.0, 25).is_err());
    }

    #[test]
    fn highfreq_formula() {
        assert_eq!(cdt_splitting_highfreq(1.0, 0.0, 3.0), 1.0);
        assert!(cdt_splitting_highfreq(1.0, 2.4048, 1.0).abs() < 1e-4);
        assert!((cdt_splitting_highfreq(1.0, 7.0, 7.0) - 0.765_197_686_6).abs() < 1e-10);
    }

    #[test]
    fn folding() {
        assert_eq!(fold(0.0, 2.0), 0.0);
        assert_eq!(fold(1.0, 2.0), -1.0);
        assert_eq!(fold(-1.0, 2.0), -1.0);
        assert!((fold(2.5, 2.0) - 0.5).abs() < 1e-15);
        assert!((fold(-2.7, 2.0) + 0.7).abs() < 1e-15);
    }

    #[test]
    fn undriven_quasienergies_are_level_energies() {
        let q = quasienergies(&cfg(0.0, 50.0)).unwrap();
        assert!((q.eps1 + 0.5).abs() < 1e-9);
        assert!((q.eps2 - 0.5).abs() < 1e-9);
        assert!((q.signed_splitting - 1.0).abs() < 1e-9);
        assert!(!q.degenerate);
    }

    #[test]
    fn crossing_at_cdt() {
        let q = quasienergies(&cfg(120.241, 50.0)).unwrap();
        assert!(q.splitting < 2e-3, "{q:?}");
    }

    #[test]
    fn weak_drive_matches_highfreq() {
        let q = quasienergies(&cfg(1.0, 50.0)).unwrap();
        let expected = bessel_j0(0.02);
        assert!(((q.splitting - expected) / expected).abs() < 1e-3);
    }

    #[test]
    fn identity_monodromy_is_degenerate() {
        let q = quasienergies_from_monodromy(&Unitary2::IDENTITY, 1.0);
        assert!(q.degenerate);
        assert_eq!(q.splitting, 0.0);
    }

    #[test]
    fn cdt_is_local_minimum() {
        for k in 1..=2 {
            let s0 = find_cdt_amplitude(50.0, k).unwrap();
            let at = quasienergies(&cfg(s0, 50.0)).unwrap().splitting;
            for f in [0.98, 0.99, 1.01, 1.02] {
                let off = quasienergies(&cfg(s0 * f, 50.0)).unwrap().splitting;
                assert!(off > at, "k = {k}, factor {f}");
            }
        }
    }

    #[test]
    fn sweep_columns() {
        let rows = quasienergy_sweep(&cfg(0.0, 50.0), &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].s_over_wl, 1.0);
        assert!((rows[1].splitting_highfreq - bessel_j0(1.0)).abs() < 1e-14);
        assert!((rows[1].splitting - rows[1].splitting_highfreq).abs() < 0.01);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn folded_into_zone(s in 0.0..20.0f64, wl in 0.3..20.0f64) {
                let q = quasienergies(&cfg(s, wl)).unwrap();
                for e in [q.eps1, q.eps2] {
                    prop_assert!(e >= -0.5 * wl && e < 0.5 * wl);
                }
                let sum = fold(q.eps1 + q.eps2, wl);
                prop_assert!(sum.abs() < 1e-8 || (sum + 0.5 * wl).abs() < 1e-8);
            }

            #[test]
            fn highfreq_convergence(ratio in 0.0..3.0f64, wl_idx in 0usize..3) {
                let wl = [20.0, 50.0, 100.0][wl_idx];
                let q = quasienergies(&cfg(ratio * wl, wl)).unwrap();
                prop_assert!((q.signed_splitting - bessel_j0(ratio)).abs() <= 5.0 / wl);
            }
        }
    }
}
