//! Isolated (g = 0) driven two-level dynamics.
//!
//! Bloch equations for the expectation values, the 2×2 propagator U(t, t′)
//! in the energy basis, and the propagator sums u, v and their real
//! combinations b₁, b₂, b₃ that feed the dissipative rates.

use std::ops::Mul;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{check_increasing, BlochState, SystemConfig, Trajectory};
use crate::ode::{dopri5, AdaptiveOptions};

/// Default tolerances of the closed Bloch integration.
pub const DEFAULT_RTOL: f64 = 1e-9;
pub const DEFAULT_ATOL: f64 = 1e-12;

/// Propagators are integrated tighter than Bloch vectors: they are reused
/// O(N²) times by the convolutions.
pub const PROPAGATOR_RTOL: f64 = 1e-11;
pub const PROPAGATOR_ATOL: f64 = 1e-13;

/// Right-hand side of the closed Bloch equations.
#[inline]
pub fn bloch_rhs(state: &BlochState, t: f64, config: &SystemConfig) -> [f64; 3] {
    let d = config.delta0;
    let st = config.drive(t);
    [-d * state.sy, d * state.sx - st * state.sz, st * state.sy]
}

/// Local tolerances are scaled by this factor so that the accumulated
/// global error, not just the per-step error, stays within the requested rtol.
const GLOBAL_ERROR_MARGIN: f64 = 0.01;

/// Integrates the closed Bloch equations and samples them at `times`.
///
/// The requested tolerances bound the global error: steps are controlled at
/// `GLOBAL_ERROR_MARGIN` times the requested values.
pub fn integrate_closed(
    initial: BlochState,
    times: &[f64],
    config: &SystemConfig,
    opts: &AdaptiveOptions,
) -> Result<Trajectory> {
    check_increasing(times)?;
    let local = AdaptiveOptions {
        rtol: opts.rtol * GLOBAL_ERROR_MARGIN,
        atol: opts.atol * GLOBAL_ERROR_MARGIN,
        ..*opts
    };
    let (ys, _) = dopri5(
        |t, y: &[f64; 3]| bloch_rhs(&BlochState::from(*y), t, config),
        0.0,
        initial.to_array(),
        times,
        &local,
    )?;
    Trajectory::new(
        "closed",
        times.to_vec(),
        ys.into_iter().map(BlochState::from).collect(),
        *config,
    )
}

/// A 2×2 complex matrix in the energy basis {|1⟩, |2⟩}, used for propagators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary2 {
    pub m: [[Complex64; 2]; 2],
}

impl Unitary2 {
    pub const IDENTITY: Self = Self {
        m: [
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        ],
    };

    pub fn new(m: [[Complex64; 2]; 2]) -> Self {
        Self { m }
    }

    /// The SU(2) element whose first column is (a, c).
    pub fn from_first_column(a: Complex64, c: Complex64) -> Self {
        Self {
            m: [[a, -c.conj()], [c, a.conj()]],
        }
    }

    pub fn diagonal(d0: Complex64, d1: Complex64) -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self {
            m: [[d0, z], [z, d1]],
        }
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self {
            m: [
                [m[0][0].conj(), m[1][0].conj()],
                [m[0][1].conj(), m[1][1].conj()],
            ],
        }
    }

    pub fn det(&self) -> Complex64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self {
            m: self.m.map(|row| row.map(|x| x * k)),
        }
    }

    /// Entrywise max-norm distance.
    pub fn max_diff(&self, other: &Self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        d
    }

    /// max |U†U − I| over entries.
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint() * *self).max_diff(&Self::IDENTITY)
    }

    /// Closest unitary matrix (polar factor), computed in closed form for 2×2:
    /// A + |det A|·(A†)⁻¹ = U·tr(P) for A = U·P.
    pub fn polar_projection(&self) -> Self {
        let det = self.det();
        let abs_det = det.norm();
        let m = &self.m;
        // (A†)⁻¹ = adj(A†) / det(A†)
        let adj_adjoint = [
            [m[1][1].conj(), -m[1][0].conj()],
            [-m[0][1].conj(), m[0][0].conj()],
        ];
        let factor = abs_det / det.conj();
        let mut sum = self.m;
        for i in 0..2 {
            for j in 0..2 {
                sum[i][j] += factor * adj_adjoint[i][j];
            }
        }
        let s = Self { m: sum };
        let norm = s.det().norm().sqrt();
        s.scale(Complex64::new(1.0 / norm, 0.0))
    }

    /// Evolves a Bloch vector: ρ ↦ U ρ U†.
    pub fn conjugate(&self, state: &BlochState) -> BlochState {
        let rho = Self::new(state.density_matrix());
        let out = *self * rho * self.adjoint();
        BlochState::from_density_matrix(&out.m)
    }
}

impl Mul for Unitary2 {
    type Output = Unitary2;

    fn mul(self, rhs: Unitary2) -> Unitary2 {
        let a = &self.m;
        let b = &rhs.m;
        Unitary2 {
            m: [
                [
                    a[0][0] * b[0][0] + a[0][1] * b[1][0],
                    a[0][0] * b[0][1] + a[0][1] * b[1][1],
                ],
                [
                    a[1][0] * b[0][0] + a[1][1] * b[1][0],
                    a[1][0] * b[0][1] + a[1][1] * b[1][1],
                ],
            ],
        }
    }
}

/// Schrödinger equation for the first column (a, c) of U, packed as
/// [Re a, Im a, Re c, Im c]. With H = −½[[Δ₀, s(t)], [s(t), −Δ₀]],
/// ȧ = (i/2)(Δ₀a + s c) and ċ = (i/2)(s a − Δ₀c).
#[inline]
fn column_rhs(t: f64, y: &[f64; 4], config: &SystemConfig) -> [f64; 4] {
    let d = config.delta0;
    let st = config.drive(t);
    let (ar, ai, cr, ci) = (y[0], y[1], y[2], y[3]);
    [
        -0.5 * (d * ai + st * ci),
        0.5 * (d * ar + st * cr),
        -0.5 * (st * ai - d * ci),
        0.5 * (st * ar - d * cr),
    ]
}

fn column_to_unitary(y: &[f64; 4]) -> Unitary2 {
    let norm = (y.iter().map(|v| v * v).sum::<f64>()).sqrt();
    Unitary2::from_first_column(
        Complex64::new(y[0] / norm, y[1] / norm),
        Complex64::new(y[2] / norm, y[3] / norm),
    )
}

/// Propagators U(tₖ, t′) for each requested end time, starting from U(t′, t′) = I.
pub fn evolve_u_many(
    t_prime: f64,
    times: &[f64],
    config: &SystemConfig,
    opts: &AdaptiveOptions,
) -> Result<Vec<Unitary2>> {
    if t_prime < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "initial time must be non-negative, got {t_prime}"
        )));
    }
    let (ys, _) = dopri5(
        |t, y: &[f64; 4]| column_rhs(t, y, config),
        t_prime,
        [1.0, 0.0, 0.0, 0.0],
        times,
        opts,
    )?;
    Ok(ys.iter().map(column_to_unitary).collect())
}

/// The propagator U(t, t′) of the isolated driven system.
pub fn evolve_u(t: f64, t_prime: f64, config: &SystemConfig) -> Result<Unitary2> {
    if t < t_prime {
        return Err(Error::InvalidArgument(format!(
            "propagator needs t >= t' (got t = {t}, t' = {t_prime})"
        )));
    }
    let opts = AdaptiveOptions::new(PROPAGATOR_RTOL, PROPAGATOR_ATOL);
    Ok(evolve_u_many(t_prime, &[t], config, &opts)?[0])
}

/// Column sums u = ⟨1|U|1⟩ + ⟨2|U|1⟩ and v = ⟨1|U|2⟩ + ⟨2|U|2⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UVPair {
    pub u: Complex64,
    pub v: Complex64,
    pub t: f64,
    pub t_prime: f64,
}

impl UVPair {
    pub fn from_unitary(m: &Unitary2, t: f64, t_prime: f64) -> Self {
        Self {
            u: m.m[0][0] + m.m[1][0],
            v: m.m[0][1] + m.m[1][1],
            t,
            t_prime,
        }
    }

    pub fn norm_sqr_sum(&self) -> f64 {
        self.u.norm_sqr() + self.v.norm_sqr()
    }
}

/// u and v for U(t, t′), integrated directly.
pub fn uv_elements(t: f64, t_prime: f64, config: &SystemConfig) -> Result<UVPair> {
    let m = evolve_u(t, t_prime, config)?;
    Ok(UVPair::from_unitary(&m, t, t_prime))
}

/// The three real propagator combinations entering the dissipative rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BCoeffs {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

/// b₁ = Re uv*, b₂ = −½ Im(u² − v²), b₃ = ½ Re(u² − v²).
#[inline]
pub fn b_coeffs(pair: &UVPair) -> BCoeffs {
    let d = pair.u * pair.u - pair.v * pair.v;
    BCoeffs {
        b1: (pair.u * pair.v.conj()).re,
        b2: -0.5 * d.im,
        b3: 0.5 * d.re,
    }
}

/// U(tₖ, 0) on a uniform grid tₖ = k·spacing.
///
/// Two-time propagators follow from U(t, t′) = U(t, 0)·U(t′, 0)†. Off-grid
/// times use cubic Lagrange interpolation of the entries and a polar
/// re-projection onto the unitary group.
#[derive(Debug, Clone)]
pub struct PropagatorCache {
    config: SystemConfig,
    spacing: f64,
    grid: Vec<Unitary2>,
}

impl PropagatorCache {
    /// Grid spacing of `points_per_period` points per drive period (or per
    /// 2π/Δ₀ for an undriven system).
    pub fn spacing_for(config: &SystemConfig, points_per_period: usize) -> f64 {
        let period = config
            .drive_period()
            .unwrap_or(2.0 * std::f64::consts::PI / config.delta0);
        period / points_per_period.max(1) as f64
    }

    /// Builds the cache on [0, t_end] with the given spacing.
    pub fn build(config: &SystemConfig, t_end: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !(t_end >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "propagator grid needs spacing > 0 and t_end >= 0 (spacing = {spacing}, t_end = {t_end})"
            )));
        }
        let n = (t_end / spacing - 1e-9).ceil().max(0.0) as usize;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * spacing).collect();
        let opts = AdaptiveOptions::new(PROPAGATOR_RTOL, PROPAGATOR_ATOL);
        let grid = evolve_u_many(0.0, &times, config, &opts)?;
        Ok(Self {
            config: *config,
            spacing,
            grid,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Last cached time.
    pub fn extent(&self) -> f64 {
        (self.grid.len() - 1) as f64 * self.spacing
    }

    /// U(tₖ, 0) at grid index k.
    pub fn grid_point(&self, k: usize) -> &Unitary2 {
        &self.grid[k]
    }

    /// U(tₖ, tⱼ) for grid indices k ≥ j.
    #[inline]
    pub fn between_indices(&self, k: usize, j: usize) -> Unitary2 {
        self.grid[k] * self.grid[j].adjoint()
    }

    /// U(t, 0) at an arbitrary time inside the cache.
    pub fn at(&self, t: f64) -> Result<Unitary2> {
        let extent = self.extent();
        if !(t >= 0.0) || t > extent * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::OutOfRange { t, extent });
        }
        let x = t / self.spacing;
        let k = x.round();
        if (x - k).abs() < 1e-9 {
            return Ok(self.grid[(k as usize).min(self.grid.len() - 1)]);
        }
        let n = self.grid.len();
        if n < 4 {
            // too short for cubic interpolation
            return Ok(self.grid[(k as usize).min(n - 1)]);
        }
        let base = (x.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let nodes: [f64; 4] = std::array::from_fn(|i| (base + i) as f64);
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, node) in nodes.iter().enumerate() {
            let mut w = 1.0;
            for (j, other) in nodes.iter().enumerate() {
                if i != j {
                    w *= (x - other) / (node - other);
                }
            }
            let g = &self.grid[base + i].m;
            for r in 0..2 {
                for c in 0..2 {
                    m[r][c] += g[r][c] * w;
                }
            }
        }
        Ok(Unitary2::new(m).polar_projection())
    }

    /// U(t, t′) = U(t, 0)·U(t′, 0)†.
    pub fn between(&self, t: f64, t_prime: f64) -> Result<Unitary2> {
        if t < t_prime {
            return Err(Error::InvalidArgument(format!(
                "propagator needs t >= t' (got t = {t}, t' = {t_prime})"
            )));
        }
        Ok(self.at(t)? * self.at(t_prime)?.adjoint())
    }

    pub fn uv(&self, t: f64, t_prime: f64) -> Result<UVPair> {
        Ok(UVPair::from_unitary(&self.between(t, t_prime)?, t, t_prime))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn driven(s: f64, wl: f64) -> SystemConfig {
        SystemConfig {
            s,
            omega_l: wl,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn rhs_examples() {
        let cfg = driven(0.0, 1.0);
        assert_eq!(
            bloch_rhs(&BlochState::new(1.0, 0.0, 0.0), 0.0, &cfg),
            [0.0, 1.0, 0.0]
        );

        let cfg = driven(0.7, 3.0);
        assert_eq!(
            bloch_rhs(&BlochState::new(0.0, 0.0, 1.0), 0.0, &cfg),
            [0.0, -0.7, 0.0]
        );

        let cfg = driven(5.0, 2.0);
        let r = bloch_rhs(&BlochState::new(0.0, 1.0, 0.0), PI / (2.0 * 2.0), &cfg);
        assert!((r[0] + 1.0).abs() < 1e-15);
        assert!(r[1].abs() < 1e-15);
        assert!(r[2].abs() < 1e-14);
    }

    #[test]
    fn undriven_precession() {
        let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.1).collect();
        let tr = integrate_closed(
            BlochState::SUPERPOSITION,
            &times,
            &driven(0.0, 1.0),
            &AdaptiveOptions::default(),
        )
        .unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            assert!((s.sx - t.cos()).abs() < 1e-8);
            assert!((s.sy - t.sin()).abs() < 1e-8);
            assert!(s.sz.abs() < 1e-12);
        }
    }

    #[test]
    fn identity_propagator_at_equal_times() {
        let cfg = driven(1.3, 0.7);
        let u = evolve_u(2.5, 2.5, &cfg).unwrap();
        assert!(u.max_diff(&Unitary2::IDENTITY) < 1e-15);
        let p = uv_elements(2.5, 2.5, &cfg).unwrap();
        assert!((p.u - c(1.0, 0.0)).norm() < 1e-15);
        assert!((p.v - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn undriven_propagator_is_diagonal_phase() {
        let cfg = driven(0.0, 1.0);
        let tau = 1.7;
        let u = evolve_u(3.0 + tau, 3.0, &cfg).unwrap();
        let expected = Unitary2::diagonal(
            Complex64::from_polar(1.0, tau / 2.0),
            Complex64::from_polar(1.0, -tau / 2.0),
        );
        assert!(u.max_diff(&expected) < 1e-9, "{u:?}");
        let p = uv_elements(3.0 + tau, 3.0, &cfg).unwrap();
        assert!((p.u - Complex64::from_polar(1.0, tau / 2.0)).norm() < 1e-9);
        assert!((p.v - Complex64::from_polar(1.0, -tau / 2.0)).norm() < 1e-9);
    }

    #[test]
    fn composition_of_independent_integrations() {
        let cfg = driven(1.0, 1.0);
        let (t, tp) = (1.3, 0.55);
        let full = evolve_u(t, 0.0, &cfg).unwrap();
        let split = evolve_u(t, tp, &cfg).unwrap() * evolve_u(tp, 0.0, &cfg).unwrap();
        assert!(full.max_diff(&split) < 1e-8);
    }

    #[test]
    fn backwards_interval_rejected() {
        assert!(evolve_u(1.0, 2.0, &driven(1.0, 1.0)).is_err());
    }

    #[test]
    fn b_coefficient_examples() {
        let p = |u: Complex64, v: Complex64| UVPair {
            u,
            v,
            t: 0.0,
            t_prime: 0.0,
        };
        let b = b_coeffs(&p(c(1.0, 0.0), c(1.0, 0.0)));
        assert_eq!((b.b1, b.b2, b.b3), (1.0, 0.0, 0.0));

        let phi = PI / 4.0;
        let b = b_coeffs(&p(
            Complex64::from_polar(1.0, phi),
            Complex64::from_polar(1.0, -phi),
        ));
        assert!(b.b1.abs() < 1e-15);
        assert!((b.b2 + 1.0).abs() < 1e-15);
        assert!(b.b3.abs() < 1e-15);

        let b = b_coeffs(&p(c(1.0, 0.0), c(0.0, 0.0)));
        assert_eq!((b.b1, b.b2, b.b3), (0.0, 0.0, 0.5));
    }

    #[test]
    fn polar_projection_restores_unitarity() {
        let u = evolve_u(0.8, 0.0, &driven(2.0, 1.5)).unwrap();
        let noisy = Unitary2::new([
            [u.m[0][0] * 1.01, u.m[0][1] + c(0.003, -0.002)],
            [u.m[1][0], u.m[1][1] * 0.995],
        ]);
        let p = noisy.polar_projection();
        assert!(p.unitarity_defect() < 1e-14);
        assert!(p.max_diff(&u) < 0.02);
        // exact unitaries are fixed points
        assert!(u.polar_projection().max_diff(&u) < 1e-14);
    }

    #[test]
    fn cache_grid_points_are_special_unitary() {
        let cfg = driven(1.0, 1.0);
        let cache =
            PropagatorCache::build(&cfg, 30.0, PropagatorCache::spacing_for(&cfg, 64)).unwrap();
        for k in 0..cache.len() {
            let u = cache.grid_point(k);
            assert!(u.unitarity_defect() < 1e-10);
            assert!((u.det() - c(1.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn cache_interpolation_matches_direct_integration() {
        let cfg = driven(1.0, 1.0);
        let cache =
            PropagatorCache::build(&cfg, 10.0, PropagatorCache::spacing_for(&cfg, 64)).unwrap();
        for &t in &[0.0137, 3.3333, 7.77, 9.99] {
            let direct = evolve_u(t, 0.0, &cfg).unwrap();
            let interp = cache.at(t).unwrap();
            assert!(interp.unitarity_defect() < 1e-12);
            assert!(interp.max_diff(&direct) < 1e-5, "t = {t}");
        }
        assert!(cache.at(10.5).is_err());
        assert!(cache.at(-0.1).is_err());
    }

    #[test]
    fn cached_and_direct_uv_agree() {
        let cfg = driven(1.0, 1.0);
        let h = 0.01;
        let cache = PropagatorCache::build(&cfg, 5.0, h).unwrap();
        for (k, j) in [(300usize, 120usize), (499, 0), (250, 249)] {
            let (t, tp) = (k as f64 * h, j as f64 * h);
            let cached = UVPair::from_unitary(&cache.between_indices(k, j), t, tp);
            let direct = uv_elements(t, tp, &cfg).unwrap();
            assert!((cached.norm_sqr_sum() - direct.norm_sqr_sum()).abs() < 1e-8);
            assert!((cached.u - direct.u).norm() < 1e-8);
        }
    }

    #[test]
    fn periodicity_of_propagator() {
        let cfg = driven(1.7, 2.3);
        let period = cfg.drive_period().unwrap();
        for &t in &[0.4, 1.9, 3.1] {
            let shifted = evolve_u(t + period, period, &cfg).unwrap();
            let base = evolve_u(t, 0.0, &cfg).unwrap();
            assert!(shifted.max_diff(&base) < 1e-8);
        }
    }

    #[test]
    fn bloch_and_propagator_routes_agree() {
        let cfg = driven(2.0, 1.3);
        let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
        let initial = BlochState::new(0.6, 0.0, 0.8);
        let tr = integrate_closed(initial, &times, &cfg, &AdaptiveOptions::default()).unwrap();
        let us = evolve_u_many(
            0.0,
            &times,
            &cfg,
            &AdaptiveOptions::new(PROPAGATOR_RTOL, PROPAGATOR_ATOL),
        )
        .unwrap();
        for (u, s) in us.iter().zip(&tr.states) {
            let via_u = u.conjugate(&initial);
            assert!((via_u.sx - s.sx).abs() < 1e-6);
            assert!((via_u.sy - s.sy).abs() < 1e-6);
            assert!((via_u.sz - s.sz).abs() < 1e-6);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn bloch_norm_conserved(
                s in 0.0..5.0f64, wl in 0.2..10.0f64,
                theta in 0.0..PI, phi in 0.0..(2.0 * PI),
            ) {
                let cfg = driven(s, wl);
                let initial = BlochState::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
                let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.2).collect();
                let tr = integrate_closed(initial, &times, &cfg, &AdaptiveOptions::default()).unwrap();
                for st in &tr.states {
                    prop_assert!((st.norm() - 1.0).abs() <= 10.0 * DEFAULT_RTOL);
                }
            }

            #[test]
            fn composition_holds(s in 0.0..3.0f64, wl in 0.3..5.0f64, t in 0.2..4.0f64, frac in 0.01..0.99f64) {
                let cfg = driven(s, wl);
                let tp = frac * t;
                let full = evolve_u(t, 0.0, &cfg).unwrap();
                let split = evolve_u(t, tp, &cfg).unwrap() * evolve_u(tp, 0.0, &cfg).unwrap();
                prop_assert!(full.max_diff(&split) < 1e-8);
                prop_assert!((full.det() - c(1.0, 0.0)).norm() < 1e-10);
            }

            #[test]
            fn uv_norm_bound(s in 0.0..3.0f64, wl in 0.3..5.0f64, t in 0.0..6.0f64, frac in 0.0..1.0f64) {
                let p = uv_elements(t, frac * t, &driven(s, wl)).unwrap();
                prop_assert!(p.norm_sqr_sum() <= 2.0 + 1e-9);
            }
        }
    }
}
