//! Driven Bloch-Redfield dynamics of the atom coupled to the cavity bath.
//!
//! The equations of motion are
//!
//! σ̇_x = −Δ₀σ_y
//! σ̇_y = Δ₀σ_x − s(t)σ_z − Γ₁σ_y − Γ₂σ_x − A_y
//! σ̇_z = s(t)σ_y − Γ₁σ_z − Γ₃σ_x − A_z
//!
//! with Γᵢ(t) = ∫₀ᵗ M′(t−t′) bᵢ(t,t′) dt′ and A_y + iA_z = ½∫₀ᵗ M″(t−t′)(u² − v²) dt′.
//!
//! Coefficients are tabulated on a grid of spacing h by trapezoidal
//! convolution; the state advances with classical RK4 of step 2h so that
//! every stage lands on a tabulated point.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::bath::{build_kernel_table_capped, KernelTable, DEFAULT_HORIZON_CAP, DEFAULT_THRESHOLD};
use crate::closed::{b_coeffs, PropagatorCache, UVPair};
use crate::error::{Error, Result};
use crate::model::{check_increasing, BlochState, SystemConfig, Trajectory};

/// Default positivity tolerance: excursions ‖σ‖ > 1 + ε are recorded.
pub const DEFAULT_POSITIVITY_EPS: f64 = 0.02;

/// Steps per shortest physical period used by [`default_dt`].
pub const STEPS_PER_PERIOD: f64 = 64.0;
/// Coarsest accepted user step, in steps per shortest period.
pub const MIN_STEPS_PER_PERIOD: f64 = 8.0;

/// Rates and inhomogeneities entering the dissipative Bloch equations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DissipativeCoefficients {
    pub t: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub a_y: f64,
    pub a_z: f64,
}

impl DissipativeCoefficients {
    pub fn zero(t: f64) -> Self {
        Self {
            t,
            ..Self::default()
        }
    }
}

/// Right-hand side of the dissipative Bloch equations.
#[inline]
pub fn redfield_rhs(
    state: &BlochState,
    c: &DissipativeCoefficients,
    t: f64,
    config: &SystemConfig,
) -> [f64; 3] {
    let d = config.delta0;
    let st = config.drive(t);
    [
        -d * state.sy,
        d * state.sx - st * state.sz - c.gamma1 * state.sy - c.gamma2 * state.sx - c.a_y,
        st * state.sy - c.gamma1 * state.sz - c.gamma3 * state.sx - c.a_z,
    ]
}

/// Shortest of 𝒯, 2π/Ω and 2π/Δ₀ (𝒯 dropped for an undriven atom).
pub fn shortest_period(config: &SystemConfig) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut p = (two_pi / config.omega_cav).min(two_pi / config.delta0);
    if let Some(period) = config.drive_period() {
        p = p.min(period);
    }
    p
}

/// Step min(𝒯, 2π/Ω, 2π/Δ₀)/64.
pub fn default_dt(config: &SystemConfig) -> f64 {
    shortest_period(config) / STEPS_PER_PERIOD
}

fn check_grids(kernel: &KernelTable, cache: &PropagatorCache) -> Result<()> {
    let (a, b) = (kernel.dtau, cache.spacing());
    if ((a - b) / b).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "kernel step {a} and propagator grid spacing {b} differ"
        )));
    }
    Ok(())
}

/// Accumulates the five convolution integrands at one node.
#[inline]
fn accumulate(acc: &mut [f64; 5], weight: f64, m_re: f64, m_im: f64, pair: &UVPair) {
    let b = b_coeffs(pair);
    let d = pair.u * pair.u - pair.v * pair.v;
    acc[0] += weight * m_re * b.b1;
    acc[1] += weight * m_re * b.b2;
    acc[2] += weight * m_re * b.b3;
    acc[3] += weight * 0.5 * m_im * d.re;
    acc[4] += weight * 0.5 * m_im * d.im;
}

fn from_sums(t: f64, s: [f64; 5]) -> DissipativeCoefficients {
    DissipativeCoefficients {
        t,
        gamma1: s[0],
        gamma2: s[1],
        gamma3: s[2],
        a_y: s[3],
        a_z: s[4],
    }
}

/// Coefficients at grid index k: trapezoid over t′ = tⱼ, j ∈ [max(0, k − K), k].
fn coefficients_at_index(
    k: usize,
    kernel: &KernelTable,
    cache: &PropagatorCache,
) -> DissipativeCoefficients {
    let h = cache.spacing();
    let t = k as f64 * h;
    let window = kernel.len() - 1;
    let j0 = k.saturating_sub(window);
    let mut acc = [0.0; 5];
    if k == j0 {
        return from_sums(t, acc);
    }
    let uk = *cache.grid_point(k);
    for j in j0..=k {
        let w = if j == j0 || j == k { 0.5 * h } else { h };
        let lag = k - j;
        let u = uk * cache.grid_point(j).adjoint();
        let pair = UVPair::from_unitary(&u, t, j as f64 * h);
        accumulate(&mut acc, w, kernel.m_real[lag], kernel.m_imag[lag], &pair);
    }
    from_sums(t, acc)
}

/// Coefficients at an arbitrary time t inside the propagator cache.
///
/// Nodes are t′ = t − k·dτ back to the window start; a final partial
/// interval is closed with linear interpolation of the kernel.
pub fn dissipative_coefficients(
    t: f64,
    kernel: &KernelTable,
    cache: &PropagatorCache,
    config: &SystemConfig,
) -> Result<DissipativeCoefficients> {
    check_grids(kernel, cache)?;
    if cache.config() != config {
        return Err(Error::InvalidArgument(
            "propagator cache was built for a different configuration".into(),
        ));
    }
    if !(t >= 0.0) || t > cache.extent() * (1.0 + 1e-12) {
        return Err(Error::OutOfRange {
            t,
            extent: cache.extent(),
        });
    }
    if kernel.is_zero() || t == 0.0 {
        return Ok(DissipativeCoefficients::zero(t));
    }
    let h = kernel.dtau;
    let x = t / h;
    if (x - x.round()).abs() < 1e-9 {
        return Ok(coefficients_at_index(x.round() as usize, kernel, cache));
    }
    let span = t.min(kernel.tau_max);
    let full = ((span / h) * (1.0 + 1e-14)).floor() as usize;
    let ut = cache.at(t)?;
    let pair_at = |tp: f64| -> Result<UVPair> {
        Ok(UVPair::from_unitary(&(ut * cache.at(tp)?.adjoint()), t, tp))
    };
    let mut acc = [0.0; 5];
    for k in 0..=full {
        let w = if k == 0 || k == full { 0.5 * h } else { h };
        accumulate(
            &mut acc,
            w,
            kernel.m_real[k],
            kernel.m_imag[k],
            &pair_at(t - k as f64 * h)?,
        );
    }
    let rest = span - full as f64 * h;
    if rest > 1e-14 * h && full + 1 < kernel.len() {
        let f = rest / h;
        let m_re = (1.0 - f) * kernel.m_real[full] + f * kernel.m_real[full + 1];
        let m_im = (1.0 - f) * kernel.m_imag[full] + f * kernel.m_imag[full + 1];
        let tp_end = t - span;
        accumulate(
            &mut acc,
            0.5 * rest,
            kernel.m_real[full],
            kernel.m_imag[full],
            &pair_at(t - full as f64 * h)?,
        );
        accumulate(&mut acc, 0.5 * rest, m_re, m_im, &pair_at(tp_end.max(0.0))?);
    }
    Ok(from_sums(t, acc))
}

/// Coefficients tabulated at tₖ = k·h, k = 0..=n.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub spacing: f64,
    pub rows: Vec<DissipativeCoefficients>,
}

impl CoefficientTable {
    pub fn zero(spacing: f64, n: usize) -> Self {
        Self {
            spacing,
            rows: (0..=n)
                .map(|k| DissipativeCoefficients::zero(k as f64 * spacing))
                .collect(),
        }
    }

    /// Tabulates all coefficients on the cache grid.
    pub fn build(kernel: &KernelTable, cache: &PropagatorCache) -> Result<Self> {
        check_grids(kernel, cache)?;
        let n = cache.len() - 1;
        if kernel.is_zero() {
            return Ok(Self::zero(cache.spacing(), n));
        }
        let at = |k: usize| coefficients_at_index(k, kernel, cache);
        #[cfg(feature = "parallel")]
        let rows = (0..=n).into_par_iter().map(at).collect();
        #[cfg(not(feature = "parallel"))]
        let rows = (0..=n).map(at).collect();
        Ok(Self {
            spacing: cache.spacing(),
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Numerical settings of a dissipative run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedfieldSettings {
    /// RK4 step; `None` selects [`default_dt`]. The coefficient grid and the
    /// kernel use half this step.
    pub dt: Option<f64>,
    pub kernel_threshold: f64,
    pub horizon_cap: f64,
    pub positivity_eps: f64,
}

impl Default for RedfieldSettings {
    fn default() -> Self {
        Self {
            dt: None,
            kernel_threshold: DEFAULT_THRESHOLD,
            horizon_cap: DEFAULT_HORIZON_CAP,
            positivity_eps: DEFAULT_POSITIVITY_EPS,
        }
    }
}

/// Record of Bloch-vector norms exceeding 1 + ε along a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityReport {
    pub eps: f64,
    pub max_norm: f64,
    pub t_at_max: f64,
    /// Number of integration steps ending with ‖σ‖ > 1 + ε.
    pub violations: usize,
    pub first_violation: Option<f64>,
}

impl PositivityReport {
    fn new(eps: f64) -> Self {
        Self {
            eps,
            max_norm: 0.0,
            t_at_max: 0.0,
            violations: 0,
            first_violation: None,
        }
    }

    fn record(&mut self, t: f64, state: &BlochState) {
        let n = state.norm();
        if n > self.max_norm {
            self.max_norm = n;
            self.t_at_max = t;
        }
        if n > 1.0 + self.eps {
            self.violations += 1;
            self.first_violation.get_or_insert(t);
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violations == 0
    }
}

/// Result of a dissipative integration.
#[derive(Debug, Clone, PartialEq)]
pub struct RedfieldRun {
    pub trajectory: Trajectory,
    pub positivity: PositivityReport,
    pub dt: f64,
}

/// Precomputed propagators, kernel and coefficients for one configuration
/// on [0, t_end]; reusable across initial states.
#[derive(Debug, Clone)]
pub struct RedfieldSolver {
    config: SystemConfig,
    settings: RedfieldSettings,
    dt: f64,
    steps: usize,
    kernel: KernelTable,
    table: CoefficientTable,
}

impl RedfieldSolver {
    pub fn new(config: &SystemConfig, t_end: f64, settings: &RedfieldSettings) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t_end must be positive, got {t_end}"
            )));
        }
        let requested = settings.dt.unwrap_or_else(|| default_dt(config));
        if !(requested > 0.0 && requested.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {requested}"
            )));
        }
        let period = shortest_period(config);
        if requested > period / MIN_STEPS_PER_PERIOD {
            return Err(Error::InvalidArgument(format!(
                "dt = {requested} does not resolve the shortest period {period:.4} (need dt <= period/{MIN_STEPS_PER_PERIOD})"
            )));
        }
        // shrink dt slightly so that t_end is an exact step multiple
        let steps = ((t_end / requested) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = t_end / steps as f64;
        let h = 0.5 * dt;
        let kernel =
            build_kernel_table_capped(config, h, settings.kernel_threshold, settings.horizon_cap)?;
        let table = if kernel.is_zero() {
            CoefficientTable::zero(h, 2 * steps)
        } else {
            let cache = PropagatorCache::build(config, t_end, h)?;
            debug_assert_eq!(cache.len(), 2 * steps + 1);
            CoefficientTable::build(&kernel, &cache)?
        };
        Ok(Self {
            config: *config,
            settings: *settings,
            dt,
            steps,
            kernel,
            table,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn kernel(&self) -> &KernelTable {
        &self.kernel
    }

    pub fn coefficients(&self) -> &CoefficientTable {
        &self.table
    }

    fn rhs(&self, idx: usize, y: &[f64; 3]) -> [f64; 3] {
        let c = &self.table.rows[idx];
        redfield_rhs(&BlochState::from(*y), c, c.t, &self.config)
    }

    /// Integrates from `initial` at t = 0 and samples at `times` ⊂ [0, t_end].
    pub fn run(&self, initial: BlochState, times: &[f64]) -> Result<RedfieldRun> {
        check_increasing(times)?;
        let t_end = self.t_end();
        if let Some(&bad) = times
            .iter()
            .find(|&&t| t < 0.0 || t > t_end * (1.0 + 1e-12))
        {
            return Err(Error::OutOfRange {
                t: bad,
                extent: t_end,
            });
        }
        let dt = self.dt;
        let h = 0.5 * dt;
        let mut ys = Vec::with_capacity(self.steps + 1);
        let mut fs = Vec::with_capacity(self.steps + 1);
        let mut positivity = PositivityReport::new(self.settings.positivity_eps);
        let mut y = initial.to_array();
        positivity.record(0.0, &initial);
        for n in 0..self.steps {
            let i = 2 * n;
            let k1 = self.rhs(i, &y);
            let y2: [f64; 3] = std::array::from_fn(|c| y[c] + h * k1[c]);
            let k2 = self.rhs(i + 1, &y2);
            let y3: [f64; 3] = std::array::from_fn(|c| y[c] + h * k2[c]);
            let k3 = self.rhs(i + 1, &y3);
            let y4: [f64; 3] = std::array::from_fn(|c| y[c] + dt * k3[c]);
            let k4 = self.rhs(i + 2, &y4);
            ys.push(y);
            fs.push(k1);
            for c in 0..3 {
                y[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    t: (n + 1) as f64 * dt,
                });
            }
            positivity.record((n + 1) as f64 * dt, &BlochState::from(y));
        }
        fs.push(self.rhs(2 * self.steps, &y));
        ys.push(y);

        let states = times
            .iter()
            .map(|&t| BlochState::from(hermite(&ys, &fs, dt, t)))
            .collect();
        let trajectory = Trajectory::new("redfield", times.to_vec(), states, self.config)?;
        Ok(RedfieldRun {
            trajectory,
            positivity,
            dt,
        })
    }
}

/// Cubic Hermite interpolation between fixed steps.
fn hermite(ys: &[[f64; 3]], fs: &[[f64; 3]], dt: f64, t: f64) -> [f64; 3] {
    let last = ys.len() - 1;
    let x = t / dt;
    let n = (x.floor() as usize).min(last.saturating_sub(1));
    let s = (x - n as f64).clamp(0.0, 1.0);
    if last == 0 || s == 0.0 {
        return ys[n];
    }
    if s == 1.0 {
        return ys[n + 1];
    }
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    std::array::from_fn(|c| {
        h00 * ys[n][c] + h10 * dt * fs[n][c] + h01 * ys[n + 1][c] + h11 * dt * fs[n + 1][c]
    })
}

/// Builds a solver for the last sample time and integrates once.
pub fn integrate_redfield(
    initial: BlochState,
    times: &[f64],
    config: &SystemConfig,
    settings: &RedfieldSettings,
) -> Result<RedfieldRun> {
    let t_end = *times
        .last()
        .ok_or_else(|| Error::InvalidArgument("no sample times requested".into()))?;
    let solver = RedfieldSolver::new(config, t_end.max(f64::MIN_POSITIVE), settings)?;
    solver.run(initial, times)
}
