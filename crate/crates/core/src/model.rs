//! Physical parameters, the Bloch-vector state and trajectories.
//!
//! Units: ħ = 1, frequencies in units of the level splitting Δ₀, times in 1/Δ₀.
//!
//! Bloch-vector convention: the density matrix in the energy basis {|1⟩, |2⟩}
//! (|1⟩ the ground state, σ_z = +1) is
//!
//! ```text
//! ρ = ½ [[1 + σ_z, σ_x + iσ_y],
//!        [σ_x − iσ_y, 1 − σ_z]]
//! ```
//!
//! With H(t) = −½[Δ₀σ̂_z + s(t)σ̂_x] this is the orientation under which the
//! Bloch equations read σ̇_x = −Δ₀σ_y, σ̇_y = Δ₀σ_x − s(t)σ_z, σ̇_z = s(t)σ_y.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coupling strength at and above which the Born approximation is flagged.
pub const BORN_WARNING_FRACTION: f64 = 0.1;

/// All physical parameters of the driven atom + lossy cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Level splitting Δ₀.
    pub delta0: f64,
    /// Driving amplitude s.
    pub s: f64,
    /// Driving frequency ω_L.
    pub omega_l: f64,
    /// Atom-cavity coupling g.
    pub g: f64,
    /// Cavity frequency Ω.
    pub omega_cav: f64,
    /// Cavity line width Γ.
    pub gamma_cav: f64,
    /// Bath temperature (only used by the quadrature oracle).
    pub temperature: f64,
    /// Ohmic cutoff ω_c (only used by the pre-mapping Ohmic density).
    pub omega_c: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            delta0: 1.0,
            s: 0.0,
            omega_l: 1.0,
            g: 0.0,
            omega_cav: 1.0,
            gamma_cav: 0.1,
            temperature: 0.0,
            omega_c: 1.0e3,
        }
    }
}

impl SystemConfig {
    /// The time-dependent drive s(t) = s·cos(ω_L t).
    #[inline]
    pub fn drive(&self, t: f64) -> f64 {
        if self.s == 0.0 {
            0.0
        } else {
            self.s * (self.omega_l * t).cos()
        }
    }

    /// Drive period 2π/ω_L, or `None` for an undriven system.
    pub fn drive_period(&self) -> Option<f64> {
        (self.s != 0.0 && self.omega_l > 0.0).then(|| 2.0 * std::f64::consts::PI / self.omega_l)
    }

    /// Damped cavity frequency √(Ω² − Γ²).
    pub fn damped_cavity_frequency(&self) -> f64 {
        (self.omega_cav * self.omega_cav - self.gamma_cav * self.gamma_cav).sqrt()
    }

    pub fn is_dissipative(&self) -> bool {
        self.g > 0.0
    }
}

/// Non-fatal remarks attached by [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Warning {
    /// g ≥ Δ₀/10: the weak-coupling equations are being pushed.
    BornApproximation { g: f64, threshold: f64 },
    /// s < 0 is the |s| drive with σ_x, σ_y reflected; kept as given.
    NegativeAmplitude { s: f64 },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::BornApproximation { g, threshold } => write!(
                f,
                "coupling g = {g} is at or above {threshold}; second-order results may be unreliable"
            ),
            Warning::NegativeAmplitude { s } => {
                write!(f, "negative drive amplitude s = {s} kept as given (phase-shifted drive)")
            }
        }
    }
}

/// A configuration that passed [`validate`], with any warnings raised.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub config: SystemConfig,
    pub warnings: Vec<Warning>,
}

impl Validated {
    pub fn born_warning(&self) -> bool {
        self.warnings
            .iter()
            .any(|w| matches!(w, Warning::BornApproximation { .. }))
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

/// Checks every invariant of a [`SystemConfig`]. The config is returned unchanged.
pub fn validate(config: SystemConfig) -> Result<Validated> {
    let c = config;
    let fields = [
        ("delta0", c.delta0),
        ("s", c.s),
        ("omega_l", c.omega_l),
        ("g", c.g),
        ("omega_cav", c.omega_cav),
        ("gamma_cav", c.gamma_cav),
        ("temperature", c.temperature),
        ("omega_c", c.omega_c),
    ];
    for (name, value) in fields {
        if !value.is_finite() {
            return Err(invalid(name, format!("must be finite, got {value}")));
        }
    }
    if c.delta0 <= 0.0 {
        return Err(invalid(
            "delta0",
            format!("must be positive, got {}", c.delta0),
        ));
    }
    if c.s != 0.0 && c.omega_l <= 0.0 {
        return Err(invalid(
            "omega_l",
            format!("must be positive when s != 0, got {}", c.omega_l),
        ));
    }
    if c.g < 0.0 {
        return Err(invalid("g", format!("must be non-negative, got {}", c.g)));
    }
    if c.temperature < 0.0 {
        return Err(invalid(
            "temperature",
            format!("must be non-negative, got {}", c.temperature),
        ));
    }
    if c.omega_cav <= 0.0 {
        return Err(invalid(
            "omega_cav",
            format!("must be positive, got {}", c.omega_cav),
        ));
    }
    if c.gamma_cav < 0.0 {
        return Err(invalid(
            "gamma_cav",
            format!("must be non-negative, got {}", c.gamma_cav),
        ));
    }
    if c.gamma_cav >= c.omega_cav {
        return Err(invalid(
            "gamma_cav",
            format!(
                "must be below omega_cav ({} >= {}): bath kernel undefined",
                c.gamma_cav, c.omega_cav
            ),
        ));
    }
    if c.omega_c <= 0.0 {
        return Err(invalid(
            "omega_c",
            format!("must be positive, got {}", c.omega_c),
        ));
    }

    let mut warnings = Vec::new();
    let threshold = BORN_WARNING_FRACTION * c.delta0;
    if c.g >= threshold {
        warnings.push(Warning::BornApproximation { g: c.g, threshold });
    }
    if c.s < 0.0 {
        warnings.push(Warning::NegativeAmplitude { s: c.s });
    }
    Ok(Validated { config, warnings })
}

/// Pauli expectation values (σ_x, σ_y, σ_z).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct BlochState {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl BlochState {
    pub const fn new(sx: f64, sy: f64, sz: f64) -> Self {
        Self { sx, sy, sz }
    }

    /// Equal superposition (|1⟩ + |2⟩)/√2.
    pub const SUPERPOSITION: Self = Self::new(1.0, 0.0, 0.0);
    /// Ground state |1⟩.
    pub const GROUND: Self = Self::new(0.0, 0.0, 1.0);

    pub fn norm(&self) -> f64 {
        (self.sx * self.sx + self.sy * self.sy + self.sz * self.sz).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.sx, self.sy, self.sz]
    }

    pub fn component(&self, i: usize) -> f64 {
        self.to_array()[i]
    }

    /// Density matrix in the energy basis (see the module docs for the orientation).
    pub fn density_matrix(&self) -> [[Complex64; 2]; 2] {
        let off = Complex64::new(0.5 * self.sx, 0.5 * self.sy);
        [
            [Complex64::new(0.5 * (1.0 + self.sz), 0.0), off],
            [off.conj(), Complex64::new(0.5 * (1.0 - self.sz), 0.0)],
        ]
    }

    pub fn from_density_matrix(rho: &[[Complex64; 2]; 2]) -> Self {
        let off = rho[0][1];
        Self::new(2.0 * off.re, 2.0 * off.im, (rho[0][0] - rho[1][1]).re)
    }
}

impl From<[f64; 3]> for BlochState {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<BlochState> for [f64; 3] {
    fn from(s: BlochState) -> Self {
        s.to_array()
    }
}

/// Time-ordered Bloch-vector samples of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub label: String,
    pub times: Vec<f64>,
    pub states: Vec<BlochState>,
    pub config: SystemConfig,
}

impl Trajectory {
    pub fn new(
        label: impl Into<String>,
        times: Vec<f64>,
        states: Vec<BlochState>,
        config: SystemConfig,
    ) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::InvalidArgument(format!(
                "trajectory has {} times but {} states",
                times.len(),
                states.len()
            )));
        }
        check_increasing(&times)?;
        Ok(Self {
            label: label.into(),
            times,
            states,
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// One component (0 = x, 1 = y, 2 = z) as a series.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.component(i)).collect()
    }

    pub fn last(&self) -> Option<&BlochState> {
        self.states.last()
    }
}

pub(crate) fn check_increasing(times: &[f64]) -> Result<()> {
    if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!(
            "sample times must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("sample times must be finite".into()));
    }
    Ok(())
}

/// `n` equally spaced sample times on [0, t_end], both ends included.
pub fn uniform_times(t_end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let step = t_end / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { t_end } else { i as f64 * step })
                .collect()
        }
    }
}
