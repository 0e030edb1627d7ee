//! Named scenarios, their JSON description, execution and file output.
//!
//! A scenario document is either a preset reference with optional
//! overrides, an explicit list of cases, or a run manifest written by an
//! earlier run (which re-runs bit-identically).
//!
//! ```json
//! {"preset": "fig2", "config": {"gamma_cav": 0.2}, "t_end": 50}
//! ```

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{KernelTable, DEFAULT_HORIZON_CAP, DEFAULT_THRESHOLD};
use crate::closed::{integrate_closed, DEFAULT_ATOL, DEFAULT_RTOL};
use crate::error::Error;
use crate::floquet::{quasienergy_sweep, SweepRow};
use crate::model::{uniform_times, validate, BlochState, SystemConfig, Trajectory, Warning};
use crate::ode::AdaptiveOptions;
use crate::redfield::{PositivityReport, RedfieldSettings, RedfieldSolver, DEFAULT_POSITIVITY_EPS};

pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// CDT amplitude used by the fig1 presets (first zero of J₀ at ω_L = 50).
pub const FIG1_AMPLITUDE: f64 = 120.241;
pub const FIG1_OMEGA_L: f64 = 50.0;
pub const BATH_G: f64 = 0.05;
pub const BATH_OMEGA: f64 = 1.0;
pub const BATH_GAMMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Fig1a,
    Fig1b,
    Fig2,
    Fig3,
    Sweep,
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1a => "fig1a",
            Preset::Fig1b => "fig1b",
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Sweep => "sweep",
            Preset::Custom => "custom",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fig1a" => Ok(Preset::Fig1a),
            "fig1b" => Ok(Preset::Fig1b),
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            "sweep" => Ok(Preset::Sweep),
            "custom" => Ok(Preset::Custom),
            other => Err(format!(
                "unknown preset `{other}` (expected fig1a, fig1b, fig2, fig3, sweep or custom)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Closed,
    Dissipative,
    Both,
}

/// One trajectory to compute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub label: String,
    pub mode: Mode,
    pub initial: BlochState,
    pub config: SystemConfig,
}

/// Numerical settings shared by all cases of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub rtol: f64,
    pub atol: f64,
    /// Dissipative step; `null` picks min(𝒯, 2π/Ω, 2π/Δ₀)/64 per case.
    pub dt: Option<f64>,
    pub kernel_threshold: f64,
    pub horizon_cap: f64,
    pub positivity_eps: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            dt: None,
            kernel_threshold: DEFAULT_THRESHOLD,
            horizon_cap: DEFAULT_HORIZON_CAP,
            positivity_eps: DEFAULT_POSITIVITY_EPS,
        }
    }
}

impl Numerics {
    fn redfield(&self) -> RedfieldSettings {
        RedfieldSettings {
            dt: self.dt,
            kernel_threshold: self.kernel_threshold,
            horizon_cap: self.horizon_cap,
            positivity_eps: self.positivity_eps,
        }
    }
}

/// Quasienergy scan over s/ω_L at fixed ω_L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub points: usize,
    /// Base parameters; `s` is replaced by ratio·ω_L at each point.
    pub config: SystemConfig,
}

impl SweepSpec {
    pub fn ratios(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.ratio_min],
            n => (0..n)
                .map(|i| {
                    self.ratio_min + (self.ratio_max - self.ratio_min) * i as f64 / (n - 1) as f64
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    Trajectories {
        t_end: f64,
        samples: usize,
        cases: Vec<Case>,
    },
    Sweep(SweepSpec),
}

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub preset: Preset,
    /// File stem of the outputs.
    pub outputs: String,
    pub numerics: Numerics,
    pub workload: Workload,
}

fn bath_config(s: f64, omega_l: f64, g: f64) -> SystemConfig {
    SystemConfig {
        s,
        omega_l,
        g,
        omega_cav: BATH_OMEGA,
        gamma_cav: BATH_GAMMA,
        temperature: 0.0,
        ..SystemConfig::default()
    }
}

/// The four situations compared in the dissipative presets.
fn four_cases(initial: BlochState) -> Vec<Case> {
    let case = |label: &str, mode, s, g| Case {
        label: label.into(),
        mode,
        initial,
        config: bath_config(s, 1.0, g),
    };
    vec![
        case("isolated", Mode::Closed, 0.0, 0.0),
        case("driven", Mode::Closed, 1.0, 0.0),
        case("dissipative", Mode::Dissipative, 0.0, BATH_G),
        case("driven_dissipative", Mode::Dissipative, 1.0, BATH_G),
    ]
}

impl Scenario {
    /// The preset with its default settings.
    pub fn preset(preset: Preset) -> Scenario {
        let fig1 = |initial| Workload::Trajectories {
            t_end: 20.0,
            samples: 4001,
            cases: vec![Case {
                label: "cdt".into(),
                mode: Mode::Closed,
                initial,
                config: SystemConfig {
                    s: FIG1_AMPLITUDE,
                    omega_l: FIG1_OMEGA_L,
                    ..SystemConfig::default()
                },
            }],
        };
        let workload = match preset {
            Preset::Fig1a => fig1(BlochState::SUPERPOSITION),
            Preset::Fig1b => fig1(BlochState::GROUND),
            Preset::Fig2 => Workload::Trajectories {
                t_end: 100.0,
                samples: 2001,
                cases: four_cases(BlochState::SUPERPOSITION),
            },
            Preset::Fig3 => Workload::Trajectories {
                t_end: 100.0,
                samples: 2001,
                cases: four_cases(BlochState::GROUND),
            },
            Preset::Sweep => Workload::Sweep(SweepSpec {
                ratio_min: 0.0,
                ratio_max: 3.0,
                points: 301,
                config: SystemConfig {
                    omega_l: FIG1_OMEGA_L,
                    ..SystemConfig::default()
                },
            }),
            Preset::Custom => Workload::Trajectories {
                t_end: 20.0,
                samples: 2001,
                cases: vec![Case {
                    label: "closed".into(),
                    mode: Mode::Closed,
                    initial: BlochState::SUPERPOSITION,
                    config: SystemConfig::default(),
                }],
            },
        };
        Scenario {
            name: preset.name().into(),
            preset,
            outputs: preset.name().into(),
            numerics: Numerics::default(),
            workload,
        }
    }

    pub fn cases(&self) -> &[Case] {
        match &self.workload {
            Workload::Trajectories { cases, .. } => cases,
            Workload::Sweep(_) => &[],
        }
    }

    /// Documented modelling choices, echoed into the manifest.
    pub fn choices(&self) -> Vec<String> {
        let mut out = vec![
            "units: hbar = delta0 = 1; times in 1/delta0".to_string(),
            "bath kernel at zero temperature, cutoff omega_c -> infinity".to_string(),
        ];
        match &self.workload {
            Workload::Trajectories { t_end, .. } => {
                if matches!(self.preset, Preset::Fig2 | Preset::Fig3) {
                    out.push(format!(
                        "t_end = {t_end} chosen to cover transient and long-time behaviour"
                    ));
                }
                out.push("all cases in one CSV, distinguished by case_label".into());
                if self.cases().iter().any(|c| c.config.s < 0.0) {
                    out.push("negative drive amplitude kept as given (phase-shifted drive)".into());
                }
            }
            Workload::Sweep(_) => {
                out.push("splitting column is the signed eps2 - eps1; eps1 belongs to the Floquet state overlapping |1> most".into());
            }
        }
        out
    }
}

/// Partial [`SystemConfig`] used for overrides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverride {
    pub delta0: Option<f64>,
    pub s: Option<f64>,
    pub omega_l: Option<f64>,
    pub g: Option<f64>,
    pub omega_cav: Option<f64>,
    pub gamma_cav: Option<f64>,
    pub temperature: Option<f64>,
    pub omega_c: Option<f64>,
}

impl ConfigOverride {
    fn apply(&self, base: &SystemConfig) -> SystemConfig {
        SystemConfig {
            delta0: self.delta0.unwrap_or(base.delta0),
            s: self.s.unwrap_or(base.s),
            omega_l: self.omega_l.unwrap_or(base.omega_l),
            g: self.g.unwrap_or(base.g),
            omega_cav: self.omega_cav.unwrap_or(base.omega_cav),
            gamma_cav: self.gamma_cav.unwrap_or(base.gamma_cav),
            temperature: self.temperature.unwrap_or(base.temperature),
            omega_c: self.omega_c.unwrap_or(base.omega_c),
        }
    }

    fn per_case_field(&self) -> Option<&'static str> {
        if self.s.is_some() {
            Some("s")
        } else if self.omega_l.is_some() {
            Some("omega_l")
        } else if self.g.is_some() {
            Some("g")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsOverride {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub dt: Option<f64>,
    pub kernel_threshold: Option<f64>,
    pub horizon_cap: Option<f64>,
    pub positivity_eps: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOverride {
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
    pub points: Option<usize>,
    pub config: Option<SystemConfig>,
}

/// The on-disk scenario document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<BlochState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numerics: Option<NumericsOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<Vec<Case>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepOverride>,
}

/// Manifest written next to the outputs of every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub software_version: String,
    pub choices: Vec<String>,
    pub scenario: ScenarioDoc,
    #[serde(default)]
    pub diagnostics: Vec<CaseDiagnostics>,
}

/// Per-case numerical record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDiagnostics {
    pub label: String,
    pub warnings: Vec<Warning>,
    pub dt: Option<f64>,
    pub kernel_tau_max: Option<f64>,
    pub kernel_tail_bound: Option<f64>,
    pub max_norm: f64,
    pub positivity_violations: usize,
    pub first_positivity_violation: Option<f64>,
}

/// Failure of a scenario run, classified for the process exit status.
#[derive(Debug)]
pub enum RunError {
    /// Schema or invariant violation, with a path into the document.
    Invalid {
        path: String,
        message: String,
    },
    Numerics(Error),
    Io {
        path: PathBuf,
        source: io::Error,
    },
}

impl RunError {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        RunError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invalid { .. } => 2,
            RunError::Numerics(_) => 3,
            RunError::Io { .. } => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Invalid { path, message } if path.is_empty() => {
                write!(f, "invalid scenario: {message}")
            }
            RunError::Invalid { path, message } => {
                write!(f, "invalid scenario at `{path}`: {message}")
            }
            RunError::Numerics(e) => write!(f, "numerical failure: {e}"),
            RunError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig { field, reason } => {
                RunError::invalid(format!("config.{field}"), reason)
            }
            Error::InvalidArgument(msg) => RunError::invalid("", msg),
            other => RunError::Numerics(other),
        }
    }
}

fn check_config(config: &SystemConfig, at: &str) -> Result<Vec<Warning>, RunError> {
    validate(*config).map(|v| v.warnings).map_err(|e| match e {
        Error::InvalidConfig { field, reason } => {
            RunError::invalid(format!("{at}.{field}"), reason)
        }
        other => other.into(),
    })
}

fn check_positive(value: f64, path: &str) -> Result<(), RunError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(RunError::invalid(
            path,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

impl Numerics {
    fn check(&self) -> Result<(), RunError> {
        check_positive(self.rtol, "numerics.rtol")?;
        check_positive(self.atol, "numerics.atol")?;
        if let Some(dt) = self.dt {
            check_positive(dt, "numerics.dt")?;
        }
        check_positive(self.kernel_threshold, "numerics.kernel_threshold")?;
        check_positive(self.horizon_cap, "numerics.horizon_cap")?;
        check_positive(self.positivity_eps, "numerics.positivity_eps")
    }

    fn with(mut self, o: &NumericsOverride) -> Self {
        self.rtol = o.rtol.unwrap_or(self.rtol);
        self.atol = o.atol.unwrap_or(self.atol);
        self.dt = o.dt.or(self.dt);
        self.kernel_threshold = o.kernel_threshold.unwrap_or(self.kernel_threshold);
        self.horizon_cap = o.horizon_cap.unwrap_or(self.horizon_cap);
        self.positivity_eps = o.positivity_eps.unwrap_or(self.positivity_eps);
        self
    }
}

impl ScenarioDoc {
    /// Resolves presets, defaults and overrides into a validated scenario.
    pub fn resolve(&self) -> Result<Scenario, RunError> {
        let is_explicit = self.cases.is_some();
        let is_sweep = self.sweep.is_some() || self.preset == Some(Preset::Sweep);
        if self.preset.is_none() && self.config.is_none() && !is_explicit && self.sweep.is_none() {
            return Err(RunError::invalid(
                "",
                "expected a `preset` name or a full `config` (document names neither)",
            ));
        }
        let preset = self.preset.unwrap_or(if is_sweep {
            Preset::Sweep
        } else {
            Preset::Custom
        });
        if is_sweep && preset != Preset::Sweep {
            return Err(RunError::invalid(
                "sweep",
                format!("not allowed with preset {}", preset.name()),
            ));
        }
        let mut scenario = Scenario::preset(preset);
        if let Some(name) = &self.name {
            scenario.name = name.clone();
            scenario.outputs = name.clone();
        }
        if let Some(out) = &self.outputs {
            scenario.outputs = out.clone();
        }
        if scenario.outputs.is_empty() || scenario.outputs.contains(['/', '\\']) {
            return Err(RunError::invalid(
                "outputs",
                "must be a non-empty file stem without path separators",
            ));
        }
        if let Some(n) = &self.numerics {
            scenario.numerics = scenario.numerics.with(n);
        }
        scenario.numerics.check()?;

        if is_explicit && is_sweep {
            return Err(RunError::invalid(
                "cases",
                "cannot be combined with a sweep",
            ));
        }
        if is_sweep {
            let Workload::Sweep(mut spec) = scenario.workload else {
                unreachable!("sweep preset has a sweep workload")
            };
            for (key, present) in [
                ("initial", self.initial.is_some()),
                ("mode", self.mode.is_some()),
                ("t_end", self.t_end.is_some()),
            ] {
                if present {
                    return Err(RunError::invalid(key, "not used by a quasienergy sweep"));
                }
            }
            if let Some(o) = &self.sweep {
                spec.ratio_min = o.ratio_min.unwrap_or(spec.ratio_min);
                spec.ratio_max = o.ratio_max.unwrap_or(spec.ratio_max);
                spec.points = o.points.unwrap_or(spec.points);
                if let Some(c) = o.config {
                    spec.config = c;
                }
            }
            if let Some(o) = &self.config {
                spec.config = o.apply(&spec.config);
            }
            if let Some(n) = self.samples {
                spec.points = n;
            }
            check_config(&spec.config, "sweep.config")?;
            if !(spec.config.omega_l > 0.0) {
                return Err(RunError::invalid(
                    "sweep.config.omega_l",
                    "must be positive",
                ));
            }
            if !(spec.ratio_min >= 0.0
                && spec.ratio_max >= spec.ratio_min
                && spec.ratio_max.is_finite())
            {
                return Err(RunError::invalid(
                    "sweep",
                    "need 0 <= ratio_min <= ratio_max",
                ));
            }
            if spec.points == 0 {
                return Err(RunError::invalid("sweep.points", "must be at least 1"));
            }
            scenario.workload = Workload::Sweep(spec);
            return Ok(scenario);
        }

        let Workload::Trajectories {
            mut t_end,
            mut samples,
            mut cases,
        } = scenario.workload
        else {
            unreachable!("trajectory presets have trajectory workloads")
        };
        if let Some(explicit) = &self.cases {
            for key in ["config", "initial", "mode"] {
                let present = match key {
                    "config" => self.config.is_some(),
                    "initial" => self.initial.is_some(),
                    _ => self.mode.is_some(),
                };
                if present {
                    return Err(RunError::invalid(
                        key,
                        "not allowed together with explicit `cases`",
                    ));
                }
            }
            if explicit.is_empty() {
                return Err(RunError::invalid("cases", "must list at least one case"));
            }
            for (i, c) in explicit.iter().enumerate() {
                if c.mode == Mode::Both {
                    return Err(RunError::invalid(
                        format!("cases[{i}].mode"),
                        "must be closed or dissipative",
                    ));
                }
                if explicit[..i].iter().any(|o| o.label == c.label) {
                    return Err(RunError::invalid(
                        format!("cases[{i}].label"),
                        "duplicate case label",
                    ));
                }
            }
            cases = explicit.clone();
        } else {
            let pinned = matches!(preset, Preset::Fig2 | Preset::Fig3);
            if let Some(o) = &self.config {
                if pinned {
                    if let Some(field) = o.per_case_field() {
                        return Err(RunError::invalid(
                            format!("config.{field}"),
                            format!("set per case by preset {}", preset.name()),
                        ));
                    }
                }
                for c in &mut cases {
                    c.config = o.apply(&c.config);
                }
            }
            if let Some(init) = self.initial {
                for c in &mut cases {
                    c.initial = init;
                }
            }
            match (preset, self.mode) {
                (Preset::Custom, mode) => {
                    let base = cases[0].clone();
                    let mode = mode.unwrap_or(if base.config.g > 0.0 {
                        Mode::Both
                    } else {
                        Mode::Closed
                    });
                    cases = match mode {
                        Mode::Both => vec![
                            Case {
                                label: "closed".into(),
                                mode: Mode::Closed,
                                ..base.clone()
                            },
                            Case {
                                label: "dissipative".into(),
                                mode: Mode::Dissipative,
                                ..base
                            },
                        ],
                        Mode::Closed => vec![Case {
                            label: "closed".into(),
                            mode: Mode::Closed,
                            ..base
                        }],
                        Mode::Dissipative => vec![Case {
                            label: "dissipative".into(),
                            mode: Mode::Dissipative,
                            ..base
                        }],
                    };
                }
                (_, Some(_)) => {
                    return Err(RunError::invalid(
                        "mode",
                        format!("fixed by preset {}", preset.name()),
                    ));
                }
                (_, None) => {}
            }
        }
        t_end = self.t_end.unwrap_or(t_end);
        samples = self.samples.unwrap_or(samples);
        check_positive(t_end, "t_end")?;
        if samples < 2 {
            return Err(RunError::invalid("samples", "must be at least 2"));
        }
        for (i, c) in cases.iter().enumerate() {
            let at = if is_explicit {
                format!("cases[{i}].config")
            } else {
                "config".to_string()
            };
            check_config(&c.config, &at)?;
            let init_at = if is_explicit {
                format!("cases[{i}].initial")
            } else {
                "initial".to_string()
            };
            let st = c.initial;
            if !(st.sx.is_finite() && st.sy.is_finite() && st.sz.is_finite())
                || st.norm() > 1.0 + 1e-12
            {
                return Err(RunError::invalid(
                    init_at,
                    "must be a finite Bloch vector of length <= 1",
                ));
            }
        }
        scenario.workload = Workload::Trajectories {
            t_end,
            samples,
            cases,
        };
        Ok(scenario)
    }
}

impl Scenario {
    /// The explicit document that resolves back to this scenario.
    pub fn to_doc(&self) -> ScenarioDoc {
        let n = &self.numerics;
        let mut doc = ScenarioDoc {
            preset: Some(self.preset),
            name: Some(self.name.clone()),
            outputs: Some(self.outputs.clone()),
            numerics: Some(NumericsOverride {
                rtol: Some(n.rtol),
                atol: Some(n.atol),
                dt: n.dt,
                kernel_threshold: Some(n.kernel_threshold),
                horizon_cap: Some(n.horizon_cap),
                positivity_eps: Some(n.positivity_eps),
            }),
            ..ScenarioDoc::default()
        };
        match &self.workload {
            Workload::Trajectories {
                t_end,
                samples,
                cases,
            } => {
                doc.t_end = Some(*t_end);
                doc.samples = Some(*samples);
                doc.cases = Some(cases.clone());
            }
            Workload::Sweep(s) => {
                doc.sweep = Some(SweepOverride {
                    ratio_min: Some(s.ratio_min),
                    ratio_max: Some(s.ratio_max),
                    points: Some(s.points),
                    config: Some(s.config),
                });
            }
        }
        doc
    }
}

/// Parses a scenario document or a manifest from JSON text.
pub fn parse_scenario(text: &str) -> Result<Scenario, RunError> {
    if text.trim().is_empty() {
        return Err(RunError::invalid(
            "",
            "empty document: expected an object with a `preset` name or a full `config`",
        ));
    }
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| RunError::invalid("", format!("malformed JSON: {e}")))?;
    let is_manifest = value
        .as_object()
        .is_some_and(|o| o.contains_key("software_version"));
    if is_manifest {
        let manifest: Manifest = serde_path_to_error::deserialize(value).map_err(path_error)?;
        prefix_path(manifest.scenario.resolve(), "scenario")
    } else {
        let doc: ScenarioDoc = serde_path_to_error::deserialize(value).map_err(path_error)?;
        doc.resolve()
    }
}

fn prefix_path(r: Result<Scenario, RunError>, prefix: &str) -> Result<Scenario, RunError> {
    r.map_err(|e| match e {
        RunError::Invalid { path, message } => RunError::Invalid {
            path: if path.is_empty() {
                prefix.into()
            } else {
                format!("{prefix}.{path}")
            },
            message,
        },
        other => other,
    })
}

fn path_error(e: serde_path_to_error::Error<serde_json::Error>) -> RunError {
    let path = e.path().to_string();
    let path = if path == "." { String::new() } else { path };
    RunError::invalid(path, e.into_inner().to_string())
}

/// Reads and parses a scenario file.
pub fn parse_config(path: &Path) -> Result<Scenario, RunError> {
    let text = fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

/// Result of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub case: Case,
    pub trajectory: Trajectory,
    pub diagnostics: CaseDiagnostics,
    pub kernel: Option<KernelTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Trajectories(Vec<CaseResult>),
    Sweep(Vec<SweepRow>),
}

fn run_case(
    case: &Case,
    t_end: f64,
    samples: usize,
    numerics: &Numerics,
) -> Result<CaseResult, RunError> {
    let times = uniform_times(t_end, samples);
    let warnings = validate(case.config)?.warnings;
    let (mut trajectory, diagnostics, kernel) = match case.mode {
        Mode::Closed => {
            let tr = integrate_closed(
                case.initial,
                &times,
                &case.config,
                &AdaptiveOptions::new(numerics.rtol, numerics.atol),
            )?;
            let max_norm = tr.states.iter().map(BlochState::norm).fold(0.0, f64::max);
            let diag = CaseDiagnostics {
                label: case.label.clone(),
                warnings,
                dt: None,
                kernel_tau_max: None,
                kernel_tail_bound: None,
                max_norm,
                positivity_violations: 0,
                first_positivity_violation: None,
            };
            (tr, diag, None)
        }
        Mode::Dissipative | Mode::Both => {
            let solver = RedfieldSolver::new(&case.config, t_end, &numerics.redfield())?;
            let run = solver.run(case.initial, &times)?;
            let p: PositivityReport = run.positivity;
            let diag = CaseDiagnostics {
                label: case.label.clone(),
                warnings,
                dt: Some(run.dt),
                kernel_tau_max: Some(solver.kernel().tau_max),
                kernel_tail_bound: Some(solver.kernel().tail_bound),
                max_norm: p.max_norm,
                positivity_violations: p.violations,
                first_positivity_violation: p.first_violation,
            };
            (run.trajectory, diag, Some(solver.kernel().clone()))
        }
    };
    trajectory.label = case.label.clone();
    Ok(CaseResult {
        case: case.clone(),
        trajectory,
        diagnostics,
        kernel,
    })
}

/// Runs every case (in parallel when enabled) and keeps results in memory.
pub fn execute(scenario: &Scenario) -> Result<Outcome, RunError> {
    match &scenario.workload {
        Workload::Sweep(spec) => Ok(Outcome::Sweep(quasienergy_sweep(
            &spec.config,
            &spec.ratios(),
        )?)),
        Workload::Trajectories {
            t_end,
            samples,
            cases,
        } => {
            let run = |c: &Case| run_case(c, *t_end, *samples, &scenario.numerics);
            #[cfg(feature = "parallel")]
            let results: Result<Vec<_>, _> = cases.par_iter().map(run).collect();
            #[cfg(not(feature = "parallel"))]
            let results: Result<Vec<_>, _> = cases.iter().map(run).collect();
            Ok(Outcome::Trajectories(results?))
        }
    }
}

/// Floats in CSV output: 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, RunError> {
    let file = fs::File::create(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(file))
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> RunError + '_ {
    move |e| RunError::Io {
        path: path.to_path_buf(),
        source: io::Error::other(e),
    }
}

/// Writes `t, sigma_x, sigma_y, sigma_z, case_label` rows for all cases.
pub fn write_trajectories_csv(path: &Path, results: &[CaseResult]) -> Result<(), RunError> {
    let mut w = csv_writer(path)?;
    let err = csv_io(path);
    w.write_record(["t", "sigma_x", "sigma_y", "sigma_z", "case_label"])
        .map_err(&err)?;
    for r in results {
        for (t, s) in r.trajectory.times.iter().zip(&r.trajectory.states) {
            w.write_record([
                format_float(*t),
                format_float(s.sx),
                format_float(s.sy),
                format_float(s.sz),
                r.case.label.clone(),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `s_over_wl, eps1, eps2, splitting, splitting_highfreq` rows.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), RunError> {
    let mut w = csv_writer(path)?;
    let err = csv_io(path);
    w.write_record([
        "s_over_wl",
        "eps1",
        "eps2",
        "splitting",
        "splitting_highfreq",
    ])
    .map_err(&err)?;
    for r in rows {
        w.write_record(
            [
                r.s_over_wl,
                r.eps1,
                r.eps2,
                r.splitting,
                r.splitting_highfreq,
            ]
            .map(format_float),
        )
        .map_err(&err)?;
    }
    w.flush().map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `tau, m_real, m_imag` rows.
pub fn write_kernel_csv(path: &Path, kernel: &KernelTable) -> Result<(), RunError> {
    let mut w = csv_writer(path)?;
    let err = csv_io(path);
    w.write_record(["tau", "m_real", "m_imag"]).map_err(&err)?;
    for k in 0..kernel.len() {
        w.write_record([kernel.tau(k), kernel.m_real[k], kernel.m_imag[k]].map(format_float))
            .map_err(&err)?;
    }
    w.flush().map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Paths written by [`run_scenario`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WrittenFiles {
    pub data: PathBuf,
    pub manifest: PathBuf,
    pub kernels: Vec<PathBuf>,
}

/// Output switches of [`run_scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutputOptions {
    pub dump_kernel: bool,
}

/// Executes a scenario and writes its CSV, optional kernel dumps and the manifest.
pub fn run_scenario(
    scenario: &Scenario,
    out_dir: &Path,
    options: OutputOptions,
) -> Result<(Outcome, WrittenFiles), RunError> {
    fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let outcome = execute(scenario)?;
    let stem = &scenario.outputs;
    let mut files = WrittenFiles {
        data: out_dir.join(format!("{stem}.csv")),
        manifest: out_dir.join(format!("{stem}.manifest.json")),
        kernels: Vec::new(),
    };
    let diagnostics = match &outcome {
        Outcome::Trajectories(results) => {
            write_trajectories_csv(&files.data, results)?;
            if options.dump_kernel {
                for r in results {
                    if let Some(k) = &r.kernel {
                        let p = out_dir.join(format!("{stem}.{}.kernel.csv", r.case.label));
                        write_kernel_csv(&p, k)?;
                        files.kernels.push(p);
                    }
                }
            }
            results.iter().map(|r| r.diagnostics.clone()).collect()
        }
        Outcome::Sweep(rows) => {
            write_sweep_csv(&files.data, rows)?;
            Vec::new()
        }
    };
    let manifest = Manifest {
        software_version: SOFTWARE_VERSION.into(),
        choices: scenario.choices(),
        scenario: scenario.to_doc(),
        diagnostics,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest is always serializable");
    fs::write(&files.manifest, json + "\n").map_err(|source| RunError::Io {
        path: files.manifest.clone(),
        source,
    })?;
    Ok((outcome, files))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Scenario, RunError> {
        parse_scenario(s)
    }

    fn invalid_path(r: Result<Scenario, RunError>) -> String {
        match r {
            Err(RunError::Invalid { path, .. }) => path,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn presets_are_locked() {
        let s = Scenario::preset(Preset::Fig1a);
        let c = &s.cases()[0];
        assert_eq!(
            (c.config.s, c.config.omega_l, c.config.g),
            (120.241, 50.0, 0.0)
        );
        assert_eq!(c.initial, BlochState::new(1.0, 0.0, 0.0));
        assert_eq!(c.mode, Mode::Closed);
        assert_eq!(
            Scenario::preset(Preset::Fig1b).cases()[0].initial,
            BlochState::new(0.0, 0.0, 1.0)
        );

        for (preset, init) in [
            (Preset::Fig2, [1.0, 0.0, 0.0]),
            (Preset::Fig3, [0.0, 0.0, 1.0]),
        ] {
            let s = Scenario::preset(preset);
            let got: Vec<(f64, f64, f64, f64, Mode)> = s
                .cases()
                .iter()
                .map(|c| {
                    (
                        c.config.s,
                        c.config.g,
                        c.config.gamma_cav,
                        c.config.omega_cav,
                        c.mode,
                    )
                })
                .collect();
            assert_eq!(
                got,
                vec![
                    (0.0, 0.0, 0.1, 1.0, Mode::Closed),
                    (1.0, 0.0, 0.1, 1.0, Mode::Closed),
                    (0.0, 0.05, 0.1, 1.0, Mode::Dissipative),
                    (1.0, 0.05, 0.1, 1.0, Mode::Dissipative),
                ]
            );
            for c in s.cases() {
                assert_eq!(c.initial, BlochState::from(init));
                assert_eq!(c.config.omega_l, 1.0);
                assert_eq!(c.config.temperature, 0.0);
            }
        }
        let Workload::Sweep(sw) = Scenario::preset(Preset::Sweep).workload else {
            panic!()
        };
        assert_eq!(
            (sw.config.omega_l, sw.ratio_min, sw.ratio_max),
            (50.0, 0.0, 3.0)
        );
    }

    #[test]
    fn minimal_preset_reference() {
        let s = parse(r#"{"preset":"fig1b"}"#).unwrap();
        assert_eq!(s, Scenario::preset(Preset::Fig1b));
    }

    #[test]
    fn rejects_kernel_without_poles() {
        let r = parse(r#"{"preset":"fig2","config":{"gamma_cav":2.0}}"#);
        assert_eq!(invalid_path(r), "config.gamma_cav");
    }

    #[test]
    fn empty_document_names_expected_keys() {
        for text in ["", "  \n", "{}"] {
            match parse(text) {
                Err(RunError::Invalid { message, .. }) => {
                    assert!(
                        message.contains("preset") && message.contains("config"),
                        "{message}"
                    );
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn unknown_keys_report_paths() {
        assert_eq!(
            invalid_path(parse(r#"{"preset":"fig2","confg":{}}"#)),
            "confg"
        );
        assert_eq!(
            invalid_path(parse(r#"{"preset":"fig2","config":{"gama":1}}"#)),
            "config.gama"
        );
        assert_eq!(
            invalid_path(parse(r#"{"preset":"fig2","config":{"g":"x"}}"#)),
            "config.g"
        );
        assert_eq!(invalid_path(parse(r#"{"preset":"fig9"}"#)), "preset");
        assert_eq!(invalid_path(parse(r#"{"config":{"g":-1}}"#)), "config.g");
    }

    #[test]
    fn preset_structure_is_enforced() {
        assert_eq!(
            invalid_path(parse(r#"{"preset":"fig2","config":{"g":0.1}}"#)),
            "config.g"
        );
        assert_eq!(
            invalid_path(parse(r#"{"preset":"fig2","mode":"closed"}"#)),
            "mode"
        );
        assert_eq!(
            invalid_path(parse(r#"{"preset":"sweep","t_end":3}"#)),
            "t_end"
        );
        assert_eq!(
            invalid_path(parse(r#"{"preset":"fig1a","samples":1}"#)),
            "samples"
        );
        assert_eq!(
            invalid_path(parse(r#"{"preset":"fig1a","initial":[1,1,0]}"#)),
            "initial"
        );
        assert_eq!(
            invalid_path(parse(r#"{"preset":"fig1a","numerics":{"rtol":0}}"#)),
            "numerics.rtol"
        );
    }

    #[test]
    fn overrides_apply() {
        let s = parse(r#"{"preset":"fig1a","config":{"s":110},"t_end":5,"samples":11}"#).unwrap();
        assert_eq!(s.cases()[0].config.s, 110.0);
        let Workload::Trajectories { t_end, samples, .. } = s.workload else {
            panic!()
        };
        assert_eq!((t_end, samples), (5.0, 11));

        let s = parse(r#"{"config":{"g":0.05,"s":1.0}}"#).unwrap();
        assert_eq!(s.preset, Preset::Custom);
        let labels: Vec<&str> = s.cases().iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["closed", "dissipative"]);
    }

    #[test]
    fn resolved_document_round_trips() {
        for p in [Preset::Fig1a, Preset::Fig2, Preset::Sweep] {
            let s = Scenario::preset(p);
            let json = serde_json::to_string(&s.to_doc()).unwrap();
            assert_eq!(parse(&json).unwrap(), s);
        }
        let s =
            parse(r#"{"config":{"g":0.05,"s":0.3,"omega_l":1.1},"numerics":{"dt":0.01}}"#).unwrap();
        let json = serde_json::to_string(&s.to_doc()).unwrap();
        assert_eq!(parse(&json).unwrap(), s);
    }

    #[test]
    fn explicit_cases_are_checked() {
        let bad = r#"{"t_end":1,"cases":[{"label":"a","mode":"both","initial":[1,0,0],"config":
            {"delta0":1,"s":0,"omega_l":1,"g":0,"omega_cav":1,"gamma_cav":0.1,"temperature":0,"omega_c":1000}}]}"#;
        assert_eq!(invalid_path(parse(bad)), "cases[0].mode");
        let bad = bad
            .replace("\"both\"", "\"closed\"")
            .replace("\"gamma_cav\":0.1", "\"gamma_cav\":1.0");
        assert_eq!(invalid_path(parse(&bad)), "cases[0].config.gamma_cav");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(RunError::invalid("x", "y").exit_code(), 2);
        assert_eq!(
            RunError::Numerics(Error::StepSizeUnderflow { t: 0.0, h: 0.0 }).exit_code(),
            3
        );
        let io = RunError::Io {
            path: "x".into(),
            source: io::Error::other("boom"),
        };
        assert_eq!(io.exit_code(), 1);
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-2.5), "-2.5000000000000000e0");
        let x = std::f64::consts::PI;
        assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }
}
