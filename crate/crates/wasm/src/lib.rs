//! Browser bindings: closed and dissipative trajectories, the quasienergy
//! splitting scan and CDT amplitudes. Arrays are returned flattened.

use driven_tls::closed::integrate_closed;
use driven_tls::floquet::{find_cdt_amplitude, quasienergy_sweep};
use driven_tls::model::uniform_times;
use driven_tls::ode::AdaptiveOptions;
use driven_tls::redfield::{integrate_redfield, RedfieldSettings};
use driven_tls::{validate, BlochState, SystemConfig, Trajectory};
use wasm_bindgen::prelude::*;

fn js_err(e: driven_tls::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn flatten(tr: &Trajectory) -> Vec<f64> {
    tr.times
        .iter()
        .zip(&tr.states)
        .flat_map(|(&t, s)| [t, s.sx, s.sy, s.sz])
        .collect()
}

fn initial(x: f64, y: f64, z: f64) -> Result<BlochState, JsError> {
    let s = BlochState::new(x, y, z);
    if s.norm() > 1.0 + 1e-12 {
        return Err(JsError::new("initial Bloch vector must have length <= 1"));
    }
    Ok(s)
}

/// Closed-system trajectory as `[t, σx, σy, σz]` rows.
#[wasm_bindgen]
pub fn closed_trajectory(
    s: f64,
    omega_l: f64,
    x0: f64,
    y0: f64,
    z0: f64,
    t_end: f64,
    samples: usize,
) -> Result<Vec<f64>, JsError> {
    let cfg = SystemConfig {
        s,
        omega_l,
        ..SystemConfig::default()
    };
    validate(cfg).map_err(js_err)?;
    let times = uniform_times(t_end, samples.max(2));
    let tr = integrate_closed(
        initial(x0, y0, z0)?,
        &times,
        &cfg,
        &AdaptiveOptions::default(),
    )
    .map_err(js_err)?;
    Ok(flatten(&tr))
}

/// Dissipative trajectory (zero temperature) as `[t, σx, σy, σz]` rows.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn dissipative_trajectory(
    s: f64,
    omega_l: f64,
    g: f64,
    omega_cav: f64,
    gamma_cav: f64,
    x0: f64,
    y0: f64,
    z0: f64,
    t_end: f64,
    samples: usize,
) -> Result<Vec<f64>, JsError> {
    let cfg = SystemConfig {
        s,
        omega_l,
        g,
        omega_cav,
        gamma_cav,
        temperature: 0.0,
        ..SystemConfig::default()
    };
    validate(cfg).map_err(js_err)?;
    let times = uniform_times(t_end, samples.max(2));
    let run = integrate_redfield(
        initial(x0, y0, z0)?,
        &times,
        &cfg,
        &RedfieldSettings::default(),
    )
    .map_err(js_err)?;
    Ok(flatten(&run.trajectory))
}

/// Quasienergy splitting against s/ω_L as `[ratio, monodromy, J₀ formula]` rows.
#[wasm_bindgen]
pub fn splitting_scan(omega_l: f64, ratio_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let base = SystemConfig {
        omega_l,
        ..SystemConfig::default()
    };
    validate(base).map_err(js_err)?;
    let n = points.max(2);
    let ratios: Vec<f64> = (0..n)
        .map(|i| ratio_max * i as f64 / (n - 1) as f64)
        .collect();
    let rows = quasienergy_sweep(&base, &ratios).map_err(js_err)?;
    Ok(rows
        .iter()
        .flat_map(|r| [r.s_over_wl, r.splitting, r.splitting_highfreq])
        .collect())
}

/// Drive amplitude of the k-th CDT point at frequency ω_L.
#[wasm_bindgen]
pub fn cdt_amplitude(omega_l: f64, k: usize) -> Result<f64, JsError> {
    find_cdt_amplitude(omega_l, k).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_flattened() {
        let v = closed_trajectory(0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 5)
            .ok()
            .unwrap();
        assert_eq!(v.len(), 20);
        assert_eq!(&v[..4], &[0.0, 1.0, 0.0, 0.0]);
        let last = &v[16..];
        assert!((last[0] - 1.0).abs() < 1e-15);
        assert!((last[1] - 1f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn scan_has_three_columns() {
        let v = splitting_scan(50.0, 3.0, 4).ok().unwrap();
        assert_eq!(v.len(), 12);
        assert!((v[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cdt_point() {
        let s = cdt_amplitude(1.0, 1).ok().unwrap();
        assert!((s - 2.404_825_557_695_773).abs() < 1e-9);
    }

    #[test]
    fn dissipative_decays() {
        let v = dissipative_trajectory(0.0, 1.0, 0.05, 1.0, 0.1, 1.0, 0.0, 0.0, 20.0, 3)
            .ok()
            .unwrap();
        let r = (v[9] * v[9] + v[10] * v[10] + v[11] * v[11]).sqrt();
        assert!(r < 1.0 && r > 0.5);
    }
}
