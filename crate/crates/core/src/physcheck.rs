//! Self-checks of the wrist simulator against closed-form references.

use nalgebra::Vector4;
use rand::Rng as _;
use serde::Serialize;

use crate::dynamics::{contact_stability_ratio, step_physics_traced, PhysicsModel, WristState, CONTACT_STABILITY_BOUND};
use crate::env::{hole_geometry, peg_geometry, PhysicsConfig};
use crate::error::SimError;
use crate::geometry::{sdf_plate_with_hole, Pose, ShapeKind, Vec3};
use crate::seed;

pub const OSCILLATOR_RMS_TOL: f64 = 0.02;
pub const OSCILLATOR_DURATION: f64 = 0.5;
pub const ENERGY_REL_TOL: f64 = 1e-9;
pub const SAG_TOL: f64 = 1e-4;
pub const PENETRATION_SLACK: f64 = 1e-5;

pub const DOF_NAMES: [&str; 4] = ["z", "rx", "ry", "rz"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{} {}: {} (value {:.3e}, tolerance {:.3e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.value,
            self.tolerance
        )
    }
}

/// Free response `x(t)` of `m·x'' + b·x' + k·x = 0` from `x(0) = x0`, `x'(0) = 0`.
pub fn damped_oscillator(m: f64, k: f64, b: f64, x0: f64, t: f64) -> f64 {
    let w = (k / m).sqrt();
    let zeta = b / (2.0 * (k * m).sqrt());
    if (zeta - 1.0).abs() < 1e-12 {
        x0 * (1.0 + w * t) * (-w * t).exp()
    } else if zeta < 1.0 {
        let wd = w * (1.0 - zeta * zeta).sqrt();
        (-zeta * w * t).exp() * x0 * ((wd * t).cos() + zeta * w / wd * (wd * t).sin())
    } else {
        let s = w * (zeta * zeta - 1.0).sqrt();
        let r1 = -zeta * w + s;
        let r2 = -zeta * w - s;
        // x = c1 e^{r1 t} + c2 e^{r2 t}, c1 + c2 = x0, r1 c1 + r2 c2 = 0
        let c1 = -r2 * x0 / (r1 - r2);
        let c2 = r1 * x0 / (r1 - r2);
        c1 * (r1 * t).exp() + c2 * (r2 * t).exp()
    }
}

/// Model with the peg over a hole far away, contact and gravity as given.
fn isolated_model(cfg: &PhysicsConfig, gravity: bool, contact: bool) -> Result<PhysicsModel, SimError> {
    let g = &cfg.geometry;
    let mut body = cfg.body;
    if !gravity {
        body.gravity = 0.0;
    }
    let mut grasp = Pose::identity();
    grasp.position = Vec3::new(0.0, 0.0, -g.pivot_to_grasp);
    let mut m = PhysicsModel::new(
        cfg.wrist,
        cfg.contact,
        body,
        1.0e4,
        hole_geometry(g, ShapeKind::Circle, [0.0, 0.0]),
        peg_geometry(g, ShapeKind::Circle),
        grasp,
    )?;
    m.contact_enabled = contact;
    m.base_fixed = true;
    Ok(m)
}

/// Simulate `duration` seconds from `state`, returning every substep state.
fn simulate(cfg: &PhysicsConfig, model: &PhysicsModel, state: WristState, duration: f64) -> Result<Vec<WristState>, SimError> {
    let periods = (duration / cfg.control_period).round() as usize;
    let mut s = state;
    let mut out = Vec::with_capacity(periods * cfg.substeps + 1);
    out.push(s);
    for _ in 0..periods {
        let mut trace = Vec::new();
        let start = s;
        let (next, _) = step_physics_traced(&s, &s.base_pos, model, cfg.control_period, cfg.substeps, 0.0, Some(&mut trace))?;
        for r in &trace {
            let mut st = start;
            st.base_pos = r.base_pos;
            st.q = r.q;
            st.qdot = r.qdot;
            out.push(st);
        }
        s = next;
    }
    Ok(out)
}

fn dof_mass(cfg: &PhysicsConfig, dof: usize) -> f64 {
    if dof == 0 {
        cfg.body.distal_mass
    } else {
        cfg.body.distal_inertia[dof - 1]
    }
}

/// Free release of one passive DOF against the closed-form oscillator.
/// Returns the RMS error relative to the RMS of the reference.
pub fn oscillator_error(cfg: &PhysicsConfig, dof: usize, amplitude: f64) -> Result<f64, SimError> {
    let model = isolated_model(cfg, false, false)?;
    let mut s = WristState::at_rest(Vec3::new(0.0, 0.0, 1.0));
    s.q[dof] = amplitude;
    let states = simulate(cfg, &model, s, OSCILLATOR_DURATION)?;
    let k = cfg.wrist.stiffness()[dof];
    let b = cfg.wrist.damping()[dof];
    let m = dof_mass(cfg, dof);
    let h = cfg.substep_dt();
    let (mut err, mut norm) = (0.0, 0.0);
    for (i, st) in states.iter().enumerate() {
        let exact = damped_oscillator(m, k, b, amplitude, i as f64 * h);
        err += (st.q[dof] - exact).powi(2);
        norm += exact * exact;
    }
    Ok((err / norm).sqrt())
}

/// Largest relative energy increase over any substep, from random initial
/// deflections with the base pinned, gravity and contact off.
pub fn max_energy_increase(cfg: &PhysicsConfig, trials: usize, seed_value: u64) -> Result<f64, SimError> {
    let model = isolated_model(cfg, false, false)?;
    let mut rng = seed::stream(seed_value, "physics-energy", 0);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let mut s = WristState::at_rest(Vec3::new(0.0, 0.0, 1.0));
        s.q = Vector4::new(
            rng.random_range(-0.02..0.02),
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
        );
        s.qdot = Vector4::new(
            rng.random_range(-0.1..0.1),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let states = simulate(cfg, &model, s, 0.5)?;
        for w in states.windows(2) {
            let e0 = model.wrist_energy(&w[0]);
            let e1 = model.wrist_energy(&w[1]);
            worst = worst.max((e1 - e0) / e0.max(f64::MIN_POSITIVE));
        }
    }
    Ok(worst)
}

/// Settled z deflection under gravity with the base pinned, contact off.
pub fn gravity_sag(cfg: &PhysicsConfig) -> Result<f64, SimError> {
    let model = isolated_model(cfg, true, false)?;
    let states = simulate(cfg, &model, WristState::at_rest(Vec3::new(0.0, 0.0, 1.0)), 10.0)?;
    Ok(states.last().expect("at least the initial state").q[0])
}

/// Steady-state penetration of a peg lowered onto the plate away from the
/// hole, with the wrist carrying none of its weight at first contact.
pub fn resting_penetration(cfg: &PhysicsConfig) -> Result<f64, SimError> {
    let model = isolated_model(cfg, true, true)?;
    let g = &cfg.geometry;
    // tip just touching the plate, clear of the hole
    let x = g.hole_nominal[0] + 3.0 * g.peg_size;
    let tip_below_base = g.pivot_to_grasp + g.peg_length;
    let base = Vec3::new(x, g.hole_nominal[1], g.hole_top_z + tip_below_base);
    let states = simulate(cfg, &model, WristState::at_rest(base), 10.0)?;
    let last = states.last().expect("at least the initial state");
    let pts = model.sample_points_world(last);
    let deepest = pts.iter().map(|p| sdf_plate_with_hole(p, &model.hole).0).fold(f64::INFINITY, f64::min);
    Ok((-deepest).max(0.0))
}

/// Every check, in a fixed order.
pub fn run_physics_checks(cfg: &PhysicsConfig) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let failed = |name: String, e: SimError| CheckResult {
        name,
        passed: false,
        value: f64::NAN,
        tolerance: f64::NAN,
        detail: format!("simulation error: {e}"),
    };

    let ratio = contact_stability_ratio(&cfg.contact, &cfg.body, cfg.substep_dt());
    out.push(CheckResult {
        name: "integrator-stability".into(),
        passed: ratio < CONTACT_STABILITY_BOUND,
        value: ratio,
        tolerance: CONTACT_STABILITY_BOUND,
        detail: format!("k_c*dt^2/m = {ratio:.4}"),
    });

    let amplitudes = [0.01, 0.05, 0.05, 0.05];
    for (dof, amp) in amplitudes.into_iter().enumerate() {
        let name = format!("oscillator-{}", DOF_NAMES[dof]);
        out.push(match oscillator_error(cfg, dof, amp) {
            Ok(e) => CheckResult {
                name,
                passed: e < OSCILLATOR_RMS_TOL,
                value: e,
                tolerance: OSCILLATOR_RMS_TOL,
                detail: format!("relative RMS error {:.3}% over {OSCILLATOR_DURATION} s", 100.0 * e),
            },
            Err(e) => failed(name, e),
        });
    }

    out.push(match max_energy_increase(cfg, 8, 0) {
        Ok(inc) => CheckResult {
            name: "energy-non-increasing".into(),
            passed: inc <= ENERGY_REL_TOL,
            value: inc,
            tolerance: ENERGY_REL_TOL,
            detail: format!("largest relative energy increase per substep {inc:.3e}"),
        },
        Err(e) => failed("energy-non-increasing".into(), e),
    });

    let expected = -cfg.body.distal_mass * cfg.body.gravity / cfg.wrist.k_z;
    out.push(match gravity_sag(cfg) {
        Ok(q) => CheckResult {
            name: "gravity-sag".into(),
            passed: (q - expected).abs() <= SAG_TOL,
            value: (q - expected).abs(),
            tolerance: SAG_TOL,
            detail: format!("q_z = {q:.6} m, expected {expected:.6} m"),
        },
        Err(e) => failed("gravity-sag".into(), e),
    });

    let bound = cfg.body.distal_mass * cfg.body.gravity / cfg.contact.k_c + PENETRATION_SLACK;
    out.push(match resting_penetration(cfg) {
        Ok(p) => CheckResult {
            name: "contact-rest".into(),
            passed: p < bound,
            value: p,
            tolerance: bound,
            detail: format!("penetration {:.3e} m", p),
        },
        Err(e) => failed("contact-rest".into(), e),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillator_reference_regimes() {
        // x'' + 2x' + x = 0 (critical): x = (1 + t) e^-t
        assert!((damped_oscillator(1.0, 1.0, 2.0, 1.0, 1.0) - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
        // undamped: cos(w t)
        assert!((damped_oscillator(1.0, 4.0, 0.0, 1.0, 0.3) - (0.6f64).cos()).abs() < 1e-12);
        // x'' + 3x' + 2x = 0: roots -1, -2, x = 2e^-t - e^-2t
        let t = 0.7;
        assert!((damped_oscillator(1.0, 2.0, 3.0, 1.0, t) - (2.0 * (-t).exp() - (-2.0 * t).exp())).abs() < 1e-12);
        assert_eq!(damped_oscillator(0.5, 1000.0, 1.0, 0.01, 0.0), 0.01);
    }

    #[test]
    fn defaults_pass() {
        let cfg = PhysicsConfig::default();
        for c in run_physics_checks(&cfg) {
            assert!(c.passed, "{}", c.line());
        }
    }

    #[test]
    fn stiff_contact_fails_stability() {
        let mut cfg = PhysicsConfig::default();
        cfg.contact.k_c = 1e9;
        let checks = run_physics_checks(&cfg);
        assert!(!checks[0].passed);
        assert_eq!(checks[0].name, "integrator-stability");
    }
}
