//! Commanded wrist base, 4-DOF passive soft wrist and penalty contact.
//!
//! Generalized coordinates are `[base x, base y, base z, q_z, θx, θy, θz]`.
//! The distal body (gripper plus peg) hangs from the wrist pivot located at
//! `base + q_z·ẑ` and is rotated by `Rz(θz)·Ry(θy)·Rx(θx)`.
//!
//! Each substep solves one linear system for the velocity increment. Spring,
//! damper and tracking forces are taken at the step midpoint (trapezoidal,
//! so a free spring-damper never gains energy); contact forces are
//! linearized at the end of the step, which keeps stiff penalty contact and
//! the viscous friction regularization stable at 500 Hz.

use nalgebra::{SMatrix, SVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::geometry::{peg_tip, sdf_plate_with_hole, HoleGeometry, Mat3, PegGeometry, Pose, Vec3};

pub type Vec7 = SVector<f64, 7>;
pub type Mat7 = SMatrix<f64, 7, 7>;
type Mat3x7 = SMatrix<f64, 3, 7>;

pub const MAX_DEFLECTION_Z: f64 = 0.1;
pub const MAX_SPEED: f64 = 10.0;
/// Number of trailing substeps averaged into the force reading.
pub const READING_WINDOW: usize = 5;
/// Bound on `k_c·dt²/m` below which the contact integration is trusted.
pub const CONTACT_STABILITY_BOUND: f64 = 1.0;

/// Passive wrist spring and damper constants (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WristParams {
    pub k_z: f64,
    pub kappa_x: f64,
    pub kappa_y: f64,
    pub kappa_z: f64,
    pub b_z: f64,
    pub beta_x: f64,
    pub beta_y: f64,
    pub beta_z: f64,
}

impl Default for WristParams {
    fn default() -> Self {
        Self {
            k_z: 1000.0,
            kappa_x: 0.5,
            kappa_y: 0.5,
            kappa_z: 5.0,
            b_z: 1.0,
            beta_x: 0.005,
            beta_y: 0.005,
            beta_z: 1.0,
        }
    }
}

impl WristParams {
    pub fn stiffness(&self) -> Vector4<f64> {
        Vector4::new(self.k_z, self.kappa_x, self.kappa_y, self.kappa_z)
    }

    pub fn damping(&self) -> Vector4<f64> {
        Vector4::new(self.b_z, self.beta_x, self.beta_y, self.beta_z)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let all = self.stiffness().iter().chain(self.damping().iter()).copied().collect::<Vec<_>>();
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(SimError::InvalidParams(format!("wrist stiffness and damping must be > 0: {self:?}")))
        }
    }
}

/// Penalty contact model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    /// Penalty stiffness (N/m).
    pub k_c: f64,
    /// Penetration damping (N·s/m).
    pub b_c: f64,
    /// Coulomb friction coefficient.
    pub mu: f64,
    /// Tangential viscous regularization (N·s/m).
    pub k_t: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { k_c: 5.0e4, b_c: 100.0, mu: 0.3, k_t: 1.0e4 }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = [self.k_c, self.b_c, self.mu, self.k_t].iter().all(|v| v.is_finite() && *v > 0.0)
            && self.mu < 2.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidParams(format!("contact parameters must be > 0 with mu < 2: {self:?}")))
        }
    }
}

/// Inertial parameters of the base and the distal body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyParams {
    pub distal_mass: f64,
    /// Diagonal inertia about the wrist pivot (kg·m²).
    pub distal_inertia: [f64; 3],
    pub base_mass: f64,
    /// Gravitational acceleration along -z (m/s²).
    pub gravity: f64,
}

impl Default for BodyParams {
    fn default() -> Self {
        Self { distal_mass: 0.5, distal_inertia: [2e-3, 2e-3, 1e-3], base_mass: 5.0, gravity: 9.81 }
    }
}

impl BodyParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.distal_mass > 0.0
            && self.base_mass > 0.0
            && self.distal_inertia.iter().all(|i| *i > 0.0)
            && self.gravity.is_finite()
            && self.gravity >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidParams(format!("masses and inertias must be > 0: {self:?}")))
        }
    }
}

/// Integrated simulator state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WristState {
    pub base_pos: Vec3,
    pub base_vel: Vec3,
    /// Current interpolation target of the base tracker.
    pub base_ref: Vec3,
    /// Passive deflection `(z, θx, θy, θz)`.
    pub q: Vector4<f64>,
    pub qdot: Vector4<f64>,
}

impl WristState {
    pub fn at_rest(base_pos: Vec3) -> Self {
        Self {
            base_pos,
            base_vel: Vec3::zeros(),
            base_ref: base_pos,
            q: Vector4::zeros(),
            qdot: Vector4::zeros(),
        }
    }

    fn coords(&self) -> Vec7 {
        Vec7::from_iterator(self.base_pos.iter().chain(self.q.iter()).copied())
    }

    fn velocities(&self) -> Vec7 {
        Vec7::from_iterator(self.base_vel.iter().chain(self.qdot.iter()).copied())
    }

    fn set(&mut self, x: &Vec7, v: &Vec7) {
        self.base_pos = Vec3::new(x[0], x[1], x[2]);
        self.q = Vector4::new(x[3], x[4], x[5], x[6]);
        self.base_vel = Vec3::new(v[0], v[1], v[2]);
        self.qdot = Vector4::new(v[3], v[4], v[5], v[6]);
    }
}

/// Generalized restoring force of the wrist springs and dampers.
pub fn spring_wrench(q: &Vector4<f64>, qdot: &Vector4<f64>, params: &WristParams) -> Vector4<f64> {
    -params.stiffness().component_mul(q) - params.damping().component_mul(qdot)
}

/// Critically damped derivative gain of the base tracker.
pub fn tracking_damping(gain: f64, base_mass: f64) -> f64 {
    2.0 * (gain * base_mass).sqrt()
}

/// PD force pulling the base toward its interpolation target.
pub fn base_tracking_force(state: &WristState, gain: f64, base_mass: f64) -> Vec3 {
    (state.base_ref - state.base_pos) * gain - state.base_vel * tracking_damping(gain, base_mass)
}

/// Penalty contact force on a single point.
pub fn contact_force(point: &Vec3, vel: &Vec3, hole: &HoleGeometry, params: &ContactParams) -> Vec3 {
    contact_eval(point, vel, hole, params).map(|c| c.force).unwrap_or_else(Vec3::zeros)
}

struct ContactEval {
    force: Vec3,
    /// -∂f/∂p
    stiffness: Mat3,
    /// -∂f/∂v
    damping: Mat3,
}

fn contact_eval(point: &Vec3, vel: &Vec3, hole: &HoleGeometry, params: &ContactParams) -> Option<ContactEval> {
    let (phi, n) = sdf_plate_with_hole(point, hole);
    if phi >= 0.0 {
        return None;
    }
    let vn = vel.dot(&n);
    let fn_mag = -params.k_c * phi - params.b_c * vn;
    if fn_mag <= 0.0 {
        return None;
    }
    let nn = n * n.transpose();
    let mut force = n * fn_mag;
    let stiffness = nn * params.k_c;
    let mut damping = nn * params.b_c;

    let vt = vel - n * vn;
    let vt_norm = vt.norm();
    if vt_norm >= 1e-9 {
        let tangent_proj = Mat3::identity() - nn;
        let coulomb = params.mu * fn_mag;
        let viscous = params.k_t * vt_norm;
        if viscous <= coulomb {
            force -= vt * params.k_t;
            damping += tangent_proj * params.k_t;
        } else {
            let dir = vt / vt_norm;
            force -= dir * coulomb;
            damping += (tangent_proj - dir * dir.transpose()) * (coulomb / vt_norm);
        }
    }
    Some(ContactEval { force, stiffness, damping })
}

fn rot_x(a: f64) -> (Mat3, Mat3) {
    let (s, c) = a.sin_cos();
    (
        Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        Mat3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s),
    )
}

fn rot_y(a: f64) -> (Mat3, Mat3) {
    let (s, c) = a.sin_cos();
    (
        Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        Mat3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s),
    )
}

fn rot_z(a: f64) -> (Mat3, Mat3) {
    let (s, c) = a.sin_cos();
    (
        Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
        Mat3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0),
    )
}

/// Wrist rotation and its partial derivatives with respect to
/// `(θx, θy, θz)`.
fn wrist_rotation(q: &Vector4<f64>) -> (Mat3, [Mat3; 3]) {
    let (rx, drx) = rot_x(q[1]);
    let (ry, dry) = rot_y(q[2]);
    let (rz, drz) = rot_z(q[3]);
    let r = rz * ry * rx;
    (r, [rz * ry * drx, rz * dry * rx, drz * ry * rx])
}

/// Everything `step_physics` needs besides the state: parameters, the
/// assembly geometry and the tracker gain.
#[derive(Debug, Clone)]
pub struct PhysicsModel {
    pub wrist: WristParams,
    pub contact: ContactParams,
    pub body: BodyParams,
    /// Base tracker stiffness (N/m).
    pub tracking_gain: f64,
    pub hole: HoleGeometry,
    pub peg: PegGeometry,
    /// Distal-frame pose of the peg frame (grasp point and in-grasp tilt).
    pub grasp: Pose,
    pub contact_enabled: bool,
    /// Pin the base in place (used by isolated wrist checks).
    pub base_fixed: bool,
    points_local: Vec<Vec3>,
    lever_arm: f64,
    mass: Mat7,
}

impl PhysicsModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        wrist: WristParams,
        contact: ContactParams,
        body: BodyParams,
        tracking_gain: f64,
        hole: HoleGeometry,
        peg: PegGeometry,
        grasp: Pose,
    ) -> Result<Self, SimError> {
        wrist.validate()?;
        contact.validate()?;
        body.validate()?;
        if !(tracking_gain.is_finite() && tracking_gain > 0.0) {
            return Err(SimError::InvalidParams(format!("tracking gain must be > 0, got {tracking_gain}")));
        }
        hole.validate().map_err(|e| SimError::InvalidParams(e.to_string()))?;
        peg.validate().map_err(|e| SimError::InvalidParams(e.to_string()))?;
        let points_local = peg.sample_points.iter().map(|p| grasp.transform_point(p)).collect();
        let lever_arm = grasp.transform_point(&peg.centroid_local()).norm();
        if lever_arm <= 0.0 {
            return Err(SimError::InvalidParams("peg centroid coincides with the wrist pivot".into()));
        }
        let md = body.distal_mass;
        let mut mass = Mat7::zeros();
        for i in 0..3 {
            mass[(i, i)] = body.base_mass + md;
        }
        mass[(3, 3)] = md;
        mass[(2, 3)] = md;
        mass[(3, 2)] = md;
        for i in 0..3 {
            mass[(4 + i, 4 + i)] = body.distal_inertia[i];
        }
        Ok(Self {
            wrist,
            contact,
            body,
            tracking_gain,
            hole,
            peg,
            grasp,
            contact_enabled: true,
            base_fixed: false,
            points_local,
            lever_arm,
            mass,
        })
    }

    /// Distance from the wrist pivot to the peg centroid.
    pub fn lever_arm(&self) -> f64 {
        self.lever_arm
    }

    pub fn pivot(&self, state: &WristState) -> Vec3 {
        state.base_pos + Vec3::new(0.0, 0.0, state.q[0])
    }

    pub fn distal_pose(&self, state: &WristState) -> Pose {
        Pose::new(self.pivot(state), wrist_rotation(&state.q).0)
    }

    pub fn peg_pose(&self, state: &WristState) -> Pose {
        self.distal_pose(state).compose(&self.grasp)
    }

    pub fn tip(&self, state: &WristState) -> Vec3 {
        peg_tip(&self.peg_pose(state), &self.peg)
    }

    /// Peg tip offset from the base for a given deflection.
    pub fn tip_offset(&self, q: &Vector4<f64>) -> Vec3 {
        let mut s = WristState::at_rest(Vec3::zeros());
        s.q = *q;
        self.tip(&s)
    }

    /// World positions of all contact sample points.
    pub fn sample_points_world(&self, state: &WristState) -> Vec<Vec3> {
        let pose = self.distal_pose(state);
        self.points_local.iter().map(|r| pose.transform_point(r)).collect()
    }

    /// Spring deflection at rest under gravity with the base held still.
    pub fn gravity_sag(&self) -> Vector4<f64> {
        Vector4::new(-self.body.distal_mass * self.body.gravity / self.wrist.k_z, 0.0, 0.0, 0.0)
    }

    /// Force sensed through the wrist: the external force at the peg
    /// centroid that balances the current spring and damper wrench.
    pub fn force_reading(&self, state: &WristState) -> Vec3 {
        let s = spring_wrench(&state.q, &state.qdot, &self.wrist);
        Vec3::new(s[2] / self.lever_arm, -s[1] / self.lever_arm, -s[0])
    }

    /// Kinetic plus spring potential energy of the passive wrist alone.
    pub fn wrist_energy(&self, state: &WristState) -> f64 {
        let k = self.wrist.stiffness();
        let m = [self.body.distal_mass, self.body.distal_inertia[0], self.body.distal_inertia[1], self.body.distal_inertia[2]];
        (0..4).map(|i| 0.5 * m[i] * state.qdot[i].powi(2) + 0.5 * k[i] * state.q[i].powi(2)).sum()
    }

    /// Total contact force currently acting on the peg.
    pub fn contact_force_sum(&self, state: &WristState) -> Vec3 {
        if !self.contact_enabled {
            return Vec3::zeros();
        }
        let pose = self.distal_pose(state);
        let (_, drot) = wrist_rotation(&state.q);
        let v = state.velocities();
        self.points_local
            .iter()
            .map(|r| {
                let jac = Self::point_jacobian(&drot, r);
                contact_force(&pose.transform_point(r), &(jac * v), &self.hole, &self.contact)
            })
            .sum()
    }

    fn point_jacobian(drot: &[Mat3; 3], r: &Vec3) -> Mat3x7 {
        let mut j = Mat3x7::zeros();
        for i in 0..3 {
            j[(i, i)] = 1.0;
        }
        j[(2, 3)] = 1.0;
        for (k, d) in drot.iter().enumerate() {
            j.set_column(4 + k, &(d * r));
        }
        j
    }

    fn check(&self, state: &WristState) -> Result<(), SimError> {
        let finite = state.base_pos.iter().chain(state.base_vel.iter()).chain(state.q.iter()).chain(state.qdot.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(SimError::Diverged("non-finite state".into()));
        }
        if state.q[0].abs() > MAX_DEFLECTION_Z {
            return Err(SimError::Diverged(format!("z deflection {:.4} m exceeds {MAX_DEFLECTION_Z} m", state.q[0])));
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if state.q[1].abs() >= half_pi || state.q[2].abs() >= half_pi {
            return Err(SimError::Diverged(format!("wrist tilt ({:.3}, {:.3}) rad beyond pi/2", state.q[1], state.q[2])));
        }
        let reach = self.points_local.iter().map(|r| r.norm()).fold(0.0, f64::max);
        let ang = Vec3::new(state.qdot[1], state.qdot[2], state.qdot[3]).norm();
        let speed = state.base_vel.norm() + state.qdot[0].abs() + ang * reach;
        if speed > MAX_SPEED {
            return Err(SimError::Diverged(format!("speed bound {speed:.2} m/s exceeds {MAX_SPEED} m/s")));
        }
        Ok(())
    }

    fn substep(&self, state: &mut WristState, ref_mid: &Vec3, h: f64) {
        let x = state.coords();
        let v = state.velocities();
        let gain = self.tracking_gain;
        let kd = tracking_damping(gain, self.body.base_mass);
        let k = self.wrist.stiffness();
        let b = self.wrist.damping();
        let md = self.body.distal_mass;
        let g = self.body.gravity;

        let mut k_lin = Vec7::zeros();
        let mut d_lin = Vec7::zeros();
        for i in 0..3 {
            k_lin[i] = gain;
            d_lin[i] = kd;
        }
        for i in 0..4 {
            k_lin[3 + i] = k[i];
            d_lin[3 + i] = b[i];
        }
        // Constant part of the forces: tracker reference, gravity and the
        // controller's gravity compensation of the carried weight.
        let mut f_const = Vec7::zeros();
        for i in 0..3 {
            f_const[i] = gain * ref_mid[i];
        }
        f_const[3] = -md * g;

        let mut a = self.mass;
        let mut rhs = f_const;
        for i in 0..7 {
            a[(i, i)] += 0.5 * h * d_lin[i] + 0.25 * h * h * k_lin[i];
            rhs[i] -= k_lin[i] * (x[i] + 0.5 * h * v[i]) + d_lin[i] * v[i];
        }

        if self.contact_enabled {
            let pose = self.distal_pose(state);
            let (_, drot) = wrist_rotation(&state.q);
            for r in &self.points_local {
                let p = pose.transform_point(r);
                let (phi, _) = sdf_plate_with_hole(&p, &self.hole);
                if phi >= 0.0 {
                    continue;
                }
                let jac = Self::point_jacobian(&drot, r);
                let pv = jac * v;
                if let Some(c) = contact_eval(&p, &pv, &self.hole, &self.contact) {
                    let jt = jac.transpose();
                    let kc = jt * c.stiffness * jac;
                    let dc = jt * c.damping * jac;
                    a += dc * h + kc * (0.5 * h * h);
                    rhs += jt * c.force - kc * v * h;
                }
            }
        }
        rhs *= h;

        if self.base_fixed {
            for i in 0..3 {
                for j in 0..7 {
                    a[(i, j)] = 0.0;
                    a[(j, i)] = 0.0;
                }
                a[(i, i)] = 1.0;
                rhs[i] = -v[i];
            }
        }

        let dv = a.lu().solve(&rhs).unwrap_or_else(|| Vec7::from_element(f64::NAN));
        let v_new = v + dv;
        let x_new = x + (v + v_new) * (0.5 * h);
        state.set(&x_new, &v_new);
    }
}

/// One recorded substep for trace dumps.
#[derive(Debug, Clone, Copy)]
pub struct SubstepRecord {
    pub t: f64,
    pub base_pos: Vec3,
    pub q: Vector4<f64>,
    pub qdot: Vector4<f64>,
    pub contact_force: Vec3,
    pub reading: Vec3,
}

impl SubstepRecord {
    pub const CSV_HEADER: &'static str = "t,base_x,base_y,base_z,q_z,q_rx,q_ry,q_rz,qd_z,qd_rx,qd_ry,qd_rz,fc_x,fc_y,fc_z,reading_x,reading_y,reading_z";

    pub fn csv_row(&self) -> String {
        let vals: Vec<String> = std::iter::once(self.t)
            .chain(self.base_pos.iter().copied())
            .chain(self.q.iter().copied())
            .chain(self.qdot.iter().copied())
            .chain(self.contact_force.iter().copied())
            .chain(self.reading.iter().copied())
            .map(|v| format!("{v}"))
            .collect();
        vals.join(",")
    }
}

/// Advance one control period. The base reference moves linearly from its
/// current value to `action_target` across `n_substeps` substeps. Returns
/// the new state and the force reading averaged over the final substeps.
pub fn step_physics(
    state: &WristState,
    action_target: &Vec3,
    model: &PhysicsModel,
    dt: f64,
    n_substeps: usize,
) -> Result<(WristState, Vec3), SimError> {
    step_physics_traced(state, action_target, model, dt, n_substeps, 0.0, None)
}

/// `step_physics` with an optional per-substep trace. `t0` is the time
/// stamp of the incoming state.
pub fn step_physics_traced(
    state: &WristState,
    action_target: &Vec3,
    model: &PhysicsModel,
    dt: f64,
    n_substeps: usize,
    t0: f64,
    mut trace: Option<&mut Vec<SubstepRecord>>,
) -> Result<(WristState, Vec3), SimError> {
    assert!(n_substeps > 0, "n_substeps must be positive");
    let h = dt / n_substeps as f64;
    let start_ref = state.base_ref;
    let mut s = *state;
    let window = READING_WINDOW.min(n_substeps);
    let mut reading = Vec3::zeros();
    for i in 0..n_substeps {
        let frac_mid = (i as f64 + 0.5) / n_substeps as f64;
        let ref_mid = start_ref + (action_target - start_ref) * frac_mid;
        model.substep(&mut s, &ref_mid, h);
        s.base_ref = start_ref + (action_target - start_ref) * ((i + 1) as f64 / n_substeps as f64);
        model.check(&s)?;
        let r = model.force_reading(&s);
        if i >= n_substeps - window {
            reading += r;
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(SubstepRecord {
                t: t0 + (i + 1) as f64 * h,
                base_pos: s.base_pos,
                q: s.q,
                qdot: s.qdot,
                contact_force: model.contact_force_sum(&s),
                reading: r,
            });
        }
    }
    s.base_ref = *action_target;
    Ok((s, reading / window as f64))
}

/// `k_c·dt²/m` for the distal body at substep `dt`.
pub fn contact_stability_ratio(contact: &ContactParams, body: &BodyParams, dt: f64) -> f64 {
    contact.k_c * dt * dt / body.distal_mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CrossSection;

    fn hole() -> HoleGeometry {
        HoleGeometry {
            cross_section: CrossSection::Circle { radius: 0.021 },
            center: [0.0, 0.0],
            top_z: 0.0,
            depth: 0.03,
            plate_extent: 0.2,
        }
    }

    fn model() -> PhysicsModel {
        PhysicsModel::new(
            WristParams::default(),
            ContactParams::default(),
            BodyParams::default(),
            1.0e4,
            hole(),
            PegGeometry::new(CrossSection::Circle { radius: 0.02 }, 0.06),
            Pose::from_translation(Vec3::new(0.0, 0.0, -0.05)),
        )
        .unwrap()
    }

    #[test]
    fn spring_wrench_examples() {
        let p = WristParams::default();
        let z = Vector4::zeros();
        assert_eq!(spring_wrench(&z, &z, &p), Vector4::zeros());
        let w = spring_wrench(&Vector4::new(0.01, 0.0, 0.0, 0.0), &z, &p);
        assert!((w - Vector4::new(-10.0, 0.0, 0.0, 0.0)).norm() < 1e-12);
        let w = spring_wrench(&Vector4::new(0.0, 0.1, 0.0, 0.0), &Vector4::new(0.0, 1.0, 0.0, 0.0), &p);
        assert!((w - Vector4::new(0.0, -0.055, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn contact_force_examples() {
        let h = hole();
        let params = ContactParams::default();
        let away = Vec3::new(0.05, 0.0, 0.0);
        assert_eq!(contact_force(&(away + Vec3::new(0.0, 0.0, 0.001)), &Vec3::zeros(), &h, &params), Vec3::zeros());
        let p = away + Vec3::new(0.0, 0.0, -0.001);
        let f = contact_force(&p, &Vec3::zeros(), &h, &params);
        assert!((f - Vec3::new(0.0, 0.0, 50.0)).norm() < 1e-9);
        let f = contact_force(&p, &Vec3::new(0.01, 0.0, 0.0), &h, &params);
        assert!((f - Vec3::new(-15.0, 0.0, 50.0)).norm() < 1e-9);
        // slow sliding stays in the viscous regime
        let f = contact_force(&p, &Vec3::new(0.0, 1e-4, 0.0), &h, &params);
        assert!((f - Vec3::new(0.0, -1.0, 50.0)).norm() < 1e-9);
        // a fast separating point carries no force
        let f = contact_force(&p, &Vec3::new(0.0, 0.0, 1.0), &h, &params);
        assert_eq!(f, Vec3::zeros());
    }

    #[test]
    fn tracking_force_examples() {
        let mut s = WristState::at_rest(Vec3::zeros());
        assert_eq!(base_tracking_force(&s, 1e3, 5.0), Vec3::zeros());
        s.base_ref = Vec3::new(0.001, 0.0, 0.0);
        assert!((base_tracking_force(&s, 1e3, 5.0) - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        let mut s = WristState::at_rest(Vec3::zeros());
        s.base_vel = Vec3::new(0.1, 0.0, 0.0);
        let f = base_tracking_force(&s, 1e4, 5.0);
        assert!((f.x + 2.0 * (5.0f64 * 1e4).sqrt() * 0.1).abs() < 1e-12);
        assert!((f.x + 44.72).abs() < 0.01);
    }

    #[test]
    fn equilibrium_is_preserved() {
        let mut m = model();
        m.body.gravity = 0.0;
        m.contact_enabled = false;
        let s = WristState::at_rest(Vec3::new(0.0, -0.015, 0.2));
        let (next, reading) = step_physics(&s, &s.base_pos, &m, 0.05, 25).unwrap();
        assert_eq!(next, s);
        assert_eq!(reading, Vec3::zeros());
    }

    #[test]
    fn step_is_deterministic() {
        let m = model();
        let mut s = WristState::at_rest(Vec3::new(0.0, -0.01, 0.112));
        s.q = m.gravity_sag();
        let target = s.base_pos + Vec3::new(0.002, 0.003, -0.003);
        let a = step_physics(&s, &target, &m, 0.05, 25).unwrap();
        let b = step_physics(&s, &target, &m, 0.05, 25).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let mut m = model();
        m.contact_enabled = false;
        let mut s = WristState::at_rest(Vec3::new(0.0, 0.0, 0.3));
        s.q[0] = 0.2;
        assert!(matches!(step_physics(&s, &s.base_pos, &m, 0.05, 25), Err(SimError::Diverged(_))));
    }

    #[test]
    fn invalid_params_rejected() {
        let mut w = WristParams::default();
        w.kappa_x = -0.5;
        assert!(w.validate().is_err());
        let mut c = ContactParams::default();
        c.mu = 2.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn reading_balances_springs() {
        let m = model();
        let mut s = WristState::at_rest(Vec3::zeros());
        s.q = Vector4::new(0.002, 0.01, -0.02, 0.0);
        let r = m.force_reading(&s);
        let l = m.lever_arm();
        // the reading's generalized force cancels the spring wrench
        let sw = spring_wrench(&s.q, &s.qdot, &m.wrist);
        assert!((r.z + sw[0]).abs() < 1e-12);
        assert!((r.y * l + sw[1]).abs() < 1e-12);
        assert!((-r.x * l + sw[2]).abs() < 1e-12);
    }
}
