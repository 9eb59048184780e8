//! Quasi-static contact world: a rigid box held by a compliant parallel-jaw
//! grip, resting on or pivoting about a surface corner.
//!
//! Every tick solves a one-dimensional static equilibrium for the box
//! rotation, then resolves grip friction (translational slide along the
//! finger axis, rotational slip about the grasp) against Coulomb capacities.
//!
//! Conventions:
//! - World frame: x right, z up, surface at z = 0.
//! - `rot` is the pivot angle: 0 flat, pi/2 upright, positive in the tip
//!   direction regardless of `pivot_direction`. Internally torques and
//!   relative angles use a mathematically positive (CCW) angle
//!   chi = -pivot_direction * rot.
//! - Material frame: (u, w) with u along the resting face (0..base) and w up
//!   the initial height (0..height); the pivot corner is (0, 0) and the
//!   default grasp corner (base, height).
//! - The grip acts as a 2D linear spring between the tool point and the
//!   grasped material point, plus a torsional spring about it; both saturate
//!   at Coulomb friction capacities derived from the grip normal force.
//!   Because the jaws squeeze out of plane, in-plane loads are carried by
//!   pad shear; the slip-relevant component is the one along the finger
//!   axis (gravity-aligned unless the tool rotates), while the jaw-closing
//!   direction reacts rigidly.

use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};
use crate::geometry::{BoxSpec, Pivot, PivotGeometry};

/// Spacing of tactile pillars in the 3x3 fingertip array, m.
pub const PILLAR_PITCH: f64 = 0.006;
/// Pillars per finger.
pub const PILLARS_PER_FINGER: usize = 9;
/// Largest box-rotation change the quasi-static relaxation may take in one
/// tick, rad (bounds snap transitions to a finite, deterministic rate).
const CHI_STEP_MAX: f64 = 0.05;
/// Rotation clamp beyond the nominal [0, pi/2] pivot range, rad.
const ROT_MARGIN: f64 = 0.35;
/// Bisection iterations for the equilibrium solve (bracket width 0.1 rad
/// shrinks below 1e-16 rad).
const SOLVE_ITERS: usize = 56;

/// Stiffness, friction, and judging parameters of the contact model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactParams {
    /// Finger-pad normal compression stiffness, N/m.
    pub pad_stiffness: f64,
    /// Tactile pillar shear stiffness, N/mm.
    pub pillar_shear_stiffness: f64,
    /// Surface contact stiffness per corner, N/m.
    pub surface_stiffness: f64,
    /// Rotational friction coefficient of the soft tactile fingertips.
    pub mu_rot: f64,
    /// Effective tactile patch radius for rotational friction, m.
    pub rot_contact_radius: f64,
    /// Gripper opening limit, m.
    pub max_width: f64,
    /// Pad compression commanded by the rigid ("as hard as possible") grip, m.
    pub rigid_squeeze: f64,
    /// Effective patch radius of the flat rigid jaws, m.
    pub rigid_rot_radius: f64,
    /// Torsional stiffness of the rigid grip, N*m/rad.
    pub rigid_torsion_spring: f64,
    /// Surface penetration beyond which the solve is inconsistent, m.
    pub penetration_bound: f64,
    /// Accumulated in-hand slide at which the box is dropped, m.
    pub drop_slide: f64,
    /// Translational slide allowed per tick while slipping, m.
    pub slide_rate_max: f64,
    /// Corner height above which a lift counts for judging, m.
    pub lift_tol: f64,
    /// Angle short of pi/2 at which the pivot counts as complete, rad.
    pub angle_tol: f64,
    /// Tool translation speed limit, m/s.
    pub tool_v_max: f64,
    /// Tool rotation speed limit, rad/s.
    pub tool_omega_max: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            pad_stiffness: 5000.0,
            pillar_shear_stiffness: 2.0,
            surface_stiffness: 50_000.0,
            mu_rot: 0.5,
            rot_contact_radius: 0.006,
            max_width: 0.085,
            rigid_squeeze: 0.012,
            rigid_rot_radius: 0.02,
            rigid_torsion_spring: 50.0,
            penetration_bound: 0.001,
            drop_slide: 0.02,
            slide_rate_max: 0.0015,
            lift_tol: 0.002,
            angle_tol: 1.0_f64.to_radians(),
            tool_v_max: 0.045,
            tool_omega_max: 0.15,
        }
    }
}

impl ContactParams {
    /// Width change per gripper increment, m (1/256 of the opening range).
    pub fn grip_step(&self) -> f64 {
        self.max_width / 256.0
    }

    /// In-plane grip spring stiffness: 18 pillars sharing shear load, N/m.
    pub fn grip_spring(&self) -> f64 {
        2.0 * PILLARS_PER_FINGER as f64 * self.pillar_shear_stiffness * 1000.0
    }

    /// Torsional stiffness of the tactile grip about the patch center,
    /// N*m/rad: the 3x3 pillar array has sum of squared center offsets
    /// 12 * pitch^2 per finger.
    pub fn tactile_torsion_spring(&self) -> f64 {
        2.0 * 12.0 * PILLAR_PITCH * PILLAR_PITCH * self.pillar_shear_stiffness * 1000.0
    }

    pub fn validate(&self) -> SimResult<()> {
        for (name, v) in [
            ("pad_stiffness", self.pad_stiffness),
            ("pillar_shear_stiffness", self.pillar_shear_stiffness),
            ("surface_stiffness", self.surface_stiffness),
            ("max_width", self.max_width),
            ("rigid_torsion_spring", self.rigid_torsion_spring),
            ("penetration_bound", self.penetration_bound),
            ("drop_slide", self.drop_slide),
            ("slide_rate_max", self.slide_rate_max),
            ("lift_tol", self.lift_tol),
            ("angle_tol", self.angle_tol),
            ("tool_v_max", self.tool_v_max),
            ("tool_omega_max", self.tool_omega_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.mu_rot < 0.0
            || self.rot_contact_radius < 0.0
            || self.rigid_rot_radius < 0.0
            || self.rigid_squeeze < 0.0
        {
            return Err(SimError::Config(
                "friction and squeeze parameters must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Contact regime of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    /// One corner pinned on the surface; the box rotates about it.
    Contact,
    /// Airborne, carried entirely by the grasp.
    Hanging,
    /// Slid out of the grasp; resting free on the surface.
    Dropped,
}

/// Grip style currently attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GripKind {
    Tactile,
    Rigid,
}

/// One tick's command: where the tool should be, how wide the grip, over dt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCommand {
    pub tool: (f64, f64),
    /// Tool rotation in the pivot-positive convention, rad.
    pub tool_rot: f64,
    pub grip_width: f64,
    pub dt: f64,
}

/// Events raised by one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepEvents {
    pub lift_onset: bool,
    pub translational_slip: bool,
    pub rotational_slip: bool,
    pub drop: bool,
    pub pivot_complete: bool,
}

/// Boolean state flags mirrored into snapshots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StateFlags {
    pub lifted: bool,
    pub translational_slipping: bool,
    pub rotational_slipping: bool,
    pub dropped: bool,
}

/// Static force balance of the current pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticsSolution {
    /// Force the grasp delivers to the box, world frame, N.
    pub wrist_force: (f64, f64),
    /// Grasp wrench torque re-referenced to the box center, pivot-positive,
    /// N*m (pairs with the center pose for energy accounting).
    pub wrist_torque: f64,
    /// Total surface normal force, N.
    pub surface_normal: f64,
    /// Grasp load along the finger axis (positive pulls the box up-axis), N.
    pub grasp_tangential: f64,
    /// Friction moment the grip carries about the grasp point,
    /// pivot-positive, N*m.
    pub grasp_torque: f64,
    /// Height of the original pivot corner above the surface, m.
    pub pivot_corner_height: f64,
    /// Whether surface friction suffices to keep the pinned corner put.
    pub surface_friction_ok: bool,
}

/// Full ground-truth snapshot of the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    /// Box center pose: position (m) and pivot angle (rad).
    pub x: f64,
    pub z: f64,
    pub rot: f64,
    /// Plastic (slipped) orientation of the box relative to the tool,
    /// mathematically positive, rad. Zero until rotational slip occurs.
    pub in_hand_angle: f64,
    pub tool: (f64, f64),
    pub tool_rot: f64,
    pub grip_width: f64,
    /// Total normal force of the finger pair, N.
    pub grip_normal: f64,
    pub surface_normal: f64,
    /// Force and center-referenced torque carried through the grasp
    /// (pivot-positive torque), N / N*m.
    pub wrist: (f64, f64, f64),
    pub sim_time: f64,
    pub flags: StateFlags,
    pub mode: ContactMode,
    /// Height of the original pivot corner, m.
    pub pivot_corner_height: f64,
    /// Accumulated in-hand slide along the finger axis, m.
    pub slide_acc: f64,
    /// Elastic torsional load currently carried (post-saturation),
    /// mathematically positive, N*m.
    pub torsion_moment: f64,
    /// Center of mass, world frame, m.
    pub com: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
struct Solved {
    chi: f64,
    grasp_force: (f64, f64),
    torsion_moment: f64,
    pin_normal: f64,
    spring_normals: [f64; 3],
    total_surface_normal: f64,
}

fn cross(p: (f64, f64), q: (f64, f64)) -> f64 {
    p.0 * q.1 - p.1 * q.0
}

/// The simulated world for one trial.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: BoxSpec,
    pub geom: PivotGeometry,
    pub params: ContactParams,
    /// Material coordinates of the reference corner: the pinned corner while
    /// in contact, the grasped point while hanging.
    anchor_material: (f64, f64),
    /// World x of the pinned corner (contact mode only).
    anchor_x: f64,
    /// Material coordinates of the grasped point.
    grasp_material: (f64, f64),
    mode: ContactMode,
    rot: f64,
    tool: (f64, f64),
    tool_rot: f64,
    grip_width: f64,
    grasped: bool,
    grip_kind: GripKind,
    /// Plastic anchor of the torsion spring (the in-hand angle), math CCW.
    psi_anchor: f64,
    slide_acc: f64,
    sim_time: f64,
    work_j: f64,
    center_prev: (f64, f64),
    chi_prev: f64,
    work_chi_prev: f64,
    hang_peak: f64,
    lifted_ever: bool,
    dropped: bool,
    last: Solved,
    last_flags: StateFlags,
}

impl World {
    /// Create a world with the box flat on the surface, its pivot corner at
    /// world x = 0, and the open tool positioned at the pivot grasp corner.
    pub fn new(spec: BoxSpec, pivot: Pivot, params: ContactParams) -> SimResult<World> {
        let geom = crate::geometry::make_pivot_geometry(&spec, pivot)?;
        Self::with_geometry(spec, geom, params)
    }

    /// As [`World::new`] but with an explicit (possibly mirrored) geometry.
    pub fn with_geometry(
        spec: BoxSpec,
        geom: PivotGeometry,
        params: ContactParams,
    ) -> SimResult<World> {
        spec.validate()?;
        params.validate()?;
        let grasp = crate::geometry::synthesize_grasp(&geom, &spec, params.max_width)?;
        let mut w = World {
            grasp_material: (geom.base, geom.height),
            spec,
            geom,
            params,
            anchor_material: (0.0, 0.0),
            anchor_x: 0.0,
            mode: ContactMode::Contact,
            rot: 0.0,
            tool: grasp.grasp_point,
            tool_rot: 0.0,
            grip_width: 0.0,
            grasped: false,
            grip_kind: GripKind::Tactile,
            psi_anchor: 0.0,
            slide_acc: 0.0,
            sim_time: 0.0,
            work_j: 0.0,
            center_prev: (0.0, 0.0),
            chi_prev: 0.0,
            work_chi_prev: 0.0,
            hang_peak: 0.0,
            lifted_ever: false,
            dropped: false,
            last: Solved {
                chi: 0.0,
                grasp_force: (0.0, 0.0),
                torsion_moment: 0.0,
                pin_normal: 0.0,
                spring_normals: [0.0; 3],
                total_surface_normal: 0.0,
            },
            last_flags: StateFlags::default(),
        };
        w.grip_width = w.params.max_width;
        let sol = w.solve_contact()?;
        w.accept(sol);
        w.work_chi_prev = w.chi_prev;
        w.center_prev = w.center_world();
        Ok(w)
    }

    /// Move the free tool (pre-grasp setup; not part of the timed trial).
    pub fn set_tool_pose(&mut self, tool: (f64, f64), tool_rot: f64) -> SimResult<()> {
        if self.grasped {
            return Err(SimError::InvalidCommand(
                "cannot teleport the tool while grasping".into(),
            ));
        }
        self.tool = tool;
        self.tool_rot = tool_rot;
        Ok(())
    }

    /// Close instantly to the rigid ("as hard as possible") grip at the
    /// default grasp corner. Models the flat rubberized jaws used by the
    /// methods that forgo tactile sensing.
    pub fn grasp_rigid(&mut self) -> SimResult<()> {
        self.grasp_rigid_at(self.geom.base, self.geom.height)
    }

    /// Rigid grasp at an arbitrary material point (u, w); the tool snaps to
    /// that point's current world position.
    pub fn grasp_rigid_at(&mut self, u: f64, w: f64) -> SimResult<()> {
        if self.grasped {
            return Err(SimError::GraspFailed("already grasping".into()));
        }
        if !(0.0..=self.geom.base).contains(&u) || !(0.0..=self.geom.height).contains(&w) {
            return Err(SimError::GraspFailed(format!(
                "grasp point ({u}, {w}) lies outside the box"
            )));
        }
        self.grasp_material = (u, w);
        self.tool = self.point_world(u, w);
        self.grip_width = (self.spec.dim_c - self.params.rigid_squeeze).max(0.0);
        self.grip_kind = GripKind::Rigid;
        self.attach();
        Ok(())
    }

    /// Set the gripper width instantly (scripted-scenario hook); closing
    /// below the box thickness attaches a tactile-style grasp at the default
    /// grasp corner.
    pub fn set_grip_immediate(&mut self, width: f64) -> SimResult<()> {
        if !(0.0..=self.params.max_width).contains(&width) {
            return Err(SimError::InvalidCommand(format!(
                "grip width {width} outside [0, {}]",
                self.params.max_width
            )));
        }
        self.grip_width = width;
        self.grip_kind = GripKind::Tactile;
        self.attach();
        Ok(())
    }

    fn attach(&mut self) {
        if !self.grasped && !self.dropped && self.grip_normal() > 0.0 {
            self.grasped = true;
            self.slide_acc = 0.0;
            // Zero elastic torsion at attachment.
            self.psi_anchor = self.chi_prev - self.tool_math_angle();
        }
    }

    /// Total normal force of the finger pair, N.
    pub fn grip_normal(&self) -> f64 {
        self.params.pad_stiffness * (self.spec.dim_c - self.grip_width).max(0.0)
    }

    pub fn is_grasped(&self) -> bool {
        self.grasped
    }

    pub fn sim_time(&self) -> f64 {
        self.sim_time
    }

    /// Positive mechanical work delivered through the grasp so far, J.
    pub fn work_j(&self) -> f64 {
        self.work_j
    }

    /// Greatest height the original pivot corner reached while airborne, m.
    pub fn hang_peak(&self) -> f64 {
        self.hang_peak
    }

    /// Whether the pivot corner ever rose beyond the lift tolerance.
    pub fn lifted_ever(&self) -> bool {
        self.lifted_ever
    }

    pub fn mode(&self) -> ContactMode {
        self.mode
    }

    /// Torsional stiffness of the attached grip, N*m/rad.
    pub fn torsion_stiffness(&self) -> f64 {
        match self.grip_kind {
            GripKind::Tactile => self.params.tactile_torsion_spring(),
            GripKind::Rigid => self.params.rigid_torsion_spring,
        }
    }

    fn torsion_capacity(&self) -> f64 {
        if !self.grasped {
            return 0.0;
        }
        match self.grip_kind {
            GripKind::Tactile => {
                self.params.mu_rot * self.grip_normal() * self.params.rot_contact_radius
            }
            GripKind::Rigid => {
                self.spec.mu_finger * self.grip_normal() * self.params.rigid_rot_radius
            }
        }
    }

    fn tool_math_angle(&self) -> f64 {
        -self.geom.pivot_direction * self.tool_rot
    }

    /// Effective tool point after accounting for accumulated in-hand slide
    /// (the box receding down the fingers lowers the point the grip pulls
    /// toward).
    fn tool_effective(&self) -> (f64, f64) {
        // The finger axis points along the tool's +z (rotating with the
        // tool, in the pivot-positive sense); slide moves the grasp point
        // down that axis.
        let (s, c) = self.tool_rot.sin_cos();
        (
            self.tool.0 + self.geom.pivot_direction * s * self.slide_acc,
            self.tool.1 - c * self.slide_acc,
        )
    }

    /// World position of material point (u, w) at math angle `chi`, given
    /// the world position `origin` of the reference material point `anchor`.
    fn material_to_world(
        &self,
        chi: f64,
        anchor: (f64, f64),
        origin: (f64, f64),
        u: f64,
        w: f64,
    ) -> (f64, f64) {
        let dir = self.geom.pivot_direction;
        let rot = -dir * chi;
        let (s, c) = rot.sin_cos();
        let du = u - anchor.0;
        let dw = w - anchor.1;
        (origin.0 - dir * (du * c - dw * s), origin.1 + du * s + dw * c)
    }

    fn reference_origin(&self) -> (f64, f64) {
        match self.mode {
            ContactMode::Hanging => self.grasp_world_from_spring(),
            _ => (self.anchor_x, 0.0),
        }
    }

    /// World position of a material point in the current pose.
    pub fn point_world(&self, u: f64, w: f64) -> (f64, f64) {
        self.material_to_world(
            self.chi_prev,
            self.anchor_material,
            self.reference_origin(),
            u,
            w,
        )
    }

    fn center_world(&self) -> (f64, f64) {
        self.point_world(self.geom.base / 2.0, self.geom.height / 2.0)
    }

    fn com_world(&self) -> (f64, f64) {
        self.point_world(self.geom.com.0, self.geom.com.1)
    }

    fn grasp_world_from_spring(&self) -> (f64, f64) {
        // Hanging equilibrium: the spring carries exactly the weight.
        let te = self.tool_effective();
        (te.0, te.1 - self.spec.weight() / self.params.grip_spring())
    }

    /// Lowest box corner and its world position in the hanging pose at `chi`.
    fn lowest_corner_hanging(&self, chi: f64) -> ((f64, f64), (f64, f64)) {
        let grasp = self.grasp_world_from_spring();
        let (b, h) = (self.geom.base, self.geom.height);
        let mut low_corner = (0.0, 0.0);
        let mut low_pos = (0.0, f64::INFINITY);
        for (u, w) in [(0.0, 0.0), (b, 0.0), (b, h), (0.0, h)] {
            let p = self.material_to_world(chi, self.grasp_material, grasp, u, w);
            if p.1 < low_pos.1 {
                low_corner = (u, w);
                low_pos = p;
            }
        }
        (low_corner, low_pos)
    }

    /// Corners other than the pinned one, material coordinates.
    fn secondary_corners(&self) -> [(f64, f64); 3] {
        let (b, h) = (self.geom.base, self.geom.height);
        let all = [(0.0, 0.0), (b, 0.0), (b, h), (0.0, h)];
        let mut out = [(0.0, 0.0); 3];
        let mut i = 0;
        for c in all {
            if c != self.anchor_material && i < 3 {
                out[i] = c;
                i += 1;
            }
        }
        out
    }

    fn clamped_torsion(&self, chi: f64) -> f64 {
        if !self.grasped {
            return 0.0;
        }
        let psi_elastic = (chi - self.tool_math_angle()) - self.psi_anchor;
        let m = -self.torsion_stiffness() * psi_elastic;
        let cap = self.torsion_capacity();
        m.clamp(-cap, cap)
    }

    fn chi_bounds(&self) -> (f64, f64) {
        // rot in [-ROT_MARGIN, pi/2 + ROT_MARGIN] maps to chi bounds whose
        // order depends on the pivot direction.
        let a = -self.geom.pivot_direction * (-ROT_MARGIN);
        let b = -self.geom.pivot_direction * (std::f64::consts::FRAC_PI_2 + ROT_MARGIN);
        (a.min(b), a.max(b))
    }

    /// Residual torque (math CCW) about the pinned corner in contact mode,
    /// with the secondary corner normals and grasp spring force it implies.
    fn contact_residual(&self, chi: f64) -> (f64, [f64; 3], (f64, f64)) {
        let origin = (self.anchor_x, 0.0);
        let mg = self.spec.weight();
        let com = self.material_to_world(
            chi,
            self.anchor_material,
            origin,
            self.geom.com.0,
            self.geom.com.1,
        );
        let grasp = self.material_to_world(
            chi,
            self.anchor_material,
            origin,
            self.grasp_material.0,
            self.grasp_material.1,
        );
        let te = self.tool_effective();
        let k = self.params.grip_spring();
        let f = if self.grasped {
            (k * (te.0 - grasp.0), k * (te.1 - grasp.1))
        } else {
            (0.0, 0.0)
        };
        let mut tau = cross((grasp.0 - origin.0, grasp.1 - origin.1), f)
            + cross((com.0 - origin.0, com.1 - origin.1), (0.0, -mg));
        let mut normals = [0.0; 3];
        for (i, (u, w)) in self.secondary_corners().into_iter().enumerate() {
            let p = self.material_to_world(chi, self.anchor_material, origin, u, w);
            if p.1 < 0.0 {
                let n = -p.1 * self.params.surface_stiffness;
                normals[i] = n;
                tau += cross((p.0 - origin.0, p.1 - origin.1), (0.0, n));
            }
        }
        tau += self.clamped_torsion(chi);
        (tau, normals, f)
    }

    /// Residual torque about the grasp point while hanging.
    fn hanging_residual(&self, chi: f64) -> f64 {
        let grasp = self.grasp_world_from_spring();
        let com = self.material_to_world(
            chi,
            self.grasp_material,
            grasp,
            self.geom.com.0,
            self.geom.com.1,
        );
        cross(
            (com.0 - grasp.0, com.1 - grasp.1),
            (0.0, -self.spec.weight()),
        ) + self.clamped_torsion(chi)
    }

    /// Relax chi toward equilibrium, rate-limited, by bracketed bisection.
    fn relax_chi<F: Fn(f64) -> f64>(&self, residual: F) -> f64 {
        let (lo_bound, hi_bound) = self.chi_bounds();
        let clamp = |v: f64| v.clamp(lo_bound, hi_bound);
        let mut lo = clamp(self.chi_prev - CHI_STEP_MAX);
        let mut hi = clamp(self.chi_prev + CHI_STEP_MAX);
        let f_lo = residual(lo);
        let f_hi = residual(hi);
        if f_lo == 0.0 {
            return lo;
        }
        if f_hi == 0.0 {
            return hi;
        }
        if f_lo.signum() == f_hi.signum() {
            // No zero crossing within reach: step toward balance (the
            // physical equilibria here have negative residual slope).
            return if f_lo > 0.0 { hi } else { lo };
        }
        for _ in 0..SOLVE_ITERS {
            let mid = 0.5 * (lo + hi);
            let fm = residual(mid);
            if fm == 0.0 {
                return mid;
            }
            if fm.signum() == f_lo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn solve_contact(&self) -> SimResult<Solved> {
        let chi = self.relax_chi(|c| self.contact_residual(c).0);
        let (_, normals, f) = self.contact_residual(chi);
        let torsion = self.clamped_torsion(chi);
        let pin = self.spec.weight() - f.1 - normals.iter().sum::<f64>();
        let total = pin.max(0.0) + normals.iter().sum::<f64>();
        Ok(Solved {
            chi,
            grasp_force: f,
            torsion_moment: torsion,
            pin_normal: pin,
            spring_normals: normals,
            total_surface_normal: total,
        })
    }

    fn solve_hanging(&self) -> Solved {
        let chi = self.relax_chi(|c| self.hanging_residual(c));
        Solved {
            chi,
            grasp_force: (0.0, self.spec.weight()),
            torsion_moment: self.clamped_torsion(chi),
            pin_normal: 0.0,
            spring_normals: [0.0; 3],
            total_surface_normal: 0.0,
        }
    }

    /// Swing the carried box toward its hanging equilibrium, but let the
    /// floor interrupt: if the free swing would take a corner below the
    /// surface, stop the rotation at the pose where the lowest corner just
    /// grazes (so the pinned pose stays consistent with the stiff grip
    /// spring) and pin that corner instead. Sets the mode accordingly.
    fn hang_or_graze(&mut self) -> SimResult<Solved> {
        let sol = self.solve_hanging();
        let (_, (_, z_new)) = self.lowest_corner_hanging(sol.chi);
        if z_new > 0.0 {
            self.mode = ContactMode::Hanging;
            self.anchor_material = self.grasp_material;
            return Ok(sol);
        }
        let (_, (_, z_prev)) = self.lowest_corner_hanging(self.chi_prev);
        let mut chi_touch = self.chi_prev;
        if z_prev > 0.0 {
            let (mut a, mut b) = (self.chi_prev, sol.chi);
            for _ in 0..SOLVE_ITERS {
                let m = 0.5 * (a + b);
                let (_, (_, zm)) = self.lowest_corner_hanging(m);
                if zm > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            chi_touch = 0.5 * (a + b);
        }
        let (corner, pos) = self.lowest_corner_hanging(chi_touch);
        self.mode = ContactMode::Contact;
        self.anchor_material = corner;
        self.anchor_x = pos.0;
        self.chi_prev = chi_touch;
        self.solve_contact()
    }

    fn check_penetration(&self, sol: &Solved) -> SimResult<()> {
        let bound = self.params.penetration_bound * self.params.surface_stiffness;
        if sol.pin_normal > self.spec.weight() + bound {
            return Err(SimError::InconsistentConstraint(format!(
                "pinned corner pressed with {:.1} N (exceeds the penetration bound)",
                sol.pin_normal
            )));
        }
        for n in sol.spring_normals {
            if n > bound {
                return Err(SimError::InconsistentConstraint(format!(
                    "corner driven {:.2} mm into the surface",
                    n / self.params.surface_stiffness * 1000.0
                )));
            }
        }
        Ok(())
    }

    fn accept(&mut self, sol: Solved) {
        self.chi_prev = sol.chi;
        self.rot = -self.geom.pivot_direction * sol.chi;
        self.last = sol;
    }

    /// Advance one tick.
    pub fn step(&mut self, cmd: &StepCommand) -> SimResult<StepEvents> {
        if !(cmd.dt > 0.0 && cmd.dt <= 0.002 + 1e-12) {
            return Err(SimError::InvalidCommand(format!(
                "dt must be in (0, 2 ms], got {} s",
                cmd.dt
            )));
        }
        let mut events = StepEvents::default();
        self.sim_time += cmd.dt;

        // (1) Move the tool toward the command, rate-limited (the planners
        // already respect the limits; the backstop has headroom for
        // controller offsets applied mid-move).
        let dmax = self.params.tool_v_max * cmd.dt * 2.0;
        let dx = cmd.tool.0 - self.tool.0;
        let dz = cmd.tool.1 - self.tool.1;
        let d = dx.hypot(dz);
        let scale = if d > dmax { dmax / d } else { 1.0 };
        self.tool.0 += dx * scale;
        self.tool.1 += dz * scale;
        let rmax = self.params.tool_omega_max * cmd.dt * 2.0;
        self.tool_rot += (cmd.tool_rot - self.tool_rot).clamp(-rmax, rmax);

        // (2) Grip width slews one increment per tick at most; releasing the
        // squeeze entirely detaches the grasp.
        let step = self.params.grip_step();
        self.grip_width = (self.grip_width
            + (cmd.grip_width.clamp(0.0, self.params.max_width) - self.grip_width)
                .clamp(-step, step))
        .max(0.0);
        if self.grasped && self.grip_normal() <= 0.0 {
            self.grasped = false;
            if self.mode == ContactMode::Hanging {
                // Letting go mid-air drops the box where it is.
                self.drop();
                events.drop = true;
            }
        } else {
            self.attach();
        }

        if self.dropped {
            self.finish_step();
            return Ok(events);
        }

        // (3) Pose equilibrium and mode transitions.
        let mut sol = match self.mode {
            ContactMode::Hanging => self.hang_or_graze()?,
            _ => {
                let contact = self.solve_contact()?;
                if contact.pin_normal < 0.0 && self.grasped {
                    // The grasp carries more than the weight: the pin
                    // unloads and the box comes off the surface.
                    events.lift_onset = true;
                    self.hang_or_graze()?
                } else {
                    contact
                }
            }
        };

        // (4) Slip resolution: translational along the finger axis first,
        // then rotational about the grasp; re-solve after each.
        if self.grasped {
            let cap_t = self.spec.mu_finger * self.grip_normal();
            let (s, c) = self.tool_rot.sin_cos();
            let axial =
                self.geom.pivot_direction * s * sol.grasp_force.0 + c * sol.grasp_force.1;
            if axial.abs() > cap_t {
                let over = axial.abs() - cap_t;
                let delta = (over / self.params.grip_spring()).min(self.params.slide_rate_max);
                self.slide_acc += axial.signum() * delta;
                events.translational_slip = true;
                if self.slide_acc.abs() > self.params.drop_slide {
                    self.drop();
                    events.drop = true;
                    self.finish_step();
                    return Ok(events);
                }
                sol = match self.mode {
                    ContactMode::Hanging => self.hang_or_graze()?,
                    _ => self.solve_contact()?,
                };
            }
            let psi_elastic = (sol.chi - self.tool_math_angle()) - self.psi_anchor;
            let cap_r = self.torsion_capacity();
            let k_tor = self.torsion_stiffness();
            if k_tor * psi_elastic.abs() > cap_r + 1e-15 {
                self.psi_anchor =
                    (sol.chi - self.tool_math_angle()) - psi_elastic.signum() * cap_r / k_tor;
                events.rotational_slip = true;
                sol = match self.mode {
                    ContactMode::Hanging => self.hang_or_graze()?,
                    _ => self.solve_contact()?,
                };
            }
        }

        // (5) Accept the solution.
        self.check_penetration(&sol)?;
        self.accept(sol);
        if self.mode == ContactMode::Hanging {
            let h = self.pivot_corner_height();
            self.hang_peak = self.hang_peak.max(h);
            if h > self.params.lift_tol {
                self.lifted_ever = true;
            }
        }
        self.last_flags = StateFlags {
            lifted: self.mode == ContactMode::Hanging
                && self.pivot_corner_height() > self.params.lift_tol,
            translational_slipping: events.translational_slip,
            rotational_slipping: events.rotational_slip,
            dropped: self.dropped,
        };

        // (6) Work and completion.
        self.finish_step();
        events.pivot_complete = self.rot >= std::f64::consts::FRAC_PI_2 - self.params.angle_tol;
        Ok(events)
    }

    /// Accumulate positive work delivered through the grasp, using the
    /// center-referenced wrench so translation and rotation partition
    /// without double counting.
    fn finish_step(&mut self) {
        let center = self.center_world();
        if self.grasped && !self.dropped {
            let f = self.last.grasp_force;
            let grasp = self.point_world(self.grasp_material.0, self.grasp_material.1);
            let tau_center =
                self.last.torsion_moment + cross((grasp.0 - center.0, grasp.1 - center.1), f);
            let ds = (center.0 - self.center_prev.0, center.1 - self.center_prev.1);
            let dchi = self.last.chi - self.work_chi_prev;
            self.work_j += (f.0 * ds.0 + f.1 * ds.1).max(0.0) + (tau_center * dchi).max(0.0);
        }
        self.center_prev = center;
        self.work_chi_prev = self.last.chi;
    }

    /// Height of the original pivot corner above the surface, m.
    pub fn pivot_corner_height(&self) -> f64 {
        let p = self.point_world(0.0, 0.0);
        p.1.max(0.0)
    }

    fn drop(&mut self) {
        // The box falls free and settles on whichever rest face gravity
        // selects: flat if it had not yet tipped past the diagonal through
        // the pivot corner, upright otherwise.
        let low = self.point_world(0.0, 0.0);
        let (u_c, w_c) = self.geom.com;
        let boundary = u_c.atan2(w_c);
        let rot_release = self.rot;
        self.dropped = true;
        self.grasped = false;
        self.mode = ContactMode::Dropped;
        self.anchor_material = (0.0, 0.0);
        self.anchor_x = low.0;
        self.rot = if rot_release < boundary {
            0.0
        } else {
            std::f64::consts::FRAC_PI_2
        };
        self.chi_prev = -self.geom.pivot_direction * self.rot;
        self.work_chi_prev = self.chi_prev;
        self.last = Solved {
            chi: self.chi_prev,
            grasp_force: (0.0, 0.0),
            torsion_moment: 0.0,
            pin_normal: self.spec.weight(),
            spring_normals: [0.0; 3],
            total_surface_normal: self.spec.weight(),
        };
        self.center_prev = self.center_world();
        self.last_flags = StateFlags {
            lifted: false,
            translational_slipping: false,
            rotational_slipping: false,
            dropped: true,
        };
    }

    /// Current static force balance (as used for sensing and slip tests).
    pub fn solve_statics(&self) -> StaticsSolution {
        let dir = self.geom.pivot_direction;
        let f = self.last.grasp_force;
        let (s, c) = self.tool_rot.sin_cos();
        let axial = dir * s * f.0 + c * f.1;
        let center = self.center_world();
        let grasp = self.point_world(self.grasp_material.0, self.grasp_material.1);
        let tau_center =
            self.last.torsion_moment + cross((grasp.0 - center.0, grasp.1 - center.1), f);
        let pin_ok = if self.mode == ContactMode::Contact {
            f.0.abs() <= self.spec.mu_surface * self.last.pin_normal.max(0.0) + 1e-9
        } else {
            true
        };
        StaticsSolution {
            wrist_force: f,
            wrist_torque: -dir * tau_center,
            surface_normal: self.last.total_surface_normal,
            grasp_tangential: axial,
            grasp_torque: -dir * self.last.torsion_moment,
            pivot_corner_height: self.pivot_corner_height(),
            surface_friction_ok: pin_ok,
        }
    }

    /// Ground-truth snapshot.
    pub fn state(&self) -> WorldState {
        let sol = self.solve_statics();
        let center = self.center_world();
        WorldState {
            x: center.0,
            z: center.1,
            rot: self.rot,
            in_hand_angle: self.psi_anchor,
            tool: self.tool,
            tool_rot: self.tool_rot,
            grip_width: self.grip_width,
            grip_normal: if self.grasped { self.grip_normal() } else { 0.0 },
            surface_normal: sol.surface_normal,
            wrist: (sol.wrist_force.0, sol.wrist_force.1, sol.wrist_torque),
            sim_time: self.sim_time,
            flags: self.last_flags,
            mode: self.mode,
            pivot_corner_height: sol.pivot_corner_height,
            slide_acc: self.slide_acc,
            torsion_moment: self.last.torsion_moment,
            com: self.com_world(),
        }
    }
}

/// Positive mechanical work delivered to the object over a time-ordered
/// trace of (force on object (N), center-referenced pivot-positive torque
/// (N*m)) paired with object center pose (x, z (m), pivot angle (rad)).
pub fn compute_work(trace: &[((f64, f64, f64), (f64, f64, f64))]) -> f64 {
    let mut w = 0.0;
    for pair in trace.windows(2) {
        let ((fx, fz, ty), (x0, z0, r0)) = pair[0];
        let (_, (x1, z1, r1)) = pair[1];
        w += (fx * (x1 - x0) + fz * (z1 - z0)).max(0.0);
        w += (ty * (r1 - r0)).max(0.0);
    }
    w
}

/// Judge a finished trial: (success, lifted, slipped_off).
///
/// Success means the box finished within `angle_tol` of upright while still
/// under control; lifted means the pivot corner ever left the surface beyond
/// the lift tolerance; slipped-off means the box slid out of the grasp.
pub fn judge_trial(
    final_rot: f64,
    hang_peak: f64,
    dropped: bool,
    params: &ContactParams,
) -> (bool, bool, bool) {
    (
        !dropped && final_rot >= std::f64::consts::FRAC_PI_2 - params.angle_tol,
        hang_peak > params.lift_tol,
        dropped,
    )
}
