//! Control stack: initial grasp acquisition, the wrist-force PI position
//! controller, the tactile grip-width regulator, the slip classifier, the
//! vision height corrector, and the per-method trial executor that wires
//! them to the simulated world.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use crate::error::{SimError, SimResult};
use crate::geometry::{
    generate_arc_path, ideal_pivot_force, initial_grip_threshold, make_pivot_geometry,
    time_parameterize, BoxSpec, Pivot, PivotGeometry,
};
use crate::seed::split_seed;
use crate::sensors::{sample_tactile, sample_wrist, SensorParams, TactileFrame, VisionPose, VisionSensor};
use crate::world::{judge_trial, ContactParams, StepCommand, World};

/// Simulation tick, s (500 Hz inner loop).
pub const DT: f64 = 0.002;

/// Corner-height estimate below which the vision corrector treats the box
/// as pressed and walks the path back up, m. Must sit well below zero so
/// estimate noise rarely triggers it, but above the press depth at which
/// the surface overloads (the contact springs give about a millimetre and
/// a half before that), so the escape engages while there is still
/// budget.
pub const VIS_PRESS_GATE_M: f64 = 0.0012;
/// Wrist force below which (pressing) height corrections reverse, N.
/// Chosen above any single correction step's spring swing so that normal
/// seating stands, while runaway presses are unwound within one frame.
pub const PRESS_FZ_N: f64 = 25.0;
/// Ticks between any two downward path corrections, across both the
/// vision corrector and the force loop. Serializing down-steps bounds the
/// worst-case press to a single step's spring force: two correctors can
/// never push within each other's sensing latency.
pub const DOWN_GUARD_TICKS: u64 = 25;
/// Per-tick upward relief applied while the wrist reads a press, m. At
/// the grip spring rate this outpaces the fastest press the rate-limited
/// tool can build, so a mid-segment press plateaus near the reflex gate
/// instead of racing to the surface overload bound between waypoint
/// updates.
pub const PRESS_RELIEF_M: f64 = 0.0002;
/// Wrist reading this far above the ideal pivot force confirms the tool
/// is carrying weight the surface should hold, i.e. the corner hangs, N.
/// Set above wrist noise and ordinary tracking transients so that with a
/// wrist on the bus, vision down-steps fire only on corroborated hangs.
pub const HANG_FZ_GATE_N: f64 = 4.0;

/// Trace event bits (OR of everything seen since the previous row).
pub const FLAG_LIFTED: u8 = 1;
pub const FLAG_TRANS_SLIP: u8 = 2;
pub const FLAG_ROT_SLIP: u8 = 4;
pub const FLAG_DROP: u8 = 8;
pub const FLAG_COMPLETE: u8 = 16;

/// The six experiment methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PickPlace,
    OpenLoop,
    VisionOnly,
    GripperOnly,
    ForceOnly,
    Combined,
}

impl Method {
    pub fn all() -> [Method; 6] {
        [
            Method::PickPlace,
            Method::OpenLoop,
            Method::VisionOnly,
            Method::GripperOnly,
            Method::ForceOnly,
            Method::Combined,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::PickPlace => "pick_place",
            Method::OpenLoop => "open_loop",
            Method::VisionOnly => "vision_only",
            Method::GripperOnly => "gripper_only",
            Method::ForceOnly => "force_only",
            Method::Combined => "combined",
        }
    }

    pub fn parse(s: &str) -> SimResult<Method> {
        Method::all()
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                SimError::Config(format!(
                    "unknown method '{s}' (expected one of pick_place, open_loop, vision_only, gripper_only, force_only, combined)"
                ))
            })
    }

    /// Tactile pads mounted (and the grip-width regulator active)?
    /// Other methods swap in flat rigid jaws closed as hard as possible.
    pub fn uses_tactile(&self) -> bool {
        matches!(self, Method::GripperOnly | Method::Combined)
    }

    pub fn uses_wrist_pi(&self) -> bool {
        matches!(self, Method::ForceOnly | Method::Combined)
    }

    pub fn uses_vision(&self) -> bool {
        matches!(self, Method::VisionOnly | Method::Combined)
    }

    /// Waypoint-at-a-time motion with planning pauses (as opposed to one
    /// pre-planned continuous move).
    pub fn per_waypoint(&self) -> bool {
        !matches!(self, Method::PickPlace | Method::OpenLoop)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// PI gains for the force-based position controller, m/N.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
}

impl Default for PiGains {
    fn default() -> Self {
        Self { kp: 2e-5, ki: 1.2e-5 }
    }
}

/// Controller and motion-script settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ControlParams {
    pub gains: PiGains,
    /// Multiple of the minimum holding force used for the initial grasp.
    pub grasp_safety: f64,
    /// Grasp-force floor, N: grips weaker than this leave slip evidence
    /// below the tactile classifier gate, so the regulator cannot react.
    pub grasp_min_n: f64,
    /// Vision height-correction gain per applied correction.
    pub gain_v: f64,
    /// Ignore corner-height estimates smaller than this, m (noise floor).
    pub vision_deadband_m: f64,
    /// Deadband used when no wrist reading cross-checks the corrector, m.
    /// A pressed corner is invisible to the camera (the pose stays pinned
    /// at the surface while the contact carries the force), so without a
    /// wrist signal a false down-step is unrecoverable and must be rare
    /// enough to never stack: this sits several noise sigmas above zero.
    pub vision_deadband_solo_m: f64,
    /// Moving-average window over fresh frames for the height estimate.
    pub vision_avg_frames: usize,
    /// Largest single vision correction, m. Bounds the damage of one
    /// correction computed from stale frames to well under the surface
    /// overload fault.
    pub vision_step_max_m: f64,
    /// Fresh frames between applied corrections: long enough that every
    /// averaged frame already reflects the previous correction (camera
    /// latency plus the averaging window), killing stale re-application.
    pub vision_period_frames: usize,
    /// Largest single force-PI offset update, m (same overload bound).
    pub pi_step_max_m: f64,
    /// Wrist-force errors are clipped to this before entering the PI, N:
    /// near-vertical poses leak in-hand friction torque into the reading
    /// through a vanishing lever arm, and raw spikes would wind the
    /// integrator. Convergence statistics still record the raw error.
    pub pi_error_clip_n: f64,
    /// Most negative allowed vertical path offset, m.
    pub offset_floor_m: f64,
    /// Most positive allowed vertical path offset, m.
    pub offset_ceil_m: f64,
    /// Displacement magnitude that counts as slip evidence, mm.
    pub slip_gate_mm: f64,
    /// Displacement magnitude treated as excessive deformation, mm.
    pub deform_gate_mm: f64,
    /// Number of arc waypoints planned per pivot.
    pub waypoints: usize,
    /// Planning pause before each consecutive movement, s.
    pub waypoint_pause_s: f64,
    /// Settling time appended to every script (and used before grasping), s.
    pub settle_s: f64,
    /// Tool acceleration limit for trapezoidal profiles, m/s^2.
    pub accel_max: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            gains: PiGains::default(),
            grasp_safety: 1.5,
            grasp_min_n: 4.0,
            gain_v: 0.5,
            vision_deadband_m: 0.0007,
            vision_deadband_solo_m: 0.0018,
            vision_avg_frames: 3,
            vision_step_max_m: 0.0004,
            vision_period_frames: 1,
            pi_step_max_m: 0.0012,
            pi_error_clip_n: 4.0,
            offset_floor_m: -0.08,
            offset_ceil_m: 0.004,
            slip_gate_mm: 0.1,
            deform_gate_mm: 5.0,
            waypoints: 50,
            waypoint_pause_s: 0.35,
            settle_s: 0.35,
            accel_max: 0.5,
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> SimResult<()> {
        if self.gains.kp < 0.0 || self.gains.ki < 0.0 {
            return Err(SimError::Config("PI gains must be non-negative".into()));
        }
        if self.waypoints < 2 {
            return Err(SimError::Config(format!(
                "waypoints must be at least 2, got {}",
                self.waypoints
            )));
        }
        if self.vision_avg_frames == 0 {
            return Err(SimError::Config("vision_avg_frames must be positive".into()));
        }
        if self.vision_period_frames == 0 {
            return Err(SimError::Config(
                "vision_period_frames must be positive".into(),
            ));
        }
        if !(self.accel_max > 0.0) {
            return Err(SimError::Config("accel_max must be positive".into()));
        }
        if self.offset_floor_m > 0.0 || self.offset_ceil_m < 0.0 {
            return Err(SimError::Config(
                "offset bounds must bracket zero (floor <= 0 <= ceil)".into(),
            ));
        }
        for (name, v) in [
            ("grasp_safety", self.grasp_safety),
            ("grasp_min_n", self.grasp_min_n),
            ("gain_v", self.gain_v),
            ("vision_deadband_m", self.vision_deadband_m),
            ("vision_deadband_solo_m", self.vision_deadband_solo_m),
            ("vision_step_max_m", self.vision_step_max_m),
            ("pi_step_max_m", self.pi_step_max_m),
            ("pi_error_clip_n", self.pi_error_clip_n),
            ("slip_gate_mm", self.slip_gate_mm),
            ("deform_gate_mm", self.deform_gate_mm),
            ("waypoint_pause_s", self.waypoint_pause_s),
            ("settle_s", self.settle_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// What the tactile field says about in-hand motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlipClass {
    None,
    Translational,
    Rotational,
}

/// Classify slip from one tactile reading pair: consider in-contact
/// elements whose vertical tip displacement exceeds the gate; all moving
/// down means the box is sliding out, mixed directions mean it is rotating
/// about the grasp, anything else is quiet.
pub fn classify_slip(frames: &[TactileFrame; 2], gate_mm: f64) -> SlipClass {
    let mut down = 0usize;
    let mut up = 0usize;
    for e in frames.iter().flat_map(|f| f.elements.iter()) {
        if !e.in_contact {
            continue;
        }
        if e.displacement.2 < -gate_mm {
            down += 1;
        } else if e.displacement.2 > gate_mm {
            up += 1;
        }
    }
    match (down, up) {
        (0, _) => SlipClass::None,
        (_, 0) => SlipClass::Translational,
        _ => SlipClass::Rotational,
    }
}

/// The tactile grip-width regulator: widen one step on excessive pad
/// deformation, narrow one step while every contacting element drags
/// downward (the box is escaping), otherwise hold.
#[derive(Debug, Clone)]
pub struct GripperCtl {
    pub width: f64,
    pub tighten_events: u64,
    pub loosen_events: u64,
}

impl GripperCtl {
    pub fn new(width: f64) -> Self {
        Self {
            width,
            tighten_events: 0,
            loosen_events: 0,
        }
    }

    /// One 500 Hz update; returns the new commanded width.
    pub fn step(
        &mut self,
        frames: &[TactileFrame; 2],
        contact: &ContactParams,
        ctl: &ControlParams,
    ) -> f64 {
        let deformed = frames.iter().flat_map(|f| f.elements.iter()).any(|e| {
            e.displacement.0.abs() > ctl.deform_gate_mm
                || e.displacement.1.abs() > ctl.deform_gate_mm
                || e.displacement.2.abs() > ctl.deform_gate_mm
        });
        if deformed {
            self.width = (self.width + contact.grip_step()).min(contact.max_width);
            self.loosen_events += 1;
            return self.width;
        }
        let mut contacts = 0usize;
        let mut downward = 0usize;
        for e in frames.iter().flat_map(|f| f.elements.iter()) {
            if e.in_contact {
                contacts += 1;
                if e.displacement.2 < -ctl.slip_gate_mm {
                    downward += 1;
                }
            }
        }
        if contacts > 0 && downward == contacts {
            self.width = (self.width - contact.grip_step()).max(0.0);
            self.tighten_events += 1;
        }
        self.width
    }
}

/// Per-waypoint force-based PI position controller state.
#[derive(Debug, Clone, Default)]
pub struct PositionCtl {
    /// Vertical offset applied to the current and all later waypoints, m.
    pub offset: f64,
    /// Accumulated signed force error, N.
    pub error_accum: f64,
    pub waypoint_index: usize,
    /// |ideal - measured| recorded at each update, for convergence checks.
    pub abs_errors: Vec<f64>,
    /// Cap on a single downward update, m, when tighter than the shared
    /// step bound; set when a vision corrector shares the height authority
    /// so their worst-case combined press stays within the surface budget.
    pub down_cap_m: Option<f64>,
}

impl PositionCtl {
    pub fn new() -> Self {
        Self::default()
    }

    /// One per-waypoint update from the angle source and the wrist reading.
    /// Returns true when the pivot is complete (no further motion).
    ///
    /// The error is signed, e = f_ideal(phi) - f_real, with the wrist
    /// reading positive while supporting weight: measuring less support
    /// than the model raises the path, more support lowers it.
    ///
    /// A clearly pressing wrist reading overrides the loop: the path steps
    /// straight up and the integrator bleeds, because an accumulator built
    /// up while the box hung must not keep grinding the corner into the
    /// surface once it is down. `allow_down` serializes down-steps against
    /// other height correctors.
    pub fn step(
        &mut self,
        phi: f64,
        f_real: f64,
        geom: &PivotGeometry,
        spec: &BoxSpec,
        gains: &PiGains,
        ctl: &ControlParams,
        allow_down: bool,
    ) -> bool {
        if phi >= FRAC_PI_2 {
            return true;
        }
        let e = ideal_pivot_force(geom, spec, phi.max(0.0)) - f_real;
        self.abs_errors.push(e.abs());
        self.waypoint_index += 1;
        if f_real < -PRESS_FZ_N {
            self.offset = (self.offset + ctl.pi_step_max_m).min(ctl.offset_ceil_m);
            self.error_accum *= 0.5;
            return false;
        }
        let e_ctl = e.clamp(-ctl.pi_error_clip_n, ctl.pi_error_clip_n);
        let down_cap = if allow_down {
            self.down_cap_m
                .map_or(ctl.pi_step_max_m, |d| d.min(ctl.pi_step_max_m))
        } else {
            0.0
        };
        let trial = self.offset
            + (gains.kp * e_ctl + gains.ki * (self.error_accum + e_ctl))
                .clamp(-down_cap, ctl.pi_step_max_m);
        let clamped = trial.clamp(ctl.offset_floor_m, ctl.offset_ceil_m);
        // Anti-windup: only integrate while the update is not pushing the
        // offset past a bound, otherwise the accumulator keeps the path
        // pinned long after the error has reversed.
        if clamped == trial {
            self.error_accum += e_ctl;
        }
        self.offset = clamped;
        false
    }
}

/// Vision-based vertical corrector: averages recent pivot-corner height
/// estimates and walks the path offset down to hold the corner on the
/// surface.
#[derive(Debug, Clone, Default)]
pub struct VisionCtl {
    pub offset: f64,
    recent: VecDeque<f64>,
    frames_since_apply: usize,
}

impl VisionCtl {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pivot-corner height implied by a pose estimate, m. The marker gives
    /// the box center; the corner is half a diagonal away at the estimated
    /// rotation (heights are mirror-invariant, so the pivot direction drops
    /// out).
    pub fn corner_height(pose: &VisionPose, geom: &PivotGeometry) -> f64 {
        let (s, c) = pose.rot.sin_cos();
        pose.z - (geom.base / 2.0) * s - (geom.height / 2.0) * c
    }

    /// Ingest one fresh frame's corner-height estimate and, when the wrist
    /// sensor is on the bus, the live vertical grip force relative to the
    /// ideal pivot force. Returns true when a down-step was applied (for
    /// the shared down-step guard).
    ///
    /// The corner height is one-sided: the surface blocks it from below,
    /// so a negative reading is noise, deliberate seating by the force
    /// loop, or a press — and a press is invisible to the camera anyway
    /// (the pose stays pinned at the surface while the contact carries
    /// the force). Down-steps therefore need positive hang evidence: with
    /// a wrist on the bus, a reading clearly above the ideal force (the
    /// tool is carrying weight the surface should hold) plus the averaged
    /// estimate over the deadband; without one, the wide solo deadband
    /// alone. Corrections are proportional, capped at one step,
    /// rate-limited, and serialized against other correctors through
    /// `allow_down`. The only up path is the press escape: a raw estimate
    /// below the press gate or a strongly pressing wrist force lifts the
    /// path immediately, without waiting out the window or the period.
    pub fn on_frame(
        &mut self,
        corner_height_est: f64,
        fz_excess_hint: Option<f64>,
        allow_down: bool,
        ctl: &ControlParams,
    ) -> bool {
        if std::env::var_os("PIVOTSIM_DBG_VIS").is_some() {
            eprintln!(
                "vis est={corner_height_est:+.5} dfz={fz_excess_hint:?} off={:+.5}",
                self.offset
            );
        }
        self.recent.push_back(corner_height_est);
        while self.recent.len() > ctl.vision_avg_frames {
            self.recent.pop_front();
        }
        self.frames_since_apply += 1;
        let pressed = corner_height_est < -VIS_PRESS_GATE_M
            || fz_excess_hint.is_some_and(|dfz| dfz < -PRESS_FZ_N);
        if pressed {
            let step = 2.0 * ctl.vision_step_max_m;
            self.offset = (self.offset + step).clamp(ctl.offset_floor_m, 0.0);
            self.frames_since_apply = 0;
            return false;
        }
        if !allow_down || self.frames_since_apply < ctl.vision_period_frames {
            return false;
        }
        let (deadband, hang_confirmed) = match fz_excess_hint {
            Some(dfz) => (ctl.vision_deadband_m, dfz > HANG_FZ_GATE_N),
            None => (ctl.vision_deadband_solo_m, true),
        };
        let avg = self.recent.iter().sum::<f64>() / self.recent.len() as f64;
        if hang_confirmed && avg > deadband {
            let delta = (ctl.gain_v * avg).clamp(0.0, ctl.vision_step_max_m);
            self.offset = (self.offset - delta).clamp(ctl.offset_floor_m, 0.0);
            self.frames_since_apply = 0;
            return delta > 0.0;
        }
        false
    }
}

/// Close the gripper one width step per tick until the summed tactile
/// normal force reaches `threshold` (first contact when the threshold is
/// zero). The tool must already be seated at the grasp point on a resting
/// box. Returns the final width.
pub fn grasp_until_threshold(
    world: &mut World,
    threshold: f64,
    sensors: &SensorParams,
    rng: &mut impl Rng,
) -> SimResult<f64> {
    loop {
        let state = world.state();
        let frames = sample_tactile(&state, &world.params, sensors, rng);
        let total: f64 = frames
            .iter()
            .flat_map(|f| f.elements.iter())
            .map(|e| e.force.1)
            .sum();
        if total >= threshold && total > 0.0 {
            return Ok(state.grip_width);
        }
        if state.grip_width <= 0.0 {
            return Err(SimError::GraspFailed(format!(
                "fully closed at {total:.2} N, below the {threshold:.2} N grasp threshold"
            )));
        }
        let cmd = StepCommand {
            tool: state.tool,
            tool_rot: state.tool_rot,
            grip_width: 0.0,
            dt: DT,
        };
        world.step(&cmd)?;
    }
}

/// One decimated trace row (100 Hz plus a final sample).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Simulation time, s.
    pub t: f64,
    /// Ground-truth pivot angle, rad.
    pub phi: f64,
    /// Measured vertical wrist force, N.
    pub fz_real: f64,
    /// Support-force model evaluated at the logged angle, N.
    pub fz_ideal: f64,
    /// Tool position, m.
    pub x: f64,
    pub z: f64,
    pub grip_width: f64,
    /// OR of FLAG_* event bits since the previous row.
    pub flags: u8,
}

/// Everything a single trial produces.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub success: bool,
    pub lifted: bool,
    pub slipped_off: bool,
    pub dropped: bool,
    /// Motion time from the first waypoint command to script end, s.
    pub time_s: f64,
    /// Positive mechanical work delivered to the box, J.
    pub work_j: f64,
    pub final_rot: f64,
    /// Highest the pinned corner floated off the surface, m.
    pub hang_peak_m: f64,
    pub trace: Vec<TraceRow>,
    /// |f_ideal - f_real| per PI update (empty for methods without the
    /// force controller).
    pub pi_abs_errors: Vec<f64>,
    /// Failure diagnostics when the world rejected a command.
    pub diagnostics: Option<String>,
}

/// Clearance the grasp point needs for rotating the box in the air: the
/// farthest corner sweep radius plus the lift tolerance.
pub fn pick_place_clearance(geom: &PivotGeometry, lift_tol: f64) -> f64 {
    ((geom.base / 2.0).powi(2) + geom.height.powi(2)).sqrt() + lift_tol
}

struct Exec<'a> {
    world: World,
    method: Method,
    geom: PivotGeometry,
    spec: &'a BoxSpec,
    sensors: &'a SensorParams,
    ctl: &'a ControlParams,
    rng_tactile: ChaCha8Rng,
    rng_wrist: ChaCha8Rng,
    rng_vision: ChaCha8Rng,
    vision: VisionSensor,
    gripper: Option<GripperCtl>,
    pi: PositionCtl,
    vis: VisionCtl,
    latest_fz: f64,
    latest_phi_est: Option<f64>,
    plan_pos: (f64, f64),
    plan_rot: f64,
    trace: Vec<TraceRow>,
    pending_flags: u8,
    ticks: u64,
    /// No downward path correction (vision or force loop) before this tick.
    down_guard_until: u64,
    /// Latched when the angle estimate crosses vertical; stops the script
    /// early so leftover waypoints don't drag the finished box around.
    done_hint: bool,
    /// Consecutive fresh frames reading at or past vertical. The latch
    /// needs two so a single noisy sample cannot end the run short.
    done_streak: u8,
    dropped: bool,
}

impl<'a> Exec<'a> {
    /// Advance one tick toward the plan-frame targets (controller offsets
    /// are added here). Returns false when the box has been dropped.
    fn tick(&mut self, target: (f64, f64), target_rot: f64) -> SimResult<bool> {
        let width = match &self.gripper {
            Some(g) => g.width,
            None => self.world.state().grip_width,
        };
        let cmd = StepCommand {
            tool: (target.0, target.1 + self.pi.offset + self.vis.offset),
            tool_rot: target_rot,
            grip_width: width,
            dt: DT,
        };
        let ev = self.world.step(&cmd)?;
        let state = self.world.state();
        self.latest_fz = sample_wrist(&state, self.sensors.sigma_wrist_n, &mut self.rng_wrist)
            .force
            .1;
        // Sensor-rate press reflex: the waypoint-cadence force loop cannot
        // catch a press that builds mid-segment, so back the path off a
        // little every tick the wrist keeps reading one.
        if self.method.uses_wrist_pi() && self.latest_fz < -PRESS_FZ_N {
            self.pi.offset = (self.pi.offset + PRESS_RELIEF_M).min(self.ctl.offset_ceil_m);
        }
        if self.method.uses_tactile() {
            let frames = sample_tactile(
                &state,
                &self.world.params,
                self.sensors,
                &mut self.rng_tactile,
            );
            if let Some(g) = self.gripper.as_mut() {
                g.step(&frames, &self.world.params, self.ctl);
            }
        }
        self.vision.observe(&state);
        if self.method.uses_vision() {
            if let Some(p) = self.vision.sample(state.sim_time, &mut self.rng_vision) {
                if p.fresh {
                    self.latest_phi_est = Some(p.phi_est);
                    if p.phi_est >= FRAC_PI_2 {
                        self.done_streak += 1;
                        if self.done_streak >= 2 {
                            self.done_hint = true;
                        }
                    } else {
                        self.done_streak = 0;
                    }
                    let h = VisionCtl::corner_height(&p, &self.geom);
                    let fz_excess = self.method.uses_wrist_pi().then(|| {
                        self.latest_fz
                            - ideal_pivot_force(&self.geom, self.spec, p.phi_est.max(0.0))
                    });
                    let allow_down = self.ticks >= self.down_guard_until;
                    if self.vis.on_frame(h, fz_excess, allow_down, self.ctl) {
                        self.down_guard_until = self.ticks + DOWN_GUARD_TICKS;
                    }
                }
            }
        }
        if std::env::var_os("PIVOTSIM_DBG_TICK").is_some() {
            eprintln!(
                "tk={:5} rot={:+.4} corner={:+8.4}mm fz={:+8.3} vis={:+.5} pi={:+.5}",
                self.ticks,
                state.rot,
                self.world.pivot_corner_height() * 1e3,
                self.latest_fz,
                self.vis.offset,
                self.pi.offset,
            );
        }
        if state.flags.lifted {
            self.pending_flags |= FLAG_LIFTED;
        }
        if ev.translational_slip {
            self.pending_flags |= FLAG_TRANS_SLIP;
        }
        if ev.rotational_slip {
            self.pending_flags |= FLAG_ROT_SLIP;
        }
        if ev.drop {
            self.pending_flags |= FLAG_DROP;
            self.dropped = true;
        }
        if ev.pivot_complete {
            self.pending_flags |= FLAG_COMPLETE;
        }
        self.ticks += 1;
        if self.ticks % 5 == 0 {
            self.push_row();
        }
        Ok(!self.dropped)
    }

    fn push_row(&mut self) {
        let s = self.world.state();
        self.trace.push(TraceRow {
            t: s.sim_time,
            phi: s.rot,
            fz_real: self.latest_fz,
            fz_ideal: ideal_pivot_force(&self.geom, self.spec, s.rot.max(0.0)),
            x: s.tool.0,
            z: s.tool.1,
            grip_width: s.grip_width,
            flags: self.pending_flags,
        });
        self.pending_flags = 0;
    }

    /// Hold position (offsets stay live) for a duration.
    fn run_hold(&mut self, seconds: f64) -> SimResult<bool> {
        let n = (seconds / DT).ceil() as u64;
        for _ in 0..n {
            if !self.tick(self.plan_pos, self.plan_rot)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Trapezoid move of the plan position to `to`. Stops short (freezing
    /// the plan where the tool is) once the pivot is seen complete.
    fn run_move(&mut self, to: (f64, f64)) -> SimResult<bool> {
        let segs = time_parameterize(
            &[self.plan_pos, to],
            self.world.params.tool_v_max,
            self.ctl.accel_max,
            false,
        );
        if let Some(seg) = segs.last() {
            let n = (seg.t1 / DT).ceil() as u64;
            for k in 1..=n {
                if self.done_hint {
                    self.freeze_plan();
                    return Ok(true);
                }
                let t = (k as f64 * DT).min(seg.t1);
                let p = seg.position_at(t);
                if !self.tick(p, self.plan_rot)? {
                    return Ok(false);
                }
            }
        }
        self.plan_pos = to;
        Ok(true)
    }

    /// Pin the plan to the tool's current position so later holds don't
    /// keep slewing toward an abandoned target. The controller offsets are
    /// subtracted out because every tick adds them back on top.
    fn freeze_plan(&mut self) {
        let tool = self.world.state().tool;
        self.plan_pos = (tool.0, tool.1 - self.pi.offset - self.vis.offset);
    }

    /// Rotate the tool in place at the wrist rate limit.
    fn run_rotation(&mut self, to: f64) -> SimResult<bool> {
        let dur = (to - self.plan_rot).abs() / self.world.params.tool_omega_max;
        let n = (dur / DT).ceil() as u64;
        let from = self.plan_rot;
        for k in 1..=n {
            let frac = (k as f64 / n as f64).min(1.0);
            let r = from + (to - from) * frac;
            if !self.tick(self.plan_pos, r)? {
                return Ok(false);
            }
        }
        self.plan_rot = to;
        Ok(true)
    }

    /// Descend until the surface carries part of the weight.
    fn run_descend_to_contact(&mut self) -> SimResult<bool> {
        let max_ticks = (1.0 / DT) as u64 * 20;
        let step = self.world.params.tool_v_max * DT;
        for _ in 0..max_ticks {
            if self.world.state().surface_normal > 0.5 {
                self.plan_pos = self.world.state().tool;
                return Ok(true);
            }
            self.plan_pos.1 -= step;
            if !self.tick(self.plan_pos, self.plan_rot)? {
                return Ok(false);
            }
        }
        Err(SimError::InvalidCommand(
            "descended 20 s without finding the surface".into(),
        ))
    }

    /// Open the gripper fully (one step per tick) and let the box settle.
    fn run_release(&mut self) -> SimResult<()> {
        let max_w = self.world.params.max_width;
        if let Some(g) = self.gripper.as_mut() {
            g.width = max_w;
        }
        for _ in 0..300 {
            let cmd = StepCommand {
                tool: self.world.state().tool,
                tool_rot: self.world.state().tool_rot,
                grip_width: max_w,
                dt: DT,
            };
            self.world.step(&cmd)?;
            self.ticks += 1;
            if self.ticks % 5 == 0 {
                self.push_row();
            }
            if !self.world.is_grasped() {
                break;
            }
        }
        Ok(())
    }
}

/// Execute one trial of `method` on `(spec, pivot)` with the planner's
/// base-length error `base_noise`. Never panics: world diagnostics come
/// back inside the result.
#[allow(clippy::too_many_arguments)]
pub fn run_method(
    method: Method,
    spec: &BoxSpec,
    pivot: Pivot,
    base_noise: f64,
    contact: &ContactParams,
    sensors: &SensorParams,
    ctl: &ControlParams,
    seed: u64,
) -> TrialRun {
    match run_method_inner(method, spec, pivot, base_noise, contact, sensors, ctl, seed) {
        Ok(run) => run,
        Err((e, partial)) => partial.unwrap_or_else(|| TrialRun {
            success: false,
            lifted: false,
            slipped_off: false,
            dropped: false,
            time_s: 0.0,
            work_j: 0.0,
            final_rot: 0.0,
            hang_peak_m: 0.0,
            trace: Vec::new(),
            pi_abs_errors: Vec::new(),
            diagnostics: Some(e),
        }),
    }
}

type ExecFail = (String, Option<TrialRun>);

#[allow(clippy::too_many_arguments)]
fn run_method_inner(
    method: Method,
    spec: &BoxSpec,
    pivot: Pivot,
    base_noise: f64,
    contact: &ContactParams,
    sensors: &SensorParams,
    ctl: &ControlParams,
    seed: u64,
) -> Result<TrialRun, ExecFail> {
    let fail = |e: SimError| (e.to_string(), None);
    ctl.validate().map_err(fail)?;
    sensors.validate().map_err(fail)?;
    let geom = make_pivot_geometry(spec, pivot).map_err(fail)?;
    let world = World::new(spec.clone(), pivot, contact.clone()).map_err(fail)?;
    let mut ex = Exec {
        world,
        method,
        geom: geom.clone(),
        spec,
        sensors,
        ctl,
        rng_tactile: ChaCha8Rng::seed_from_u64(split_seed(seed, 1)),
        rng_wrist: ChaCha8Rng::seed_from_u64(split_seed(seed, 2)),
        rng_vision: ChaCha8Rng::seed_from_u64(split_seed(seed, 3)),
        vision: VisionSensor::new(sensors),
        gripper: None,
        pi: PositionCtl {
            // Sharing height authority with the vision corrector tightens
            // the force loop's single down-step so that even back-to-back
            // corrections stay within the surface overload budget.
            down_cap_m: (method == Method::Combined).then_some(0.0006),
            ..PositionCtl::new()
        },
        vis: VisionCtl::new(),
        latest_fz: 0.0,
        latest_phi_est: None,
        plan_pos: (0.0, 0.0),
        plan_rot: 0.0,
        trace: Vec::new(),
        pending_flags: 0,
        ticks: 0,
        down_guard_until: 0,
        done_hint: false,
        done_streak: 0,
        dropped: false,
    };

    let outcome = drive_script(&mut ex, base_noise);
    let state = ex.world.state();
    ex.push_row();
    let (success, lifted, slipped_off) = judge_trial(
        state.rot,
        ex.world.hang_peak(),
        state.flags.dropped,
        &ex.world.params,
    );
    let mut run = TrialRun {
        success,
        lifted,
        slipped_off,
        dropped: state.flags.dropped,
        time_s: outcome.as_ref().map(|t| *t).unwrap_or(0.0),
        work_j: ex.world.work_j(),
        final_rot: state.rot,
        hang_peak_m: ex.world.hang_peak(),
        trace: ex.trace,
        pi_abs_errors: ex.pi.abs_errors,
        diagnostics: None,
    };
    match outcome {
        Ok(_) => Ok(run),
        Err(e) => {
            run.success = false;
            run.diagnostics = Some(e.to_string());
            Err((e.to_string(), Some(run)))
        }
    }
}

/// Run the method's full script; returns the motion time (first waypoint
/// command to script end).
fn drive_script(ex: &mut Exec<'_>, base_noise: f64) -> SimResult<f64> {
    let ctl = ex.ctl;
    let spec = ex.spec;
    let geom = ex.geom.clone();

    // Let the box settle onto the surface before touching it.
    ex.plan_pos = ex.world.state().tool;
    ex.run_hold(ctl.settle_s)?;

    // Grasp.
    match ex.method {
        Method::PickPlace => {
            // Top-edge center, flat rigid jaws.
            ex.world.grasp_rigid_at(geom.base / 2.0, geom.height)?;
        }
        m if m.uses_tactile() => {
            let seat = ex.world.point_world(geom.base, geom.height);
            ex.world.set_tool_pose(seat, 0.0)?;
            let threshold =
                initial_grip_threshold(&geom, spec, ctl.grasp_safety).max(ctl.grasp_min_n);
            grasp_until_threshold(&mut ex.world, threshold, ex.sensors, &mut ex.rng_tactile)?;
            ex.gripper = Some(GripperCtl::new(ex.world.state().grip_width));
        }
        _ => {
            ex.world.grasp_rigid()?;
        }
    }
    ex.plan_pos = ex.world.state().tool;
    ex.plan_rot = ex.world.state().tool_rot;
    let grasp_pos = ex.plan_pos;
    let clock_start = ex.world.sim_time();

    match ex.method {
        Method::PickPlace => {
            let h = pick_place_clearance(&geom, ex.world.params.lift_tol);
            let up = (grasp_pos.0, grasp_pos.1 + h);
            if ex.run_move(up)? && ex.run_hold(ctl.waypoint_pause_s)? {
                // tool_rot shares the pivot-positive rotation convention.
                if ex.run_rotation(FRAC_PI_2)? && ex.run_hold(ctl.waypoint_pause_s)? {
                    if ex.run_descend_to_contact()? {
                        ex.run_hold(ctl.waypoint_pause_s)?;
                        ex.run_release()?;
                        ex.run_hold(ctl.settle_s)?;
                    }
                }
            }
        }
        Method::OpenLoop => {
            let path = generate_arc_path(&geom, ctl.waypoints, base_noise)?;
            let points: Vec<(f64, f64)> = std::iter::once(grasp_pos)
                .chain(
                    path.waypoints
                        .iter()
                        .map(|w| (grasp_pos.0 + w.dx, grasp_pos.1 + w.dz)),
                )
                .collect();
            let segs = time_parameterize(
                &points,
                ex.world.params.tool_v_max,
                ctl.accel_max,
                true,
            );
            if let Some(total) = segs.last().map(|s| s.t1) {
                let n = (total / DT).ceil() as u64;
                let mut si = 0usize;
                'outer: for k in 1..=n {
                    let t = (k as f64 * DT).min(total);
                    while t > segs[si].t1 && si + 1 < segs.len() {
                        si += 1;
                    }
                    let p = segs[si].position_at(t);
                    if !ex.tick(p, ex.plan_rot)? {
                        break 'outer;
                    }
                }
                ex.plan_pos = ex.world.state().tool;
            }
            if !ex.dropped {
                ex.run_hold(ctl.settle_s)?;
            }
        }
        _ => {
            // Waypoint-at-a-time with planning pauses.
            let path = generate_arc_path(&geom, ctl.waypoints, base_noise)?;
            'way: for (k, w) in path.waypoints.iter().enumerate().skip(1) {
                let to = (grasp_pos.0 + w.dx, grasp_pos.1 + w.dz);
                if !ex.run_move(to)? || !ex.run_hold(ctl.waypoint_pause_s)? {
                    break 'way;
                }
                // Per-waypoint controller updates at the pause end.
                if ex.method.uses_wrist_pi() {
                    let phi = match ex.method {
                        Method::Combined => ex.latest_phi_est.unwrap_or(w.phi_nominal),
                        _ => w.phi_nominal,
                    };
                    let f_real = ex.latest_fz;
                    let allow_down = ex.ticks >= ex.down_guard_until;
                    let before = ex.pi.offset;
                    let done = ex
                        .pi
                        .step(phi, f_real, &geom, spec, &ctl.gains, ctl, allow_down);
                    if ex.pi.offset < before {
                        ex.down_guard_until = ex.ticks + DOWN_GUARD_TICKS;
                    }
                    if std::env::var_os("PIVOTSIM_DBG_CTL").is_some() {
                        eprintln!(
                            "wp={k} phi={phi:+.4} f={f_real:+7.3} accum={:+8.2} pi={:+.5} vis={:+.5}",
                            ex.pi.error_accum, ex.pi.offset, ex.vis.offset
                        );
                    }
                    // For the estimate-driven method a single noisy angle
                    // sample must not end the run; the two-frame latch
                    // below decides instead.
                    if done && ex.method == Method::ForceOnly {
                        break 'way;
                    }
                }
                if ex.done_hint {
                    break 'way;
                }
                let _ = k;
            }
            if !ex.dropped {
                ex.run_hold(ctl.settle_s)?;
            }
        }
    }
    Ok(ex.world.sim_time() - clock_start)
}
