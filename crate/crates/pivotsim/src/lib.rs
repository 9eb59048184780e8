//! Deterministic quasi-static 2D simulator of a parallel-jaw gripper
//! pivoting boxes about a surface corner, with wrist-force, tactile, and
//! vision feedback controllers and a batch experiment harness.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: box/pivot geometry, support-force model, arc planning,
//!   grasp synthesis, trapezoidal timing.
//! - [`world`]: the quasi-static contact world — grip compliance, stick/slip
//!   in rotation and translation, mode transitions (corner contact, hanging,
//!   dropped), work accounting, and trial judging.
//! - [`sensors`]: tactile pad fields, wrist wrench, and delayed-frame vision,
//!   each with seeded noise.
//! - [`control`]: grasp acquisition, wrist-force PI position control, tactile
//!   grip-width regulation, vision-based progress tracking, and the method
//!   executor combining them.
//! - [`harness`]: scenario grids, seeded batch runs, aggregation, and CSV /
//!   JSON export.
//! - [`config`]: TOML run configuration with strict key checking.

pub mod control;
pub mod error;
pub mod geometry;
pub mod seed;
pub mod sensors;
pub mod world;

pub use control::{
    classify_slip, grasp_until_threshold, pick_place_clearance, run_method, ControlParams,
    GripperCtl, Method, PiGains, PositionCtl, SlipClass, TraceRow, TrialRun, VisionCtl, DT,
    FLAG_COMPLETE, FLAG_DROP, FLAG_LIFTED, FLAG_ROT_SLIP, FLAG_TRANS_SLIP,
};
pub use error::{SimError, SimResult};
pub use seed::split_seed;
pub use geometry::{
    generate_arc_path, ideal_pivot_force, initial_grip_threshold, make_pivot_geometry,
    synthesize_grasp, time_parameterize, ArcPath, BoxSpec, GraspSpec, Pivot, PivotGeometry,
    TimedSegment, TrapezoidProfile, Waypoint, GRAVITY,
};
pub use sensors::{
    sample_tactile, sample_wrist, SensorParams, TactileElement, TactileFrame, VisionPose,
    VisionSensor, WristWrench,
};
pub use world::{
    compute_work, judge_trial, ContactMode, ContactParams, StateFlags, StaticsSolution,
    StepCommand, StepEvents, World, WorldState,
};
