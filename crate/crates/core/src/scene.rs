//! Scenario documents, the pick-and-place world and its phase machine.

use std::collections::BTreeSet;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    angle_between, quat_from_wxyz, quat_to_wxyz, GeometryError, Pose, WeightedMetric,
    WorkspaceLimits,
};

/// Height of the pre-grasp pose above the object centre, and of the carry
/// pose above the zone centre.
pub const HOVER_HEIGHT: f64 = 0.08;
/// Gripper must be closed further than this for a grasp to register.
pub const GRASP_APERTURE: f64 = 0.3;
/// Opening past this in the release phase lets go of the object.
pub const RELEASE_APERTURE: f64 = 0.7;
/// Aperture slack when checking that a hover subgoal has been reached.
pub const APERTURE_TOL: f64 = 0.3;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Validation(String),
}

impl From<GeometryError> for ScenarioError {
    fn from(e: GeometryError) -> Self {
        ScenarioError::Validation(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ObjectRepr", try_from = "ObjectRepr")]
pub struct SceneObject {
    pub id: String,
    pub half_extents: Vector3<f64>,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub graspable: bool,
    pub attached: bool,
    pub color_tag: String,
}

#[derive(Serialize, Deserialize)]
struct ObjectRepr {
    id: String,
    half_extents: [f64; 3],
    position: [f64; 3],
    orientation: [f64; 4],
    graspable: bool,
    #[serde(default)]
    attached: bool,
    color_tag: String,
}

impl From<SceneObject> for ObjectRepr {
    fn from(o: SceneObject) -> Self {
        ObjectRepr {
            id: o.id,
            half_extents: o.half_extents.into(),
            position: o.position.into(),
            orientation: quat_to_wxyz(&o.orientation),
            graspable: o.graspable,
            attached: o.attached,
            color_tag: o.color_tag,
        }
    }
}

impl TryFrom<ObjectRepr> for SceneObject {
    type Error = GeometryError;

    fn try_from(r: ObjectRepr) -> Result<Self, Self::Error> {
        Ok(SceneObject {
            id: r.id,
            half_extents: r.half_extents.into(),
            position: r.position.into(),
            orientation: quat_from_wxyz(r.orientation)?,
            graspable: r.graspable,
            attached: r.attached,
            color_tag: r.color_tag,
        })
    }
}

impl SceneObject {
    pub fn pose(&self) -> Pose {
        Pose::new(self.position, self.orientation, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ZoneRepr", from = "ZoneRepr")]
pub struct TargetZone {
    pub id: String,
    pub center: Vector3<f64>,
    pub radius: f64,
    pub color_tag: String,
}

#[derive(Serialize, Deserialize)]
struct ZoneRepr {
    id: String,
    center: [f64; 3],
    radius: f64,
    color_tag: String,
}

impl From<TargetZone> for ZoneRepr {
    fn from(z: TargetZone) -> Self {
        ZoneRepr {
            id: z.id,
            center: z.center.into(),
            radius: z.radius,
            color_tag: z.color_tag,
        }
    }
}

impl From<ZoneRepr> for TargetZone {
    fn from(r: ZoneRepr) -> Self {
        TargetZone {
            id: r.id,
            center: r.center.into(),
            radius: r.radius,
            color_tag: r.color_tag,
        }
    }
}

impl TargetZone {
    /// Horizontal containment: the zone is an area on the table.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let d = (p - self.center).xy().norm();
        d <= self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub tick_dt: f64,
    pub seed: u64,
    pub start_pose: Pose,
    pub limits: WorkspaceLimits,
    pub objects: Vec<SceneObject>,
    pub zones: Vec<TargetZone>,
}

/// The shipped pick-and-place scenario: one blue block, one red zone.
pub const CANONICAL_SCENARIO: &str = include_str!("../scenarios/canonical.json");
/// Two identical blocks placed mirror-symmetrically in the gripper's view.
pub const DEADLOCK_SCENARIO: &str = include_str!("../scenarios/deadlock.json");

/// Resolve a built-in scenario by name.
pub fn builtin_scenario(name: &str) -> Option<&'static str> {
    match name {
        "canonical" => Some(CANONICAL_SCENARIO),
        "deadlock" => Some(DEADLOCK_SCENARIO),
        _ => None,
    }
}

pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut ids = BTreeSet::new();
        let all_ids = self
            .objects
            .iter()
            .map(|o| &o.id)
            .chain(self.zones.iter().map(|z| &z.id));
        for id in all_ids {
            if !ids.insert(id.as_str()) {
                return Err(ScenarioError::Validation(format!("duplicate id {id:?}")));
            }
        }
        if !(self.tick_dt > 0.0 && self.tick_dt <= 0.1) {
            return Err(ScenarioError::Validation(format!(
                "tick_dt must be in (0, 0.1], got {}",
                self.tick_dt
            )));
        }
        self.limits.validate()?;
        if !self.limits.contains(&self.start_pose.position) {
            return Err(ScenarioError::Validation(
                "start_pose lies outside the workspace limits".into(),
            ));
        }
        for z in &self.zones {
            if !(z.radius > 0.0) {
                return Err(ScenarioError::Validation(format!(
                    "zone {:?} must have a positive radius",
                    z.id
                )));
            }
        }
        if self.objects.iter().filter(|o| o.attached).count() > 0 {
            return Err(ScenarioError::Validation(
                "objects cannot start attached".into(),
            ));
        }
        if !self.objects.iter().any(|o| o.graspable) {
            return Err(ScenarioError::Validation(
                "scenario needs at least one graspable object".into(),
            ));
        }
        if self.zones.is_empty() {
            return Err(ScenarioError::Validation(
                "scenario needs at least one target zone".into(),
            ));
        }
        Ok(())
    }
}

/// Grasp acceptance window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspTolerance {
    /// metres
    pub tol_pos: f64,
    /// degrees
    pub tol_ang_deg: f64,
}

impl Default for GraspTolerance {
    fn default() -> Self {
        GraspTolerance {
            tol_pos: 0.02,
            tol_ang_deg: 15.0,
        }
    }
}

impl GraspTolerance {
    pub fn tol_ang(&self) -> f64 {
        self.tol_ang_deg.to_radians()
    }

    /// Position and orientation (not aperture) are within tolerance.
    pub fn aligned(&self, gripper: &Pose, position: &Vector3<f64>, orientation: &UnitQuaternion<f64>) -> bool {
        (gripper.position - position).norm() <= self.tol_pos
            && angle_between(&gripper.orientation, orientation) <= self.tol_ang()
    }

    pub fn reached(&self, gripper: &Pose, subgoal: &Pose) -> bool {
        self.aligned(gripper, &subgoal.position, &subgoal.orientation)
            && (gripper.aperture - subgoal.aperture).abs() <= APERTURE_TOL
    }
}

pub fn grasp_check(gripper: &Pose, object: &SceneObject, tol: &GraspTolerance) -> bool {
    tol.aligned(gripper, &object.position, &object.orientation) && gripper.aperture < GRASP_APERTURE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Approach,
    Grasp,
    Transport,
    Release,
    Done,
}

impl Phase {
    /// Candidates in this phase are objects (as opposed to zones).
    pub fn targets_objects(self) -> bool {
        matches!(self, Phase::Approach | Phase::Grasp)
    }
}

/// Gripper-relative transform of an attached object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub object_id: String,
    pub offset: [f64; 3],
    pub rotation: [f64; 4],
}

/// Mutable scene state owned by one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub objects: Vec<SceneObject>,
    pub zones: Vec<TargetZone>,
    pub attachment: Option<Attachment>,
}

impl World {
    pub fn from_scenario(s: &Scenario) -> Self {
        World {
            objects: s.objects.clone(),
            zones: s.zones.clone(),
            attachment: None,
        }
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn zone(&self, id: &str) -> Option<&TargetZone> {
        self.zones.iter().find(|z| z.id == id)
    }

    /// Position of an object or zone by id.
    pub fn locate(&self, id: &str) -> Option<Vector3<f64>> {
        self.object(id)
            .map(|o| o.position)
            .or_else(|| self.zone(id).map(|z| z.center))
    }

    fn attach(&mut self, id: &str, gripper: &Pose) {
        let Some(obj) = self.objects.iter_mut().find(|o| o.id == id) else {
            return;
        };
        obj.attached = true;
        let inv = gripper.orientation.inverse();
        let offset = inv * (obj.position - gripper.position);
        let rotation = inv * obj.orientation;
        self.attachment = Some(Attachment {
            object_id: id.to_owned(),
            offset: offset.into(),
            rotation: quat_to_wxyz(&rotation),
        });
    }

    fn detach(&mut self) {
        if let Some(a) = self.attachment.take() {
            if let Some(obj) = self.objects.iter_mut().find(|o| o.id == a.object_id) {
                obj.attached = false;
            }
        }
    }

    fn follow(&mut self, gripper: &Pose) {
        let Some(a) = &self.attachment else { return };
        let Some(obj) = self.objects.iter_mut().find(|o| o.id == a.object_id) else {
            return;
        };
        let rotation = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            a.rotation[0],
            a.rotation[1],
            a.rotation[2],
            a.rotation[3],
        ));
        obj.position = gripper.position + gripper.orientation * Vector3::from(a.offset);
        obj.orientation = gripper.orientation * rotation;
    }
}

fn clamped(limits: &WorkspaceLimits, position: Vector3<f64>, orientation: UnitQuaternion<f64>, aperture: f64) -> Pose {
    Pose::new(limits.clamp_position(&position), orientation, aperture)
}

/// Hover above an object with the gripper open and aligned.
pub fn pregrasp_pose(object: &SceneObject, limits: &WorkspaceLimits) -> Pose {
    clamped(
        limits,
        object.position + Vector3::new(0.0, 0.0, HOVER_HEIGHT),
        object.orientation,
        1.0,
    )
}

/// At the object, aligned, gripper still open.
pub fn grasp_pose(object: &SceneObject, limits: &WorkspaceLimits) -> Pose {
    clamped(limits, object.position, object.orientation, 1.0)
}

/// Carry pose above a zone, keeping the anchor's orientation and aperture.
pub fn carry_pose(zone: &TargetZone, anchor: &Pose, limits: &WorkspaceLimits) -> Pose {
    clamped(
        limits,
        zone.center + Vector3::new(0.0, 0.0, HOVER_HEIGHT),
        anchor.orientation,
        anchor.aperture,
    )
}

/// Open the gripper in place.
pub fn release_pose(anchor: &Pose, limits: &WorkspaceLimits) -> Pose {
    clamped(limits, anchor.position, anchor.orientation, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub phase: Phase,
    pub active_object_id: String,
    pub active_zone_id: String,
    pub subgoal: Pose,
}

impl TaskState {
    pub fn start(scenario: &Scenario) -> Self {
        let object = scenario
            .objects
            .iter()
            .find(|o| o.graspable)
            .expect("validated scenario has a graspable object");
        let zone = &scenario.zones[0];
        TaskState {
            phase: Phase::Approach,
            active_object_id: object.id.clone(),
            active_zone_id: zone.id.clone(),
            subgoal: pregrasp_pose(object, &scenario.limits),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorldEvent {
    PhaseChanged { from: Phase, to: Phase },
    Attached { object_id: String },
    Detached { object_id: String },
}

/// One tick of the pick-and-place phase machine.
pub fn step_world(
    task: &TaskState,
    world: &World,
    gripper: &Pose,
    limits: &WorkspaceLimits,
    tol: &GraspTolerance,
) -> (TaskState, World, Vec<WorldEvent>) {
    let mut task = task.clone();
    let mut world = world.clone();
    let mut events = Vec::new();
    world.follow(gripper);

    let advance = |task: &mut TaskState, to: Phase, subgoal: Pose, events: &mut Vec<WorldEvent>| {
        events.push(WorldEvent::PhaseChanged {
            from: task.phase,
            to,
        });
        task.phase = to;
        task.subgoal = subgoal;
    };

    match task.phase {
        Phase::Approach => {
            if tol.reached(gripper, &task.subgoal) {
                if let Some(obj) = world.object(&task.active_object_id) {
                    let sub = grasp_pose(obj, limits);
                    advance(&mut task, Phase::Grasp, sub, &mut events);
                }
            }
        }
        Phase::Grasp => {
            // The intended object gets first refusal, then the rest in id order.
            let mut order: Vec<&SceneObject> = world.objects.iter().collect();
            order.sort_by(|a, b| {
                (a.id != task.active_object_id, &a.id).cmp(&(b.id != task.active_object_id, &b.id))
            });
            let hit = order
                .into_iter()
                .find(|o| o.graspable && !o.attached && grasp_check(gripper, o, tol))
                .map(|o| o.id.clone());
            if let Some(id) = hit {
                world.attach(&id, gripper);
                events.push(WorldEvent::Attached {
                    object_id: id.clone(),
                });
                task.active_object_id = id;
                if let Some(zone) = world.zone(&task.active_zone_id) {
                    let sub = carry_pose(zone, gripper, limits);
                    advance(&mut task, Phase::Transport, sub, &mut events);
                }
            }
        }
        Phase::Transport => {
            if tol.reached(gripper, &task.subgoal) {
                let sub = release_pose(gripper, limits);
                advance(&mut task, Phase::Release, sub, &mut events);
            }
        }
        Phase::Release => {
            if world.attachment.is_some() && gripper.aperture > RELEASE_APERTURE {
                let id = world.attachment.as_ref().map(|a| a.object_id.clone()).unwrap_or_default();
                world.detach();
                events.push(WorldEvent::Detached { object_id: id });
            }
            if world.attachment.is_none() {
                let placed = world.object(&task.active_object_id).and_then(|obj| {
                    let mut zones: Vec<&TargetZone> = world.zones.iter().collect();
                    zones.sort_by(|a, b| {
                        (a.id != task.active_zone_id, &a.id).cmp(&(b.id != task.active_zone_id, &b.id))
                    });
                    zones.into_iter().find(|z| z.contains(&obj.position)).map(|z| z.id.clone())
                });
                if let Some(zone_id) = placed {
                    task.active_zone_id = zone_id;
                    let sub = task.subgoal.clone();
                    advance(&mut task, Phase::Done, sub, &mut events);
                }
            }
        }
        Phase::Done => {}
    }
    (task, world, events)
}

/// Relative transform of an object to the gripper, as (offset, rotation).
pub fn relative_transform(gripper: &Pose, object: &SceneObject) -> (Vector3<f64>, UnitQuaternion<f64>) {
    let inv = gripper.orientation.inverse();
    (inv * (object.position - gripper.position), inv * object.orientation)
}

/// Weighted error to the current subgoal.
pub fn subgoal_error(task: &TaskState, gripper: &Pose, metric: &WeightedMetric) -> f64 {
    metric.pose_error(gripper, &task.subgoal)
}
