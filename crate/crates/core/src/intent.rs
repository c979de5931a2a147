//! Geometric intent oracle.
//!
//! A view cone attached to the gripper collects candidate targets, a softmax
//! over distance and bearing turns them into an intent distribution, and the
//! most likely target is converted into a ranked pair of combined-DoF
//! directions. The user can reshape the distribution by steering toward a
//! candidate, or rotate the gripper in place to get a fresh view.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    goal_twist, orthonormalize_pair, weighted_normalize, yaw, Pose, Twist, WeightedMetric,
    WorkspaceLimits,
};
use crate::scene::{
    carry_pose, grasp_pose, pregrasp_pose, GraspTolerance, Phase, SceneObject, TargetZone,
    TaskState, World,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntentError {
    #[error("no candidate in view")]
    NoIntent,
    #[error("invalid view model: {0}")]
    InvalidView(String),
}

/// Camera axis in the gripper frame: forward and tilted 45 degrees down,
/// so a level gripper looks at the table ahead of its fingers.
pub fn camera_axis(gripper: &Pose) -> Vector3<f64> {
    let local = Vector3::new(1.0, 0.0, -1.0).normalize();
    gripper.orientation * local
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewModel {
    pub half_angle: f64,
    pub range: f64,
}

impl Default for ViewModel {
    fn default() -> Self {
        ViewModel {
            half_angle: 60.0,
            range: 1.5,
        }
    }
}

impl ViewModel {
    pub fn validate(&self) -> Result<(), IntentError> {
        if !(self.half_angle > 0.0 && self.half_angle < 90.0) {
            return Err(IntentError::InvalidView(format!(
                "half_angle must be in (0, 90), got {}",
                self.half_angle
            )));
        }
        if !(self.range > 0.0) {
            return Err(IntentError::InvalidView("range must be > 0".into()));
        }
        Ok(())
    }

    pub fn min_bearing_cos(&self) -> f64 {
        self.half_angle.to_radians().cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntentConfig {
    pub view: ViewModel,
    pub w_dist: f64,
    pub w_bearing: f64,
    pub temperature: f64,
    /// Confidence nudge gain per tick of user input.
    pub eta: f64,
}

impl Default for IntentConfig {
    fn default() -> Self {
        IntentConfig {
            view: ViewModel::default(),
            w_dist: 0.5,
            w_bearing: 0.5,
            temperature: 0.2,
            eta: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Object,
    Zone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub kind: CandidateKind,
    pub id: String,
    pub distance: f64,
    pub bearing_cos: f64,
    pub score: f64,
}

pub fn candidate_score(distance: f64, bearing_cos: f64, range: f64, w_dist: f64, w_bearing: f64) -> f64 {
    w_dist * (1.0 - distance / range) + w_bearing * bearing_cos
}

/// Candidates inside the view cone: objects while picking, zones while placing.
pub fn sense(gripper: &Pose, world: &World, phase: Phase, config: &IntentConfig) -> Vec<Candidate> {
    let view = &config.view;
    let axis = camera_axis(gripper);
    let min_cos = view.min_bearing_cos();
    let mut found: Vec<(CandidateKind, &str, Vector3<f64>)> = match phase {
        Phase::Approach | Phase::Grasp => world
            .objects
            .iter()
            .filter(|o| o.graspable && !o.attached)
            .map(|o| (CandidateKind::Object, o.id.as_str(), o.position))
            .collect(),
        Phase::Transport | Phase::Release => world
            .zones
            .iter()
            .map(|z| (CandidateKind::Zone, z.id.as_str(), z.center))
            .collect(),
        Phase::Done => Vec::new(),
    };
    found.sort_by(|a, b| a.1.cmp(b.1));

    found
        .into_iter()
        .filter_map(|(kind, id, p)| {
            let rel = p - gripper.position;
            let distance = rel.norm();
            let bearing_cos = if distance < 1e-9 {
                1.0
            } else {
                (axis.dot(&rel) / distance).clamp(-1.0, 1.0)
            };
            (distance <= view.range && bearing_cos >= min_cos).then(|| Candidate {
                kind,
                id: id.to_owned(),
                distance,
                bearing_cos,
                score: candidate_score(distance, bearing_cos, view.range, config.w_dist, config.w_bearing),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentEntry {
    pub id: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentDistribution {
    pub entries: Vec<IntentEntry>,
    pub temperature: f64,
}

impl IntentDistribution {
    pub fn probability(&self, id: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.probability)
    }

    /// Entries by descending probability; ties go to the smaller id.
    pub fn ranked(&self) -> Vec<&IntentEntry> {
        let mut v: Vec<&IntentEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| {
            b.probability
                .partial_cmp(&a.probability)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.id.cmp(&b.id))
        });
        v
    }

    pub fn top(&self) -> Option<&IntentEntry> {
        self.ranked().into_iter().next()
    }

    /// Multiply each entry by `exp(log_weight)` and renormalize.
    pub fn reweighted(&self, log_weights: &BTreeMap<String, f64>) -> IntentDistribution {
        let logits: Vec<f64> = self
            .entries
            .iter()
            .map(|e| e.probability.ln() + log_weights.get(&e.id).copied().unwrap_or(0.0))
            .collect();
        let probs = softmax(&logits);
        IntentDistribution {
            entries: self
                .entries
                .iter()
                .zip(probs)
                .map(|(e, p)| IntentEntry {
                    id: e.id.clone(),
                    probability: p,
                })
                .collect(),
            temperature: self.temperature,
        }
    }
}

/// Numerically stable softmax. `-inf` logits get probability zero.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let n = logits.len() as f64;
        return vec![1.0 / n; logits.len()];
    }
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax over candidate scores at the given temperature.
pub fn score(
    candidates: &[Candidate],
    range: f64,
    w_dist: f64,
    w_bearing: f64,
    temperature: f64,
) -> Result<IntentDistribution, IntentError> {
    if candidates.is_empty() {
        return Err(IntentError::NoIntent);
    }
    let logits: Vec<f64> = candidates
        .iter()
        .map(|c| candidate_score(c.distance, c.bearing_cos, range, w_dist, w_bearing) / temperature)
        .collect();
    let probs = softmax(&logits);
    Ok(IntentDistribution {
        entries: candidates
            .iter()
            .zip(probs)
            .map(|(c, p)| IntentEntry {
                id: c.id.clone(),
                probability: p,
            })
            .collect(),
        temperature,
    })
}

pub fn score_with(candidates: &[Candidate], config: &IntentConfig) -> Result<IntentDistribution, IntentError> {
    score(
        candidates,
        config.view.range,
        config.w_dist,
        config.w_bearing,
        config.temperature,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingSuggestion {
    /// One or two weighted-orthonormal directions, best first.
    pub ranked: Vec<Twist>,
    pub top_candidate_id: String,
    pub confidence: f64,
    pub epoch: u64,
}

/// Everything the direction rules need to know about the world.
#[derive(Debug, Clone, Copy)]
pub struct IntentContext<'a> {
    pub world: &'a World,
    pub limits: &'a WorkspaceLimits,
    pub metric: &'a WeightedMetric,
    pub tolerance: &'a GraspTolerance,
    pub config: &'a IntentConfig,
}

#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Object(&'a SceneObject),
    Zone(&'a TargetZone),
}

impl<'a> Target<'a> {
    pub fn resolve(world: &'a World, id: &str) -> Option<Target<'a>> {
        world
            .object(id)
            .map(Target::Object)
            .or_else(|| world.zone(id).map(Target::Zone))
    }
}

pub fn close_direction(metric: &WeightedMetric) -> Twist {
    Twist::aperture(-1.0 / metric.lambda_grip)
}

pub fn open_direction(metric: &WeightedMetric) -> Twist {
    Twist::aperture(1.0 / metric.lambda_grip)
}

fn aperture_fallback(phase: Phase, metric: &WeightedMetric) -> Twist {
    if phase.targets_objects() {
        close_direction(metric)
    } else {
        open_direction(metric)
    }
}

/// Ideal unit direction for `phase` toward `target`.
///
/// `anchor` supplies orientation and aperture for zone targets (normally the
/// task subgoal fixed at phase entry). Within grasp tolerance the direction
/// becomes pure gripper motion; `None` once the task is done.
pub fn desired_direction(
    gripper: &Pose,
    phase: Phase,
    target: Target<'_>,
    anchor: &Pose,
    ctx: &IntentContext<'_>,
) -> Option<Twist> {
    let metric = ctx.metric;
    let goal = match (phase, target) {
        (Phase::Approach, Target::Object(o)) => pregrasp_pose(o, ctx.limits),
        (Phase::Grasp, Target::Object(o)) => {
            if ctx.tolerance.aligned(gripper, &o.position, &o.orientation) {
                return Some(close_direction(metric));
            }
            grasp_pose(o, ctx.limits)
        }
        (Phase::Transport, Target::Zone(z)) => carry_pose(z, anchor, ctx.limits),
        (Phase::Release, _) => return Some(open_direction(metric)),
        (Phase::Done, _) => return None,
        // Phase and target kind disagree; steer by position alone.
        (_, t) => {
            let p = match t {
                Target::Object(o) => o.position,
                Target::Zone(z) => z.center,
            };
            Pose::new(p, gripper.orientation, gripper.aperture)
        }
    };
    Some(goal_twist(gripper, &goal, metric).unwrap_or_else(|_| aperture_fallback(phase, metric)))
}

/// Direction the task will need once the current step toward `target` is
/// complete. Used to fill the second input axis when no competing candidate
/// offers one.
pub fn next_step_direction(
    gripper: &Pose,
    phase: Phase,
    target: Target<'_>,
    ctx: &IntentContext<'_>,
) -> Option<Twist> {
    let metric = ctx.metric;
    match (phase, target) {
        (Phase::Approach, Target::Object(o)) => {
            goal_twist(&pregrasp_pose(o, ctx.limits), &grasp_pose(o, ctx.limits), metric).ok()
        }
        (Phase::Grasp, Target::Object(o)) => {
            if !ctx.tolerance.aligned(gripper, &o.position, &o.orientation) {
                return Some(close_direction(metric));
            }
            let zones = sense(gripper, ctx.world, Phase::Transport, ctx.config);
            let dist = score_with(&zones, ctx.config).ok()?;
            let zone = ctx.world.zone(&dist.top()?.id)?;
            goal_twist(gripper, &carry_pose(zone, gripper, ctx.limits), metric).ok()
        }
        (Phase::Transport, _) => Some(open_direction(metric)),
        _ => None,
    }
}

/// Turn an intent distribution into a ranked mapping suggestion.
pub fn suggest(
    gripper: &Pose,
    task: &TaskState,
    dist: &IntentDistribution,
    prev_epoch: u64,
    ctx: &IntentContext<'_>,
) -> Option<MappingSuggestion> {
    let ranked = dist.ranked();
    let top = ranked.first()?;
    let target = Target::resolve(ctx.world, &top.id)?;
    let metric = ctx.metric;
    let first = desired_direction(gripper, task.phase, target, &task.subgoal, ctx)?;
    let first = weighted_normalize(&first, metric).ok()?;

    let runner_up = ranked
        .get(1)
        .and_then(|e| Target::resolve(ctx.world, &e.id))
        .and_then(|t| desired_direction(gripper, task.phase, t, &task.subgoal, ctx));
    let secondaries = [
        runner_up,
        next_step_direction(gripper, task.phase, target, ctx),
        Some(Twist::linear(0.0, 0.0, -1.0)),
    ];
    let second = secondaries
        .into_iter()
        .flatten()
        .find_map(|s| orthonormalize_pair(&first, &s, metric).ok())
        .map(|(_, b)| b);

    let mut twists = vec![first];
    twists.extend(second);
    Some(MappingSuggestion {
        ranked: twists,
        top_candidate_id: top.id.clone(),
        confidence: top.probability,
        epoch: prev_epoch + 1,
    })
}

/// Per-candidate log-weights `eta * cos(angle between user motion and the
/// direction to the candidate)`. `None` when the user is not translating.
pub fn nudge_log_weights(
    dist: &IntentDistribution,
    user_twist: &Twist,
    gripper: &Pose,
    world: &World,
    eta: f64,
) -> Option<BTreeMap<String, f64>> {
    let speed = user_twist.linear.norm();
    if !(speed > 0.0) || !speed.is_finite() {
        return None;
    }
    let heading = user_twist.linear / speed;
    Some(
        dist.entries
            .iter()
            .map(|e| {
                let cos = world
                    .locate(&e.id)
                    .map(|p| p - gripper.position)
                    .filter(|rel| rel.norm() > 1e-9)
                    .map(|rel| heading.dot(&rel.normalize()))
                    .unwrap_or(0.0);
                (e.id.clone(), eta * cos)
            })
            .collect(),
    )
}

/// Raise the probability of candidates the user is steering toward.
pub fn nudge_confidence(
    dist: &IntentDistribution,
    user_twist: &Twist,
    gripper: &Pose,
    world: &World,
    eta: f64,
) -> IntentDistribution {
    match nudge_log_weights(dist, user_twist, gripper, world, eta) {
        Some(w) => dist.reweighted(&w),
        None => dist.clone(),
    }
}

/// Yaw offset in degrees for a perspective attempt: +15, -30, +45, -60, ...
pub fn perspective_yaw_deg(attempt_index: u32) -> f64 {
    let magnitude = 15.0 * f64::from(attempt_index + 1);
    if attempt_index.is_multiple_of(2) {
        magnitude
    } else {
        -magnitude
    }
}

/// Rotate the gripper in place about the world vertical.
pub fn change_perspective(gripper: &Pose, attempt_index: u32) -> Pose {
    let turn = yaw(perspective_yaw_deg(attempt_index).to_radians());
    Pose::new(gripper.position, turn * gripper.orientation, gripper.aperture)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{quat_to_wxyz, WorkspaceLimits};
    use crate::scene::{load_scenario, CANONICAL_SCENARIO, DEADLOCK_SCENARIO};
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;

    fn object(id: &str, position: Vector3<f64>) -> SceneObject {
        SceneObject {
            id: id.into(),
            half_extents: Vector3::repeat(0.02),
            position,
            orientation: UnitQuaternion::identity(),
            graspable: true,
            attached: false,
            color_tag: "blue".into(),
        }
    }

    fn world_of(objects: Vec<SceneObject>) -> World {
        World {
            objects,
            zones: vec![],
            attachment: None,
        }
    }

    fn limits() -> WorkspaceLimits {
        load_scenario(CANONICAL_SCENARIO).unwrap().limits
    }

    #[test]
    fn sense_on_axis() {
        let g = Pose::new(Vector3::new(0.0, 0.0, 0.5), UnitQuaternion::identity(), 1.0);
        let p = g.position + camera_axis(&g) * 0.3;
        let w = world_of(vec![object("a", p)]);
        let c = sense(&g, &w, Phase::Approach, &IntentConfig::default());
        assert_eq!(c.len(), 1);
        assert_relative_eq!(c[0].bearing_cos, 1.0, epsilon = 1e-12);
        assert_relative_eq!(c[0].distance, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn sense_ignores_objects_behind() {
        let g = Pose::new(Vector3::new(0.0, 0.0, 0.5), UnitQuaternion::identity(), 1.0);
        let p = g.position - camera_axis(&g) * 0.3;
        let w = world_of(vec![object("a", p)]);
        assert!(sense(&g, &w, Phase::Approach, &IntentConfig::default()).is_empty());
    }

    #[test]
    fn sense_symmetric_pair_scores_equal() {
        let s = load_scenario(DEADLOCK_SCENARIO).unwrap();
        let w = World::from_scenario(&s);
        let c = sense(&s.start_pose, &w, Phase::Approach, &IntentConfig::default());
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].score, c[1].score);
    }

    fn cand(id: &str, distance: f64, bearing_cos: f64) -> Candidate {
        Candidate {
            kind: CandidateKind::Object,
            id: id.into(),
            distance,
            bearing_cos,
            score: 0.0,
        }
    }

    #[test]
    fn score_examples() {
        let one = score(&[cand("a", 0.3, 0.9)], 1.5, 0.5, 0.5, 0.2).unwrap();
        assert_eq!(one.entries[0].probability, 1.0);

        let two = score(&[cand("a", 0.3, 0.9), cand("b", 0.3, 0.9)], 1.5, 0.5, 0.5, 0.2).unwrap();
        assert_eq!(two.entries[0].probability, 0.5);
        assert_eq!(two.entries[1].probability, 0.5);

        assert_eq!(score(&[], 1.5, 0.5, 0.5, 0.2), Err(IntentError::NoIntent));
    }

    #[test]
    fn score_softmax_by_hand() {
        // w_dist = 0 and w_bearing = 1 make the score equal the bearing.
        let d = score(&[cand("a", 0.3, 0.9), cand("b", 0.3, 0.5)], 1.5, 0.0, 1.0, 0.2).unwrap();
        // e^2 / (e^2 + 1), frozen
        assert_relative_eq!(d.entries[0].probability, 0.880_797_077_977_882_3, epsilon = 1e-12);
        assert_relative_eq!(d.entries[1].probability, 0.119_202_922_022_117_7, epsilon = 1e-12);
    }

    #[test]
    fn top_breaks_ties_by_id() {
        let d = IntentDistribution {
            entries: vec![
                IntentEntry { id: "b".into(), probability: 0.5 },
                IntentEntry { id: "a".into(), probability: 0.5 },
            ],
            temperature: 0.2,
        };
        assert_eq!(d.top().unwrap().id, "a");
    }

    fn ctx_parts() -> (WeightedMetric, GraspTolerance, IntentConfig) {
        (WeightedMetric::default(), GraspTolerance::default(), IntentConfig::default())
    }

    #[test]
    fn suggest_single_block_ahead() {
        let (metric, tol, cfg) = ctx_parts();
        let lim = limits();
        let g = Pose::new(Vector3::new(0.1, 0.0, 0.38), UnitQuaternion::identity(), 1.0);
        // Block 30 cm ahead of the pre-grasp point, same orientation.
        let w = world_of(vec![object("a", Vector3::new(0.4, 0.0, 0.3))]);
        let task = TaskState {
            phase: Phase::Approach,
            active_object_id: "a".into(),
            active_zone_id: "z".into(),
            subgoal: pregrasp_pose(&w.objects[0], &lim),
        };
        let ctx = IntentContext { world: &w, limits: &lim, metric: &metric, tolerance: &tol, config: &cfg };
        let c = sense(&g, &w, task.phase, &cfg);
        let d = score_with(&c, &cfg).unwrap();
        let s = suggest(&g, &task, &d, 7, &ctx).unwrap();
        assert_eq!(s.confidence, 1.0);
        assert_eq!(s.epoch, 8);
        assert_eq!(s.top_candidate_id, "a");
        assert_relative_eq!(s.ranked[0].linear, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_eq!(s.ranked.len(), 2);
        assert!(metric.dot(&s.ranked[0], &s.ranked[1]).abs() < 1e-9);
    }

    #[test]
    fn suggest_yaw_misaligned_is_mostly_rotation() {
        let (metric, tol, cfg) = ctx_parts();
        let lim = limits();
        let mut o = object("a", Vector3::new(0.4, 0.0, 0.05));
        o.orientation = yaw(std::f64::consts::FRAC_PI_2);
        let w = world_of(vec![o.clone()]);
        let pre = pregrasp_pose(&o, &lim);
        let g = Pose::new(pre.position, UnitQuaternion::identity(), 1.0);
        let task = TaskState {
            phase: Phase::Approach,
            active_object_id: "a".into(),
            active_zone_id: "z".into(),
            subgoal: pre,
        };
        let ctx = IntentContext { world: &w, limits: &lim, metric: &metric, tolerance: &tol, config: &cfg };
        let d = score_with(&sense(&g, &w, task.phase, &cfg), &cfg).unwrap();
        let s = suggest(&g, &task, &d, 0, &ctx).unwrap();
        let c = metric.weighted_components(&s.ranked[0]);
        let dominant = c
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap()
            .0;
        assert_eq!(dominant, 5);
        assert!(s.ranked[0].angular.z > 0.0);
    }

    #[test]
    fn suggest_closes_inside_grasp_tolerance() {
        let (metric, tol, cfg) = ctx_parts();
        let lim = limits();
        let o = object("a", Vector3::new(0.4, 0.0, 0.05));
        let w = world_of(vec![o.clone()]);
        let g = Pose::new(o.position + Vector3::new(0.0, 0.0, 0.01), o.orientation, 1.0);
        let task = TaskState {
            phase: Phase::Grasp,
            active_object_id: "a".into(),
            active_zone_id: "z".into(),
            subgoal: grasp_pose(&o, &lim),
        };
        let ctx = IntentContext { world: &w, limits: &lim, metric: &metric, tolerance: &tol, config: &cfg };
        let d = score_with(&sense(&g, &w, task.phase, &cfg), &cfg).unwrap();
        let s = suggest(&g, &task, &d, 0, &ctx).unwrap();
        let unit_close = weighted_normalize(&Twist::from_array([0., 0., 0., 0., 0., 0., -1.]), &metric).unwrap();
        assert_eq!(s.ranked[0], unit_close);
    }

    #[test]
    fn nudge_closed_form() {
        let g = Pose::new(Vector3::zeros(), UnitQuaternion::identity(), 1.0);
        let w = world_of(vec![
            object("a", Vector3::new(0.3, 0.0, 0.0)),
            object("b", Vector3::new(-0.3, 0.0, 0.0)),
        ]);
        let d = IntentDistribution {
            entries: vec![
                IntentEntry { id: "a".into(), probability: 0.5 },
                IntentEntry { id: "b".into(), probability: 0.5 },
            ],
            temperature: 0.2,
        };
        let n = nudge_confidence(&d, &Twist::linear(0.1, 0.0, 0.0), &g, &w, 1.0);
        let e = std::f64::consts::E;
        assert_relative_eq!(n.probability("a").unwrap(), e / (e + 1.0 / e), epsilon = 1e-12);

        assert_eq!(nudge_confidence(&d, &Twist::linear(0.1, 0.0, 0.0), &g, &w, 0.0), d);
        assert_eq!(nudge_confidence(&d, &Twist::zero(), &g, &w, 1.0), d);
    }

    #[test]
    fn nudge_single_candidate_stays_certain() {
        let g = Pose::identity();
        let w = world_of(vec![object("a", Vector3::new(0.3, 0.1, 0.0))]);
        let d = IntentDistribution {
            entries: vec![IntentEntry { id: "a".into(), probability: 1.0 }],
            temperature: 0.2,
        };
        let n = nudge_confidence(&d, &Twist::linear(-1.0, 0.3, 0.2), &g, &w, 3.0);
        assert_eq!(n.probability("a"), Some(1.0));
    }

    #[test]
    fn perspective_schedule() {
        let degs: Vec<f64> = (0..4).map(perspective_yaw_deg).collect();
        assert_eq!(degs, vec![15.0, -30.0, 45.0, -60.0]);

        let g = Pose::new(Vector3::new(0.1, 0.2, 0.3), UnitQuaternion::identity(), 0.4);
        let r = change_perspective(&g, 0);
        assert_eq!(r.position, g.position);
        assert_eq!(r.aperture, g.aperture);
        let q = quat_to_wxyz(&r.orientation);
        assert_relative_eq!(q[0], 7.5f64.to_radians().cos(), epsilon = 1e-12);
        assert_relative_eq!(q[3], 7.5f64.to_radians().sin(), epsilon = 1e-12);
    }

    #[test]
    fn perspective_breaks_deadlock() {
        let s = load_scenario(DEADLOCK_SCENARIO).unwrap();
        let w = World::from_scenario(&s);
        let cfg = IntentConfig::default();
        let before = score_with(&sense(&s.start_pose, &w, Phase::Approach, &cfg), &cfg).unwrap();
        assert!((before.entries[0].probability - 0.5).abs() < 1e-9);
        let turned = change_perspective(&s.start_pose, 0);
        let after = score_with(&sense(&turned, &w, Phase::Approach, &cfg), &cfg).unwrap();
        let r = after.ranked();
        assert!(r[0].probability > r[1].probability);
    }
}
