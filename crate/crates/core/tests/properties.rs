use std::collections::BTreeMap;

use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use shared_dof_core::cue::{decode_pattern, encode_direction, Octant, VibroMode};
use shared_dof_core::geometry::{goal_twist, integrate, orthonormalize_pair, Pose, Twist, WeightedMetric, WorkspaceLimits};
use shared_dof_core::intent::{change_perspective, score, Candidate, CandidateKind};

fn wide_limits() -> WorkspaceLimits {
    WorkspaceLimits {
        min_corner: Vector3::new(-100.0, -100.0, -100.0),
        max_corner: Vector3::new(100.0, 100.0, 100.0),
        max_linear_speed: 1e6,
        max_angular_speed: 1e6,
        max_aperture_rate: 1e6,
    }
}

fn twist7() -> impl Strategy<Value = Twist> {
    prop::array::uniform7(-1.0f64..1.0).prop_map(Twist::from_array)
}

fn rotation(max_angle: f64) -> impl Strategy<Value = UnitQuaternion<f64>> {
    (prop::array::uniform3(-1.0f64..1.0), 0.0..max_angle).prop_filter_map("zero axis", |(a, angle)| {
        let axis = Vector3::from(a);
        (axis.norm() > 1e-3).then(|| UnitQuaternion::from_scaled_axis(axis.normalize() * angle))
    })
}

fn pose() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-1.0f64..1.0), rotation(1.5), 0.0f64..=1.0)
        .prop_map(|(p, q, a)| Pose::new(Vector3::from(p), q, a))
}

fn candidates(c: &[(f64, f64)]) -> Vec<Candidate> {
    c.iter()
        .enumerate()
        .map(|(i, (d, b))| Candidate {
            kind: CandidateKind::Object,
            id: format!("c{i}"),
            distance: *d,
            bearing_cos: *b,
            score: 0.0,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn orthonormal_pairs(a in twist7(), b in twist7()) {
        let m = WeightedMetric::default();
        if let Ok((u, v)) = orthonormalize_pair(&a, &b, &m) {
            prop_assert!((m.norm(&u) - 1.0).abs() < 1e-9);
            prop_assert!((m.norm(&v) - 1.0).abs() < 1e-9);
            prop_assert!(m.dot(&u, &v).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn goal_twist_descends(from in pose(), to in pose()) {
        let m = WeightedMetric::default();
        let before = m.pose_error(&from, &to);
        prop_assume!(before > 1e-2);
        let t = goal_twist(&from, &to, &m).unwrap();
        let after = integrate(&from, &t, 1e-3, &wide_limits()).unwrap();
        prop_assert!(m.pose_error(&after, &to) < before);
    }

    #[test]
    fn translation_composes(p in pose(), v in prop::array::uniform3(-0.5f64..0.5), dt in 0.001f64..0.1) {
        let t = Twist::linear(v[0], v[1], v[2]);
        let l = wide_limits();
        let twice = integrate(&integrate(&p, &t, dt, &l).unwrap(), &t, dt, &l).unwrap();
        let once = integrate(&p, &t, 2.0 * dt, &l).unwrap();
        prop_assert!((twice.position - once.position).norm() < 1e-9);
    }

    #[test]
    fn rotation_composes(p in pose(), axis in 0usize..3, w in -2.0f64..2.0, dt in 0.001f64..0.1) {
        let mut a = [0.0; 3];
        a[axis] = w;
        let t = Twist::angular(a[0], a[1], a[2]);
        let l = wide_limits();
        let twice = integrate(&integrate(&p, &t, dt, &l).unwrap(), &t, dt, &l).unwrap();
        let once = integrate(&p, &t, 2.0 * dt, &l).unwrap();
        prop_assert!(twice.orientation.angle_to(&once.orientation) < 1e-6);
        prop_assert_eq!(twice.position, once.position);
    }

    #[test]
    fn integrate_is_deterministic(p in pose(), t in twist7(), dt in 0.001f64..0.1) {
        let l = wide_limits();
        prop_assert_eq!(integrate(&p, &t, dt, &l).unwrap(), integrate(&p, &t, dt, &l).unwrap());
    }

    #[test]
    fn perspective_keeps_position(p in pose(), k in 0u32..20) {
        prop_assert_eq!(change_perspective(&p, k).position, p.position);
    }

    #[test]
    fn scores_sum_to_one(
        c in prop::collection::vec((0.0f64..1.5, -1.0f64..1.0), 1..8),
        temp in 0.01f64..2.0,
    ) {
        let cands = candidates(&c);
        let dist = score(&cands, 1.5, 0.5, 0.5, temp).unwrap();
        let total: f64 = dist.entries.iter().map(|e| e.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let bias: BTreeMap<String, f64> = dist.entries.iter().map(|e| (e.id.clone(), 0.3)).collect();
        let total: f64 = dist.reweighted(&bias).entries.iter().map(|e| e.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn argmax_invariant_under_joint_scaling(
        c in prop::collection::vec((0.0f64..1.5, -1.0f64..1.0), 2..8),
        k in 0.1f64..10.0,
    ) {
        let cands = candidates(&c);
        let base = score(&cands, 1.5, 0.5, 0.5, 0.2).unwrap();
        let scaled = score(&cands, 1.5, 0.5 * k, 0.5 * k, 0.2 * k).unwrap();
        prop_assert_eq!(&base.top().unwrap().id, &scaled.top().unwrap().id);
    }
}

#[test]
fn vibro_exhaustive_round_trip() {
    let zs = [(-0.8, 1u8), (0.0, 2), (0.8, 3)];
    let mut ok = 0;
    for octant in Octant::ALL {
        let az = octant.azimuth_deg().to_radians();
        for (z, level) in zs {
            let h = (1.0f64 - z * z).sqrt();
            let d = [h * az.cos(), h * az.sin(), z];
            for mode in VibroMode::ALL {
                let p = encode_direction(d, mode).unwrap();
                assert!(p.total_ms() <= 2000);
                assert!(p.frames.windows(2).all(|w| w[0].start_ms <= w[1].start_ms));
                assert_eq!(decode_pattern(&p).unwrap(), (octant, level), "{octant:?} {level} {mode:?}");
                ok += 1;
            }
        }
    }
    assert_eq!(ok, 72);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn vibro_random_directions(v in prop::array::uniform3(-1.0f64..1.0)) {
        let v = Vector3::from(v);
        prop_assume!(v.norm() > 1e-3 && v.xy().norm() > 1e-6);
        let d = v.normalize();
        let (octant, level) = decode_pattern(&encode_direction(d.into(), VibroMode::Dual).unwrap()).unwrap();
        let az = d.y.atan2(d.x).to_degrees();
        let diff = (az - octant.azimuth_deg()).rem_euclid(360.0);
        prop_assert!(diff.min(360.0 - diff) <= 22.5 + 1e-9);
        let expected = if d.z < -1.0 / 3.0 { 1 } else if d.z > 1.0 / 3.0 { 3 } else { 2 };
        prop_assert_eq!(level, expected);
    }
}
