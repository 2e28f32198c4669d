use super::*;

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 2]> {
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}

fn handle(w: u32, h: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> RleMask {
    RleMask::from_raster(&Raster::from_rect(w, h, x0, y0, x1, y1))
}

/// Top view: wall on the left, panel hinged at (10, 24), handle near the
/// free end, opening toward +y.
fn door() -> ArticulatedScene {
    ArticulatedScene {
        id: "door-t".into(),
        canvas: [64, 48],
        static_link: rect(0.0, 20.0, 10.0, 28.0),
        movable_link: rect(10.0, 22.0, 54.0, 26.0),
        joint: Joint::Revolute {
            pivot: [10.0, 24.0],
            range: [0.0, 1.6],
        },
        handle_region: handle(64, 48, 46, 24, 50, 26),
        normal: [0.0, 1.0],
        category: "door".into(),
    }
}

/// Top view: drawer sliding out along +x.
fn drawer() -> ArticulatedScene {
    ArticulatedScene {
        id: "drawer-t".into(),
        canvas: [64, 48],
        static_link: rect(4.0, 8.0, 40.0, 40.0),
        movable_link: rect(30.0, 12.0, 50.0, 36.0),
        joint: Joint::Prismatic {
            axis: [1.0, 0.0],
            range: [0.0, 20.0],
        },
        handle_region: handle(64, 48, 46, 20, 50, 28),
        normal: [1.0, 0.0],
        category: "drawer".into(),
    }
}

fn plan(contact: [u32; 2], approach: [f64; 2]) -> ContactPlan {
    ContactPlan {
        contact,
        approach,
        source: PlanSource::MaskCentroid,
    }
}

#[test]
fn oracle_succeeds() {
    for s in [door(), drawer()] {
        s.check().unwrap();
        let r = evaluate_plan(&s, &oracle_plan(&s).unwrap(), DEFAULT_COS_THRESHOLD);
        assert!(r.success, "{}: {:?}", s.id, r.reason);
    }
}

#[test]
fn static_frame_is_off_part() {
    let r = evaluate_plan(&door(), &plan([5, 24], [0.0, 1.0]), DEFAULT_COS_THRESHOLD);
    assert_eq!((r.success, r.reason), (false, TrialReason::OffPart));
    let r = evaluate_plan(&door(), &plan([500, 24], [0.0, 1.0]), DEFAULT_COS_THRESHOLD);
    assert_eq!(r.reason, TrialReason::OffPart);
}

#[test]
fn perpendicular_pull_on_drawer_fails() {
    // axis (1, 0) against approach (0, 1): cos = 0
    let r = evaluate_plan(&drawer(), &plan([48, 24], [0.0, 1.0]), DEFAULT_COS_THRESHOLD);
    assert_eq!(r.reason, TrialReason::BadDirection);
}

#[test]
fn gate_boundary_is_inclusive() {
    let s = drawer();
    let p = PreparedScene::new(&s);
    // exactly 60 degrees off the axis
    let a = [0.5, 0.75f64.sqrt()];
    assert_eq!(p.gate([48, 24], a, 0.5), TrialReason::Ok);
    let a = [0.499, (1.0 - 0.499f64 * 0.499).sqrt()];
    assert_eq!(p.gate([48, 24], a, 0.5), TrialReason::BadDirection);
}

#[test]
fn negative_range_flips_motion() {
    let mut s = drawer();
    s.joint = Joint::Prismatic {
        axis: [1.0, 0.0],
        range: [-20.0, 0.0],
    };
    assert_eq!(s.motion_direction(48, 24), Some([-1.0, -0.0]));
    assert!(!evaluate_plan(&s, &plan([48, 24], [1.0, 0.0]), 0.5).success);
}

#[test]
fn revolute_tangent() {
    let s = door();
    // center (48.5, 25.5), radius (38.5, 1.5), tangent (-1.5, 38.5)
    let d = s.motion_direction(48, 25).unwrap();
    let n = 1.5f64.hypot(38.5);
    assert!((d[0] + 1.5 / n).abs() < 1e-15 && (d[1] - 38.5 / n).abs() < 1e-15);
}

#[test]
fn invalid_scenes_rejected() {
    let mut s = door();
    s.handle_region = handle(64, 48, 0, 0, 4, 4);
    assert!(s.check().is_err());
    let mut s = door();
    s.joint = Joint::Revolute {
        pivot: [10.0, 24.0],
        range: [1.0, 1.0],
    };
    assert!(s.check().is_err());
    let mut s = door();
    s.normal = [0.0, 2.0];
    assert!(s.check().is_err());
}

#[test]
fn load_skips_bad_scenes() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_scenes(dir.path()).unwrap().0.is_empty());
    std::fs::write(dir.path().join("a.json"), serde_json::to_string(&door()).unwrap()).unwrap();
    let mut bad = drawer();
    bad.handle_region = handle(64, 48, 0, 0, 2, 2);
    std::fs::write(dir.path().join("b.json"), serde_json::to_string(&bad).unwrap()).unwrap();
    std::fs::write(dir.path().join("c.json"), "{").unwrap();
    let (scenes, errors) = load_scenes(dir.path()).unwrap();
    assert_eq!(scenes, vec![door()]);
    assert_eq!(errors.len(), 2);
}

#[test]
fn scene_json_shape() {
    let v: serde_json::Value = serde_json::to_value(drawer()).unwrap();
    assert_eq!(v["joint"]["kind"], "prismatic");
    assert_eq!(v["joint"]["axis"], serde_json::json!([1.0, 0.0]));
    assert_eq!(v["canvas"], serde_json::json!([64, 48]));
    assert_eq!(v["handle_region"]["size"], serde_json::json!([48, 64]));
}

#[test]
fn quarter_turn_preserves_outcomes() {
    let s = door();
    let r = s.rotate_quarter();
    r.check().unwrap();
    let (m, mr) = (s.movable_raster(), r.movable_raster());
    for y in 0..48 {
        for x in 0..64 {
            assert_eq!(m.get(x, y), mr.get(47 - y, x));
        }
    }
    let p = PreparedScene::new(&s);
    let pr = PreparedScene::new(&r);
    for k in 0..24 {
        let t = k as f64 * std::f64::consts::TAU / 24.0;
        for (x, y) in [(48, 25), (12, 23), (30, 22), (5, 5)] {
            let a = plan([x, y], [t.cos(), t.sin()]);
            let b = rotate_plan_quarter(&a, s.canvas);
            assert_eq!(p.evaluate(&a, 0.5).reason, pr.evaluate(&b, 0.5).reason);
        }
    }
}

#[test]
fn suite_tables() {
    let scenes = vec![door(), drawer()];
    let (rep, trials) = run_suite(&scenes, &oracle_plans(&scenes).unwrap(), DEFAULT_COS_THRESHOLD);
    assert_eq!(rep.avg, Some(1.0));
    assert_eq!(trials.len(), 2);
    let (rep, _) = run_suite(&scenes, &BTreeMap::new(), DEFAULT_COS_THRESHOLD);
    assert_eq!(rep.avg, Some(0.0));
    assert_eq!(rep.per_scene["door-t"].reasons[&TrialReason::OffPart], 1);
    assert!(rep.to_json().contains("\"AVG\": 0.0000"));
    assert!(rep.to_csv().contains("category,AVG,0.0000"));
}

#[test]
fn random_plans_are_seeded() {
    let scenes = vec![door()];
    assert_eq!(random_plans(&scenes, 5, 10), random_plans(&scenes, 5, 10));
    assert_ne!(random_plans(&scenes, 5, 10), random_plans(&scenes, 6, 10));
}

#[test]
fn predicted_boxes_become_plans() {
    let s = drawer();
    // handle [46, 20, 50, 28] on 64 x 48
    let line = PredictionLine {
        id: s.id.clone(),
        output_text: "[0.719, 0.417, 0.781, 0.583]".into(),
        score: None,
    };
    let (plans, notes) = plans_from_predictions(std::slice::from_ref(&s), &[line], None);
    assert!(notes.is_empty());
    let p = plans[&s.id][0];
    assert_eq!(p.source, PlanSource::BboxFallback);
    assert!(evaluate_plan(&s, &p, 0.5).success);
}
