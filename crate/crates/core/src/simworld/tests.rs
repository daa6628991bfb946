use super::*;
use crate::features::cosine_sim;
use crate::grid::wrap_angle;
use crate::rng::seeded;

fn corridor(len: usize) -> GridWorld {
    // one-cell walls around a 3-cell-wide corridor
    let (w, h) = (len + 2, 5);
    let mut g = Grid::filled(w, h, true);
    let rect = Rect { x0: 1, y0: 1, w: len, h: 3 };
    for c in rect.cells() {
        g.set(c, false);
    }
    GridWorld::new(0, 0.1, g, vec![Room { rect, room_type: RoomType::Hallway }], vec![])
}

fn quiet() -> (NoiseModel, MotionRngs) {
    (NoiseModel::none(), MotionRngs { actuation: seeded(1), pose: seeded(2) })
}

#[test]
fn same_seed_same_world() {
    let cfg = HouseConfig::default();
    let a = generate_house(17, &cfg).unwrap();
    let b = generate_house(17, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_ne!(a, generate_house(18, &cfg).unwrap());
}

#[test]
fn thousand_seeds_connected() {
    let cfg = HouseConfig::default();
    for seed in 0..1000 {
        let w = generate_house(seed, &cfg).unwrap_or_else(|e| panic!("{e}"));
        assert!(w.is_connected(), "seed {seed}");
        for o in &w.objects {
            let inside: Vec<_> = w.rooms.iter().enumerate().filter(|(_, r)| o.footprint.cells().all(|c| r.rect.contains(c))).collect();
            assert_eq!(inside.len(), 1, "seed {seed} object {}", o.id);
            assert_eq!(inside[0].0, o.room);
        }
        for (i, a) in w.rooms.iter().enumerate() {
            for b in &w.rooms[i + 1..] {
                assert!(a.rect.cells().all(|c| !b.rect.contains(c)), "seed {seed} overlapping rooms");
            }
        }
    }
}

#[test]
fn single_room_holds_everything() {
    let cfg = HouseConfig { rooms_min: 1, rooms_max: 1, ..HouseConfig::default() };
    for seed in 0..50 {
        let w = generate_house(seed, &cfg).unwrap();
        assert_eq!(w.rooms.len(), 1);
        assert!(w.objects.iter().all(|o| o.room == 0));
        assert!(!w.objects.is_empty());
    }
}

#[test]
fn scene_json_roundtrip() {
    let w = generate_house(3, &HouseConfig::default()).unwrap();
    let s = w.to_json().unwrap();
    let back = GridWorld::from_json(&s).unwrap();
    assert_eq!(back, w);
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    for key in ["schema_version", "seed", "grid", "rooms", "doors", "objects"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

#[test]
fn forward_into_wall_stops_at_contact() {
    let w = corridor(30);
    let (noise, mut rngs) = quiet();
    // wall boundary at x = 3.1; start 0.1 m short
    let mut a = AgentState::new(Pose2::new(3.0, 0.25, 0.0));
    w.step(&mut a, Action::Forward, &noise, &mut rngs).unwrap();
    assert!((a.true_pose.x - 3.1).abs() < 1e-5, "{}", a.true_pose.x);
    assert!(w.is_free(w.cell_of(a.true_pose.position())));
    w.step(&mut a, Action::Forward, &noise, &mut rngs).unwrap();
    assert!(a.true_pose.x < 3.1);
}

#[test]
fn twelve_turns_return_heading() {
    let w = corridor(30);
    let (noise, mut rngs) = quiet();
    let start = Pose2::new(1.0, 0.25, 0.3);
    let mut a = AgentState::new(start);
    for _ in 0..12 {
        w.step(&mut a, Action::TurnLeft, &noise, &mut rngs).unwrap();
    }
    assert!(wrap_angle(a.true_pose.theta - start.theta).abs() < 1e-9);
}

#[test]
fn three_forwards_move_1_2_m() {
    let w = corridor(30);
    let (noise, mut rngs) = quiet();
    let mut a = AgentState::new(Pose2::new(0.5, 0.25, 0.0));
    for _ in 0..3 {
        w.step(&mut a, Action::Forward, &noise, &mut rngs).unwrap();
    }
    assert!((a.true_pose.x - 1.7).abs() < 1e-9);
    assert!((a.path_length - 1.2).abs() < 1e-9);
    assert_eq!(a.true_pose, a.odom_pose);
}

#[test]
fn stop_ends_episode() {
    let w = corridor(10);
    let (noise, mut rngs) = quiet();
    let mut a = AgentState::new(Pose2::new(0.5, 0.25, 0.0));
    w.step(&mut a, Action::Stop, &noise, &mut rngs).unwrap();
    assert!(a.done);
    assert!(matches!(w.step(&mut a, Action::Forward, &noise, &mut rngs), Err(SeaError::ContractViolation(_))));
}

#[test]
fn step_limit() {
    let w = corridor(10);
    let (noise, mut rngs) = quiet();
    let mut a = AgentState::new(Pose2::new(0.5, 0.25, 0.0));
    for _ in 0..MAX_STEPS {
        w.step(&mut a, Action::TurnLeft, &noise, &mut rngs).unwrap();
    }
    assert!(a.done);
    assert!(w.step(&mut a, Action::TurnLeft, &noise, &mut rngs).is_err());
}

#[test]
fn odometry_exact_without_noise() {
    let w = generate_house(5, &HouseConfig::default()).unwrap();
    let (noise, mut rngs) = quiet();
    let mut rng = seeded(9);
    let mut a = AgentState::new(w.random_free_pose(&mut rng));
    for i in 0..200 {
        let act = [Action::Forward, Action::Forward, Action::TurnLeft, Action::TurnRight][rng.random_range(0..4)];
        w.step(&mut a, act, &noise, &mut rngs).unwrap();
        assert_eq!(a.true_pose, a.odom_pose, "step {i}");
        assert!(w.is_free(w.cell_of(a.true_pose.position())));
    }
}

#[test]
fn pose_noise_leaves_truth_alone() {
    let w = generate_house(5, &HouseConfig::default()).unwrap();
    let start = w.random_free_pose(&mut seeded(4));
    let run = |level| {
        let noise = NoiseModel::default().with_pose_level(level);
        let mut rngs = MotionRngs { actuation: seeded(1), pose: seeded(2) };
        let mut a = AgentState::new(start);
        for k in 0..60 {
            let act = if k % 5 == 4 { Action::TurnLeft } else { Action::Forward };
            w.step(&mut a, act, &noise, &mut rngs).unwrap();
        }
        a
    };
    let (a0, a10) = (run(0), run(10));
    assert_eq!(a0.true_pose, a10.true_pose);
    assert_ne!(a10.odom_pose, a10.true_pose);
}

#[test]
fn corridor_geodesic() {
    let w = corridor(30);
    let d = w.geodesic([0.25, 0.25], [2.25, 0.25]);
    assert!((d - 2.0).abs() <= 0.15, "{d}");
    assert_eq!(w.geodesic([0.25, 0.25], [0.25, 0.25]), 0.0);
    assert!(w.geodesic([0.25, 0.25], [-1.0, 0.25]).is_infinite());
}

#[test]
fn geodesic_triangle_inequality() {
    let w = generate_house(11, &HouseConfig::default()).unwrap();
    let mut rng = seeded(3);
    for _ in 0..100 {
        let p: Vec<[f64; 2]> = (0..3).map(|_| w.random_free_pose(&mut rng).position()).collect();
        let (ab, bc, ac) = (w.geodesic(p[0], p[1]), w.geodesic(p[1], p[2]), w.geodesic(p[0], p[2]));
        assert!(ac <= ab + bc + 1e-9);
        assert!((ab - w.geodesic(p[1], p[0])).abs() < 1e-9);
    }
}

#[test]
fn zero_sigma_features_are_prototypes() {
    let w = generate_house(2, &HouseConfig::default()).unwrap();
    let scene = SceneFeatures::new(&w, &FeatureBank::standard());
    let pose = w.random_free_pose(&mut seeded(1));
    let mut noise = NoiseModel::none();
    noise.detection.miss_rate = 0.0;
    let obs = observe(&w, &scene, pose, &noise, &mut seeded(4), PoseDelta::default());
    assert_eq!(obs.place_raw, scene.place_prototype(&w, pose.position()).as_slice());
    assert_eq!(obs.image, scene.image_prototype(&w, pose.position()));
    for d in &obs.panoramic {
        let id = w.objects.iter().position(|o| (pose.bearing_range_to(o.center(w.resolution)).1 - d.range).abs() < 1e-12).unwrap();
        assert_eq!(d.feature, scene.object_protos[id]);
    }
}

#[test]
fn object_feature_calibration() {
    let bank = FeatureBank::standard();
    let noise = NoiseModel::default().detection;
    let mut rng = seeded(77);
    let mut above = 0;
    let draws = 10_000;
    for i in 0..draws {
        let proto = instance_prototype(&bank.categories[i % bank.categories.len()], i as u64);
        let a = sensors_noisy(&mut rng, &proto, noise.feature_sigma);
        let b = sensors_noisy(&mut rng, &proto, noise.feature_sigma);
        if cosine_sim(&a, &b).unwrap() > 0.8 {
            above += 1;
        }
    }
    assert!(above as f64 >= 0.99 * draws as f64, "{above}");

    // distinct categories
    let n = bank.categories.len();
    let mut total = 0.0;
    let mut pairs = 0;
    for a in 0..n {
        for b in 0..n {
            if a != b {
                for s in 0..20u64 {
                    let pa = instance_prototype(&bank.categories[a], s);
                    let pb = instance_prototype(&bank.categories[b], s + 1000);
                    total += cosine_sim(&pa, &pb).unwrap();
                    pairs += 1;
                }
            }
        }
    }
    assert!(total / (pairs as f64) < 0.5);
}

fn sensors_noisy(rng: &mut crate::rng::SeaRng, proto: &crate::features::FeatureVec, sigma: f64) -> crate::features::FeatureVec {
    use rand_distr::StandardNormal;
    let v = proto.as_slice().iter().map(|p| p + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    crate::features::FeatureVec::normalized(v).unwrap()
}

#[test]
fn detections_complete_without_misses() {
    let cfg = HouseConfig::default();
    let mut noise = NoiseModel::default();
    noise.detection.miss_rate = 0.0;
    for seed in 0..10 {
        let w = generate_house(seed, &cfg).unwrap();
        let scene = SceneFeatures::new(&w, &FeatureBank::standard());
        let mut rng = seeded(seed);
        for _ in 0..20 {
            let pose = w.random_free_pose(&mut rng);
            let obs = observe(&w, &scene, pose, &noise, &mut rng, PoseDelta::default());
            let expected = w
                .objects
                .iter()
                .enumerate()
                .filter(|(i, o)| pose.bearing_range_to(o.center(w.resolution)).1 <= SENSOR_RANGE && w.line_of_sight(pose.position(), *i))
                .count();
            assert_eq!(obs.panoramic.len(), expected);
            for d in &obs.panoramic {
                assert!(d.range <= SENSOR_RANGE && (0.0..=1.0).contains(&d.score));
            }
            for d in &obs.directional {
                assert!(d.bearing.abs() <= 60f64.to_radians() + 1e-9);
            }
            assert_eq!(obs.depth.rays.len(), DEPTH_RAYS);
        }
    }
}

#[test]
fn image_features_track_position() {
    let w = generate_house(8, &HouseConfig::default()).unwrap();
    let scene = SceneFeatures::new(&w, &FeatureBank::standard());
    let hall = w.rooms[0].rect;
    let p = w.center_of(Cell::new(hall.x0 + 5, hall.y0 + 5));
    let near = [p[0] + 0.3, p[1]];
    let far = [p[0] + 2.5, p[1]];
    let a = scene.image_prototype(&w, p);
    assert!(cosine_sim(&a, &scene.image_prototype(&w, near)).unwrap() > 0.8);
    assert!(cosine_sim(&a, &scene.image_prototype(&w, far)).unwrap() < 0.8);
}

#[test]
fn simulator_is_deterministic() {
    let w = generate_house(4, &HouseConfig::default()).unwrap();
    let scene = SceneFeatures::new(&w, &FeatureBank::standard());
    let start = w.random_free_pose(&mut seeded(2));
    let run = || {
        let mut sim = Simulator::new(&w, &scene, NoiseModel::default().with_pose_level(3), start, 99).unwrap();
        let mut out = vec![serde_json::to_string(&sim.observe()).unwrap()];
        for k in 0..40 {
            let act = if k % 4 == 3 { Action::TurnRight } else { Action::Forward };
            let (o, _) = sim.step(act).unwrap();
            out.push(serde_json::to_string(&o).unwrap());
        }
        (out, sim.agent)
    };
    assert_eq!(run(), run());
}
