//! Ready-made scene scripts used by the command line, the tests and the
//! files under `scenes/`.

use super::scene::{ClassSpec, ObjectSpec, OccluderSpec, SceneScript, Shape, Waypoint};

pub const BACKGROUND: u32 = 0;
pub const TARGET: u32 = 1;
pub const OCCLUDER: u32 = 2;
pub const DISTRACTOR_A: u32 = 3;
pub const DISTRACTOR_B: u32 = 4;
pub const DECOY: u32 = 5;

pub const TARGET_ID: u32 = 1;

const DIM: usize = 32;

fn classes(seed: u64) -> Vec<ClassSpec> {
    [BACKGROUND, TARGET, OCCLUDER, DISTRACTOR_A, DISTRACTOR_B]
        .into_iter()
        .map(|id| ClassSpec {
            id,
            seed: seed.wrapping_mul(31).wrapping_add(id as u64 + 1),
            vector: None,
        })
        .collect()
}

fn wp(t: f64, x: f64, y: f64) -> Waypoint {
    Waypoint { t, x, y }
}

fn disc(id: u32, class: u32, size: f64, waypoints: Vec<Waypoint>) -> ObjectSpec {
    ObjectSpec {
        id,
        class,
        shape: Shape::Disc,
        size,
        waypoints,
    }
}

fn base(seed: u64, duration: f64) -> SceneScript {
    SceneScript {
        duration,
        frame_rate: 20.0,
        world_extent: 20.0,
        background_class: BACKGROUND,
        classes: classes(seed),
        objects: Vec::new(),
        occluders: Vec::new(),
        noise_sigma: 0.1,
        dim: DIM,
        seed,
        patch_size: 1,
        target: Some(TARGET_ID),
    }
}

/// Target circling a 12 m square at 0.2 m/s for 240 s, passing two static
/// distractors.
pub fn square_loop(seed: u64) -> SceneScript {
    let mut s = base(seed, 240.0);
    s.objects = vec![
        disc(
            TARGET_ID,
            TARGET,
            0.4,
            vec![
                wp(0.0, -6.0, -6.0),
                wp(60.0, 6.0, -6.0),
                wp(120.0, 6.0, 6.0),
                wp(180.0, -6.0, 6.0),
                wp(240.0, -6.0, -6.0),
            ],
        ),
        disc(2, DISTRACTOR_A, 0.5, vec![wp(0.0, 0.0, -7.0)]),
        ObjectSpec {
            id: 3,
            class: DISTRACTOR_B,
            shape: Shape::Rect,
            size: 0.6,
            waypoints: vec![wp(0.0, 7.0, 0.0)],
        },
    ];
    s
}

/// Target driving straight at 0.2 m/s through a tunnel that hides it from
/// 30 s to 35 s.
pub fn tunnel(seed: u64) -> SceneScript {
    let mut s = base(seed, 40.0);
    s.objects = vec![disc(TARGET_ID, TARGET, 0.4, vec![wp(0.0, -4.0, 0.0), wp(40.0, 4.0, 0.0)])];
    // covers the target's whole path between 30 s (x = 2) and 35 s (x = 3)
    s.occluders = vec![OccluderSpec {
        rect: [1.6, -0.5, 1.8, 1.0],
        active: [30.0, 35.0],
        class: OCCLUDER,
    }];
    s
}

/// Stationary target at the origin.
pub fn stationary(seed: u64, noise_sigma: f64) -> SceneScript {
    let mut s = base(seed, 15.0);
    s.noise_sigma = noise_sigma;
    s.objects = vec![disc(TARGET_ID, TARGET, 0.4, vec![wp(0.0, 0.0, 0.0)])];
    s
}

/// Fixed-camera sequence of 200 frames: the target crosses the view past
/// distractors and a partial occluder.
pub fn detection_sequence(seed: u64) -> SceneScript {
    let mut s = base(seed, 9.95);
    s.objects = vec![
        disc(TARGET_ID, TARGET, 0.4, vec![wp(0.0, -1.2, -0.5), wp(9.95, 1.2, 0.5)]),
        disc(2, DISTRACTOR_A, 0.5, vec![wp(0.0, 0.9, -0.7), wp(9.95, -0.9, -0.7)]),
        ObjectSpec {
            id: 3,
            class: DISTRACTOR_B,
            shape: Shape::Rect,
            size: 0.45,
            waypoints: vec![wp(0.0, -0.8, 0.7)],
        },
    ];
    s.occluders = vec![OccluderSpec {
        rect: [1.2, -1.2, 0.3, 0.6],
        active: [0.0, 9.95],
        class: OCCLUDER,
    }];
    s
}

/// [`detection_sequence`] plus two decoys whose class lies at cosine 0.45
/// from the target class.
pub fn decoy_sequence(seed: u64) -> SceneScript {
    let mut s = detection_sequence(seed);
    let mut target = vec![0f32; DIM];
    target[0] = 1.0;
    let mut decoy = vec![0f32; DIM];
    decoy[0] = 0.45;
    decoy[1] = (1.0f32 - 0.45 * 0.45).sqrt();
    s.classes = vec![
        ClassSpec { id: BACKGROUND, seed: 0, vector: Some(axis(2)) },
        ClassSpec { id: TARGET, seed: 0, vector: Some(target) },
        ClassSpec { id: OCCLUDER, seed: 0, vector: Some(axis(3)) },
        ClassSpec { id: DISTRACTOR_A, seed: 0, vector: Some(axis(4)) },
        ClassSpec { id: DISTRACTOR_B, seed: 0, vector: Some(axis(5)) },
        ClassSpec { id: DECOY, seed: 0, vector: Some(decoy) },
    ];
    s.objects.push(disc(4, DECOY, 0.4, vec![wp(0.0, 0.3, 0.9)]));
    s.objects.push(disc(5, DECOY, 0.3, vec![wp(0.0, -0.2, -1.0), wp(9.95, 0.6, -0.9)]));
    s
}

fn axis(k: usize) -> Vec<f32> {
    let mut v = vec![0f32; DIM];
    v[k] = 1.0;
    v
}

/// Scene for throughput measurements: a handful of objects of every class.
pub fn bench(seed: u64, dim: usize) -> SceneScript {
    let mut s = base(seed, 10.0);
    s.dim = dim;
    s.objects = vec![
        disc(TARGET_ID, TARGET, 0.4, vec![wp(0.0, -0.6, 0.0), wp(10.0, 0.6, 0.0)]),
        disc(2, DISTRACTOR_A, 0.5, vec![wp(0.0, 0.8, 0.6)]),
        disc(3, DISTRACTOR_B, 0.3, vec![wp(0.0, -0.8, -0.6)]),
    ];
    s
}

/// Builder for a scenario by name.
pub fn by_name(name: &str, seed: u64) -> Option<SceneScript> {
    Some(match name {
        "square_loop" => square_loop(seed),
        "tunnel" => tunnel(seed),
        "stationary" => stationary(seed, 0.1),
        "detection" => detection_sequence(seed),
        "decoys" => decoy_sequence(seed),
        "bench" => bench(seed, DIM),
        _ => return None,
    })
}

pub const NAMES: [&str; 6] = ["square_loop", "tunnel", "stationary", "detection", "decoys", "bench"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::Scene;

    #[test]
    fn all_scenarios_validate() {
        for name in NAMES {
            for seed in [0, 1, 17] {
                Scene::new(by_name(name, seed).unwrap()).unwrap_or_else(|e| panic!("{name}/{seed}: {e}"));
            }
        }
        assert!(by_name("nope", 0).is_none());
    }

    #[test]
    fn loop_speed_is_point_two() {
        let s = Scene::new(square_loop(0)).unwrap();
        let a = s.target_position(10.0).unwrap();
        let b = s.target_position(11.0).unwrap();
        assert!(((b.0 - a.0).hypot(b.1 - a.1) - 0.2).abs() < 1e-9);
    }

    #[test]
    fn decoy_cosine() {
        let s = Scene::new(decoy_sequence(0)).unwrap();
        let c: f32 = s.base(TARGET).unwrap().iter().zip(s.base(DECOY).unwrap()).map(|(a, b)| a * b).sum();
        assert!((c - 0.45).abs() < 1e-6);
    }

    #[test]
    fn scene_files_match_builders() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes");
        for name in NAMES {
            let file = SceneScript::load(dir.join(format!("{name}.json"))).unwrap();
            assert_eq!(file, by_name(name, 0).unwrap(), "{name}");
        }
    }
}
