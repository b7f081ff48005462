#![allow(dead_code)]

use homeplan::knowledge::KnowledgeBase;
use homeplan::spatial::{Concept, Hyperparameters, Region, SpatialConceptModel};
use homeplan::world::{Environment, Skill};
use indexmap::IndexMap;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random categorical of length `n`. With `sparse`, some entries are
/// zeroed (at least one stays positive).
pub fn random_categorical(rng: &mut ChaCha8Rng, n: usize, sparse: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    if sparse {
        let keep = rng.random_range(0..n);
        for (i, x) in v.iter_mut().enumerate() {
            if i != keep && rng.random_bool(0.3) {
                *x = 0.0;
            }
        }
    }
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

/// A valid model with `k` concepts, `r` regions, `w` place words and `o`
/// objects, drawn from `seed`.
pub fn random_model(seed: u64, k: usize, r: usize, w: usize, o: usize) -> SpatialConceptModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sparse = rng.random_bool(0.5);
    let concepts = (0..k)
        .map(|_| Concept {
            word_dist: random_categorical(&mut rng, w, sparse),
            object_dist: random_categorical(&mut rng, o, sparse),
            region_dist: random_categorical(&mut rng, r, sparse),
        })
        .collect();
    let regions = (0..r)
        .map(|_| {
            let a = rng.random_range(0.1..2.0);
            let b = rng.random_range(0.1..2.0);
            let c = rng.random_range(-0.9..0.9) * f64::sqrt(a * b);
            Region {
                mean: [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)],
                covariance: [[a, c], [c, b]],
                observations: rng.random_range(0..40),
            }
        })
        .collect();
    SpatialConceptModel {
        vocab_places: (0..w).map(|i| format!("word{i}")).collect(),
        vocab_objects: (0..o).map(|i| format!("object{i}")).collect(),
        pi: random_categorical(&mut rng, k, false),
        concepts,
        regions,
        hyperparameters: Hyperparameters { num_concepts: k, num_regions: r, ..Default::default() },
        seed,
    }
}

/// Full joint table `P(C, i, o)` over concepts, regions and objects.
fn joint_region_object(m: &SpatialConceptModel) -> Vec<Vec<Vec<f64>>> {
    m.concepts
        .iter()
        .zip(&m.pi)
        .map(|(c, pi)| {
            c.region_dist
                .iter()
                .map(|phi| c.object_dist.iter().map(|xi| pi * phi * xi).collect())
                .collect()
        })
        .collect()
}

fn condition(mut v: Vec<f64>) -> Vec<f64> {
    let z: f64 = v.iter().sum();
    if z > 0.0 {
        v.iter_mut().for_each(|x| *x /= z);
        v
    } else {
        vec![1.0 / v.len() as f64; v.len()]
    }
}

/// `P(i | o)` by enumerating the joint and conditioning on `o`.
pub fn oracle_object_posterior(m: &SpatialConceptModel, o: usize) -> Vec<f64> {
    let joint = joint_region_object(m);
    let r = m.regions.len();
    condition((0..r).map(|i| joint.iter().map(|per_c| per_c[i][o]).sum()).collect())
}

/// `P(w | i)` by enumerating `P(C, i, w)` and conditioning on `i`.
pub fn oracle_word_posterior(m: &SpatialConceptModel, i: usize) -> Vec<f64> {
    let w = m.vocab_places.len();
    let mut table = vec![0.0; w];
    for (c, pi) in m.concepts.iter().zip(&m.pi) {
        for (j, slot) in table.iter_mut().enumerate() {
            *slot += pi * c.region_dist[i] * c.word_dist[j];
        }
    }
    condition(table)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn arb_model() -> impl Strategy<Value = SpatialConceptModel> {
    (any::<u64>(), 1usize..=5, 1usize..=6, 1usize..=6, 1usize..=6)
        .prop_map(|(seed, k, r, w, o)| random_model(seed, k, r, w, o))
}

/// Knowledge base with random rows for `objects` over `rooms`.
pub fn random_kb(seed: u64, robot: &str, rooms: &[String], objects: &[String]) -> KnowledgeBase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let presence_table: IndexMap<String, Vec<f64>> = objects
        .iter()
        .map(|o| (o.clone(), random_categorical(&mut rng, rooms.len(), false)))
        .collect();
    KnowledgeBase {
        robot_id: robot.to_string(),
        room_names: rooms.to_vec(),
        place_vocab: rooms.iter().map(|r| vec![r.clone(), format!("{r}_word")]).collect(),
        presence_table,
    }
}

/// Every skill a robot could be asked to run in `env`.
pub fn all_skills(env: &Environment) -> Vec<Skill> {
    let mut skills = Vec::new();
    let mut locations: Vec<String> = env.rooms.iter().map(|r| r.name.clone()).collect();
    for d in &env.delivery_points {
        if !locations.contains(&d.name) {
            locations.push(d.name.clone());
        }
    }
    for l in &locations {
        skills.push(Skill::Navigation(l.clone()));
        skills.push(Skill::Place(l.clone()));
    }
    for o in env.objects() {
        skills.push(Skill::ObjectDetection(o.to_string()));
        skills.push(Skill::Pick(o.to_string()));
    }
    skills
}

pub fn paper_home() -> Environment {
    Environment::builtin("paper_home").unwrap()
}

/// Knowledge bases that put each object's mass on its true room, for the
/// robot on that floor only.
pub fn oracle_kbs(env: &Environment) -> Vec<KnowledgeBase> {
    homeplan::world::default_robots(env)
        .iter()
        .map(|robot| {
            let rooms: Vec<String> = env.rooms_on(&robot.floor).map(|r| r.name.clone()).collect();
            let presence_table = env
                .objects_on(&robot.floor)
                .map(|o| {
                    let row: Vec<f64> = rooms
                        .iter()
                        .map(|r| if *r == env.placements[o] { 0.8 } else { 0.2 / (rooms.len() - 1) as f64 })
                        .collect();
                    (o.to_string(), row)
                })
                .collect();
            KnowledgeBase {
                robot_id: robot.robot_id.clone(),
                place_vocab: vec![Vec::new(); rooms.len()],
                room_names: rooms,
                presence_table,
            }
        })
        .collect()
}
