//! Noiseless synthetic sensing against the sensor models.
//!
//! The true pose is not a strict maximizer: a ToF endpoint lying exactly on a
//! wall face may fall in the free cell in front of it and read one cell of
//! distance, and the range paired with a detection is averaged over the zones
//! under its box rather than taken along the box center. A displaced pose can
//! undo either effect by a hair. These tests bound both.

use std::f64::consts::SQRT_2;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semantic_mcl::edt::compute_edt;
use semantic_mcl::sensor::{log_gaussian_peak, BeamEndObservation, SemanticObservation};
use semantic_mcl::sim::{synthesize_detections, synthesize_tof};
use semantic_mcl::world::demo_world;
use semantic_mcl::{DistanceField, Pose2D, SemanticGridMap, SensorModelParams, SimConfig, TofGeometry};

struct Scene {
    map: SemanticGridMap,
    edt: DistanceField,
}

fn scene() -> &'static Scene {
    static SCENE: std::sync::OnceLock<Scene> = std::sync::OnceLock::new();
    SCENE.get_or_init(|| {
        let map = demo_world();
        let edt = compute_edt(&map, SensorModelParams::default().r_max).unwrap();
        Scene { map, edt }
    })
}

struct Observed {
    beams: BeamEndObservation,
    semantic: Vec<SemanticObservation>,
}

fn observe(truth: &Pose2D, seed: u64) -> Option<Observed> {
    let Scene { map, .. } = scene();
    if !map.is_free_at(truth.x, truth.y) {
        return None;
    }
    let config = SimConfig::noiseless();
    let params = SensorModelParams::default();
    let geometry = TofGeometry::default();
    let camera = config.camera.intrinsics().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = synthesize_tof(map, truth, 0.0, &geometry, &config, &mut rng).unwrap();
    let beams = BeamEndObservation::new(&frame, &geometry, &params)?;
    let semantic = synthesize_detections(map, truth, &camera, &config, &mut rng)
        .iter()
        .map(|d| SemanticObservation::new(d, &frame, map, &camera, &geometry, &params).unwrap())
        .collect();
    Some(Observed { beams, semantic })
}

impl Observed {
    fn beam_score(&self, p: &Pose2D) -> f64 {
        self.beams.log_likelihood(p, &scene().edt)
    }

    fn score(&self, p: &Pose2D) -> f64 {
        self.beam_score(p)
            + self
                .semantic
                .iter()
                .map(|o| o.log_likelihood(p, &scene().map))
                .sum::<f64>()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn truth_is_within_one_cell_of_the_beam_peak(
        fx in 0.0f64..1.0,
        fy in 0.0f64..1.0,
        theta in -3.1f64..3.1,
        seed in 0u64..1000,
    ) {
        let (w, h) = scene().map.extent();
        let truth = Pose2D::new(fx * w, fy * h, theta);
        let obs = observe(&truth, seed);
        prop_assume!(obs.is_some());
        let obs = obs.unwrap();
        let params = SensorModelParams::default();
        let n = obs.beams.valid_beams() as f64;
        let slack = SQRT_2 * scene().map.resolution() + scene().edt.step();
        let floor = n * log_gaussian_peak(params.sigma_g) - n * slack * slack / (2.0 * params.sigma_g.powi(2));
        prop_assert!(obs.beam_score(&truth) >= floor);
        for o in &obs.semantic {
            let trace = semantic_mcl::geometry::trace_semantic(&scene().map, &truth, o.bearing, o.class_index, 10.0);
            prop_assert!(trace.unwrap().is_hit(), "emitted detection not visible from the truth");
        }
    }
}

#[test]
fn truth_outscores_nearly_all_perturbed_poses() {
    let (w, h) = scene().map.extent();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut poses, mut pairs, mut beam_beaten, mut beaten) = (0, 0, 0, 0);
    while poses < 200 {
        let truth = Pose2D::new(
            rng.random::<f64>() * w,
            rng.random::<f64>() * h,
            rng.random_range(-3.1..3.1),
        );
        let Some(obs) = observe(&truth, rng.random()) else {
            continue;
        };
        poses += 1;
        let (beam_truth, truth_score) = (obs.beam_score(&truth), obs.score(&truth));
        for dx in [-0.25, 0.0, 0.25] {
            for dy in [-0.25, 0.0, 0.25] {
                for dt in [-0.1, 0.0, 0.1] {
                    if dx == 0.0 && dy == 0.0 && dt == 0.0 {
                        continue;
                    }
                    let p = Pose2D::new(truth.x + dx, truth.y + dy, truth.theta + dt);
                    pairs += 1;
                    beam_beaten += (obs.beam_score(&p) > beam_truth) as usize;
                    beaten += (obs.score(&p) > truth_score) as usize;
                }
            }
        }
    }
    assert!(
        beam_beaten * 50 <= pairs,
        "range model: truth beaten on {beam_beaten} of {pairs}"
    );
    assert!(beaten * 50 <= pairs, "combined: truth beaten on {beaten} of {pairs}");
}
