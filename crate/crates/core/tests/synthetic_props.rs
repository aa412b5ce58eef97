use clustercrop::evaluation::EvalParams;
use clustercrop::fusion::CropTransform;
use clustercrop::geometry::BBox;
use clustercrop::lsm::{crop_and_rescale, ClusterRegion};
use clustercrop::synthetic::{
    detection_probability, effective_size, generate_scene, pseudo_detect, run_pipeline,
    PipelineMode, PseudoDetectorConfig, SceneConfig,
};
use clustercrop::LsmConfig;
use proptest::prelude::*;

fn modes() -> [PipelineMode; 3] {
    [
        PipelineMode::GlobalOnly,
        PipelineMode::Uniform { crops: 4 },
        PipelineMode::Lsm(LsmConfig::default()),
    ]
}

#[test]
fn size_independent_regime_modes_agree() {
    let det = PseudoDetectorConfig::default();
    let params = EvalParams::default();
    for seed in 0..10 {
        let scene = generate_scene(&SceneConfig {
            small_share: 0.0,
            seed,
            ..Default::default()
        });
        let aps: Vec<f64> = modes()
            .iter()
            .map(|m| run_pipeline(&scene, m, &det, &params).report.ap.unwrap())
            .collect();
        let spread = aps.iter().cloned().fold(f64::MIN, f64::max)
            - aps.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= 0.01, "seed {seed}: {aps:?}");
    }
}

#[test]
fn repeated_runs_identical() {
    let scene = generate_scene(&SceneConfig {
        seed: 9,
        ..Default::default()
    });
    let det = PseudoDetectorConfig {
        seed: 3,
        ..Default::default()
    };
    for mode in modes() {
        let a = run_pipeline(&scene, &mode, &det, &EvalParams::default());
        let b = run_pipeline(
            &generate_scene(&SceneConfig {
                seed: 9,
                ..Default::default()
            }),
            &mode,
            &det,
            &EvalParams::default(),
        );
        assert_eq!(format!("{:?}", a.detections), format!("{:?}", b.detections));
        assert_eq!(a.report, b.report);
    }
}

#[test]
fn cluster_members_stay_near_centers() {
    let (mut near, mut total) = (0, 0);
    for seed in 0..20 {
        let cfg = SceneConfig {
            cluster_spread: 50.0,
            seed,
            ..Default::default()
        };
        let scene = generate_scene(&cfg);
        for (g, c) in scene.objects.iter().zip(&scene.cluster_of) {
            if let Some(c) = c {
                let [x, y] = scene.cluster_centers[*c];
                total += 1;
                near += ((g.bbox.cx - x).hypot(g.bbox.cy - y) <= 150.0) as usize;
            }
        }
    }
    assert!(near as f64 >= 0.9 * total as f64, "{near}/{total}");
}

proptest! {
    #[test]
    fn zoom_never_hurts_detection_probability(
        w in 1.0..100.0f64, h in 1.0..100.0f64,
        rw in 16.0..1024.0f64, rh in 16.0..640.0f64,
        floor in 1.0..64.0f64,
    ) {
        let obj = BBox::new(rw / 2.0, rh / 2.0, w, h);
        let global = CropTransform::identity(1024.0, 640.0);
        let crop = crop_and_rescale(&ClusterRegion::new(0.0, 0.0, rw, rh, 1.0, 1), (1024.0, 640.0)).unwrap();
        prop_assert!(crop.scale[0] >= 1.0 && crop.scale[1] >= 1.0);
        let p_global = detection_probability(effective_size(&obj, &global), floor);
        let p_crop = detection_probability(effective_size(&obj, &crop), floor);
        prop_assert!(p_crop >= p_global);
    }

    #[test]
    fn pseudo_detect_is_seeded(seed in any::<u64>()) {
        let scene = generate_scene(&SceneConfig { seed, ..Default::default() });
        let view = CropTransform::identity(1024.0, 640.0);
        let cfg = PseudoDetectorConfig { seed, ..Default::default() };
        let a = pseudo_detect(scene.ground_truth(), &view, &cfg);
        let b = pseudo_detect(scene.ground_truth(), &view, &cfg);
        prop_assert_eq!(a, b);
    }
}
