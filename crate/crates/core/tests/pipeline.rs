use stq_ccd::broadphase::Method;
use stq_ccd::geometry::SceneStep;
use stq_ccd::oracle::{ground_truth_pairs, MIN_PRECISION};
use stq_ccd::pipeline::{ccd, ccd_no_zero_toi, PipelineConfig, RETRY_SCALE};
use stq_ccd::scenegen::{cloth, near_touching_vf, soup};

fn audit(scene: &SceneStep) -> usize {
    let truth = ground_truth_pairs(scene, MIN_PRECISION);
    for method in Method::ALL {
        let cfg = PipelineConfig { broad_method: method, ..Default::default() };
        let report = ccd(scene, &cfg).unwrap();
        for (pair, verdict) in &truth.colliding {
            assert!(report.candidates.binary_search(pair).is_ok(), "{method} dropped {pair:?}");
            let toi = report.toi.toi.expect("impact expected");
            assert!(verdict.admits_toi(toi), "{method}: toi {toi} after {verdict:?}");
        }
    }
    truth.colliding.len()
}

#[test]
fn soups_match_ground_truth() {
    let hits: usize = (0..12).map(|seed| audit(&soup(30, seed, 1.0, 0.3, 0.4))).sum();
    assert!(hits > 0);
}

#[test]
fn cloth_matches_ground_truth() {
    audit(&cloth(6, 2, 0.3));
}

#[test]
fn separated_scene_reports_no_impact() {
    let scene = soup(1, 0, 1.0, 0.3, 0.0);
    let report = ccd(&scene, &PipelineConfig::default()).unwrap();
    assert_eq!(report.toi.toi, None);
}

/// Signed height of vertex 3 above the static triangle `0 1 2` at `t`.
fn height(scene: &SceneStep, t: f64) -> f64 {
    let [a, b, c, p] = [0, 1, 2, 3].map(|v| scene.position_at(v, t));
    let e1: [f64; 3] = std::array::from_fn(|k| b[k] - a[k]);
    let e2: [f64; 3] = std::array::from_fn(|k| c[k] - a[k]);
    let n = [e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2], e1[0] * e2[1] - e1[1] * e2[0]];
    (0..3).map(|k| (p[k] - a[k]) * n[k]).sum()
}

#[test]
fn no_zero_policy_keeps_clearance() {
    let mut retried = 0;
    for seed in 0..40 {
        let scene = near_touching_vf(seed, 1e-7);
        let report = ccd_no_zero_toi(&scene, &PipelineConfig::default()).unwrap();
        if let Some(toi) = report.toi.toi {
            assert!(toi > 0.0, "seed {seed}");
            assert!(height(&scene, toi) > 0.0, "seed {seed}: penetrating at {toi}");
        }
        if report.retried {
            retried += 1;
            if let Some(raw) = report.raw_retry_toi {
                assert_eq!(report.toi.toi, Some(raw * RETRY_SCALE));
            }
        }
    }
    assert!(retried > 0);
}
