#![allow(dead_code)]

use corax_core::bundle::{GroundTruth, Region, Shape};
use corax_core::error_sim::{ErrorMode, alter_report};
use corax_core::gaze::{Fixation, Scanpath};
use corax_core::grounding::WordAlignment;
use corax_core::imageio::GrayImage;
use corax_core::synthetic::{PositivePlan, SyntheticConfig, generate, lead_finding};
use corax_core::{Abnormality, CaseBundle, CaseBundleFile, LabelSet, Labeler, Report};

/// Synthetic cases whose reports each lose their lead finding.
pub fn cases_with_misses(n: usize, seed: u64) -> Vec<CaseBundle> {
    let labeler = Labeler::default();
    let cfg = SyntheticConfig::new(n, seed).with_plan(PositivePlan::every_case_positive());
    generate(&cfg)
        .unwrap()
        .into_iter()
        .map(|c| {
            let mut b = c.bundle;
            let lead = lead_finding(&b.ground_truth.labels).unwrap();
            b.report = alter_report(&labeler, &b.report, lead, ErrorMode::Mask).unwrap().0;
            b
        })
        .collect()
}

pub fn embedded(b: &CaseBundle) -> CaseBundleFile {
    b.to_embedded_file().unwrap()
}

/// One edema miss whose accepted referral scores exactly 0.5: a 37-pixel
/// blob inside a 74-pixel truth region.
pub fn half_iou_case() -> CaseBundle {
    let px = |i: usize| i as f64 / 64.0;
    let regions = vec![
        Region {
            abnormality: Abnormality::Edema,
            shape: Shape::Rect { x: px(29), y: px(29), w: px(7), h: px(7) },
        },
        Region {
            abnormality: Abnormality::Edema,
            shape: Shape::Rect { x: px(2), y: px(2), w: px(5), h: px(5) },
        },
    ];
    CaseBundle {
        case_id: "half".into(),
        image: GrayImage::new(64, 64, vec![40; 64 * 64]).unwrap(),
        scanpath: Scanpath {
            case_id: "half".into(),
            fixations: vec![Fixation { start_ms: 600, end_ms: 1800, x_norm: 0.5, y_norm: 0.5 }],
            total_duration_ms: 3000,
        },
        report: Report::new("half", "lungs are clear."),
        transcript: Some(vec![
            WordAlignment { word: "mild".into(), t_start_ms: 700, t_end_ms: 950 },
            WordAlignment { word: "edema".into(), t_start_ms: 1000, t_end_ms: 1400 },
        ]),
        ground_truth: GroundTruth {
            labels: LabelSet::from([Abnormality::Edema]),
            regions,
        },
    }
}
