use corax_core::bundle::GroundTruth;
use corax_core::gaze::{BinaryMask, Fixation, HeatmapFrame, Scanpath, binarize, roi_mean_image, build_gaze_video};
use corax_core::grounding::{PriorAtlas, candidate_windows, ground_by_dwell, temporal_iou};
use corax_core::labeler::Report;
use corax_core::metrics::{CaseOutcome, ConfusionCounts, oder, pecr, referral_usefulness, spatial_iou, total_usefulness};
use corax_core::referral::{CaseAnalysis, Referral, ReviewStatus, RoiMode, referral_id};
use corax_core::stats::empirical_cdf;
use corax_core::{Abnormality, LabelSet, Labeler};
use proptest::prelude::*;

const W: usize = 12;
const H: usize = 10;

fn mask() -> impl Strategy<Value = BinaryMask> {
    proptest::collection::vec(any::<bool>(), W * H).prop_map(|data| BinaryMask {
        width: W,
        height: H,
        data,
    })
}

fn nonempty_mask() -> impl Strategy<Value = BinaryMask> {
    mask().prop_filter("non-empty", |m| !m.is_empty())
}

fn frame() -> impl Strategy<Value = HeatmapFrame> {
    proptest::collection::vec(0.0f64..1.0, W * H)
        .prop_filter("positive max", |v| v.iter().any(|x| *x > 0.0))
        .prop_map(|values| HeatmapFrame {
            width: W,
            height: H,
            values,
        })
}

fn abnormality() -> impl Strategy<Value = Abnormality> {
    prop::sample::select(Abnormality::EVALUATED.to_vec())
}

fn referral(abn: Abnormality, status: ReviewStatus, roi: HeatmapFrame) -> Referral {
    Referral {
        referral_id: referral_id("p", abn),
        case_id: "p".into(),
        abnormality: abn,
        interval: (0, 1000),
        roi_mode: RoiMode::Mean,
        status,
        decided_by: None,
        iou: None,
        roi_path: None,
        roi: Some(roi),
    }
}

fn scanpath() -> impl Strategy<Value = Scanpath> {
    proptest::collection::vec((0u64..400, 40u64..600, 0.0f64..=1.0, 0.0f64..=1.0), 1..40).prop_map(|parts| {
        let mut t = 0;
        let fixations = parts
            .into_iter()
            .map(|(gap, dur, x, y)| {
                let f = Fixation {
                    start_ms: t + gap,
                    end_ms: t + gap + dur,
                    x_norm: x,
                    y_norm: y,
                };
                t = f.end_ms;
                f
            })
            .collect();
        Scanpath {
            case_id: "p".into(),
            fixations,
            total_duration_ms: t + 100,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn usefulness_is_gated_by_acceptance(
        abn in abnormality(),
        accepted in any::<bool>(),
        roi in frame(),
        truth in nonempty_mask(),
        frac in 0.05f64..0.95,
    ) {
        let status = if accepted { ReviewStatus::Accepted } else { ReviewStatus::Rejected };
        let r = referral(abn, status, roi.clone());
        let s = referral_usefulness(&r, &truth, frac).unwrap();
        if accepted {
            let iou = spatial_iou(&binarize(&roi, frac).unwrap(), &truth).unwrap();
            prop_assert_eq!(s.value.to_bits(), iou.to_bits());
        } else {
            prop_assert_eq!(s.value.to_bits(), 0.0f64.to_bits());
        }
    }

    #[test]
    fn iou_laws(a in nonempty_mask(), b in nonempty_mask()) {
        prop_assert_eq!(spatial_iou(&a, &a).unwrap(), 1.0);
        prop_assert_eq!(spatial_iou(&a, &b).unwrap(), spatial_iou(&b, &a).unwrap());
        let v = spatial_iou(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        let complement = BinaryMask { data: a.data.iter().map(|x| !x).collect(), ..a.clone() };
        if !complement.is_empty() {
            prop_assert_eq!(spatial_iou(&a, &complement).unwrap(), 0.0);
        }
    }

    #[test]
    fn total_usefulness_laws(
        labels in proptest::collection::btree_set(abnormality(), 1..5),
        decisions in proptest::collection::vec(any::<bool>(), 5),
        rois in proptest::collection::vec(frame(), 5),
        deferral_missed in any::<bool>(),
    ) {
        let labels: Vec<Abnormality> = labels.into_iter().collect();
        let truth = GroundTruth { labels: labels.iter().copied().collect(), regions: vec![] };
        // deferral
        let misses: LabelSet = if deferral_missed { [labels[0]].into() } else { LabelSet::new() };
        let deferral = CaseOutcome {
            analysis: CaseAnalysis {
                case_id: "p".into(),
                set_a: LabelSet::new(),
                set_b: LabelSet::new(),
                grounded: vec![],
                referrals: vec![],
                warnings: vec![],
            },
            ground_truth: truth.clone(),
            misses,
            dims: (W, H),
        };
        let tu = total_usefulness(&deferral, 0.25).unwrap().value;
        prop_assert_eq!(tu, if deferral_missed { 0.0 } else { 1.0 });

        let referrals: Vec<Referral> = labels
            .iter()
            .zip(&decisions)
            .zip(&rois)
            .map(|((a, d), roi)| {
                let s = if *d { ReviewStatus::Accepted } else { ReviewStatus::Rejected };
                referral(*a, s, roi.clone())
            })
            .collect();
        let set_b: LabelSet = labels.iter().copied().collect();
        let outcome = CaseOutcome {
            analysis: CaseAnalysis {
                case_id: "p".into(),
                set_a: LabelSet::new(),
                set_b,
                grounded: vec![],
                referrals,
                warnings: vec![],
            },
            ground_truth: GroundTruth {
                labels: truth.labels.clone(),
                regions: labels
                    .iter()
                    .map(|a| corax_core::bundle::Region {
                        abnormality: *a,
                        shape: corax_core::bundle::Shape::Rect { x: 0.2, y: 0.2, w: 0.5, h: 0.5 },
                    })
                    .collect(),
            },
            misses: LabelSet::new(),
            dims: (W, H),
        };
        let rus = outcome.referral_samples(0.25).unwrap();
        let mean = rus.iter().map(|s| s.value).sum::<f64>() / rus.len() as f64;
        let tu = total_usefulness(&outcome, 0.25).unwrap().value;
        prop_assert!((tu - mean).abs() < 1e-12);
    }

    #[test]
    fn cdf_counts_match_brute_force(
        samples in proptest::collection::vec(0.0f64..1.0, 1..200),
        thresholds in proptest::collection::vec(-0.1f64..1.1, 50),
    ) {
        let cdf = empirical_cdf(&samples).unwrap();
        for t in thresholds {
            let brute = samples.iter().filter(|x| **x > t).count();
            prop_assert_eq!(cdf.count_above(t), brute);
        }
        prop_assert!(cdf.points.windows(2).all(|w| w[0].x < w[1].x && w[0].f <= w[1].f));
        prop_assert_eq!(cdf.points.last().unwrap().f, 1.0);
    }

    #[test]
    fn rates_stay_in_range(tr in 0u64..500, fd in 0u64..500, fr in 0u64..500, td in 0u64..500) {
        let c = ConfusionCounts::new(tr, fd, fr, td);
        match pecr(&c) {
            Ok(v) => prop_assert!((0.0..=100.0).contains(&v)),
            Err(_) => prop_assert_eq!(tr + fd, 0),
        }
        match oder(&c) {
            Ok(v) => prop_assert!((0.0..=100.0).contains(&v)),
            Err(_) => prop_assert_eq!(fr + td, 0),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn temporal_iou_laws(a in 0u64..5000, la in 1u64..3000, b in 0u64..5000, lb in 1u64..3000) {
        let x = (a, a + la);
        let y = (b, b + lb);
        prop_assert_eq!(temporal_iou(x, x), 1.0);
        prop_assert_eq!(temporal_iou(x, y), temporal_iou(y, x));
        if a + la <= b || b + lb <= a {
            prop_assert_eq!(temporal_iou(x, y), 0.0);
        }
    }

    #[test]
    fn windows_cover_the_recording(total in 1u64..20_000, window in 1u64..4000, stride in 1u64..1000) {
        let ws = candidate_windows(total, window, stride);
        prop_assert!(!ws.is_empty());
        prop_assert_eq!(ws[0].0, 0);
        prop_assert_eq!(ws.last().unwrap().1, total);
        prop_assert!(ws.iter().all(|w| w.1 <= total && w.1 - w.0 == window.min(total)));
        prop_assert!(ws.windows(2).all(|p| p[0].0 < p[1].0));
    }

    #[test]
    fn dwell_matches_exhaustive_scorer(scan in scanpath(), abn in abnormality()) {
        let atlas = PriorAtlas::default();
        let prior = atlas.get(abn).unwrap();
        let ws = candidate_windows(scan.total_duration_ms, 2000, 250);
        let scores: Vec<f64> = ws
            .iter()
            .map(|&(s, e)| {
                scan.fixations
                    .iter()
                    .map(|f| f.overlap_ms(s, e) as f64 * prior.value_at(f.x_norm, f.y_norm))
                    .sum()
            })
            .collect();
        let best = scores.iter().copied().fold(0.0, f64::max);
        let got = ground_by_dwell(&[abn].into(), &scan, &atlas, 2000, 250).unwrap();
        if best == 0.0 {
            prop_assert!(got.is_empty());
        } else {
            let first = scores.iter().position(|s| *s == best).unwrap();
            prop_assert_eq!((got[0].t_start_ms, got[0].t_end_ms), ws[first]);
            prop_assert_eq!(got[0].score, best);
        }
    }

    #[test]
    fn roi_mean_is_bounded(scan in scanpath(), a in 0u64..10_000, len in 1u64..4000) {
        let video = build_gaze_video(&scan, 16, 16, 1.5).unwrap();
        if let Ok(roi) = roi_mean_image(&video, a, a + len) {
            prop_assert!(roi.values.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
            prop_assert_eq!((roi.width, roi.height), (16, 16));
        }
    }

    #[test]
    fn appended_finding_is_extracted(
        abn in abnormality(),
        base in prop::sample::select(vec![
            "lungs are clear.",
            "no cardiomegaly. no pleural effusion.",
            "sternotomy wires",
            "small left effusion. atelectasis at the bases.",
        ]),
    ) {
        let l = Labeler::default();
        let before = l.extract_labels(&Report::new("p", base)).unwrap();
        let appended = l.append_finding(&Report::new("p", base), abn);
        if before.contains(abn) {
            let is_noop = matches!(appended, Err(corax_core::CoraxError::NoOpViolation { .. }));
            prop_assert!(is_noop);
            return Ok(());
        }
        let r = appended.unwrap();
        let after = l.extract_labels(&r).unwrap();
        prop_assert!(after.contains(abn));
        prop_assert!(after.is_superset(&before));
    }
}
