//! Checks against independent, deliberately naive reimplementations.

use corax_core::gaze::{
    Fixation, Scanpath, build_gaze_video, fixation_accumulation, roi_mean_image, static_accumulation,
};
use corax_core::labeler::{Report, tokenize};
use corax_core::stats::ci_multiplier;
use corax_core::{Abnormality, Labeler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scan(rng: &mut ChaCha8Rng, n: usize) -> Scanpath {
    let mut t = 0;
    let fixations = (0..n)
        .map(|_| {
            let start = t + rng.random_range(0..100);
            let end = start + rng.random_range(50..500);
            t = end;
            Fixation {
                start_ms: start,
                end_ms: end,
                x_norm: rng.random_range(0.0..=1.0),
                y_norm: rng.random_range(0.0..=1.0),
            }
        })
        .collect();
    Scanpath::new("o", fixations, t).unwrap()
}

/// Every pixel within three sigmas of the centre gets `dur · exp(-d²/2σ²)`.
fn gaussian_oracle(f: &Fixation, w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    let (cx, cy) = (f.x_norm * w as f64, f.y_norm * h as f64);
    for y in 0..h {
        for x in 0..w {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            if d2.sqrt() <= 3.0 * sigma {
                out[y * w + x] = (f.end_ms - f.start_ms) as f64 * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    out
}

#[test]
fn gaussian_frames_match_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scan = random_scan(&mut rng, 50);
    for f in &scan.fixations {
        let got = fixation_accumulation(f, 40, 30, 2.5).unwrap();
        let want = gaussian_oracle(f, 40, 30, 2.5);
        let want_sum: f64 = want.iter().sum();
        assert!((got.sum() - want_sum).abs() < 1e-9);
        for (a, b) in got.values.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn mean_roi_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let scan = random_scan(&mut rng, 30);
    let video = build_gaze_video(&scan, 32, 32, 2.0).unwrap();
    for _ in 0..20 {
        let a = rng.random_range(0..scan.total_duration_ms);
        let b = a + rng.random_range(1..3000);
        let selected: Vec<usize> = (0..scan.fixations.len())
            .filter(|&i| scan.fixations[i].start_ms < b && a < scan.fixations[i].end_ms)
            .collect();
        let got = roi_mean_image(&video, a, b);
        if selected.is_empty() {
            assert!(got.is_err());
            continue;
        }
        let got = got.unwrap();
        for p in 0..32 * 32 {
            let mean = selected.iter().map(|&i| video.frames[i].values[p]).sum::<f64>() / selected.len() as f64;
            assert!((got.values[p] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn static_accumulation_is_additive() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scan = random_scan(&mut rng, 25);
    let total = static_accumulation(&scan, 0, scan.total_duration_ms, 48, 40, 3.0).unwrap();
    let mut sum = vec![0.0; 48 * 40];
    for f in &scan.fixations {
        for (s, v) in sum.iter_mut().zip(fixation_accumulation(f, 48, 40, 3.0).unwrap().values) {
            *s += v;
        }
    }
    for (a, b) in total.values.iter().zip(&sum) {
        assert!((a - b).abs() < 1e-9);
    }
}

/// Cue tokens ending within five tokens before the mention, same sentence.
fn negated_oracle(sentence: &str, mention_word: usize) -> bool {
    let words: Vec<String> = tokenize(sentence).into_iter().map(|t| t.text).collect();
    let cues: [&[&str]; 6] = [&["no"], &["without"], &["free", "of"], &["clear", "of"], &["negative", "for"], &["resolved"]];
    for end in mention_word.saturating_sub(5)..mention_word {
        for cue in cues {
            if end + 1 >= cue.len() && words[end + 1 - cue.len()..=end].iter().zip(cue).all(|(w, c)| w == c) {
                return true;
            }
        }
    }
    false
}

#[test]
fn negation_matches_token_window_oracle() {
    let labeler = Labeler::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let filler = ["the", "left", "small", "is", "seen", "with", "of", "free", "no", "clear", "negative", "for", "resolved", "without"];
    for _ in 0..2000 {
        let n = rng.random_range(0..9);
        let mut words: Vec<&str> = (0..n).map(|_| filler[rng.random_range(0..filler.len())]).collect();
        let at = words.len();
        words.push("atelectasis");
        let sentence = format!("{}.", words.join(" "));
        let report = Report::new("o", sentence.clone());
        let mention = labeler
            .mentions(&report)
            .into_iter()
            .find(|m| m.abnormality == Abnormality::Atelectasis)
            .unwrap();
        assert_eq!(mention.negated, negated_oracle(&sentence, at), "{sentence}");
    }
}

/// Student t density integrated with Simpson's rule, inverted by bisection.
fn t_quantile_oracle(p: f64, df: f64) -> f64 {
    let ln_gamma = lanczos_ln_gamma;
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let pdf = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let cdf = |t: f64| {
        let n = 20_000;
        let h = t / n as f64;
        let mut s = pdf(0.0) + pdf(t);
        for i in 1..n {
            s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 + s * h / 3.0
    };
    let (mut lo, mut hi) = (0.0, 50.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p { lo = mid } else { hi = mid }
    }
    0.5 * (lo + hi)
}

/// Lanczos approximation.
fn lanczos_ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

#[test]
fn t_multipliers_match_numeric_inverse() {
    for n in 3..=30 {
        let want = t_quantile_oracle(0.975, (n - 1) as f64);
        let got = ci_multiplier(n, 0.95).unwrap();
        assert!((got - want).abs() < 1e-3, "n={n}: {got} vs {want}");
    }
    for n in [31, 50, 271, 1000] {
        assert!((ci_multiplier(n, 0.95).unwrap() - 1.959964).abs() < 1e-6);
    }
}
