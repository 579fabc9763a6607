//! Naive reference implementations used by the acceptance checks. Each one
//! trades speed for obviousness and shares no code with `corax-core`.

use corax_core::gaze::{Fixation, Scanpath};

/// Breakdown counts per abnormality: (name, TR, FD, FR, TD).
pub const BREAKDOWN: [(&str, u64, u64, u64, u64); 5] = [
    ("cardiomegaly", 10, 0, 2, 259),
    ("edema", 14, 5, 2, 252),
    ("atelectasis", 14, 9, 2, 248),
    ("pleural_effusion", 10, 5, 2, 256),
    ("lung_opacity", 23, 3, 1, 259),
];

/// Expected (PECR %, ODER %) for each row of [`BREAKDOWN`], as exact
/// quotients.
pub fn breakdown_rates() -> [(f64, f64); 5] {
    [
        (100.0, 200.0 / 261.0),
        (1400.0 / 19.0, 200.0 / 254.0),
        (1400.0 / 23.0, 200.0 / 250.0),
        (1000.0 / 15.0, 200.0 / 258.0),
        (2300.0 / 26.0, 100.0 / 260.0),
    ]
}

/// One Gaussian frame by visiting every pixel: amplitude is the fixation
/// duration, support is three sigmas.
pub fn gaussian_frame(f: &Fixation, w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let (cx, cy) = (f.x_norm * w as f64, f.y_norm * h as f64);
    let amp = (f.end_ms - f.start_ms) as f64;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            out.push(if d <= 3.0 * sigma { amp * (-(d * d) / (2.0 * sigma * sigma)).exp() } else { 0.0 });
        }
    }
    out
}

/// Max-normalized copy.
pub fn normalize(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(0.0, f64::max);
    v.iter().map(|x| if m > 0.0 { x / m } else { 0.0 }).collect()
}

/// Milliseconds of `[a, b)` during which the fixation is on screen.
pub fn overlap(f: &Fixation, a: u64, b: u64) -> u64 {
    let lo = f.start_ms.max(a);
    let hi = f.end_ms.min(b);
    hi.saturating_sub(lo)
}

/// Every window start on the stride grid that fits, plus a window flush
/// with the end of the recording when the grid leaves a gap.
pub fn windows(total: u64, window: u64, stride: u64) -> Vec<(u64, u64)> {
    if total <= window {
        return vec![(0, total)];
    }
    let mut out = Vec::new();
    let mut s = 0;
    while s + window <= total {
        out.push((s, s + window));
        s += stride;
    }
    if out.last().unwrap().1 != total {
        out.push((total - window, total));
    }
    out
}

/// Scores every window by direct summation and keeps the first maximum.
/// `None` when nothing is dwelt on.
pub fn best_window(
    scan: &Scanpath,
    weight: impl Fn(&Fixation) -> f64,
    window: u64,
    stride: u64,
) -> Option<((u64, u64), f64)> {
    let mut best: Option<((u64, u64), f64)> = None;
    for (a, b) in windows(scan.total_duration_ms, window, stride) {
        let score: f64 = scan.fixations.iter().map(|f| overlap(f, a, b) as f64 * weight(f)).sum();
        match best {
            Some((_, s)) if s >= score => {}
            _ => best = Some(((a, b), score)),
        }
    }
    best.filter(|b| b.1 > 0.0)
}

pub fn interval_iou(a: (u64, u64), b: (u64, u64)) -> f64 {
    let inter = a.1.min(b.1).saturating_sub(a.0.max(b.0));
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union == 0 { 0.0 } else { inter as f64 / union as f64 }
}

pub fn mask_iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    inter as f64 / union as f64
}

/// Lanczos approximation of ln Γ(x).
pub fn ln_gamma(x: f64) -> f64 {
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
    let t = x + 7.5;
    let a = G.iter().enumerate().skip(1).fold(G[0], |a, (i, g)| a + g / (x + i as f64));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Student t quantile: Simpson integration of the density from zero,
/// inverted by bisection.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let pdf = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let cdf = |t: f64| {
        let n = 10_000;
        let h = t / n as f64;
        let inner: f64 = (1..n).map(|i| pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
        0.5 + (pdf(0.0) + pdf(t) + inner) * h / 3.0
    };
    let (mut lo, mut hi) = (0.0, 20.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Standard normal quantile by bisection on the erf-free series CDF.
pub fn normal_quantile(p: f64) -> f64 {
    let cdf = |z: f64| {
        // Φ(z) = 1/2 + φ(z) Σ z^(2k+1) / (1·3·…·(2k+1))
        let phi = (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let (mut term, mut sum) = (z, z);
        for k in 1..200 {
            term *= z * z / (2 * k + 1) as f64;
            sum += term;
        }
        0.5 + phi * sum
    };
    let (mut lo, mut hi) = (0.0, 6.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
