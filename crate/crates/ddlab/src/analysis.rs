//! Statistical post-processing: policy entropy, series smoothing, cross-run
//! Student-t confidence intervals, and descent/re-ascent segmentation of
//! entropy curves.
//!
//! Everything here is pure and stateless. Entropy is measured in nats.

use crate::agent::EpisodeRecord;
use crate::error::{Error, Result};

/// Upper bound of the entropy of a distribution over `n_actions` outcomes.
pub fn max_entropy(n_actions: usize) -> f64 {
    (n_actions as f64).ln()
}

/// Shannon entropy of a probability vector, in nats, with the convention
/// `0 ln 0 = 0`.
///
/// Errors unless components are non-negative and sum to 1 within 1e-9.
pub fn policy_entropy(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::usage("empty probability vector"));
    }
    let mut sum = 0.0;
    for &p in probs {
        if p.is_nan() || p < 0.0 {
            return Err(Error::usage(format!("negative or NaN probability {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::usage(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    let mut h = 0.0;
    for &p in probs {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    Ok(h)
}

/// Mean policy entropy over the states visited by one episode.
pub fn episode_entropy(record: &EpisodeRecord) -> Result<f64> {
    if record.probs.is_empty() {
        return Err(Error::usage("cannot average entropy of an empty episode"));
    }
    let mut sum = 0.0;
    for probs in &record.probs {
        sum += policy_entropy(probs)?;
    }
    Ok(sum / record.probs.len() as f64)
}

/// One per-episode entropy measurement of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropySample {
    pub value: f64,
    pub episode: usize,
    pub run_id: String,
}

impl EntropySample {
    /// Validates the entropy bound `0 <= value <= ln(n_actions) + 1e-12`.
    pub fn new(
        value: f64,
        episode: usize,
        run_id: impl Into<String>,
        n_actions: usize,
    ) -> Result<EntropySample> {
        let bound = max_entropy(n_actions) + 1e-12;
        if !(0.0..=bound).contains(&value) {
            return Err(Error::numeric(format!(
                "entropy {value} outside [0, {bound}] at episode {episode}"
            )));
        }
        Ok(EntropySample {
            value,
            episode,
            run_id: run_id.into(),
        })
    }
}

/// Centered rolling mean with the window shrinking at the boundaries.
/// `window == 1` is the identity.
pub fn smooth(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::usage("smoothing window must be >= 1"));
    }
    let n = series.len();
    let left = (window - 1) / 2;
    let right = window / 2;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(left);
        let hi = (i + right).min(n.saturating_sub(1));
        let span = &series[lo..=hi];
        out.push(span.iter().sum::<f64>() / span.len() as f64);
    }
    Ok(out)
}

// --- Student-t machinery -------------------------------------------------
//
// The t quantile is computed by numeric inversion of the t CDF, which in
// turn uses the regularized incomplete beta function (continued fraction,
// Lentz's method).

/// Natural log of the gamma function (Lanczos, g = 7), valid for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_9;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued-fraction kernel of the incomplete beta function.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 400;
    const EPS: f64 = 1e-16;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
fn beta_inc(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let x = df / (df + t * t);
    let p = beta_inc(df / 2.0, 0.5, x);
    if t > 0.0 {
        1.0 - 0.5 * p
    } else {
        0.5 * p
    }
}

/// Quantile of Student's t with `df` degrees of freedom, by bisection on
/// [`t_cdf`].
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::usage(format!("quantile level {p} not in (0, 1)")));
    }
    if df <= 0.0 {
        return Err(Error::usage(format!("degrees of freedom {df} must be > 0")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p < 0.5 {
        return Ok(-t_quantile(1.0 - p, df)?);
    }
    let mut hi = 1.0;
    while t_cdf(hi, df) < p {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::numeric(format!(
                "t quantile bracket failed for p={p}, df={df}"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Student-t confidence interval for the mean of a sample: returns
/// `(mean, low, high)` with half-width `t(0.5 + level/2, n-1) * sd / sqrt(n)`
/// and `sd` the unbiased sample standard deviation.
pub fn confidence_interval(values: &[f64], level: f64) -> Result<(f64, f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::usage("confidence interval requires n >= 2"));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::usage(format!(
            "confidence level {level} not in (0, 1)"
        )));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (nf - 1.0)).sqrt();
    let sem = sd / nf.sqrt();
    let t = t_quantile(0.5 + level / 2.0, nf - 1.0)?;
    let half = t * sem;
    Ok((mean, mean - half, mean + half))
}

/// Per-episode aggregate band for one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatePoint {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Cross-run mean with confidence band, one point per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub label: String,
    pub points: Vec<AggregatePoint>,
    pub n_runs: usize,
}

/// Smooths each run with the given window, then forms the per-episode
/// confidence interval across runs. All runs must share a length; at least
/// two are required.
pub fn aggregate(
    label: &str,
    runs: &[Vec<f64>],
    window: usize,
    level: f64,
) -> Result<AggregateSeries> {
    if runs.len() < 2 {
        return Err(Error::usage("aggregation requires at least 2 runs"));
    }
    let len = runs[0].len();
    if runs.iter().any(|r| r.len() != len) {
        return Err(Error::usage("aggregation requires equal-length runs"));
    }
    let smoothed: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| smooth(r, window))
        .collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(len);
    let mut column = vec![0.0; runs.len()];
    for e in 0..len {
        for (k, run) in smoothed.iter().enumerate() {
            column[k] = run[e];
        }
        let (mean, ci_low, ci_high) = confidence_interval(&column, level)?;
        points.push(AggregatePoint {
            mean,
            ci_low,
            ci_high,
        });
    }
    Ok(AggregateSeries {
        label: label.to_string(),
        points,
        n_runs: runs.len(),
    })
}

// --- Phase segmentation ---------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    Descent,
    Ascent,
}

impl PhaseKind {
    pub fn label(self) -> &'static str {
        match self {
            PhaseKind::Descent => "descent",
            PhaseKind::Ascent => "ascent",
        }
    }

    fn flip(self) -> PhaseKind {
        match self {
            PhaseKind::Descent => PhaseKind::Ascent,
            PhaseKind::Ascent => PhaseKind::Descent,
        }
    }
}

/// One monotone stretch of the (smoothed) series, boundaries inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSegment {
    pub kind: PhaseKind,
    pub start: usize,
    pub end: usize,
    pub start_value: f64,
    pub end_value: f64,
}

/// Alternating descent/ascent decomposition plus the re-ascent count.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    pub segments: Vec<PhaseSegment>,
    pub re_ascents: usize,
}

/// Splits a series into alternating descent/ascent segments at local extrema
/// where the following direction change exceeds `prominence`. Direction
/// changes smaller than `prominence` are treated as wiggles and absorbed
/// into the surrounding segment. If no change qualifies, the whole series is
/// a single segment whose kind follows the endpoint trend. The re-ascent
/// count is the number of ascent segments.
pub fn segment_phases(series: &[f64], prominence: f64) -> Result<PhaseReport> {
    if series.len() < 2 {
        return Err(Error::usage("phase segmentation requires >= 2 points"));
    }
    if prominence.is_nan() || prominence < 0.0 {
        return Err(Error::usage("prominence must be >= 0"));
    }
    let n = series.len();

    // Initial direction: first prefix move exceeding the prominence, with
    // running extrema kept at their first occurrence.
    let mut min_idx = 0;
    let mut max_idx = 0;
    let mut direction = None;
    let mut anchor = 0; // running extremum in the current direction
    let mut start_at = 1;
    for (i, &v) in series.iter().enumerate().skip(1) {
        if v < series[min_idx] {
            min_idx = i;
        }
        if v > series[max_idx] {
            max_idx = i;
        }
        if v - series[min_idx] > prominence {
            direction = Some(PhaseKind::Ascent);
            anchor = i; // also the running max since the prefix minimum
            start_at = i + 1;
            break;
        }
        if series[max_idx] - v > prominence {
            direction = Some(PhaseKind::Descent);
            anchor = i; // also the running min since the prefix maximum
            start_at = i + 1;
            break;
        }
    }

    let Some(mut direction) = direction else {
        // No qualifying reversal anywhere: one segment, endpoint trend.
        let kind = if series[n - 1] > series[0] {
            PhaseKind::Ascent
        } else {
            PhaseKind::Descent
        };
        return Ok(PhaseReport {
            segments: vec![PhaseSegment {
                kind,
                start: 0,
                end: n - 1,
                start_value: series[0],
                end_value: series[n - 1],
            }],
            re_ascents: if kind == PhaseKind::Ascent { 1 } else { 0 },
        });
    };

    let mut turns: Vec<usize> = Vec::new();
    for (i, &v) in series.iter().enumerate().skip(start_at) {
        match direction {
            PhaseKind::Ascent => {
                if v > series[anchor] {
                    anchor = i;
                } else if series[anchor] - v > prominence {
                    turns.push(anchor);
                    direction = PhaseKind::Descent;
                    anchor = i;
                }
            }
            PhaseKind::Descent => {
                if v < series[anchor] {
                    anchor = i;
                } else if v - series[anchor] > prominence {
                    turns.push(anchor);
                    direction = PhaseKind::Ascent;
                    anchor = i;
                }
            }
        }
    }

    // `direction` is now the kind of the final segment; walk back to get the
    // kind of the first one.
    let mut kind = direction;
    for _ in 0..turns.len() {
        kind = kind.flip();
    }
    let mut segments = Vec::with_capacity(turns.len() + 1);
    let mut start = 0;
    for &t in &turns {
        segments.push(PhaseSegment {
            kind,
            start,
            end: t,
            start_value: series[start],
            end_value: series[t],
        });
        start = t;
        kind = kind.flip();
    }
    segments.push(PhaseSegment {
        kind,
        start,
        end: n - 1,
        start_value: series[start],
        end_value: series[n - 1],
    });
    let re_ascents = segments
        .iter()
        .filter(|s| s.kind == PhaseKind::Ascent)
        .count();
    Ok(PhaseReport {
        segments,
        re_ascents,
    })
}
