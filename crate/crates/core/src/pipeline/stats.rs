//! Order statistics and histograms for error reports.

use serde::{Deserialize, Serialize};

/// Linear interpolation between order statistics (Hyndman–Fan type 7):
/// `h = (n − 1)·q`, `x[⌊h⌋] + (h − ⌊h⌋)·(x[⌊h⌋+1] − x[⌊h⌋])`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    assert!((0.0..=1.0).contains(&q));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub const HISTOGRAM_BINS: usize = 20;

/// Equal-width bins on `[0, max]`; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let max = values.iter().fold(0.0f64, |m, v| m.max(*v));
    let width = max / bins as f64;
    let edges = (0..=bins).map(|i| if i == bins { max } else { i as f64 * width }).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let b = if width > 0.0 { ((v / width) as usize).min(bins - 1) } else { 0 };
        counts[b] += 1;
    }
    Histogram { edges, counts }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub n: usize,
    pub median: f64,
    pub p95: f64,
    pub mean: f64,
    pub max: f64,
    pub histogram: Histogram,
}

pub fn summarize(values: &[f64]) -> Option<ErrorSummary> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Some(ErrorSummary {
        n: s.len(),
        median: percentile(&s, 0.5),
        p95: percentile(&s, 0.95),
        mean: s.iter().sum::<f64>() / s.len() as f64,
        max: s[s.len() - 1],
        histogram: histogram(&s, HISTOGRAM_BINS),
    })
}
