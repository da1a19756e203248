//! Coincidence counting between two tag streams.
//!
//! Pairing is one-to-one and greedy: B tags are visited in time order and each
//! takes the nearest still-unused A tag with |t_B − t_A| ≤ window/2 (ties go to
//! the earlier A tag). This is how hardware coincidence logic behaves and it
//! does not inflate counts at high rates the way all-pairs counting does.

use serde::{Deserialize, Serialize};

use super::detector::TimeTag;
use crate::error::{Error, Result};

/// One matched A–B pair; `dt_s` is t_B − t_A.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coincidence {
    pub a: usize,
    pub b: usize,
    pub dt_s: f64,
}

/// Binned Δt = t_B − t_A over all tag pairs with |Δt| ≤ span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaHistogram {
    pub span_ns: f64,
    pub bin_width_ns: f64,
    pub counts: Vec<u64>,
}

impl DeltaHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Center of bin `i`, ns.
    pub fn bin_center_ns(&self, i: usize) -> f64 {
        -self.span_ns + (i as f64 + 0.5) * self.bin_width_ns
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceResult {
    pub n_a: u64,
    pub n_b: u64,
    pub n_ab: u64,
    pub window_ns: f64,
    pub duration_s: f64,
    pub histogram: DeltaHistogram,
}

pub(crate) fn check_sorted(tags: &[TimeTag], stream: &'static str) -> Result<()> {
    match tags.windows(2).position(|w| w[1].t < w[0].t) {
        Some(i) => Err(Error::Unsorted { stream, index: i + 1 }),
        None => Ok(()),
    }
}

/// Greedy nearest-neighbour pairing of sorted streams within ±window/2.
pub fn pair_coincidences(a: &[TimeTag], b: &[TimeTag], window_s: f64) -> Result<Vec<Coincidence>> {
    check_sorted(a, "A")?;
    check_sorted(b, "B")?;
    if !(window_s >= 0.0) {
        return Err(Error::Domain("coincidence window must be non-negative".into()));
    }
    let half = window_s / 2.0;
    let mut used = vec![false; a.len()];
    let mut out = Vec::new();
    let mut lo = 0;
    for (ib, tb) in b.iter().enumerate() {
        while lo < a.len() && tb.t.seconds_since(a[lo].t) > half {
            lo += 1;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut j = lo;
        while j < a.len() {
            let dt = tb.t.seconds_since(a[j].t);
            if -dt > half {
                break;
            }
            if !used[j] && dt.abs() <= half && best.is_none_or(|(_, d)| dt.abs() < d.abs()) {
                best = Some((j, dt));
            }
            j += 1;
        }
        if let Some((ja, dt)) = best {
            used[ja] = true;
            out.push(Coincidence { a: ja, b: ib, dt_s: dt });
        }
    }
    Ok(out)
}

/// All-pairs Δt histogram over `[-span, span]` with `bins` equal bins.
pub fn delta_histogram(a: &[TimeTag], b: &[TimeTag], span_ns: f64, bins: usize) -> Result<DeltaHistogram> {
    check_sorted(a, "A")?;
    check_sorted(b, "B")?;
    if !(span_ns > 0.0) || bins == 0 {
        return Err(Error::Domain("histogram needs a positive span and at least one bin".into()));
    }
    let span = span_ns * 1e-9;
    let width = 2.0 * span / bins as f64;
    let mut counts = vec![0u64; bins];
    let mut lo = 0;
    for tb in b {
        while lo < a.len() && tb.t.seconds_since(a[lo].t) > span {
            lo += 1;
        }
        for ta in &a[lo..] {
            let dt = tb.t.seconds_since(ta.t);
            if -dt > span {
                break;
            }
            let k = (((dt + span) / width).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    Ok(DeltaHistogram {
        span_ns,
        bin_width_ns: 2.0 * span_ns / bins as f64,
        counts,
    })
}

/// Counts singles and greedy coincidences and histograms Δt.
pub fn count_coincidences(
    tags_a: &[TimeTag],
    tags_b: &[TimeTag],
    window_ns: f64,
    histogram_span_ns: f64,
    histogram_bins: usize,
    duration_s: f64,
) -> Result<CoincidenceResult> {
    let pairs = pair_coincidences(tags_a, tags_b, window_ns * 1e-9)?;
    let histogram = delta_histogram(tags_a, tags_b, histogram_span_ns, histogram_bins)?;
    Ok(CoincidenceResult {
        n_a: tags_a.len() as u64,
        n_b: tags_b.len() as u64,
        n_ab: pairs.len() as u64,
        window_ns,
        duration_s,
        histogram,
    })
}

/// Expected chance coincidences between uncorrelated streams, n_a·n_b·τ_w/T.
pub fn accidental_estimate(n_a: f64, n_b: f64, window_ns: f64, duration_s: f64) -> Result<f64> {
    if !(duration_s > 0.0) {
        return Err(Error::Domain("duration must be positive".into()));
    }
    Ok(n_a * n_b * window_ns * 1e-9 / duration_s)
}
