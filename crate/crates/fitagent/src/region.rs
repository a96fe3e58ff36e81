//! Region II detection for fatigue-crack-growth style data.
//!
//! Crack growth curves have three regimes in log-log space; only the middle
//! one obeys the Paris power law. Detection estimates a local slope at every
//! point that fits a full centered window, marks points whose slope falls in
//! an acceptance band, and keeps the longest contiguous marked run. Ties go
//! to the run a single log-log line explains best, then to the leftmost.

use crate::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegionError {
    #[error("window must be an odd number of at least 3 points, got {0}")]
    BadWindow(usize),
    #[error("slope band is empty: [{lo}, {hi}]")]
    BadBand { lo: f64, hi: f64 },
    #[error("need at least {needed} points for a window of {window}, got {got}")]
    TooFewPoints {
        needed: usize,
        window: usize,
        got: usize,
    },
    #[error("log-log slopes require positive values; {axis}[{index}] = {value}")]
    NonPositive {
        axis: &'static str,
        index: usize,
        value: f64,
    },
    #[error("no run of local slopes inside [{lo}, {hi}]; observed slopes span [{seen_lo}, {seen_hi}]")]
    NoRegion {
        lo: f64,
        hi: f64,
        seen_lo: f64,
        seen_hi: f64,
    },
    #[error("best slope run has only {got} point(s); need at least 2")]
    RunTooShort { got: usize },
    #[error("bounds must satisfy x_min < x_max, got [{lo}, {hi}]")]
    BadBounds { lo: f64, hi: f64 },
    #[error("only {got} point(s) inside [{lo}, {hi}]; need at least 2")]
    TooFewInBounds { lo: f64, hi: f64, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionOptions {
    /// Centered window width for local slopes; odd, at least 3.
    pub window: usize,
    /// Acceptance band for the local log-log slope, inclusive.
    pub band: (f64, f64),
}

impl Default for RegionOptions {
    fn default() -> RegionOptions {
        RegionOptions {
            window: 5,
            band: (2.0, 4.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionMethod {
    Auto,
    Manual,
}

/// A selected subrange of a dataset. `indices` refer to the original row
/// order but are listed in ascending-x order; the selection is contiguous
/// once rows are sorted by x.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RegionSelection {
    pub indices: Vec<usize>,
    pub x_min: f64,
    pub x_max: f64,
    pub points_total: usize,
    /// Min and max local slope over the selection, when computable.
    pub slope_range: Option<(f64, f64)>,
    pub method: RegionMethod,
}

impl RegionSelection {
    pub fn points_selected(&self) -> usize {
        self.indices.len()
    }

    /// Extracts the selected rows as a new dataset, in ascending-x order.
    pub fn subset(&self, data: &Dataset) -> Dataset {
        let x: Vec<f64> = self.indices.iter().map(|&i| data.x[i]).collect();
        let y: Vec<f64> = self.indices.iter().map(|&i| data.y[i]).collect();
        Dataset::new(x, y, &data.x_name, &data.y_name, &data.x_unit, &data.y_unit)
            .expect("subset of a valid dataset is valid")
    }
}

/// Least-squares slope of ly on lx over `range`, or None when x is
/// degenerate inside the window.
fn window_slope(lx: &[f64], ly: &[f64], range: std::ops::Range<usize>) -> Option<f64> {
    let n = range.len() as f64;
    let mx = lx[range.clone()].iter().sum::<f64>() / n;
    let my = ly[range.clone()].iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in range {
        let dx = lx[i] - mx;
        sxx += dx * dx;
        sxy += dx * (ly[i] - my);
    }
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Local slopes for every point with a full centered window; edge points get
/// None.
fn local_slopes(lx: &[f64], ly: &[f64], window: usize) -> Vec<Option<f64>> {
    let n = lx.len();
    let half = window / 2;
    let mut slopes: Vec<Option<f64>> = vec![None; n];
    if n >= window {
        for k in half..n - half {
            slopes[k] = window_slope(lx, ly, k - half..k + half + 1);
        }
    }
    slopes
}

fn slope_min_max(slopes: &[Option<f64>]) -> Option<(f64, f64)> {
    let seen: Vec<f64> = slopes.iter().flatten().copied().collect();
    if seen.is_empty() {
        return None;
    }
    Some((
        seen.iter().copied().fold(f64::INFINITY, f64::min),
        seen.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    ))
}

/// Residual sum of squares of a single least-squares line over `range`.
fn line_ssr(lx: &[f64], ly: &[f64], range: std::ops::Range<usize>) -> f64 {
    let n = range.len() as f64;
    let mx = lx[range.clone()].iter().sum::<f64>() / n;
    let my = ly[range.clone()].iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in range.clone() {
        let dx = lx[i] - mx;
        sxx += dx * dx;
        sxy += dx * (ly[i] - my);
    }
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    range
        .map(|i| {
            let r = ly[i] - (my + slope * (lx[i] - mx));
            r * r
        })
        .sum()
}

/// Picks the winning run: longest first, then smallest line SSR, then
/// leftmost (guaranteed by scan order: later runs must be strictly better).
fn choose_run(marked: &[bool], lx: &[f64], ly: &[f64]) -> Option<std::ops::Range<usize>> {
    let mut best: Option<(std::ops::Range<usize>, f64)> = None;
    let mut i = 0;
    while i < marked.len() {
        if !marked[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < marked.len() && marked[i] {
            i += 1;
        }
        let run = start..i;
        let ssr = line_ssr(lx, ly, run.clone());
        let better = match &best {
            None => true,
            Some((b, b_ssr)) => run.len() > b.len() || (run.len() == b.len() && ssr < *b_ssr),
        };
        if better {
            best = Some((run, ssr));
        }
    }
    best.map(|(r, _)| r)
}

fn check_positive(data: &Dataset) -> Result<(), RegionError> {
    for (i, &v) in data.x.iter().enumerate() {
        if v <= 0.0 {
            return Err(RegionError::NonPositive {
                axis: "x",
                index: i,
                value: v,
            });
        }
    }
    for (i, &v) in data.y.iter().enumerate() {
        if v <= 0.0 {
            return Err(RegionError::NonPositive {
                axis: "y",
                index: i,
                value: v,
            });
        }
    }
    Ok(())
}

fn sorted_order(data: &Dataset) -> Vec<usize> {
    let mut order: Vec<usize> = (0..data.n).collect();
    order.sort_by(|&a, &b| data.x[a].total_cmp(&data.x[b]));
    order
}

/// Detects the power-law regime automatically. Row order does not matter:
/// points are sorted by x before slopes are taken, and the returned indices
/// refer to the original rows.
pub fn auto_select_region(
    data: &Dataset,
    opts: &RegionOptions,
) -> Result<RegionSelection, RegionError> {
    let w = opts.window;
    if w < 3 || w % 2 == 0 {
        return Err(RegionError::BadWindow(w));
    }
    let (lo, hi) = opts.band;
    if !(lo < hi) {
        return Err(RegionError::BadBand { lo, hi });
    }
    if data.n < w {
        return Err(RegionError::TooFewPoints {
            needed: w,
            window: w,
            got: data.n,
        });
    }
    check_positive(data)?;

    let order = sorted_order(data);
    let lx: Vec<f64> = order.iter().map(|&i| data.x[i].log10()).collect();
    let ly: Vec<f64> = order.iter().map(|&i| data.y[i].log10()).collect();

    let slopes = local_slopes(&lx, &ly, w);
    let marked: Vec<bool> = slopes
        .iter()
        .map(|s| matches!(s, Some(m) if *m >= lo && *m <= hi))
        .collect();

    let run = choose_run(&marked, &lx, &ly).ok_or_else(|| {
        let (seen_lo, seen_hi) =
            slope_min_max(&slopes).unwrap_or((f64::INFINITY, f64::NEG_INFINITY));
        RegionError::NoRegion {
            lo,
            hi,
            seen_lo,
            seen_hi,
        }
    })?;
    if run.len() < 2 {
        return Err(RegionError::RunTooShort { got: run.len() });
    }

    let run_slopes: Vec<Option<f64>> = run.clone().map(|k| slopes[k]).collect();
    let indices: Vec<usize> = run.clone().map(|k| order[k]).collect();
    Ok(RegionSelection {
        x_min: data.x[indices[0]],
        x_max: data.x[*indices.last().unwrap()],
        indices,
        points_total: data.n,
        slope_range: slope_min_max(&run_slopes),
        method: RegionMethod::Auto,
    })
}

/// Selects rows with x_min <= x <= x_max, inclusive on both ends. The slope
/// range is reported as in auto mode when positivity holds and the selection
/// is wide enough for the default window, else omitted.
pub fn manual_region(
    data: &Dataset,
    x_min: f64,
    x_max: f64,
) -> Result<RegionSelection, RegionError> {
    if !(x_min < x_max) {
        return Err(RegionError::BadBounds {
            lo: x_min,
            hi: x_max,
        });
    }
    let mut indices: Vec<usize> = (0..data.n)
        .filter(|&i| data.x[i] >= x_min && data.x[i] <= x_max)
        .collect();
    indices.sort_by(|&a, &b| data.x[a].total_cmp(&data.x[b]));
    if indices.len() < 2 {
        return Err(RegionError::TooFewInBounds {
            lo: x_min,
            hi: x_max,
            got: indices.len(),
        });
    }

    let positive = indices
        .iter()
        .all(|&i| data.x[i] > 0.0 && data.y[i] > 0.0);
    let window = RegionOptions::default().window;
    let slope_range = if positive && indices.len() >= window {
        let lx: Vec<f64> = indices.iter().map(|&i| data.x[i].log10()).collect();
        let ly: Vec<f64> = indices.iter().map(|&i| data.y[i].log10()).collect();
        slope_min_max(&local_slopes(&lx, &ly, window))
    } else {
        None
    };

    Ok(RegionSelection {
        x_min: data.x[indices[0]],
        x_max: data.x[*indices.last().unwrap()],
        indices,
        points_total: data.n,
        slope_range,
        method: RegionMethod::Manual,
    })
}
