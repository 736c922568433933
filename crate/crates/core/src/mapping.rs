//! Susceptibility-map production: optimal 1-D class breaks and grid
//! classification.
//!
//! Breaks come from an exact dynamic program that minimizes the total
//! within-class sum of squared deviations over all contiguous partitions of
//! the sorted scores (natural-breaks classification), not from a heuristic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterGrid;

/// Display names for the conventional five susceptibility levels.
pub const SUSCEPTIBILITY_LEVELS: [&str; 5] = ["very low", "low", "moderate", "high", "very high"];

/// Level names for a k-class map: the conventional five for k = 5,
/// otherwise "level 1" … "level k".
pub fn level_names(k: usize) -> Vec<String> {
    if k == 5 {
        SUSCEPTIBILITY_LEVELS.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=k).map(|i| format!("level {i}")).collect()
    }
}

/// Optimal natural-breaks boundaries for `k` classes.
///
/// Runs the exact O(k·n²) dynamic program over the sorted values, using
/// prefix sums for O(1) segment costs. The returned k−1 breaks are midpoints
/// between the last value of one class and the first value of the next, so
/// every fitted value classifies unambiguously. Needs at least `k` distinct
/// finite values.
pub fn jenks_breaks(values: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {k}"
        )));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite score {bad}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::InvalidArgument(format!(
            "need at least {k} distinct scores, got {}",
            distinct.len()
        )));
    }
    let n = sorted.len();

    // Prefix sums give each contiguous segment's squared deviation in O(1):
    // ssd(i..j) = Σx² − (Σx)²/(j−i).
    let mut sum = vec![0.0; n + 1];
    let mut sum_sq = vec![0.0; n + 1];
    for (i, &v) in sorted.iter().enumerate() {
        sum[i + 1] = sum[i] + v;
        sum_sq[i + 1] = sum_sq[i] + v * v;
    }
    let seg_cost = |i: usize, j: usize| -> f64 {
        let s = sum[j] - sum[i];
        let q = sum_sq[j] - sum_sq[i];
        (q - s * s / (j - i) as f64).max(0.0)
    };

    // best[c][j]: minimal cost splitting the first j values into c+1 classes.
    let mut best = vec![vec![f64::INFINITY; n + 1]; k];
    let mut split = vec![vec![0usize; n + 1]; k];
    for j in 1..=n {
        best[0][j] = seg_cost(0, j);
    }
    for c in 1..k {
        for j in (c + 1)..=n {
            for i in c..j {
                // A class boundary inside a run of equal values would create
                // an unclassifiable break; only cut between distinct values.
                if sorted[i - 1] == sorted[i] {
                    continue;
                }
                let cost = best[c - 1][i] + seg_cost(i, j);
                if cost < best[c][j] {
                    best[c][j] = cost;
                    split[c][j] = i;
                }
            }
        }
    }
    if !best[k - 1][n].is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} scores into {k} classes without cutting tied values"
        )));
    }

    let mut cuts = Vec::with_capacity(k - 1);
    let mut j = n;
    for c in (1..k).rev() {
        let i = split[c][j];
        cuts.push(i);
        j = i;
    }
    cuts.reverse();
    Ok(cuts
        .into_iter()
        .map(|i| (sorted[i - 1] + sorted[i]) / 2.0)
        .collect())
}

/// Total within-class sum of squared deviations induced by `breaks`.
pub fn partition_cost(values: &[f64], breaks: &[f64]) -> f64 {
    let k = breaks.len() + 1;
    let mut sums = vec![0.0; k];
    let mut sq = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for &v in values {
        let c = classify(v, breaks);
        sums[c] += v;
        sq[c] += v * v;
        counts[c] += 1;
    }
    (0..k)
        .filter(|&c| counts[c] > 0)
        .map(|c| sq[c] - sums[c] * sums[c] / counts[c] as f64)
        .sum()
}

/// Class index of a score: the number of breaks at or below it, so a score
/// exactly on a break joins the upper class.
#[inline]
pub fn classify(score: f64, breaks: &[f64]) -> usize {
    breaks.partition_point(|b| *b <= score)
}

/// Classifies every valid cell of a score grid into class indices
/// (stored as f64 codes); nodata cells stay nodata.
pub fn classify_grid(scores: &RasterGrid, breaks: &[f64]) -> Result<RasterGrid> {
    if breaks.is_empty() {
        return Err(Error::InvalidArgument("need at least one break".into()));
    }
    if breaks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "breaks must be strictly ascending".into(),
        ));
    }
    let mut out = scores.clone();
    for row in 0..scores.nrows {
        for col in 0..scores.ncols {
            let v = scores.get(row, col);
            if !scores.is_nodata(v) {
                out.set(row, col, classify(v, breaks) as f64);
            }
        }
    }
    Ok(out)
}

/// One legend entry of a classified map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendRow {
    pub class: usize,
    pub name: String,
    /// Lower score bound; `None` for the bottom class (open below).
    pub lower: Option<f64>,
    /// Upper score bound; `None` for the top class (open above).
    pub upper: Option<f64>,
}

/// Builds the legend for a classified map from its breaks.
pub fn legend(breaks: &[f64]) -> Vec<LegendRow> {
    let k = breaks.len() + 1;
    let names = level_names(k);
    (0..k)
        .map(|c| LegendRow {
            class: c,
            name: names[c].clone(),
            lower: (c > 0).then(|| breaks[c - 1]),
            upper: (c < k - 1).then(|| breaks[c]),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Minimal brute force over all contiguous partitions (test oracle).
    fn brute_force_cost(sorted: &[f64], k: usize) -> f64 {
        fn go(sorted: &[f64], start: usize, k_left: usize) -> f64 {
            let n = sorted.len();
            if k_left == 1 {
                let seg = &sorted[start..];
                let s: f64 = seg.iter().sum();
                let q: f64 = seg.iter().map(|v| v * v).sum();
                return q - s * s / seg.len() as f64;
            }
            let mut best = f64::INFINITY;
            for cut in (start + 1)..=(n - k_left + 1) {
                if sorted[cut - 1] == sorted[cut] {
                    continue;
                }
                let seg = &sorted[start..cut];
                let s: f64 = seg.iter().sum();
                let q: f64 = seg.iter().map(|v| v * v).sum();
                let rest = go(sorted, cut, k_left - 1);
                best = best.min(q - s * s / seg.len() as f64 + rest);
            }
            best
        }
        go(sorted, 0, k)
    }

    #[test]
    fn breaks_find_obvious_clusters() {
        let values = [1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 20.0, 21.0, 22.0];
        let breaks = jenks_breaks(&values, 3).unwrap();
        assert_eq!(breaks, vec![6.5, 16.0]);
        assert_eq!(classify(3.0, &breaks), 0);
        assert_eq!(classify(10.0, &breaks), 1);
        assert_eq!(classify(22.0, &breaks), 2);
        assert_eq!(classify(6.5, &breaks), 1); // a score on a break goes up
    }

    #[test]
    fn breaks_validate_inputs() {
        assert!(jenks_breaks(&[1.0, 2.0, 3.0], 1).is_err());
        assert!(jenks_breaks(&[1.0, 1.0, 1.0], 2).is_err());
        assert!(jenks_breaks(&[1.0, f64::NAN, 3.0], 2).is_err());
        // Three distinct values support exactly three classes.
        let b = jenks_breaks(&[5.0, 1.0, 9.0], 3).unwrap();
        assert_eq!(b, vec![3.0, 7.0]);
    }

    #[test]
    fn duplicates_never_straddle_a_break() {
        let values = [1.0, 1.0, 1.0, 1.0, 2.0, 9.0, 9.0, 9.0];
        let breaks = jenks_breaks(&values, 2).unwrap();
        let mut classes: Vec<Vec<usize>> = vec![Vec::new(); 2];
        for (i, &v) in values.iter().enumerate() {
            classes[classify(v, &breaks)].push(i);
        }
        assert!(!classes[0].is_empty() && !classes[1].is_empty());
        // All the 1.0s share a class and the 9.0s take the other one.
        assert_ne!(classify(1.0, &breaks), classify(9.0, &breaks));
        assert_eq!(classify(1.0, &breaks), classify(2.0, &breaks));
    }

    #[test]
    fn classify_grid_propagates_nodata() {
        let mut grid = RasterGrid::filled(3, 2, 10.0, 0.0);
        let scores = [0.1, 0.5, 0.9, 0.2, 0.6, 0.0];
        for (i, &s) in scores.iter().enumerate() {
            grid.set(i / 3, i % 3, s);
        }
        grid.set(1, 2, grid.nodata);
        let classes = classify_grid(&grid, &[0.3, 0.7]).unwrap();
        assert_eq!(classes.get(0, 0), 0.0);
        assert_eq!(classes.get(0, 1), 1.0);
        assert_eq!(classes.get(0, 2), 2.0);
        assert_eq!(classes.get(1, 1), 1.0);
        assert!(classes.is_nodata(classes.get(1, 2)));
        assert!(classify_grid(&grid, &[0.7, 0.3]).is_err());
    }

    #[test]
    fn five_class_legend_uses_conventional_names() {
        let breaks = [0.2, 0.4, 0.6, 0.8];
        let l = legend(&breaks);
        assert_eq!(l.len(), 5);
        assert_eq!(l[0].name, "very low");
        assert_eq!(l[4].name, "very high");
        assert_eq!(l[0].lower, None);
        assert_eq!(l[0].upper, Some(0.2));
        assert_eq!(l[4].lower, Some(0.8));
        assert_eq!(l[4].upper, None);
        assert_eq!(level_names(3), vec!["level 1", "level 2", "level 3"]);
    }

    proptest! {
        /// The dynamic program achieves exactly the brute-force optimum over
        /// all contiguous partitions, and the midpoint breaks reproduce that
        /// cost when scores are classified through them.
        #[test]
        fn dp_matches_brute_force(
            raw in proptest::collection::vec(0u32..40, 4..11),
            k in 2usize..5,
        ) {
            let values: Vec<f64> = raw.iter().map(|&v| v as f64 / 4.0).collect();
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let mut distinct = sorted.clone();
            distinct.dedup();
            prop_assume!(distinct.len() >= k);
            let breaks = jenks_breaks(&values, k).unwrap();
            prop_assert_eq!(breaks.len(), k - 1);
            prop_assert!(breaks.windows(2).all(|w| w[0] < w[1]));
            let oracle = brute_force_cost(&sorted, k);
            let dp_cost = partition_cost(&values, &breaks);
            prop_assert!(
                (dp_cost - oracle).abs() <= 1e-9 * oracle.abs().max(1.0),
                "dp {dp_cost} vs brute force {oracle}"
            );
        }
    }
}
