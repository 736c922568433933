//! Factor tables, class binning, negative sampling, splits, standardization.
//!
//! A [`FactorTable`] is the tabular currency of the crate: an n × f matrix of
//! finite factor values with per-factor metadata, optional binary labels
//! (1 = landslide) and optional projected coordinates in meters.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterGrid;
use crate::stats;

/// Whether a factor's values are measurements or category codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Continuous,
    Categorical,
}

/// Metadata describing one factor column.
///
/// Every factor is a conditioning factor; `triggering` marks the subset
/// judged to directly drive failures. There is no standalone "triggering
/// only" state — a triggering factor is always also conditioning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorMeta {
    pub name: String,
    pub kind: FactorKind,
    pub triggering: bool,
    /// Unit label for reports; empty for dimensionless or categorical factors.
    #[serde(default)]
    pub unit: String,
}

impl FactorMeta {
    pub fn continuous(name: &str, triggering: bool, unit: &str) -> Self {
        FactorMeta {
            name: name.into(),
            kind: FactorKind::Continuous,
            triggering,
            unit: unit.into(),
        }
    }

    pub fn categorical(name: &str, triggering: bool) -> Self {
        FactorMeta {
            name: name.into(),
            kind: FactorKind::Categorical,
            triggering,
            unit: String::new(),
        }
    }

    /// All factors condition susceptibility by definition.
    pub fn is_conditioning(&self) -> bool {
        true
    }

    pub fn is_triggering(&self) -> bool {
        self.triggering
    }
}

/// The canonical 19-factor catalog used by full-scale susceptibility runs.
///
/// Order is fixed and meaningful: models that consume the factor vector as a
/// 1-D sequence (CNN/LSTM) see factors in exactly this order, and the
/// 9-factor triggering subset preserves it.
pub fn factor_catalog() -> Vec<FactorMeta> {
    vec![
        FactorMeta::continuous("Elevation", false, "m"),
        FactorMeta::continuous("Slope", true, "deg"),
        FactorMeta::categorical("Aspect", false),
        FactorMeta::continuous("Plan Curvature", false, ""),
        FactorMeta::continuous("Profile Curvature", false, ""),
        FactorMeta::continuous("Surface cut depth", false, "m"),
        FactorMeta::continuous("TRI", false, ""),
        FactorMeta::categorical("Lithology", true),
        FactorMeta::continuous("Distance to fault", true, "m"),
        FactorMeta::continuous("TWI", true, ""),
        FactorMeta::categorical("Landform", false),
        FactorMeta::continuous("SPI", false, ""),
        FactorMeta::continuous("STI", false, ""),
        FactorMeta::continuous("Distance to stream", true, "m"),
        FactorMeta::categorical("Land use", false),
        FactorMeta::continuous("NDVI", true, ""),
        FactorMeta::continuous("Distance to road", true, "m"),
        FactorMeta::continuous("Peak rainfall intensity", true, "mm"),
        FactorMeta::continuous("Average rainfall intensity", true, "mm"),
    ]
}

/// Names of the nine triggering factors, in catalog order.
pub fn triggering_factor_names() -> Vec<String> {
    factor_catalog()
        .into_iter()
        .filter(|m| m.triggering)
        .map(|m| m.name)
        .collect()
}

/// Samples × factors matrix with metadata, labels, and coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    metas: Vec<FactorMeta>,
    /// Row-major n × f values.
    values: Vec<f64>,
    labels: Option<Vec<u8>>,
    coords: Option<Vec<(f64, f64)>>,
}

impl FactorTable {
    /// Builds a table, validating shapes, finiteness, uniqueness, and labels.
    pub fn new(
        metas: Vec<FactorMeta>,
        values: Vec<f64>,
        labels: Option<Vec<u8>>,
        coords: Option<Vec<(f64, f64)>>,
    ) -> Result<Self> {
        let f = metas.len();
        if f == 0 {
            return Err(Error::InvalidTable("table needs at least one factor".into()));
        }
        if values.is_empty() || values.len() % f != 0 {
            return Err(Error::InvalidTable(format!(
                "value buffer length {} is not a positive multiple of factor count {f}",
                values.len()
            )));
        }
        let n = values.len() / f;
        let mut seen = HashMap::new();
        for (i, m) in metas.iter().enumerate() {
            if let Some(prev) = seen.insert(m.name.clone(), i) {
                return Err(Error::InvalidTable(format!(
                    "duplicate factor name \"{}\" (columns {prev} and {i})",
                    m.name
                )));
            }
        }
        for (idx, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::BadCell {
                    row: idx / f,
                    column: metas[idx % f].name.clone(),
                    reason: format!("non-finite value {v}"),
                });
            }
        }
        if let Some(ls) = &labels {
            if ls.len() != n {
                return Err(Error::Labels(format!(
                    "label count {} does not match row count {n}",
                    ls.len()
                )));
            }
            if let Some(bad) = ls.iter().find(|&&l| l > 1) {
                return Err(Error::Labels(format!("labels must be 0 or 1, found {bad}")));
            }
        }
        if let Some(cs) = &coords {
            if cs.len() != n {
                return Err(Error::InvalidTable(format!(
                    "coordinate count {} does not match row count {n}",
                    cs.len()
                )));
            }
        }
        Ok(FactorTable {
            metas,
            values,
            labels,
            coords,
        })
    }

    /// Convenience constructor from per-sample rows.
    pub fn from_rows(
        metas: Vec<FactorMeta>,
        rows: &[Vec<f64>],
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * metas.len());
        for row in rows {
            if row.len() != metas.len() {
                return Err(Error::InvalidTable(format!(
                    "row has {} values, expected {}",
                    row.len(),
                    metas.len()
                )));
            }
            values.extend_from_slice(row);
        }
        FactorTable::new(metas, values, labels, None)
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.metas.len()
    }

    pub fn n_factors(&self) -> usize {
        self.metas.len()
    }

    pub fn metas(&self) -> &[FactorMeta] {
        &self.metas
    }

    pub fn factor_names(&self) -> Vec<String> {
        self.metas.iter().map(|m| m.name.clone()).collect()
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn coords(&self) -> Option<&[(f64, f64)]> {
        self.coords.as_deref()
    }

    #[inline]
    pub fn value(&self, row: usize, factor: usize) -> f64 {
        self.values[row * self.metas.len() + factor]
    }

    /// One sample's factor vector.
    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        let f = self.metas.len();
        &self.values[row * f..(row + 1) * f]
    }

    /// Copy of one factor's column.
    pub fn column(&self, factor: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.value(r, factor)).collect()
    }

    /// Index of a factor by name.
    pub fn factor_index(&self, name: &str) -> Result<usize> {
        self.metas
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| Error::UnknownFactor(name.into()))
    }

    /// Restriction to a factor subset.
    ///
    /// Column order of the result follows this table's order, not the
    /// request order, so any subset of the same table yields a canonical
    /// layout. Unknown names error.
    pub fn select_factors(&self, names: &[String]) -> Result<FactorTable> {
        for n in names {
            self.factor_index(n)?;
        }
        let keep: Vec<usize> = self
            .metas
            .iter()
            .enumerate()
            .filter(|(_, m)| names.contains(&m.name))
            .map(|(i, _)| i)
            .collect();
        if keep.is_empty() {
            return Err(Error::InvalidTable("factor selection is empty".into()));
        }
        let mut values = Vec::with_capacity(self.n_rows() * keep.len());
        for r in 0..self.n_rows() {
            for &j in &keep {
                values.push(self.value(r, j));
            }
        }
        FactorTable::new(
            keep.iter().map(|&j| self.metas[j].clone()).collect(),
            values,
            self.labels.clone(),
            self.coords.clone(),
        )
    }

    /// Subset of rows (used by splitting); preserves metadata.
    pub fn select_rows(&self, rows: &[usize]) -> FactorTable {
        let f = self.metas.len();
        let mut values = Vec::with_capacity(rows.len() * f);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FactorTable {
            metas: self.metas.clone(),
            values,
            labels: self
                .labels
                .as_ref()
                .map(|ls| rows.iter().map(|&r| ls[r]).collect()),
            coords: self
                .coords
                .as_ref()
                .map(|cs| rows.iter().map(|&r| cs[r]).collect()),
        }
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Reserved CSV column names that are not factors.
pub const RESERVED_COLUMNS: [&str; 3] = ["label", "x", "y"];

/// Loads a factor table from a UTF-8 CSV file with a header row.
///
/// Every non-reserved column must appear in `schema` (matched by name), and
/// every schema entry must appear in the file. Columns named `label`, `x`,
/// `y` feed the label/coordinate slots. Cells must parse as finite numbers;
/// the error for a bad cell names its 1-based data row and column.
pub fn load_factor_table(path: impl AsRef<Path>, schema: &[FactorMeta]) -> Result<FactorTable> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: display.clone(),
        source: e,
    })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: display.clone(),
            source: e,
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let mut metas = Vec::new();
    let mut factor_cols = Vec::new();
    let mut label_col = None;
    let mut x_col = None;
    let mut y_col = None;
    for (i, h) in headers.iter().enumerate() {
        match h.as_str() {
            "label" => label_col = Some(i),
            "x" => x_col = Some(i),
            "y" => y_col = Some(i),
            name => {
                let meta = schema
                    .iter()
                    .find(|m| m.name == name)
                    .ok_or_else(|| {
                        Error::InvalidTable(format!(
                            "column \"{name}\" in {display} has no schema entry"
                        ))
                    })?
                    .clone();
                metas.push(meta);
                factor_cols.push(i);
            }
        }
    }
    for m in schema {
        if !metas.iter().any(|got| got.name == m.name) {
            return Err(Error::InvalidTable(format!(
                "schema factor \"{}\" missing from {display}",
                m.name
            )));
        }
    }
    if x_col.is_some() != y_col.is_some() {
        return Err(Error::InvalidTable(
            "coordinate columns must appear as a pair (x and y)".into(),
        ));
    }

    let parse_cell = |raw: &str, row: usize, column: &str| -> Result<f64> {
        let v: f64 = raw.trim().parse().map_err(|_| Error::BadCell {
            row,
            column: column.into(),
            reason: format!("cannot parse \"{raw}\" as a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::BadCell {
                row,
                column: column.into(),
                reason: format!("non-finite value \"{raw}\""),
            });
        }
        Ok(v)
    };

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut coords = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            path: display.clone(),
            source: e,
        })?;
        let row = r + 1;
        for (&col, meta) in factor_cols.iter().zip(&metas) {
            values.push(parse_cell(&record[col], row, &meta.name)?);
        }
        if let Some(c) = label_col {
            let v = parse_cell(&record[c], row, "label")?;
            if v != 0.0 && v != 1.0 {
                return Err(Error::Labels(format!(
                    "row {row}: label must be 0 or 1, found {v}"
                )));
            }
            labels.push(v as u8);
        }
        if let (Some(cx), Some(cy)) = (x_col, y_col) {
            coords.push((
                parse_cell(&record[cx], row, "x")?,
                parse_cell(&record[cy], row, "y")?,
            ));
        }
    }
    FactorTable::new(
        metas,
        values,
        (!labels.is_empty()).then_some(labels),
        (!coords.is_empty()).then_some(coords),
    )
}

/// Writes a factor table in the layout [`load_factor_table`] reads: an
/// optional `label` column, the factor columns in table order, and optional
/// `x`/`y` columns. Values print in shortest round-trip form, so
/// load(write(t)) == t exactly.
pub fn write_factor_table_csv(table: &FactorTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: display.clone(),
        source: e,
    })?;
    let io_err = |e: csv::Error| Error::Csv { path: display.clone(), source: e };

    let mut header = Vec::new();
    if table.labels().is_some() {
        header.push("label".to_string());
    }
    header.extend(table.factor_names());
    if table.coords().is_some() {
        header.push("x".into());
        header.push("y".into());
    }
    writer.write_record(&header).map_err(io_err)?;

    let mut record = Vec::with_capacity(header.len());
    for r in 0..table.n_rows() {
        record.clear();
        if let Some(labels) = table.labels() {
            record.push(labels[r].to_string());
        }
        record.extend(table.row(r).iter().map(f64::to_string));
        if let Some(coords) = table.coords() {
            record.push(coords[r].0.to_string());
            record.push(coords[r].1.to_string());
        }
        writer.write_record(&record).map_err(io_err)?;
    }
    writer.flush().map_err(|e| Error::io(display.clone(), e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Class binning
// ---------------------------------------------------------------------------

/// How to derive class boundaries from a factor's values.
#[derive(Debug, Clone, PartialEq)]
pub enum BinScheme {
    /// k classes with (approximately) equal populations.
    Quantile(usize),
    /// Explicit ascending edges; class i is [edge_i, edge_{i+1}) and the last
    /// class is open above. Values below the first edge fall in class 0.
    FixedEdges(Vec<f64>),
    /// One class per distinct value.
    Categorical,
}

/// A fitted mapping from factor values to class indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBinning {
    pub factor: String,
    kind: BinKind,
    class_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum BinKind {
    /// Interior boundaries (edges minus the leading minimum); class index is
    /// the count of boundaries ≤ value.
    Continuous { lower: f64, boundaries: Vec<f64> },
    /// Sorted distinct category codes.
    Categorical { codes: Vec<f64> },
}

impl ClassBinning {
    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    /// Class index for a value.
    ///
    /// Continuous binnings are total over finite values (everything below the
    /// first boundary is class 0, everything at or above the last is the top
    /// class). Categorical binnings reject codes that were not present when
    /// the binning was fitted.
    pub fn class_of(&self, value: f64) -> Result<usize> {
        match &self.kind {
            BinKind::Continuous { boundaries, .. } => {
                Ok(boundaries.partition_point(|b| *b <= value))
            }
            BinKind::Categorical { codes } => codes
                .iter()
                .position(|c| *c == value)
                .ok_or_else(|| Error::Binning {
                    factor: self.factor.clone(),
                    reason: format!("value {value} is not a known category code"),
                }),
        }
    }

    /// Total variant of [`Self::class_of`]: categorical values that are not
    /// exact codes map to the class of the nearest code (ties toward the
    /// smaller code). Continuous values behave as in `class_of`.
    pub fn nearest_class(&self, value: f64) -> usize {
        match &self.kind {
            BinKind::Continuous { boundaries, .. } => {
                boundaries.partition_point(|b| *b <= value)
            }
            BinKind::Categorical { codes } => {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (i, c) in codes.iter().enumerate() {
                    let d = (c - value).abs();
                    if d < best_d {
                        best_d = d;
                        best = i;
                    }
                }
                best
            }
        }
    }
}

/// Fits a [`ClassBinning`] for one factor.
///
/// Continuous classes are half-open `[lo, hi)` with the final class open
/// above (label "`lo`<"). The quantile scheme places boundaries at sorted
/// ranks ⌊i·n/k⌋ and collapses duplicates; a distribution too concentrated to
/// produce at least two classes is rejected as degenerate.
pub fn bin_factor(factor: &str, values: &[f64], scheme: &BinScheme) -> Result<ClassBinning> {
    if values.is_empty() {
        return Err(Error::Binning {
            factor: factor.into(),
            reason: "no values to bin".into(),
        });
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Binning {
            factor: factor.into(),
            reason: format!("non-finite value {bad}"),
        });
    }
    match scheme {
        BinScheme::Categorical => {
            let mut codes: Vec<f64> = values.to_vec();
            codes.sort_by(f64::total_cmp);
            codes.dedup();
            let class_labels = codes.iter().map(|c| format!("{c}")).collect();
            Ok(ClassBinning {
                factor: factor.into(),
                kind: BinKind::Categorical { codes },
                class_labels,
            })
        }
        BinScheme::FixedEdges(edges) => {
            if edges.len() < 2 {
                return Err(Error::Binning {
                    factor: factor.into(),
                    reason: "need at least 2 edges".into(),
                });
            }
            if edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Binning {
                    factor: factor.into(),
                    reason: "edges must be strictly ascending".into(),
                });
            }
            Ok(continuous_binning(factor, edges))
        }
        BinScheme::Quantile(k) => {
            let k = *k;
            if k < 2 {
                return Err(Error::Binning {
                    factor: factor.into(),
                    reason: "quantile scheme needs k >= 2".into(),
                });
            }
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let mut edges = vec![sorted[0]];
            for i in 1..k {
                let q = sorted[(i * n) / k];
                if q > *edges.last().unwrap() {
                    edges.push(q);
                }
            }
            if edges.len() < 2 {
                return Err(Error::Binning {
                    factor: factor.into(),
                    reason: "degenerate distribution: quantile edges collapse to one class"
                        .into(),
                });
            }
            Ok(continuous_binning(factor, &edges))
        }
    }
}

fn continuous_binning(factor: &str, edges: &[f64]) -> ClassBinning {
    let m = edges.len();
    let mut class_labels = Vec::with_capacity(m);
    for i in 0..m - 1 {
        class_labels.push(format!("{}..{}", edges[i], edges[i + 1]));
    }
    class_labels.push(format!("{}<", edges[m - 1]));
    ClassBinning {
        factor: factor.into(),
        kind: BinKind::Continuous {
            lower: edges[0],
            boundaries: edges[1..].to_vec(),
        },
        class_labels,
    }
}

// ---------------------------------------------------------------------------
// Negative sampling
// ---------------------------------------------------------------------------

/// Draws `count` distinct non-landslide cell centers from `grid`, each at
/// least `min_dist_m` from every landslide coordinate.
///
/// Cells containing a landslide point and nodata cells are never eligible.
/// Distance checks use a uniform spatial hash with bucket size `min_dist_m`,
/// so each candidate only inspects its 3×3 bucket neighborhood. Selection is
/// a seeded shuffle of the eligible set; output is sorted by grid position
/// for determinism independent of shuffle internals.
pub fn sample_non_landslides(
    landslide_coords: &[(f64, f64)],
    grid: &RasterGrid,
    min_dist_m: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if min_dist_m < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "min_dist_m must be >= 0, got {min_dist_m}"
        )));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("count must be >= 1".into()));
    }

    // Cells occupied by a landslide point.
    let cell_of = |x: f64, y: f64| -> Option<(usize, usize)> {
        let col = ((x - grid.xllcorner) / grid.cellsize).floor();
        let row_from_bottom = ((y - grid.yllcorner) / grid.cellsize).floor();
        if col < 0.0
            || row_from_bottom < 0.0
            || col >= grid.ncols as f64
            || row_from_bottom >= grid.nrows as f64
        {
            return None;
        }
        Some((grid.nrows - 1 - row_from_bottom as usize, col as usize))
    };
    let mut occupied = vec![false; grid.ncols * grid.nrows];
    for &(x, y) in landslide_coords {
        if let Some((r, c)) = cell_of(x, y) {
            occupied[r * grid.ncols + c] = true;
        }
    }

    // Spatial hash of landslide points, bucket edge = min_dist_m.
    let bucket = |x: f64, y: f64, size: f64| -> (i64, i64) {
        ((x / size).floor() as i64, (y / size).floor() as i64)
    };
    let mut hash: HashMap<(i64, i64), Vec<(f64, f64)>> = HashMap::new();
    if min_dist_m > 0.0 {
        for &(x, y) in landslide_coords {
            hash.entry(bucket(x, y, min_dist_m)).or_default().push((x, y));
        }
    }
    let far_enough = |x: f64, y: f64| -> bool {
        if min_dist_m == 0.0 {
            return true;
        }
        let (bx, by) = bucket(x, y, min_dist_m);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(points) = hash.get(&(bx + dx, by + dy)) {
                    for &(px, py) in points {
                        let (ddx, ddy) = (px - x, py - y);
                        if (ddx * ddx + ddy * ddy).sqrt() < min_dist_m {
                            return false;
                        }
                    }
                }
            }
        }
        true
    };

    let mut eligible = Vec::new();
    for row in 0..grid.nrows {
        for col in 0..grid.ncols {
            if occupied[row * grid.ncols + col] || grid.is_nodata(grid.get(row, col)) {
                continue;
            }
            let (x, y) = grid.cell_center(row, col);
            if far_enough(x, y) {
                eligible.push((row, col));
            }
        }
    }
    if eligible.len() < count {
        return Err(Error::NotEnoughEligibleCells {
            requested: count,
            eligible: eligible.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (chosen, _) = eligible.partial_shuffle(&mut rng, count);
    let mut chosen: Vec<(usize, usize)> = chosen.to_vec();
    chosen.sort_unstable();
    Ok(chosen
        .into_iter()
        .map(|(r, c)| grid.cell_center(r, c))
        .collect())
}

// ---------------------------------------------------------------------------
// Split and standardize
// ---------------------------------------------------------------------------

/// Stratified train/test split, deterministic for a fixed seed.
///
/// Each label stratum contributes `round(test_fraction · stratum size)` rows
/// to the test set; within each partition, original row order is preserved.
pub fn split_train_test(
    table: &FactorTable,
    test_fraction: f64,
    seed: u64,
) -> Result<(FactorTable, FactorTable)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must lie strictly between 0 and 1, got {test_fraction}"
        )));
    }
    let labels = table
        .labels()
        .ok_or_else(|| Error::Labels("split requires labels".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_rows = Vec::new();
    let mut train_rows = Vec::new();
    for stratum in [0u8, 1u8] {
        let mut rows: Vec<usize> = (0..table.n_rows()).filter(|&r| labels[r] == stratum).collect();
        if rows.len() < 2 {
            return Err(Error::Labels(format!(
                "label stratum {stratum} has {} rows; need at least 2 to split",
                rows.len()
            )));
        }
        let n_test = ((rows.len() as f64) * test_fraction).round() as usize;
        let n_test = n_test.clamp(1, rows.len() - 1);
        rows.shuffle(&mut rng);
        let (test, train) = rows.split_at(n_test);
        test_rows.extend_from_slice(test);
        train_rows.extend_from_slice(train);
    }
    test_rows.sort_unstable();
    train_rows.sort_unstable();
    Ok((table.select_rows(&train_rows), table.select_rows(&test_rows)))
}

/// Per-factor centering/scaling record; inverts exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub factor_names: Vec<String>,
    pub means: Vec<f64>,
    /// Population (divide-by-n) standard deviations.
    pub stds: Vec<f64>,
}

impl Scaler {
    pub fn transform_sample(&self, sample: &[f64]) -> Vec<f64> {
        sample
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert_sample(&self, sample: &[f64]) -> Vec<f64> {
        sample
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    /// Applies the transform to a whole table (columns matched by position).
    pub fn transform_table(&self, table: &FactorTable) -> Result<FactorTable> {
        if table.n_factors() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                actual: table.n_factors(),
            });
        }
        let f = table.n_factors();
        let mut values = Vec::with_capacity(table.n_rows() * f);
        for r in 0..table.n_rows() {
            for j in 0..f {
                values.push((table.value(r, j) - self.means[j]) / self.stds[j]);
            }
        }
        FactorTable::new(
            table.metas().to_vec(),
            values,
            table.labels().map(|l| l.to_vec()),
            table.coords().map(|c| c.to_vec()),
        )
    }
}

/// Centers each factor to mean 0 and scales to population stddev 1.
pub fn standardize(table: &FactorTable) -> Result<(FactorTable, Scaler)> {
    let f = table.n_factors();
    let mut means = Vec::with_capacity(f);
    let mut stds = Vec::with_capacity(f);
    for j in 0..f {
        let col = table.column(j);
        let m = stats::mean(&col);
        let s = stats::population_std(&col);
        if s <= 0.0 {
            return Err(Error::InvalidTable(format!(
                "factor \"{}\" has zero variance; cannot standardize",
                table.metas()[j].name
            )));
        }
        means.push(m);
        stds.push(s);
    }
    let scaler = Scaler {
        factor_names: table.factor_names(),
        means,
        stds,
    };
    let transformed = scaler.transform_table(table)?;
    Ok((transformed, scaler))
}
