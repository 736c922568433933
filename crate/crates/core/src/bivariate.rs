//! Class-conditional landslide statistics: frequency ratio, information
//! value, weights of evidence, and the additive susceptibility index built
//! from them.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ClassBinning, FactorTable};
use crate::error::{Error, Result};
use crate::raster::RasterGrid;

/// Per-class pixel tallies for one factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub factor: String,
    pub class_labels: Vec<String>,
    pub pixels_total: Vec<u64>,
    pub pixels_landslide: Vec<u64>,
}

impl ClassCounts {
    pub fn new(
        factor: &str,
        class_labels: Vec<String>,
        pixels_total: Vec<u64>,
        pixels_landslide: Vec<u64>,
    ) -> Result<Self> {
        if class_labels.is_empty()
            || class_labels.len() != pixels_total.len()
            || class_labels.len() != pixels_landslide.len()
        {
            return Err(Error::InvalidTable(format!(
                "class counts for \"{factor}\" need equal, nonempty label/total/landslide vectors"
            )));
        }
        for (i, (&t, &l)) in pixels_total.iter().zip(&pixels_landslide).enumerate() {
            if l > t {
                return Err(Error::InvalidTable(format!(
                    "factor \"{factor}\" class {i}: landslide pixels {l} exceed total {t}"
                )));
            }
        }
        Ok(ClassCounts {
            factor: factor.into(),
            class_labels,
            pixels_total,
            pixels_landslide,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn total_pixels(&self) -> u64 {
        self.pixels_total.iter().sum()
    }

    pub fn total_landslide(&self) -> u64 {
        self.pixels_landslide.iter().sum()
    }
}

/// Tallies class membership for labeled samples of one factor.
pub fn compute_class_counts(
    values: &[f64],
    labels: &[u8],
    binning: &ClassBinning,
) -> Result<ClassCounts> {
    if values.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            actual: labels.len(),
        });
    }
    let m = binning.n_classes();
    let mut total = vec![0u64; m];
    let mut slide = vec![0u64; m];
    for (&v, &l) in values.iter().zip(labels) {
        let c = binning.class_of(v)?;
        total[c] += 1;
        if l == 1 {
            slide[c] += 1;
        }
    }
    ClassCounts::new(&binning.factor, binning.class_labels().to_vec(), total, slide)
}

/// Tallies a whole factor raster: every valid cell counts toward its class's
/// total, and cells containing at least one landslide coordinate count as
/// landslide pixels.
pub fn compute_class_counts_grid(
    grid: &RasterGrid,
    landslide_coords: &[(f64, f64)],
    binning: &ClassBinning,
) -> Result<ClassCounts> {
    let mut slide_cells = vec![false; grid.nrows * grid.ncols];
    for &(x, y) in landslide_coords {
        let col = ((x - grid.xllcorner) / grid.cellsize).floor();
        let row_from_bottom = ((y - grid.yllcorner) / grid.cellsize).floor();
        if col >= 0.0
            && row_from_bottom >= 0.0
            && col < grid.ncols as f64
            && row_from_bottom < grid.nrows as f64
        {
            let row = grid.nrows - 1 - row_from_bottom as usize;
            slide_cells[row * grid.ncols + col as usize] = true;
        }
    }
    let m = binning.n_classes();
    let mut total = vec![0u64; m];
    let mut slide = vec![0u64; m];
    for row in 0..grid.nrows {
        for col in 0..grid.ncols {
            let v = grid.get(row, col);
            if grid.is_nodata(v) {
                continue;
            }
            let c = binning.class_of(v)?;
            total[c] += 1;
            if slide_cells[row * grid.ncols + col] {
                slide[c] += 1;
            }
        }
    }
    ClassCounts::new(&binning.factor, binning.class_labels().to_vec(), total, slide)
}

/// Frequency ratio per class: landslide share over area share.
///
/// A class with landslides but no pixels cannot occur (validated); a class
/// with pixels but no landslides has ratio 0; a class with no pixels has no
/// defined ratio (`None`).
pub fn frequency_ratio(counts: &ClassCounts) -> Result<Vec<Option<f64>>> {
    let total = counts.total_pixels();
    let slides = counts.total_landslide();
    if total == 0 {
        return Err(Error::InvalidTable(format!(
            "factor \"{}\" has no pixels",
            counts.factor
        )));
    }
    if slides == 0 {
        return Err(Error::InvalidTable(format!(
            "factor \"{}\" has no landslide pixels; frequency ratio is undefined",
            counts.factor
        )));
    }
    Ok(counts
        .pixels_total
        .iter()
        .zip(&counts.pixels_landslide)
        .map(|(&t, &l)| {
            if t == 0 {
                None
            } else {
                Some((l as f64 / slides as f64) / (t as f64 / total as f64))
            }
        })
        .collect())
}

/// Information value per class: natural log of the frequency ratio.
/// Undefined where the ratio is zero or undefined.
pub fn information_value(counts: &ClassCounts) -> Result<Vec<Option<f64>>> {
    Ok(frequency_ratio(counts)?
        .into_iter()
        .map(|fr| match fr {
            Some(v) if v > 0.0 => Some(v.ln()),
            _ => None,
        })
        .collect())
}

/// Weight-of-evidence statistics for one class's 2×2 contingency table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceWeights {
    pub w_plus: f64,
    pub w_minus: f64,
    pub contrast: f64,
    /// Standard deviation of the contrast.
    pub s_c: f64,
    /// Studentized contrast, contrast / s_c.
    pub wf: f64,
}

/// Weights of evidence per class.
///
/// For each class the 2×2 table is (landslide in / landslide out /
/// non-landslide in / non-landslide out). If any cell is zero, 0.5 is added
/// to all four cells of that class's table before taking logs, which keeps
/// every statistic finite.
pub fn weights_of_evidence(counts: &ClassCounts) -> Result<Vec<EvidenceWeights>> {
    let total = counts.total_pixels();
    let slides = counts.total_landslide();
    if total == 0 {
        return Err(Error::InvalidTable(format!(
            "factor \"{}\" has no pixels",
            counts.factor
        )));
    }
    let mut out = Vec::with_capacity(counts.n_classes());
    for (&t, &l) in counts.pixels_total.iter().zip(&counts.pixels_landslide) {
        let a = l as f64; // landslide pixels inside the class
        let b = (slides - l) as f64; // landslide pixels outside
        let c = (t - l) as f64; // non-landslide pixels inside
        let d = ((total - slides) - (t - l)) as f64; // non-landslide pixels outside
        let (a, b, c, d) = if a == 0.0 || b == 0.0 || c == 0.0 || d == 0.0 {
            (a + 0.5, b + 0.5, c + 0.5, d + 0.5)
        } else {
            (a, b, c, d)
        };
        let w_plus = ((a / (a + b)) / (c / (c + d))).ln();
        let w_minus = ((b / (a + b)) / (d / (c + d))).ln();
        let contrast = w_plus - w_minus;
        let s_c = (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d).sqrt();
        out.push(EvidenceWeights {
            w_plus,
            w_minus,
            contrast,
            s_c,
            wf: contrast / s_c,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Weight table serialization
// ---------------------------------------------------------------------------

/// One class's full statistics row as exported to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub factor: String,
    pub class: String,
    pub pixels_total: u64,
    pub pixels_landslide: u64,
    pub fr: Option<f64>,
    pub iv: Option<f64>,
    pub w_plus: f64,
    pub w_minus: f64,
    pub contrast: f64,
    pub s_c: f64,
    pub wf: f64,
}

/// All-classes, all-factors statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub rows: Vec<WeightRow>,
}

pub const WEIGHT_TABLE_HEADER: &str =
    "factor,class,pixels_total,pixels_landslide,FR,IV,W_plus,W_minus,C,S_C,Wf";

impl WeightTable {
    /// Computes every statistic for each factor's counts.
    pub fn from_counts(counts: &[ClassCounts]) -> Result<Self> {
        let mut rows = Vec::new();
        for c in counts {
            let fr = frequency_ratio(c)?;
            let iv = information_value(c)?;
            let woe = weights_of_evidence(c)?;
            for i in 0..c.n_classes() {
                rows.push(WeightRow {
                    factor: c.factor.clone(),
                    class: c.class_labels[i].clone(),
                    pixels_total: c.pixels_total[i],
                    pixels_landslide: c.pixels_landslide[i],
                    fr: fr[i],
                    iv: iv[i],
                    w_plus: woe[i].w_plus,
                    w_minus: woe[i].w_minus,
                    contrast: woe[i].contrast,
                    s_c: woe[i].s_c,
                    wf: woe[i].wf,
                });
            }
        }
        Ok(WeightTable { rows })
    }

    /// CSV rendering with a fixed header; undefined statistics are empty
    /// fields. Floats print in shortest round-trip form, so parsing the
    /// output reproduces the table bit for bit.
    pub fn to_csv_string(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let mut out = String::from(WEIGHT_TABLE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let class = if r.class.contains(',') || r.class.contains('"') {
                format!("\"{}\"", r.class.replace('"', "\"\""))
            } else {
                r.class.clone()
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.factor,
                class,
                r.pixels_total,
                r.pixels_landslide,
                opt(r.fr),
                opt(r.iv),
                r.w_plus,
                r.w_minus,
                r.contrast,
                r.s_c,
                r.wf
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string())
            .map_err(|e| Error::io(&path.display().to_string(), e))
    }

    /// Parses the CSV form produced by [`WeightTable::to_csv_string`].
    pub fn from_csv_string(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::InvalidTable(format!("weight table header: {e}")))?;
        let got = headers.iter().collect::<Vec<_>>().join(",");
        if got != WEIGHT_TABLE_HEADER {
            return Err(Error::InvalidTable(format!(
                "unexpected weight table header \"{got}\""
            )));
        }
        let parse_opt = |s: &str, what: &str, row: usize| -> Result<Option<f64>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::BadCell {
                row,
                column: what.into(),
                reason: format!("cannot parse \"{s}\""),
            })
        };
        let parse_f = |s: &str, what: &str, row: usize| -> Result<f64> {
            s.parse().map_err(|_| Error::BadCell {
                row,
                column: what.into(),
                reason: format!("cannot parse \"{s}\""),
            })
        };
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let rec = record.map_err(|e| Error::InvalidTable(format!("weight table row: {e}")))?;
            let row = i + 1;
            rows.push(WeightRow {
                factor: rec[0].to_string(),
                class: rec[1].to_string(),
                pixels_total: rec[2].parse().map_err(|_| Error::BadCell {
                    row,
                    column: "pixels_total".into(),
                    reason: format!("cannot parse \"{}\"", &rec[2]),
                })?,
                pixels_landslide: rec[3].parse().map_err(|_| Error::BadCell {
                    row,
                    column: "pixels_landslide".into(),
                    reason: format!("cannot parse \"{}\"", &rec[3]),
                })?,
                fr: parse_opt(&rec[4], "FR", row)?,
                iv: parse_opt(&rec[5], "IV", row)?,
                w_plus: parse_f(&rec[6], "W_plus", row)?,
                w_minus: parse_f(&rec[7], "W_minus", row)?,
                contrast: parse_f(&rec[8], "C", row)?,
                s_c: parse_f(&rec[9], "S_C", row)?,
                wf: parse_f(&rec[10], "Wf", row)?,
            });
        }
        Ok(WeightTable { rows })
    }
}

// ---------------------------------------------------------------------------
// Additive susceptibility index
// ---------------------------------------------------------------------------

/// Which class statistic an [`LsiModel`] sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsiMethod {
    /// Sum of class frequency ratios.
    FrequencyRatio,
    /// Sum of class information values.
    InformationValue,
    /// Sum of studentized contrasts (the default evidence weight).
    WoeStudentized,
    /// Sum of raw contrasts.
    WoeContrast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LsiFactor {
    binning: ClassBinning,
    /// Per-class additive weight; `None` marks classes whose statistic was
    /// undefined in the training counts.
    weights: Vec<Option<f64>>,
}

/// Additive index model: a sample's score is the sum over factors of the
/// weight of the class its value falls in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsiModel {
    pub method: LsiMethod,
    factors: Vec<LsiFactor>,
}

impl LsiModel {
    /// Fits per-class weights from counts. Each counts/binning pair must
    /// agree on factor name and class count.
    pub fn fit(
        counts: &[ClassCounts],
        binnings: &[ClassBinning],
        method: LsiMethod,
    ) -> Result<Self> {
        if counts.len() != binnings.len() || counts.is_empty() {
            return Err(Error::InvalidArgument(
                "need one binning per counts entry, at least one factor".into(),
            ));
        }
        let mut factors = Vec::with_capacity(counts.len());
        for (c, b) in counts.iter().zip(binnings) {
            if c.factor != b.factor {
                return Err(Error::InvalidArgument(format!(
                    "counts factor \"{}\" does not match binning factor \"{}\"",
                    c.factor, b.factor
                )));
            }
            if c.n_classes() != b.n_classes() {
                return Err(Error::DimensionMismatch {
                    expected: b.n_classes(),
                    actual: c.n_classes(),
                });
            }
            let weights: Vec<Option<f64>> = match method {
                LsiMethod::FrequencyRatio => frequency_ratio(c)?,
                LsiMethod::InformationValue => information_value(c)?,
                LsiMethod::WoeStudentized => weights_of_evidence(c)?
                    .into_iter()
                    .map(|w| Some(w.wf))
                    .collect(),
                LsiMethod::WoeContrast => weights_of_evidence(c)?
                    .into_iter()
                    .map(|w| Some(w.contrast))
                    .collect(),
            };
            factors.push(LsiFactor {
                binning: b.clone(),
                weights,
            });
        }
        Ok(LsiModel { method, factors })
    }

    pub fn factor_names(&self) -> Vec<String> {
        self.factors.iter().map(|f| f.binning.factor.clone()).collect()
    }

    /// Scores one sample whose values are ordered like [`Self::factor_names`].
    /// Errors if a value lands in a class whose weight is undefined, or (for
    /// categorical factors) is an unknown code.
    pub fn score_sample(&self, sample: &[f64]) -> Result<f64> {
        if sample.len() != self.factors.len() {
            return Err(Error::DimensionMismatch {
                expected: self.factors.len(),
                actual: sample.len(),
            });
        }
        let mut sum = 0.0;
        for (f, &v) in self.factors.iter().zip(sample) {
            let class = f.binning.class_of(v)?;
            sum += f.weights[class].ok_or_else(|| Error::UndefinedWeight {
                factor: f.binning.factor.clone(),
                class: f.binning.class_labels()[class].clone(),
                reason: "no defined weight for this class in the training counts".into(),
            })?;
        }
        Ok(sum)
    }

    /// Scores every row of a table, matching model factors to table columns
    /// by name.
    pub fn score_table(&self, table: &FactorTable) -> Result<Vec<f64>> {
        let cols: Vec<usize> = self
            .factors
            .iter()
            .map(|f| table.factor_index(&f.binning.factor))
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(table.n_rows());
        for r in 0..table.n_rows() {
            let sample: Vec<f64> = cols.iter().map(|&j| table.value(r, j)).collect();
            out.push(self.score_sample(&sample)?);
        }
        Ok(out)
    }

    /// Total-function view for perturbation-based attribution: categorical
    /// values snap to the nearest known code and undefined class weights
    /// contribute 0.
    pub fn scorer(&self) -> LsiScorer<'_> {
        LsiScorer { model: self }
    }
}

/// Robust scoring wrapper over [`LsiModel`]; see [`LsiModel::scorer`].
pub struct LsiScorer<'a> {
    model: &'a LsiModel,
}

impl crate::attribution::Scorer for LsiScorer<'_> {
    fn n_factors(&self) -> usize {
        self.model.factors.len()
    }

    fn score(&self, sample: &[f64]) -> f64 {
        let mut sum = 0.0;
        for (f, &v) in self.model.factors.iter().zip(sample) {
            let class = match f.binning.class_of(v) {
                Ok(c) => c,
                Err(_) => f.binning.nearest_class(v),
            };
            sum += f.weights[class].unwrap_or(0.0);
        }
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{bin_factor, BinScheme};
    use proptest::prelude::*;

    fn two_class_counts() -> ClassCounts {
        ClassCounts::new(
            "t",
            vec!["a".into(), "b".into()],
            vec![100, 300],
            vec![10, 10],
        )
        .unwrap()
    }

    #[test]
    fn frequency_ratio_two_class_example() {
        let fr = frequency_ratio(&two_class_counts()).unwrap();
        assert!((fr[0].unwrap() - 2.0).abs() < 1e-12);
        assert!((fr[1].unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let iv = information_value(&two_class_counts()).unwrap();
        assert!((iv[0].unwrap() - 0.693_147_180_559_945_3).abs() < 1e-12);
        assert!((iv[1].unwrap() + 0.405_465_108_108).abs() < 1e-9);
    }

    #[test]
    fn frequency_ratio_edge_classes() {
        // Class with pixels but no landslides -> 0; class with no pixels -> None.
        let c = ClassCounts::new(
            "e",
            vec!["x".into(), "y".into(), "z".into()],
            vec![50, 0, 50],
            vec![0, 0, 5],
        )
        .unwrap();
        let fr = frequency_ratio(&c).unwrap();
        assert_eq!(fr[0], Some(0.0));
        assert_eq!(fr[1], None);
        assert!(fr[2].unwrap() > 0.0);
        let iv = information_value(&c).unwrap();
        assert_eq!(iv[0], None);
        assert_eq!(iv[1], None);
    }

    #[test]
    fn evidence_weights_two_class_example() {
        // Class 0 contingency table: a=10, b=10, c=90, d=290.
        let w = &weights_of_evidence(&two_class_counts()).unwrap()[0];
        assert!((w.w_plus - 0.747_214_401_830).abs() < 1e-10);
        assert!((w.w_minus + 0.422_856_850_820).abs() < 1e-10);
        assert!((w.contrast - 1.170_071_252_650).abs() < 1e-10);
        assert!((w.s_c - 0.463_205_555_853).abs() < 1e-10);
        assert!((w.wf - 2.526_030_264_243).abs() < 1e-10);
    }

    #[test]
    fn evidence_weights_smooth_zero_cells() {
        // a = 0 forces +0.5 smoothing: a=0.5, b=20.5, c=100.5, d=280.5.
        let c = ClassCounts::new(
            "s",
            vec!["x".into(), "y".into()],
            vec![100, 300],
            vec![0, 20],
        )
        .unwrap();
        let w = &weights_of_evidence(&c).unwrap()[0];
        assert!((w.w_plus + 2.405_027_970_656).abs() < 1e-10);
        assert!((w.w_minus - 0.282_128_098_585).abs() < 1e-10);
        assert!((w.contrast + 2.687_156_069_241).abs() < 1e-10);
        assert!((w.s_c - 1.436_069_566_194).abs() < 1e-10);
        assert!((w.wf + 1.871_187_951_125).abs() < 1e-10);
        assert!(w.w_plus.is_finite() && w.wf.is_finite());
    }

    #[test]
    fn counts_from_labeled_values() {
        let values = [1.0, 2.0, 6.0, 7.0, 8.0, 3.0];
        let labels = [1, 0, 1, 0, 0, 0];
        let b = bin_factor("f", &values, &BinScheme::FixedEdges(vec![0.0, 5.0, 10.0])).unwrap();
        let c = compute_class_counts(&values, &labels, &b).unwrap();
        // Three classes: [0,5), [5,10), and the open "10<" tail (empty here).
        assert_eq!(c.pixels_total, vec![3, 3, 0]);
        assert_eq!(c.pixels_landslide, vec![1, 1, 0]);
    }

    #[test]
    fn counts_from_grid_marks_landslide_cells() {
        let mut grid = RasterGrid::filled(3, 3, 100.0, 1.0);
        grid.set(0, 0, 9.0); // top-left cell is the high class
        grid.set(2, 2, grid.nodata);
        let b = bin_factor(
            "g",
            &[1.0, 9.0],
            &BinScheme::FixedEdges(vec![0.0, 5.0, 10.0]),
        )
        .unwrap();
        // Two coordinates in the same top-left cell count once; one in the
        // low class; one outside the grid is ignored.
        let coords = [(10.0, 290.0), (90.0, 210.0), (150.0, 150.0), (-50.0, 50.0)];
        let c = compute_class_counts_grid(&grid, &coords, &b).unwrap();
        // 8 valid cells: one in [5,10), none in the open tail.
        assert_eq!(c.pixels_total, vec![7, 1, 0]);
        assert_eq!(c.pixels_landslide, vec![1, 1, 0]);
    }

    #[test]
    fn weight_table_round_trips_through_csv() {
        let counts = vec![
            two_class_counts(),
            ClassCounts::new(
                "u",
                vec!["0..5".into(), "5<".into()],
                vec![40, 0],
                vec![3, 0],
            )
            .unwrap(),
        ];
        let table = WeightTable::from_counts(&counts).unwrap();
        let text = table.to_csv_string();
        assert!(text.starts_with(WEIGHT_TABLE_HEADER));
        let back = WeightTable::from_csv_string(&text).unwrap();
        assert_eq!(table, back);
        // Undefined cells serialize as empty fields.
        let undefined_row = &table.rows[3];
        assert_eq!(undefined_row.fr, None);
        let line = text.lines().nth(4).unwrap();
        assert!(line.contains(",,"), "expected empty FR field in {line}");
    }

    #[test]
    fn lsi_scores_sum_class_weights() {
        let values = [1.0, 2.0, 6.0, 7.0, 8.0, 3.0];
        let labels = [1, 0, 1, 0, 0, 0];
        let b = bin_factor("f", &values, &BinScheme::FixedEdges(vec![0.0, 5.0, 10.0])).unwrap();
        let c = compute_class_counts(&values, &labels, &b).unwrap();
        let model = LsiModel::fit(&[c.clone()], &[b.clone()], LsiMethod::FrequencyRatio).unwrap();
        let fr = frequency_ratio(&c).unwrap();
        assert!((model.score_sample(&[2.0]).unwrap() - fr[0].unwrap()).abs() < 1e-12);
        assert!((model.score_sample(&[9.0]).unwrap() - fr[1].unwrap()).abs() < 1e-12);

        let woe = LsiModel::fit(&[c.clone()], &[b.clone()], LsiMethod::WoeStudentized).unwrap();
        let w = weights_of_evidence(&c).unwrap();
        assert!((woe.score_sample(&[2.0]).unwrap() - w[0].wf).abs() < 1e-12);
    }

    #[test]
    fn lsi_undefined_class_weight_is_an_error() {
        // Landslides only in class 1; IV of class 0 is ln(0) -> undefined.
        let values = [1.0, 2.0, 6.0, 7.0];
        let labels = [0, 0, 1, 1];
        let b = bin_factor("f", &values, &BinScheme::FixedEdges(vec![0.0, 5.0, 10.0])).unwrap();
        let c = compute_class_counts(&values, &labels, &b).unwrap();
        let model = LsiModel::fit(&[c], &[b], LsiMethod::InformationValue).unwrap();
        let err = model.score_sample(&[1.5]).unwrap_err();
        assert!(matches!(err, Error::UndefinedWeight { .. }), "{err}");
        assert!(model.score_sample(&[6.5]).is_ok());
    }

    #[test]
    fn lsi_model_round_trips_through_json() {
        let values = [1.0, 2.0, 6.0, 7.0, 8.0, 3.0];
        let labels = [1, 0, 1, 0, 0, 0];
        let b = bin_factor("f", &values, &BinScheme::FixedEdges(vec![0.0, 5.0, 10.0])).unwrap();
        let c = compute_class_counts(&values, &labels, &b).unwrap();
        let model = LsiModel::fit(&[c], &[b], LsiMethod::WoeContrast).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: LsiModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
    }

    proptest! {
        /// Area-weighted mean of defined frequency ratios is exactly 1.
        #[test]
        fn fr_area_weighted_mean_is_one(
            totals in proptest::collection::vec(1u64..5000, 2..8),
            seed in 0u64..1000,
        ) {
            let mut slides: Vec<u64> = Vec::new();
            let mut s = seed;
            for &t in &totals {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                slides.push((s >> 33) % (t + 1));
            }
            prop_assume!(slides.iter().sum::<u64>() > 0);
            let labels: Vec<String> = (0..totals.len()).map(|i| format!("c{i}")).collect();
            let c = ClassCounts::new("p", labels, totals.clone(), slides).unwrap();
            let fr = frequency_ratio(&c).unwrap();
            let total: u64 = c.total_pixels();
            let weighted: f64 = fr
                .iter()
                .zip(&c.pixels_total)
                .map(|(r, &t)| r.unwrap() * t as f64 / total as f64)
                .sum();
            prop_assert!((weighted - 1.0).abs() < 1e-9, "weighted mean {weighted}");
        }

        /// Contrast always equals W+ − W− and the studentized weight times
        /// s_c recovers the contrast; all outputs stay finite even with
        /// zero cells thanks to smoothing.
        #[test]
        fn woe_identities_hold(
            totals in proptest::collection::vec(1u64..5000, 2..8),
            seed in 0u64..1000,
        ) {
            let mut slides: Vec<u64> = Vec::new();
            let mut s = seed.wrapping_add(17);
            for &t in &totals {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                slides.push((s >> 33) % (t + 1));
            }
            let labels: Vec<String> = (0..totals.len()).map(|i| format!("c{i}")).collect();
            let c = ClassCounts::new("p", labels, totals, slides).unwrap();
            for w in weights_of_evidence(&c).unwrap() {
                prop_assert!(w.w_plus.is_finite());
                prop_assert!(w.w_minus.is_finite());
                prop_assert!((w.contrast - (w.w_plus - w.w_minus)).abs() < 1e-12);
                prop_assert!((w.wf * w.s_c - w.contrast).abs() < 1e-9);
                prop_assert!(w.s_c > 0.0);
            }
        }

        /// IV = ln(FR) wherever both are defined.
        #[test]
        fn iv_is_log_of_fr(
            totals in proptest::collection::vec(1u64..5000, 2..8),
            seed in 0u64..1000,
        ) {
            let mut slides: Vec<u64> = Vec::new();
            let mut s = seed.wrapping_add(101);
            for &t in &totals {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                slides.push((s >> 33) % (t + 1));
            }
            prop_assume!(slides.iter().sum::<u64>() > 0);
            let labels: Vec<String> = (0..totals.len()).map(|i| format!("c{i}")).collect();
            let c = ClassCounts::new("p", labels, totals, slides).unwrap();
            let fr = frequency_ratio(&c).unwrap();
            let iv = information_value(&c).unwrap();
            for (f, i) in fr.iter().zip(&iv) {
                if let (Some(f), Some(i)) = (f, i) {
                    prop_assert!((f.ln() - i).abs() < 1e-12);
                }
            }
        }
    }
}
