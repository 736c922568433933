//! Raster grids and ESRI ASCII grid I/O.
//!
//! The ASCII format is the classic six-line header (`ncols`, `nrows`,
//! `xllcorner`, `yllcorner`, `cellsize`, `NODATA_value`) followed by
//! row-major values with the northernmost row first. Export always writes
//! the header in exactly that order and spelling; floating-point values are
//! written in shortest round-trip form, so export → import is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Default nodata sentinel when a file omits `NODATA_value`.
pub const DEFAULT_NODATA: f64 = -9999.0;

/// A rectangular grid of cell values anchored in projected (meter) space.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub ncols: usize,
    pub nrows: usize,
    /// X coordinate of the lower-left corner of the lower-left cell.
    pub xllcorner: f64,
    /// Y coordinate of the lower-left corner of the lower-left cell.
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata: f64,
    /// Row-major values, row 0 = northernmost row (file order).
    pub values: Vec<f64>,
}

impl RasterGrid {
    /// Builds a grid after validating dimensions.
    pub fn new(
        ncols: usize,
        nrows: usize,
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::Raster {
                path: None,
                reason: "ncols and nrows must be positive".into(),
            });
        }
        if cellsize <= 0.0 {
            return Err(Error::Raster {
                path: None,
                reason: format!("cellsize must be > 0, got {cellsize}"),
            });
        }
        if values.len() != ncols * nrows {
            return Err(Error::Raster {
                path: None,
                reason: format!(
                    "value count {} does not match ncols*nrows = {}",
                    values.len(),
                    ncols * nrows
                ),
            });
        }
        Ok(RasterGrid {
            ncols,
            nrows,
            xllcorner,
            yllcorner,
            cellsize,
            nodata,
            values,
        })
    }

    /// Uniform grid filled with one value.
    pub fn filled(ncols: usize, nrows: usize, cellsize: f64, value: f64) -> Self {
        RasterGrid {
            ncols,
            nrows,
            xllcorner: 0.0,
            yllcorner: 0.0,
            cellsize,
            nodata: DEFAULT_NODATA,
            values: vec![value; ncols * nrows],
        }
    }

    /// Value at (row, col); row 0 is the northernmost row.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.ncols + col] = v;
    }

    /// True when a value equals the nodata sentinel.
    #[inline]
    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata
    }

    /// Center coordinates of cell (row, col) in projected space.
    ///
    /// Row 0 is the northern edge, so its centers sit at
    /// `yllcorner + (nrows − 0.5) · cellsize`.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = self.xllcorner + (col as f64 + 0.5) * self.cellsize;
        let y = self.yllcorner + (self.nrows as f64 - row as f64 - 0.5) * self.cellsize;
        (x, y)
    }

    /// Iterates (row, col, value) over non-nodata cells.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (0..self.ncols).filter_map(move |c| {
                let v = self.get(r, c);
                (!self.is_nodata(v)).then_some((r, c, v))
            })
        })
    }
}

/// Reads an ESRI ASCII grid.
///
/// Header keywords are matched case-insensitively; `NODATA_value` is
/// optional (defaults to −9999). Values must parse as finite numbers or the
/// nodata sentinel, and the count must match `ncols × nrows`.
pub fn read_ascii_grid(path: impl AsRef<Path>) -> Result<RasterGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_ascii_grid(&text).map_err(|reason| Error::Raster {
        path: Some(path.display().to_string()),
        reason,
    })
}

fn parse_ascii_grid(text: &str) -> std::result::Result<RasterGrid, String> {
    let mut tokens = text.split_whitespace().peekable();
    let mut ncols: Option<usize> = None;
    let mut nrows: Option<usize> = None;
    let mut xll: Option<f64> = None;
    let mut yll: Option<f64> = None;
    let mut cellsize: Option<f64> = None;
    let mut nodata: Option<f64> = None;

    // Header: keyword/value pairs until the first token that parses as a number.
    while let Some(&tok) = tokens.peek() {
        let key = tok.to_ascii_lowercase();
        let is_keyword = matches!(
            key.as_str(),
            "ncols" | "nrows" | "xllcorner" | "yllcorner" | "cellsize" | "nodata_value"
        );
        if !is_keyword {
            break;
        }
        tokens.next();
        let value = tokens
            .next()
            .ok_or_else(|| format!("header keyword \"{key}\" missing its value"))?;
        match key.as_str() {
            "ncols" => {
                ncols = Some(value.parse().map_err(|_| format!("bad ncols \"{value}\""))?)
            }
            "nrows" => {
                nrows = Some(value.parse().map_err(|_| format!("bad nrows \"{value}\""))?)
            }
            "xllcorner" => {
                xll = Some(value.parse().map_err(|_| format!("bad xllcorner \"{value}\""))?)
            }
            "yllcorner" => {
                yll = Some(value.parse().map_err(|_| format!("bad yllcorner \"{value}\""))?)
            }
            "cellsize" => {
                cellsize =
                    Some(value.parse().map_err(|_| format!("bad cellsize \"{value}\""))?)
            }
            "nodata_value" => {
                nodata =
                    Some(value.parse().map_err(|_| format!("bad NODATA_value \"{value}\""))?)
            }
            _ => unreachable!(),
        }
    }

    let ncols = ncols.ok_or("missing header keyword ncols")?;
    let nrows = nrows.ok_or("missing header keyword nrows")?;
    let xll = xll.ok_or("missing header keyword xllcorner")?;
    let yll = yll.ok_or("missing header keyword yllcorner")?;
    let cellsize = cellsize.ok_or("missing header keyword cellsize")?;
    let nodata = nodata.unwrap_or(DEFAULT_NODATA);

    let mut values = Vec::with_capacity(ncols * nrows);
    for tok in tokens {
        let v: f64 = tok
            .parse()
            .map_err(|_| format!("bad grid value \"{tok}\" at position {}", values.len()))?;
        if !v.is_finite() && v != nodata {
            return Err(format!("non-finite grid value at position {}", values.len()));
        }
        values.push(v);
    }
    if values.len() != ncols * nrows {
        return Err(format!(
            "expected {} values ({} cols × {} rows), found {}",
            ncols * nrows,
            ncols,
            nrows,
            values.len()
        ));
    }
    RasterGrid::new(ncols, nrows, xll, yll, cellsize, nodata, values).map_err(|e| e.to_string())
}

/// Writes an ESRI ASCII grid with the canonical header order.
pub fn write_ascii_grid(grid: &RasterGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = format_ascii_grid(grid);
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Renders the grid to the exact on-disk byte representation.
pub fn format_ascii_grid(grid: &RasterGrid) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", grid.ncols);
    let _ = writeln!(out, "nrows {}", grid.nrows);
    let _ = writeln!(out, "xllcorner {}", grid.xllcorner);
    let _ = writeln!(out, "yllcorner {}", grid.yllcorner);
    let _ = writeln!(out, "cellsize {}", grid.cellsize);
    let _ = writeln!(out, "NODATA_value {}", grid.nodata);
    for row in 0..grid.nrows {
        for col in 0..grid.ncols {
            if col > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", grid.get(row, col));
        }
        out.push('\n');
    }
    out
}
