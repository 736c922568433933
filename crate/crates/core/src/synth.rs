//! Deterministic synthetic datasets for benchmarks, demos, and tests.
//!
//! Real inventories cannot ship with the crate, so these generators build
//! seeded stand-ins with known structure: a full-catalog benchmark whose
//! response lives entirely in the triggering factors (with deliberately
//! nonlinear terms), a small table where exactly three factors carry
//! signal at staggered strengths, and smooth raster stacks for exercising
//! the mapping path end to end.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{factor_catalog, FactorKind, FactorMeta, FactorTable};
use crate::raster::{RasterGrid, DEFAULT_NODATA};

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Category counts used when a catalog factor is categorical: codes are
/// drawn uniformly from `0..count`.
fn category_count(name: &str) -> usize {
    match name {
        "Aspect" => 9,
        "Lithology" => 5,
        "Landform" => 4,
        "Land use" => 6,
        _ => 5,
    }
}

/// Full-catalog benchmark table: `n` samples over all 19 catalog factors,
/// labels drawn from a response planted **only** in the nine triggering
/// factors. The response mixes weak linear terms with strong curvature
/// (slope², TWI²), a non-monotone lithology code effect, and a
/// peak-×-average rainfall product, so margin over a linear model comes
/// from the nonlinear structure.
pub fn benchmark_table(n: usize, seed: u64) -> FactorTable {
    let metas = factor_catalog();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lithology_effect = [-0.45, 0.55, -0.15, 0.35, -0.65];

    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = vec![0.0; metas.len()];
        for (j, meta) in metas.iter().enumerate() {
            row[j] = match meta.kind {
                FactorKind::Continuous => StandardNormal.sample(&mut rng),
                FactorKind::Categorical => {
                    rng.gen_range(0..category_count(&meta.name)) as f64
                }
            };
        }
        let slope = row[1];
        let lith = row[7] as usize;
        let fault = row[8];
        let twi = row[9];
        let stream = row[13];
        let ndvi = row[15];
        let road = row[16];
        let peak = row[17];
        let avg = row[18];
        let z = 0.35 * slope - 0.30 * fault + 0.30 * twi - 0.25 * stream + 0.25 * ndvi
            - 0.25 * road
            + lithology_effect[lith]
            + 1.00 * (slope * slope - 1.0)
            + 0.80 * (twi * twi - 1.0)
            + 1.20 * peak * avg;
        let label = u8::from(rng.gen::<f64>() < sigmoid(z));
        rows.push(row);
        labels.push(label);
    }
    FactorTable::from_rows(metas, &rows, Some(labels)).expect("generated table is well-formed")
}

/// Seven standard-normal factors where only the first three drive the
/// label, with strengths 2.2, 1.5, and 0.9 plus a mild interaction
/// between the two strongest. The rest are pure noise.
pub fn planted_three_table(n: usize, seed: u64) -> FactorTable {
    let metas: Vec<FactorMeta> = (1..=7)
        .map(|i| FactorMeta::continuous(&format!("x{i}"), false, ""))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..7).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z = 2.2 * row[0] + 1.5 * row[1] + 0.9 * row[2] + 0.4 * row[0] * row[1];
        let label = u8::from(rng.gen::<f64>() < sigmoid(z));
        rows.push(row);
        labels.push(label);
    }
    FactorTable::from_rows(metas, &rows, Some(labels)).expect("generated table is well-formed")
}

/// One smooth seeded raster per factor, all sharing geometry (origin 0,0,
/// cell size 30) and a common nodata mask so a cell is either valid in
/// every layer or in none. Categorical factors hold integer codes.
pub fn factor_grid_stack(
    metas: &[FactorMeta],
    ncols: usize,
    nrows: usize,
    seed: u64,
) -> Vec<RasterGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grids = Vec::with_capacity(metas.len());
    for meta in metas {
        let phase_x: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let phase_y: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let freq_x: f64 = rng.gen_range(0.15..0.45);
        let freq_y: f64 = rng.gen_range(0.10..0.40);
        let scale: f64 = rng.gen_range(0.8..2.5);
        let shift: f64 = rng.gen_range(-1.0..1.0);
        let mut values = Vec::with_capacity(ncols * nrows);
        for r in 0..nrows {
            for c in 0..ncols {
                if nodata_cell(r, c) {
                    values.push(DEFAULT_NODATA);
                    continue;
                }
                let noise: f64 = StandardNormal.sample(&mut rng);
                let base = (freq_x * c as f64 + phase_x).sin()
                    + (freq_y * r as f64 + phase_y).cos()
                    + 0.3 * noise;
                let v = match meta.kind {
                    FactorKind::Continuous => scale * base + shift,
                    FactorKind::Categorical => {
                        let k = category_count(&meta.name) as f64;
                        ((base + 2.3) / 4.6 * k).floor().clamp(0.0, k - 1.0)
                    }
                };
                values.push(v);
            }
        }
        grids.push(
            RasterGrid::new(ncols, nrows, 0.0, 0.0, 30.0, DEFAULT_NODATA, values)
                .expect("generated grid is well-formed"),
        );
    }
    grids
}

/// Shared nodata mask for [`factor_grid_stack`].
fn nodata_cell(row: usize, col: usize) -> bool {
    (row * 31 + col * 17) % 53 == 0
}

/// Draws `n` labelled samples from valid cells of a grid stack, labels
/// synthesized from the first one or two layers so bivariate statistics
/// and classifiers have real structure to find. Coordinates are cell
/// centers, so samples align with the rasters they came from.
pub fn sample_cells(
    metas: &[FactorMeta],
    grids: &[RasterGrid],
    n: usize,
    seed: u64,
) -> FactorTable {
    assert_eq!(metas.len(), grids.len(), "one grid per factor");
    let first = &grids[0];
    let valid: Vec<(usize, usize)> = first
        .iter_valid()
        .map(|(r, c, _)| (r, c))
        .collect();
    let stats = |g: &RasterGrid| {
        let vals: Vec<f64> = g.iter_valid().map(|(_, _, v)| v).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        (mean, var.sqrt().max(1e-12))
    };
    let (m0, s0) = stats(&grids[0]);
    let second = grids.get(1).map(stats);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut coords = Vec::with_capacity(n);
    for _ in 0..n {
        let (r, c) = valid[rng.gen_range(0..valid.len())];
        let row: Vec<f64> = grids.iter().map(|g| g.get(r, c)).collect();
        let mut z = 1.2 * (row[0] - m0) / s0;
        if let Some((m1, s1)) = second {
            z -= 0.8 * (row[1] - m1) / s1;
        }
        labels.push(u8::from(rng.gen::<f64>() < sigmoid(z)));
        coords.push(first.cell_center(r, c));
        rows.push(row);
    }
    let values: Vec<f64> = rows.into_iter().flatten().collect();
    FactorTable::new(metas.to_vec(), values, Some(labels), Some(coords))
        .expect("generated table is well-formed")
}
