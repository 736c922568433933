//! Regenerates the checked-in `demo/` inputs: seven factor grids and a
//! labeled sample table drawn from them. Deterministic, so a rerun leaves
//! the files byte-identical.
//!
//! ```text
//! cargo run -p susmap-cli --example generate_demo
//! ```

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use susmap_cli::pipeline::sanitize;
use susmap_core::data::{factor_catalog, write_factor_table_csv};
use susmap_core::raster::write_ascii_grid;
use susmap_core::synth;

const FACTORS: [&str; 7] = [
    "Slope",
    "Lithology",
    "TWI",
    "Distance to stream",
    "NDVI",
    "Distance to road",
    "Peak rainfall intensity",
];

fn main() -> Result<()> {
    let root = Path::new("demo");
    let grids_dir = root.join("grids");
    fs::create_dir_all(&grids_dir).context("creating demo/grids")?;

    let catalog = factor_catalog();
    let metas: Vec<_> = FACTORS
        .iter()
        .map(|name| {
            catalog
                .iter()
                .find(|m| m.name == *name)
                .cloned()
                .with_context(|| format!("{name} is not a cataloged factor"))
        })
        .collect::<Result<_>>()?;

    let grids = synth::factor_grid_stack(&metas, 48, 36, 4242);
    for (meta, grid) in metas.iter().zip(&grids) {
        let path = grids_dir.join(format!("{}.asc", sanitize(&meta.name)));
        write_ascii_grid(grid, &path).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }

    let samples = synth::sample_cells(&metas, &grids, 280, 4242);
    let samples_path = root.join("samples.csv");
    write_factor_table_csv(&samples, &samples_path)
        .with_context(|| format!("writing {}", samples_path.display()))?;
    println!(
        "wrote {} ({} rows, {} factors)",
        samples_path.display(),
        280,
        metas.len()
    );
    Ok(())
}
