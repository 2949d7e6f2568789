//! Fixtures shared by the benchmarks in `benches/`.

use ssl_core::{shapes, GridDomain, SolverConfig};

/// Square, disk and filament rasters of roughly `cells` cells.
pub fn fixtures(cells: usize) -> Vec<(&'static str, GridDomain)> {
    let side = (cells as f64).sqrt().round() as usize;
    let r = (cells as f64 / std::f64::consts::PI).sqrt();
    vec![
        ("square", shapes::rectangle(&[side, side])),
        ("disk", shapes::disk(r)),
        ("filament", shapes::filament(side * 9 / 10, side * 2, 1)),
    ]
}

pub fn solver() -> SolverConfig {
    SolverConfig::default()
}
