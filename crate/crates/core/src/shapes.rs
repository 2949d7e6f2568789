//! Raster generators for the test and experiment corpora.
//!
//! Unless stated otherwise the cell size is chosen so that the occupied
//! measure is exactly 1; normalized eigenvalues do not depend on it.

use crate::grid::{Cell, GridDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_measure(dim: usize, cells: &[Cell]) -> GridDomain {
    let h = (cells.len() as f64).powf(-1.0 / dim as f64);
    GridDomain::from_cell_list(dim, h, cells).expect("generator produced valid cells")
}

fn rect_cells(x0: i64, y0: i64, nx: i64, ny: i64, out: &mut Vec<Cell>) {
    for y in y0..y0 + ny {
        for x in x0..x0 + nx {
            out.push([x, y, 0]);
        }
    }
}

/// `n × n` cells with `h = 1/(n+1)`: the cell-centred discretization of the
/// unit square (its Dirichlet boundary lies half a cell outside the cells).
pub fn unit_square(n: usize) -> GridDomain {
    GridDomain::from_fn(2, 1.0 / (n + 1) as f64, &[n, n], |_| true).expect("valid square")
}

/// `nx × ny` cells (N = 2) or `nx × ny × nz` (N = 3), unit measure.
pub fn rectangle(extent: &[usize]) -> GridDomain {
    let count: usize = extent.iter().product();
    let h = (count as f64).powf(-1.0 / extent.len() as f64);
    GridDomain::from_fn(extent.len(), h, extent, |_| true).expect("valid box")
}

/// Cells whose centres lie within `r` cells of a centre point, unit measure.
pub fn disk(r: f64) -> GridDomain {
    let mut cells = Vec::new();
    disk_cells(0.0, 0.0, r, &mut cells);
    unit_measure(2, &cells)
}

/// The unit-area disk with `h` chosen so that the Dirichlet boundary (half
/// a cell outside the cells within `r` cells of the centre) is the circle.
pub fn unit_area_disk(r: f64) -> GridDomain {
    let mut cells = Vec::new();
    disk_cells(0.0, 0.0, r, &mut cells);
    let h = 1.0 / (std::f64::consts::PI.sqrt() * (r + 0.5));
    GridDomain::from_cell_list(2, h, &cells).expect("valid disk")
}

fn disk_cells(cx: f64, cy: f64, r: f64, out: &mut Vec<Cell>) {
    let lo_x = (cx - r).floor() as i64 - 1;
    let hi_x = (cx + r).ceil() as i64 + 1;
    let lo_y = (cy - r).floor() as i64 - 1;
    let hi_y = (cy + r).ceil() as i64 + 1;
    for y in lo_y..hi_y {
        for x in lo_x..hi_x {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if dx * dx + dy * dy < r * r {
                out.push([x, y, 0]);
            }
        }
    }
}

/// Ball of radius `r` cells in 3-D, unit measure.
pub fn ball3(r: f64) -> GridDomain {
    let n = (2.0 * r).ceil() as i64 + 2;
    let c = n as f64 / 2.0;
    let mut cells = Vec::new();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let d = [x, y, z].map(|v| v as f64 + 0.5 - c);
                if d.iter().map(|v| v * v).sum::<f64>() < r * r {
                    cells.push([x, y, z]);
                }
            }
        }
    }
    unit_measure(3, &cells)
}

/// Two `side × side` squares joined by a horizontal neck of `neck_len`
/// cells and thickness `neck_thick` cells, centred vertically.
pub fn dumbbell(side: usize, neck_len: usize, neck_thick: usize) -> GridDomain {
    let (s, l, t) = (side as i64, neck_len as i64, neck_thick as i64);
    let mut cells = Vec::new();
    rect_cells(0, 0, s, s, &mut cells);
    rect_cells(s, (s - t) / 2, l, t, &mut cells);
    rect_cells(s + l, 0, s, s, &mut cells);
    unit_measure(2, &cells)
}

/// A `side × side` square with a filament of `len × thick` cells attached
/// to the middle of its left edge.
pub fn filament(side: usize, len: usize, thick: usize) -> GridDomain {
    let (s, l, t) = (side as i64, len as i64, thick as i64);
    let mut cells = Vec::new();
    rect_cells(0, (s - t) / 2, l, t, &mut cells);
    rect_cells(l, 0, s, s, &mut cells);
    unit_measure(2, &cells)
}

/// A `core × core` square with four arms of `arm_len × arm_thick` cells.
pub fn plus_sign(core: usize, arm_len: usize, arm_thick: usize) -> GridDomain {
    let (c, l, t) = (core as i64, arm_len as i64, arm_thick as i64);
    let off = (c - t) / 2;
    let mut cells = Vec::new();
    rect_cells(0, 0, c, c, &mut cells);
    rect_cells(-l, off, l, t, &mut cells);
    rect_cells(c, off, l, t, &mut cells);
    rect_cells(off, -l, t, l, &mut cells);
    rect_cells(off, c, t, l, &mut cells);
    unit_measure(2, &cells)
}

/// `count` disjoint `side × side` squares in a row, `gap` empty columns apart.
pub fn separated_squares(count: usize, side: usize, gap: usize) -> GridDomain {
    let mut cells = Vec::new();
    for i in 0..count as i64 {
        rect_cells(i * (side + gap) as i64, 0, side as i64, side as i64, &mut cells);
    }
    unit_measure(2, &cells)
}

/// Two disjoint disks of radius `r` cells, `gap` cells apart.
pub fn two_disks(r: f64, gap: f64) -> GridDomain {
    let mut cells = Vec::new();
    disk_cells(0.0, 0.0, r, &mut cells);
    disk_cells(2.0 * r + gap, 0.0, r, &mut cells);
    unit_measure(2, &cells)
}

/// Random connected blob: a union of overlapping disks and axis-aligned
/// ellipses, each centred inside the previous pieces. Roughly `target`
/// cells; the largest component is kept.
pub fn blob(seed: u64, target: usize) -> GridDomain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pieces = rng.gen_range(2..=5);
    let base = (target as f64 / (pieces as f64 * std::f64::consts::PI)).sqrt();
    let mut cells: Vec<Cell> = Vec::new();
    let (mut cx, mut cy) = (0.0f64, 0.0f64);
    for _ in 0..pieces {
        let ax = base * rng.gen_range(0.7..1.4);
        let ay = base * rng.gen_range(0.7..1.4);
        let lo_x = (cx - ax).floor() as i64 - 1;
        let hi_x = (cx + ax).ceil() as i64 + 1;
        let lo_y = (cy - ay).floor() as i64 - 1;
        let hi_y = (cy + ay).ceil() as i64 + 1;
        for y in lo_y..hi_y {
            for x in lo_x..hi_x {
                let dx = (x as f64 + 0.5 - cx) / ax;
                let dy = (y as f64 + 0.5 - cy) / ay;
                if dx * dx + dy * dy < 1.0 {
                    cells.push([x, y, 0]);
                }
            }
        }
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let reach = rng.gen_range(0.5..1.0);
        cx += reach * ax * angle.cos();
        cy += reach * ay * angle.sin();
    }
    let raw = GridDomain::from_cell_list(2, 1.0, &cells).expect("valid cells");
    let largest = raw
        .components()
        .into_iter()
        .max_by_key(|c| c.len())
        .expect("blob is non-empty");
    unit_measure(2, &largest.cell_vec())
}
