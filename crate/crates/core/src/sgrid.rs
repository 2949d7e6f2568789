//! The plain-text `SGRID v1` raster format.
//!
//! ```text
//! SGRID 1
//! <N> <h>
//! <extent_x> <extent_y> [<extent_z>]
//! <extent_y rows of extent_x characters from {0,1}; row 0 = smallest y>
//! ```
//!
//! For `N = 3` the z-slices (smallest z first) are separated by blank lines.
//! Reading is whitespace tolerant; writing is canonical, so
//! `write(read(write(d)))` is byte-identical to `write(d)`.

use crate::error::{Error, Result};
use crate::grid::{GridDomain, GridSpec};
use std::fmt::Write as _;

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Parses an SGRID document. Errors carry the 1-based line and column of the
/// first offending character.
pub fn parse(text: &str) -> Result<GridDomain> {
    // (line number, column of first non-blank char, trimmed content)
    let mut lines = text.lines().enumerate().map(|(i, l)| {
        let start = l.len() - l.trim_start().len();
        (i + 1, start + 1, l.trim())
    });

    let mut next_nonblank = |what: &str| -> Result<(usize, usize, &str)> {
        for (n, col, l) in lines.by_ref() {
            if !l.is_empty() {
                return Ok((n, col, l));
            }
        }
        Err(parse_err(text.lines().count().max(1), 1, format!("unexpected end of input, expected {what}")))
    };

    let (n, col, magic) = next_nonblank("header")?;
    let mut fields = magic.split_whitespace();
    if fields.next() != Some("SGRID") || fields.next() != Some("1") || fields.next().is_some() {
        return Err(parse_err(n, col, "expected header `SGRID 1`"));
    }

    let (n, col, dims) = next_nonblank("`N h` line")?;
    let fields: Vec<&str> = dims.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(parse_err(n, col, "expected `N h`"));
    }
    let dim: usize = fields[0]
        .parse()
        .map_err(|_| parse_err(n, col, format!("bad dimension `{}`", fields[0])))?;
    let h: f64 = fields[1]
        .parse()
        .map_err(|_| parse_err(n, col, format!("bad cell size `{}`", fields[1])))?;
    if dim != 2 && dim != 3 {
        return Err(parse_err(n, col, format!("dimension {dim} not in {{2, 3}}")));
    }

    let (n, col, ext) = next_nonblank("extents line")?;
    let extent: Vec<usize> = ext
        .split_whitespace()
        .map(|f| f.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(n, col, "bad extent"))?;
    if extent.len() != dim {
        return Err(parse_err(n, col, format!("expected {dim} extents, got {}", extent.len())));
    }
    let spec = GridSpec::new(dim, h, &vec![0; dim], &extent)
        .map_err(|e| parse_err(n, col, e.to_string()))?;

    let (ex, ey) = (extent[0], extent[1]);
    let ez = if dim == 3 { extent[2] } else { 1 };
    let mut cells = Vec::new();
    for z in 0..ez {
        for y in 0..ey {
            let (n, col, row) = next_nonblank("occupancy row")?;
            let mut count = 0usize;
            for (i, ch) in row.chars().enumerate() {
                if ch.is_whitespace() {
                    continue;
                }
                let x = count;
                count += 1;
                match ch {
                    '0' => {}
                    '1' if x < ex => cells.push([x as i64, y as i64, z as i64]),
                    '1' => {}
                    _ => return Err(parse_err(n, col + i, format!("unexpected character `{ch}`"))),
                }
            }
            if count != ex {
                return Err(parse_err(n, col, format!("expected {ex} cells in row, found {count}")));
            }
        }
    }
    if let Some((n, col, _)) = lines.find(|(_, _, l)| !l.is_empty()) {
        return Err(parse_err(n, col, "trailing content after last row"));
    }
    GridDomain::from_cells(spec, cells)
}

/// Canonical SGRID text for the domain's box. The origin is not stored.
pub fn to_string(d: &GridDomain) -> String {
    let spec = d.spec();
    let dim = spec.dim();
    let ext = spec.extent();
    let mut out = String::new();
    let _ = writeln!(out, "SGRID 1");
    let _ = writeln!(out, "{} {}", dim, spec.cell_size());
    let ext_line: Vec<String> = ext.iter().map(|e| e.to_string()).collect();
    let _ = writeln!(out, "{}", ext_line.join(" "));
    let ez = if dim == 3 { ext[2] } else { 1 };
    let o = spec.origin();
    for z in 0..ez {
        if z > 0 {
            out.push('\n');
        }
        for y in 0..ext[1] {
            for x in 0..ext[0] {
                let mut c = [o[0] + x as i64, o[1] + y as i64, 0];
                if dim == 3 {
                    c[2] = o[2] + z as i64;
                }
                out.push(if d.contains(&c) { '1' } else { '0' });
            }
            out.push('\n');
        }
    }
    out
}

pub fn read_file(path: &std::path::Path) -> Result<GridDomain> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| parse_err(0, 0, format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_a_small_grid() {
        let d = parse("SGRID 1\n2 0.5\n3 2\n110\n011\n").unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.contains(&[0, 0, 0]));
        assert!(d.contains(&[2, 1, 0]));
        assert!(!d.contains(&[2, 0, 0]));
        assert_eq!(d.measure(), 1.0);
    }

    #[test]
    fn tolerates_whitespace_and_missing_trailing_newline() {
        let d = parse("  SGRID   1 \n\n 2   0.25\n2 2\n 1 1\n10").unwrap();
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn reads_three_dimensional_slices() {
        let d = parse("SGRID 1\n3 1\n2 1 2\n10\n\n01\n").unwrap();
        assert!(d.contains(&[0, 0, 0]));
        assert!(d.contains(&[1, 0, 1]));
        assert_eq!(d.len(), 2);
        assert_eq!(parse(&to_string(&d)).unwrap(), d);
    }

    #[test]
    fn reports_first_offense() {
        let err = parse("SGRID 1\n2 1\n3 2\n101\n1x1\n").unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 5,
                column: 2,
                message: "unexpected character `x`".into()
            }
        );
        assert!(matches!(parse("SGRID 2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("SGRID 1\n2 1\n3 2\n101\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("SGRID 1\n2 1\n3 1\n1011\n"), Err(Error::Parse { line: 4, .. })));
    }

    proptest! {
        #[test]
        fn write_read_is_identity(nx in 1usize..9, ny in 1usize..9, bits in proptest::collection::vec(any::<bool>(), 64), h in 0.01f64..2.0) {
            let d = GridDomain::from_fn(2, h, &[nx, ny], |c| bits[(c[0] * 8 + c[1]) as usize]).unwrap();
            let text = to_string(&d);
            let back = parse(&text).unwrap();
            prop_assert_eq!(&back, &d);
            prop_assert_eq!(to_string(&back), text);
        }
    }
}
