//! CSV form of a persistence diagram.
//!
//! Header `dim,birth,death,bx,by[,bz],dx,dy[,dz]`; coordinates are source
//! pixel indices in axis order (x = axis 0), left empty for frame cells and
//! for the death of essential classes, whose death is written `inf`.

use std::fmt::Write as _;

use super::{PersistenceDiagram, PersistencePoint};
use crate::error::{Error, Result};

const AXES: [&str; 3] = ["x", "y", "z"];

/// Formats `v` with 9 significant digits, trailing zeros removed
/// (the `%.9g` convention).
pub fn format_sig9(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_diagram_csv(diagram: &PersistenceDiagram, ndim: usize) -> String {
    let mut out = String::from("dim,birth,death");
    for prefix in ["b", "d"] {
        for axis in AXES.iter().take(ndim) {
            out.push(',');
            out.push_str(prefix);
            out.push_str(axis);
        }
    }
    out.push('\n');
    for p in diagram.points() {
        let _ = write!(out, "{},{},{}", p.dim, format_sig9(p.birth), format_sig9(p.death));
        for pixel in [p.birth_pixel, p.death_pixel] {
            let coord = pixel.and_then(|px| diagram.pixel_coord(px));
            for axis in 0..ndim {
                out.push(',');
                if let Some(c) = &coord {
                    let _ = write!(out, "{}", c[axis]);
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Parses the output of [`write_diagram_csv`]. Pixel coordinates are kept
/// only when `shape` is given.
pub fn read_diagram_csv(text: &str, shape: Option<&crate::grid::Shape>) -> Result<PersistenceDiagram> {
    let bad = |line: usize, reason: String| Error::param(format!("diagram CSV line {line}: {reason}"));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[..3] != ["dim", "birth", "death"] {
        return Err(bad(1, "header must start with dim,birth,death".into()));
    }
    let ndim = (cols.len() - 3) / 2;
    if cols.len() != 3 + 2 * ndim {
        return Err(bad(1, "unbalanced coordinate columns".into()));
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(bad(i + 1, format!("expected {} fields", cols.len())));
        }
        let num = |s: &str| -> Result<f64> {
            match s {
                "inf" => Ok(f64::INFINITY),
                _ => s.parse().map_err(|_| bad(i + 1, format!("bad number {s:?}"))),
            }
        };
        let dim: usize = fields[0]
            .parse()
            .map_err(|_| bad(i + 1, format!("bad dim {:?}", fields[0])))?;
        let mut p = PersistencePoint::bare(dim, num(fields[1])?, num(fields[2])?);
        if p.death < p.birth {
            return Err(bad(i + 1, "death precedes birth".into()));
        }
        if let Some(shape) = shape {
            let pixel = |chunk: &[&str]| -> Result<Option<usize>> {
                if chunk.iter().all(|s| s.is_empty()) {
                    return Ok(None);
                }
                let c: Vec<usize> = chunk
                    .iter()
                    .map(|s| s.parse().map_err(|_| bad(i + 1, format!("bad coordinate {s:?}"))))
                    .collect::<Result<_>>()?;
                if c.len() != shape.ndim() || c.iter().zip(shape.dims()).any(|(a, b)| a >= b) {
                    return Err(bad(i + 1, "coordinate outside grid".into()));
                }
                Ok(Some(shape.index(&c)))
            };
            p.birth_pixel = pixel(&fields[3..3 + ndim])?;
            p.death_pixel = pixel(&fields[3 + ndim..])?;
        }
        points.push(p);
    }
    let diagram = PersistenceDiagram::from_points(points);
    Ok(match shape {
        Some(s) => diagram.with_source_shape(s.clone()),
        None => diagram,
    })
}
