//! File formats: binary screen and field dumps, CSV exports, atomic writes.
//!
//! Binary dumps share a 32-byte little-endian header: an 8-byte magic, the
//! grid size `n` (u64), the grid extent (f64) and one auxiliary f64 (the slab
//! thickness for screens, the propagation distance for fields). The payload
//! is row-major with the first coordinate fastest: `n^2` f64 for screens,
//! `n^2` (re, im) pairs for fields.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::TransverseGrid;
use crate::medium::PhaseScreen;
use crate::timereversal::ImagePoint;
use crate::vec2::Vec2;

pub const SCREEN_MAGIC: &[u8; 8] = b"PTRSCRN1";
pub const FIELD_MAGIC: &[u8; 8] = b"PTRFLD01";
pub const HEADER_BYTES: usize = 32;

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid("path", format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn header(magic: &[u8; 8], grid: &TransverseGrid, aux: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + grid.len() * 16);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(grid.n() as u64).to_le_bytes());
    out.extend_from_slice(&grid.extent().to_le_bytes());
    out.extend_from_slice(&aux.to_le_bytes());
    out
}

pub fn encode_screen(screen: &PhaseScreen) -> Vec<u8> {
    let mut out = header(SCREEN_MAGIC, screen.grid(), screen.delta_z);
    for v in &screen.values.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_field(field: &ComplexField, aux: f64) -> Vec<u8> {
    let mut out = header(FIELD_MAGIC, &field.grid, aux);
    for v in &field.values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

fn f64_at(bytes: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8-byte slice"))
}

fn decode_header(
    path: &Path,
    bytes: &[u8],
    magic: &[u8; 8],
    per_node: usize,
) -> Result<(TransverseGrid, f64)> {
    let bad = |reason: String| Error::BadDump {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_BYTES {
        return Err(bad(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..8] != magic {
        return Err(bad(format!(
            "magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..8]),
            String::from_utf8_lossy(magic)
        )));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8-byte slice")) as usize;
    let grid = TransverseGrid::new(n, f64_at(bytes, 16)).map_err(|e| bad(e.to_string()))?;
    let expected = HEADER_BYTES + n * n * per_node;
    if bytes.len() != expected {
        return Err(bad(format!("{} bytes, expected {expected}", bytes.len())));
    }
    Ok((grid, f64_at(bytes, 24)))
}

pub fn decode_screen(path: &Path, bytes: &[u8]) -> Result<PhaseScreen> {
    let (grid, delta_z) = decode_header(path, bytes, SCREEN_MAGIC, 8)?;
    let mut screen = PhaseScreen::zeros(grid, delta_z);
    for (i, v) in screen.values.values.iter_mut().enumerate() {
        *v = f64_at(bytes, HEADER_BYTES + 8 * i);
    }
    Ok(screen)
}

/// Returns the field and the auxiliary header value.
pub fn decode_field(path: &Path, bytes: &[u8]) -> Result<(ComplexField, f64)> {
    let (grid, aux) = decode_header(path, bytes, FIELD_MAGIC, 16)?;
    let mut field = ComplexField::zeros(grid);
    for (i, v) in field.values.iter_mut().enumerate() {
        let off = HEADER_BYTES + 16 * i;
        *v = Complex64::new(f64_at(bytes, off), f64_at(bytes, off + 8));
    }
    Ok((field, aux))
}

pub fn write_screen(path: &Path, screen: &PhaseScreen) -> Result<()> {
    write_atomic(path, &encode_screen(screen))
}

pub fn read_screen(path: &Path) -> Result<PhaseScreen> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_screen(path, &bytes)
}

pub fn write_field(path: &Path, field: &ComplexField, aux: f64) -> Result<()> {
    write_atomic(path, &encode_field(field, aux))
}

pub fn read_field(path: &Path) -> Result<(ComplexField, f64)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(path, &bytes)
}

/// Shortest round-trip decimal form; never locale dependent.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

pub const CROSS_SECTION_HEADER: &str = "x1,x2,re,im,abs2";

/// The two grid lines through the node nearest `center`: first the line of
/// constant `x2`, then the line of constant `x1`.
pub fn cross_sections_csv(field: &ComplexField, center: Vec2) -> String {
    let grid = field.grid;
    let (c1, c2) = grid.nearest(center);
    let mut s = String::new();
    let _ = writeln!(s, "{CROSS_SECTION_HEADER}");
    let mut row = |i1: usize, i2: usize| {
        let p = grid.point(i1, i2);
        let v = field.at(i1, i2);
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_num(p.x),
            fmt_num(p.y),
            fmt_num(v.re),
            fmt_num(v.im),
            fmt_num(v.norm_sqr())
        );
    };
    for i1 in 0..grid.n() {
        row(i1, c2);
    }
    for i2 in 0..grid.n() {
        row(c1, i2);
    }
    s
}

/// Parses an image points file: CSV rows `b1, b2, weight`. A first row that
/// does not parse as numbers is taken as a header; `#` lines are skipped.
pub fn parse_points(text: &str) -> Result<Vec<ImagePoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid("image", format!("points file: {e}")))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match nums {
            Ok(v) if v.len() == 3 => points.push(ImagePoint {
                b: Vec2::new(v[0], v[1]),
                weight: v[2],
            }),
            Err(_) if i == 0 => continue,
            _ => {
                return Err(Error::invalid(
                    "image",
                    format!("points file row {}: expected `b1, b2, weight`", i + 1),
                ))
            }
        }
    }
    if points.is_empty() {
        return Err(Error::invalid("image", "points file has no rows"));
    }
    Ok(points)
}

pub fn load_points(path: &Path) -> Result<Vec<ImagePoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_points(&text)
}
