//! Frame and image file formats.
//!
//! * RFF1: ASCII header `RFF1 <rows> <cols>\n` followed by `rows*cols`
//!   little-endian IEEE-754 `f32` values in row-major order.
//! * CSV: one grid row per line, comma-separated decimals.
//! * PGM: binary 8-bit grayscale (`P5`), linear map of `[lo, hi]` to 0..=255.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

const RFF_MAGIC: &str = "RFF1";

pub fn write_rff<W: Write>(mut w: W, grid: &Grid) -> Result<()> {
    writeln!(w, "{RFF_MAGIC} {} {}", grid.rows(), grid.cols())?;
    let mut buf = Vec::with_capacity(grid.len() * 4);
    for &v in grid.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_rff<R: Read>(r: R) -> Result<Grid> {
    let mut reader = BufReader::new(r);
    let mut header = Vec::new();
    reader.read_until(b'\n', &mut header)?;
    let header = std::str::from_utf8(&header).map_err(|_| rff_err("header is not ASCII"))?;
    let mut fields = header.trim_end_matches('\n').split(' ');
    if fields.next() != Some(RFF_MAGIC) {
        return Err(rff_err("missing RFF1 magic"));
    }
    let mut dim = || -> Result<usize> {
        fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| rff_err("bad dimensions in header"))
    };
    let rows = dim()?;
    let cols = dim()?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| rff_err("dimensions overflow"))?;
    let mut bytes = vec![0u8; count * 4];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| rff_err("truncated sample data"))?;
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(rff_err("trailing bytes after sample data"));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Grid::new(rows, cols, data)
}

fn rff_err(reason: &str) -> Error {
    Error::Format {
        format: "RFF1",
        reason: reason.to_string(),
    }
}

pub fn write_csv<W: Write>(mut w: W, grid: &Grid) -> Result<()> {
    let mut line = String::new();
    for i in 0..grid.rows() {
        line.clear();
        for (j, v) in grid.row(i).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Grid> {
    let reader = BufReader::new(r);
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| Error::Format {
                format: "CSV",
                reason: format!("line {}: cannot parse {field:?}", lineno + 1),
            })?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::Format {
                    format: "CSV",
                    reason: format!("line {}: expected {c} fields, got {width}", lineno + 1),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format {
        format: "CSV",
        reason: "no data".into(),
    })?;
    Grid::new(rows, cols, data)
}

/// Maps `[lo, hi]` linearly onto 0..=255, clamping values outside the range.
pub fn write_pgm<W: Write>(mut w: W, grid: &Grid, lo: f64, hi: f64) -> Result<()> {
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "PGM range must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    write!(w, "P5\n{} {}\n255\n", grid.cols(), grid.rows())?;
    let pixels: Vec<u8> = grid
        .as_slice()
        .iter()
        .map(|&v| {
            let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            (t * 255.0).round() as u8
        })
        .collect();
    w.write_all(&pixels)?;
    Ok(())
}

pub fn save_rff(path: impl AsRef<Path>, grid: &Grid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_rff(&mut w, grid)?;
    w.flush()?;
    Ok(())
}

pub fn load_rff(path: impl AsRef<Path>) -> Result<Grid> {
    read_rff(File::open(path)?)
}

pub fn save_csv(path: impl AsRef<Path>, grid: &Grid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(&mut w, grid)?;
    w.flush()?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Grid> {
    read_csv(File::open(path)?)
}

pub fn save_pgm(path: impl AsRef<Path>, grid: &Grid, lo: f64, hi: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm(&mut w, grid, lo, hi)?;
    w.flush()?;
    Ok(())
}

/// Loads a grid from `.rff` (RFF1) or any other extension as CSV.
pub fn load_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("rff") => load_rff(path),
        _ => load_csv(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rff_header_layout() {
        let g = Grid::new(2, 3, vec![1.0, -2.0, 0.5, 0.0, 3.25, -1.5]).unwrap();
        let mut buf = Vec::new();
        write_rff(&mut buf, &g).unwrap();
        assert!(buf.starts_with(b"RFF1 2 3\n"));
        assert_eq!(buf.len(), 9 + 6 * 4);
        assert_eq!(&buf[9..13], &1.0f32.to_le_bytes());
        assert_eq!(&buf[13..17], &(-2.0f32).to_le_bytes());
        assert_eq!(read_rff(&buf[..]).unwrap(), g);
    }

    #[test]
    fn rff_rejects_bad_input() {
        assert!(read_rff(&b"RFF2 1 1\n\0\0\0\0"[..]).is_err());
        assert!(read_rff(&b"RFF1 2 2\n\0\0\0\0"[..]).is_err());
        assert!(read_rff(&b"RFF1 1 1\n\0\0\0\0\0"[..]).is_err());
        assert!(read_rff(&b"RFF1 x 1\n\0\0\0\0"[..]).is_err());
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        assert!(read_csv(&b"1,2\n3\n"[..]).is_err());
        assert!(read_csv(&b"1,abc\n"[..]).is_err());
        assert!(read_csv(&b""[..]).is_err());
    }

    #[test]
    fn pgm_maps_range() {
        let g = Grid::new(1, 4, vec![-1.0, 0.0, 0.5, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_pgm(&mut buf, &g, 0.0, 1.0).unwrap();
        let header = b"P5\n4 1\n255\n";
        assert!(buf.starts_with(header));
        assert_eq!(&buf[header.len()..], &[0, 0, 128, 255]);
        assert!(write_pgm(Vec::new(), &g, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn csv_roundtrip_is_exact(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let mut s = seed;
            let g = Grid::from_fn(rows, cols, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from_bits((s >> 12) | 0x3ff0_0000_0000_0000) - 1.5
            });
            let mut buf = Vec::new();
            write_csv(&mut buf, &g).unwrap();
            prop_assert_eq!(read_csv(&buf[..]).unwrap(), g);
        }

        #[test]
        fn rff_roundtrip_within_f32(values in proptest::collection::vec(-1e3f64..1e3, 4..40)) {
            let cols = 2;
            let rows = values.len() / cols;
            let g = Grid::new(rows, cols, values[..rows * cols].to_vec()).unwrap();
            let mut buf = Vec::new();
            write_rff(&mut buf, &g).unwrap();
            let back = read_rff(&buf[..]).unwrap();
            for (a, b) in g.as_slice().iter().zip(back.as_slice()) {
                prop_assert_eq!(*b, *a as f32 as f64);
            }
        }
    }
}
