//! Binary field dumps: one JSON header line, then the raw values as
//! little-endian `f64` in row-major order. Matrix fields store `(re, im)`
//! per entry with index order `(point, i, j)`.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::spectral::MatrixField;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub grid: TorusGrid,
}

impl DumpHeader {
    fn new(shape: Vec<usize>, grid: TorusGrid) -> Self {
        Self {
            shape,
            dtype: "f64".into(),
            byte_order: "little".into(),
            layout: "row-major".into(),
            grid,
        }
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

fn grid_shape(grid: &TorusGrid) -> Vec<usize> {
    vec![grid.points_per_axis; grid.real_dim()]
}

fn write_raw(path: &Path, header: &DumpHeader, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let line = serde_json::to_string(header).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w, "{line}").map_err(io)?;
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_scalar(path: &Path, f: &ScalarField) -> Result<()> {
    let header = DumpHeader::new(grid_shape(&f.grid), f.grid);
    write_raw(path, &header, f.values.iter().copied())
}

pub fn write_matrix(path: &Path, m: &MatrixField) -> Result<()> {
    let n = m.grid.complex_dim;
    let mut shape = grid_shape(&m.grid);
    shape.extend([n, n, 2]);
    let header = DumpHeader::new(shape, m.grid);
    let values = m.samples.iter().flat_map(move |s| {
        (0..n * n).flat_map(move |e| {
            let z = s.get(e / n, e % n);
            [z.re, z.im]
        })
    });
    write_raw(path, &header, values)
}

/// Reads any dump back as its header and flat values.
pub fn read(path: &Path) -> Result<(DumpHeader, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut line = String::new();
    r.read_line(&mut line).map_err(io)?;
    let header: DumpHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Io(e.to_string()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io)?;
    let count: usize = header.shape.iter().product();
    if bytes.len() != 8 * count {
        return Err(Error::Io(format!(
            "expected {} payload bytes, found {}",
            8 * count,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, values))
}
