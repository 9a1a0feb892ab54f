use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{Codebook, CodebookMeta};
use crate::error::{Error, Result};
use crate::geometry::RotationGrid;

const MAGIC: &[u8; 4] = b"ICBK";
const VERSION: u32 = 1;

fn format_err(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "codebook file",
        detail: detail.into(),
    }
}

impl Codebook {
    /// Write the binary codebook format: magic, version, grid step in
    /// milli-degrees, row count, dimension, `f32` rows, then a JSON trailer.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        write(MAGIC)?;
        write(&VERSION.to_le_bytes())?;
        write(&(self.grid.step_deg() * 1000).to_le_bytes())?;
        write(&(self.len() as u32).to_le_bytes())?;
        write(&(self.dim() as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.codes.len() * 4);
        for &x in self.codes.iter() {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
        write(&buf)?;
        write(&serde_json::to_vec(&self.meta)?)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Read a file written by [`Codebook::save`]. Rows are renormalized
    /// after the `f32` round trip.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(format_err("missing ICBK header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let version = word(0);
        if version != VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let step_milli = word(1);
        let (rows, dim) = (word(2) as usize, word(3) as usize);
        if step_milli % 1000 != 0 {
            return Err(format_err(format!("grid step {step_milli} mdeg is not whole degrees")));
        }
        let body = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| format_err("size overflow"))?;
        if bytes.len() < 20 + body {
            return Err(format_err("truncated code matrix"));
        }
        let grid = RotationGrid::new(step_milli / 1000)?;
        let values: Vec<f64> = bytes[20..20 + body]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let mut codes = Array2::from_shape_vec((rows, dim), values)
            .map_err(|e| format_err(e.to_string()))?;
        for mut row in codes.rows_mut() {
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row /= n;
            }
        }
        let meta: CodebookMeta = serde_json::from_slice(&bytes[20 + body..])?;
        if meta.grid_step_deg != grid.step_deg() {
            return Err(format_err("trailer grid step disagrees with header"));
        }
        Codebook::from_parts(grid, codes, meta)
    }
}
