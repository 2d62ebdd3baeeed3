//! Grids, matrices and their on-disk formats.
//!
//! Binary format: u32 rows, u32 cols (little endian), then rows·cols
//! little-endian f32 values in row-major order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

fn io_err(e: impl std::fmt::Display) -> SimError {
    SimError::Config(format!("I/O: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(SimError::Domain(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f32) -> Matrix {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Matrix {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    /// Copy of the `rows × cols` sub-block at (r0, c0).
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(rows * cols);
        for r in r0..r0 + rows {
            out.extend_from_slice(&self.data[r * self.cols + c0..r * self.cols + c0 + cols]);
        }
        out
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, rows: usize, cols: usize, vals: &[f32]) {
        for r in 0..rows {
            let dst = (r0 + r) * self.cols + c0;
            self.data[dst..dst + cols].copy_from_slice(&vals[r * cols..(r + 1) * cols]);
        }
    }

    pub fn write_bin<W: Write>(&self, out: W) -> Result<()> {
        write_bin(out, self.rows, self.cols, &self.data)
    }

    pub fn read_bin<R: Read>(input: R) -> Result<Matrix> {
        let (rows, cols, data) = read_bin(input)?;
        Matrix::from_vec(rows, cols, data)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, self.rows, self.cols, &self.data)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Matrix> {
        let (rows, cols, data) = read_csv(input)?;
        Matrix::from_vec(rows, cols, data)
    }
}

pub fn write_bin<W: Write>(mut out: W, rows: usize, cols: usize, data: &[f32]) -> Result<()> {
    out.write_all(&(rows as u32).to_le_bytes()).map_err(io_err)?;
    out.write_all(&(cols as u32).to_le_bytes()).map_err(io_err)?;
    for v in data {
        out.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_bin<R: Read>(mut input: R) -> Result<(usize, usize, Vec<f32>)> {
    let mut hdr = [0u8; 8];
    input.read_exact(&mut hdr).map_err(io_err)?;
    let rows = u32::from_le_bytes(hdr[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(hdr[4..8].try_into().unwrap()) as usize;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(io_err)?;
    if bytes.len() != rows * cols * 4 {
        return Err(SimError::Domain(format!(
            "expected {} payload bytes for {rows}x{cols}, found {}",
            rows * cols * 4,
            bytes.len()
        )));
    }
    Ok((rows, cols, crate::ecore::bytes_to_f32s(&bytes)))
}

pub fn write_csv<W: Write>(out: W, rows: usize, cols: usize, data: &[f32]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for r in 0..rows {
        w.write_record(data[r * cols..(r + 1) * cols].iter().map(|v| v.to_string()))
            .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_csv<R: Read>(input: R) -> Result<(usize, usize, Vec<f32>)> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = 0;
    for rec in rd.records() {
        let rec = rec.map_err(io_err)?;
        if rows == 0 {
            cols = rec.len();
        } else if rec.len() != cols {
            return Err(SimError::Domain("ragged CSV rows".into()));
        }
        for f in rec.iter() {
            data.push(f.trim().parse::<f32>().map_err(io_err)?);
        }
        rows += 1;
    }
    Ok((rows, cols, data))
}

/// Stencil grid: `rows × cols` interior points surrounded by a one-point
/// boundary ring. Storage is the padded `(rows+2) × (cols+2)` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize) -> Result<Grid> {
        if rows == 0 || cols == 0 {
            return Err(SimError::Domain(format!("grid needs a non-empty interior, got {rows}x{cols}")));
        }
        Ok(Grid {
            rows,
            cols,
            data: vec![0.0; (rows + 2) * (cols + 2)],
        })
    }

    /// Fills every point of the padded array (ring included) from `f(i, j)`
    /// where `i` in 0..rows+2 and `j` in 0..cols+2.
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f32) -> Result<Grid> {
        let mut g = Grid::new(rows, cols)?;
        let pitch = cols + 2;
        for i in 0..rows + 2 {
            for j in 0..pitch {
                g.data[i * pitch + j] = f(i, j);
            }
        }
        Ok(g)
    }

    pub fn pitch(&self) -> usize {
        self.cols + 2
    }

    /// Value at padded coordinates.
    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.pitch() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        let p = self.pitch();
        self.data[i * p + j] = v;
    }

    pub fn interior(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for i in 1..=self.rows {
            out.extend((1..=self.cols).map(|j| self.at(i, j)));
        }
        out
    }

    pub fn write_bin<W: Write>(&self, out: W) -> Result<()> {
        write_bin(out, self.rows + 2, self.cols + 2, &self.data)
    }

    pub fn read_bin<R: Read>(input: R) -> Result<Grid> {
        let (r, c, data) = read_bin(input)?;
        if r < 3 || c < 3 {
            return Err(SimError::Domain("padded grid must be at least 3x3".into()));
        }
        Ok(Grid {
            rows: r - 2,
            cols: c - 2,
            data,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, self.rows + 2, self.cols + 2, &self.data)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Grid> {
        let (r, c, data) = read_csv(input)?;
        if r < 3 || c < 3 {
            return Err(SimError::Domain("padded grid must be at least 3x3".into()));
        }
        Ok(Grid {
            rows: r - 2,
            cols: c - 2,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_bin_round_trip() {
        let m = Matrix::from_fn(3, 5, |i, j| (i * 10 + j) as f32 - 0.5);
        let mut buf = Vec::new();
        m.write_bin(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 15 * 4);
        assert_eq!(Matrix::read_bin(&buf[..]).unwrap(), m);
    }

    #[test]
    fn grid_csv_round_trip() {
        let g = Grid::from_fn(2, 3, |i, j| (i * 7 + j) as f32 * 0.25).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(Grid::read_csv(&buf[..]).unwrap(), g);
    }

    #[test]
    fn truncated_binary_rejected() {
        let m = Matrix::zeros(2, 2);
        let mut buf = Vec::new();
        m.write_bin(&mut buf).unwrap();
        buf.pop();
        assert!(Matrix::read_bin(&buf[..]).is_err());
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(matches!(Grid::new(0, 4), Err(SimError::Domain(_))));
    }
}
