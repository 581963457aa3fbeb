//! Readers for the sample matrices consumed by the spectral analysis.
//!
//! Supported inputs:
//!
//! * `.npy`: a 2-D C-order array of `f64`, `f32` or `u8` (bytes are scaled by 1/255).
//! * raw: little-endian `f64` values, row-major, with the shape given by the caller.
//! * CIFAR binary: the `train.bin` layout of the CIFAR-100 binary release:
//!   per image two label bytes followed by 3,072 pixel bytes (1,024 red,
//!   1,024 green, 1,024 blue). Pixels are scaled to `[0, 1]`.
//! * PNG directory: every `*.png` file, sorted by file name, decoded to RGB
//!   and flattened plane by plane (all red values, then green, then blue),
//!   scaled to `[0, 1]`. All images must share one size.

use std::fs;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use npyz::WriterBuilder;

use crate::error::{Error, Result};
use crate::spectral::{CovarianceAccumulator, DataMatrix};

/// Pixels per CIFAR image (32 × 32 × 3).
pub const CIFAR_PIXELS: usize = 3072;
const CIFAR100_LABEL_BYTES: usize = 2;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_npy(path: &Path) -> Result<DataMatrix> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let parse = |e: std::io::Error| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    };
    let header = npyz::NpyFile::new(&bytes[..]).map_err(parse)?;
    let shape = header.shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::invalid(format!(
            "{}: expected a 2-D array, found shape {shape:?}",
            path.display()
        )));
    }
    if header.order() != npyz::Order::C {
        return Err(Error::invalid(format!(
            "{}: Fortran-order arrays are not supported",
            path.display()
        )));
    }
    let descr = header.dtype().descr();
    let (rows, cols) = (shape[0] as usize, shape[1] as usize);
    let data: Vec<f64> = match descr.trim_matches(|c| c == '\'' || c == '"') {
        "<f8" => npyz::NpyFile::new(&bytes[..])
            .and_then(|f| f.into_vec::<f64>())
            .map_err(parse)?,
        "<f4" => npyz::NpyFile::new(&bytes[..])
            .and_then(|f| f.into_vec::<f32>())
            .map_err(parse)?
            .into_iter()
            .map(f64::from)
            .collect(),
        "|u1" => npyz::NpyFile::new(&bytes[..])
            .and_then(|f| f.into_vec::<u8>())
            .map_err(parse)?
            .into_iter()
            .map(|b| b as f64 / 255.0)
            .collect(),
        other => {
            return Err(Error::invalid(format!(
                "{}: unsupported dtype {other} (expected <f8, <f4 or |u1)",
                path.display()
            )))
        }
    };
    DataMatrix::from_row_major(rows, cols, data)
}

/// Write a matrix as a `<f8` C-order `.npy` file.
pub fn write_npy(path: &Path, matrix: &DataMatrix) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut writer = npyz::WriteOptions::new()
        .default_dtype()
        .shape(&[matrix.n_rows() as u64, matrix.n_cols() as u64])
        .writer(std::io::BufWriter::new(file))
        .begin_nd()
        .map_err(io_err(path))?;
    writer
        .extend(matrix.as_slice().iter().copied())
        .map_err(io_err(path))?;
    writer.finish().map_err(io_err(path))
}

pub fn load_raw_f64(path: &Path, rows: usize, cols: usize) -> Result<DataMatrix> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::LengthMismatch {
            what: format!("{} as {rows}x{cols} f64", path.display()),
            expected: rows * cols * 8,
            found: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    DataMatrix::from_row_major(rows, cols, data)
}

/// Stream a CIFAR-100 binary file into a covariance accumulator.
pub fn accumulate_cifar100(path: &Path, acc: &mut CovarianceAccumulator) -> Result<usize> {
    const BLOCK: usize = 1000;
    let record = CIFAR100_LABEL_BYTES + CIFAR_PIXELS;
    let len = fs::metadata(path).map_err(io_err(path))?.len() as usize;
    if len == 0 || len % record != 0 {
        return Err(Error::invalid(format!(
            "{}: size {len} is not a multiple of the {record}-byte CIFAR-100 record",
            path.display()
        )));
    }
    let mut reader = BufReader::new(fs::File::open(path).map_err(io_err(path))?);
    let mut raw = vec![0u8; record * BLOCK];
    let mut rows = Vec::with_capacity(CIFAR_PIXELS * BLOCK);
    let mut remaining = len / record;
    while remaining > 0 {
        let n = remaining.min(BLOCK);
        let buf = &mut raw[..n * record];
        reader.read_exact(buf).map_err(io_err(path))?;
        rows.clear();
        for rec in buf.chunks_exact(record) {
            rows.extend(
                rec[CIFAR100_LABEL_BYTES..]
                    .iter()
                    .map(|&b| b as f64 / 255.0),
            );
        }
        acc.push_rows(&rows)?;
        remaining -= n;
    }
    Ok(len / record)
}

/// Load a directory of same-sized PNG images as one row per image.
pub fn load_png_dir(dir: &Path) -> Result<DataMatrix> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("{}: no .png files", dir.display())));
    }
    let mut data = Vec::new();
    let mut dims = None;
    for file in &files {
        let img = image::open(file)
            .map_err(|e| Error::Parse {
                path: file.clone(),
                line: 0,
                message: e.to_string(),
            })?
            .to_rgb8();
        let d = img.dimensions();
        if *dims.get_or_insert(d) != d {
            return Err(Error::invalid(format!(
                "{}: size {}x{} differs from the first image",
                file.display(),
                d.0,
                d.1
            )));
        }
        let raw = img.as_raw();
        for channel in 0..3 {
            data.extend(
                raw.iter()
                    .skip(channel)
                    .step_by(3)
                    .map(|&b| b as f64 / 255.0),
            );
        }
    }
    let (w, h) = dims.expect("at least one image");
    DataMatrix::from_row_major(files.len(), (w * h * 3) as usize, data)
}
