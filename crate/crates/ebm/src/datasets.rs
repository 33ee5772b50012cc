//! Readers and writers for MNIST IDX files, CIFAR-10 binary batches and raw
//! big-endian `f32` matrices. Pixel bytes are scaled to `[0, 1]`.
//!
//! Every reader checks the byte count implied by the header before allocating.

use std::path::{Path, PathBuf};

use ebm_core::Matrix;

use crate::error::{read_file, write_file, IoError, IoResult};

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

pub const CIFAR_PIXELS: usize = 3 * 32 * 32;
/// One label byte then 1024 red, 1024 green, 1024 blue bytes.
pub const CIFAR_RECORD: usize = 1 + CIFAR_PIXELS;
pub const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn scale_pixels(raw: &[u8]) -> Vec<f64> {
    raw.iter().map(|&b| f64::from(b) / 255.0).collect()
}

/// Parses an IDX image file: magic 2051, count, rows, cols (big-endian `u32`),
/// then `count·rows·cols` unsigned bytes. Returns `count × (rows·cols)` and `(rows, cols)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> IoResult<(Matrix, (usize, usize))> {
    if bytes.len() < 16 {
        return Err(IoError::format(path, "truncated IDX header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != IDX_IMAGES_MAGIC {
        return Err(IoError::format(path, format!("bad image magic {magic}")));
    }
    let (n, rows, cols) = (
        be_u32(bytes, 4) as usize,
        be_u32(bytes, 8) as usize,
        be_u32(bytes, 12) as usize,
    );
    let dim = rows
        .checked_mul(cols)
        .filter(|&d| d > 0)
        .ok_or_else(|| IoError::format(path, format!("bad image size {rows}x{cols}")))?;
    let need = n.checked_mul(dim).and_then(|p| p.checked_add(16));
    if need != Some(bytes.len()) {
        return Err(IoError::format(
            path,
            format!(
                "header declares {n} images of {rows}x{cols} but the file has {} bytes",
                bytes.len()
            ),
        ));
    }
    let m = Matrix::from_vec(n, dim, scale_pixels(&bytes[16..]))?;
    Ok((m, (rows, cols)))
}

/// Parses an IDX label file: magic 2049, count, then one byte per label in `0..=9`.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> IoResult<Matrix> {
    if bytes.len() < 8 {
        return Err(IoError::format(path, "truncated IDX header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != IDX_LABELS_MAGIC {
        return Err(IoError::format(path, format!("bad label magic {magic}")));
    }
    let n = be_u32(bytes, 4) as usize;
    if n.checked_add(8) != Some(bytes.len()) {
        return Err(IoError::format(
            path,
            format!(
                "header declares {n} labels but the file has {} bytes",
                bytes.len()
            ),
        ));
    }
    if let Some(bad) = bytes[8..].iter().find(|&&b| b > 9) {
        return Err(IoError::format(path, format!("label {bad} outside 0..=9")));
    }
    Ok(Matrix::from_vec(
        n,
        1,
        bytes[8..].iter().map(|&b| f64::from(b)).collect(),
    )?)
}

pub fn read_mnist_images(path: &Path) -> IoResult<Matrix> {
    Ok(parse_idx_images(&read_file(path)?, path)?.0)
}

pub fn read_mnist_labels(path: &Path) -> IoResult<Matrix> {
    parse_idx_labels(&read_file(path)?, path)
}

pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Inverse of the `[0, 1]` scaling; exact for matrices produced by the readers.
pub fn to_pixel_bytes(m: &Matrix) -> Vec<u8> {
    m.as_slice()
        .iter()
        .map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

pub fn write_mnist_images(path: &Path, images: &Matrix, rows: usize, cols: usize) -> IoResult<()> {
    if images.cols() != rows * cols {
        return Err(IoError::Config(format!(
            "{} columns do not reshape to {rows}x{cols}",
            images.cols()
        )));
    }
    write_file(
        path,
        &encode_idx_images(rows, cols, &to_pixel_bytes(images)),
    )
}

pub fn write_mnist_labels(path: &Path, labels: &Matrix) -> IoResult<()> {
    write_file(path, &encode_idx_labels(&to_class_bytes(labels)))
}

fn to_class_bytes(labels: &Matrix) -> Vec<u8> {
    labels.as_slice().iter().map(|&x| x as u8).collect()
}

/// Images and `m × 1` class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImages {
    pub images: Matrix,
    pub labels: Matrix,
}

pub struct MnistSet {
    pub train: LabeledImages,
    pub test: LabeledImages,
}

/// Loads the four standard IDX files from `dir`.
pub fn read_mnist_dir(dir: &Path) -> IoResult<MnistSet> {
    let load = |images: &str, labels: &str| -> IoResult<LabeledImages> {
        let images = read_mnist_images(&dir.join(images))?;
        let labels_path = dir.join(labels);
        let labels = read_mnist_labels(&labels_path)?;
        if labels.rows() != images.rows() {
            return Err(IoError::format(
                &labels_path,
                format!("{} labels for {} images", labels.rows(), images.rows()),
            ));
        }
        Ok(LabeledImages { images, labels })
    };
    Ok(MnistSet {
        train: load(MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS)?,
        test: load(MNIST_TEST_IMAGES, MNIST_TEST_LABELS)?,
    })
}

/// Parses concatenated CIFAR-10 records.
pub fn parse_cifar_batch(bytes: &[u8], path: &Path) -> IoResult<LabeledImages> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(IoError::format(
            path,
            format!(
                "length {} is not a positive multiple of {CIFAR_RECORD}",
                bytes.len()
            ),
        ));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut pixels = Vec::with_capacity(n * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        if rec[0] > 9 {
            return Err(IoError::format(
                path,
                format!("label {} outside 0..=9", rec[0]),
            ));
        }
        labels.push(f64::from(rec[0]));
        pixels.extend(rec[1..].iter().map(|&b| f64::from(b) / 255.0));
    }
    Ok(LabeledImages {
        images: Matrix::from_vec(n, CIFAR_PIXELS, pixels)?,
        labels: Matrix::from_vec(n, 1, labels)?,
    })
}

pub fn read_cifar_batch(path: &Path) -> IoResult<LabeledImages> {
    parse_cifar_batch(&read_file(path)?, path)
}

pub fn encode_cifar_batch(set: &LabeledImages) -> Vec<u8> {
    let pixels = to_pixel_bytes(&set.images);
    let mut out = Vec::with_capacity(set.images.rows() * CIFAR_RECORD);
    for (r, label) in to_class_bytes(&set.labels).into_iter().enumerate() {
        out.push(label);
        out.extend_from_slice(&pixels[r * CIFAR_PIXELS..(r + 1) * CIFAR_PIXELS]);
    }
    out
}

/// Reads the five training batches and the test batch from `dir`.
pub fn read_cifar10(dir: &Path) -> IoResult<(LabeledImages, LabeledImages)> {
    let mut bytes = Vec::new();
    for f in CIFAR_TRAIN_FILES {
        let path = dir.join(f);
        let part = read_file(&path)?;
        if part.is_empty() || part.len() % CIFAR_RECORD != 0 {
            return Err(IoError::format(
                &path,
                format!(
                    "length {} is not a positive multiple of {CIFAR_RECORD}",
                    part.len()
                ),
            ));
        }
        bytes.extend_from_slice(&part);
    }
    let train = parse_cifar_batch(&bytes, dir)?;
    drop(bytes);
    Ok((train, read_cifar_batch(&dir.join(CIFAR_TEST_FILE))?))
}

/// Reads `rows × cols` big-endian IEEE-754 `f32` values, widened to `f64`.
pub fn read_f32be_matrix(path: &Path, rows: usize, cols: usize) -> IoResult<Matrix> {
    let bytes = read_file(path)?;
    let need = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| IoError::format(path, "dimensions overflow"))?;
    if bytes.len() < need {
        return Err(IoError::format(
            path,
            format!("{} bytes, need {need} for {rows}x{cols}", bytes.len()),
        ));
    }
    let data = bytes[..need]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_be_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Ok(Matrix::from_vec(rows, cols, data)?)
}

/// Row count of a raw `f32` file with `cols` columns.
pub fn f32be_rows(path: &Path, cols: usize) -> IoResult<usize> {
    let len = std::fs::metadata(path)
        .map_err(|e| IoError::io(path, e))?
        .len() as usize;
    if cols == 0 || len % (4 * cols) != 0 {
        return Err(IoError::format(
            path,
            format!("length {len} is not a multiple of 4x{cols}"),
        ));
    }
    Ok(len / (4 * cols))
}

pub fn write_f32be_matrix(path: &Path, m: &Matrix) -> IoResult<()> {
    let bytes: Vec<u8> = m
        .as_slice()
        .iter()
        .flat_map(|&x| (x as f32).to_be_bytes())
        .collect();
    write_file(path, &bytes)
}

/// `MDL_DATA_DIR` when set, else `fallback`.
pub fn data_dir_or(fallback: impl Into<PathBuf>) -> PathBuf {
    std::env::var_os("MDL_DATA_DIR").map_or_else(|| fallback.into(), PathBuf::from)
}
