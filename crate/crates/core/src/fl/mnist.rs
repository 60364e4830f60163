//! IDX reader for MNIST-style image and label files.

use std::io::Read;
use std::path::Path;

use super::data::Dataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Mnist("truncated header".into()))
}

/// Parses an IDX3 image file into `(count, rows * cols, pixels)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    if be_u32(bytes, 0)? != IMAGES_MAGIC {
        return Err(Error::Mnist("bad image magic".into()));
    }
    let n = be_u32(bytes, 4)? as usize;
    let dim = be_u32(bytes, 8)? as usize * be_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    if body.len() != n * dim {
        return Err(Error::Mnist(format!(
            "expected {} pixel bytes, found {}",
            n * dim,
            body.len()
        )));
    }
    Ok((n, dim, body.to_vec()))
}

/// Parses an IDX1 label file.
pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    if be_u32(bytes, 0)? != LABELS_MAGIC {
        return Err(Error::Mnist("bad label magic".into()));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Mnist(format!(
            "expected {n} labels, found {}",
            body.len()
        )));
    }
    Ok(body.to_vec())
}

/// Combines parsed images and labels; pixels are scaled to `[0, 1]`.
pub fn to_dataset(images: (usize, usize, Vec<u8>), labels: Vec<u8>) -> Result<Dataset> {
    let (n, dim, pixels) = images;
    if labels.len() != n {
        return Err(Error::Mnist("image and label counts differ".into()));
    }
    let features = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels = labels.iter().map(|&y| y as usize).collect();
    Dataset::new(features, labels, dim, 10).map_err(|e| Error::Mnist(e.to_string()))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Loads `train-images-idx3-ubyte` and `train-labels-idx1-ubyte` from `dir`.
pub fn load_mnist(dir: &Path) -> Result<Dataset> {
    let images = parse_images(&read(&dir.join("train-images-idx3-ubyte"))?)?;
    let labels = parse_labels(&read(&dir.join("train-labels-idx1-ubyte"))?)?;
    to_dataset(images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, rows: u32, cols: u32, body: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [IMAGES_MAGIC, n, rows, cols] {
            v.extend_from_slice(&w.to_be_bytes());
        }
        v.extend_from_slice(body);
        v
    }

    #[test]
    fn round_trip() {
        let img = idx_images(2, 1, 2, &[0, 255, 51, 102]);
        let mut lab = Vec::new();
        lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&2u32.to_be_bytes());
        lab.extend_from_slice(&[7, 3]);
        let d = to_dataset(parse_images(&img).unwrap(), parse_labels(&lab).unwrap()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.row(0), &[0.0, 1.0]);
        assert_eq!(d.row(1), &[0.2, 0.4]);
        assert_eq!(d.labels(), &[7, 3]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(parse_images(&idx_images(2, 1, 2, &[0, 1, 2])).is_err());
        let mut bad = idx_images(1, 1, 1, &[0]);
        bad[3] = 0x01;
        assert!(parse_images(&bad).is_err());
        assert!(parse_labels(&[0, 0, 8]).is_err());
    }
}
