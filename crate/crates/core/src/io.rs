//! File formats: IDX image/label sets, binary PGM frames and the dictionary
//! file.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::measure::{normalize_to_measure, GridMeasure, GridShape};
use crate::priors::Dictionary;
use crate::scalar::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const DICT_MAGIC: &[u8; 8] = b"OTDICT01";

/// Unsigned-byte image set: `count` images of `shape`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxDataset {
    pub count: usize,
    pub shape: GridShape,
    pub pixels: Vec<u8>,
}

impl IdxDataset {
    pub fn new(count: usize, shape: GridShape, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != count * shape.len() {
            return Err(Error::LengthMismatch {
                expected: count * shape.len(),
                actual: pixels.len(),
            });
        }
        Ok(IdxDataset {
            count,
            shape,
            pixels,
        })
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.shape.len();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Image `i` as a probability measure.
    pub fn measure<T: Scalar>(&self, i: usize) -> Result<GridMeasure<T>> {
        if i >= self.count {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.count,
            });
        }
        bytes_to_measure(self.image(i), self.shape)
    }
}

pub fn bytes_to_measure<T: Scalar>(bytes: &[u8], shape: GridShape) -> Result<GridMeasure<T>> {
    let px: Vec<T> = bytes.iter().map(|&b| T::lit(f64::from(b))).collect();
    normalize_to_measure(&px, shape)
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let chunk = bytes.get(at..at + 4).ok_or(Error::TruncatedFile {
        expected: at + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxDataset> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let shape = GridShape::new(rows, cols)?;
    let need = count
        .checked_mul(shape.len())
        .and_then(|v| v.checked_add(16))
        .ok_or(Error::TruncatedFile {
            expected: usize::MAX,
            found: bytes.len(),
        })?;
    if bytes.len() < need {
        return Err(Error::TruncatedFile {
            expected: need,
            found: bytes.len(),
        });
    }
    IdxDataset::new(count, shape, bytes[16..need].to_vec())
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxDataset> {
    parse_idx(&fs::read(path)?)
}

pub fn encode_idx(data: &IdxDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + data.pixels.len());
    for v in [
        IDX_IMAGES_MAGIC,
        data.count as u32,
        data.shape.rows() as u32,
        data.shape.cols() as u32,
    ] {
        out.extend(v.to_be_bytes());
    }
    out.extend(&data.pixels);
    out
}

pub fn write_idx(data: &IdxDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_idx(data))?;
    Ok(())
}

/// Label file (`0x00000801`, one dimension).
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    let magic = be_u32(&bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let count = be_u32(&bytes, 4)? as usize;
    let payload = bytes.get(8..8 + count).ok_or(Error::TruncatedFile {
        expected: 8 + count,
        found: bytes.len(),
    })?;
    Ok(payload.to_vec())
}

/// Gray level of each pixel: `round(255 · (m / max m)^gamma)`.
pub fn pgm_levels<T: Scalar>(measure: &GridMeasure<T>, gamma: T) -> Result<Vec<u8>> {
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let peak = measure.mass().iter().copied().fold(T::zero(), T::max);
    let full = T::lit(255.0);
    Ok(measure
        .mass()
        .iter()
        .map(|&m| {
            let v = (full * (m / peak).powf(gamma)).round();
            v.max(T::zero()).min(full).as_f64() as u8
        })
        .collect())
}

pub fn write_pgm<T: Scalar>(
    measure: &GridMeasure<T>,
    path: impl AsRef<Path>,
    gamma: T,
) -> Result<()> {
    let levels = pgm_levels(measure, gamma)?;
    let shape = measure.shape();
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", shape.cols(), shape.rows())?;
    w.write_all(&levels)?;
    w.flush()?;
    Ok(())
}

/// Parses a binary (`P5`) or plain (`P2`) graymap with maxval ≤ 255.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<(GridShape, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let fail = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0;
    let mut token = |bytes: &[u8]| -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let kind = token(&bytes).ok_or_else(|| fail("empty file"))?;
    let mut number = |what: &str| -> Result<usize> {
        token(&bytes)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| fail(&format!("bad {what}")))
    };
    let cols = number("width")?;
    let rows = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(fail("maxval must be in 1..=255"));
    }
    let shape = GridShape::new(rows, cols)?;
    let scale = |v: usize| ((v * 255 + maxval / 2) / maxval) as u8;
    let pixels = match kind.as_str() {
        "P5" => {
            // exactly one whitespace byte separates the header from the raster
            let start = pos + 1;
            let raster = bytes
                .get(start..start + shape.len())
                .ok_or(Error::TruncatedFile {
                    expected: start + shape.len(),
                    found: bytes.len(),
                })?;
            if maxval == 255 {
                raster.to_vec()
            } else {
                raster.iter().map(|&b| scale(b as usize)).collect()
            }
        }
        "P2" => (0..shape.len())
            .map(|_| number("pixel").map(scale))
            .collect::<Result<Vec<u8>>>()?,
        _ => return Err(fail("not a P2/P5 graymap")),
    };
    Ok((shape, pixels))
}

/// Reads a PGM back into a measure, undoing the gamma curve.
pub fn read_pgm_measure<T: Scalar>(path: impl AsRef<Path>, gamma: T) -> Result<GridMeasure<T>> {
    let (shape, pixels) = read_pgm(path)?;
    let inv = T::one() / gamma;
    let px: Vec<T> = pixels
        .iter()
        .map(|&b| (T::lit(f64::from(b)) / T::lit(255.0)).powf(inv))
        .collect();
    normalize_to_measure(&px, shape)
}

pub fn encode_dictionary<T: Scalar>(dict: &Dictionary<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + dict.as_slice().len() * 8);
    out.extend(DICT_MAGIC);
    out.extend((dict.atom_dim() as u32).to_le_bytes());
    out.extend((dict.atom_count() as u32).to_le_bytes());
    for v in dict.as_slice() {
        out.extend(v.as_f64().to_le_bytes());
    }
    out
}

pub fn save_dictionary<T: Scalar>(dict: &Dictionary<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dictionary(dict))?;
    Ok(())
}

pub fn load_dictionary<T: Scalar>(path: impl AsRef<Path>) -> Result<Dictionary<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.len() < 16 {
        return Err(Error::TruncatedFile {
            expected: 16,
            found: bytes.len(),
        });
    }
    if &bytes[..8] != DICT_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "missing OTDICT01 header".into(),
        });
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let m = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let need = 16 + n * m * 8;
    if bytes.len() < need {
        return Err(Error::TruncatedFile {
            expected: need,
            found: bytes.len(),
        });
    }
    let atoms: Vec<T> = bytes[16..need]
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    Dictionary::new(n, m, atoms)
}
