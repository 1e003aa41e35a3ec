//! IDX image/label files and input-plane encoding.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{ComplexField, GridSpec};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images stored contiguously, `rows x cols` bytes each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImageSet {
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<u8>,
    pub labels: Vec<u8>,
    pub split: String,
}

impl LabeledImageSet {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>, split: impl Into<String>) -> Result<Self> {
        if rows == 0 || cols == 0 || pixels.len() % (rows * cols) != 0 {
            return Err(Error::Dimension(format!(
                "{} pixels do not tile {rows}x{cols} images",
                pixels.len()
            )));
        }
        let images = pixels.len() / (rows * cols);
        if images != labels.len() {
            return Err(Error::CountMismatch {
                images,
                labels: labels.len(),
            });
        }
        Ok(LabeledImageSet {
            rows,
            cols,
            pixels,
            labels,
            split: split.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let sz = self.rows * self.cols;
        &self.pixels[i * sz..(i + 1) * sz]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l as usize >= num_classes) {
            Some(&l) => Err(Error::LabelRange {
                label: l as usize,
                num_classes,
            }),
            None => Ok(()),
        }
    }

    /// Images `range` as a new set.
    pub fn slice(&self, range: std::ops::Range<usize>, split: impl Into<String>) -> Self {
        let sz = self.rows * self.cols;
        LabeledImageSet {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[range.start * sz..range.end * sz].to_vec(),
            labels: self.labels[range].to_vec(),
            split: split.into(),
        }
    }

    /// `(head, tail)` where `tail` holds the last `n_tail` images.
    pub fn split_tail(&self, n_tail: usize) -> (Self, Self) {
        let cut = self.len().saturating_sub(n_tail);
        (
            self.slice(0..cut, self.split.clone()),
            self.slice(cut..self.len(), "validation"),
        )
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("header ends at byte {}", bytes.len()),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::WrongMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Reads an image file and a label file (either may be gzip-compressed).
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledImageSet> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let img = read_maybe_gz(ip)?;
    check_magic(&img, IMAGES_MAGIC, ip)?;
    let count = be_u32(&img, 4, ip)? as usize;
    let rows = be_u32(&img, 8, ip)? as usize;
    let cols = be_u32(&img, 12, ip)? as usize;
    let need = count * rows * cols;
    if img.len() < 16 + need {
        return Err(Error::Truncated {
            path: ip.to_path_buf(),
            detail: format!(
                "{count} images of {rows}x{cols} need {need} pixel bytes, found {}",
                img.len() - 16
            ),
        });
    }

    let lab = read_maybe_gz(lp)?;
    check_magic(&lab, LABELS_MAGIC, lp)?;
    let n_labels = be_u32(&lab, 4, lp)? as usize;
    if lab.len() < 8 + n_labels {
        return Err(Error::Truncated {
            path: lp.to_path_buf(),
            detail: format!("{n_labels} labels declared, {} present", lab.len() - 8),
        });
    }
    if n_labels != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: n_labels,
        });
    }
    let split = ip
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    LabeledImageSet::new(
        rows,
        cols,
        img[16..16 + need].to_vec(),
        lab[8..8 + count].to_vec(),
        split,
    )
}

fn write_maybe_gz(path: &Path, bytes: &[u8]) -> Result<()> {
    let gz = path.extension().is_some_and(|e| e == "gz");
    let out = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes)
            .and_then(|_| enc.finish())
            .map_err(|e| Error::io(path, e))?
    } else {
        bytes.to_vec()
    };
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `set` as an IDX pair; paths ending in `.gz` are compressed.
pub fn write_idx(set: &LabeledImageSet, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let mut img = Vec::with_capacity(16 + set.pixels.len());
    for v in [IMAGES_MAGIC, set.len() as u32, set.rows as u32, set.cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(&set.pixels);
    let mut lab = Vec::with_capacity(8 + set.len());
    for v in [LABELS_MAGIC, set.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(&set.labels);
    write_maybe_gz(images_path.as_ref(), &img)?;
    write_maybe_gz(labels_path.as_ref(), &lab)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// Field value equals the normalised pixel.
    Amplitude,
    /// Unit amplitude with phase `pi * p` inside the object.
    Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    #[default]
    Nearest,
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputEncoding {
    pub channel: Channel,
    /// Side of the centred square the image is mapped onto, in wavelengths.
    pub object_span: f64,
    #[serde(default)]
    pub resample: Resample,
}

impl Default for InputEncoding {
    fn default() -> Self {
        InputEncoding {
            channel: Channel::Amplitude,
            object_span: 80.0,
            resample: Resample::Nearest,
        }
    }
}

impl InputEncoding {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !(self.object_span > 0.0) || self.object_span > grid.aperture() + 1e-9 {
            return Err(Error::Config(format!(
                "object span {} must lie in (0, {}]",
                self.object_span,
                grid.aperture()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, set: &LabeledImageSet, i: usize, grid: &GridSpec) -> Result<ComplexField> {
        encode_input(set.image(i), set.rows, set.cols, grid, self)
    }
}

/// Normalised image intensity at each grid sample, `None` outside the object.
fn resampled(image: &[u8], rows: usize, cols: usize, grid: &GridSpec, enc: &InputEncoding) -> Vec<Option<f64>> {
    let half = enc.object_span / 2.0;
    let local = |j: usize| {
        let c = grid.coord(j);
        (c >= -half && c < half).then(|| (c + half) / enc.object_span)
    };
    let pix = |r: usize, c: usize| image[r * cols + c] as f64 / 255.0;
    let n = grid.n;
    let mut out = vec![None; n * n];
    for y in 0..n {
        let Some(v) = local(y) else { continue };
        for x in 0..n {
            let Some(u) = local(x) else { continue };
            out[y * n + x] = Some(match enc.resample {
                Resample::Nearest => {
                    let r = ((v * rows as f64) as usize).min(rows - 1);
                    let c = ((u * cols as f64) as usize).min(cols - 1);
                    pix(r, c)
                }
                Resample::Bilinear => {
                    let fy = (v * rows as f64 - 0.5).clamp(0.0, (rows - 1) as f64);
                    let fx = (u * cols as f64 - 0.5).clamp(0.0, (cols - 1) as f64);
                    let (r0, c0) = (fy.floor() as usize, fx.floor() as usize);
                    let (r1, c1) = ((r0 + 1).min(rows - 1), (c0 + 1).min(cols - 1));
                    let (ty, tx) = (fy - r0 as f64, fx - c0 as f64);
                    let top = pix(r0, c0) * (1.0 - tx) + pix(r0, c1) * tx;
                    let bottom = pix(r1, c0) * (1.0 - tx) + pix(r1, c1) * tx;
                    top * (1.0 - ty) + bottom * ty
                }
            });
        }
    }
    out
}

/// Maps a `rows x cols` image onto the centred object region of the input plane.
pub fn encode_input(
    image: &[u8],
    rows: usize,
    cols: usize,
    grid: &GridSpec,
    encoding: &InputEncoding,
) -> Result<ComplexField> {
    if image.is_empty() || image.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "image has {} pixels, expected {rows}x{cols}",
            image.len()
        )));
    }
    encoding.validate(grid)?;
    let zero = Complex64::new(0.0, 0.0);
    let values = resampled(image, rows, cols, grid, encoding)
        .into_iter()
        .map(|p| match (p, encoding.channel) {
            (None, _) => zero,
            (Some(p), Channel::Amplitude) => Complex64::new(p, 0.0),
            (Some(p), Channel::Phase) => Complex64::from_polar(1.0, std::f64::consts::PI * p),
        })
        .collect();
    ComplexField::from_values(*grid, values)
}
