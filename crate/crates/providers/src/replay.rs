//! Directory replay of recorded frames.
//!
//! Layout, per stem:
//!
//! - `<stem>.pgm`: binary graymap (P5, maxval 255), the frame;
//! - `<stem>.mask.pgm`: optional P5 mask with values in {0, 1, 2};
//! - `<stem>.meta`: optional `key=value` lines. Recognized keys are
//!   `pixel_spacing_mm`, `view` (`coronal` or `transverse`) and the reference
//!   dimensions `length_mm`, `width_mm`, `thickness_mm`. Blank lines and
//!   lines starting with `#` are skipped; other keys are ignored.
//!
//! Entries are yielded in lexicographic stem order.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Cursor, Read, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageDecoder};
use usar_core::{GrayImage, KidneyMeasurement, Mask, View};

use crate::source::{SourceError, SourceFrame};

pub const IMAGE_EXT: &str = ".pgm";
pub const MASK_EXT: &str = ".mask.pgm";
pub const META_EXT: &str = ".meta";

/// Frames travel with 16-bit dimensions.
const MAX_SIDE: u32 = u16::MAX as u32;

/// Spacing assumed for entries without a sidecar value.
pub const DEFAULT_PIXEL_SPACING: f64 = 0.5;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayMeta {
    pub pixel_spacing_mm: Option<f64>,
    pub view: Option<View>,
    pub length_mm: Option<f64>,
    pub width_mm: Option<f64>,
    pub thickness_mm: Option<f64>,
}

impl ReplayMeta {
    /// Reference dimensions, if any were recorded.
    pub fn reference(&self) -> Option<KidneyMeasurement> {
        if self.length_mm.is_none() && self.width_mm.is_none() && self.thickness_mm.is_none() {
            return None;
        }
        Some(KidneyMeasurement {
            length_mm: self.length_mm,
            width_mm: self.width_mm,
            thickness_mm: self.thickness_mm,
            ..Default::default()
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(v) = self.pixel_spacing_mm {
            out += &format!("pixel_spacing_mm={v}\n");
        }
        if let Some(v) = self.view {
            out += &format!("view={}\n", v.as_str());
        }
        for (key, value) in [
            ("length_mm", self.length_mm),
            ("width_mm", self.width_mm),
            ("thickness_mm", self.thickness_mm),
        ] {
            if let Some(v) = value {
                out += &format!("{key}={v}\n");
            }
        }
        out
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> SourceError {
    SourceError::MalformedFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Parses a sidecar. `path` only labels errors.
pub fn parse_meta(text: &str, path: &Path) -> Result<ReplayMeta, SourceError> {
    let mut meta = ReplayMeta::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| malformed(path, format!("line {}: expected key=value", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let positive = |slot: &mut Option<f64>| -> Result<(), SourceError> {
            if slot.is_some() {
                return Err(malformed(path, format!("line {}: duplicate {key}", n + 1)));
            }
            match value.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => {
                    *slot = Some(v);
                    Ok(())
                }
                _ => Err(malformed(
                    path,
                    format!("line {}: {key} must be a positive number, got {value:?}", n + 1),
                )),
            }
        };
        match key {
            "pixel_spacing_mm" => positive(&mut meta.pixel_spacing_mm)?,
            "length_mm" => positive(&mut meta.length_mm)?,
            "width_mm" => positive(&mut meta.width_mm)?,
            "thickness_mm" => positive(&mut meta.thickness_mm)?,
            "view" => {
                if meta.view.is_some() {
                    return Err(malformed(path, format!("line {}: duplicate view", n + 1)));
                }
                meta.view = Some(
                    value
                        .parse()
                        .map_err(|e: String| malformed(path, format!("line {}: {e}", n + 1)))?,
                );
            }
            _ => log::debug!("{}: ignoring key {key:?}", path.display()),
        }
    }
    Ok(meta)
}

/// Decodes a P5 graymap with maxval 255 into `(width, height, samples)`.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>), SourceError> {
    let decoder = PnmDecoder::new(Cursor::new(bytes)).map_err(|e| malformed(path, e.to_string()))?;
    if decoder.subtype() != PnmSubtype::Graymap(SampleEncoding::Binary) {
        return Err(malformed(path, "not a binary graymap (P5)"));
    }
    let maxval = decoder.header().maximal_sample();
    if maxval != 255 {
        return Err(malformed(path, format!("maxval {maxval}, expected 255")));
    }
    let (w, h) = decoder.dimensions();
    if w == 0 || h == 0 || w > MAX_SIDE || h > MAX_SIDE {
        return Err(malformed(path, format!("unsupported size {w}x{h}")));
    }
    // Refuse before allocating when the file cannot hold the samples.
    let total = decoder.total_bytes();
    if total > bytes.len() as u64 {
        return Err(malformed(path, format!("truncated: {w}x{h} needs {total} bytes")));
    }
    let mut data = vec![0u8; total as usize];
    decoder
        .read_image(&mut data)
        .map_err(|e| malformed(path, e.to_string()))?;
    Ok((w as usize, h as usize, data))
}

pub fn encode_pgm(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() + 20);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .encode(samples, width as u32, height as u32, ExtendedColorType::L8)
        .expect("in-memory PGM encode");
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>, SourceError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| malformed(path, e.to_string()))?;
    Ok(bytes)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SourceError> {
    let io = |e: std::io::Error| SourceError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut f = BufWriter::new(File::create(path).map_err(io)?);
    f.write_all(bytes).map_err(io)?;
    f.flush().map_err(io)
}

/// Writes one replay entry. The mask is stored without its spacing; put the
/// spacing in `meta` to keep it.
pub fn write_entry(
    dir: &Path,
    stem: &str,
    image: &GrayImage,
    mask: Option<&Mask>,
    meta: Option<&ReplayMeta>,
) -> Result<(), SourceError> {
    write_file(
        &dir.join(format!("{stem}{IMAGE_EXT}")),
        &encode_pgm(image.width(), image.height(), image.data()),
    )?;
    if let Some(mask) = mask {
        write_file(
            &dir.join(format!("{stem}{MASK_EXT}")),
            &encode_pgm(mask.width(), mask.height(), mask.labels()),
        )?;
    }
    if let Some(meta) = meta {
        write_file(&dir.join(format!("{stem}{META_EXT}")), meta.to_text().as_bytes())?;
    }
    Ok(())
}

/// Ordered, lazily loaded replay entries.
pub struct ReplaySource {
    dir: PathBuf,
    stems: Vec<String>,
    next: usize,
    default_spacing: f64,
}

/// Lists the entries of `dir`. Files are read as the stream advances.
pub fn replay_open(dir: impl AsRef<Path>) -> Result<ReplaySource, SourceError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(SourceError::MissingDirectory(dir.to_path_buf()));
    }
    let listing = fs::read_dir(dir).map_err(|e| SourceError::Io {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut stems = Vec::new();
    let mut masks = Vec::new();
    for entry in listing {
        let entry = entry.map_err(|e| SourceError::Io {
            path: dir.to_path_buf(),
            reason: e.to_string(),
        })?;
        let Ok(name) = entry.file_name().into_string() else {
            continue;
        };
        if let Some(stem) = name.strip_suffix(MASK_EXT) {
            masks.push(stem.to_string());
        } else if let Some(stem) = name.strip_suffix(IMAGE_EXT) {
            stems.push(stem.to_string());
        }
    }
    stems.sort();
    masks.sort();
    if let Some(orphan) = masks.iter().find(|m| stems.binary_search(m).is_err()) {
        return Err(malformed(
            &dir.join(format!("{orphan}{MASK_EXT}")),
            "mask without a matching image",
        ));
    }
    Ok(ReplaySource {
        dir: dir.to_path_buf(),
        stems,
        next: 0,
        default_spacing: DEFAULT_PIXEL_SPACING,
    })
}

impl ReplaySource {
    pub fn with_default_spacing(mut self, mm: f64) -> Self {
        self.default_spacing = mm;
        self
    }

    pub fn len(&self) -> usize {
        self.stems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stems.is_empty()
    }

    pub fn stems(&self) -> &[String] {
        &self.stems
    }

    pub fn load(&self, stem: &str) -> Result<SourceFrame, SourceError> {
        let image_path = self.dir.join(format!("{stem}{IMAGE_EXT}"));
        let (w, h, pixels) = decode_pgm(&read_file(&image_path)?, &image_path)?;
        let image = GrayImage::new(w, h, pixels).map_err(|e| malformed(&image_path, e.to_string()))?;

        let meta_path = self.dir.join(format!("{stem}{META_EXT}"));
        let meta = if meta_path.is_file() {
            let bytes = read_file(&meta_path)?;
            let text = std::str::from_utf8(&bytes).map_err(|_| malformed(&meta_path, "not UTF-8"))?;
            parse_meta(text, &meta_path)?
        } else {
            ReplayMeta::default()
        };
        let spacing = meta.pixel_spacing_mm.unwrap_or(self.default_spacing);

        let mask_path = self.dir.join(format!("{stem}{MASK_EXT}"));
        let ground_truth = if mask_path.is_file() {
            let (mw, mh, labels) = decode_pgm(&read_file(&mask_path)?, &mask_path)?;
            if (mw, mh) != (w, h) {
                return Err(SourceError::DimensionMismatch {
                    path: mask_path,
                    image: (w, h),
                    mask: (mw, mh),
                });
            }
            Some(Mask::new(w, h, labels, spacing).map_err(|e| malformed(&mask_path, e.to_string()))?)
        } else {
            None
        };

        Ok(SourceFrame {
            name: stem.to_string(),
            image,
            ground_truth,
            pixel_spacing: spacing,
            view: meta.view,
            reference: meta.reference(),
        })
    }
}

impl Iterator for ReplaySource {
    type Item = Result<SourceFrame, SourceError>;

    fn next(&mut self) -> Option<Self::Item> {
        let stem = self.stems.get(self.next)?.clone();
        self.next += 1;
        Some(self.load(&stem))
    }
}
