//! Labeled segmentation masks and grayscale frames.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BACKGROUND: u8 = 0;
pub const CORTEX: u8 = 1;
pub const CENTRAL_COMPLEX: u8 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("buffer holds {actual} values, expected {expected} for {width}x{height}")]
    LengthMismatch {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("label {value} at index {index} is not one of 0, 1, 2")]
    InvalidLabel { index: usize, value: u8 },
    #[error("pixel spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
}

/// Foreground segmentation class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Cortex,
    CentralComplex,
}

impl Class {
    pub const ALL: [Class; 2] = [Class::Cortex, Class::CentralComplex];

    pub fn label(self) -> u8 {
        match self {
            Class::Cortex => CORTEX,
            Class::CentralComplex => CENTRAL_COMPLEX,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Cortex => "cortex",
            Class::CentralComplex => "central_complex",
        }
    }
}

/// An 8-bit grayscale frame, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, MaskError> {
        check_len(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// A per-pixel class map with its physical pixel spacing.
///
/// Labels are stored row-major and restricted to background (0), cortex (1)
/// and central complex (2). Spacing is isotropic, in millimeters per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    pixel_spacing: f64,
}

impl Mask {
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u8>,
        pixel_spacing: f64,
    ) -> Result<Self, MaskError> {
        check_len(width, height, labels.len())?;
        if !(pixel_spacing > 0.0 && pixel_spacing.is_finite()) {
            return Err(MaskError::BadSpacing(pixel_spacing));
        }
        if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &v)| v > CENTRAL_COMPLEX)
        {
            return Err(MaskError::InvalidLabel { index, value });
        }
        Ok(Self {
            width,
            height,
            labels,
            pixel_spacing,
        })
    }

    /// All-background mask.
    pub fn background(width: usize, height: usize, pixel_spacing: f64) -> Result<Self, MaskError> {
        Self::new(width, height, vec![BACKGROUND; width * height], pixel_spacing)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    pub fn pixel_spacing(&self) -> f64 {
        self.pixel_spacing
    }

    pub fn with_spacing(mut self, pixel_spacing: f64) -> Result<Self, MaskError> {
        if !(pixel_spacing > 0.0 && pixel_spacing.is_finite()) {
            return Err(MaskError::BadSpacing(pixel_spacing));
        }
        self.pixel_spacing = pixel_spacing;
        Ok(self)
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Sets one pixel. Panics on an out-of-range label or coordinate.
    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        assert!(label <= CENTRAL_COMPLEX, "invalid label {label}");
        self.labels[y * self.width + x] = label;
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != BACKGROUND).count()
    }
}

fn check_len(width: usize, height: usize, actual: usize) -> Result<(), MaskError> {
    let expected = width * height;
    if actual != expected {
        return Err(MaskError::LengthMismatch {
            width,
            height,
            expected,
            actual,
        });
    }
    Ok(())
}
