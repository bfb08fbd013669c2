//! Core kernels for the ultrasound streaming and kidney measurement pipeline.
//!
//! - [`mask`]: labeled segmentation grids and grayscale frames.
//! - [`geometry`]: PCA-oriented bounding boxes, dimension extraction and
//!   ellipsoid volume.
//! - [`metrics`]: DICE, IoU and threshold-sweep mAP.
//! - [`protocol`]: the fragmenting datagram format, reassembly and
//!   frame/segmentation alignment.

pub mod geometry;
pub mod mask;
pub mod metrics;
pub mod protocol;

pub use geometry::{
    ClassSelector, GeometryError, KidneyMeasurement, MeasurementSource, OrientedBox, Pixel,
    Scatter2, View,
};
pub use mask::{Class, GrayImage, Mask, MaskError};
