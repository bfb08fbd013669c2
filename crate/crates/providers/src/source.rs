use std::path::PathBuf;

use thiserror::Error;
use usar_core::{GrayImage, KidneyMeasurement, Mask, View};

use crate::phantom::{phantom_next, PhantomError, PhantomSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("directory not found: {0}")]
    MissingDirectory(PathBuf),
    #[error("{path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },
    #[error("{path}: mask is {}x{} but image is {}x{}", mask.0, mask.1, image.0, image.1)]
    DimensionMismatch {
        path: PathBuf,
        image: (usize, usize),
        mask: (usize, usize),
    },
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error(transparent)]
    Phantom(#[from] PhantomError),
}

/// One acquired frame with whatever annotation came with it.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceFrame {
    pub name: String,
    pub image: GrayImage,
    pub ground_truth: Option<Mask>,
    pub pixel_spacing: f64,
    pub view: Option<View>,
    /// Annotated dimensions, when the source knows them.
    pub reference: Option<KidneyMeasurement>,
}

/// A single-consumer stream of frames.
pub type FrameSource = Box<dyn Iterator<Item = Result<SourceFrame, SourceError>> + Send>;

/// Endless phantom frames `t = 0, 1, 2, ...`.
pub struct PhantomSource {
    spec: PhantomSpec,
    t: u64,
}

impl PhantomSource {
    pub fn new(spec: PhantomSpec) -> Result<Self, SourceError> {
        spec.validate()?;
        Ok(Self { spec, t: 0 })
    }

    pub fn spec(&self) -> &PhantomSpec {
        &self.spec
    }
}

impl Iterator for PhantomSource {
    type Item = Result<SourceFrame, SourceError>;

    fn next(&mut self) -> Option<Self::Item> {
        let t = self.t;
        self.t += 1;
        Some(
            phantom_next(&self.spec, t)
                .map(|(image, mask)| SourceFrame {
                    name: format!("phantom{t:06}"),
                    image,
                    ground_truth: Some(mask),
                    pixel_spacing: self.spec.pixel_spacing,
                    view: None,
                    reference: None,
                })
                .map_err(SourceError::from),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantom_source_counts_frames() {
        let spec = PhantomSpec {
            width: 64,
            height: 64,
            semi_major: 20.0,
            semi_minor: 10.0,
            drift_amplitude: 2.0,
            ..Default::default()
        };
        let frames: Vec<_> = PhantomSource::new(spec.clone())
            .unwrap()
            .take(3)
            .map(Result::unwrap)
            .collect();
        assert_eq!(frames[2].name, "phantom000002");
        assert_eq!(frames[1].image, phantom_next(&spec, 1).unwrap().0);
        assert!(frames.iter().all(|f| f.ground_truth.is_some()));
        assert!(PhantomSource::new(PhantomSpec { semi_minor: -1.0, ..spec }).is_err());
    }
}
