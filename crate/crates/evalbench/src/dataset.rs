//! Evaluation datasets: replay directories, and a generator for phantom
//! ones with analytic reference dimensions.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use usar_core::View;
use usar_providers::replay::{write_entry, META_EXT};
use usar_providers::{phantom_next, replay_open, ArtifactMode, PhantomSpec, ReplayMeta, SourceError, SourceFrame};

use crate::EvalError;

/// A loaded dataset. Frames keep their replay order.
pub struct Dataset {
    /// Directory the frames came from, for error messages.
    pub root: Option<PathBuf>,
    pub frames: Vec<SourceFrame>,
}

impl Dataset {
    /// Loads every entry of a replay directory. `default_spacing` applies to
    /// entries without a sidecar spacing.
    pub fn load(dir: impl AsRef<Path>, default_spacing: Option<f64>) -> Result<Self, EvalError> {
        let dir = dir.as_ref();
        let mut source = replay_open(dir)?;
        if let Some(s) = default_spacing {
            source = source.with_default_spacing(s);
        }
        let frames = source
            .stems()
            .iter()
            .map(|stem| source.load(stem))
            .collect::<Result<Vec<_>, _>>()?;
        if frames.is_empty() {
            return Err(EvalError::EmptyDataset);
        }
        Ok(Self {
            root: Some(dir.to_path_buf()),
            frames,
        })
    }

    pub fn from_frames(frames: Vec<SourceFrame>) -> Self {
        Self { root: None, frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// The sidecar path of an entry, for error messages.
    pub fn meta_path(&self, name: &str) -> PathBuf {
        let file = format!("{name}{META_EXT}");
        match &self.root {
            Some(root) => root.join(file),
            None => PathBuf::from(file),
        }
    }

    pub(crate) fn malformed(&self, name: &str, reason: &str) -> EvalError {
        EvalError::Source(SourceError::MalformedFile {
            path: self.meta_path(name),
            reason: reason.to_string(),
        })
    }
}

/// Parameters of a generated phantom dataset.
#[derive(Clone, Debug)]
pub struct PhantomDataset {
    pub coronal: usize,
    pub transverse: usize,
    pub width: usize,
    pub height: usize,
    pub pixel_spacing: f64,
    pub artifact: ArtifactMode,
    pub noise: f64,
    /// Random orientation. Off, kidneys lie along the image x axis and the
    /// reference dimensions are exact; on, they are analytic
    /// (`2a + 1` pixels) and rasterization adds up to a pixel or so.
    pub rotate: bool,
    pub seed: u64,
}

impl Default for PhantomDataset {
    fn default() -> Self {
        Self {
            coronal: 50,
            transverse: 50,
            width: 320,
            height: 320,
            pixel_spacing: 0.5,
            artifact: ArtifactMode::None,
            noise: 0.25,
            rotate: false,
            seed: 0,
        }
    }
}

/// One generated entry and its analytic geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSample {
    pub name: String,
    pub view: View,
    pub semi_major: u32,
    pub semi_minor: u32,
    pub theta: f64,
}

impl PhantomDataset {
    /// Sample parameters, deterministic in the seed. Semi-axes are whole
    /// pixels; coronal sections are longer and more elongated than
    /// transverse ones.
    pub fn samples(&self) -> Vec<PhantomSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let room = (self.width.min(self.height) / 2).saturating_sub(2) as u32;
        let mut out = Vec::with_capacity(self.coronal + self.transverse);
        let views = std::iter::repeat_n(View::Coronal, self.coronal)
            .chain(std::iter::repeat_n(View::Transverse, self.transverse));
        for (i, view) in views.enumerate() {
            let (lo, hi, min_ratio) = match view {
                View::Coronal => (room * 7 / 16, room * 7 / 8, 1.6),
                View::Transverse => (room / 4, room / 2, 1.3),
            };
            let a = rng.random_range(lo.max(4)..=hi.max(4));
            let b_hi = ((a as f64 / min_ratio).floor() as u32).max(2);
            let b = rng.random_range((b_hi / 2).max(2)..=b_hi);
            let theta = if self.rotate { rng.random_range(0.0..PI) } else { 0.0 };
            out.push(PhantomSample {
                name: format!("{}{i:04}", view.as_str()),
                view,
                semi_major: a,
                semi_minor: b,
                theta,
            });
        }
        out
    }

    fn spec(&self, s: &PhantomSample, index: u64) -> PhantomSpec {
        PhantomSpec {
            width: self.width,
            height: self.height,
            semi_major: s.semi_major as f64,
            semi_minor: s.semi_minor as f64,
            theta: s.theta,
            drift_amplitude: 0.0,
            noise: self.noise,
            artifact: self.artifact,
            pixel_spacing: self.pixel_spacing,
            seed: self.seed.wrapping_add(index),
            ..Default::default()
        }
    }

    /// Writes the dataset into `dir` (created if needed) and returns the
    /// samples written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PhantomSample>, EvalError> {
        fs::create_dir_all(dir).map_err(|e| {
            EvalError::Source(SourceError::Io {
                path: dir.to_path_buf(),
                reason: e.to_string(),
            })
        })?;
        let samples = self.samples();
        for (i, s) in samples.iter().enumerate() {
            let spec = self.spec(s, i as u64);
            let (image, mask) = phantom_next(&spec, 0).map_err(SourceError::from)?;
            write_entry(dir, &s.name, &image, Some(&mask), Some(&self.reference(s)))?;
        }
        Ok(samples)
    }

    /// Sidecar for one sample: spacing, view and the dimensions that view
    /// shows, from the semi-axes alone.
    pub fn reference(&self, s: &PhantomSample) -> ReplayMeta {
        let major = (2 * s.semi_major + 1) as f64 * self.pixel_spacing;
        let minor = (2 * s.semi_minor + 1) as f64 * self.pixel_spacing;
        let mut meta = ReplayMeta {
            pixel_spacing_mm: Some(self.pixel_spacing),
            view: Some(s.view),
            ..Default::default()
        };
        match s.view {
            View::Coronal => meta.length_mm = Some(major),
            View::Transverse => {
                meta.width_mm = Some(major);
                meta.thickness_mm = Some(minor);
            }
        }
        meta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_fit_and_are_deterministic() {
        let d = PhantomDataset::default();
        let s = d.samples();
        assert_eq!(s.len(), 100);
        assert_eq!(s, d.samples());
        assert_eq!(s.iter().filter(|x| x.view == View::Coronal).count(), 50);
        for (i, x) in s.iter().enumerate() {
            assert!(x.semi_major > x.semi_minor, "{x:?}");
            d.spec(x, i as u64).validate().unwrap();
        }
        let other = PhantomDataset { seed: 1, ..d };
        assert_ne!(other.samples(), s);
    }

    #[test]
    fn reference_follows_the_view() {
        let d = PhantomDataset::default();
        let c = PhantomSample {
            name: "c".into(),
            view: View::Coronal,
            semi_major: 100,
            semi_minor: 40,
            theta: 0.0,
        };
        let m = d.reference(&c);
        assert_eq!(m.length_mm, Some(100.5));
        assert_eq!((m.width_mm, m.thickness_mm), (None, None));
        let t = PhantomSample { view: View::Transverse, ..c };
        let m = d.reference(&t);
        assert_eq!((m.width_mm, m.thickness_mm), (Some(100.5), Some(40.5)));
        assert_eq!(m.length_mm, None);
    }
}
