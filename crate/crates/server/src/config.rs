//! Server settings. Defaults, then a `key=value` file, then command-line
//! options, all through [`ServerConfig::apply`].

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use thiserror::Error;
use usar_providers::{ArtifactMode, LatencyModel, PhantomSpec, ProviderKind, SourceKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("{key}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServerConfig {
    pub source: SourceKind,
    pub provider: ProviderKind,
    /// Simulated delay of the oracle provider.
    pub latency: LatencyModel,
    pub fps: f64,
    pub bind: IpAddr,
    pub udp_port: u16,
    pub ws_port: u16,
    /// Spacing of phantom frames and of replay entries without a sidecar.
    pub pixel_spacing: f64,
    /// Provider calls allowed in flight; frames beyond it skip segmentation.
    pub max_in_flight: usize,
    /// Stop after this many frames.
    pub frames: Option<u64>,
    /// JSON-lines event log; `-` is standard error.
    pub event_log: Option<PathBuf>,
    pub phantom: PhantomSpec,
    pub seed: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        let phantom = PhantomSpec::default();
        Self {
            source: SourceKind::Phantom,
            provider: ProviderKind::Oracle { erosion: 0 },
            latency: LatencyModel::SEGMENTER_PROFILE,
            fps: 30.0,
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            udp_port: 9100,
            ws_port: 9101,
            pixel_spacing: phantom.pixel_spacing,
            max_in_flight: 32,
            frames: None,
            event_log: None,
            phantom,
            seed: 0,
        }
    }
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| bad(key, format!("cannot parse {value:?}")))
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = number(key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, format!("must be positive, got {value}")))
    }
}

fn pair<T: std::str::FromStr>(key: &str, value: &str, sep: char) -> Result<(T, T), ConfigError> {
    let (a, b) = value
        .split_once(sep)
        .ok_or_else(|| bad(key, format!("expected two values separated by {sep:?}")))?;
    Ok((number(key, a.trim())?, number(key, b.trim())?))
}

impl ServerConfig {
    /// Sets one option. Dashes and underscores in `key` are interchangeable.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "source" => self.source = value.parse().map_err(|e: usar_providers::selector::SelectorError| bad(k, e.0))?,
            "provider" => {
                self.provider = value.parse().map_err(|e: usar_providers::selector::SelectorError| bad(k, e.0))?
            }
            "latency_profile" => {
                self.latency = value.parse().map_err(|e: usar_providers::latency::LatencyError| bad(k, e.to_string()))?
            }
            "fps" => self.fps = positive(k, value)?,
            "bind" => self.bind = number(k, value)?,
            "udp_port" => self.udp_port = number(k, value)?,
            "ws_port" => self.ws_port = number(k, value)?,
            "pixel_spacing" => {
                self.pixel_spacing = positive(k, value)?;
                self.phantom.pixel_spacing = self.pixel_spacing;
            }
            "max_in_flight" => {
                self.max_in_flight = number(k, value)?;
                if self.max_in_flight == 0 {
                    return Err(bad(k, "must be at least 1"));
                }
            }
            "frames" => self.frames = Some(number(k, value)?),
            "event_log" => self.event_log = Some(PathBuf::from(value)),
            "seed" => self.seed = number(k, value)?,
            "phantom_seed" => self.phantom.seed = number(k, value)?,
            "phantom_noise" => self.phantom.noise = number(k, value)?,
            "phantom_theta" => self.phantom.theta = number(k, value)?,
            "phantom_drift" => self.phantom.drift_amplitude = number(k, value)?,
            "phantom_artifact" => {
                self.phantom.artifact = value.parse::<ArtifactMode>().map_err(|e| bad(k, e.0))?
            }
            "phantom_size" => {
                let (w, h) = pair::<usize>(k, value, 'x')?;
                self.phantom.width = w;
                self.phantom.height = h;
            }
            "phantom_axes" => {
                let (a, b) = pair::<f64>(k, value, ',')?;
                self.phantom.semi_major = a;
                self.phantom.semi_minor = b;
            }
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Applies a `key=value` document. `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                reason: format!("expected key=value, got {line:?}"),
            })?;
            self.apply(key, value).map_err(|e| ConfigError::Syntax {
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        self.apply_text(&text)
    }

    /// Checks cross-field constraints.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if matches!(self.source, SourceKind::Phantom) {
            self.phantom
                .validate()
                .map_err(|e| bad("phantom", e.0))?;
        }
        Ok(())
    }

    pub fn udp_addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.udp_port)
    }

    pub fn ws_addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.ws_port)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut c = ServerConfig::default();
        c.apply_text(
            "# demo\nsource = replay:/tmp/frames\nprovider=oracle:erode=2\nlatency_profile=338,45.8\n\
             fps=15\nudp-port=7000\npixel_spacing=0.5\nphantom_size=256x200\nphantom_artifact=severe\n",
        )
        .unwrap();
        c.apply("fps", "25").unwrap();
        assert_eq!(c.source, SourceKind::Replay("/tmp/frames".into()));
        assert_eq!(c.provider, ProviderKind::Oracle { erosion: 2 });
        assert_eq!(c.latency, LatencyModel::NNUNET_PROFILE);
        assert_eq!(c.fps, 25.0);
        assert_eq!(c.udp_port, 7000);
        assert_eq!(c.phantom.pixel_spacing, 0.5);
        assert_eq!((c.phantom.width, c.phantom.height), (256, 200));
        assert_eq!(c.phantom.artifact, ArtifactMode::Severe);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut c = ServerConfig::default();
        let e = c.apply_text("fps=30\nbogus\n").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 2, .. }), "{e}");
        let e = c.apply_text("\n\nfps=-3").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 3, .. }), "{e}");
        assert!(matches!(c.apply("colour", "red"), Err(ConfigError::UnknownKey(_))));
        assert!(c.apply("max_in_flight", "0").is_err());
        assert!(c.apply("bind", "localhost").is_err());
        assert!(c.apply("phantom_size", "512").is_err());
    }

    #[test]
    fn validate_checks_phantom_fit() {
        let mut c = ServerConfig::default();
        assert!(c.validate().is_ok());
        c.apply("phantom_size", "128x128").unwrap();
        assert!(c.validate().is_err());
        c.apply("phantom_axes", "40,20").unwrap();
        assert!(c.validate().is_ok());
    }
}
