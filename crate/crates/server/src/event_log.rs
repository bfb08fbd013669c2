use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

/// JSON-lines event log. Every line carries `t_us`, microseconds since the
/// log was opened. Cloning shares the sink.
#[derive(Clone)]
pub struct EventLog {
    start: Instant,
    sink: Option<Arc<Mutex<Box<dyn Write + Send>>>>,
}

impl EventLog {
    /// A log that drops everything.
    pub fn disabled() -> Self {
        Self {
            start: Instant::now(),
            sink: None,
        }
    }

    pub fn to_writer(w: impl Write + Send + 'static) -> Self {
        Self {
            start: Instant::now(),
            sink: Some(Arc::new(Mutex::new(Box::new(w)))),
        }
    }

    /// Opens `path`, or standard error for `-`.
    pub fn open(path: &Path) -> io::Result<Self> {
        if path.as_os_str() == "-" {
            return Ok(Self::to_writer(io::stderr()));
        }
        Ok(Self::to_writer(BufWriter::new(File::create(path)?)))
    }

    pub fn start(&self) -> Instant {
        self.start
    }

    pub fn is_enabled(&self) -> bool {
        self.sink.is_some()
    }

    /// Microseconds from the log start to `t`.
    pub fn micros(&self, t: Instant) -> u64 {
        t.saturating_duration_since(self.start).as_micros() as u64
    }

    /// Writes `record` (an object) with `t_us` added.
    pub fn record(&self, record: impl Serialize) {
        let Some(sink) = &self.sink else { return };
        let mut value = serde_json::to_value(record).unwrap_or_else(|e| json!({ "event": "log_error", "error": e.to_string() }));
        if let Value::Object(map) = &mut value {
            map.insert("t_us".into(), json!(self.micros(Instant::now())));
        }
        let mut out = sink.lock().expect("event log lock");
        // A broken log must not take the pipeline down.
        let _ = writeln!(out, "{value}").and_then(|_| out.flush());
    }
}
