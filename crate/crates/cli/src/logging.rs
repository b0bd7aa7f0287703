//! Structured JSON-lines logging to stderr.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Error = 0,
    Warn = 1,
    Info = 2,
    Debug = 3,
}

impl Level {
    fn name(&self) -> &'static str {
        match self {
            Level::Error => "error",
            Level::Warn => "warn",
            Level::Info => "info",
            Level::Debug => "debug",
        }
    }
}

/// Minimal structured logger: one JSON object per line on stderr.
#[derive(Debug, Clone, Copy)]
pub struct Logger {
    max_level: Level,
}

impl Logger {
    pub fn from_level_name(name: &str) -> Result<Self, CliError> {
        let max_level = match name {
            "error" => Level::Error,
            "warn" => Level::Warn,
            "info" => Level::Info,
            "debug" => Level::Debug,
            other => {
                return Err(CliError::Config(format!(
                    "unknown log level {other:?}; expected error|warn|info|debug"
                )))
            }
        };
        Ok(Logger { max_level })
    }

    pub fn log(&self, level: Level, stage: &str, msg: &str, fields: &[(&str, serde_json::Value)]) {
        if level > self.max_level {
            return;
        }
        let ts_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let mut object = serde_json::Map::new();
        object.insert("ts_ms".into(), ts_ms.into());
        object.insert("level".into(), level.name().into());
        object.insert("stage".into(), stage.into());
        object.insert("msg".into(), msg.into());
        for (k, v) in fields {
            object.insert((*k).into(), v.clone());
        }
        let line = serde_json::Value::Object(object).to_string();
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "{line}");
    }

    pub fn info(&self, stage: &str, msg: &str, fields: &[(&str, serde_json::Value)]) {
        self.log(Level::Info, stage, msg, fields);
    }

    pub fn warn(&self, stage: &str, msg: &str, fields: &[(&str, serde_json::Value)]) {
        self.log(Level::Warn, stage, msg, fields);
    }
}
