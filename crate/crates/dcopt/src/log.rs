//! Minimal stderr logging gated by the `DCOPT_LOG` environment variable
//! (`off`, `warn`, `info`, `debug`; default `warn`).

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Off,
    Warn,
    Info,
    Debug,
}

pub fn level() -> Level {
    static LEVEL: OnceLock<Level> = OnceLock::new();
    *LEVEL.get_or_init(|| {
        match std::env::var("DCOPT_LOG")
            .unwrap_or_default()
            .to_ascii_lowercase()
            .as_str()
        {
            "off" | "none" => Level::Off,
            "info" => Level::Info,
            "debug" => Level::Debug,
            _ => Level::Warn,
        }
    })
}

pub fn warn(msg: &str) {
    if level() >= Level::Warn {
        eprintln!("[dcopt warn] {msg}");
    }
}

pub fn info(msg: &str) {
    if level() >= Level::Info {
        eprintln!("[dcopt info] {msg}");
    }
}
