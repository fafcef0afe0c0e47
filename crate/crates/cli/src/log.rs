//! Line-oriented `key=value` logging.

use std::fmt::Display;
use std::fs::File;
use std::io::Write;

/// Renders `event=<event> k=v ...`; values with spaces or quotes are quoted.
pub fn line(event: &str, fields: &[(&str, &dyn Display)]) -> String {
    let mut s = format!("event={event}");
    for (k, v) in fields {
        let v = v.to_string();
        if v.is_empty() || v.contains([' ', '"', '=']) {
            s.push_str(&format!(" {k}={v:?}"));
        } else {
            s.push_str(&format!(" {k}={v}"));
        }
    }
    s
}

/// Writes log lines to stderr and, when given, to a file.
#[derive(Default)]
pub struct Logger {
    file: Option<File>,
}

impl Logger {
    pub fn stderr() -> Self {
        Self::default()
    }

    pub fn with_file(file: File) -> Self {
        Self { file: Some(file) }
    }

    pub fn log(&mut self, event: &str, fields: &[(&str, &dyn Display)]) {
        let l = line(event, fields);
        eprintln!("{l}");
        if let Some(f) = &mut self.file {
            let _ = writeln!(f, "{l}");
        }
    }
}
