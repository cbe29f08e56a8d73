use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::config::Record;
use crate::CliError;

/// 17 significant digits; non-finite values become `null`.
pub fn json_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    }
}

/// Flat object with keys in the given order.
pub fn json_object(fields: &[(&str, f64)]) -> String {
    let body: Vec<String> = fields.iter().map(|(k, v)| format!("\"{k}\": {}", json_number(*v))).collect();
    format!("{{{}}}", body.join(", "))
}

pub fn header_line(record: &Record) -> String {
    format!("# config_sha256={}\n", record.sha256())
}

/// Writes `header + body` to `path`.
pub fn write_file(
    path: &Path,
    record: &Record,
    body: impl FnOnce(&mut dyn Write) -> mgpert::Result<()>,
) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::Path { path: path.display().to_string(), source: e })?);
    w.write_all(header_line(record).as_bytes())?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Path { path: dir.display().to_string(), source: e })
}
