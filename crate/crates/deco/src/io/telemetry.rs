//! Per-iteration CSV telemetry of the body optimizer.

use std::path::Path;

use deco_core::sds::SDSGradReport;

use super::IoError;

/// Header row, in column order.
pub const TELEMETRY_COLUMNS: [&str; 18] = [
    "iteration",
    "t",
    "framing",
    "azimuth_deg",
    "elevation_deg",
    "normal_resolution",
    "rgb_resolution",
    "geo_sds_norm",
    "normal_recon_norm",
    "tex_sds_norm",
    "rgb_recon_norm",
    "geo_loss",
    "tex_loss",
    "geo_param_grad_norm",
    "tex_param_grad_norm",
    "geo_updated",
    "tex_updated",
    "skipped",
];

pub fn write_telemetry(path: &Path, log: &[SDSGradReport]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| IoError::format(path, e))?;
    if log.is_empty() {
        w.write_record(TELEMETRY_COLUMNS).map_err(|e| IoError::format(path, e))?;
    }
    for r in log {
        w.serialize(r).map_err(|e| IoError::format(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}
