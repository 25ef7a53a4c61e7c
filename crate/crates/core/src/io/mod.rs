//! File formats for view graphs, global motions and solver reports.
//!
//! Both formats use the edge convention `measurement = M_i^-1 * M_j`, where
//! `M_i` maps view-`i` coordinates into the reference frame.

pub mod g2o;
pub mod json;
pub mod quat;

use std::path::Path;

pub use g2o::{parse_g2o, write_g2o, G2oDocument, G2oError};
pub use json::{parse_json, write_json, JsonError, MotionDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    G2o,
    Json,
}

impl Format {
    /// Picks the format from a `.g2o` or `.json` extension (case-insensitive).
    pub fn from_path(path: &Path) -> Option<Format> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "g2o" => Some(Format::G2o),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}
