//! Line-oriented pose sequences.
//!
//! ```text
//! # comments and blank lines are ignored
//! POSES 1 joints=<J> frames=<N> translation=<yes|no>
//! <3·J axis-angle values in radians> [tx ty tz]
//! ...
//! ```
//!
//! One record per frame, whitespace-separated. Records carry the three
//! translation values exactly when the header says `translation=yes`.

use std::fmt::Write as _;
use std::path::Path;

use deco_core::body::Pose;
use nalgebra::Vector3;

use super::{read_bytes, write_bytes, IoError};

const HEADER: &str = "POSES";
const VERSION: u32 = 1;

/// Ordered per-frame poses sharing one joint count.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub joints: usize,
    pub poses: Vec<Pose>,
    /// Whether records carry a global translation.
    pub translation: bool,
}

impl PoseSequence {
    pub fn rest(joints: usize, frames: usize) -> Self {
        Self {
            joints,
            poses: vec![Pose::rest(joints); frames],
            translation: false,
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

pub fn pose_string(seq: &PoseSequence) -> String {
    let mut out = String::new();
    let tr = if seq.translation { "yes" } else { "no" };
    writeln!(out, "{HEADER} {VERSION} joints={} frames={} translation={tr}", seq.joints, seq.len()).unwrap();
    for pose in &seq.poses {
        let mut fields: Vec<String> = pose
            .axis_angles
            .iter()
            .flat_map(|a| [a.x, a.y, a.z])
            .map(|v| format!("{v:?}"))
            .collect();
        if seq.translation {
            let t = pose.translation;
            fields.extend([t.x, t.y, t.z].iter().map(|v| format!("{v:?}")));
        }
        writeln!(out, "{}", fields.join(" ")).unwrap();
    }
    out
}

pub fn write_poses(path: &Path, seq: &PoseSequence) -> Result<(), IoError> {
    if let Some(i) = seq.poses.iter().position(|p| p.joints() != seq.joints) {
        return Err(IoError::Count {
            path: path.to_path_buf(),
            line: None,
            what: "joints in pose",
            expected: seq.joints,
            actual: seq.poses[i].joints(),
        });
    }
    write_bytes(path, pose_string(seq).as_bytes())
}

pub fn read_poses(path: &Path) -> Result<PoseSequence, IoError> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| IoError::format(path, e))?;
    parse_poses(text, path)
}

fn header_field<'a>(token: Option<&'a str>, key: &str, path: &Path, line: usize) -> Result<&'a str, IoError> {
    token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| IoError::parse(path, line, format!("header needs `{key}=<value>`")))
}

/// Parses the text form; `path` only labels errors.
pub fn parse_poses(text: &str, path: &Path) -> Result<PoseSequence, IoError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let Some((hl, header)) = lines.next() else {
        return Err(IoError::parse(path, 1, "missing header"));
    };
    let mut tok = header.split_whitespace();
    if tok.next() != Some(HEADER) {
        return Err(IoError::parse(path, hl, format!("header must start with `{HEADER}`")));
    }
    match tok.next().map(str::parse::<u32>) {
        Some(Ok(VERSION)) => {}
        _ => return Err(IoError::parse(path, hl, format!("unsupported version, expected {VERSION}"))),
    }
    let count = |key: &str, t: Option<&str>| -> Result<usize, IoError> {
        header_field(t, key, path, hl)?
            .parse()
            .map_err(|_| IoError::parse(path, hl, format!("`{key}` must be a non-negative integer")))
    };
    let joints = count("joints", tok.next())?;
    let frames = count("frames", tok.next())?;
    let translation = match header_field(tok.next(), "translation", path, hl)? {
        "yes" => true,
        "no" => false,
        other => return Err(IoError::parse(path, hl, format!("translation must be yes or no, got `{other}`"))),
    };
    if let Some(extra) = tok.next() {
        return Err(IoError::parse(path, hl, format!("unexpected header token `{extra}`")));
    }

    let per_record = 3 * joints + if translation { 3 } else { 0 };
    let mut poses = Vec::with_capacity(frames);
    for (ln, line) in lines {
        let values = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| IoError::parse(path, ln, format!("`{t}` is not a finite number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != per_record {
            let extra = if translation { 3 } else { 0 };
            let message = if values.len() >= extra && (values.len() - extra) % 3 == 0 {
                format!(
                    "record has {} joints, header declares {joints}",
                    (values.len() - extra) / 3
                )
            } else {
                format!("record has {} values, expected {per_record} for {joints} joints", values.len())
            };
            return Err(IoError::parse(path, ln, message));
        }
        let axis_angles = values[..3 * joints].chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
        let translation = if translation {
            Vector3::new(values[3 * joints], values[3 * joints + 1], values[3 * joints + 2])
        } else {
            Vector3::zeros()
        };
        poses.push(Pose {
            axis_angles,
            translation,
        });
    }
    if poses.len() != frames {
        return Err(IoError::Count {
            path: path.to_path_buf(),
            line: Some(hl),
            what: "frame records",
            expected: frames,
            actual: poses.len(),
        });
    }
    Ok(PoseSequence {
        joints,
        poses,
        translation,
    })
}
