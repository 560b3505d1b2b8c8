use std::path::{Path, PathBuf};

use deco_core::body::Pose;

use crate::io::{read_poses, IoError, PoseSequence};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: pose file declares {actual} joints, template has {expected}")]
    JointCount { path: PathBuf, expected: usize, actual: usize },
    #[error("{path}: {actual} pose records for {expected} frames (enable resampling to match by nearest index)")]
    FrameCount { path: PathBuf, expected: usize, actual: usize },
    #[error("{what}: expected {expected}, found {actual}")]
    Mismatch { what: String, expected: usize, actual: usize },
}

/// Reads a pose file and checks it against the template's joint count and,
/// when given, the clip length. With `resample`, a sequence of another
/// length is mapped onto `frames` by nearest index.
pub fn ingest_poses(
    path: &Path,
    joints: usize,
    frames: Option<usize>,
    resample: bool,
) -> Result<PoseSequence, IngestError> {
    let seq = read_poses(path)?;
    if seq.joints != joints {
        return Err(IngestError::JointCount {
            path: path.to_path_buf(),
            expected: joints,
            actual: seq.joints,
        });
    }
    match frames {
        Some(n) if n != seq.len() => {
            if resample && !seq.is_empty() {
                Ok(resample_nearest(&seq, n))
            } else {
                Err(IngestError::FrameCount {
                    path: path.to_path_buf(),
                    expected: n,
                    actual: seq.len(),
                })
            }
        }
        _ => Ok(seq),
    }
}

/// Frame `i` of the result takes source record `⌊(i + ½)·n_src / n⌋`.
pub fn resample_nearest(seq: &PoseSequence, frames: usize) -> PoseSequence {
    let n_src = seq.len();
    let poses: Vec<Pose> = (0..frames)
        .map(|i| {
            let src = (((2 * i + 1) * n_src) / (2 * frames)).min(n_src - 1);
            seq.poses[src].clone()
        })
        .collect();
    PoseSequence {
        joints: seq.joints,
        poses,
        translation: seq.translation,
    }
}
