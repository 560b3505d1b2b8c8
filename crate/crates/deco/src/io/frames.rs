//! Directories of zero-padded numbered images: `00000.png`, `00001.png`, ...

use std::path::{Path, PathBuf};

use deco_core::image::{Image, Mask};
use nalgebra::Vector3;

use super::{read_mask, read_normals, read_rgb, write_mask, write_rgb, BitDepth, IoError};

pub fn frame_name(index: usize) -> String {
    format!("{index:05}.png")
}

/// Image files whose stem is a decimal number, ordered by that number.
pub fn list_numbered(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let entries = std::fs::read_dir(dir).map_err(|e| IoError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| IoError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("png") | Some("ppm")) {
            continue;
        }
        if let Some(n) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok()) {
            files.push((n, path));
        }
    }
    if files.is_empty() {
        return Err(IoError::format(dir, "no numbered .png or .ppm files"));
    }
    files.sort();
    if let Some(w) = files.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IoError::format(&w[1].1, "duplicate frame number"));
    }
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

/// Reads every frame; the bit depth is that of the first file.
pub fn read_frames(dir: &Path) -> Result<(Vec<Image>, BitDepth), IoError> {
    let mut depth = None;
    let frames = list_numbered(dir)?
        .iter()
        .map(|p| {
            let (img, d) = read_rgb(p)?;
            depth.get_or_insert(d);
            Ok(img)
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    Ok((frames, depth.unwrap_or_default()))
}

pub fn write_frames(dir: &Path, frames: &[Image], depth: BitDepth) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let path = dir.join(frame_name(i));
            write_rgb(&path, f, depth)?;
            Ok(path)
        })
        .collect()
}

pub fn read_mask_dir(dir: &Path) -> Result<Vec<Mask>, IoError> {
    list_numbered(dir)?.iter().map(|p| read_mask(p)).collect()
}

pub fn write_mask_dir(dir: &Path, masks: &[Mask]) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    for (i, m) in masks.iter().enumerate() {
        write_mask(&dir.join(frame_name(i)), m)?;
    }
    Ok(())
}

pub fn read_normal_dir(dir: &Path) -> Result<Vec<(Vec<Vector3<f64>>, usize, usize)>, IoError> {
    list_numbered(dir)?.iter().map(|p| read_normals(p)).collect()
}
