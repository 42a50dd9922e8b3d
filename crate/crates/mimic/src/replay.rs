//! Frames from a directory of OpenPose `*_keypoints.json` files.

use std::path::{Path, PathBuf};

use mimic_core::pose::{Frame, FrameSource};
use thiserror::Error;

use crate::openpose::{parse_openpose_frame, OpenPoseError};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("no *_keypoints.json files in {0}")]
    EmptyDirectory(PathBuf),
    #[error("fps must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}: {source}")]
    Parse { file: String, source: OpenPoseError },
}

/// Frame `i` is stamped `round(i × 1000 / fps)` ms.
pub fn frame_timestamp(index: usize, fps: f64) -> u64 {
    (index as f64 * 1000.0 / fps).round() as u64
}

/// Lazily parsed frames, in lexicographic filename order. A bad file
/// surfaces as an error item after the frames before it.
#[derive(Debug)]
pub struct ReplayStream {
    files: Vec<PathBuf>,
    fps: f64,
    next: usize,
}

impl ReplayStream {
    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

impl Iterator for ReplayStream {
    type Item = Result<Frame, ReplayError>;

    fn next(&mut self) -> Option<Self::Item> {
        let path = self.files.get(self.next)?;
        let index = self.next;
        self.next += 1;
        let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(source) => return Some(Err(ReplayError::Io { path: path.clone(), source })),
        };
        Some(
            parse_openpose_frame(&bytes)
                .map(|skeletons| Frame {
                    timestamp_ms: frame_timestamp(index, self.fps),
                    skeletons,
                    source: FrameSource::Replay,
                })
                .map_err(|source| ReplayError::Parse { file, source }),
        )
    }
}

pub fn replay_directory(dir: &Path, fps: f64) -> Result<ReplayStream, ReplayError> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(ReplayError::BadFps(fps));
    }
    let io = |source| ReplayError::Io { path: dir.to_path_buf(), source };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let is_frame = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with("_keypoints.json"));
        if is_frame && path.is_file() {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(ReplayError::EmptyDirectory(dir.to_path_buf()));
    }
    files.sort();
    Ok(ReplayStream { files, fps, next: 0 })
}

/// Writes frames as numbered OpenPose files, the inverse of
/// [`replay_directory`].
pub fn export_directory(dir: &Path, prefix: &str, frames: &[Frame]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        let name = format!("{prefix}_{i:012}_keypoints.json");
        std::fs::write(dir.join(name), crate::openpose::serialize_frame(&f.skeletons))?;
    }
    Ok(())
}
