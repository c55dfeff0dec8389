//! SPKL binary frame files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SPKL"
//!      4     4  u32 version (= 1)
//!      8     4  u32 n_frames
//!     12     4  u32 height
//!     16     4  u32 width
//!     20     8  f64 tau_ratio
//!     28     8  u64 seed
//!     36     …  n_frames·height·width f32 intensities, row-major, frame-major
//! ```
//!
//! Remaining generation metadata (geometry, substeps, sub-sources) lives in
//! a JSON sidecar written next to the file with a `.json` suffix appended.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frames::{FrameMeta, FrameSet};

pub const MAGIC: &[u8; 4] = b"SPKL";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 36;

pub fn write<W: Write>(frames: &FrameSet, mut out: W) -> Result<()> {
    let dim = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
    };
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&dim(frames.n_frames, "n_frames")?.to_le_bytes())?;
    out.write_all(&dim(frames.height, "height")?.to_le_bytes())?;
    out.write_all(&dim(frames.width, "width")?.to_le_bytes())?;
    out.write_all(&frames.meta.tau_ratio.to_le_bytes())?;
    out.write_all(&frames.meta.seed.to_le_bytes())?;
    let mut buf = Vec::with_capacity(frames.data.len() * 4);
    for v in &frames.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read<R: Read>(mut input: R) -> Result<FrameSet> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header).map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format("bad magic, expected \"SPKL\"".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let (n_frames, height, width) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
    let tau_ratio = f64::from_le_bytes(header[20..28].try_into().unwrap());
    let seed = u64::from_le_bytes(header[28..36].try_into().unwrap());
    let count = n_frames
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .ok_or_else(|| Error::Format("frame dimensions overflow".into()))?;
    let mut bytes = vec![0u8; count * 4];
    input.read_exact(&mut bytes).map_err(|e| Error::Format(format!("truncated pixel data: {e}")))?;
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after pixel data".into()));
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let meta = FrameMeta::bare(seed, tau_ratio);
    FrameSet::new(n_frames, height, width, data, meta)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub(crate) fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Writes the frame file and its metadata sidecar.
pub fn save(frames: &FrameSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| with_path(e, path))?;
    write(frames, BufWriter::new(file))?;
    let sidecar = serde_json::to_string_pretty(&frames.meta)?;
    std::fs::write(sidecar_path(path), sidecar + "\n")?;
    Ok(())
}

/// Reads a frame file, merging metadata from the sidecar when present.
pub fn load(path: &Path) -> Result<FrameSet> {
    let file = File::open(path).map_err(|e| with_path(e, path))?;
    let mut frames = read(BufReader::new(file))?;
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let meta: FrameMeta = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
        frames.meta.substeps = meta.substeps;
        frames.meta.subsources = meta.subsources;
        frames.meta.geometry = meta.geometry;
        frames.meta.fringe_period_m = meta.fringe_period_m;
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FrameSet {
        let data = (0..2 * 3 * 4).map(|i| i as f32 * 0.5).collect();
        let meta = FrameMeta::bare(7, 0.06);
        FrameSet::new(2, 3, 4, data, meta).unwrap()
    }

    #[test]
    fn header_layout_is_exact() {
        let mut bytes = Vec::new();
        write(&sample(), &mut bytes).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 24 * 4);
        assert_eq!(&bytes[0..4], b"SPKL");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[3, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &[4, 0, 0, 0]);
        assert_eq!(&bytes[20..28], &0.06f64.to_le_bytes());
        assert_eq!(&bytes[28..36], &7u64.to_le_bytes());
        assert_eq!(&bytes[36 + 4..36 + 8], &0.5f32.to_le_bytes());
    }

    #[test]
    fn malformed_input_is_rejected() {
        let mut bytes = Vec::new();
        write(&sample(), &mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read(&bad[..]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(read(&bad[..]), Err(Error::Format(_))));
        assert!(matches!(read(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(read(&long[..]), Err(Error::Format(_))));
        assert!(read(&bytes[..]).is_ok());
    }
}
