//! On-disk formats for images, rasters, and trajectories.
//!
//! Images are a two-file pair `<base>.json` / `<base>.raw`: a JSON
//! sidecar `{"n1", "n2", "dtype"}` with `dtype` either `"c64"` (complex,
//! two little-endian f32 per pixel, real then imaginary) or `"f32"`
//! (one little-endian f32 per pixel), and the raw row-major raster.
//!
//! Trajectories are a single file: one JSON header line
//! `{"n_shots", "p", "fixed_prefix_len"}` terminated by `\n`, followed by
//! raw little-endian f32 coordinate pairs, shot-major.
//!
//! Values are quantized to f32 on write; files round-trip bitwise.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::scheme::SamplingScheme;

#[derive(Debug, Serialize, Deserialize)]
struct ImageSidecar {
    n1: usize,
    n2: usize,
    dtype: String,
}

fn sidecar_paths(base: &Path) -> (PathBuf, PathBuf) {
    let mut json = base.as_os_str().to_owned();
    json.push(".json");
    let mut raw = base.as_os_str().to_owned();
    raw.push(".raw");
    (PathBuf::from(json), PathBuf::from(raw))
}

/// Write a complex image as dtype `c64`.
pub fn save_complex_image(base: &Path, img: &ImageGrid) -> Result<()> {
    let (json_path, raw_path) = sidecar_paths(base);
    let sidecar = ImageSidecar { n1: img.n1(), n2: img.n2(), dtype: "c64".into() };
    fs::write(&json_path, serde_json::to_vec(&sidecar)?)?;
    let mut bytes = Vec::with_capacity(img.len() * 8);
    for v in img.as_slice() {
        bytes.extend_from_slice(&(v.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    fs::write(&raw_path, bytes)?;
    Ok(())
}

/// Write a real raster as dtype `f32`.
pub fn save_real_image(base: &Path, n1: usize, n2: usize, data: &[f64]) -> Result<()> {
    if data.len() != n1 * n2 {
        return Err(Error::ShapeMismatch(format!(
            "raster length {} does not match {}x{}",
            data.len(),
            n1,
            n2
        )));
    }
    let (json_path, raw_path) = sidecar_paths(base);
    let sidecar = ImageSidecar { n1, n2, dtype: "f32".into() };
    fs::write(&json_path, serde_json::to_vec(&sidecar)?)?;
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for &v in data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(&raw_path, bytes)?;
    Ok(())
}

/// Image payload as read from disk.
pub enum ImagePayload {
    Complex(ImageGrid),
    Real { n1: usize, n2: usize, data: Vec<f64> },
}

/// Read either image dtype.
pub fn load_image(base: &Path) -> Result<ImagePayload> {
    let (json_path, raw_path) = sidecar_paths(base);
    let sidecar: ImageSidecar = serde_json::from_slice(&fs::read(&json_path)?)?;
    let bytes = fs::read(&raw_path)?;
    let n = sidecar.n1 * sidecar.n2;
    match sidecar.dtype.as_str() {
        "c64" => {
            if bytes.len() != n * 8 {
                return Err(Error::InvalidInput(format!(
                    "c64 payload has {} bytes, expected {}",
                    bytes.len(),
                    n * 8
                )));
            }
            let mut data = Vec::with_capacity(n);
            for chunk in bytes.chunks_exact(8) {
                let re = f32::from_le_bytes(chunk[0..4].try_into().unwrap()) as f64;
                let im = f32::from_le_bytes(chunk[4..8].try_into().unwrap()) as f64;
                data.push(Complex64::new(re, im));
            }
            Ok(ImagePayload::Complex(ImageGrid::from_vec(sidecar.n1, sidecar.n2, data)?))
        }
        "f32" => {
            if bytes.len() != n * 4 {
                return Err(Error::InvalidInput(format!(
                    "f32 payload has {} bytes, expected {}",
                    bytes.len(),
                    n * 4
                )));
            }
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            Ok(ImagePayload::Real { n1: sidecar.n1, n2: sidecar.n2, data })
        }
        other => Err(Error::InvalidInput(format!("unknown dtype {:?}", other))),
    }
}

/// Read a complex image, rejecting real rasters.
pub fn load_complex_image(base: &Path) -> Result<ImageGrid> {
    match load_image(base)? {
        ImagePayload::Complex(img) => Ok(img),
        ImagePayload::Real { .. } => {
            Err(Error::InvalidInput("expected dtype c64, found f32".into()))
        }
    }
}

/// Read a real raster, rejecting complex images.
pub fn load_real_image(base: &Path) -> Result<(usize, usize, Vec<f64>)> {
    match load_image(base)? {
        ImagePayload::Real { n1, n2, data } => Ok((n1, n2, data)),
        ImagePayload::Complex(_) => {
            Err(Error::InvalidInput("expected dtype f32, found c64".into()))
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryHeader {
    n_shots: usize,
    p: usize,
    fixed_prefix_len: usize,
}

/// Write a trajectory file (JSON header line plus f32 pairs).
pub fn save_trajectory(path: &Path, scheme: &SamplingScheme) -> Result<()> {
    let header = TrajectoryHeader {
        n_shots: scheme.n_shots(),
        p: scheme.points_per_shot(),
        fixed_prefix_len: scheme.fixed_prefix_len(),
    };
    let mut file = fs::File::create(path)?;
    file.write_all(&serde_json::to_vec(&header)?)?;
    file.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(scheme.m_total() * 8);
    for p in scheme.points() {
        bytes.extend_from_slice(&(p[0] as f32).to_le_bytes());
        bytes.extend_from_slice(&(p[1] as f32).to_le_bytes());
    }
    file.write_all(&bytes)?;
    Ok(())
}

/// Read a trajectory file written by [`save_trajectory`].
pub fn load_trajectory(path: &Path) -> Result<SamplingScheme> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::InvalidInput("trajectory file has no header line".into()))?;
    let header: TrajectoryHeader = serde_json::from_slice(&bytes[..newline])?;
    let payload = &bytes[newline + 1..];
    let expected = header.n_shots * header.p * 8;
    if payload.len() != expected {
        return Err(Error::InvalidInput(format!(
            "trajectory payload has {} bytes, expected {}",
            payload.len(),
            expected
        )));
    }
    let points: Vec<[f64; 2]> = payload
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes(c[0..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(c[4..8].try_into().unwrap()) as f64,
            ]
        })
        .collect();
    SamplingScheme::new(header.n_shots, header.p, header.fixed_prefix_len, points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_image_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("img");
        let mut img = ImageGrid::zeros(4, 6).unwrap();
        for (k, v) in img.as_mut_slice().iter_mut().enumerate() {
            *v = Complex64::new(k as f64 * 0.37 - 2.0, -(k as f64) * 0.11);
        }
        save_complex_image(&base, &img).unwrap();
        let loaded = load_complex_image(&base).unwrap();
        // Values round-trip under f32 quantization.
        for (a, b) in img.as_slice().iter().zip(loaded.as_slice()) {
            assert_eq!(a.re as f32, b.re as f32);
            assert_eq!(b.re, (b.re as f32) as f64);
        }
        // A second write of the loaded image reproduces the same bytes.
        let base2 = dir.path().join("img2");
        save_complex_image(&base2, &loaded).unwrap();
        let raw1 = fs::read(dir.path().join("img.raw")).unwrap();
        let raw2 = fs::read(dir.path().join("img2.raw")).unwrap();
        assert_eq!(raw1, raw2);
    }

    #[test]
    fn real_image_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("rho");
        let data: Vec<f64> = (0..12).map(|k| k as f64 / 11.0).collect();
        save_real_image(&base, 3, 4, &data).unwrap();
        let (n1, n2, loaded) = load_real_image(&base).unwrap();
        assert_eq!((n1, n2), (3, 4));
        for (a, b) in data.iter().zip(&loaded) {
            assert_eq!(*a as f32, *b as f32);
        }
        assert!(load_complex_image(&base).is_err());
    }

    #[test]
    fn trajectory_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.traj");
        let pts: Vec<[f64; 2]> = (0..8)
            .map(|k| [(k as f64 * 0.3 - 1.0) as f32 as f64, (k as f64 * -0.2) as f32 as f64])
            .collect();
        let scheme = SamplingScheme::new(2, 4, 1, pts).unwrap();
        save_trajectory(&path, &scheme).unwrap();
        let loaded = load_trajectory(&path).unwrap();
        assert_eq!(loaded.n_shots(), 2);
        assert_eq!(loaded.fixed_prefix_len(), 1);
        assert_eq!(loaded.points(), scheme.points());
        let path2 = dir.path().join("t2.traj");
        save_trajectory(&path2, &loaded).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.traj");
        fs::write(&path, b"{\"n_shots\":1,\"p\":4,\"fixed_prefix_len\":0}\n\x00\x00").unwrap();
        assert!(load_trajectory(&path).is_err());
    }
}
