//! On-disk MPI archive: a directory holding `manifest.json`, one 16-bit RGB
//! PNG per plane color and one raw little-endian `f32` file per plane density.

use std::fs;
use std::path::Path;

use mpi_stereo_core::{DensityMode, Plane, PlaneSpec, PlaneStack, ScalarMap};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{read_image, write_image, BitDepth};

pub const ARCHIVE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub version: u32,
    pub height: usize,
    pub width: usize,
    pub n_planes: usize,
    pub disparities: Vec<f64>,
    pub density_mode: String,
    pub depth_normalization: String,
}

pub fn color_file(n: usize) -> String {
    format!("plane_{n:02}_color.png")
}

pub fn density_file(n: usize) -> String {
    format!("plane_{n:02}_density.f32")
}

pub fn write_archive(
    dir: &Path,
    stack: &PlaneStack,
    depth_normalization: &str,
) -> Result<ArchiveManifest> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let manifest = ArchiveManifest {
        version: ARCHIVE_VERSION,
        height: stack.height(),
        width: stack.width(),
        n_planes: stack.n_planes(),
        disparities: stack.spec().disparities().to_vec(),
        density_mode: stack.density_mode().as_str().to_string(),
        depth_normalization: depth_normalization.to_string(),
    };
    for (n, plane) in stack.planes().iter().enumerate() {
        write_image(&dir.join(color_file(n)), &plane.color, BitDepth::Sixteen)?;
        let bytes: Vec<u8> = plane
            .density
            .data()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let path = dir.join(density_file(n));
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    }
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

pub fn read_archive(dir: &Path) -> Result<(PlaneStack, ArchiveManifest)> {
    let corrupt = CliError::CorruptArchive;
    let path = dir.join(MANIFEST_FILE);
    let text =
        fs::read_to_string(&path).map_err(|e| corrupt(format!("{}: {e}", path.display())))?;
    let manifest: ArchiveManifest =
        serde_json::from_str(&text).map_err(|e| corrupt(format!("{}: {e}", path.display())))?;
    if manifest.version != ARCHIVE_VERSION {
        return Err(corrupt(format!("unsupported version {}", manifest.version)));
    }
    if manifest.n_planes != manifest.disparities.len() {
        return Err(corrupt(format!(
            "n_planes = {} but {} disparities",
            manifest.n_planes,
            manifest.disparities.len()
        )));
    }
    let spec = PlaneSpec::from_disparities(manifest.disparities.clone())
        .map_err(|e| corrupt(format!("disparities: {e}")))?;
    let mode = DensityMode::parse(&manifest.density_mode)
        .ok_or_else(|| corrupt(format!("unknown density mode {:?}", manifest.density_mode)))?;
    let (h, w) = (manifest.height, manifest.width);
    let mut planes = Vec::with_capacity(manifest.n_planes);
    for n in 0..manifest.n_planes {
        let cpath = dir.join(color_file(n));
        if !cpath.is_file() {
            return Err(corrupt(format!("missing {}", cpath.display())));
        }
        let (color, _) = read_image(&cpath).map_err(|e| corrupt(e.to_string()))?;
        if color.height() != h || color.width() != w {
            return Err(corrupt(format!(
                "{} is {}x{}, manifest says {h}x{w}",
                cpath.display(),
                color.height(),
                color.width()
            )));
        }
        let dpath = dir.join(density_file(n));
        let bytes = fs::read(&dpath).map_err(|e| corrupt(format!("{}: {e}", dpath.display())))?;
        if bytes.len() != h * w * 4 {
            return Err(corrupt(format!(
                "{} holds {} bytes, expected {}",
                dpath.display(),
                bytes.len(),
                h * w * 4
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let density =
            ScalarMap::new(h, w, data).map_err(|e| corrupt(format!("{}: {e}", dpath.display())))?;
        planes.push(Plane { color, density });
    }
    let extra = dir.join(color_file(manifest.n_planes));
    if extra.exists() {
        return Err(corrupt(format!(
            "found {} beyond the {} planes in the manifest",
            extra.display(),
            manifest.n_planes
        )));
    }
    let stack = PlaneStack::new(spec, planes, mode).map_err(|e| corrupt(e.to_string()))?;
    Ok((stack, manifest))
}
