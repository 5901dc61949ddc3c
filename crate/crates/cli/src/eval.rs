//! Image-quality evaluation over matched directories of predictions and references.

use std::path::{Path, PathBuf};

use mpi_stereo_core::{l1, psnr, ssim};
use serde::Serialize;

use crate::config::list_images;
use crate::error::{CliError, Result};
use crate::io::{read_depth, read_image};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    pub l1: f64,
    pub depth_l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub frames: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub l1: f64,
    pub depth_l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub frames: Vec<FrameMetrics>,
    pub aggregate: Aggregate,
}

fn paired(a: &Path, b: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let (la, lb) = (list_images(a)?, list_images(b)?);
    if la.len() != lb.len() {
        return Err(CliError::ListMismatch(format!(
            "{} holds {} images, {} holds {}",
            a.display(),
            la.len(),
            b.display(),
            lb.len()
        )));
    }
    if la.is_empty() {
        return Err(CliError::ListMismatch(format!(
            "{} holds no images",
            a.display()
        )));
    }
    Ok(la.into_iter().zip(lb).collect())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Pairs files by sorted name order. Depth directories are optional but
/// must be given together.
pub fn eval_dirs(
    pred: &Path,
    gt: &Path,
    pred_depth: Option<&Path>,
    ref_depth: Option<&Path>,
) -> Result<EvalReport> {
    let pairs = paired(pred, gt)?;
    let depth_pairs = match (pred_depth, ref_depth) {
        (Some(p), Some(r)) => {
            let d = paired(p, r)?;
            if d.len() != pairs.len() {
                return Err(CliError::ListMismatch(format!(
                    "{} image pairs but {} depth pairs",
                    pairs.len(),
                    d.len()
                )));
            }
            Some(d)
        }
        (None, None) => None,
        _ => {
            return Err(CliError::Config(
                "give both depth directories or neither".into(),
            ))
        }
    };
    let mut frames = Vec::with_capacity(pairs.len());
    for (i, (p, g)) in pairs.iter().enumerate() {
        let (a, _) = read_image(p)?;
        let (b, _) = read_image(g)?;
        let depth_l1 = match &depth_pairs {
            Some(d) => {
                let (da, _) = read_depth(&d[i].0)?;
                let (db, _) = read_depth(&d[i].1)?;
                Some(l1(&da, &db)?)
            }
            None => None,
        };
        frames.push(FrameMetrics {
            name: p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            psnr: psnr(&a, &b)?,
            ssim: ssim(&a, &b)?,
            l1: l1(&a, &b)?,
            depth_l1,
        });
    }
    let aggregate = Aggregate {
        frames: frames.len(),
        psnr: mean(frames.iter().map(|f| f.psnr)),
        ssim: mean(frames.iter().map(|f| f.ssim)),
        l1: mean(frames.iter().map(|f| f.l1)),
        depth_l1: depth_pairs.map(|_| mean(frames.iter().filter_map(|f| f.depth_l1))),
    };
    Ok(EvalReport { frames, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{write_image, BitDepth};
    use mpi_stereo_core::ImageBuffer;

    #[test]
    fn identical_sets_hit_the_cap() {
        let dir = tempfile::tempdir().unwrap();
        let (p, g) = (dir.path().join("p"), dir.path().join("g"));
        std::fs::create_dir_all(&p).unwrap();
        std::fs::create_dir_all(&g).unwrap();
        for i in 0..2 {
            let img = ImageBuffer::from_fn(16, 16, 3, |y, x, c| ((x + y + c + i) % 5) as f32 / 4.0)
                .unwrap();
            write_image(&p.join(format!("{i}.png")), &img, BitDepth::Eight).unwrap();
            write_image(&g.join(format!("{i}.png")), &img, BitDepth::Eight).unwrap();
        }
        let r = eval_dirs(&p, &g, None, None).unwrap();
        assert_eq!(r.aggregate.frames, 2);
        assert_eq!(r.aggregate.psnr, 100.0);
        assert!((r.aggregate.ssim - 1.0).abs() < 1e-12);
        assert!(r.aggregate.depth_l1.is_none());

        std::fs::remove_file(g.join("1.png")).unwrap();
        assert!(matches!(
            eval_dirs(&p, &g, None, None),
            Err(CliError::ListMismatch(_))
        ));
    }
}
