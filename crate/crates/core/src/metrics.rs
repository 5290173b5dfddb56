//! Overlap and surface-distance metrics: Dice, HD95 and ASSD.
//!
//! Surfaces are the face-connected boundary voxels of each mask (see
//! [`surface_voxels`]); distances are measured between voxel centres in
//! physical units. Nearest-surface lookups go through an exact separable
//! Euclidean distance transform, so the cost is linear in the volume size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{surface_voxels, Grid, Mask3};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("mask dims differ: {0:?} vs {1:?}")]
    DimMismatch([usize; 3], [usize; 3]),
    #[error("{0} mask is empty; surface distances are undefined")]
    EmptyMask(&'static str),
    #[error("spacing {0:?} must be finite and positive")]
    InvalidSpacing([f64; 3]),
}

fn check_pair(a: &Mask3, b: &Mask3) -> Result<(), MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::DimMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// `2|P ∩ G| / (|P| + |G|)`, or 1 when both masks are empty.
pub fn dice(pred: &Mask3, gt: &Mask3) -> Result<f64, MetricsError> {
    check_pair(pred, gt)?;
    let (mut inter, mut p, mut g) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.as_slice().iter().zip(gt.as_slice()) {
        p += a as usize;
        g += b as usize;
        inter += (a & b) as usize;
    }
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

/// Linear-interpolation percentile of an ascending slice, `q` in `[0, 100]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

const INF: f64 = f64::INFINITY;

/// 1D squared-distance transform of sampled function `f` with sample pitch `w`.
fn edt_line(f: &[f64], w: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    let w2 = w * w;
    let key = |p: usize| f[p] + w2 * (p * p) as f64;
    for q in 0..n {
        if f[q] == INF {
            continue;
        }
        if v.is_empty() {
            v.push(q);
            z.push(-INF);
            continue;
        }
        loop {
            let p = *v.last().unwrap();
            let s = (key(q) - key(p)) / (2.0 * w2 * (q - p) as f64);
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
                if v.is_empty() {
                    v.push(q);
                    z.push(-INF);
                    break;
                }
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = INF);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let d = (q as f64 - v[k] as f64) * w;
        *o = d * d + f[v[k]];
    }
}

/// Squared physical distance from every voxel to the nearest site.
fn squared_distance_field(grid: &Grid, sites: &[[usize; 3]], spacing: [f64; 3]) -> Vec<f64> {
    let [nz, ny, nx] = grid.dims;
    let mut field = vec![INF; grid.len()];
    for &[z, y, x] in sites {
        field[grid.index(z, y, x)] = 0.0;
    }
    // Axis 2 (x): contiguous rows.
    field.par_chunks_mut(nx).for_each_init(
        || (vec![0.0; nx], Vec::new(), Vec::new()),
        |(out, v, zs), row| {
            edt_line(row, spacing[2], out, v, zs);
            row.copy_from_slice(out);
        },
    );
    // Axis 1 (y): for each z-slab, lines stride nx.
    field.par_chunks_mut(ny * nx).for_each_init(
        || (vec![0.0; ny], vec![0.0; ny], Vec::new(), Vec::new()),
        |(line, out, v, zs), slab| {
            for x in 0..nx {
                for y in 0..ny {
                    line[y] = slab[y * nx + x];
                }
                edt_line(line, spacing[1], out, v, zs);
                for y in 0..ny {
                    slab[y * nx + x] = out[y];
                }
            }
        },
    );
    // Axis 0 (z): lines stride ny*nx; compute per (y, x) column then scatter.
    let plane = ny * nx;
    let columns: Vec<Vec<f64>> = (0..plane)
        .into_par_iter()
        .map_init(
            || (vec![0.0; nz], Vec::new(), Vec::new()),
            |(line, v, zs), c| {
                for z in 0..nz {
                    line[z] = field[z * plane + c];
                }
                let mut out = vec![0.0; nz];
                edt_line(line, spacing[0], &mut out, v, zs);
                out
            },
        )
        .collect();
    for (c, col) in columns.into_iter().enumerate() {
        for (z, val) in col.into_iter().enumerate() {
            field[z * plane + c] = val;
        }
    }
    field
}

fn check_spacing(spacing: [f64; 3]) -> Result<(), MetricsError> {
    if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(MetricsError::InvalidSpacing(spacing));
    }
    Ok(())
}

/// Directed surface distances in both directions: for each surface voxel of
/// `a`, the distance to the nearest surface voxel of `b`, and vice versa.
/// Each list follows the ascending linear order of its source surface.
pub fn surface_distances(
    a: &Mask3,
    b: &Mask3,
    spacing: [f64; 3],
) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    check_pair(a, b)?;
    check_spacing(spacing)?;
    let sa = surface_voxels(a);
    let sb = surface_voxels(b);
    if sa.is_empty() {
        return Err(MetricsError::EmptyMask("first"));
    }
    if sb.is_empty() {
        return Err(MetricsError::EmptyMask("second"));
    }
    let grid = *a.grid();
    let lookup = |from: &[[usize; 3]], to: &[[usize; 3]]| -> Vec<f64> {
        let field = squared_distance_field(&grid, to, spacing);
        from.par_iter()
            .map(|&[z, y, x]| field[grid.index(z, y, x)].sqrt())
            .collect()
    };
    Ok((lookup(&sa, &sb), lookup(&sb, &sa)))
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Larger of the two directed 95th-percentile surface distances.
pub fn hd95(pred: &Mask3, gt: &Mask3, spacing: [f64; 3]) -> Result<f64, MetricsError> {
    let (ab, ba) = surface_distances(pred, gt, spacing)?;
    Ok(percentile(&sorted(ab), 95.0).max(percentile(&sorted(ba), 95.0)))
}

/// Mean of all directed surface distances in both directions.
pub fn assd(pred: &Mask3, gt: &Mask3, spacing: [f64; 3]) -> Result<f64, MetricsError> {
    let (ab, ba) = surface_distances(pred, gt, spacing)?;
    let total = ab.iter().sum::<f64>() + ba.iter().sum::<f64>();
    Ok(total / (ab.len() + ba.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceCounts {
    pub pred: usize,
    pub gt: usize,
}

/// All three metrics for one prediction. Surface metrics are `None` when
/// either mask is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dice: f64,
    pub hd95: Option<f64>,
    pub assd: Option<f64>,
    pub surfaces: SurfaceCounts,
    /// `(sz, sy, sx)` in millimetres.
    pub spacing: [f64; 3],
}

pub fn evaluate(pred: &Mask3, gt: &Mask3, spacing: [f64; 3]) -> Result<MetricsReport, MetricsError> {
    let dice = dice(pred, gt)?;
    check_spacing(spacing)?;
    let surfaces = SurfaceCounts {
        pred: surface_voxels(pred).len(),
        gt: surface_voxels(gt).len(),
    };
    let (hd95, assd) = match surface_distances(pred, gt, spacing) {
        Ok((ab, ba)) => {
            let total = ab.iter().sum::<f64>() + ba.iter().sum::<f64>();
            let assd = total / (ab.len() + ba.len()) as f64;
            let hd = percentile(&sorted(ab), 95.0).max(percentile(&sorted(ba), 95.0));
            (Some(hd), Some(assd))
        }
        Err(MetricsError::EmptyMask(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        dice,
        hd95,
        assd,
        surfaces,
        spacing,
    })
}
