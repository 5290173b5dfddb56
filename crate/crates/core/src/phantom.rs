//! Synthetic PET/CT phantoms with a matching ground truth and a simulated
//! segmentation probability map.
//!
//! True lesions get a confident probability, false-positive blobs get a
//! probability inside the uncertain entropy band (they are over-segmented by
//! the simulated network but carry background-like PET/CT), and everything
//! else is confidently background. Probability bands are clamped against the
//! band derived from `alpha`, so the role of every voxel is known in advance.
//!
//! Noise is a counter-based generator: each voxel's Gaussian sample is a pure
//! function of `(seed, channel, voxel index)` (SplitMix64 hashing followed by
//! Box–Muller), so output does not depend on evaluation order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::uncertainty::uncertain_band;
use crate::volume::{Grid, Mask3, Volume3, VolumeError};

/// Clearance kept between clamped probabilities and the band edges.
pub const BAND_MARGIN: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("lesion {index}: {reason}")]
    Lesion { index: usize, reason: String },
    #[error("false positive {index}: {reason}")]
    FalsePositive { index: usize, reason: String },
    #[error("invalid phantom spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lesion {
    /// `(z, y, x)` voxel coordinates.
    pub center: [f64; 3],
    /// Ellipsoid semi-axes in voxels.
    pub radii: [f64; 3],
    /// Added to the PET background inside the lesion.
    pub pet_intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsePositive {
    pub center: [f64; 3],
    pub radii: [f64; 3],
    /// Mean probability inside the blob; must lie in the uncertain band and
    /// above `beta`.
    pub prob_level: f64,
    #[serde(default)]
    pub pet_intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub sd: f64,
}

fn default_alpha() -> f64 {
    0.8
}
fn default_beta() -> f64 {
    0.5
}
fn default_lesion_prob() -> f64 {
    0.95
}
fn default_background_prob() -> f64 {
    0.02
}
fn default_ct_offset() -> f64 {
    40.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    /// `(nz, ny, nx)`
    pub dims: [usize; 3],
    /// `(sz, sy, sx)` in millimetres.
    pub spacing: [f32; 3],
    #[serde(default)]
    pub lesions: Vec<Lesion>,
    #[serde(default)]
    pub false_positives: Vec<FalsePositive>,
    pub pet_background: Stats,
    pub ct_background: Stats,
    /// Standard deviation of the noise added to the probability map.
    pub noise_sd: f64,
    /// Half-width of the PET box blur, in voxels (0 disables it).
    pub blur_radius: usize,
    pub seed: u64,
    #[serde(default = "default_ct_offset")]
    pub ct_lesion_offset: f64,
    #[serde(default = "default_lesion_prob")]
    pub lesion_prob: f64,
    #[serde(default = "default_background_prob")]
    pub background_prob: f64,
    /// Entropy threshold the probability bands are built against.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl PhantomSpec {
    /// A blank spec with mild noise and no structures.
    pub fn empty(dims: [usize; 3], spacing: [f32; 3], seed: u64) -> Self {
        Self {
            dims,
            spacing,
            lesions: Vec::new(),
            false_positives: Vec::new(),
            pet_background: Stats { mean: 1.0, sd: 0.2 },
            ct_background: Stats { mean: 0.0, sd: 20.0 },
            noise_sd: 0.01,
            blur_radius: 1,
            seed,
            ct_lesion_offset: default_ct_offset(),
            lesion_prob: default_lesion_prob(),
            background_prob: default_background_prob(),
            alpha: default_alpha(),
            beta: default_beta(),
        }
    }

    /// Probability clamp ranges `(background, false positive, lesion)`.
    fn bands(&self) -> Result<[(f64, f64); 3], PhantomError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(PhantomError::Spec(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(PhantomError::Spec(format!("beta = {} must lie in (0, 1)", self.beta)));
        }
        let (lo, hi) = uncertain_band(self.alpha).expect("alpha < 1 has a band");
        let background = (0.0, lo.min(self.beta) - BAND_MARGIN);
        let fp = (lo.max(self.beta) + BAND_MARGIN, hi - BAND_MARGIN);
        let lesion = (hi.max(self.beta) + BAND_MARGIN, 1.0);
        for (name, (a, b)) in [("background", background), ("false-positive", fp), ("lesion", lesion)] {
            if !(a < b) {
                return Err(PhantomError::Spec(format!(
                    "{name} probability band [{a}, {b}] is empty for alpha = {}, beta = {}",
                    self.alpha, self.beta
                )));
            }
        }
        Ok([background, fp, lesion])
    }

    pub fn validate(&self) -> Result<Grid, PhantomError> {
        let grid = Grid::new(self.dims, self.spacing)?;
        let [_, fp_band, _] = self.bands()?;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !nonneg(self.noise_sd) || !nonneg(self.pet_background.sd) || !nonneg(self.ct_background.sd) {
            return Err(PhantomError::Spec("standard deviations must be finite and >= 0".into()));
        }
        for (index, l) in self.lesions.iter().enumerate() {
            check_ellipsoid(&grid, l.center, l.radii)
                .map_err(|reason| PhantomError::Lesion { index, reason })?;
        }
        for (index, f) in self.false_positives.iter().enumerate() {
            let err = |reason: String| PhantomError::FalsePositive { index, reason };
            check_ellipsoid(&grid, f.center, f.radii).map_err(err)?;
            if !(f.prob_level >= fp_band.0 && f.prob_level <= fp_band.1) {
                return Err(err(format!(
                    "prob_level {} must lie in the uncertain band above beta, [{:.4}, {:.4}]",
                    f.prob_level, fp_band.0, fp_band.1
                )));
            }
            let blob = ellipsoid_mask(&grid, f.center, f.radii);
            if let Some(li) = self
                .lesions
                .iter()
                .position(|l| blob.foreground().any(|v| inside(&grid, v, l.center, l.radii)))
            {
                return Err(err(format!("overlaps lesion {li}")));
            }
        }
        Ok(grid)
    }
}

fn check_ellipsoid(grid: &Grid, center: [f64; 3], radii: [f64; 3]) -> Result<(), String> {
    if radii.iter().any(|r| !r.is_finite() || *r <= 0.0) {
        return Err(format!("radii {radii:?} must be finite and positive"));
    }
    for a in 0..3 {
        let (lo, hi) = (center[a] - radii[a], center[a] + radii[a]);
        if !(lo >= 0.0 && hi <= (grid.dims[a] - 1) as f64) {
            return Err(format!(
                "ellipsoid centred at {center:?} with radii {radii:?} leaves the volume {:?}",
                grid.dims
            ));
        }
    }
    Ok(())
}

#[inline]
fn inside(grid: &Grid, voxel: usize, center: [f64; 3], radii: [f64; 3]) -> bool {
    let c = grid.coords(voxel);
    (0..3)
        .map(|a| {
            let t = (c[a] as f64 - center[a]) / radii[a];
            t * t
        })
        .sum::<f64>()
        <= 1.0
}

fn ellipsoid_mask(grid: &Grid, center: [f64; 3], radii: [f64; 3]) -> Mask3 {
    Mask3::from_fn(*grid, |i| inside(grid, i, center, radii))
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Standard normal sample keyed by `(seed, stream, index)`.
pub fn counter_normal(seed: u64, stream: u64, index: u64) -> f64 {
    let key = splitmix64(seed ^ splitmix64(stream.wrapping_mul(0xD1B5_4A32_D192_ED03)));
    let u1 = splitmix64(key.wrapping_add(index.wrapping_mul(2)));
    let u2 = splitmix64(key.wrapping_add(index.wrapping_mul(2) + 1));
    // (0, 1] and [0, 1) with 53-bit resolution
    let a = ((u1 >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let b = (u2 >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos()
}

const STREAM_PET: u64 = 1;
const STREAM_CT: u64 = 2;
const STREAM_PROB: u64 = 3;

/// Separable box blur; windows are clipped at the volume edge and averaged
/// over the voxels they cover.
fn box_blur(grid: &Grid, data: &mut [f64], radius: usize) {
    if radius == 0 {
        return;
    }
    let dims = grid.dims;
    let strides = [dims[1] * dims[2], dims[2], 1];
    let mut line = Vec::new();
    for axis in 0..3 {
        let n = dims[axis];
        let stride = strides[axis];
        line.resize(n, 0.0);
        for start in 0..grid.len() {
            if (start / stride) % n != 0 {
                continue;
            }
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = data[start + k * stride];
            }
            for k in 0..n {
                let lo = k.saturating_sub(radius);
                let hi = (k + radius).min(n - 1);
                let sum: f64 = line[lo..=hi].iter().sum();
                data[start + k * stride] = sum / (hi - lo + 1) as f64;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub ct: Volume3,
    pub pet: Volume3,
    pub gt: Mask3,
    pub prob: Volume3,
    /// Voxels of the injected false-positive blobs.
    pub false_positive: Mask3,
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom, PhantomError> {
    let grid = spec.validate()?;
    let [bg_band, fp_band, lesion_band] = spec.bands()?;
    let n = grid.len();

    let mut gt = Mask3::zeros(grid);
    let mut pet_add = vec![0.0; n];
    let mut ct_add = vec![0.0; n];
    for l in &spec.lesions {
        for v in ellipsoid_mask(&grid, l.center, l.radii).foreground() {
            gt.set(v, true);
            pet_add[v] += l.pet_intensity;
            ct_add[v] = spec.ct_lesion_offset;
        }
    }
    let mut false_positive = Mask3::zeros(grid);
    let mut fp_level = vec![f64::NAN; n];
    for f in &spec.false_positives {
        for v in ellipsoid_mask(&grid, f.center, f.radii).foreground() {
            false_positive.set(v, true);
            pet_add[v] += f.pet_intensity;
            fp_level[v] = f.prob_level;
        }
    }

    let seed = spec.seed;
    let mut pet: Vec<f64> = (0..n)
        .map(|i| {
            spec.pet_background.mean
                + spec.pet_background.sd * counter_normal(seed, STREAM_PET, i as u64)
                + pet_add[i]
        })
        .collect();
    box_blur(&grid, &mut pet, spec.blur_radius);
    let ct: Vec<f32> = (0..n)
        .map(|i| {
            (spec.ct_background.mean
                + spec.ct_background.sd * counter_normal(seed, STREAM_CT, i as u64)
                + ct_add[i]) as f32
        })
        .collect();
    let prob: Vec<f32> = (0..n)
        .map(|i| {
            let noise = spec.noise_sd * counter_normal(seed, STREAM_PROB, i as u64);
            let (base, band) = if gt.get(i) {
                (spec.lesion_prob, lesion_band)
            } else if false_positive.get(i) {
                (fp_level[i], fp_band)
            } else {
                (spec.background_prob, bg_band)
            };
            (base + noise).clamp(band.0, band.1) as f32
        })
        .collect();

    Ok(Phantom {
        ct: Volume3::from_f32(grid, ct)?,
        pet: Volume3::from_f32(grid, pet.into_iter().map(|v| v as f32).collect())?,
        gt,
        prob: Volume3::from_f32(grid, prob)?,
        false_positive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::{threshold_mask, Comparison};

    fn one_lesion(seed: u64) -> PhantomSpec {
        let mut s = PhantomSpec::empty([24, 24, 24], [2.0, 1.5, 1.5], seed);
        s.lesions.push(Lesion {
            center: [8.0, 8.0, 8.0],
            radii: [4.0, 3.0, 3.5],
            pet_intensity: 5.0,
        });
        s.noise_sd = 0.2;
        s
    }

    #[test]
    fn normal_samples_look_standard() {
        let xs: Vec<f64> = (0..20_000).map(|i| counter_normal(7, 0, i)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.03, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
        assert_ne!(counter_normal(7, 0, 1), counter_normal(7, 1, 1));
        assert_ne!(counter_normal(7, 0, 1), counter_normal(8, 0, 1));
    }

    #[test]
    fn empty_spec_is_all_background() {
        let p = generate_phantom(&PhantomSpec::empty([6, 7, 8], [1.0; 3], 3)).unwrap();
        let (lo, _) = uncertain_band(0.8).unwrap();
        assert_eq!(p.gt.count(), 0);
        assert!((0..p.prob.len()).all(|i| p.prob.get(i) < lo));
    }

    #[test]
    fn single_lesion_threshold_matches_truth() {
        let spec = one_lesion(11);
        let p = generate_phantom(&spec).unwrap();
        assert!(p.gt.count() > 100);
        assert_eq!(threshold_mask(&p.prob, 0.5, Comparison::Greater), p.gt);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate_phantom(&one_lesion(5)).unwrap(), generate_phantom(&one_lesion(5)).unwrap());
        assert_ne!(generate_phantom(&one_lesion(5)).unwrap().pet, generate_phantom(&one_lesion(6)).unwrap().pet);
    }

    #[test]
    fn out_of_bounds_lesion_names_index() {
        let mut spec = one_lesion(0);
        spec.lesions.push(Lesion {
            center: [22.0, 5.0, 5.0],
            radii: [3.0, 3.0, 3.0],
            pet_intensity: 1.0,
        });
        let err = generate_phantom(&spec).unwrap_err();
        assert!(matches!(err, PhantomError::Lesion { index: 1, .. }), "{err}");
    }

    #[test]
    fn false_positive_level_must_be_uncertain() {
        let mut spec = one_lesion(0);
        spec.false_positives.push(FalsePositive {
            center: [18.0, 18.0, 18.0],
            radii: [2.0, 2.0, 2.0],
            prob_level: 0.9,
            pet_intensity: 0.0,
        });
        assert!(matches!(
            generate_phantom(&spec),
            Err(PhantomError::FalsePositive { index: 0, .. })
        ));
    }

    #[test]
    fn blur_preserves_constants_and_mean_of_impulse() {
        let g = Grid::unit([5, 5, 5]).unwrap();
        let mut c = vec![2.5; g.len()];
        box_blur(&g, &mut c, 2);
        assert!(c.iter().all(|&v| (v - 2.5).abs() < 1e-12));
        let mut d = vec![0.0; g.len()];
        d[g.index(2, 2, 2)] = 27.0;
        box_blur(&g, &mut d, 1);
        assert!((d[g.index(2, 2, 2)] - 1.0).abs() < 1e-12);
        assert!((d[g.index(1, 1, 1)] - 1.0).abs() < 1e-12);
        assert_eq!(d[g.index(0, 0, 0)], 0.0);
    }
}
