//! Dense 3D volumes, binary masks, NIfTI-1 I/O and voxel morphology.
//!
//! All volumes are stored z-outermost: the voxel at `(z, y, x)` lives at
//! linear index `(z * ny + y) * nx + x`. This is the same ordering as the
//! x-fastest NIfTI payload, so reading and writing never permutes data.

mod morphology;
mod nifti;

pub use morphology::{
    connected_components, dilate, surface_voxels, Connectivity, LabelVolume, StructuringElement,
};
pub use nifti::{load_volume, read_volume, save_volume, write_volume, HEADER_SIZE, VOX_OFFSET};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("invalid dimensions {0:?}: every axis must be positive")]
    InvalidDims([usize; 3]),
    #[error("invalid spacing {0:?}: every component must be finite and > 0")]
    InvalidSpacing([f32; 3]),
    #[error("data length {actual} does not match dims {dims:?} (expected {expected})")]
    LengthMismatch {
        dims: [usize; 3],
        expected: usize,
        actual: usize,
    },
    #[error("mask voxel {index} has value {value}; masks must be 0 or 1")]
    NonBinaryMask { index: usize, value: f64 },
    #[error("volume grids differ: {left} vs {right}")]
    GridMismatch { left: String, right: String },
    #[error("malformed header field `{field}`: {detail}")]
    Header { field: &'static str, detail: String },
    #[error("unsupported datatype code {0} (expected 2, 16 or 64)")]
    UnsupportedDatatype(i16),
    #[error("truncated payload: need {expected} bytes after vox_offset, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Voxel layout shared by every volume: `(nz, ny, nx)` dims and
/// `(sz, sy, sx)` spacing in millimetres.
///
/// Spacing is kept in single precision because that is how the file header
/// stores it, which keeps save/load bit-exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: [f32; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f32; 3]) -> Result<Self, VolumeError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(VolumeError::InvalidDims(dims));
        }
        if dims.iter().any(|&d| d > i16::MAX as usize) {
            return Err(VolumeError::InvalidDims(dims));
        }
        if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(VolumeError::InvalidSpacing(spacing));
        }
        Ok(Self { dims, spacing })
    }

    /// Unit-spacing grid.
    pub fn unit(dims: [usize; 3]) -> Result<Self, VolumeError> {
        Self::new(dims, [1.0; 3])
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [_, ny, nx] = self.dims;
        [index / (ny * nx), (index / nx) % ny, index % nx]
    }

    pub fn spacing_f64(&self) -> [f64; 3] {
        self.spacing.map(f64::from)
    }

    /// Linear indices of the in-bounds face neighbours of `index`.
    pub fn face_neighbors(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.coords(index);
        let dims = self.dims;
        FACE6.iter().filter_map(move |off| {
            let mut n = [0usize; 3];
            for a in 0..3 {
                let v = c[a] as isize + off[a];
                if v < 0 || v >= dims[a] as isize {
                    return None;
                }
                n[a] = v as usize;
            }
            Some(self.index(n[0], n[1], n[2]))
        })
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<(), VolumeError> {
        if self != other {
            return Err(VolumeError::GridMismatch {
                left: self.describe(),
                right: other.describe(),
            });
        }
        Ok(())
    }

    pub(crate) fn ensure_same_dims(&self, other: &Grid) -> Result<(), VolumeError> {
        if self.dims != other.dims {
            return Err(VolumeError::GridMismatch {
                left: self.describe(),
                right: other.describe(),
            });
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!("dims {:?} spacing {:?}", self.dims, self.spacing)
    }
}

pub(crate) const FACE6: [[isize; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Uint8,
    Float32,
    Float64,
}

impl DType {
    pub fn nifti_code(self) -> i16 {
        match self {
            DType::Uint8 => 2,
            DType::Float32 => 16,
            DType::Float64 => 64,
        }
    }

    pub fn from_nifti_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(DType::Uint8),
            16 => Some(DType::Float32),
            64 => Some(DType::Float64),
            _ => None,
        }
    }

    pub fn bits(self) -> i16 {
        match self {
            DType::Uint8 => 8,
            DType::Float32 => 32,
            DType::Float64 => 64,
        }
    }
}

/// Typed voxel payload.
#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::F32(v) => v.len(),
            VoxelData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            VoxelData::U8(_) => DType::Uint8,
            VoxelData::F32(_) => DType::Float32,
            VoxelData::F64(_) => DType::Float64,
        }
    }

    #[inline]
    pub fn get_f64(&self, i: usize) -> f64 {
        match self {
            VoxelData::U8(v) => f64::from(v[i]),
            VoxelData::F32(v) => f64::from(v[i]),
            VoxelData::F64(v) => v[i],
        }
    }
}

/// A dense scalar volume (CT, PET, probability, entropy, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3 {
    grid: Grid,
    data: VoxelData,
}

impl Volume3 {
    pub fn new(grid: Grid, data: VoxelData) -> Result<Self, VolumeError> {
        if data.len() != grid.len() {
            return Err(VolumeError::LengthMismatch {
                dims: grid.dims,
                expected: grid.len(),
                actual: data.len(),
            });
        }
        Ok(Self { grid, data })
    }

    pub fn from_f64(grid: Grid, data: Vec<f64>) -> Result<Self, VolumeError> {
        Self::new(grid, VoxelData::F64(data))
    }

    pub fn from_f32(grid: Grid, data: Vec<f32>) -> Result<Self, VolumeError> {
        Self::new(grid, VoxelData::F32(data))
    }

    pub fn filled(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            data: VoxelData::F64(vec![value; grid.len()]),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.grid.spacing
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, index: usize) -> f64 {
        self.data.get_f64(index)
    }

    /// Values widened to `f64`.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            VoxelData::F64(v) => v.clone(),
            VoxelData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            VoxelData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
        }
    }

    pub fn into_data(self) -> VoxelData {
        self.data
    }
}

/// Binary mask: a `uint8` volume whose voxels are all 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask3 {
    grid: Grid,
    data: Vec<u8>,
}

// Spacing is validated finite on construction.
impl Eq for Grid {}

impl Mask3 {
    pub fn new(grid: Grid, data: Vec<u8>) -> Result<Self, VolumeError> {
        if data.len() != grid.len() {
            return Err(VolumeError::LengthMismatch {
                dims: grid.dims,
                expected: grid.len(),
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(VolumeError::NonBinaryMask {
                index,
                value: value as f64,
            });
        }
        Ok(Self { grid, data })
    }

    /// Mask from a volume of any datatype whose values are exactly 0 or 1.
    pub fn from_binary_volume(vol: &Volume3) -> Result<Self, VolumeError> {
        let mut data = Vec::with_capacity(vol.len());
        for index in 0..vol.len() {
            match vol.get(index) {
                v if v == 0.0 => data.push(0),
                v if v == 1.0 => data.push(1),
                value => return Err(VolumeError::NonBinaryMask { index, value }),
            }
        }
        Ok(Self { grid: *vol.grid(), data })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            data: vec![0; grid.len()],
        }
    }

    pub fn ones(grid: Grid) -> Self {
        Self {
            grid,
            data: vec![1; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize) -> bool) -> Self {
        let data = (0..grid.len()).map(|i| u8::from(f(i))).collect();
        Self { grid, data }
    }

    /// Mask with the given linear indices set.
    pub fn from_indices(grid: Grid, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::zeros(grid);
        for i in indices {
            m.data[i] = 1;
        }
        m
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.grid.spacing
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        self.data[index] != 0
    }

    #[inline]
    pub fn set(&mut self, index: usize, value: bool) {
        self.data[index] = u8::from(value);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Linear indices of foreground voxels, ascending.
    pub fn foreground(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i)
    }

    pub fn union(&self, other: &Mask3) -> Result<Mask3, VolumeError> {
        self.grid.ensure_same_dims(&other.grid)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a | b).collect();
        Ok(Mask3 {
            grid: self.grid,
            data,
        })
    }

    pub fn intersection(&self, other: &Mask3) -> Result<Mask3, VolumeError> {
        self.grid.ensure_same_dims(&other.grid)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a & b).collect();
        Ok(Mask3 {
            grid: self.grid,
            data,
        })
    }

    /// Voxels in `self` but not in `other`.
    pub fn difference(&self, other: &Mask3) -> Result<Mask3, VolumeError> {
        self.grid.ensure_same_dims(&other.grid)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a & (1 - b))
            .collect();
        Ok(Mask3 {
            grid: self.grid,
            data,
        })
    }

    pub fn with_spacing(mut self, spacing: [f32; 3]) -> Result<Self, VolumeError> {
        self.grid = Grid::new(self.grid.dims, spacing)?;
        Ok(self)
    }

    pub fn to_volume(&self) -> Volume3 {
        Volume3 {
            grid: self.grid,
            data: VoxelData::U8(self.data.clone()),
        }
    }
}

impl TryFrom<Volume3> for Mask3 {
    type Error = VolumeError;

    /// Accepts `uint8` volumes only.
    fn try_from(vol: Volume3) -> Result<Self, Self::Error> {
        let grid = vol.grid;
        match vol.data {
            VoxelData::U8(v) => Mask3::new(grid, v),
            other => Err(VolumeError::Header {
                field: "datatype",
                detail: format!("mask volumes must be uint8, found {:?}", other.dtype()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_and_coords_invert() {
        let g = Grid::unit([3, 4, 5]).unwrap();
        for i in 0..g.len() {
            let [z, y, x] = g.coords(i);
            assert_eq!(g.index(z, y, x), i);
        }
        assert_eq!(g.index(1, 0, 0), 20);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new([0, 1, 1], [1.0; 3]).is_err());
        assert!(Grid::new([1, 1, 1], [1.0, 0.0, 1.0]).is_err());
        assert!(Grid::new([1, 1, 1], [1.0, f32::NAN, 1.0]).is_err());
    }

    #[test]
    fn mask_must_be_binary() {
        let g = Grid::unit([1, 1, 3]).unwrap();
        let err = Mask3::new(g, vec![0, 2, 1]).unwrap_err();
        assert!(matches!(err, VolumeError::NonBinaryMask { index: 1, value } if value == 2.0));
    }

    #[test]
    fn float_masks_convert_when_binary() {
        let g = Grid::unit([1, 1, 3]).unwrap();
        let ok = Volume3::from_f32(g, vec![0.0, 1.0, 1.0]).unwrap();
        assert_eq!(Mask3::from_binary_volume(&ok).unwrap().as_slice(), &[0, 1, 1]);
        let bad = Volume3::from_f64(g, vec![0.0, 0.5, 1.0]).unwrap();
        let err = Mask3::from_binary_volume(&bad).unwrap_err();
        assert!(matches!(err, VolumeError::NonBinaryMask { index: 1, value } if value == 0.5));
    }

    #[test]
    fn length_must_match_dims() {
        let g = Grid::unit([2, 2, 2]).unwrap();
        assert!(Volume3::from_f64(g, vec![0.0; 7]).is_err());
    }

    #[test]
    fn face_neighbors_clip_at_bounds() {
        let g = Grid::unit([3, 3, 3]).unwrap();
        assert_eq!(g.face_neighbors(0).count(), 3);
        assert_eq!(g.face_neighbors(g.index(1, 1, 1)).count(), 6);
    }
}
