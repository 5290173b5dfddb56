//! Minimal single-file NIfTI-1 (`.nii`) reader and writer.
//!
//! Only the fields needed to describe a 3D grid are honoured: `dim[0..=3]`,
//! `datatype`, `bitpix`, `pixdim[1..=3]`, `vox_offset` and `magic`. Every
//! other header byte is written as zero and ignored on read. Orientation
//! (qform/sform) is not interpreted.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{DType, Grid, Volume3, VolumeError, VoxelData};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte (all zero) extension flag.
pub const VOX_OFFSET: usize = 352;

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_MAGIC: usize = 344;
const MAGIC: &[u8; 4] = b"n+1\0";

fn io_err(path: &Path, source: std::io::Error) -> VolumeError {
    VolumeError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume3, VolumeError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    read_volume(&mut bytes.as_slice())
}

pub fn save_volume(vol: &Volume3, path: impl AsRef<Path>) -> Result<(), VolumeError> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(VOX_OFFSET + vol.len() * 8);
    write_volume(vol, &mut buf).map_err(|e| io_err(path, e))?;
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Parse a volume from a byte stream holding a complete `.nii` file.
pub fn read_volume(reader: &mut impl Read) -> Result<Volume3, VolumeError> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(Path::new("<stream>"), e))?;
    if bytes.len() < HEADER_SIZE {
        return Err(VolumeError::Header {
            field: "sizeof_hdr",
            detail: format!("file is {} bytes, shorter than a header", bytes.len()),
        });
    }
    let hdr = &bytes[..HEADER_SIZE];

    let sizeof_hdr = i32::from_le_bytes([hdr[0], hdr[1], hdr[2], hdr[3]]);
    if sizeof_hdr != HEADER_SIZE as i32 {
        let detail = if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
            "big-endian files are not supported".to_string()
        } else {
            format!("expected 348, found {sizeof_hdr}")
        };
        return Err(VolumeError::Header {
            field: "sizeof_hdr",
            detail,
        });
    }
    if &hdr[OFF_MAGIC..OFF_MAGIC + 4] != MAGIC {
        return Err(VolumeError::Header {
            field: "magic",
            detail: format!(
                "expected \"n+1\\0\", found {:?}",
                &hdr[OFF_MAGIC..OFF_MAGIC + 4]
            ),
        });
    }

    let ndim = i16_at(hdr, OFF_DIM);
    if ndim != 3 {
        return Err(VolumeError::Header {
            field: "dim[0]",
            detail: format!("expected 3 dimensions, found {ndim}"),
        });
    }
    let mut xyz = [0usize; 3];
    for (a, slot) in xyz.iter_mut().enumerate() {
        let d = i16_at(hdr, OFF_DIM + 2 * (a + 1));
        if d <= 0 {
            return Err(VolumeError::Header {
                field: "dim",
                detail: format!("dim[{}] = {d} must be positive", a + 1),
            });
        }
        *slot = d as usize;
    }

    let code = i16_at(hdr, OFF_DATATYPE);
    let dtype = DType::from_nifti_code(code).ok_or(VolumeError::UnsupportedDatatype(code))?;
    let bitpix = i16_at(hdr, OFF_BITPIX);
    if bitpix != dtype.bits() {
        return Err(VolumeError::Header {
            field: "bitpix",
            detail: format!("datatype {code} needs bitpix {}, found {bitpix}", dtype.bits()),
        });
    }

    let mut pix_xyz = [0f32; 3];
    for (a, slot) in pix_xyz.iter_mut().enumerate() {
        *slot = f32_at(hdr, OFF_PIXDIM + 4 * (a + 1));
    }
    let spacing = [pix_xyz[2], pix_xyz[1], pix_xyz[0]];
    if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(VolumeError::Header {
            field: "pixdim",
            detail: format!("pixdim[1..=3] = {pix_xyz:?} must be finite and positive"),
        });
    }

    let vox_offset = f32_at(hdr, OFF_VOX_OFFSET);
    if !(vox_offset >= HEADER_SIZE as f32) || vox_offset.fract() != 0.0 {
        return Err(VolumeError::Header {
            field: "vox_offset",
            detail: format!("expected an integral offset >= 348, found {vox_offset}"),
        });
    }
    let start = vox_offset as usize;

    let grid = Grid::new([xyz[2], xyz[1], xyz[0]], spacing)?;
    let elem = (dtype.bits() / 8) as usize;
    let expected = grid.len() * elem;
    let actual = bytes.len().saturating_sub(start);
    if actual < expected {
        return Err(VolumeError::Truncated { expected, actual });
    }
    let payload = &bytes[start..start + expected];

    let data = match dtype {
        DType::Uint8 => VoxelData::U8(payload.to_vec()),
        DType::Float32 => VoxelData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        DType::Float64 => VoxelData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Volume3::new(grid, data)
}

pub fn write_volume(vol: &Volume3, w: &mut impl Write) -> std::io::Result<()> {
    let mut hdr = [0u8; VOX_OFFSET];
    hdr[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());

    let [nz, ny, nx] = vol.dims();
    let dim: [i16; 4] = [3, nx as i16, ny as i16, nz as i16];
    for (k, d) in dim.iter().enumerate() {
        hdr[OFF_DIM + 2 * k..OFF_DIM + 2 * k + 2].copy_from_slice(&d.to_le_bytes());
    }
    // Unused trailing dims are 1 by convention so viewers read a 3D grid.
    for k in 4..8 {
        hdr[OFF_DIM + 2 * k..OFF_DIM + 2 * k + 2].copy_from_slice(&1i16.to_le_bytes());
    }

    let dtype = vol.dtype();
    hdr[OFF_DATATYPE..OFF_DATATYPE + 2].copy_from_slice(&dtype.nifti_code().to_le_bytes());
    hdr[OFF_BITPIX..OFF_BITPIX + 2].copy_from_slice(&dtype.bits().to_le_bytes());

    let [sz, sy, sx] = vol.spacing();
    let pixdim: [f32; 4] = [1.0, sx, sy, sz];
    for (k, p) in pixdim.iter().enumerate() {
        hdr[OFF_PIXDIM + 4 * k..OFF_PIXDIM + 4 * k + 4].copy_from_slice(&p.to_le_bytes());
    }
    hdr[OFF_VOX_OFFSET..OFF_VOX_OFFSET + 4].copy_from_slice(&(VOX_OFFSET as f32).to_le_bytes());
    hdr[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(MAGIC);
    w.write_all(&hdr)?;

    match vol.data() {
        VoxelData::U8(v) => w.write_all(v)?,
        VoxelData::F32(v) => {
            let mut buf = Vec::with_capacity(v.len() * 4);
            v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
            w.write_all(&buf)?;
        }
        VoxelData::F64(v) => {
            let mut buf = Vec::with_capacity(v.len() * 8);
            v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(vol: &Volume3) -> Vec<u8> {
        let mut buf = Vec::new();
        write_volume(vol, &mut buf).unwrap();
        buf
    }

    #[test]
    fn zeros_roundtrip() {
        let g = Grid::unit([4, 4, 4]).unwrap();
        let v = Volume3::from_f32(g, vec![0.0; 64]).unwrap();
        let back = read_volume(&mut encode(&v).as_slice()).unwrap();
        assert_eq!(back.dims(), [4, 4, 4]);
        assert_eq!(back, v);
    }

    #[test]
    fn mask_uses_datatype_2() {
        let g = Grid::unit([1, 2, 2]).unwrap();
        let v = Volume3::new(g, VoxelData::U8(vec![0, 1, 1, 0])).unwrap();
        let bytes = encode(&v);
        assert_eq!(i16_at(&bytes, OFF_DATATYPE), 2);
        assert_eq!(i16_at(&bytes, OFF_BITPIX), 8);
        assert_eq!(bytes.len(), VOX_OFFSET + 4);
    }

    #[test]
    fn pixdim_is_xyz_order() {
        let g = Grid::new([2, 3, 4], [3.0, 2.0, 2.5]).unwrap();
        let v = Volume3::filled(g, 1.0);
        let bytes = encode(&v);
        assert_eq!(f32_at(&bytes, OFF_PIXDIM + 4), 2.5);
        assert_eq!(f32_at(&bytes, OFF_PIXDIM + 8), 2.0);
        assert_eq!(f32_at(&bytes, OFF_PIXDIM + 12), 3.0);
        assert_eq!(i16_at(&bytes, OFF_DIM + 2), 4);
        assert_eq!(i16_at(&bytes, OFF_DIM + 6), 2);
    }

    #[test]
    fn anisotropic_roundtrip_keeps_axis_order() {
        let g = Grid::new([2, 3, 4], [3.0, 2.0, 2.5]).unwrap();
        let v = Volume3::from_f64(g, (0..24).map(f64::from).collect()).unwrap();
        let back = read_volume(&mut encode(&v).as_slice()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.get(g.index(1, 2, 3)), 23.0);
    }

    #[test]
    fn bad_sizeof_hdr_is_named() {
        let g = Grid::unit([1, 1, 1]).unwrap();
        let mut bytes = encode(&Volume3::filled(g, 0.0));
        bytes[0..4].copy_from_slice(&347i32.to_le_bytes());
        let err = read_volume(&mut bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("sizeof_hdr"), "{err}");
    }

    #[test]
    fn bad_magic_is_named() {
        let g = Grid::unit([1, 1, 1]).unwrap();
        let mut bytes = encode(&Volume3::filled(g, 0.0));
        bytes[OFF_MAGIC] = b'x';
        let err = read_volume(&mut bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn unsupported_datatype() {
        let g = Grid::unit([1, 1, 1]).unwrap();
        let mut bytes = encode(&Volume3::filled(g, 0.0));
        bytes[OFF_DATATYPE..OFF_DATATYPE + 2].copy_from_slice(&4i16.to_le_bytes());
        let err = read_volume(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(err, VolumeError::UnsupportedDatatype(4)));
    }

    #[test]
    fn truncated_payload() {
        let g = Grid::unit([2, 2, 2]).unwrap();
        let bytes = encode(&Volume3::filled(g, 0.0));
        let err = read_volume(&mut &bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(
            err,
            VolumeError::Truncated {
                expected: 64,
                actual: 63
            }
        ));
    }

    #[test]
    fn inconsistent_bitpix() {
        let g = Grid::unit([1, 1, 1]).unwrap();
        let mut bytes = encode(&Volume3::filled(g, 0.0));
        bytes[OFF_BITPIX..OFF_BITPIX + 2].copy_from_slice(&32i16.to_le_bytes());
        let err = read_volume(&mut bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("bitpix"), "{err}");
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.nii");
        let g = Grid::new([3, 2, 1], [1.5, 0.75, 4.0]).unwrap();
        let v = Volume3::from_f32(g, vec![1.0, -2.0, 3.5, f32::MIN, f32::MAX, 0.0]).unwrap();
        save_volume(&v, &path).unwrap();
        assert_eq!(load_volume(&path).unwrap(), v);
    }
}
