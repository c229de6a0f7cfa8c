//! File formats: SCIT tensors and 8-bit grayscale PNG frames.
//!
//! SCIT layout (little-endian throughout):
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 0..4         | magic `SCIT`                              |
//! | 4            | version `0x01`                            |
//! | 5            | dtype `0x01` = f32, `0x02` = f64          |
//! | 6            | ndim                                      |
//! | 7..7+4·ndim  | dims as u32, ordered (nx, ny, nt)         |
//! | rest         | payload, frame-major, column-major frames |

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::Path;

use crate::cube::DataCube;
use crate::error::{Result, SciError};
use crate::masks::MaskStack;
use crate::operator::{Measurement, SensingMode};

pub const SCIT_MAGIC: &[u8; 4] = b"SCIT";
pub const SCIT_VERSION: u8 = 0x01;
const HEADER_FIXED: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScitDtype {
    F32,
    F64,
}

impl ScitDtype {
    pub fn code(self) -> u8 {
        match self {
            ScitDtype::F32 => 0x01,
            ScitDtype::F64 => 0x02,
        }
    }

    fn width(self) -> usize {
        match self {
            ScitDtype::F32 => 4,
            ScitDtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScitTensor {
    pub dtype: ScitDtype,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn encode_scit(dims: &[usize], data: &[f64], dtype: ScitDtype) -> Result<Vec<u8>> {
    if dims.is_empty() || dims.len() > u8::MAX as usize {
        return Err(SciError::invalid(format!("unsupported tensor rank {}", dims.len())));
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| SciError::invalid("tensor size overflows"))?;
    if count != data.len() {
        return Err(SciError::mismatch(format!(
            "dims {dims:?} describe {count} values, got {}",
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_FIXED + 4 * dims.len() + count * dtype.width());
    out.extend_from_slice(SCIT_MAGIC);
    out.push(SCIT_VERSION);
    out.push(dtype.code());
    out.push(dims.len() as u8);
    for &d in dims {
        let d = u32::try_from(d)
            .map_err(|_| SciError::invalid(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match dtype {
        ScitDtype::F32 => data
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        ScitDtype::F64 => data
            .iter()
            .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

pub fn decode_scit(bytes: &[u8]) -> Result<ScitTensor> {
    if bytes.len() < 4 || &bytes[..4] != SCIT_MAGIC {
        return Err(SciError::format(0, "missing SCIT magic"));
    }
    if bytes.len() < HEADER_FIXED {
        return Err(SciError::format(bytes.len() as u64, "truncated header"));
    }
    if bytes[4] != SCIT_VERSION {
        return Err(SciError::format(4, format!("unsupported version 0x{:02x}", bytes[4])));
    }
    let dtype = match bytes[5] {
        0x01 => ScitDtype::F32,
        0x02 => ScitDtype::F64,
        other => return Err(SciError::format(5, format!("unknown dtype 0x{other:02x}"))),
    };
    let ndim = bytes[6] as usize;
    if ndim == 0 {
        return Err(SciError::format(6, "tensor rank must be >= 1"));
    }
    let header = HEADER_FIXED + 4 * ndim;
    if bytes.len() < header {
        return Err(SciError::format(bytes.len() as u64, "truncated dimension list"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|d| {
            let at = HEADER_FIXED + 4 * d;
            u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
        })
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| SciError::format(HEADER_FIXED as u64, "tensor size overflows"))?;
    let expected = count
        .checked_mul(dtype.width())
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| SciError::format(HEADER_FIXED as u64, "tensor size overflows"))?;
    if bytes.len() != expected {
        return Err(SciError::format(
            bytes.len().min(expected) as u64,
            format!("payload length mismatch: file has {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    let payload = &bytes[header..];
    let data = match dtype {
        ScitDtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        ScitDtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok(ScitTensor { dtype, dims, data })
}

/// Writes via a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| SciError::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| SciError::invalid(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = File::create(&tmp).map_err(|e| SciError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| SciError::io(&tmp, e))?;
        f.sync_all().map_err(|e| SciError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| SciError::io(path, e))
}

pub fn read_scit(path: &Path) -> Result<ScitTensor> {
    let bytes = fs::read(path).map_err(|e| SciError::io(path, e))?;
    decode_scit(&bytes)
}

pub fn write_scit(path: &Path, dims: &[usize], data: &[f64], dtype: ScitDtype) -> Result<()> {
    write_atomic(path, &encode_scit(dims, data, dtype)?)
}

fn dims3(t: &ScitTensor) -> Result<(usize, usize, usize)> {
    match t.dims.as_slice() {
        [nx, ny] => Ok((*nx, *ny, 1)),
        [nx, ny, nt] => Ok((*nx, *ny, *nt)),
        other => Err(SciError::format(6, format!("expected a 2D or 3D tensor, got dims {other:?}"))),
    }
}

pub fn cube_to_scit(cube: &DataCube, dtype: ScitDtype) -> Result<Vec<u8>> {
    let (nx, ny, nt) = cube.dims();
    encode_scit(&[nx, ny, nt], cube.as_slice(), dtype)
}

pub fn write_cube(path: &Path, cube: &DataCube, dtype: ScitDtype) -> Result<()> {
    write_atomic(path, &cube_to_scit(cube, dtype)?)
}

pub fn read_cube(path: &Path) -> Result<DataCube> {
    let t = read_scit(path)?;
    let (nx, ny, nt) = dims3(&t)?;
    DataCube::from_vec(nx, ny, nt, t.data)
}

pub fn write_masks(path: &Path, masks: &MaskStack) -> Result<()> {
    let (nx, ny, nt) = masks.dims();
    write_scit(path, &[nx, ny, nt], masks.values(), ScitDtype::F64)
}

pub fn read_masks(path: &Path) -> Result<MaskStack> {
    let t = read_scit(path)?;
    let (nx, ny, nt) = dims3(&t)?;
    MaskStack::from_values(nx, ny, nt, t.data)
}

pub fn write_measurement(path: &Path, meas: &Measurement) -> Result<()> {
    write_scit(path, &[meas.rows(), meas.cols()], meas.as_slice(), ScitDtype::F64)
}

/// Reads the raw detector image; mode and frame count come from the caller.
pub fn read_measurement(path: &Path, mode: SensingMode, frames: usize) -> Result<Measurement> {
    let t = read_scit(path)?;
    let (rows, cols, nt) = dims3(&t)?;
    if nt != 1 {
        return Err(SciError::format(6, "measurement tensors must be two-dimensional"));
    }
    Measurement::new(rows, cols, t.data, mode, frames)
}

/// 8-bit grayscale encoding of one `nx x ny` frame (vec order).
pub fn encode_png_frame(nx: usize, ny: usize, frame: &[f64]) -> Result<Vec<u8>> {
    if frame.len() != nx * ny {
        return Err(SciError::mismatch("frame length does not match dims"));
    }
    let mut raster = vec![0u8; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            raster[i * ny + j] = quantize_u8(frame[j * nx + i]);
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, ny as u32, nx as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| SciError::invalid(format!("png encode: {e}")))?;
        writer
            .write_image_data(&raster)
            .map_err(|e| SciError::invalid(format!("png encode: {e}")))?;
    }
    Ok(out)
}

/// `round(255 * clamp(v, 0, 1))`.
#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (255.0 * v).round() as u8
}

pub fn write_png_frames(dir: &Path, stem: &str, cube: &DataCube) -> Result<Vec<std::path::PathBuf>> {
    let (nx, ny, nt) = cube.dims();
    (0..nt)
        .map(|k| {
            let path = dir.join(format!("{stem}_{k:03}.png"));
            write_atomic(&path, &encode_png_frame(nx, ny, cube.frame(k))?)?;
            Ok(path)
        })
        .collect()
}

/// Reads one PNG as a frame in `[0,1]`; color images are converted to luma.
pub fn read_png_frame(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let file = File::open(path).map_err(|e| SciError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder
        .read_info()
        .map_err(|e| SciError::format(0, format!("{}: {e}", path.display())))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| SciError::format(0, "png image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| SciError::format(0, format!("{}: {e}", path.display())))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let (nx, ny) = (h, w);
    let mut frame = vec![0.0; nx * ny];
    for i in 0..nx {
        let row = &buf[i * info.line_size..];
        for j in 0..ny {
            let px = &row[j * channels..(j + 1) * channels];
            let v = match channels {
                1 | 2 => px[0] as f64,
                _ => 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64,
            };
            frame[j * nx + i] = v / 255.0;
        }
    }
    Ok((nx, ny, frame))
}

/// Stacks PNG frames (all of the same size) into a cube.
pub fn read_png_sequence(paths: &[impl AsRef<Path>]) -> Result<DataCube> {
    if paths.is_empty() {
        return Err(SciError::invalid("no PNG frames given"));
    }
    let mut data = Vec::new();
    let mut dims = None;
    for p in paths {
        let (nx, ny, frame) = read_png_frame(p.as_ref())?;
        match dims {
            None => dims = Some((nx, ny)),
            Some(d) if d != (nx, ny) => {
                return Err(SciError::mismatch(format!(
                    "{} is {nx}x{ny}, expected {}x{}",
                    p.as_ref().display(),
                    d.0,
                    d.1
                )))
            }
            _ => {}
        }
        data.extend(frame);
    }
    let (nx, ny) = dims.unwrap();
    DataCube::from_vec(nx, ny, paths.len(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let bytes = encode_scit(&[2, 1, 1], &[1.0, -2.0], ScitDtype::F32).unwrap();
        let mut expected = b"SCIT".to_vec();
        expected.extend_from_slice(&[0x01, 0x01, 0x03]);
        expected.extend_from_slice(&[2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn malformed_headers_report_offsets() {
        let good = encode_scit(&[2, 2], &[0.0; 4], ScitDtype::F64).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_scit(&bad), Err(SciError::Format { offset: 0, .. })));
        let mut bad = good.clone();
        bad[4] = 0x02;
        assert!(matches!(decode_scit(&bad), Err(SciError::Format { offset: 4, .. })));
        let mut bad = good.clone();
        bad[5] = 0x07;
        assert!(matches!(decode_scit(&bad), Err(SciError::Format { offset: 5, .. })));
        assert!(matches!(
            decode_scit(&good[..good.len() - 3]),
            Err(SciError::Format { .. })
        ));
    }

    #[test]
    fn png_quantization_clamps() {
        assert_eq!(quantize_u8(-0.3), 0);
        assert_eq!(quantize_u8(1.7), 255);
        assert_eq!(quantize_u8(0.5), 128);
    }

    #[test]
    fn png_frame_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let cube = DataCube::from_fn(5, 7, 2, |i, j, k| ((i * 7 + j + k) % 11) as f64 / 10.0).unwrap();
        let paths = write_png_frames(dir.path(), "f", &cube).unwrap();
        let back = read_png_sequence(&paths).unwrap();
        assert_eq!(back.dims(), cube.dims());
        for (a, b) in back.as_slice().iter().zip(cube.as_slice()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn scit_f64_roundtrip(nx in 1usize..5, ny in 1usize..5, nt in 1usize..4,
                              vals in proptest::collection::vec(-1e6f64..1e6, 64)) {
            let data: Vec<f64> = vals.iter().cycle().take(nx * ny * nt).copied().collect();
            let bytes = encode_scit(&[nx, ny, nt], &data, ScitDtype::F64).unwrap();
            let t = decode_scit(&bytes).unwrap();
            prop_assert_eq!(t.dims, vec![nx, ny, nt]);
            prop_assert_eq!(t.data, data);
        }
    }
}
