//! Minimal NIfTI-1 single-file (`.nii`, `.nii.gz`) and header/image pair
//! (`.hdr` + `.img`) support.
//!
//! Only the fields needed to move voxels and spatial metadata around are
//! interpreted; NIfTI-2 and header extensions are not supported.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
pub const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
pub const MAGIC_PAIR: &[u8; 4] = b"ni1\0";
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];
/// Header plus the 4-byte extension flag.
const DATA_OFFSET: usize = HEADER_SIZE + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => 2,
            Datatype::Int16 => 4,
            Datatype::Int32 => 8,
            Datatype::Float32 => 16,
            Datatype::Float64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Datatype::Uint8),
            4 => Ok(Datatype::Int16),
            8 => Ok(Datatype::Int32),
            16 => Ok(Datatype::Float32),
            64 => Ok(Datatype::Float64),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    pub fn bytes_per_voxel(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 => 2,
            Datatype::Int32 | Datatype::Float32 => 4,
            Datatype::Float64 => 8,
        }
    }
}

/// Voxel payload in file order (x fastest, then y, z, t).
#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    Uint8(Vec<u8>),
    Int16(Vec<i16>),
    Int32(Vec<i32>),
    Float32(Vec<f32>),
    Float64(Vec<f64>),
}

impl VoxelData {
    pub fn datatype(&self) -> Datatype {
        match self {
            VoxelData::Uint8(_) => Datatype::Uint8,
            VoxelData::Int16(_) => Datatype::Int16,
            VoxelData::Int32(_) => Datatype::Int32,
            VoxelData::Float32(_) => Datatype::Float32,
            VoxelData::Float64(_) => Datatype::Float64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VoxelData::Uint8(v) => v.len(),
            VoxelData::Int16(v) => v.len(),
            VoxelData::Int32(v) => v.len(),
            VoxelData::Float32(v) => v.len(),
            VoxelData::Float64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored values widened to `f64`, without scaling.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            VoxelData::Uint8(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::Int16(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::Int32(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::Float32(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::Float64(v) => v.clone(),
        }
    }

    fn decode(datatype: Datatype, bytes: &[u8], endian: Endian) -> VoxelData {
        fn convert<T: Default + Clone>(
            bytes: &[u8],
            width: usize,
            read: impl Fn(&[u8]) -> T,
        ) -> Vec<T> {
            bytes.chunks_exact(width).map(read).collect()
        }
        macro_rules! decode_as {
            ($variant:ident, $width:expr, $le:expr, $be:expr) => {
                VoxelData::$variant(match endian {
                    Endian::Little => convert(bytes, $width, $le),
                    Endian::Big => convert(bytes, $width, $be),
                })
            };
        }
        match datatype {
            Datatype::Uint8 => VoxelData::Uint8(bytes.to_vec()),
            Datatype::Int16 => decode_as!(Int16, 2, LittleEndian::read_i16, BigEndian::read_i16),
            Datatype::Int32 => decode_as!(Int32, 4, LittleEndian::read_i32, BigEndian::read_i32),
            Datatype::Float32 => {
                decode_as!(Float32, 4, LittleEndian::read_f32, BigEndian::read_f32)
            }
            Datatype::Float64 => {
                decode_as!(Float64, 8, LittleEndian::read_f64, BigEndian::read_f64)
            }
        }
    }

    fn encode<B: ByteOrder>(&self, out: &mut Vec<u8>) {
        match self {
            VoxelData::Uint8(v) => out.extend_from_slice(v),
            VoxelData::Int16(v) => v
                .iter()
                .for_each(|&x| out.write_i16::<B>(x).expect("vec write")),
            VoxelData::Int32(v) => v
                .iter()
                .for_each(|&x| out.write_i32::<B>(x).expect("vec write")),
            VoxelData::Float32(v) => v
                .iter()
                .for_each(|&x| out.write_f32::<B>(x).expect("vec write")),
            VoxelData::Float64(v) => v
                .iter()
                .for_each(|&x| out.write_f64::<B>(x).expect("vec write")),
        }
    }
}

/// Spatial metadata carried through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Orientation {
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub xyzt_units: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NiftiVolume {
    /// Extents `(x[, y[, z[, t]]])`.
    pub dims: Vec<usize>,
    /// Voxel spacing; index 0 holds qfac.
    pub pixdim: [f32; 8],
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub orientation: Orientation,
    /// Byte order used when the volume was read, and when it is written.
    pub endian: Endian,
    pub voxels: VoxelData,
}

impl NiftiVolume {
    pub fn new(dims: Vec<usize>, voxels: VoxelData) -> Result<Self> {
        let volume = Self {
            pixdim: [1.0; 8],
            dims,
            scl_slope: 1.0,
            scl_inter: 0.0,
            orientation: Orientation::default(),
            endian: Endian::Little,
            voxels,
        };
        volume.validate()?;
        Ok(volume)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.len() > 4 {
            return Err(Error::invalid(format!(
                "NIfTI volumes here carry 1 to 4 extents, got {}",
                self.dims.len()
            )));
        }
        if self.dims.iter().any(|&d| d == 0 || d > i16::MAX as usize) {
            return Err(Error::invalid(format!("invalid extents {:?}", self.dims)));
        }
        let expected: usize = self.dims.iter().product();
        if expected != self.voxels.len() {
            return Err(Error::invalid(format!(
                "extents {:?} need {expected} voxels, volume holds {}",
                self.dims,
                self.voxels.len()
            )));
        }
        Ok(())
    }

    pub fn datatype(&self) -> Datatype {
        self.voxels.datatype()
    }

    /// Extent along axis `axis`, 1 for absent trailing axes.
    pub fn extent(&self, axis: usize) -> usize {
        self.dims.get(axis).copied().unwrap_or(1)
    }

    /// Slope actually applied; a stored slope of 0 means "no scaling".
    pub fn effective_slope(&self) -> f64 {
        if self.scl_slope == 0.0 || !self.scl_slope.is_finite() {
            1.0
        } else {
            self.scl_slope as f64
        }
    }

    /// Voxels as reals with `value * slope + intercept` applied.
    pub fn scaled_values(&self) -> Vec<f64> {
        let slope = self.effective_slope();
        let inter = if self.scl_inter.is_finite() {
            self.scl_inter as f64
        } else {
            0.0
        };
        let mut v = self.voxels.to_f64();
        if slope != 1.0 || inter != 0.0 {
            v.iter_mut().for_each(|x| *x = *x * slope + inter);
        }
        v
    }

    /// Copies spacing and orientation from another volume.
    pub fn with_geometry_of(mut self, other: &NiftiVolume) -> Self {
        self.pixdim = other.pixdim;
        self.orientation = other.orientation;
        for i in (self.dims.len() + 1)..8 {
            self.pixdim[i] = 1.0;
        }
        self
    }
}

fn maybe_gunzip(bytes: Vec<u8>) -> Result<Vec<u8>> {
    if bytes.len() >= 2 && bytes[..2] == GZIP_MAGIC {
        let mut out = Vec::new();
        GzDecoder::new(&bytes[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

struct ParsedHeader {
    endian: Endian,
    dims: Vec<usize>,
    datatype: Datatype,
    pixdim: [f32; 8],
    vox_offset: usize,
    scl_slope: f32,
    scl_inter: f32,
    orientation: Orientation,
    single_file: bool,
}

fn parse_header(bytes: &[u8]) -> Result<ParsedHeader> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::NotNifti(format!(
            "only {} bytes, header needs {HEADER_SIZE}",
            bytes.len()
        )));
    }
    let endian = if LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        Endian::Little
    } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(Error::NotNifti("header size field is not 348".into()));
    };
    let magic = &bytes[344..348];
    let single_file = if magic == MAGIC_SINGLE {
        true
    } else if magic == MAGIC_PAIR {
        false
    } else {
        return Err(Error::NotNifti(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    };
    match endian {
        Endian::Little => parse_fields::<LittleEndian>(bytes, endian, single_file),
        Endian::Big => parse_fields::<BigEndian>(bytes, endian, single_file),
    }
}

fn parse_fields<B: ByteOrder>(
    bytes: &[u8],
    endian: Endian,
    single_file: bool,
) -> Result<ParsedHeader> {
    let mut r = Cursor::new(bytes);
    r.set_position(40);
    let mut dim = [0i16; 8];
    r.read_i16_into::<B>(&mut dim)?;
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(Error::NotNifti(format!("dim[0] = {ndim} is out of range")));
    }
    let ndim = ndim as usize;
    if dim[1..=ndim].iter().any(|&d| d < 1) {
        return Err(Error::NotNifti(format!(
            "non-positive extent in {:?}",
            &dim[1..=ndim]
        )));
    }
    if ndim > 4 && dim[5..=ndim].iter().any(|&d| d != 1) {
        return Err(Error::invalid(format!(
            "volumes with more than 4 non-trivial axes are not supported: {:?}",
            &dim[1..=ndim]
        )));
    }
    let dims: Vec<usize> = dim[1..=ndim.min(4)].iter().map(|&d| d as usize).collect();

    r.set_position(70);
    let datatype = Datatype::from_code(r.read_i16::<B>()?)?;
    r.set_position(76);
    let mut pixdim = [0f32; 8];
    r.read_f32_into::<B>(&mut pixdim)?;
    let vox_offset = r.read_f32::<B>()?;
    let scl_slope = r.read_f32::<B>()?;
    let scl_inter = r.read_f32::<B>()?;
    r.set_position(123);
    let xyzt_units = r.read_u8()?;
    r.set_position(252);
    let qform_code = r.read_i16::<B>()?;
    let sform_code = r.read_i16::<B>()?;
    let mut quatern = [0f32; 3];
    r.read_f32_into::<B>(&mut quatern)?;
    let mut qoffset = [0f32; 3];
    r.read_f32_into::<B>(&mut qoffset)?;
    let mut srow_x = [0f32; 4];
    let mut srow_y = [0f32; 4];
    let mut srow_z = [0f32; 4];
    r.read_f32_into::<B>(&mut srow_x)?;
    r.read_f32_into::<B>(&mut srow_y)?;
    r.read_f32_into::<B>(&mut srow_z)?;

    if !(vox_offset >= 0.0 && vox_offset.is_finite()) {
        return Err(Error::NotNifti(format!("invalid vox_offset {vox_offset}")));
    }
    Ok(ParsedHeader {
        endian,
        dims,
        datatype,
        pixdim,
        vox_offset: vox_offset as usize,
        scl_slope,
        scl_inter,
        orientation: Orientation {
            qform_code,
            sform_code,
            quatern,
            qoffset,
            srow_x,
            srow_y,
            srow_z,
            xyzt_units,
        },
        single_file,
    })
}

/// Image file paired with a `.hdr` header.
fn companion_image(path: &Path) -> Option<PathBuf> {
    let name = path.file_name()?.to_str()?;
    let stem = name
        .strip_suffix(".hdr.gz")
        .or_else(|| name.strip_suffix(".hdr"))?;
    [format!("{stem}.img"), format!("{stem}.img.gz")]
        .into_iter()
        .map(|n| path.with_file_name(n))
        .find(|p| p.exists())
}

/// Decodes a NIfTI-1 volume from in-memory bytes of a single-file image.
pub fn parse_nifti(bytes: Vec<u8>) -> Result<NiftiVolume> {
    let bytes = maybe_gunzip(bytes)?;
    let header = parse_header(&bytes)?;
    if !header.single_file {
        return Err(Error::NotNifti(
            "header/image pair needs the companion .img file".into(),
        ));
    }
    let offset = header.vox_offset.max(HEADER_SIZE);
    decode_volume(header, bytes.get(offset..).unwrap_or(&[]))
}

fn decode_volume(header: ParsedHeader, data: &[u8]) -> Result<NiftiVolume> {
    let count: usize = header.dims.iter().product();
    let expected = count * header.datatype.bytes_per_voxel();
    if data.len() < expected {
        return Err(Error::LengthMismatch {
            expected,
            found: data.len(),
        });
    }
    let voxels = VoxelData::decode(header.datatype, &data[..expected], header.endian);
    Ok(NiftiVolume {
        dims: header.dims,
        pixdim: header.pixdim,
        scl_slope: header.scl_slope,
        scl_inter: header.scl_inter,
        orientation: header.orientation,
        endian: header.endian,
        voxels,
    })
}

/// Reads a `.nii`, `.nii.gz` or `.hdr` (+ `.img`) file. Gzip is detected from
/// the content, not the name.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiVolume> {
    let path = path.as_ref();
    let bytes = maybe_gunzip(fs::read(path)?)?;
    let header = parse_header(&bytes)?;
    if header.single_file {
        let offset = header.vox_offset.max(HEADER_SIZE);
        decode_volume(header, bytes.get(offset..).unwrap_or(&[]))
    } else {
        let image = companion_image(path).ok_or_else(|| Error::MissingComponent {
            what: "NIfTI image file for header".into(),
            path: path.to_path_buf(),
        })?;
        let data = maybe_gunzip(fs::read(image)?)?;
        let offset = header.vox_offset;
        decode_volume(header, data.get(offset..).unwrap_or(&[]))
    }
}

/// Serializes a volume as a single-file NIfTI-1 image.
pub fn encode_nifti(volume: &NiftiVolume) -> Result<Vec<u8>> {
    volume.validate()?;
    match volume.endian {
        Endian::Little => Ok(encode_with::<LittleEndian>(volume)),
        Endian::Big => Ok(encode_with::<BigEndian>(volume)),
    }
}

fn encode_with<B: ByteOrder>(v: &NiftiVolume) -> Vec<u8> {
    let datatype = v.datatype();
    let mut out = Vec::with_capacity(DATA_OFFSET + v.voxels.len() * datatype.bytes_per_voxel());
    let w = &mut out;
    let put = |w: &mut Vec<u8>, bytes: &[u8]| w.extend_from_slice(bytes);

    w.write_i32::<B>(HEADER_SIZE as i32).expect("vec write");
    put(w, &[0u8; 35]); // data_type, db_name, extents, session_error, regular
    w.write_u8(0).expect("vec write"); // dim_info
    let mut dim = [1i16; 8];
    dim[0] = v.dims.len() as i16;
    for (slot, &d) in dim[1..].iter_mut().zip(&v.dims) {
        *slot = d as i16;
    }
    dim.iter()
        .for_each(|&d| w.write_i16::<B>(d).expect("vec write"));
    put(w, &[0u8; 12]); // intent_p1..3
    w.write_i16::<B>(0).expect("vec write"); // intent_code
    w.write_i16::<B>(datatype.code()).expect("vec write");
    w.write_i16::<B>((datatype.bytes_per_voxel() * 8) as i16)
        .expect("vec write");
    w.write_i16::<B>(0).expect("vec write"); // slice_start
    v.pixdim
        .iter()
        .for_each(|&p| w.write_f32::<B>(p).expect("vec write"));
    w.write_f32::<B>(DATA_OFFSET as f32).expect("vec write");
    w.write_f32::<B>(v.scl_slope).expect("vec write");
    w.write_f32::<B>(v.scl_inter).expect("vec write");
    w.write_i16::<B>(0).expect("vec write"); // slice_end
    w.write_u8(0).expect("vec write"); // slice_code
    w.write_u8(v.orientation.xyzt_units).expect("vec write");
    put(w, &[0u8; 16]); // cal_max, cal_min, slice_duration, toffset
    put(w, &[0u8; 8]); // glmax, glmin
    put(w, &[0u8; 80 + 24]); // descrip, aux_file
    let o = &v.orientation;
    w.write_i16::<B>(o.qform_code).expect("vec write");
    w.write_i16::<B>(o.sform_code).expect("vec write");
    for &f in o
        .quatern
        .iter()
        .chain(&o.qoffset)
        .chain(&o.srow_x)
        .chain(&o.srow_y)
        .chain(&o.srow_z)
    {
        w.write_f32::<B>(f).expect("vec write");
    }
    put(w, &[0u8; 16]); // intent_name
    put(w, MAGIC_SINGLE);
    debug_assert_eq!(w.len(), HEADER_SIZE);
    put(w, &[0u8; 4]); // no extensions
    v.voxels.encode::<B>(w);
    out
}

/// Writes a single-file NIfTI-1 image, gzip-compressed when the name ends in
/// `.gz`.
pub fn write_nifti(volume: &NiftiVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_nifti(volume)?;
    let gz = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes)?;
        fs::write(path, enc.finish()?)?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 2x2x1 float32 image assembled field by field.
    fn hand_built_fixture() -> Vec<u8> {
        let mut h = vec![0u8; DATA_OFFSET];
        LittleEndian::write_i32(&mut h[0..4], 348);
        for (i, d) in [3i16, 2, 2, 1, 1, 1, 1, 1].iter().enumerate() {
            LittleEndian::write_i16(&mut h[40 + 2 * i..], *d);
        }
        LittleEndian::write_i16(&mut h[70..], 16);
        LittleEndian::write_i16(&mut h[72..], 32);
        for i in 0..8 {
            LittleEndian::write_f32(&mut h[76 + 4 * i..], 1.0);
        }
        LittleEndian::write_f32(&mut h[108..], 352.0);
        LittleEndian::write_f32(&mut h[112..], 1.0);
        h[344..348].copy_from_slice(b"n+1\0");
        for v in [1.0f32, 2.0, 3.0, 4.0] {
            h.extend_from_slice(&v.to_le_bytes());
        }
        h
    }

    #[test]
    fn reads_hand_built_fixture() {
        let v = parse_nifti(hand_built_fixture()).unwrap();
        assert_eq!(v.dims, vec![2, 2, 1]);
        assert_eq!(v.voxels, VoxelData::Float32(vec![1.0, 2.0, 3.0, 4.0]));
        assert_eq!(v.endian, Endian::Little);
    }

    #[test]
    fn byte_swapped_header_flips_endianness() {
        let le = parse_nifti(hand_built_fixture()).unwrap();
        let mut be = le.clone();
        be.endian = Endian::Big;
        let bytes = encode_nifti(&be).unwrap();
        assert_eq!(&bytes[0..4], &[0, 0, 1, 0x5c]);
        let back = parse_nifti(bytes).unwrap();
        assert_eq!(back.endian, Endian::Big);
        assert_eq!(back.voxels, le.voxels);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = hand_built_fixture();
        bytes[344..348].copy_from_slice(b"XXXX");
        let err = parse_nifti(bytes).unwrap_err();
        assert!(matches!(err, Error::NotNifti(_)), "{err}");
        assert!(err.to_string().starts_with("not a NIfTI-1 file"));
    }

    #[test]
    fn unsupported_datatype_and_truncation() {
        let mut bytes = hand_built_fixture();
        LittleEndian::write_i16(&mut bytes[70..], 128); // RGB24
        assert!(matches!(
            parse_nifti(bytes),
            Err(Error::UnsupportedDatatype(128))
        ));
        let mut bytes = hand_built_fixture();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            parse_nifti(bytes),
            Err(Error::LengthMismatch {
                expected: 16,
                found: 13
            })
        ));
    }

    #[test]
    fn slope_zero_means_identity() {
        let mut v = NiftiVolume::new(vec![3], VoxelData::Int16(vec![1, -2, 3])).unwrap();
        v.scl_slope = 0.0;
        assert_eq!(v.scaled_values(), vec![1.0, -2.0, 3.0]);
        v.scl_slope = 2.0;
        v.scl_inter = 0.5;
        assert_eq!(v.scaled_values(), vec![2.5, -3.5, 6.5]);
    }

    #[test]
    fn header_image_pair() {
        let dir = tempfile::tempdir().unwrap();
        let v = parse_nifti(hand_built_fixture()).unwrap();
        let mut bytes = encode_nifti(&v).unwrap();
        bytes[344..348].copy_from_slice(MAGIC_PAIR);
        // pair images keep vox_offset 0 into the .img file
        LittleEndian::write_f32(&mut bytes[108..], 0.0);
        let payload = bytes.split_off(DATA_OFFSET);
        fs::write(dir.path().join("a.hdr"), &bytes[..HEADER_SIZE]).unwrap();
        fs::write(dir.path().join("a.img"), payload).unwrap();
        let back = read_nifti(dir.path().join("a.hdr")).unwrap();
        assert_eq!(back.voxels, v.voxels);
        fs::remove_file(dir.path().join("a.img")).unwrap();
        assert!(matches!(
            read_nifti(dir.path().join("a.hdr")),
            Err(Error::MissingComponent { .. })
        ));
    }
}
