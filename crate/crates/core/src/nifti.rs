//! NIfTI-1 single-file (`.nii` / `.nii.gz`) reading and writing.
//!
//! Headers are decoded in whichever byte order makes `sizeof_hdr == 348`.
//! Voxel data is read either all at once ([`read_nifti`]) or in z-slabs
//! ([`SlabReader`]) so several large volumes can be processed in lockstep
//! without holding them in memory.
//!
//! Intensity scaling (`scl_slope`/`scl_inter`) is applied on read; the
//! writer always stores slope 1 and intercept 0. Header extensions are
//! skipped on read and never written.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{diagonal_affine, Affine, Dims, ElementKind, Volume, VoxelData};

pub const HEADER_SIZE: usize = 348;
const NIFTI2_HEADER_SIZE: i32 = 540;
/// Offset of the voxel data in files written by this crate (header plus
/// the 4-byte extension indicator).
pub const DEFAULT_VOX_OFFSET: f32 = 352.0;
pub const MAGIC_SINGLE: [u8; 4] = *b"n+1\0";
pub const MAGIC_PAIR: [u8; 4] = *b"ni1\0";

const GZIP_ID: [u8; 2] = [0x1f, 0x8b];

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM_INFO: usize = 39;
    pub const DIM: usize = 40;
    pub const INTENT_P1: usize = 56;
    pub const INTENT_CODE: usize = 68;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const CAL_MAX: usize = 124;
    pub const CAL_MIN: usize = 128;
    pub const DESCRIP: usize = 148;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const SROW_Y: usize = 296;
    pub const SROW_Z: usize = 312;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Endianness {
    #[default]
    Little,
    Big,
}

impl Endianness {
    pub fn native() -> Self {
        if cfg!(target_endian = "big") {
            Endianness::Big
        } else {
            Endianness::Little
        }
    }
}

/// On-disk element types accepted by the reader.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiskType {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl DiskType {
    pub fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => DiskType::U8,
            4 => DiskType::I16,
            8 => DiskType::I32,
            16 => DiskType::F32,
            64 => DiskType::F64,
            other => return Err(Error::UnsupportedDatatype(other)),
        })
    }

    pub fn bitpix(self) -> i16 {
        match self {
            DiskType::U8 => 8,
            DiskType::I16 => 16,
            DiskType::I32 | DiskType::F32 => 32,
            DiskType::F64 => 64,
        }
    }

    pub fn bytes(self) -> usize {
        self.bitpix() as usize / 8
    }

    /// In-memory element kind after decoding (before intensity scaling).
    pub fn element_kind(self) -> ElementKind {
        match self {
            DiskType::U8 => ElementKind::U8,
            DiskType::I16 => ElementKind::I16,
            DiskType::I32 | DiskType::F32 | DiskType::F64 => ElementKind::F32,
        }
    }
}

/// Decoded NIfTI-1 header. Fields not listed here are written as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim_info: u8,
    pub dim: [i16; 8],
    pub intent_p: [f32; 3],
    pub intent_code: i16,
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub xyzt_units: u8,
    pub cal_max: f32,
    pub cal_min: f32,
    pub descrip: [u8; 80],
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub magic: [u8; 4],
    /// Byte order the header was decoded with (and the writer will use).
    pub endianness: Endianness,
}

impl Default for NiftiHeader {
    fn default() -> Self {
        NiftiHeader {
            sizeof_hdr: HEADER_SIZE as i32,
            dim_info: 0,
            dim: [3, 1, 1, 1, 1, 1, 1, 1],
            intent_p: [0.0; 3],
            intent_code: 0,
            datatype: ElementKind::F32.nifti_code(),
            bitpix: ElementKind::F32.bitpix(),
            pixdim: [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            vox_offset: DEFAULT_VOX_OFFSET,
            scl_slope: 1.0,
            scl_inter: 0.0,
            xyzt_units: 2, // mm
            cal_max: 0.0,
            cal_min: 0.0,
            descrip: [0; 80],
            qform_code: 0,
            sform_code: 0,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            srow_x: [1.0, 0.0, 0.0, 0.0],
            srow_y: [0.0, 1.0, 0.0, 0.0],
            srow_z: [0.0, 0.0, 1.0, 0.0],
            magic: MAGIC_SINGLE,
            endianness: Endianness::Little,
        }
    }
}

struct Fields<'a> {
    buf: &'a [u8],
    big: bool,
}

impl Fields<'_> {
    fn i16(&self, off: usize) -> i16 {
        if self.big {
            BigEndian::read_i16(&self.buf[off..])
        } else {
            LittleEndian::read_i16(&self.buf[off..])
        }
    }
    fn i32(&self, off: usize) -> i32 {
        if self.big {
            BigEndian::read_i32(&self.buf[off..])
        } else {
            LittleEndian::read_i32(&self.buf[off..])
        }
    }
    fn f32(&self, off: usize) -> f32 {
        if self.big {
            BigEndian::read_f32(&self.buf[off..])
        } else {
            LittleEndian::read_f32(&self.buf[off..])
        }
    }
    fn f32s<const N: usize>(&self, off: usize) -> [f32; N] {
        std::array::from_fn(|k| self.f32(off + 4 * k))
    }
}

struct FieldsMut<'a> {
    buf: &'a mut [u8],
    big: bool,
}

impl FieldsMut<'_> {
    fn i16(&mut self, off: usize, v: i16) {
        if self.big {
            BigEndian::write_i16(&mut self.buf[off..], v)
        } else {
            LittleEndian::write_i16(&mut self.buf[off..], v)
        }
    }
    fn i32(&mut self, off: usize, v: i32) {
        if self.big {
            BigEndian::write_i32(&mut self.buf[off..], v)
        } else {
            LittleEndian::write_i32(&mut self.buf[off..], v)
        }
    }
    fn f32(&mut self, off: usize, v: f32) {
        if self.big {
            BigEndian::write_f32(&mut self.buf[off..], v)
        } else {
            LittleEndian::write_f32(&mut self.buf[off..], v)
        }
    }
    fn f32s(&mut self, off: usize, vs: &[f32]) {
        for (k, &v) in vs.iter().enumerate() {
            self.f32(off + 4 * k, v);
        }
    }
}

impl NiftiHeader {
    /// Decode and validate a 348-byte header.
    pub fn parse(buf: &[u8]) -> Result<Self> {
        if buf.len() < HEADER_SIZE {
            return Err(Error::TruncatedData {
                expected: HEADER_SIZE,
                found: buf.len(),
            });
        }
        let le = LittleEndian::read_i32(buf);
        let be = BigEndian::read_i32(buf);
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&buf[offsets::MAGIC..offsets::MAGIC + 4]);
        let big = if le == HEADER_SIZE as i32 {
            false
        } else if be == HEADER_SIZE as i32 {
            true
        } else if le == NIFTI2_HEADER_SIZE || be == NIFTI2_HEADER_SIZE {
            return Err(Error::Nifti2Unsupported);
        } else {
            return Err(Error::BadMagic {
                sizeof_hdr: le,
                magic,
            });
        };
        if magic == MAGIC_PAIR {
            return Err(Error::PairFormUnsupported);
        }
        if magic != MAGIC_SINGLE {
            return Err(Error::BadMagic {
                sizeof_hdr: HEADER_SIZE as i32,
                magic,
            });
        }

        let f = Fields { buf, big };
        let mut descrip = [0u8; 80];
        descrip.copy_from_slice(&buf[offsets::DESCRIP..offsets::DESCRIP + 80]);
        let hdr = NiftiHeader {
            sizeof_hdr: f.i32(offsets::SIZEOF_HDR),
            dim_info: buf[offsets::DIM_INFO],
            dim: std::array::from_fn(|k| f.i16(offsets::DIM + 2 * k)),
            intent_p: f.f32s(offsets::INTENT_P1),
            intent_code: f.i16(offsets::INTENT_CODE),
            datatype: f.i16(offsets::DATATYPE),
            bitpix: f.i16(offsets::BITPIX),
            pixdim: f.f32s(offsets::PIXDIM),
            vox_offset: f.f32(offsets::VOX_OFFSET),
            scl_slope: f.f32(offsets::SCL_SLOPE),
            scl_inter: f.f32(offsets::SCL_INTER),
            xyzt_units: buf[offsets::XYZT_UNITS],
            cal_max: f.f32(offsets::CAL_MAX),
            cal_min: f.f32(offsets::CAL_MIN),
            descrip,
            qform_code: f.i16(offsets::QFORM_CODE),
            sform_code: f.i16(offsets::SFORM_CODE),
            quatern: f.f32s(offsets::QUATERN_B),
            qoffset: f.f32s(offsets::QOFFSET_X),
            srow_x: f.f32s(offsets::SROW_X),
            srow_y: f.f32s(offsets::SROW_Y),
            srow_z: f.f32s(offsets::SROW_Z),
            magic,
            endianness: if big {
                Endianness::Big
            } else {
                Endianness::Little
            },
        };
        hdr.validate()?;
        Ok(hdr)
    }

    fn validate(&self) -> Result<()> {
        let rank = self.dim[0];
        if !(3..=4).contains(&rank) {
            return Err(Error::InvalidHeader(format!(
                "dim[0]={rank}, expected 3 or 4"
            )));
        }
        for k in 1..=rank as usize {
            if self.dim[k] < 1 {
                return Err(Error::InvalidHeader(format!("dim[{k}]={}", self.dim[k])));
            }
        }
        if rank == 4 && self.dim[4] != 1 {
            return Err(Error::InvalidHeader(format!(
                "4D series with {} frames not supported",
                self.dim[4]
            )));
        }
        let disk = DiskType::from_code(self.datatype)?;
        if self.bitpix != disk.bitpix() {
            return Err(Error::InvalidHeader(format!(
                "bitpix {} inconsistent with datatype {}",
                self.bitpix, self.datatype
            )));
        }
        if !(self.vox_offset >= DEFAULT_VOX_OFFSET) {
            return Err(Error::InvalidHeader(format!(
                "vox_offset {} below 352",
                self.vox_offset
            )));
        }
        Ok(())
    }

    /// Encode the header in `self.endianness`.
    pub fn to_bytes(&self) -> [u8; HEADER_SIZE] {
        let mut buf = [0u8; HEADER_SIZE];
        buf[offsets::DIM_INFO] = self.dim_info;
        buf[offsets::XYZT_UNITS] = self.xyzt_units;
        buf[offsets::DESCRIP..offsets::DESCRIP + 80].copy_from_slice(&self.descrip);
        buf[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(&self.magic);
        let mut f = FieldsMut {
            buf: &mut buf,
            big: self.endianness == Endianness::Big,
        };
        f.i32(offsets::SIZEOF_HDR, self.sizeof_hdr);
        for (k, &d) in self.dim.iter().enumerate() {
            f.i16(offsets::DIM + 2 * k, d);
        }
        f.f32s(offsets::INTENT_P1, &self.intent_p);
        f.i16(offsets::INTENT_CODE, self.intent_code);
        f.i16(offsets::DATATYPE, self.datatype);
        f.i16(offsets::BITPIX, self.bitpix);
        f.f32s(offsets::PIXDIM, &self.pixdim);
        f.f32(offsets::VOX_OFFSET, self.vox_offset);
        f.f32(offsets::SCL_SLOPE, self.scl_slope);
        f.f32(offsets::SCL_INTER, self.scl_inter);
        f.f32(offsets::CAL_MAX, self.cal_max);
        f.f32(offsets::CAL_MIN, self.cal_min);
        f.i16(offsets::QFORM_CODE, self.qform_code);
        f.i16(offsets::SFORM_CODE, self.sform_code);
        f.f32s(offsets::QUATERN_B, &self.quatern);
        f.f32s(offsets::QOFFSET_X, &self.qoffset);
        f.f32s(offsets::SROW_X, &self.srow_x);
        f.f32s(offsets::SROW_Y, &self.srow_y);
        f.f32s(offsets::SROW_Z, &self.srow_z);
        buf
    }

    /// A fresh header describing `volume` (little-endian, sform from the
    /// volume's affine).
    pub fn for_volume(volume: &Volume) -> Self {
        NiftiHeader::default().adapted_to(volume)
    }

    /// Copy of this header with geometry, datatype and scaling rewritten to
    /// describe `volume`. Descriptive fields, units, qform and byte order are
    /// kept.
    pub fn adapted_to(&self, volume: &Volume) -> Self {
        let mut h = self.clone();
        let [nx, ny, nz] = volume.shape();
        h.sizeof_hdr = HEADER_SIZE as i32;
        h.dim = [3, nx as i16, ny as i16, nz as i16, 1, 1, 1, 1];
        let s = volume.spacing();
        h.pixdim[0] = if h.pixdim[0] == -1.0 { -1.0 } else { 1.0 };
        h.pixdim[1] = s[0] as f32;
        h.pixdim[2] = s[1] as f32;
        h.pixdim[3] = s[2] as f32;
        h.datatype = volume.kind().nifti_code();
        h.bitpix = volume.kind().bitpix();
        h.vox_offset = DEFAULT_VOX_OFFSET;
        h.scl_slope = 1.0;
        h.scl_inter = 0.0;
        h.magic = MAGIC_SINGLE;
        let a = volume.affine();
        h.srow_x = std::array::from_fn(|k| a[0][k] as f32);
        h.srow_y = std::array::from_fn(|k| a[1][k] as f32);
        h.srow_z = std::array::from_fn(|k| a[2][k] as f32);
        if h.sform_code <= 0 && *a != diagonal_affine(s) {
            h.sform_code = 2;
        }
        h
    }

    pub fn shape(&self) -> [usize; 3] {
        [
            self.dim[1] as usize,
            self.dim[2] as usize,
            self.dim[3] as usize,
        ]
    }

    pub fn disk_type(&self) -> Result<DiskType> {
        DiskType::from_code(self.datatype)
    }

    /// Voxel spacing in mm. Non-positive or non-finite entries become
    /// their absolute value, or 1.0 if that is still unusable.
    pub fn spacing(&self) -> [f64; 3] {
        std::array::from_fn(|k| {
            let s = (self.pixdim[k + 1] as f64).abs();
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
    }

    /// Orientation affine: the sform rows when `sform_code > 0`, else a
    /// diagonal spacing matrix translated by the qform offset.
    pub fn affine(&self) -> Affine {
        if self.sform_code > 0 {
            let row = |r: &[f32; 4]| std::array::from_fn(|k| r[k] as f64);
            [
                row(&self.srow_x),
                row(&self.srow_y),
                row(&self.srow_z),
                [0.0, 0.0, 0.0, 1.0],
            ]
        } else {
            let mut a = diagonal_affine(self.spacing());
            if self.qform_code > 0 {
                for k in 0..3 {
                    a[k][3] = self.qoffset[k] as f64;
                }
            }
            a
        }
    }

    /// Scaling that must be applied on read, if any.
    fn scaling(&self) -> Option<(f64, f64)> {
        let slope = self.scl_slope as f64;
        let inter = self.scl_inter as f64;
        if slope == 0.0 || !slope.is_finite() {
            return None;
        }
        let inter = if inter.is_finite() { inter } else { 0.0 };
        if slope == 1.0 && inter == 0.0 {
            None
        } else {
            Some((slope, inter))
        }
    }

    pub fn descrip_str(&self) -> String {
        let end = self.descrip.iter().position(|&b| b == 0).unwrap_or(80);
        String::from_utf8_lossy(&self.descrip[..end]).into_owned()
    }

    pub fn set_descrip(&mut self, text: &str) {
        self.descrip = [0; 80];
        let bytes = text.as_bytes();
        let n = bytes.len().min(79);
        self.descrip[..n].copy_from_slice(&bytes[..n]);
    }

    /// `key=value` pairs, in header order, as printed by `pulmofuse info`.
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        fn join<T: std::fmt::Display>(xs: &[T]) -> String {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
        let magic_end = self.magic.iter().position(|&b| b == 0).unwrap_or(4);
        vec![
            ("sizeof_hdr", self.sizeof_hdr.to_string()),
            (
                "endianness",
                match self.endianness {
                    Endianness::Little => "little".into(),
                    Endianness::Big => "big".into(),
                },
            ),
            ("dim", join(&self.dim)),
            ("datatype", self.datatype.to_string()),
            ("bitpix", self.bitpix.to_string()),
            ("pixdim", join(&self.pixdim)),
            ("vox_offset", self.vox_offset.to_string()),
            ("scl_slope", self.scl_slope.to_string()),
            ("scl_inter", self.scl_inter.to_string()),
            ("xyzt_units", self.xyzt_units.to_string()),
            ("qform_code", self.qform_code.to_string()),
            ("sform_code", self.sform_code.to_string()),
            ("quatern", join(&self.quatern)),
            ("qoffset", join(&self.qoffset)),
            ("srow_x", join(&self.srow_x)),
            ("srow_y", join(&self.srow_y)),
            ("srow_z", join(&self.srow_z)),
            ("descrip", self.descrip_str()),
            (
                "magic",
                String::from_utf8_lossy(&self.magic[..magic_end]).into_owned(),
            ),
        ]
    }
}

/// Wrap `source` in a gzip decoder when it starts with the gzip id bytes.
/// Returns the (possibly decoding) reader and whether it is compressed.
fn sniff<R: Read + 'static>(mut source: R) -> Result<(Box<dyn Read>, bool)> {
    let mut prefix = [0u8; 2];
    let mut got = 0;
    while got < 2 {
        match source.read(&mut prefix[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let head = Cursor::new(prefix[..got].to_vec()).chain(source);
    if got == 2 && prefix == GZIP_ID {
        Ok((Box::new(MultiGzDecoder::new(head)), true))
    } else {
        Ok((Box::new(head), false))
    }
}

/// Read up to `n` bytes; a short result means the stream ended.
fn read_up_to(r: &mut dyn Read, n: usize, gz: bool) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(n);
    r.take(n as u64).read_to_end(&mut buf).map_err(|e| {
        if gz {
            Error::GzipCorrupt(e.to_string())
        } else {
            Error::Io(e)
        }
    })?;
    Ok(buf)
}

/// Streaming reader yielding a volume slab of consecutive z-slices at a time.
pub struct SlabReader {
    inner: Box<dyn Read>,
    gz: bool,
    header: NiftiHeader,
    disk: DiskType,
    scaling: Option<(f64, f64)>,
    next_z: usize,
}

impl SlabReader {
    pub fn new<R: Read + 'static>(source: R) -> Result<Self> {
        let (mut inner, gz) = sniff(source)?;
        let raw = read_up_to(inner.as_mut(), HEADER_SIZE, gz)?;
        let header = NiftiHeader::parse(&raw)?;
        let disk = header.disk_type()?;
        if disk == DiskType::F64 {
            log::warn!("float64 voxel data will be down-converted to float32");
        }
        let skip = header.vox_offset as usize - HEADER_SIZE;
        let ext = read_up_to(inner.as_mut(), skip, gz)?;
        if ext.len() < skip {
            return Err(Error::TruncatedData {
                expected: skip,
                found: ext.len(),
            });
        }
        let scaling = header.scaling();
        Ok(SlabReader {
            inner,
            gz,
            header,
            disk,
            scaling,
            next_z: 0,
        })
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let f = File::open(path.as_ref())?;
        Self::new(BufReader::new(f))
    }

    pub fn header(&self) -> &NiftiHeader {
        &self.header
    }

    pub fn shape(&self) -> [usize; 3] {
        self.header.shape()
    }

    /// Element kind of the slabs this reader yields.
    pub fn element_kind(&self) -> ElementKind {
        if self.scaling.is_some() {
            ElementKind::F32
        } else {
            self.disk.element_kind()
        }
    }

    pub fn remaining_slices(&self) -> usize {
        self.shape()[2] - self.next_z
    }

    /// Next slab of at most `depth` z-slices, or `None` once exhausted.
    pub fn next_slab(&mut self, depth: usize) -> Result<Option<Volume>> {
        let [nx, ny, nz] = self.shape();
        if self.next_z >= nz || depth == 0 {
            return Ok(None);
        }
        let d = depth.min(nz - self.next_z);
        let count = nx * ny * d;
        let want = count * self.disk.bytes();
        let raw = read_up_to(self.inner.as_mut(), want, self.gz)?;
        if raw.len() < want {
            let done = nx * ny * self.next_z * self.disk.bytes();
            return Err(Error::TruncatedData {
                expected: nx * ny * nz * self.disk.bytes(),
                found: done + raw.len(),
            });
        }
        let big = self.header.endianness == Endianness::Big;
        let data = decode_voxels(&raw, self.disk, big, self.scaling);
        let spacing = self.header.spacing();
        let mut affine = self.header.affine();
        // slab origin shifts along the volume's z axis
        for r in 0..3 {
            affine[r][3] += affine[r][2] * self.next_z as f64;
        }
        self.next_z += d;
        Volume::with_affine(Dims::new(nx, ny, d), spacing, affine, data).map(Some)
    }
}

fn decode_voxels(raw: &[u8], disk: DiskType, big: bool, scaling: Option<(f64, f64)>) -> VoxelData {
    macro_rules! decode {
        ($read:ident, $width:expr) => {{
            let mut out = Vec::with_capacity(raw.len() / $width);
            for chunk in raw.chunks_exact($width) {
                out.push(if big {
                    BigEndian::$read(chunk)
                } else {
                    LittleEndian::$read(chunk)
                });
            }
            out
        }};
    }
    let data = match disk {
        DiskType::U8 => VoxelData::U8(raw.to_vec()),
        DiskType::I16 => VoxelData::I16(decode!(read_i16, 2)),
        DiskType::I32 => {
            let v: Vec<i32> = decode!(read_i32, 4);
            VoxelData::F32(v.into_iter().map(|x| x as f32).collect())
        }
        DiskType::F32 => VoxelData::F32(decode!(read_f32, 4)),
        DiskType::F64 => {
            let v: Vec<f64> = decode!(read_f64, 8);
            VoxelData::F32(v.into_iter().map(|x| x as f32).collect())
        }
    };
    match scaling {
        None => data,
        Some((slope, inter)) => {
            let scale = |x: f64| (x * slope + inter) as f32;
            VoxelData::F32(match data {
                VoxelData::U8(v) => v.into_iter().map(|x| scale(x as f64)).collect(),
                VoxelData::I16(v) => v.into_iter().map(|x| scale(x as f64)).collect(),
                VoxelData::F32(v) => v.into_iter().map(|x| scale(x as f64)).collect(),
            })
        }
    }
}

/// Read a whole NIfTI-1 volume from a plain or gzip-compressed stream.
pub fn read_nifti<R: Read + 'static>(source: R) -> Result<(NiftiHeader, Volume)> {
    let mut reader = SlabReader::new(source)?;
    let header = reader.header().clone();
    let nz = header.shape()[2];
    let volume = reader
        .next_slab(nz)?
        .expect("validated header has at least one slice");
    Ok((header, volume))
}

pub fn read_nifti_bytes(bytes: &[u8]) -> Result<(NiftiHeader, Volume)> {
    read_nifti(Cursor::new(bytes.to_vec()))
}

pub fn read_nifti_file(path: impl AsRef<Path>) -> Result<(NiftiHeader, Volume)> {
    let f = File::open(path.as_ref())?;
    read_nifti(BufReader::new(f))
}

fn check_template(template: &NiftiHeader, volume: &Volume) -> Result<()> {
    if template.shape() != volume.shape() {
        return Err(Error::InconsistentHeader(format!(
            "header dims {:?} vs volume {:?}",
            template.shape(),
            volume.shape()
        )));
    }
    let s = volume.spacing();
    for k in 0..3 {
        if (template.pixdim[k + 1] as f64 - s[k]).abs() > 1e-6 * s[k].max(1.0) {
            return Err(Error::InconsistentHeader(format!(
                "pixdim[{}]={} vs spacing {}",
                k + 1,
                template.pixdim[k + 1],
                s[k]
            )));
        }
    }
    if volume
        .shape()
        .iter()
        .any(|&n| n > i16::MAX as usize || n == 0)
    {
        return Err(Error::InconsistentHeader(format!(
            "shape {:?} not representable in NIfTI-1",
            volume.shape()
        )));
    }
    Ok(())
}

fn encode_voxels(data: &VoxelData, big: bool, out: &mut Vec<u8>) {
    macro_rules! encode {
        ($v:expr, $write:ident, $width:expr) => {{
            let start = out.len();
            out.resize(start + $v.len() * $width, 0);
            for (chunk, &x) in out[start..].chunks_exact_mut($width).zip($v.iter()) {
                if big {
                    BigEndian::$write(chunk, x)
                } else {
                    LittleEndian::$write(chunk, x)
                }
            }
        }};
    }
    match data {
        VoxelData::U8(v) => out.extend_from_slice(v),
        VoxelData::I16(v) => encode!(v, write_i16, 2),
        VoxelData::F32(v) => encode!(v, write_f32, 4),
    }
}

/// Streaming writer: header first, then z-slabs in order.
pub struct SlabWriter<W: Write> {
    sink: Sink<W>,
    header: NiftiHeader,
    written_z: usize,
}

enum Sink<W: Write> {
    Plain(W),
    Gzip(GzEncoder<W>),
}

impl<W: Write> Sink<W> {
    fn write_all(&mut self, bytes: &[u8]) -> io::Result<()> {
        match self {
            Sink::Plain(w) => w.write_all(bytes),
            Sink::Gzip(w) => w.write_all(bytes),
        }
    }
}

impl<W: Write> SlabWriter<W> {
    /// `header` must already describe the full volume (see
    /// [`NiftiHeader::adapted_to`]); its datatype fixes the slab kind.
    pub fn new(sink: W, header: &NiftiHeader, gzip: bool) -> Result<Self> {
        let mut header = header.clone();
        header.sizeof_hdr = HEADER_SIZE as i32;
        header.vox_offset = DEFAULT_VOX_OFFSET;
        header.scl_slope = 1.0;
        header.scl_inter = 0.0;
        header.magic = MAGIC_SINGLE;
        let kind = match header.datatype {
            2 => ElementKind::U8,
            4 => ElementKind::I16,
            16 => ElementKind::F32,
            other => return Err(Error::UnsupportedDatatype(other)),
        };
        header.bitpix = kind.bitpix();
        let mut sink = if gzip {
            Sink::Gzip(GzEncoder::new(sink, Compression::default()))
        } else {
            Sink::Plain(sink)
        };
        sink.write_all(&header.to_bytes())?;
        sink.write_all(&[0u8; 4])?;
        Ok(SlabWriter {
            sink,
            header,
            written_z: 0,
        })
    }

    pub fn write_slab(&mut self, slab: &Volume) -> Result<()> {
        let [nx, ny, nz] = self.header.shape();
        let [sx, sy, sz] = slab.shape();
        if sx != nx || sy != ny || self.written_z + sz > nz {
            return Err(Error::InconsistentHeader(format!(
                "slab {:?} does not fit at z={} in {:?}",
                slab.shape(),
                self.written_z,
                [nx, ny, nz]
            )));
        }
        if slab.kind().nifti_code() != self.header.datatype {
            return Err(Error::InconsistentHeader(format!(
                "slab kind {:?} vs header datatype {}",
                slab.kind(),
                self.header.datatype
            )));
        }
        let mut bytes = Vec::new();
        encode_voxels(slab.data(), self.header.endianness == Endianness::Big, &mut bytes);
        self.sink.write_all(&bytes)?;
        self.written_z += sz;
        Ok(())
    }

    pub fn finish(self) -> Result<W> {
        let nz = self.header.shape()[2];
        if self.written_z != nz {
            return Err(Error::InconsistentHeader(format!(
                "wrote {} of {} slices",
                self.written_z, nz
            )));
        }
        Ok(match self.sink {
            Sink::Plain(mut w) => {
                w.flush()?;
                w
            }
            Sink::Gzip(g) => g.finish()?,
        })
    }
}

/// Encode `volume` using `header_template` for everything the volume does
/// not determine. The template's dims and pixdim must already match.
pub fn write_nifti<W: Write>(
    sink: W,
    header_template: &NiftiHeader,
    volume: &Volume,
    gzip: bool,
) -> Result<W> {
    check_template(header_template, volume)?;
    let header = header_template.adapted_to(volume);
    let mut w = SlabWriter::new(sink, &header, gzip)?;
    w.write_slab(volume)?;
    w.finish()
}

pub fn write_nifti_bytes(header_template: &NiftiHeader, volume: &Volume, gzip: bool) -> Result<Vec<u8>> {
    write_nifti(Vec::new(), header_template, volume, gzip)
}

/// Gzip is chosen from the file name (`.gz` suffix). The file is written to
/// a temporary sibling and renamed into place.
pub fn write_nifti_file(path: impl AsRef<Path>, header_template: &NiftiHeader, volume: &Volume) -> Result<()> {
    let path = path.as_ref();
    let gzip = is_gz_path(path);
    write_atomic(path, |w| {
        write_nifti(w, header_template, volume, gzip)?;
        Ok(())
    })
}

pub fn is_gz_path(path: &Path) -> bool {
    path.extension().map(|e| e == "gz").unwrap_or(false)
}

/// Write through a temporary file in the destination directory, then rename.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

/// Outcome of checking that a label volume holds only background (0) and
/// artery (1).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCheck {
    pub foreground: usize,
    pub background: usize,
    /// Distinct values other than 0 and 1, in ascending order (at most 16).
    pub unexpected: Vec<f64>,
}

impl LabelCheck {
    pub fn is_binary(&self) -> bool {
        self.unexpected.is_empty()
    }
}

pub fn check_binary_labels(v: &Volume) -> LabelCheck {
    let mut foreground = 0;
    let mut background = 0;
    let mut unexpected: Vec<f64> = Vec::new();
    for i in 0..v.len() {
        let x = v.get_f64(i);
        if x == 0.0 {
            background += 1;
        } else if x == 1.0 {
            foreground += 1;
        } else if unexpected.len() < 16 && !unexpected.iter().any(|&u| u == x || (u.is_nan() && x.is_nan())) {
            unexpected.push(x);
        }
    }
    unexpected.sort_by(|a, b| a.total_cmp(b));
    LabelCheck {
        foreground,
        background,
        unexpected,
    }
}

/// Convert a label volume of any stored kind into a canonical u8 0/1 mask,
/// rejecting values other than 0 and 1.
pub fn normalize_labels(v: &Volume) -> Result<Volume> {
    let check = check_binary_labels(v);
    if !check.is_binary() {
        return Err(Error::InvalidParameter(format!(
            "label volume contains values other than 0/1: {:?}",
            check.unexpected
        )));
    }
    v.like(VoxelData::U8(v.to_binary()))
}
