//! C ABI over the `pulmofuse` library.
//!
//! Volumes cross the boundary as opaque `PfVolume` handles that the caller
//! releases with `pf_volume_free`. Every fallible function returns a
//! `PfStatus`; on failure a description is available from
//! `pf_last_error_message` on the same thread. Results are written through
//! out-pointers only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pulmofuse::ensemble::{self, EnsembleWeights, ModelScores};
use pulmofuse::metrics;
use pulmofuse::morphology::{self, Connectivity, RegionLabelMap};
use pulmofuse::nifti::{read_nifti_file, write_nifti_file, NiftiHeader};
use pulmofuse::{Dims, ElementKind, Error, Volume};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfStatus {
    Ok = 0,
    NullPointer = 1,
    Io = 2,
    Format = 3,
    InvalidArgument = 4,
    ShapeMismatch = 5,
    Empty = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfElementKind {
    U8 = 0,
    I16 = 1,
    F32 = 2,
}

/// Region-wise dice scores of one case.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfDiceReport {
    pub overall_dice: f64,
    pub main_dice: f64,
    pub branch_dice: f64,
    pub multi_level_dice: f64,
    pub w_branch: f64,
    pub w_main: f64,
}

/// A voxel volume plus the NIfTI header it was read with, if any.
pub struct PfVolume {
    header: Option<NiftiHeader>,
    volume: Volume,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PfStatus {
    match e {
        Error::Io(_) => PfStatus::Io,
        Error::ShapeMismatch(..) => PfStatus::ShapeMismatch,
        Error::EmptyMask | Error::EmptyVolume | Error::EmptyScores | Error::EmptySkeleton | Error::EmptyList => {
            PfStatus::Empty
        }
        other if other.exit_code() == 2 => PfStatus::Format,
        _ => PfStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `body`, records any error for `pf_last_error_message` and maps it to
/// a status. Panics never cross the boundary.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> PfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PfStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PfStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            PfStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PfStatus::Panic
        }
    }
}

unsafe fn vol_ref<'a>(p: *const PfVolume, what: &'static str) -> Result<&'a PfVolume, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Arg("path is not valid UTF-8".into()))
}

unsafe fn emit(out: *mut *mut PfVolume, v: PfVolume) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn volume_list<'a>(preds: *const *const PfVolume, n: usize) -> Result<Vec<&'a PfVolume>, Failure> {
    if preds.is_null() {
        return Err(Failure::Null("predictions"));
    }
    std::slice::from_raw_parts(preds, n)
        .iter()
        .map(|&p| vol_ref(p, "prediction"))
        .collect()
}

unsafe fn f64_slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn derived(header: &Option<NiftiHeader>, volume: Volume) -> PfVolume {
    PfVolume {
        header: header.clone(),
        volume,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL if none. The string
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Read a `.nii` or `.nii.gz` file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pf_volume_read(path: *const c_char, out: *mut *mut PfVolume) -> PfStatus {
    guard(|| {
        let path = path_arg(path)?;
        let (header, volume) = read_nifti_file(path)?;
        emit(
            out,
            PfVolume {
                header: Some(header),
                volume,
            },
        )
    })
}

/// Write a volume; gzip is chosen by a `.gz` suffix. Header fields not
/// determined by the volume come from the file it was derived from.
///
/// # Safety
/// `vol` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pf_volume_write(vol: *const PfVolume, path: *const c_char) -> PfStatus {
    guard(|| {
        let v = vol_ref(vol, "volume")?;
        let path = path_arg(path)?;
        let header = match &v.header {
            Some(h) => h.adapted_to(&v.volume),
            None => NiftiHeader::for_volume(&v.volume),
        };
        write_nifti_file(path, &header, &v.volume)?;
        Ok(())
    })
}

unsafe fn from_parts<T: Copy>(
    nx: usize,
    ny: usize,
    nz: usize,
    spacing: *const f64,
    data: *const T,
    out: *mut *mut PfVolume,
    build: fn(Dims, [f64; 3], Vec<T>) -> pulmofuse::Result<Volume>,
) -> Result<(), Failure> {
    let spacing = f64_slice(spacing, 3, "spacing")?;
    if data.is_null() {
        return Err(Failure::Null("data"));
    }
    let n = nx
        .checked_mul(ny)
        .and_then(|p| p.checked_mul(nz))
        .ok_or_else(|| Failure::Arg("volume size overflows".into()))?;
    let values = std::slice::from_raw_parts(data, n).to_vec();
    let volume = build(Dims::new(nx, ny, nz), [spacing[0], spacing[1], spacing[2]], values)?;
    emit(out, PfVolume { header: None, volume })
}

/// Build a float-32 volume from `nx*ny*nz` values, x fastest.
///
/// # Safety
/// `spacing` must point to 3 doubles and `data` to `nx*ny*nz` floats.
#[no_mangle]
pub unsafe extern "C" fn pf_volume_from_f32(
    nx: usize,
    ny: usize,
    nz: usize,
    spacing: *const f64,
    data: *const f32,
    out: *mut *mut PfVolume,
) -> PfStatus {
    guard(|| from_parts(nx, ny, nz, spacing, data, out, Volume::from_f32))
}

/// Build an 8-bit volume from `nx*ny*nz` values, x fastest.
///
/// # Safety
/// `spacing` must point to 3 doubles and `data` to `nx*ny*nz` bytes.
#[no_mangle]
pub unsafe extern "C" fn pf_volume_from_u8(
    nx: usize,
    ny: usize,
    nz: usize,
    spacing: *const f64,
    data: *const u8,
    out: *mut *mut PfVolume,
) -> PfStatus {
    guard(|| from_parts(nx, ny, nz, spacing, data, out, Volume::from_u8))
}

/// Shape into `out_shape[3]` and spacing (mm) into `out_spacing[3]`;
/// either may be NULL.
///
/// # Safety
/// `vol` must be a live handle; non-NULL outputs must hold 3 elements.
#[no_mangle]
pub unsafe extern "C" fn pf_volume_shape(vol: *const PfVolume, out_shape: *mut usize, out_spacing: *mut f64) -> PfStatus {
    guard(|| {
        let v = vol_ref(vol, "volume")?;
        if !out_shape.is_null() {
            std::slice::from_raw_parts_mut(out_shape, 3).copy_from_slice(&v.volume.shape());
        }
        if !out_spacing.is_null() {
            std::slice::from_raw_parts_mut(out_spacing, 3).copy_from_slice(&v.volume.spacing());
        }
        Ok(())
    })
}

/// # Safety
/// `vol` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_volume_kind(vol: *const PfVolume, out: *mut PfElementKind) -> PfStatus {
    guard(|| {
        let v = vol_ref(vol, "volume")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = match v.volume.kind() {
            ElementKind::U8 => PfElementKind::U8,
            ElementKind::I16 => PfElementKind::I16,
            ElementKind::F32 => PfElementKind::F32,
        };
        Ok(())
    })
}

/// Copy all voxels, converted to float, into `out[len]`. `len` must equal
/// the voxel count.
///
/// # Safety
/// `vol` must be a live handle and `out` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn pf_volume_copy_f32(vol: *const PfVolume, out: *mut f32, len: usize) -> PfStatus {
    guard(|| {
        let v = vol_ref(vol, "volume")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if len != v.volume.len() {
            return Err(Failure::Arg(format!("buffer holds {len} values, volume has {}", v.volume.len())));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&v.volume.to_f32_vec());
        Ok(())
    })
}

/// Release a handle. NULL is ignored.
///
/// # Safety
/// `vol` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pf_volume_free(vol: *mut PfVolume) {
    if !vol.is_null() {
        drop(Box::from_raw(vol));
    }
}

/// Weights `d_i / sum(d)` for `n` positive scores, written to `out[n]`.
///
/// # Safety
/// `scores` and `out` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn pf_compute_weights(scores: *const f64, n: usize, out: *mut f64) -> PfStatus {
    guard(|| {
        let scores = f64_slice(scores, n, "scores")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let w = ensemble::compute_weights(&ModelScores::new(scores.to_vec())?)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(w.as_slice());
        Ok(())
    })
}

unsafe fn fused(
    preds: *const *const PfVolume,
    weights: *const f64,
    n: usize,
) -> Result<(Option<NiftiHeader>, Volume, Volume), Failure> {
    let vols = volume_list(preds, n)?;
    let w = EnsembleWeights::new(f64_slice(weights, n, "weights")?.to_vec())?;
    let refs: Vec<&Volume> = vols.iter().map(|v| &v.volume).collect();
    let (mask, soft) = ensemble::fuse_both(&refs, &w)?;
    Ok((vols.first().and_then(|v| v.header.clone()), mask, soft))
}

/// Weighted soft fusion `sum w_i P_i` as a float-32 volume. Weights must
/// sum to 1.
///
/// # Safety
/// `preds` must hold `n` live handles and `weights` `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn pf_fuse(
    preds: *const *const PfVolume,
    weights: *const f64,
    n: usize,
    out: *mut *mut PfVolume,
) -> PfStatus {
    guard(|| {
        let (header, _, soft) = fused(preds, weights, n)?;
        emit(out, derived(&header, soft))
    })
}

/// Weighted fusion thresholded at 0.5 (inclusive) as an 8-bit mask.
///
/// # Safety
/// `preds` must hold `n` live handles and `weights` `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn pf_fuse_and_binarize(
    preds: *const *const PfVolume,
    weights: *const f64,
    n: usize,
    out: *mut *mut PfVolume,
) -> PfStatus {
    guard(|| {
        let (header, mask, _) = fused(preds, weights, n)?;
        emit(out, derived(&header, mask))
    })
}

/// Largest connected component (connectivity 6, 18 or 26).
///
/// # Safety
/// `mask` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_largest_component(mask: *const PfVolume, connectivity: u32, out: *mut *mut PfVolume) -> PfStatus {
    guard(|| {
        let m = vol_ref(mask, "mask")?;
        let kept = morphology::largest_component(&m.volume, Connectivity::from_count(connectivity)?)?;
        emit(out, derived(&m.header, kept))
    })
}

/// Region labels 0 background, 1 main trunk, 2 branch.
///
/// # Safety
/// `mask` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_decompose(mask: *const PfVolume, alpha: f64, out: *mut *mut PfVolume) -> PfStatus {
    guard(|| {
        let m = vol_ref(mask, "mask")?;
        let regions = morphology::decompose_main_vs_branches(&m.volume, alpha)?;
        emit(out, derived(&m.header, regions.into_volume()))
    })
}

/// # Safety
/// `a` and `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_dice(a: *const PfVolume, b: *const PfVolume, out: *mut f64) -> PfStatus {
    guard(|| {
        let (a, b) = (vol_ref(a, "a")?, vol_ref(b, "b")?);
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = metrics::dice(&a.volume, &b.volume)?;
        Ok(())
    })
}

/// Multi-level dice with branch weight in (0.5, 1).
///
/// # Safety
/// `pred`, `gt` and `regions` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_multi_level_dice(
    pred: *const PfVolume,
    gt: *const PfVolume,
    regions: *const PfVolume,
    w_branch: f64,
    out: *mut PfDiceReport,
) -> PfStatus {
    guard(|| {
        let (p, g, r) = (vol_ref(pred, "pred")?, vol_ref(gt, "gt")?, vol_ref(regions, "regions")?);
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let regions = RegionLabelMap::new(r.volume.clone())?;
        let rep = metrics::multi_level_dice(&p.volume, &g.volume, &regions, w_branch)?;
        *out = PfDiceReport {
            overall_dice: rep.overall_dice,
            main_dice: rep.main_dice,
            branch_dice: rep.branch_dice,
            multi_level_dice: rep.multi_level_dice,
            w_branch: rep.w_branch,
            w_main: rep.w_main,
        };
        Ok(())
    })
}
