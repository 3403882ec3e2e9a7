use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use pulmofuse_ffi::*;

fn last_error() -> String {
    let p = pf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn from_u8(shape: [usize; 3], data: &[u8]) -> *mut PfVolume {
    let mut out = ptr::null_mut();
    let st = unsafe { pf_volume_from_u8(shape[0], shape[1], shape[2], [1.0; 3].as_ptr(), data.as_ptr(), &mut out) };
    assert_eq!(st, PfStatus::Ok);
    out
}

fn from_f32(shape: [usize; 3], data: &[f32]) -> *mut PfVolume {
    let mut out = ptr::null_mut();
    let st = unsafe { pf_volume_from_f32(shape[0], shape[1], shape[2], [0.5, 0.5, 2.0].as_ptr(), data.as_ptr(), &mut out) };
    assert_eq!(st, PfStatus::Ok);
    out
}

fn values(v: *const PfVolume, n: usize) -> Vec<f32> {
    let mut buf = vec![0f32; n];
    assert_eq!(unsafe { pf_volume_copy_f32(v, buf.as_mut_ptr(), n) }, PfStatus::Ok);
    buf
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(pf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn write_read_round_trip() {
    let tmp = tempfile::TempDir::new().unwrap();
    let data: Vec<f32> = (0..24).map(|i| i as f32 * 0.25 - 2.0).collect();
    let v = from_f32([4, 3, 2], &data);
    let path = CString::new(tmp.path().join("v.nii.gz").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(pf_volume_write(v, path.as_ptr()), PfStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(pf_volume_read(path.as_ptr(), &mut back), PfStatus::Ok);
        let mut shape = [0usize; 3];
        let mut spacing = [0f64; 3];
        assert_eq!(pf_volume_shape(back, shape.as_mut_ptr(), spacing.as_mut_ptr()), PfStatus::Ok);
        assert_eq!(shape, [4, 3, 2]);
        assert_eq!(spacing, [0.5, 0.5, 2.0]);
        let mut kind = PfElementKind::U8;
        assert_eq!(pf_volume_kind(back, &mut kind), PfStatus::Ok);
        assert_eq!(kind, PfElementKind::F32);
        assert_eq!(values(back, 24), data);
        pf_volume_free(back);
        pf_volume_free(v);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(pf_volume_read(ptr::null(), &mut out), PfStatus::NullPointer);
        assert!(last_error().contains("null"));
        assert!(out.is_null());

        let missing = CString::new("/nonexistent/dir/x.nii").unwrap();
        assert_eq!(pf_volume_read(missing.as_ptr(), &mut out), PfStatus::Io);

        let tmp = tempfile::TempDir::new().unwrap();
        let junk = tmp.path().join("junk.nii");
        std::fs::write(&junk, [9u8; 400]).unwrap();
        let junk = CString::new(junk.to_str().unwrap()).unwrap();
        assert_eq!(pf_volume_read(junk.as_ptr(), &mut out), PfStatus::Format);
        assert!(last_error().contains("NIfTI"));

        let mut w = [0f64; 2];
        assert_eq!(pf_compute_weights([1.0, -2.0].as_ptr(), 2, w.as_mut_ptr()), PfStatus::InvalidArgument);

        let a = from_u8([2, 2, 1], &[1, 0, 0, 1]);
        let b = from_u8([4, 1, 1], &[1, 0, 0, 1]);
        let mut d = 0.0;
        assert_eq!(pf_dice(a, b, &mut d), PfStatus::ShapeMismatch);
        let empty = from_u8([2, 2, 1], &[0; 4]);
        assert_eq!(pf_largest_component(empty, 26, &mut out), PfStatus::Empty);
        assert_eq!(pf_largest_component(a, 8, &mut out), PfStatus::InvalidArgument);
        let mut small = [0f32; 3];
        assert_eq!(pf_volume_copy_f32(a, small.as_mut_ptr(), 3), PfStatus::InvalidArgument);
        for v in [a, b, empty] {
            pf_volume_free(v);
        }
        pf_volume_free(ptr::null_mut());
    }
}

#[test]
fn weights_and_fusion() {
    let scores = [84.30, 85.50, 85.52, 86.55, 86.75, 86.87];
    let mut w = [0f64; 6];
    unsafe {
        assert_eq!(pf_compute_weights(scores.as_ptr(), 6, w.as_mut_ptr()), PfStatus::Ok);
    }
    for (wi, d) in w.iter().zip(scores) {
        assert!((wi - d / 515.49).abs() < 1e-12);
    }

    // 2 of 3 equal-weight models vote for the first voxel, 1 for the second
    let preds = [
        from_f32([2, 1, 1], &[1.0, 0.0]),
        from_f32([2, 1, 1], &[1.0, 0.0]),
        from_f32([2, 1, 1], &[0.0, 1.0]),
    ];
    let handles: Vec<*const PfVolume> = preds.iter().map(|&p| p as *const _).collect();
    let third = [1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0];
    unsafe {
        let mut soft = ptr::null_mut();
        assert_eq!(pf_fuse(handles.as_ptr(), third.as_ptr(), 3, &mut soft), PfStatus::Ok);
        let s = values(soft, 2);
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-6 && (s[1] - 1.0 / 3.0).abs() < 1e-6);
        let mut mask = ptr::null_mut();
        assert_eq!(pf_fuse_and_binarize(handles.as_ptr(), third.as_ptr(), 3, &mut mask), PfStatus::Ok);
        assert_eq!(values(mask, 2), vec![1.0, 0.0]);
        let mut out = ptr::null_mut();
        assert_eq!(pf_fuse(handles.as_ptr(), [0.5, 0.5, 0.5].as_ptr(), 3, &mut out), PfStatus::InvalidArgument);
        for v in [soft, mask].into_iter().chain(preds) {
            pf_volume_free(v);
        }
    }
}

fn y_shape() -> ([usize; 3], Vec<u8>) {
    // thick vertical trunk with one thin branch leaving sideways
    let shape = [21, 11, 30];
    let mut bits = vec![0u8; shape.iter().product()];
    let idx = |x: usize, y: usize, z: usize| x + shape[0] * (y + shape[1] * z);
    for z in 2..20 {
        for y in 0..11usize {
            for x in 0..21usize {
                let (dx, dy) = (x as f64 - 6.0, y as f64 - 5.0);
                if dx * dx + dy * dy <= 9.0 {
                    bits[idx(x, y, z)] = 1;
                }
            }
        }
    }
    for k in 0..10 {
        bits[idx(9 + k, 5, 10 + k)] = 1;
    }
    (shape, bits)
}

#[test]
fn decomposition_and_multi_level_dice() {
    let (shape, bits) = y_shape();
    let n = bits.len();
    let gt = from_u8(shape, &bits);
    unsafe {
        let mut regions = ptr::null_mut();
        assert_eq!(pf_decompose(gt, 0.5, &mut regions), PfStatus::Ok);
        let r = values(regions, n);
        assert!(r.iter().zip(&bits).all(|(&l, &b)| (l > 0.0) == (b == 1)));
        assert!(r.contains(&1.0) && r.contains(&2.0));

        let mut report = std::mem::zeroed::<PfDiceReport>();
        assert_eq!(pf_multi_level_dice(gt, gt, regions, 0.6, &mut report), PfStatus::Ok);
        assert_eq!(report.multi_level_dice, 1.0);
        assert_eq!((report.w_branch, report.w_main), (0.6, 1.0 - 0.6));
        assert_eq!(pf_multi_level_dice(gt, gt, regions, 0.5, &mut report), PfStatus::InvalidArgument);

        let mut d = 0.0;
        assert_eq!(pf_dice(gt, gt, &mut d), PfStatus::Ok);
        assert_eq!(d, 1.0);
        pf_volume_free(regions);
        pf_volume_free(gt);
    }
}

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn has_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn generated_header_compiles_and_links_from_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = include.join("pulmofuse_ffi.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["pf_volume_read", "pf_fuse_and_binarize", "pf_multi_level_dice", "PF_STATUS_OK", "PfDiceReport"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    if !has_cc() {
        eprintln!("no C compiler on PATH; only the header contents were checked");
        return;
    }
    let lib = target_dir().join("libpulmofuse_ffi.a");
    assert!(lib.is_file(), "static library not found at {}", lib.display());

    let tmp = tempfile::TempDir::new().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "pulmofuse_ffi.h"
int main(void) {
    const double scores[3] = {80.0, 85.0, 90.0};
    double w[3];
    if (pf_compute_weights(scores, 3, w) != PF_STATUS_OK) return 1;
    const unsigned char a[4] = {1, 1, 0, 0}, b[4] = {1, 0, 0, 0};
    const double spacing[3] = {1.0, 1.0, 1.0};
    PfVolume *va = NULL, *vb = NULL;
    if (pf_volume_from_u8(2, 2, 1, spacing, a, &va) != PF_STATUS_OK) return 2;
    if (pf_volume_from_u8(2, 2, 1, spacing, b, &vb) != PF_STATUS_OK) return 3;
    double d = 0.0;
    if (pf_dice(va, vb, &d) != PF_STATUS_OK) return 4;
    if (pf_volume_read(NULL, &va) != PF_STATUS_NULL_POINTER) return 5;
    if (pf_last_error_message() == NULL) return 6;
    printf("%s %.6f %.6f\n", pf_version(), w[0] + w[1] + w[2], d);
    pf_volume_free(va);
    pf_volume_free(vb);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C smoke program failed to build");
    let out = Command::new(&exe).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let line = String::from_utf8(out.stdout).unwrap();
    assert_eq!(line.trim(), format!("{} 1.000000 0.666667", env!("CARGO_PKG_VERSION")));
}
