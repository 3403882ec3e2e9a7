"""Regenerate the reference NIfTI fixtures and their header dumps with nibabel.

    python3 make_reference.py

Each fixture gets a `<name>.dump` text file of `key=values` lines written
from nibabel's view of the file. The Rust tests compare against the dumps.
"""
import numpy as np
import nibabel as nib


def dump(path, out):
    img = nib.load(path)
    with nib.openers.Opener(path) as f:
        h = nib.Nifti1Header.from_fileobj(f)
    data = np.asarray(img.dataobj).astype(np.float64)
    lines = {
        "dim": h["dim"],
        "datatype": [int(h["datatype"])],
        "bitpix": [int(h["bitpix"])],
        "pixdim": h["pixdim"],
        "vox_offset": [float(h["vox_offset"])],
        "scl_slope": [float(h["scl_slope"])],
        "scl_inter": [float(h["scl_inter"])],
        "qform_code": [int(h["qform_code"])],
        "sform_code": [int(h["sform_code"])],
        "srow_x": h["srow_x"],
        "srow_y": h["srow_y"],
        "srow_z": h["srow_z"],
        "affine": img.affine.ravel(),
        "data": data.ravel(order="F"),
    }
    with open(out, "w") as f:
        f.write(f"descrip={h['descrip'].item().decode()}\n")
        f.write("endianness=" + ("big" if h.endianness == ">" else "little") + "\n")
        for k, v in lines.items():
            f.write(k + "=" + " ".join(repr(float(x)) for x in np.asarray(v).ravel()) + "\n")


def main():
    rng = np.random.default_rng(2022)

    data = rng.integers(-1024, 3000, size=(5, 4, 3)).astype(np.int16)
    c, s = np.cos(0.3), np.sin(0.3)
    affine = np.array([
        [0.8 * c, -0.9 * s, 0.0, -40.5],
        [0.8 * s, 0.9 * c, 0.0, 12.25],
        [0.0, 0.0, 2.5, -100.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    img = nib.Nifti1Image(data, affine)
    img.header["descrip"] = b"reference int16"
    img.header.set_xyzt_units("mm", "sec")
    nib.save(img, "reference_i16.nii.gz")
    dump("reference_i16.nii.gz", "reference_i16.dump")

    values = rng.normal(size=(3, 2, 4)).astype(">f4")
    hdr = nib.Nifti1Header(endianness=">")
    img = nib.Nifti1Image(values, np.diag([1.5, 1.5, 3.0, 1.0]), header=hdr)
    img.header.set_slope_inter(2.0, -1.0)
    img.header["descrip"] = b"reference big-endian f32"
    nib.save(img, "reference_be_f32.nii")
    dump("reference_be_f32.nii", "reference_be_f32.dump")


if __name__ == "__main__":
    main()
