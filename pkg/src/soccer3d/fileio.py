"""File formats shared by the CLI and the pipeline.

PFM is float32 little-endian (scale -1.0) with bottom-to-top scanlines per
the usual convention; arrays in memory are top-to-bottom. PNG label images
use the raw label values (no palette). OBJ/MTL writers emit deterministic
text so identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image


def write_pfm(path, data: np.ndarray) -> None:
    """Write a single-channel float32 PFM file."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"PFM writer expects a 2-D array, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        np.flipud(arr).astype("<f4").tofile(f)


def read_pfm(path) -> np.ndarray:
    """Read a single-channel PFM file into a float64 array (top-to-bottom rows)."""
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header != b"Pf":
            raise ValueError(f"not a grayscale PFM file: header {header!r}")
        dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.fromfile(f, dtype=dtype, count=w * h).reshape(h, w)
    return np.flipud(data).astype(np.float64)


def write_png(path, array: np.ndarray) -> None:
    """Write a uint8 grayscale or RGB PNG."""
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        raise ValueError("write_png expects uint8 data; convert explicitly")
    Image.fromarray(arr).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    return np.asarray(Image.open(path))


def write_mask_png(path, mask: np.ndarray) -> None:
    """Binary mask -> 0/255 PNG."""
    write_png(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))


def read_mask_png(path) -> np.ndarray:
    arr = read_png(path)
    if arr.ndim == 3:
        arr = arr[..., 0]
    return arr > 0


def color_to_uint8(color: np.ndarray) -> np.ndarray:
    """Float RGB in [0, 1] -> uint8."""
    return np.clip(np.asarray(color) * 255.0 + 0.5, 0, 255).astype(np.uint8)


def uint8_to_color(arr: np.ndarray) -> np.ndarray:
    return np.asarray(arr, dtype=np.float64) / 255.0


def load_json(path):
    with open(path) as f:
        return json.load(f)


def dump_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


# --- Wavefront OBJ / MTL ---------------------------------------------------


def write_obj(path, objects, mtl_name=None) -> None:
    """Write named objects to a Wavefront OBJ file.

    Args:
        path: Output .obj path.
        objects: Iterable of (name, vertices (N,3), uvs (N,2) or None,
            faces (M,3) int, material or None). Face indices are local to the
            object; the writer offsets them into the shared index space.
        mtl_name: Optional .mtl filename to reference via mtllib.
    """
    lines = []
    if mtl_name:
        lines.append(f"mtllib {mtl_name}")
    v_offset = 0
    vt_offset = 0
    for name, vertices, uvs, faces, material in objects:
        lines.append(f"o {name}")
        for v in np.asarray(vertices, dtype=float):
            lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
        has_uv = uvs is not None
        if has_uv:
            for t in np.asarray(uvs, dtype=float):
                lines.append(f"vt {t[0]:.9g} {t[1]:.9g}")
        if material:
            lines.append(f"usemtl {material}")
        for f in np.asarray(faces, dtype=int):
            if has_uv:
                idx = [f"{i + 1 + v_offset}/{i + 1 + vt_offset}" for i in f]
            else:
                idx = [str(i + 1 + v_offset) for i in f]
            lines.append("f " + " ".join(idx))
        v_offset += len(vertices)
        if has_uv:
            vt_offset += len(uvs)
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path):
    """Parse v/vt/f records; returns (vertices, uvs, faces) as arrays.

    Faces are returned as 0-based vertex indices (triangles only).
    """
    vertices, uvs, faces = [], [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            vertices.append([float(x) for x in parts[1:4]])
        elif parts[0] == "vt":
            uvs.append([float(x) for x in parts[1:3]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            if len(idx) != 3:
                raise ValueError(f"only triangle faces supported, got {line!r}")
            faces.append(idx)
    return (np.array(vertices, dtype=float).reshape(-1, 3),
            np.array(uvs, dtype=float).reshape(-1, 2),
            np.array(faces, dtype=int).reshape(-1, 3))


def write_mtl(path, materials) -> None:
    """Write materials: iterable of (name, texture filename or None, rgb or None)."""
    lines = []
    for name, texture, rgb in materials:
        lines.append(f"newmtl {name}")
        if rgb is not None:
            lines.append(f"Kd {rgb[0]:.6g} {rgb[1]:.6g} {rgb[2]:.6g}")
        if texture:
            lines.append(f"map_Kd {texture}")
    Path(path).write_text("\n".join(lines) + "\n")
