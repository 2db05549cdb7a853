"""On-disk formats: named-tensor records, CIMG/CKSP rasters, grayscale PNG.

All binary payloads are little-endian regardless of host order. The record
container (used for checkpoints) is a flat sequence of named nd-arrays:

    magic[4] | u32 version | repeat( u16 name_len | name utf-8 |
        u8 dtype_code | u8 rank | u32 dims[rank] | payload )

CIMG is a raw float image: "CIMG" | u32 n1, n2, C, kind | payload(C, n1, n2).
CKSP mirrors CIMG with a complex payload holding multicoil k-space, followed
by one u8 chunk: u32 len | u8[len], the sampled-line mask.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image as _PILImage

from .core import Image

__all__ = [
    "write_records", "read_records",
    "write_cimg", "read_cimg",
    "write_cksp", "read_cksp",
    "write_png", "read_png",
]

_CODE_TO_DTYPE = {0: "<f4", 1: "<f8", 2: "<c8", 3: "<c16", 4: "|u1", 5: "<i8", 6: "<u4"}
_KIND_TO_CODE = {"f4": 0, "f8": 1, "c8": 2, "c16": 3, "u1": 4, "i8": 5, "u4": 6}


def _dtype_code(a: np.ndarray) -> int:
    kind = f"{a.dtype.kind}{a.dtype.itemsize}"
    kind = {"f4": "f4", "f8": "f8", "c8": "c8", "c16": "c16",
            "u1": "u1", "i8": "i8", "u4": "u4"}.get(kind)
    if kind is None:
        raise ValueError(f"unsupported dtype {a.dtype}")
    return _KIND_TO_CODE[kind]


def write_records(path, magic: bytes, records: dict, version: int = 1):
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<I", version))
        for name, arr in records.items():
            a = np.asarray(arr)
            code = _dtype_code(a)
            le = a.astype(_CODE_TO_DTYPE[code], copy=False)
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<BB", code, a.ndim))
            for d in a.shape:
                f.write(struct.pack("<I", d))
            f.write(le.tobytes())


def read_records(path, magic: bytes):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != magic:
        raise ValueError(f"bad magic {raw[:4]!r}, expected {magic!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    pos = 8
    records = {}
    while pos < len(raw):
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + nlen].decode("utf-8")
        pos += nlen
        code, rank = struct.unpack_from("<BB", raw, pos)
        pos += 2
        dims = struct.unpack_from(f"<{rank}I", raw, pos) if rank else ()
        pos += 4 * rank
        dt = np.dtype(_CODE_TO_DTYPE[code])
        count = int(np.prod(dims)) if rank else 1
        end = pos + count * dt.itemsize
        if end > len(raw):
            raise ValueError(f"truncated record {name!r}")
        records[name] = np.frombuffer(raw[pos:end], dtype=dt).reshape(dims).copy()
        pos = end
    return version, records


# ---------------------------------------------------------------------------
# CIMG / CKSP


def write_cimg(path, img):
    a = img.data if isinstance(img, Image) else np.asarray(img)
    if a.ndim == 2:
        a = a[None]
    code = _dtype_code(a)
    with open(path, "wb") as f:
        f.write(b"CIMG")
        f.write(struct.pack("<IIII", a.shape[1], a.shape[2], a.shape[0], code))
        f.write(a.astype(_CODE_TO_DTYPE[code], copy=False).tobytes())


def read_cimg(path) -> Image:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != b"CIMG":
        raise ValueError(f"bad magic {raw[:4]!r}")
    n1, n2, c, code = struct.unpack_from("<IIII", raw, 4)
    dt = np.dtype(_CODE_TO_DTYPE[code])
    want = 20 + n1 * n2 * c * dt.itemsize
    if len(raw) != want:
        raise ValueError(f"CIMG size {len(raw)} != expected {want}")
    return Image(np.frombuffer(raw[20:], dtype=dt).reshape(c, n1, n2).copy())


def write_cksp(path, kspace: np.ndarray, mask: np.ndarray):
    a = np.asarray(kspace)
    if a.ndim != 3 or not np.iscomplexobj(a):
        raise ValueError("kspace must be complex with shape (coils, n1, n2)")
    m = np.asarray(mask).astype(np.uint8).ravel()
    code = _dtype_code(a)
    with open(path, "wb") as f:
        f.write(b"CKSP")
        f.write(struct.pack("<IIII", a.shape[1], a.shape[2], a.shape[0], code))
        f.write(a.astype(_CODE_TO_DTYPE[code], copy=False).tobytes())
        f.write(struct.pack("<I", m.size))
        f.write(m.tobytes())


def read_cksp(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != b"CKSP":
        raise ValueError(f"bad magic {raw[:4]!r}")
    n1, n2, c, code = struct.unpack_from("<IIII", raw, 4)
    dt = np.dtype(_CODE_TO_DTYPE[code])
    if dt.kind != "c":
        raise ValueError("CKSP payload must be complex")
    pos = 20
    end = pos + n1 * n2 * c * dt.itemsize
    ksp = np.frombuffer(raw[pos:end], dtype=dt).reshape(c, n1, n2).copy()
    (mlen,) = struct.unpack_from("<I", raw, end)
    mask = np.frombuffer(raw[end + 4:end + 4 + mlen], dtype=np.uint8).copy()
    return ksp, mask


# ---------------------------------------------------------------------------
# PNG (grayscale, 8 or 16 bit)


def write_png(path, img, bits: int = 8):
    a = img.data if isinstance(img, Image) else np.asarray(img)
    if a.ndim == 3:
        if a.shape[0] != 1:
            raise ValueError("png writer handles single-channel images")
        a = a[0]
    a = np.clip(a, 0.0, 1.0)
    if bits == 8:
        pil = _PILImage.fromarray(np.round(a * 255).astype(np.uint8), mode="L")
    elif bits == 16:
        pil = _PILImage.fromarray(np.round(a * 65535).astype(np.uint16))
    else:
        raise ValueError("bits must be 8 or 16")
    pil.save(path)


def read_png(path) -> Image:
    pil = _PILImage.open(path)
    a = np.asarray(pil)
    if a.ndim == 3:
        raise ValueError("png reader handles grayscale images only")
    peak = 65535.0 if a.dtype == np.uint16 else 255.0
    return Image((a.astype(np.float64) / peak)[None])
