"""OVOL binary volume files, dataset manifests, and record loaders.

OVOL layout (all integers little-endian):
    magic   4 bytes  "OVOL"
    version u32      1
    dtype   u32      0 = unsigned 8-bit, 1 = 32-bit float
    dims    3 x u32  (D, H, W) = (enface rows, enface cols, axial depth)
    data    D*H*W voxels, row-major, W fastest

The manifest is UTF-8 comma-separated text with the exact header line
"path,label,patient_id,eye,signal_strength"; paths are resolved relative
to the manifest's directory.
"""

import os
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor

MAGIC = b"OVOL"
VERSION = 1
DTYPE_U8 = 0
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sIIIII")
_DTYPE_CODES = {"u8": DTYPE_U8, "f32": DTYPE_F32}
_ITEM_SIZE = {DTYPE_U8: 1, DTYPE_F32: 4}

MANIFEST_HEADER = "path,label,patient_id,eye,signal_strength"
_LABELS = {"0": 0, "1": 1, "healthy": 0, "glaucoma": 1}
_EYES = {"left": "left", "l": "left", "right": "right", "r": "right"}


class OvolError(Exception):
    """Base class for OVOL load failures."""


class BadMagic(OvolError):
    pass


class BadVersion(OvolError):
    pass


class Truncated(OvolError):
    pass


class BadHeader(OvolError):
    pass


class ManifestError(Exception):
    pass


@dataclass
class VolumeHeader:
    dtype_code: int
    dims: tuple


@dataclass
class VolumeRecord:
    path: str
    label: int
    patient_id: str
    eye: str
    signal_strength: int


@dataclass
class Manifest:
    records: list
    excluded_low_signal: int = 0

    def class_counts(self):
        n_pos = sum(r.label for r in self.records)
        return len(self.records) - n_pos, n_pos

    def labels(self):
        return [r.label for r in self.records]


def write_volume(vol, dtype, path):
    """Write a 3-d tensor as an OVOL file; u8 requires values in [0, 255]."""
    vol = np.asarray(vol)
    if vol.ndim != 3:
        raise ValueError(f"expected a 3-d volume, got shape {vol.shape}")
    code = _DTYPE_CODES[dtype] if isinstance(dtype, str) else int(dtype)
    if code not in _ITEM_SIZE:
        raise ValueError(f"unknown dtype code {code}")
    if code == DTYPE_U8:
        if vol.size and (vol.min() < 0 or vol.max() > 255):
            raise ValueError("u8 volume values must lie in [0, 255]")
        payload = np.rint(vol).astype("<u1").tobytes()
    else:
        payload = np.ascontiguousarray(vol, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, code, *vol.shape))
        fh.write(payload)


def _read_volume(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise Truncated(f"{path}: shorter than the {_HEADER.size}-byte header")
        magic, version, code, d, h, w = _HEADER.unpack(head)
        if magic != MAGIC:
            raise BadMagic(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise BadVersion(f"{path}: unsupported version {version}")
        if code not in _ITEM_SIZE:
            raise BadHeader(f"{path}: unknown dtype code {code}")
        if min(d, h, w) < 1:
            raise BadHeader(f"{path}: zero extent in dims ({d}, {h}, {w})")
        nbytes = d * h * w * _ITEM_SIZE[code]
        payload = fh.read(nbytes + 1)
        if len(payload) < nbytes:
            raise Truncated(f"{path}: {len(payload)} data bytes, expected {nbytes}")
        if len(payload) > nbytes:
            raise BadHeader(f"{path}: trailing bytes after voxel data")
    raw = np.frombuffer(payload, dtype="<u1" if code == DTYPE_U8 else "<f4")
    vol = raw.astype(np.float32).reshape(d, h, w)
    return VolumeHeader(code, (d, h, w)), vol


def read_header(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
    if len(head) < _HEADER.size:
        raise Truncated(f"{path}: shorter than the {_HEADER.size}-byte header")
    magic, version, code, d, h, w = _HEADER.unpack(head)
    if magic != MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise BadVersion(f"{path}: unsupported version {version}")
    return VolumeHeader(code, (d, h, w))


def read_volume(path):
    """Read an OVOL file into a float32 tensor (u8 voxels come back as 0..255)."""
    return _read_volume(path)[1]


def load_manifest(path, min_signal=7, check_files=False):
    """Parse a manifest; rows below the signal-strength threshold are dropped."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise ManifestError(f"{path}: first line must be '{MANIFEST_HEADER}'")

    records = []
    excluded = 0
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5:
            raise ManifestError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        raw_path, raw_label, patient_id, raw_eye, raw_ss = parts
        if raw_label not in _LABELS:
            raise ManifestError(f"{path}:{lineno}: unknown label token '{raw_label}'")
        eye = _EYES.get(raw_eye.lower())
        if eye is None:
            raise ManifestError(f"{path}:{lineno}: unknown eye '{raw_eye}'")
        try:
            signal = int(raw_ss)
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: bad signal strength '{raw_ss}'") from None
        if not 0 <= signal <= 10:
            raise ManifestError(f"{path}:{lineno}: signal strength {signal} outside [0, 10]")
        rec_path = raw_path if os.path.isabs(raw_path) else os.path.join(base, raw_path)
        if rec_path in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate path '{raw_path}'")
        seen.add(rec_path)
        if signal < min_signal:
            excluded += 1
            continue
        if check_files and not os.path.exists(rec_path):
            raise ManifestError(f"{path}:{lineno}: referenced file missing: {rec_path}")
        records.append(VolumeRecord(rec_path, _LABELS[raw_label], patient_id, eye, signal))
    if not records:
        warnings.warn(f"{path}: manifest has no usable records")
    return Manifest(records, excluded)


def write_manifest(records, path):
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MANIFEST_HEADER + "\n")
        for r in records:
            rel = os.path.relpath(r.path, base) if os.path.isabs(r.path) else r.path
            fh.write(f"{rel},{r.label},{r.patient_id},{r.eye},{r.signal_strength}\n")


def load_example(record, target_dims):
    """Load one record: read, scale intensities into [0, 1], resample.

    u8 volumes are divided by 255; f32 volumes by their own max when it
    exceeds 1.  Returns (volume, label) with volume shaped target_dims.
    """
    header, vol = _read_volume(record.path)
    if header.dtype_code == DTYPE_U8:
        vol = vol / np.float32(255.0)
    else:
        peak = float(vol.max()) if vol.size else 0.0
        if peak > 1.0:
            vol = vol / np.float32(peak)
    np.clip(vol, 0.0, 1.0, out=vol)
    target_dims = tuple(int(t) for t in target_dims)
    if vol.shape != target_dims:
        vol = tensor.resample_trilinear(vol, target_dims)
    return vol.astype(np.float32, copy=False), record.label
