"""Dataset parsers, weight persistence and PGM/PPM image export.

Byte formats:

* MNIST IDX: big-endian ``uint32`` magic (0x803 images, 0x801 labels),
  ``uint32`` dimensions, then raw ``uint8`` payload.
* CIFAR-10 binary: records of 1 label byte + 3072 pixel bytes, planar R, G, B.
* Weights: a JSON manifest (names, shapes, byte offsets, FNV-1a 64 checksum)
  next to a blob of little-endian float32 values.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 32 * 32 * 3
WEIGHT_FORMAT = "evoattack-weights"
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF


class DataFormatError(ValueError):
    pass


class BadMagic(DataFormatError):
    pass


class TruncatedFile(DataFormatError):
    pass


class CountMismatch(DataFormatError):
    pass


class InvalidLabel(DataFormatError):
    pass


class ManifestMismatch(DataFormatError):
    pass


class ChecksumMismatch(DataFormatError):
    pass


class UnsupportedChannelCount(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, h, w, c) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64
    split: str = ""
    num_classes: int = 10

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise CountMismatch(f"{len(self.images)} images vs {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidLabel(f"labels outside [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n], self.split, self.num_classes)


def data_root() -> Path:
    return Path(os.environ.get("EVOATTACK_DATA_DIR", "data"))


def _read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def parse_idx(raw: bytes, expected_magic: int, name: str = "<bytes>") -> np.ndarray:
    if len(raw) < 4:
        raise TruncatedFile(f"{name}: {len(raw)} bytes, too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise BadMagic(f"{name}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFile(f"{name}: header needs {header} bytes, file has {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims, dtype=np.int64))
    if len(raw) < header + size:
        raise TruncatedFile(f"{name}: payload needs {size} bytes, found {len(raw) - header}")
    if len(raw) > header + size:
        raise CountMismatch(f"{name}: {len(raw) - header - size} trailing bytes after payload")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_mnist_idx(images_path, labels_path, split: str = "") -> Dataset:
    pixels = parse_idx(_read(images_path), IDX_IMAGES_MAGIC, str(images_path))
    labels = parse_idx(_read(labels_path), IDX_LABELS_MAGIC, str(labels_path))
    if pixels.ndim != 3:
        raise DataFormatError(f"{images_path}: expected 3 dimensions, got {pixels.ndim}")
    if len(pixels) != len(labels):
        raise CountMismatch(f"{len(pixels)} images but {len(labels)} labels")
    if len(labels) and labels.max() > 9:
        raise InvalidLabel(f"{labels_path}: label {labels.max()} outside 0..9")
    images = (pixels.astype(np.float32) / 255.0)[..., None]
    return Dataset(images, labels.astype(np.int64), split)


def load_cifar10_bin(path, split: str = "") -> Dataset:
    raw = _read(path)
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise TruncatedFile(f"{path}: {len(raw)} bytes is not a whole number of "
                            f"{CIFAR_RECORD}-byte records")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise InvalidLabel(f"{path}: label {labels.max()} outside 0..9")
    planes = rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return Dataset(planes.astype(np.float32) / 255.0, labels, split)


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def load_dataset(name: str, split: str, root=None) -> Dataset:
    """Load ``mnist`` or ``cifar10`` from ``<root>/<name>/``.

    Raises FileNotFoundError naming the missing path.
    """
    base = Path(root) if root is not None else data_root()
    if name == "mnist":
        img, lab = (base / "mnist" / f for f in MNIST_FILES[split])
        for p in (img, lab):
            if not p.exists():
                raise FileNotFoundError(f"missing dataset file {p}")
        return load_mnist_idx(img, lab, split)
    if name == "cifar10":
        folder = base / "cifar10"
        files = ([folder / f"data_batch_{i}.bin" for i in range(1, 6)] if split == "train"
                 else [folder / "test_batch.bin"])
        for p in files:
            if not p.exists():
                raise FileNotFoundError(f"missing dataset file {p}")
        parts = [load_cifar10_bin(p, split) for p in files]
        return Dataset(np.concatenate([d.images for d in parts]),
                       np.concatenate([d.labels for d in parts]), split)
    raise ValueError(f"unknown dataset {name!r}")


# --- weights --------------------------------------------------------------

def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & MASK64
    return h


def _paths(path):
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".json", ".bin") else path
    return stem.with_suffix(".json"), stem.with_suffix(".bin")


def save_weights(weights: dict, path, network: str | None = None) -> Path:
    """Write ``<stem>.json`` (manifest) and ``<stem>.bin`` (float32 LE blob)."""
    manifest_path, blob_path = _paths(path)
    tensors, chunks, offset = [], [], 0
    for name, value in weights.items():
        arr = np.ascontiguousarray(value, dtype="<f4")
        chunk = arr.tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset,
                        "nbytes": len(chunk)})
        chunks.append(chunk)
        offset += len(chunk)
    blob = b"".join(chunks)
    manifest = {
        "format": WEIGHT_FORMAT,
        "version": 1,
        "network": network,
        "dtype": "float32-le",
        "blob": blob_path.name,
        "blob_bytes": len(blob),
        "fnv1a64": f"{fnv1a64(blob):016x}",
        "tensors": tensors,
    }
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    blob_path.write_bytes(blob)
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def read_manifest(path) -> dict:
    manifest_path, _ = _paths(path)
    manifest = json.loads(Path(manifest_path).read_text())
    if manifest.get("format") != WEIGHT_FORMAT:
        raise ManifestMismatch(f"{manifest_path}: not a {WEIGHT_FORMAT} manifest")
    return manifest


def load_weights(path) -> dict:
    manifest_path, _ = _paths(path)
    manifest = read_manifest(manifest_path)
    blob_path = manifest_path.parent / manifest["blob"]
    blob = blob_path.read_bytes()
    if len(blob) != manifest["blob_bytes"]:
        raise ManifestMismatch(f"{blob_path}: {len(blob)} bytes, manifest says "
                               f"{manifest['blob_bytes']}")
    if f"{fnv1a64(blob):016x}" != manifest["fnv1a64"]:
        raise ChecksumMismatch(f"{blob_path}: checksum does not match manifest")
    weights, expected_offset = {}, 0
    for t in manifest["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        if t["offset"] != expected_offset or t["nbytes"] != 4 * count:
            raise ManifestMismatch(f"tensor {t['name']}: inconsistent offset or size")
        if t["offset"] + t["nbytes"] > len(blob):
            raise ManifestMismatch(f"tensor {t['name']}: extends past end of blob")
        weights[t["name"]] = np.frombuffer(blob, dtype="<f4", count=count,
                                           offset=t["offset"]).reshape(t["shape"]).astype(np.float32)
        expected_offset += t["nbytes"]
    if expected_offset != len(blob):
        raise ManifestMismatch(f"{blob_path}: {len(blob) - expected_offset} unaccounted bytes")
    return weights


# --- images ---------------------------------------------------------------

def to_bytes(image) -> np.ndarray:
    """Quantize [0, 1] pixels to 0..255, rounding halves up."""
    x = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    return np.floor(x * 255.0 + 0.5).astype(np.uint8)


def export_image(image, path) -> Path:
    """Binary PGM (P5) for one channel, PPM (P6) for three."""
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[..., None]
    h, w, c = image.shape
    if c not in (1, 3):
        raise UnsupportedChannelCount(f"cannot export a {c}-channel image as PGM/PPM")
    magic = b"P5" if c == 1 else b"P6"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(magic + f"\n{w} {h}\n255\n".encode() + to_bytes(image).tobytes())
    return path


def read_pnm(path) -> np.ndarray:
    """Read a binary PGM/PPM with maxval 255 back to (h, w, c) floats in [0, 1]."""
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedFile(f"{path}: incomplete PNM header")
        tokens.append(raw[start:pos])
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic not in (b"P5", b"P6"):
        raise BadMagic(f"{path}: unsupported PNM magic {magic!r}")
    if maxval != 255:
        raise DataFormatError(f"{path}: maxval {maxval} unsupported")
    c = 1 if magic == b"P5" else 3
    pos += 1
    payload = raw[pos:pos + w * h * c]
    if len(payload) != w * h * c:
        raise TruncatedFile(f"{path}: pixel data truncated")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, c) / 255.0
