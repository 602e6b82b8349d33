import json
import struct

import numpy as np
import pytest

from evoattack.data import (
    BadMagic, ChecksumMismatch, CountMismatch, InvalidLabel, ManifestMismatch, TruncatedFile,
    UnsupportedChannelCount, export_image, fnv1a64, load_cifar10_bin, load_dataset,
    load_mnist_idx, load_weights, read_pnm, save_weights,
)
from evoattack.nn import build_network, lenet_spec


def idx_bytes(magic, dims, payload):
    return struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + bytes(payload)


@pytest.fixture
def mnist_pair(tmp_path):
    img = tmp_path / "img.idx"
    lab = tmp_path / "lab.idx"
    img.write_bytes(idx_bytes(0x803, (1, 2, 2), [0, 255, 0, 255]))
    lab.write_bytes(idx_bytes(0x801, (1,), [7]))
    return img, lab


def test_idx_golden_file(mnist_pair):
    ds = load_mnist_idx(*mnist_pair)
    assert ds.images.shape == (1, 2, 2, 1)
    np.testing.assert_array_equal(ds.images[0, :, :, 0], [[0, 1], [0, 1]])
    assert ds.labels.tolist() == [7]


def test_idx_bad_magic(tmp_path, mnist_pair):
    img, lab = mnist_pair
    img.write_bytes(idx_bytes(0x801, (1, 2, 2), [0, 255, 0, 255]))
    with pytest.raises(BadMagic):
        load_mnist_idx(img, lab)


def test_idx_truncated_header(mnist_pair):
    img, lab = mnist_pair
    img.write_bytes(struct.pack(">I", 0x803) + b"\x00\x00")
    with pytest.raises(TruncatedFile):
        load_mnist_idx(img, lab)


def test_idx_truncated_payload(mnist_pair):
    img, lab = mnist_pair
    img.write_bytes(idx_bytes(0x803, (1, 2, 2), [0, 255, 0]))
    with pytest.raises(TruncatedFile):
        load_mnist_idx(img, lab)


def test_idx_count_mismatch(mnist_pair):
    img, lab = mnist_pair
    lab.write_bytes(idx_bytes(0x801, (2,), [1, 2]))
    with pytest.raises(CountMismatch):
        load_mnist_idx(img, lab)


def test_idx_invalid_label(mnist_pair):
    img, lab = mnist_pair
    lab.write_bytes(idx_bytes(0x801, (1,), [12]))
    with pytest.raises(InvalidLabel):
        load_mnist_idx(img, lab)


def test_cifar_records(tmp_path):
    rec = bytearray()
    for label in (3, 9):
        rec.append(label)
        rec.extend(np.arange(3072, dtype=np.uint32).astype(np.uint8).tobytes())
    p = tmp_path / "batch.bin"
    p.write_bytes(bytes(rec))
    ds = load_cifar10_bin(p)
    assert len(ds) == 2 and ds.images.shape == (2, 32, 32, 3)
    assert ds.labels.tolist() == [3, 9]
    # channel-planar: green plane starts at byte 1024 of the record
    assert ds.images[0, 0, 0, 1] == pytest.approx((1024 % 256) / 255)
    assert ds.images[0, 0, 1, 0] == pytest.approx(1 / 255)


def test_cifar_truncated(tmp_path):
    p = tmp_path / "short.bin"
    p.write_bytes(bytes(3072))
    with pytest.raises(TruncatedFile):
        load_cifar10_bin(p)


def test_cifar_invalid_label(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(bytes([10]) + bytes(3072))
    with pytest.raises(InvalidLabel):
        load_cifar10_bin(p)


def test_load_dataset_missing_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="t10k-images"):
        load_dataset("mnist", "test", root=tmp_path)


# --- weights --------------------------------------------------------------

def test_fnv1a64_reference_values():
    # published FNV-1a 64-bit test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_weights_round_trip_bitwise(tmp_path):
    w = build_network(lenet_spec(), seed=4)
    w["0.conv.bias"][:] = np.array([np.nan, -0.0, 1e-45] + [0.0] * 17, dtype=np.float32)
    save_weights(w, tmp_path / "net", network="lenet")
    back = load_weights(tmp_path / "net.json")
    assert list(back) == list(w)
    for k in w:
        assert back[k].dtype == np.float32
        assert back[k].tobytes() == w[k].tobytes()


def test_weights_tampered_blob(tmp_path):
    w = build_network(lenet_spec(), seed=0)
    save_weights(w, tmp_path / "net")
    blob = bytearray((tmp_path / "net.bin").read_bytes())
    blob[100] ^= 0x01
    (tmp_path / "net.bin").write_bytes(bytes(blob))
    with pytest.raises(ChecksumMismatch):
        load_weights(tmp_path / "net")


def test_weights_manifest_mismatch(tmp_path):
    save_weights({"a": np.ones(3, np.float32)}, tmp_path / "m")
    (tmp_path / "m.bin").write_bytes(bytes(8))
    with pytest.raises(ManifestMismatch):
        load_weights(tmp_path / "m")


def test_empty_network_weights(tmp_path):
    path = save_weights({}, tmp_path / "empty")
    manifest = json.loads(path.read_text())
    assert manifest["blob_bytes"] == 0 and manifest["tensors"] == []
    assert (tmp_path / "empty.bin").read_bytes() == b""
    assert load_weights(tmp_path / "empty") == {}


def test_manifest_layout(tmp_path):
    path = save_weights({"x": np.zeros((2, 3), np.float32), "y": np.zeros(4, np.float32)},
                        tmp_path / "w")
    m = json.loads(path.read_text())
    assert [t["offset"] for t in m["tensors"]] == [0, 24]
    assert m["blob_bytes"] == 40
    assert list(m) == ["format", "version", "network", "dtype", "blob", "blob_bytes", "fnv1a64",
                       "tensors"]


# --- images ---------------------------------------------------------------

def test_export_white_pgm(tmp_path):
    p = export_image(np.ones((2, 2, 1)), tmp_path / "w.pgm")
    assert p.read_bytes() == b"P5\n2 2\n255\n" + bytes([255] * 4)


def test_export_rounds_half_up(tmp_path):
    p = export_image(np.full((1, 1, 1), 0.5), tmp_path / "h.pgm")
    assert p.read_bytes()[-1] == 128


def test_export_rejects_two_channels(tmp_path):
    with pytest.raises(UnsupportedChannelCount):
        export_image(np.zeros((2, 2, 2)), tmp_path / "x.pgm")


@pytest.mark.parametrize("channels,magic", [(1, b"P5"), (3, b"P6")])
def test_export_reimport_within_quantization(tmp_path, channels, magic):
    img = np.random.default_rng(0).random((5, 7, channels))
    p = export_image(img, tmp_path / "img.pnm")
    assert p.read_bytes()[:2] == magic
    back = read_pnm(p)
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12
