import json
import struct

import numpy as np
import pytest

from audiotag.architectures import Network, build_architecture
from audiotag.autodiff import Adam
from audiotag.checkpoint import (
    BadMagicError,
    CorruptManifestError,
    FeatureFormatError,
    TruncatedPayloadError,
    VersionMismatchError,
    blob_from_network,
    load_checkpoint,
    load_features,
    network_from_checkpoint,
    save_checkpoint,
    save_features,
)


@pytest.fixture
def saved(tmp_path):
    net = Network(build_architecture("wavegram_logmel_cnn", 0.125, n_classes=3), seed=4)
    net.bn["layers.0.bn0"].running_mean[:] = 0.25
    opt = Adam(net.trainable(), lr=1e-3)
    for p in opt.params:
        p.grad = np.ones_like(p.data)
    opt.step()
    path = tmp_path / "m.ckpt"
    save_checkpoint(blob_from_network(net, 17, opt, {"note": "x"}), path)
    return net, opt, path


def test_roundtrip_bit_exact(saved):
    net, opt, path = saved
    blob = load_checkpoint(path)
    assert blob.iteration == 17 and blob.meta == {"note": "x"}
    assert blob.arch == net.spec
    for name, arr in net.state_dict().items():
        assert blob.tensors[name].tobytes() == np.asarray(arr, np.float32).tobytes(), name
    assert blob.optimizer["step"] == 1
    first = next(iter(net.params))
    assert np.array_equal(blob.optimizer["m"][first], opt.state.m[0])
    net2 = network_from_checkpoint(blob)
    for name, arr in net.state_dict().items():
        assert np.array_equal(net2.state_dict()[name], arr)
    save_checkpoint(blob, path.with_suffix(".2"))
    assert path.with_suffix(".2").read_bytes() == path.read_bytes()


def test_spec_mismatch_rejected(saved):
    _, _, path = saved
    with pytest.raises(ValueError):
        network_from_checkpoint(load_checkpoint(path), build_architecture("cnn14", 0.125, n_classes=3))


def test_bad_magic(saved, tmp_path):
    _, _, path = saved
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    (tmp_path / "b").write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        load_checkpoint(tmp_path / "b")


def test_version_mismatch(saved, tmp_path):
    _, _, path = saved
    raw = bytearray(path.read_bytes())
    raw[8:12] = struct.pack("<I", 99)
    (tmp_path / "b").write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError):
        load_checkpoint(tmp_path / "b")


def test_truncated_payload(saved, tmp_path):
    _, _, path = saved
    (tmp_path / "b").write_bytes(path.read_bytes()[:-10])
    with pytest.raises(TruncatedPayloadError):
        load_checkpoint(tmp_path / "b")


def _rewrite_header(path, out, mutate):
    raw = path.read_bytes()
    n = struct.unpack_from("<Q", raw, 12)[0]
    header = json.loads(raw[20 : 20 + n])
    mutate(header)
    new = json.dumps(header).encode()
    out.write_bytes(raw[:12] + struct.pack("<Q", len(new)) + new + raw[20 + n :])


@pytest.mark.parametrize(
    "mutate",
    [
        lambda h: h["manifest"][1].update(offset=0),  # overlap
        lambda h: h["manifest"][0].update(shape=[3, 3, 3, 3, 3]),  # nbytes disagree
        lambda h: h.pop("manifest"),
        lambda h: h["manifest"][0].update(dtype="float64"),
    ],
)
def test_corrupt_manifest(saved, tmp_path, mutate):
    _, _, path = saved
    _rewrite_header(path, tmp_path / "b", mutate)
    with pytest.raises(CorruptManifestError):
        load_checkpoint(tmp_path / "b")


def test_garbled_header(saved, tmp_path):
    _, _, path = saved
    raw = bytearray(path.read_bytes())
    raw[20:30] = b"\xff" * 10
    (tmp_path / "b").write_bytes(bytes(raw))
    with pytest.raises(CorruptManifestError):
        load_checkpoint(tmp_path / "b")


def test_feature_roundtrip_and_errors(tmp_path, rng):
    values = rng.normal(size=(101, 64)).astype(np.float32)
    save_features(tmp_path / "f", values)
    back = load_features(tmp_path / "f")
    assert back.tobytes() == values.tobytes()
    raw = (tmp_path / "f").read_bytes()
    (tmp_path / "t").write_bytes(raw[:-4])
    with pytest.raises(FeatureFormatError, match="truncated"):
        load_features(tmp_path / "t")
    (tmp_path / "m").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FeatureFormatError, match="magic"):
        load_features(tmp_path / "m")
    (tmp_path / "v").write_bytes(raw[:4] + b"\x09" + raw[5:])
    with pytest.raises(FeatureFormatError, match="version"):
        load_features(tmp_path / "v")
    with pytest.raises(FeatureFormatError):
        save_features(tmp_path / "x", np.zeros(3))
