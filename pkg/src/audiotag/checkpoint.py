"""Binary checkpoints and the log-mel feature container.

Checkpoint layout::

    b"PANNCKPT"            8-byte magic
    u32 version            little-endian
    u64 header_length
    header                 UTF-8 JSON: arch, iteration, manifest, optimizer, meta
    payload                concatenated float32 little-endian tensors

Manifest entries are ``{"name", "shape", "dtype", "offset", "nbytes"}`` with
offsets relative to the payload start.

Feature container layout: b"LMEL", u8 version, u32 T, u32 F, T*F float32 LE.
"""
from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .architectures import ArchSpec

MAGIC = b"PANNCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")

FEATURE_MAGIC = b"LMEL"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<4sBII")


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class CorruptManifestError(CheckpointError):
    pass


class TruncatedPayloadError(CheckpointError):
    pass


class FeatureFormatError(Exception):
    pass


@dataclass
class CheckpointBlob:
    arch: ArchSpec
    tensors: "OrderedDict[str, np.ndarray]"
    iteration: int = 0
    optimizer: dict | None = None
    meta: dict = field(default_factory=dict)


def blob_from_network(net, iteration=0, optimizer=None, meta=None) -> CheckpointBlob:
    tensors = OrderedDict((k, np.array(v, dtype=np.float32)) for k, v in net.state_dict().items())
    opt = None
    if optimizer is not None:
        names = [n for n, p in net.params.items() if any(p is q for q in optimizer.params)]
        opt = {
            "step": optimizer.state.step,
            "lr": optimizer.lr,
            "m": OrderedDict(zip(names, [np.array(m, dtype=np.float32) for m in optimizer.state.m])),
            "v": OrderedDict(zip(names, [np.array(v, dtype=np.float32) for v in optimizer.state.v])),
        }
    return CheckpointBlob(net.spec, tensors, iteration, opt, dict(meta or {}))


def save_checkpoint(blob: CheckpointBlob, path):
    entries, chunks, offset = [], [], 0

    def add(name, arr):
        nonlocal offset
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append(
            {"name": name, "shape": list(np.shape(arr)), "dtype": "float32", "offset": offset, "nbytes": len(data)}
        )
        chunks.append(data)
        offset += len(data)

    for name, arr in blob.tensors.items():
        add(name, arr)
    opt_header = None
    if blob.optimizer is not None:
        opt_header = {"step": blob.optimizer["step"], "lr": blob.optimizer.get("lr")}
        for kind in ("m", "v"):
            for name, arr in blob.optimizer[kind].items():
                add(f"optimizer.{kind}/{name}", arr)
    header = json.dumps(
        {
            "arch": json.loads(blob.arch.to_json()),
            "iteration": int(blob.iteration),
            "manifest": entries,
            "optimizer": opt_header,
            "meta": blob.meta,
        },
        sort_keys=True,
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)


def _validate_manifest(entries):
    if not isinstance(entries, list):
        raise CorruptManifestError("manifest is not a list")
    spans = []
    for e in entries:
        try:
            name, shape, offset, nbytes = e["name"], e["shape"], int(e["offset"]), int(e["nbytes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptManifestError(f"bad manifest entry {e!r}") from exc
        if e.get("dtype") != "float32":
            raise CorruptManifestError(f"{name}: unsupported dtype {e.get('dtype')!r}")
        if offset < 0 or nbytes != 4 * int(np.prod(shape, dtype=np.int64)):
            raise CorruptManifestError(f"{name}: size does not match shape {shape}")
        spans.append((offset, offset + nbytes, name))
    spans.sort()
    for (a0, a1, an), (b0, b1, bn) in zip(spans, spans[1:]):
        if b0 < a1:
            raise CorruptManifestError(f"tensors {an} and {bn} overlap")
    return max((s[1] for s in spans), default=0)


def load_checkpoint(path) -> CheckpointBlob:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size or raw[:8] != MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint (bad magic)")
    _, version, header_len = _PREFIX.unpack_from(raw)
    if version != VERSION:
        raise VersionMismatchError(f"{path}: checkpoint version {version}, this build reads {VERSION}")
    start = _PREFIX.size + header_len
    if len(raw) < start:
        raise TruncatedPayloadError(f"{path}: truncated header")
    try:
        header = json.loads(raw[_PREFIX.size : start].decode("utf-8"))
        arch = ArchSpec.from_dict(header["arch"])
        entries = header["manifest"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptManifestError(f"{path}: unreadable header: {exc}") from exc
    end = _validate_manifest(entries)
    payload = raw[start:]
    if len(payload) < end:
        raise TruncatedPayloadError(f"{path}: truncated payload ({len(payload)} of {end} bytes)")
    tensors, opt_m, opt_v = OrderedDict(), OrderedDict(), OrderedDict()
    for e in entries:
        arr = np.frombuffer(payload, dtype="<f4", count=e["nbytes"] // 4, offset=e["offset"])
        arr = arr.reshape(e["shape"]).astype(np.float32)
        name = e["name"]
        if name.startswith("optimizer.m/"):
            opt_m[name[len("optimizer.m/") :]] = arr
        elif name.startswith("optimizer.v/"):
            opt_v[name[len("optimizer.v/") :]] = arr
        else:
            tensors[name] = arr
    opt = None
    if header.get("optimizer") is not None:
        opt = dict(header["optimizer"], m=opt_m, v=opt_v)
    return CheckpointBlob(arch, tensors, int(header.get("iteration", 0)), opt, header.get("meta") or {})


def network_from_checkpoint(blob: CheckpointBlob, spec: ArchSpec | None = None):
    """Instantiate the checkpoint's network; ``spec`` (if given) must match it."""
    from .architectures import Network

    if spec is not None and spec != blob.arch:
        raise ValueError(f"checkpoint holds {blob.arch.name} (width {blob.arch.width_scale}); "
                         f"requested {spec.name} (width {spec.width_scale})")
    net = Network(blob.arch)
    net.load_state_dict(blob.tensors)
    return net


# --------------------------------------------------------------------------
# feature container


def save_features(path, values):
    values = np.asarray(values)
    if values.ndim != 2:
        raise FeatureFormatError(f"features must be T x F, got shape {values.shape}")
    T, F = values.shape
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, T, F))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def load_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _FEATURE_HEADER.size or raw[:4] != FEATURE_MAGIC:
        raise FeatureFormatError(f"{path}: not a log-mel container (bad magic)")
    _, version, T, F = _FEATURE_HEADER.unpack_from(raw)
    if version != FEATURE_VERSION:
        raise FeatureFormatError(f"{path}: container version {version}, expected {FEATURE_VERSION}")
    payload = raw[_FEATURE_HEADER.size :]
    if len(payload) != 4 * T * F:
        raise FeatureFormatError(f"{path}: truncated payload ({len(payload)} of {4 * T * F} bytes)")
    return np.frombuffer(payload, dtype="<f4").reshape(T, F).astype(np.float32)
