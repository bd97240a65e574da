"""Binary sequence (``SKSQ``) and checkpoint (``SKPT``) files.

All integers and floats are little-endian; floats are IEEE-754 binary64.

Sequence file::

    b"SKSQ" u8 version=1
    u32 sample_count, u32 N, u32 F, u32 C, u32 class_count
    per sample: u32 label, u16 id_len, id (UTF-8), N*F*C f64 in frame-major order

Checkpoint file::

    b"SKPT" u8 version=1, u32 entry_count
    per entry: u16 name_len, name (UTF-8), u8 rank, rank * u32 dims, prod(dims) f64 row-major
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .data import SkeletonDataset
from .layers import ModelConfig
from .topology import SkeletonTopology

SEQ_MAGIC = b"SKSQ"
CKPT_MAGIC = b"SKPT"
VERSION = 1
MAX_ELEMENTS = 1 << 31


class FormatError(ValueError):
    pass


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class ShapeOverflowError(FormatError):
    pass


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int, what: str) -> memoryview:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(f"file ends inside {what} (need {n} bytes at offset {self.pos})")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def floats(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(np.float64)


def _check_header(r: _Reader, magic: bytes):
    got = bytes(r.take(4, "magic"))
    if got != magic:
        raise BadMagicError(f"expected magic {magic!r}, found {got!r}")
    (version,) = r.unpack("<B", "version")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")


def _u32(value: int, what: str) -> int:
    if not 0 <= value < 1 << 32:
        raise ShapeOverflowError(f"{what}={value} does not fit in u32")
    return value


# -- sequences ------------------------------------------------------------------

def encode_sequences(ds: SkeletonDataset) -> bytes:
    n, f, c = ds.shape
    parts = [SEQ_MAGIC, struct.pack("<B", VERSION),
             struct.pack("<5I", *(_u32(v, k) for k, v in
                                  (("sample_count", len(ds)), ("N", n), ("F", f), ("C", c),
                                   ("class_count", ds.class_count))))]
    for label, sid, feats in zip(ds.labels, ds.ids, ds.features):
        raw = sid.encode("utf-8")
        if len(raw) >= 1 << 16:
            raise ValueError(f"sample id too long: {sid[:20]}...")
        parts += [struct.pack("<IH", int(label), len(raw)), raw, np.ascontiguousarray(feats, dtype="<f8").tobytes()]
    return b"".join(parts)


def decode_sequences(buf: bytes) -> SkeletonDataset:
    r = _Reader(buf)
    _check_header(r, SEQ_MAGIC)
    count, n, f, c, classes = r.unpack("<5I", "header")
    per = n * f * c
    if per > MAX_ELEMENTS or count * per > MAX_ELEMENTS:
        raise ShapeOverflowError(f"{count} samples of {n}x{f}x{c} values exceed the {MAX_ELEMENTS} element limit")
    feats = np.empty((count, f, n, c))
    labels = np.empty(count, dtype=np.int64)
    ids = []
    for s in range(count):
        label, id_len = r.unpack("<IH", f"sample {s} header")
        if label >= classes:
            raise FormatError(f"sample {s}: label {label} >= class_count {classes}")
        ids.append(bytes(r.take(id_len, f"sample {s} id")).decode("utf-8"))
        labels[s] = label
        feats[s] = r.floats(per, f"sample {s} values").reshape(f, n, c)
    if r.pos != len(r.buf):
        raise FormatError(f"{len(r.buf) - r.pos} trailing bytes after last sample")
    return SkeletonDataset(feats, labels, classes, ids)


def write_sequence_file(path, ds: SkeletonDataset):
    Path(path).write_bytes(encode_sequences(ds))


def read_sequence_file(path) -> SkeletonDataset:
    return decode_sequences(Path(path).read_bytes())


# -- checkpoints ------------------------------------------------------------------

def encode_checkpoint(entries: dict[str, np.ndarray]) -> bytes:
    parts = [CKPT_MAGIC, struct.pack("<BI", VERSION, len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr, dtype=np.float64)
        raw = name.encode("utf-8")
        if len(raw) >= 1 << 16 or arr.ndim > 255:
            raise ValueError(f"entry {name!r} cannot be encoded")
        parts += [struct.pack("<H", len(raw)), raw, struct.pack("<B", arr.ndim),
                  struct.pack(f"<{arr.ndim}I", *(_u32(d, name) for d in arr.shape)),
                  np.ascontiguousarray(arr, dtype="<f8").tobytes()]
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> dict[str, np.ndarray]:
    r = _Reader(buf)
    _check_header(r, CKPT_MAGIC)
    (count,) = r.unpack("<I", "entry count")
    out = {}
    for e in range(count):
        (name_len,) = r.unpack("<H", f"entry {e} name length")
        name = bytes(r.take(name_len, f"entry {e} name")).decode("utf-8")
        (rank,) = r.unpack("<B", f"{name} rank")
        dims = r.unpack(f"<{rank}I", f"{name} dims")
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        if size > MAX_ELEMENTS:
            raise ShapeOverflowError(f"{name}: {dims} exceeds the {MAX_ELEMENTS} element limit")
        if name in out:
            raise FormatError(f"duplicate entry {name!r}")
        out[name] = r.floats(size, f"{name} values").reshape(dims)
    if r.pos != len(r.buf):
        raise FormatError(f"{len(r.buf) - r.pos} trailing bytes after last entry")
    return out


def write_checkpoint(path, entries: dict[str, np.ndarray]):
    Path(path).write_bytes(encode_checkpoint(entries))


def read_checkpoint(path) -> dict[str, np.ndarray]:
    return decode_checkpoint(Path(path).read_bytes())


# -- model checkpoints: config stored alongside the weights ------------------------

_TEM_CODES = {"residual": 0, "replace": 1, "off": 2}


def config_entries(cfg: ModelConfig) -> dict[str, np.ndarray]:
    topo = cfg.topology
    return {
        "config.topology.joints": np.array([topo.joint_count], dtype=float),
        "config.topology.cog": np.array([topo.cog_joint], dtype=float),
        "config.topology.bones": np.array(topo.bones, dtype=float).reshape(-1, 2),
        "config.in_channels": np.array([cfg.in_channels], dtype=float),
        "config.channels": np.array(cfg.channels, dtype=float),
        "config.strides": np.array(cfg.strides, dtype=float),
        "config.class_count": np.array([cfg.class_count], dtype=float),
        "config.kernel_size": np.array([cfg.kernel_size], dtype=float),
        "config.hops": np.array([cfg.spatial_hops, cfg.temporal_hops], dtype=float),
        "config.tem_mode": np.array([_TEM_CODES[cfg.tem_mode]], dtype=float),
        "config.residual": np.array([float(cfg.residual)]),
        "config.epsilon": np.array([cfg.epsilon]),
        "config.seed": np.array([cfg.seed], dtype=float),
    }


def config_from_entries(entries: dict[str, np.ndarray]) -> ModelConfig:
    try:
        ints = lambda key: [int(v) for v in entries[key].ravel()]  # noqa: E731
        topo = SkeletonTopology(ints("config.topology.joints")[0],
                                tuple(tuple(int(v) for v in row) for row in entries["config.topology.bones"]),
                                ints("config.topology.cog")[0])
        modes = {v: k for k, v in _TEM_CODES.items()}
        spatial_hops, temporal_hops = ints("config.hops")
        return ModelConfig(
            topology=topo,
            in_channels=ints("config.in_channels")[0],
            channels=tuple(ints("config.channels")),
            class_count=ints("config.class_count")[0],
            strides=tuple(ints("config.strides")),
            kernel_size=ints("config.kernel_size")[0],
            spatial_hops=spatial_hops,
            temporal_hops=temporal_hops,
            tem_mode=modes[ints("config.tem_mode")[0]],
            residual=bool(entries["config.residual"][0]),
            epsilon=float(entries["config.epsilon"][0]),
            seed=ints("config.seed")[0],
        )
    except KeyError as exc:
        raise FormatError(f"checkpoint lacks model configuration entry {exc}") from None


def save_model(path, cfg: ModelConfig, params: dict[str, np.ndarray]):
    write_checkpoint(path, {**config_entries(cfg), **params})


def load_model(path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    entries = read_checkpoint(path)
    cfg = config_from_entries(entries)
    params = {k: v for k, v in entries.items() if not k.startswith("config.")}
    return cfg, params
