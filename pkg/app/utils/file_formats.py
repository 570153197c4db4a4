"""Versioned little-endian binary formats: backbone, embedding store, latent.

backbone  GCPLDNZ | u16 version | 7×u32 descriptor | u8 frozen | f32 w1 b1 w2 b2 w3 b3 anchors
store     GCPLEMB | u16 version | u32 cond_dim | u32 count | count × (u16 len, utf-8 name, f32[cond_dim])
latent    GCPLLAT | u16 version | u32 dim | f32[dim]
"""

import logging
import struct
from pathlib import Path

import numpy as np

from app.utils.errors import FormatError, StorageError
from ml.core.denoiser import PARAM_ORDER, DenoiserArchitecture, DenoiserModel

__all__ = [
    "MODEL_MAGIC",
    "STORE_MAGIC",
    "LATENT_MAGIC",
    "FORMAT_VERSION",
    "encode_model",
    "decode_model",
    "save_model",
    "load_model",
    "encode_embeddings",
    "decode_embeddings",
    "save_embeddings",
    "load_embeddings",
    "encode_latent",
    "decode_latent",
    "save_latent",
    "load_latent",
    "describe_file",
]

LOGGER = logging.getLogger(__name__)

MODEL_MAGIC = b"GCPLDNZ"
STORE_MAGIC = b"GCPLEMB"
LATENT_MAGIC = b"GCPLLAT"
FORMAT_VERSION = 1

_F32 = np.dtype("<f4")
_DESCRIPTOR = struct.Struct("<7I")


class _Reader:
    """Cursor over a byte string that raises FormatError on short reads."""

    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"Truncated {self.what}: needed {n} bytes at offset {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(count * _F32.itemsize), dtype=_F32).astype(np.float32)

    def header(self, magic: bytes) -> int:
        found = self.take(len(magic))
        if found != magic:
            raise FormatError(f"Not a {self.what}: bad magic {found!r}")
        (version,) = self.unpack("<H")
        if version != FORMAT_VERSION:
            raise FormatError(f"Unsupported {self.what} version {version} (expected {FORMAT_VERSION})")
        return version

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes after {self.what}")


def _read_bytes(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise StorageError(f"File not found: {path}") from None
    except OSError as exc:
        raise StorageError(f"Cannot read {path}: {exc}") from exc


def _write_bytes(path: Path, data: bytes) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise StorageError(f"Cannot write {path}: {exc}") from exc
    return path


def _f32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype=_F32).tobytes()


# ───── backbone ─────

def encode_model(model: DenoiserModel) -> bytes:
    parts = [
        MODEL_MAGIC,
        struct.pack("<H", FORMAT_VERSION),
        _DESCRIPTOR.pack(*model.arch.descriptor()),
        struct.pack("<B", int(model.frozen)),
    ]
    parts.extend(_f32_bytes(model.params[name]) for name in PARAM_ORDER)
    parts.append(_f32_bytes(model.anchors))
    return b"".join(parts)


def decode_model(data: bytes) -> DenoiserModel:
    reader = _Reader(data, "backbone file")
    reader.header(MODEL_MAGIC)
    descriptor = reader.unpack(_DESCRIPTOR.format)
    (frozen,) = reader.unpack("<B")
    try:
        arch = DenoiserArchitecture(*descriptor)
    except ValueError as exc:
        raise FormatError(f"Invalid architecture descriptor {descriptor}: {exc}") from exc

    params = {}
    for name, shape in arch.param_shapes().items():
        params[name] = reader.floats(int(np.prod(shape))).reshape(shape)
    anchors = reader.floats(arch.n_classes * arch.cond_dim).reshape(arch.n_classes, arch.cond_dim)
    reader.finish()

    model = DenoiserModel(arch=arch, params=params, anchors=anchors)
    return model.freeze() if frozen else model


def save_model(model: DenoiserModel, path) -> Path:
    out = _write_bytes(path, encode_model(model))
    LOGGER.debug(f"Saved backbone → {out}")
    return out


def load_model(path) -> DenoiserModel:
    return decode_model(_read_bytes(path))


# ───── embedding store ─────

def encode_embeddings(names, vectors: np.ndarray) -> bytes:
    vectors = np.asarray(vectors)
    names = list(names)
    if vectors.ndim != 2 or len(names) != vectors.shape[0]:
        raise FormatError(f"{len(names)} names for embeddings of shape {vectors.shape}")
    parts = [
        STORE_MAGIC,
        struct.pack("<H", FORMAT_VERSION),
        struct.pack("<II", vectors.shape[1], len(names)),
    ]
    for name, vec in zip(names, vectors):
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise FormatError(f"Class name too long to store: {name[:40]}...")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(_f32_bytes(vec))
    return b"".join(parts)


def decode_embeddings(data: bytes) -> tuple[list[str], np.ndarray]:
    reader = _Reader(data, "embedding store")
    reader.header(STORE_MAGIC)
    cond_dim, count = reader.unpack("<II")
    names, vectors = [], []
    for _ in range(count):
        (length,) = reader.unpack("<H")
        try:
            names.append(reader.take(length).decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"Class name is not valid UTF-8: {exc}") from exc
        vectors.append(reader.floats(cond_dim))
    reader.finish()
    stacked = np.stack(vectors) if vectors else np.empty((0, cond_dim), dtype=np.float32)
    return names, stacked


def save_embeddings(names, vectors, path) -> Path:
    names = list(names)
    out = _write_bytes(path, encode_embeddings(names, vectors))
    LOGGER.debug(f"Saved {len(names)} class prompts → {out}")
    return out


def load_embeddings(path) -> tuple[list[str], np.ndarray]:
    return decode_embeddings(_read_bytes(path))


# ───── single latent ─────

def encode_latent(x: np.ndarray) -> bytes:
    x = np.asarray(x)
    if x.ndim != 1:
        raise FormatError(f"A latent file holds one vector, got shape {x.shape}")
    return LATENT_MAGIC + struct.pack("<HI", FORMAT_VERSION, len(x)) + _f32_bytes(x)


def decode_latent(data: bytes) -> np.ndarray:
    reader = _Reader(data, "latent file")
    reader.header(LATENT_MAGIC)
    (dim,) = reader.unpack("<I")
    x = reader.floats(dim)
    reader.finish()
    return x


def save_latent(x: np.ndarray, path) -> Path:
    return _write_bytes(path, encode_latent(x))


def load_latent(path) -> np.ndarray:
    try:
        return decode_latent(_read_bytes(path))
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ───── inspection ─────

def _summary(name: str, arr: np.ndarray) -> str:
    if arr.size == 0:
        return f"  {name:<8} shape={arr.shape}"
    return (
        f"  {name:<8} shape={arr.shape} mean={arr.mean():+.5f} std={arr.std():.5f} "
        f"min={arr.min():+.5f} max={arr.max():+.5f}"
    )


def describe_file(path) -> str:
    """Human-readable dump of any of the versioned formats, identified by magic."""
    data = _read_bytes(path)
    magic = data[:7]
    if magic == MODEL_MAGIC:
        model = decode_model(data)
        a = model.arch
        lines = [
            f"{path}: backbone (GCPLDNZ v{FORMAT_VERSION})",
            f"  latent_dim={a.latent_dim} time_embed_dim={a.time_embed_dim} cond_dim={a.cond_dim} "
            f"hidden_dim={a.hidden_dim} n_hidden_layers={a.n_hidden_layers} "
            f"num_timesteps={a.num_timesteps} n_classes={a.n_classes}",
            f"  frozen={model.frozen}",
        ]
        lines.extend(_summary(name, model.params[name]) for name in PARAM_ORDER)
        lines.append(_summary("anchors", model.anchors))
        return "\n".join(lines)
    if magic == STORE_MAGIC:
        names, vectors = decode_embeddings(data)
        lines = [f"{path}: embedding store (GCPLEMB v{FORMAT_VERSION})",
                 f"  cond_dim={vectors.shape[1]} classes={len(names)}"]
        lines.extend(
            f"  {name}: norm={np.linalg.norm(vec):.5f} first={np.array2string(vec[:4], precision=4)}"
            for name, vec in zip(names, vectors)
        )
        return "\n".join(lines)
    if magic == LATENT_MAGIC:
        x = decode_latent(data)
        return "\n".join([f"{path}: latent (GCPLLAT v{FORMAT_VERSION})", _summary("x", x)])
    raise FormatError(f"{path}: unrecognised magic {magic!r}")
