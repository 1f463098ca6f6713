"""Binary parameter container plus a JSON sidecar.

Layout (all integers little-endian)::

    b"CSWD"  u32 version=1  u32 n_entries
    per entry: u32 name_len, name (UTF-8), u32 rank, rank x u64 dims,
               prod(dims) x f32 data

Arrays are stored as 32-bit floats regardless of training precision.
"""
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"CSWD"
VERSION = 1


def save_arrays(path, arrays):
    """Write an ordered mapping name -> ndarray."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(arrays)))
        for name, arr in arrays.items():
            raw = name.encode("utf-8")
            arr = np.asarray(arr)
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_arrays(path):
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:4]!r}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    off = 12
    out = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            name = data[off : off + n].decode("utf-8")
            off += n
            (rank,) = struct.unpack_from("<I", data, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}Q", data, off)
            off += 8 * rank
            size = int(np.prod(dims, dtype=np.int64))
            arr = np.frombuffer(data, dtype="<f4", count=size, offset=off).reshape(dims)
            off += 4 * size
            out[name] = arr.astype(np.float32)
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt ({exc})") from None
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    return out


def save_model(out_dir, model, vocab=None, extra=None):
    """``model.cswd`` + ``model.json`` (config echo, vocabulary, class names)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_arrays(out / "model.cswd", model.state_dict())
    meta = {
        "format": "cswd-checkpoint",
        "version": VERSION,
        "config": model.config.to_dict(),
        "vocab": vocab.to_list() if vocab is not None else None,
        "classes": ["mono", "cs"],
    }
    if extra:
        meta.update(extra)
    (out / "model.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def load_model(ckpt_dir):
    from .datagen import Vocab
    from .model import CswModel, ModelConfig

    ckpt = Path(ckpt_dir)
    meta = json.loads((ckpt / "model.json").read_text(encoding="utf-8"))
    config = ModelConfig.from_dict(meta["config"])
    model = CswModel(config)
    model.load_state_dict(load_arrays(ckpt / "model.cswd"))
    vocab = Vocab.from_list(meta["vocab"]) if meta.get("vocab") else None
    return model, vocab, meta
