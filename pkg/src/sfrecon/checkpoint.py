"""``NPC1`` checkpoint container.

Layout (little-endian)::

    b"NPC1" | version u32 | param_count u32 |
    param_count x (name_len u16 | utf-8 name | rank u8 | rank x dim u32 | f64 data)

Model hyperparameters are stored as rank-0 entries under ``meta/``.  When
optimizer state is saved it follows as a second block with the same layout
(``count u32`` then entries) under the ``moments/`` namespace.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import FormatError
from .npmodel import NPConfig
from .optim import OptimizerState

MAGIC = b"NPC1"
VERSION = 1


def _pack_entries(entries):
    parts = [struct.pack("<I", len(entries))]
    for name, arr in entries:
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def _unpack_entries(buf, off):
    try:
        (count,) = struct.unpack_from("<I", buf, off)
        off += 4
        out = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = bytes(buf[off:off + n]).decode("utf-8")
            off += n
            (rank,) = struct.unpack_from("<B", buf, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", buf, off)
            off += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            if off + 8 * size > len(buf):
                raise FormatError(f"entry {name!r} runs past the end of the file")
            out[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(dims).copy()
            off += 8 * size
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint: {exc}") from exc
    return out, off


def save_checkpoint(path, params, cfg, opt_state=None):
    entries = [(f"meta/{k}", float(v)) for k, v in cfg.to_dict().items()]
    entries += [(name, t.data) for name, t in sorted(params.items())]
    blob = MAGIC + struct.pack("<I", VERSION) + _pack_entries(entries)
    if opt_state is not None:
        mom = [("moments/step", float(opt_state.step))]
        for key in ("base_lr", "warmup_epochs", "decay_epoch", "decayed_lr"):
            mom.append((f"moments/{key}", float(getattr(opt_state, key))))
        for name in sorted(opt_state.m):
            mom.append((f"moments/m/{name}", opt_state.m[name]))
            mom.append((f"moments/v/{name}", opt_state.v[name]))
        blob += _pack_entries(mom)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    return path


def load_checkpoint(path):
    """Return ``(params, cfg, opt_state_or_None)``."""
    buf = Path(path).read_bytes()
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise FormatError(f"{path}: not an NPC1 checkpoint")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    entries, off = _unpack_entries(buf, 8)
    meta = {k[5:]: v for k, v in entries.items() if k.startswith("meta/")}
    cfg_fields = NPConfig().to_dict()
    cfg = NPConfig.from_dict({k: type(cfg_fields[k])(meta[k].item()) for k in meta if k in cfg_fields})
    params = {k: Tensor(v, requires_grad=True, name=k) for k, v in entries.items()
              if not k.startswith("meta/")}
    opt = None
    if off < len(buf):
        mom, off = _unpack_entries(buf, off)
        opt = OptimizerState(
            base_lr=float(mom["moments/base_lr"]), warmup_epochs=int(mom["moments/warmup_epochs"]),
            decay_epoch=int(mom["moments/decay_epoch"]), decayed_lr=float(mom["moments/decayed_lr"]),
            step=int(mom["moments/step"]))
        for k, v in mom.items():
            if k.startswith("moments/m/"):
                opt.m[k[10:]] = v
            elif k.startswith("moments/v/"):
                opt.v[k[10:]] = v
    if off != len(buf):
        raise FormatError(f"{path}: {len(buf) - off} trailing bytes")
    return params, cfg, opt
