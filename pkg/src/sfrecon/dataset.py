"""Dataset generation and the ``SFD1`` binary container.

Layout (little-endian, no padding)::

    b"SFD1" | version u32 | family u8 | field_count u32 | nx u16 | ny u16 | freq_count u16
    per field: seed u64 | lx f64 | ly f64 |
               freq_count x (freq f64 | nx*ny complex values as interleaved f64 re/im)
"""
from __future__ import annotations

import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import fields as fs
from .errors import FormatError, InvalidInputError

MAGIC = b"SFD1"
VERSION = 1
_HEADER = struct.Struct("<4sIBIHHH")
_FIELD_HEAD = struct.Struct("<Qdd")


@dataclass
class DatasetConfig:
    family: str = "diffuse"
    count: int = 10
    freqs: list = dc_field(default_factory=lambda: list(fs.DEFAULT_FREQS))
    seed: int = 0
    nx: int = 32
    ny: int = 32
    # extent of the reconstruction region for the free-field families
    region: float = 2.0
    t60: float = 0.4
    max_order: int = 3
    max_eig_hz: float = 600.0
    area_range: tuple = (12.0, 20.0)
    aspect_range: tuple = (0.6, 1.67)

    def __post_init__(self):
        self.family = fs.Family.parse(self.family).label
        self.freqs = [float(f) for f in self.freqs]
        self.area_range = tuple(self.area_range)
        self.aspect_range = tuple(self.aspect_range)
        if self.count < 1:
            raise InvalidInputError("dataset needs at least one field")
        if not self.freqs or min(self.freqs) <= 0:
            raise InvalidInputError("frequencies must be positive and non-empty")
        if len(self.freqs) > 0xFFFF:
            raise InvalidInputError("too many frequencies for the SFD1 header")

    def to_dict(self):
        d = asdict(self)
        d["area_range"] = list(self.area_range)
        d["aspect_range"] = list(self.aspect_range)
        return d


@dataclass
class Dataset:
    family: fs.Family
    seeds: np.ndarray     # (F,) uint64
    extents: np.ndarray   # (F, 2) lx, ly
    freqs: np.ndarray     # (F, nf)
    values: np.ndarray    # (F, nf, nx, ny) complex
    version: int = VERSION

    @property
    def count(self):
        return len(self.seeds)

    @property
    def nx(self):
        return self.values.shape[2]

    @property
    def ny(self):
        return self.values.shape[3]

    def grid(self, i):
        lx, ly = self.extents[i]
        return fs.Grid(self.nx, self.ny, float(lx), float(ly))

    def field(self, i, j):
        return fs.Field(self.grid(i), float(self.freqs[i, j]), self.values[i, j],
                        self.family, int(self.seeds[i]))

    def freq_index(self, i, freq_hz):
        hits = np.flatnonzero(np.isclose(self.freqs[i], freq_hz))
        if len(hits) == 0:
            raise InvalidInputError(f"field {i} has no frequency {freq_hz}")
        return int(hits[0])


def field_seed(root_seed, index):
    """Per-field seed; independent of generation order."""
    ss = np.random.SeedSequence([int(root_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def generate_field_block(config, index):
    """All frequencies of field ``index``: ``(seed, lx, ly, values[nf, nx, ny])``."""
    fam = fs.Family.parse(config.family)
    seed = field_seed(config.seed, index)
    out = np.empty((len(config.freqs), config.nx, config.ny), dtype=complex)
    if fam in (fs.Family.DIFFUSE, fs.Family.NEARFIELD):
        grid = fs.Grid(config.nx, config.ny, config.region, config.region)
        for j, f in enumerate(config.freqs):
            if fam is fs.Family.DIFFUSE:
                fld = fs.gen_diffuse(seed, f, grid)
            else:
                fld = fs.gen_nearfield(fs.random_nearfield_scene(seed, f, grid), f, grid, seed)
            out[j] = fld.values
    else:
        room = fs.random_room(seed, config.t60, config.area_range, config.aspect_range)
        grid = fs.Grid(config.nx, config.ny, room.lx, room.ly)
        for j, f in enumerate(config.freqs):
            if fam is fs.Family.ISM:
                fld = fs.gen_ism_rtf(room, f, grid, config.max_order, seed=seed)
            else:
                fld = fs.gen_mt_rtf(room, f, grid, config.max_eig_hz, seed=seed)
            out[j] = fld.values
    return seed, grid.lx, grid.ly, out


def _block_bytes(config, block):
    seed, lx, ly, values = block
    parts = [_FIELD_HEAD.pack(seed, lx, ly)]
    for f, v in zip(config.freqs, values):
        parts.append(struct.pack("<d", f))
        parts.append(np.ascontiguousarray(v.ravel(), dtype="<c16").tobytes())
    return b"".join(parts)


def _header_bytes(family, count, nx, ny, nf):
    return _HEADER.pack(MAGIC, VERSION, int(family), count, nx, ny, nf)


def _work(args):
    config, index = args
    return _block_bytes(config, generate_field_block(config, index))


def worker_count():
    """Worker cap from ``SF_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("SF_THREADS", "1")))
    except ValueError:
        return 1


def gen_dataset(config, out_path, workers=None):
    """Generate ``config.count`` fields and write them as an SFD1 file.

    Every field is generated from its own derived seed and written at a
    fixed offset, so the file does not depend on ``workers``.
    """
    workers = worker_count() if workers is None else workers
    out_path = Path(out_path)
    fam = fs.Family.parse(config.family)
    nf = len(config.freqs)
    block_size = _FIELD_HEAD.size + nf * (8 + 16 * config.nx * config.ny)
    header = _header_bytes(fam, config.count, config.nx, config.ny, nf)
    try:
        with open(out_path, "wb") as fh:
            fh.write(header)
            if workers > 1:
                with ProcessPoolExecutor(workers) as pool:
                    jobs = ((config, i) for i in range(config.count))
                    for i, blob in enumerate(pool.map(_work, jobs, chunksize=4)):
                        fh.seek(len(header) + i * block_size)
                        fh.write(blob)
            else:
                for i in range(config.count):
                    fh.write(_work((config, i)))
    except OSError as exc:
        raise OSError(f"could not write dataset {out_path}: {exc}") from exc
    return out_path


def write_dataset(dataset, out_path):
    """Serialize an in-memory Dataset (all fields must share the frequency count)."""
    out_path = Path(out_path)
    F, nf, nx, ny = dataset.values.shape
    with open(out_path, "wb") as fh:
        fh.write(_header_bytes(dataset.family, F, nx, ny, nf))
        for i in range(F):
            fh.write(_FIELD_HEAD.pack(int(dataset.seeds[i]), *map(float, dataset.extents[i])))
            for j in range(nf):
                fh.write(struct.pack("<d", float(dataset.freqs[i, j])))
                fh.write(np.ascontiguousarray(dataset.values[i, j].ravel(), dtype="<c16").tobytes())
    return out_path


def read_dataset(path):
    """Parse an SFD1 file, validating magic, version and length."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"could not read dataset {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, family, count, nx, ny, nf = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    npts = nx * ny
    rec = np.dtype([("freq", "<f8"), ("values", "<c16", (npts,))])
    block = np.dtype([("seed", "<u8"), ("lx", "<f8"), ("ly", "<f8"), ("data", rec, (nf,))])
    expected = _HEADER.size + count * block.itemsize
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    arr = np.frombuffer(raw, dtype=block, count=count, offset=_HEADER.size)
    values = arr["data"]["values"].astype(complex).reshape(count, nf, nx, ny)
    return Dataset(
        family=fs.Family(family),
        seeds=arr["seed"].astype(np.uint64),
        extents=np.stack([arr["lx"], arr["ly"]], axis=1).astype(float),
        freqs=arr["data"]["freq"].astype(float),
        values=values,
        version=version,
    )
