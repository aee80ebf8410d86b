"""Sound-field simulators on a regular 2-D grid.

Four families are supported: diffuse fields (random-phase plane waves),
near fields of point sources, image-source room transfer functions and
modal-theory room transfer functions.  All generators are pure functions of
their arguments; randomness only enters through an explicit integer seed.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DegenerateFieldError, InvalidInputError

SPEED_OF_SOUND = 343.0
#: Nominal room height used by the Sabine estimate.  It cancels in V/S.
NOMINAL_HEIGHT = 3.0
SABINE_CONSTANT = 0.1611
#: 30, 40, ..., 500 Hz
DEFAULT_FREQS = tuple(float(f) for f in range(30, 501, 10))


class Family(enum.IntEnum):
    DIFFUSE = 0
    NEARFIELD = 1
    ISM = 2
    MT = 3

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        aliases = {"diffuse": cls.DIFFUSE, "nearfield": cls.NEARFIELD,
                   "ism": cls.ISM, "mt": cls.MT}
        try:
            return aliases[str(name).lower()]
        except KeyError:
            raise InvalidInputError(f"unknown field family {name!r}") from None

    @property
    def label(self):
        return self.name.lower()


@dataclass(frozen=True)
class Grid:
    """Cell-centred ``nx`` x ``ny`` grid over ``[0, lx] x [0, ly]``.

    Point ``(i, j)`` sits at ``((i + 0.5) lx / nx, (j + 0.5) ly / ny)``.
    Flattened arrays use row-major order with ``i`` (the x index) major.
    """

    nx: int = 32
    ny: int = 32
    lx: float = 2.0
    ly: float = 2.0

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise InvalidInputError(f"grid needs at least one point per axis, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0) or not np.isfinite([self.lx, self.ly]).all():
            raise InvalidInputError(f"grid extent must be positive and finite, got {self.lx}x{self.ly}")

    @property
    def size(self):
        return self.nx * self.ny

    @property
    def x(self):
        return (np.arange(self.nx) + 0.5) * (self.lx / self.nx)

    @property
    def y(self):
        return (np.arange(self.ny) + 0.5) * (self.ly / self.ny)

    @property
    def center(self):
        return np.array([self.lx / 2, self.ly / 2])

    def points(self):
        """All grid points as an ``(nx * ny, 2)`` array in metres."""
        xx, yy = np.meshgrid(self.x, self.y, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)

    def normalized_points(self):
        """Grid points rescaled to the unit square."""
        return self.points() / np.array([self.lx, self.ly])


@dataclass
class Field:
    grid: Grid
    freq_hz: float
    values: np.ndarray  # complex, shape (nx, ny)
    family: Family
    seed: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).reshape(self.grid.nx, self.grid.ny)

    @property
    def magnitudes(self):
        return np.abs(self.values)


@dataclass(frozen=True)
class RoomSpec:
    lx: float
    ly: float
    t60: float
    source: tuple

    def __post_init__(self):
        if not (self.lx > 0 and self.ly > 0):
            raise InvalidInputError("room dimensions must be positive")
        if not self.t60 > 0:
            raise InvalidInputError(f"t60 must be positive, got {self.t60}")
        x0, y0 = self.source
        if not (0 < x0 < self.lx and 0 < y0 < self.ly):
            raise InvalidInputError(f"source {self.source} is not strictly inside the {self.lx}x{self.ly} room")

    @property
    def area(self):
        return self.lx * self.ly


@dataclass(frozen=True)
class NearFieldScene:
    positions: np.ndarray  # (j, 2) metres
    wavelength: float

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        object.__setattr__(self, "positions", pos)
        if pos.shape[1] != 2 or len(pos) < 1:
            raise InvalidInputError("scene needs at least one 2-D source position")
        if not self.wavelength > 0:
            raise InvalidInputError("wavelength must be positive")

    @property
    def num_sources(self):
        return len(self.positions)


def wavenumber(freq_hz, c=SPEED_OF_SOUND):
    if not freq_hz > 0:
        raise InvalidInputError(f"frequency must be positive, got {freq_hz}")
    return 2 * np.pi * freq_hz / c


# ---------------------------------------------------------------- diffuse

def _phasor_ramp(start, step, n):
    """``exp(j (start + i step))`` as an ``(n, len(start))`` array, row ``i``.

    Filled by doubling blocks, so only two complex exponentials are taken
    per wave; agrees with direct evaluation to a few ulp times ``log2 n``.
    """
    out = np.empty((n, len(start)), dtype=complex)
    out[0] = np.exp(1j * start)
    w = np.exp(1j * step)
    filled = 1
    while filled < n:
        take = min(filled, n - filled)
        np.multiply(out[:take], w, out=out[filled:filled + take])
        w = w * w
        filled += take
    return out


def gen_diffuse(seed, freq_hz, grid, *, num_waves=None, normalize=True):
    """Superposition of unit plane waves with random phase and direction.

    The wave set (count, directions, phases) depends on ``seed`` only, so one
    seed describes the same physical field at every frequency.

    Parameters
    ----------
    seed : int
    freq_hz : float
    grid : Grid
    num_waves : int, optional
        Overrides the random wave count drawn from ``{1001, ..., 2999}``.
    normalize : bool
        Scale so that the mean magnitude over the grid is 1 Pa.
    """
    k = wavenumber(freq_hz)
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1001, 3000))
    if num_waves is not None:
        m = int(num_waves)
    theta = rng.uniform(0.0, 2 * np.pi, m)
    phase = rng.uniform(0.0, 2 * np.pi, m)
    # separable: exp(-j k (ux x + uy y)) = exp(-j k ux x) exp(-j k uy y)
    kx = k * np.cos(theta)
    ky = k * np.sin(theta)
    dx, dy = grid.lx / grid.nx, grid.ly / grid.ny
    ex = _phasor_ramp(phase - 0.5 * kx * dx, -kx * dx, grid.nx)
    ey = _phasor_ramp(-0.5 * ky * dy, -ky * dy, grid.ny)
    values = ex @ ey.T
    if normalize:
        values = values / np.mean(np.abs(values))
    return Field(grid, float(freq_hz), values, Family.DIFFUSE, seed)


# -------------------------------------------------------------- near field

def _distances(points, source):
    return np.hypot(points[:, 0] - source[0], points[:, 1] - source[1])


def point_sources(positions, freq_hz, grid, weights=None):
    """Free-field sum of ``e^{-jkd} / (4 pi d)`` over ``positions``."""
    k = wavenumber(freq_hz)
    pts = grid.points()
    positions = np.atleast_2d(positions)
    if weights is None:
        weights = np.ones(len(positions))
    total = np.zeros(len(pts), dtype=complex)
    for s, (src, w) in enumerate(zip(positions, weights)):
        d = _distances(pts, src)
        if np.any(d == 0):
            bad = int(np.flatnonzero(d == 0)[0])
            raise InvalidInputError(f"source {s} coincides with grid point {bad}")
        total += w * np.exp(-1j * k * d) / (4 * np.pi * d)
    return total.reshape(grid.nx, grid.ny)


def gen_nearfield(scene, freq_hz, grid, seed=0):
    values = point_sources(scene.positions, freq_hz, grid)
    return Field(grid, float(freq_hz), values, Family.NEARFIELD, seed)


def random_nearfield_scene(seed, freq_hz, grid):
    """Between 1 and 6 sources at radial distance U(lambda, 3 lambda) from the grid centre.

    Angles and distance multipliers depend on ``seed`` only; distances scale
    with the wavelength of ``freq_hz``.
    """
    lam = SPEED_OF_SOUND / freq_hz
    rng = np.random.default_rng(seed)
    j = int(rng.integers(1, 7))
    angle = rng.uniform(0, 2 * np.pi, j)
    mult = rng.uniform(1.0, 3.0, j)
    pos = grid.center + (mult * lam)[:, None] * np.stack([np.cos(angle), np.sin(angle)], axis=1)
    return NearFieldScene(pos, lam)


# --------------------------------------------------------- image sources

def reflection_coefficient(room, height=NOMINAL_HEIGHT):
    """Uniform wall reflection coefficient from Sabine's formula."""
    volume = room.lx * room.ly * height
    surface = 2 * (room.lx + room.ly) * height
    alpha = min(SABINE_CONSTANT * volume / (surface * room.t60), 1.0)
    return float(np.sqrt(1.0 - alpha))


def image_sources(room, max_order):
    """Image positions and reflection counts with total count <= ``max_order``.

    Returns ``(positions, orders)`` sorted by order, then by lattice index.
    """
    if max_order < 0:
        raise InvalidInputError("max_order must be non-negative")
    x0, y0 = room.source
    pos, orders = [], []
    n = np.arange(-max_order, max_order + 1)
    for qx in (0, 1):
        cx = np.abs(n - qx) + np.abs(n)
        xs = (1 - 2 * qx) * x0 + 2 * n * room.lx
        for qy in (0, 1):
            cy = np.abs(n - qy) + np.abs(n)
            ys = (1 - 2 * qy) * y0 + 2 * n * room.ly
            total = cx[:, None] + cy[None, :]
            ix, iy = np.nonzero(total <= max_order)
            pos.append(np.stack([xs[ix], ys[iy]], axis=1))
            orders.append(total[ix, iy])
    pos = np.concatenate(pos)
    orders = np.concatenate(orders)
    idx = np.argsort(orders, kind="stable")
    return pos[idx], orders[idx]


def gen_ism_rtf(room, freq_hz, grid, max_order=3, *, beta=None, seed=0):
    """Frequency-domain image-source transfer function at every grid point.

    ``beta`` overrides the Sabine reflection coefficient.
    """
    if beta is None:
        beta = reflection_coefficient(room)
    pos, orders = image_sources(room, max_order)
    values = point_sources(pos, freq_hz, grid, weights=float(beta) ** orders)
    return Field(grid, float(freq_hz), values, Family.ISM, seed)


# ------------------------------------------------------------- modal theory

def room_modes(room, max_eig_hz, c=SPEED_OF_SOUND):
    """Rigid-wall 2-D modes ``(n_x, n_y, f_N)`` with ``f_N <= max_eig_hz``."""
    nxm = int(np.floor(2 * max_eig_hz * room.lx / c))
    nym = int(np.floor(2 * max_eig_hz * room.ly / c))
    nx, ny = np.meshgrid(np.arange(nxm + 1), np.arange(nym + 1), indexing="ij")
    f = 0.5 * c * np.sqrt((nx / room.lx) ** 2 + (ny / room.ly) ** 2)
    keep = f <= max_eig_hz
    return nx[keep], ny[keep], f[keep]


def mode_shape(room, nx, ny, points):
    """``sqrt(eps_nx eps_ny) cos(nx pi x / lx) cos(ny pi y / ly)``, shape (modes, points)."""
    nx = np.asarray(nx)[:, None]
    ny = np.asarray(ny)[:, None]
    eps = np.where(nx > 0, 2.0, 1.0) * np.where(ny > 0, 2.0, 1.0)
    points = np.atleast_2d(points)
    return (np.sqrt(eps) * np.cos(nx * np.pi * points[None, :, 0] / room.lx)
            * np.cos(ny * np.pi * points[None, :, 1] / room.ly))


def modal_time_constant(t60):
    """Amplitude decay constant for a 60 dB energy decay in ``t60`` seconds."""
    return t60 / (3 * np.log(10))


def modal_response(room, freq_hz, receivers, source, nx, ny, f_n, c=SPEED_OF_SOUND):
    """Modal sum between ``source`` and each receiver for the given modes.

    The damping term is written as ``j omega / (tau c^2)`` so that every
    term of the denominator is a squared wavenumber.
    """
    omega = 2 * np.pi * freq_hz
    tau = modal_time_constant(room.t60)
    psi_r = mode_shape(room, nx, ny, receivers)
    psi_0 = mode_shape(room, nx, ny, np.asarray(source, dtype=float)[None, :])[:, 0]
    denom = (omega / c) ** 2 - (2 * np.pi * np.asarray(f_n) / c) ** 2 - 1j * omega / (tau * c * c)
    return -(psi_0 / denom) @ psi_r / room.area


def gen_mt_rtf(room, freq_hz, grid, max_eig_hz=600.0, *, modes=None, seed=0):
    """Modal-theory transfer function over the grid.

    ``modes`` optionally replaces the mode set with explicit ``(nx, ny)``
    index arrays.
    """
    wavenumber(freq_hz)
    if max_eig_hz < freq_hz:
        raise InvalidInputError(f"max_eig_hz={max_eig_hz} is below the frequency {freq_hz}")
    if modes is None:
        nx, ny, f_n = room_modes(room, max_eig_hz)
    else:
        nx, ny = (np.atleast_1d(m) for m in modes)
        f_n = 0.5 * SPEED_OF_SOUND * np.hypot(nx / room.lx, ny / room.ly)
    if len(f_n) == 0:
        raise InvalidInputError("no room mode below max_eig_hz")
    values = modal_response(room, freq_hz, grid.points(), room.source, nx, ny, f_n)
    return Field(grid, float(freq_hz), values.reshape(grid.nx, grid.ny), Family.MT, seed)


def random_room(seed, t60=0.4, area_range=(12.0, 20.0), aspect_range=(0.6, 1.67)):
    """Room with floor area and aspect ratio drawn uniformly; source uniform inside."""
    rng = np.random.default_rng(seed)
    area = rng.uniform(*area_range)
    aspect = rng.uniform(*aspect_range)
    lx = float(np.sqrt(area * aspect))
    ly = float(area / lx)
    source = (float(rng.uniform(0.0, lx)), float(rng.uniform(0.0, ly)))
    return RoomSpec(lx, ly, t60, source)


# ---------------------------------------------------------- standardization

@dataclass
class StandardizedField:
    magnitudes: np.ndarray  # flat, nx * ny
    mean: float
    std: float
    source: Field = dc_field(repr=False)

    @property
    def grid(self):
        return self.source.grid

    def destandardize(self, values=None):
        values = self.magnitudes if values is None else np.asarray(values)
        return values * self.std + self.mean


def standardize(field):
    """Zero-mean, unit-std (population) magnitudes of ``field``.

    Raises DegenerateFieldError when the magnitude std is below
    ``1e-12 * max(1, |mean|)``.
    """
    mags = np.abs(np.asarray(field.values)).ravel()
    mean = float(mags.mean())
    std = float(mags.std())
    if not std >= 1e-12 * max(1.0, abs(mean)):
        raise DegenerateFieldError(f"field magnitudes are constant (std={std:.3g})")
    return StandardizedField((mags - mean) / std, mean, std, field)


def destandardize(sfield, values=None):
    return sfield.destandardize(values)


# -------------------------------------------------------------- observations

@dataclass
class ObservationSet:
    indices: np.ndarray    # flat grid indices
    locations: np.ndarray  # (n, 2) metres
    values: np.ndarray     # standardized magnitudes, or complex pressures
    seed: int = 0

    @property
    def count(self):
        return len(self.indices)

    def with_values(self, values):
        return ObservationSet(self.indices, self.locations, np.asarray(values), self.seed)


def sample_observations(field, n, seed):
    """Draw ``n`` distinct grid points uniformly without replacement."""
    grid = field.grid
    if not 1 <= n <= grid.size:
        raise InvalidInputError(f"cannot draw {n} observations from a {grid.size}-point grid")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(grid.size, size=n, replace=False))
    mags = field.magnitudes if isinstance(field, StandardizedField) else np.abs(field.values).ravel()
    return ObservationSet(idx, grid.points()[idx], np.asarray(mags)[idx], seed)
