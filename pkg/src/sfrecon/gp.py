"""Gaussian-process reconstruction of complex sound pressure.

Seven stationary kernels are provided.  Every kernel depends on a location
pair only through ``delta = r - r'``:

=================  ============================================================
``rbf-iso``        ``alpha^2 exp(-|delta|^2 / (2 rho^2))``
``rbf-aniso``      ``alpha^2 exp(-1/2 sum_l (u_l . delta)^2 / rho_l^2)``
``rbf-per``        ``alpha^2 exp(-sum_l sin^2(k |u_l . delta| / 2) / (2 rho_l^2))``
``pw-multi``       ``sigma_w^2 sum_l exp(-j k u_l . delta)``
``pw-sparse``      ``sum_l sigma_l^2 exp(-j k u_l . delta)``
``hier``           as ``pw-sparse`` with ``sigma_l ~ InvGamma(1, 10^-b_log)``
``bessel``         ``sigma_w^2 J0(k |delta|)``
=================  ============================================================

Hyperparameters are fitted by maximum a posteriori search over their
logarithms with a derivative-free simplex method and prior-drawn restarts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
from scipy import linalg, optimize, special

from .errors import InvalidInputError, OptimizationError, SingularSystemError
from .fields import wavenumber

FAMILIES = ("rbf-iso", "rbf-aniso", "rbf-per", "pw-multi", "pw-sparse", "hier", "bessel")
NUM_DIRECTIONS = 128
JITTER = 1e-10
JITTER_DOUBLINGS = 6


def unit_directions(n):
    """``n`` unit vectors uniformly spaced on the circle, shape ``(n, 2)``."""
    if n < 1:
        raise InvalidInputError("need at least one direction")
    phi = 2 * np.pi * np.arange(n) / n
    return np.stack([np.cos(phi), np.sin(phi)], axis=1)


def _orthonormal_pair(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


# ----------------------------------------------------------------- kernels

def _positive(name, *values):
    for v in values:
        arr = np.asarray(v, dtype=float)
        if arr.size == 0 or not np.all(arr > 0) or not np.all(np.isfinite(arr)):
            raise InvalidInputError(f"{name} must be positive and finite, got {v}")


def _unit_rows(u):
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != 2 or len(u) < 1:
        raise InvalidInputError("directions must be an (L, 2) array with L >= 1")
    if not np.allclose(np.hypot(u[:, 0], u[:, 1]), 1.0, atol=1e-12):
        raise InvalidInputError("directions must be unit vectors")
    return u


@dataclass(frozen=True)
class RbfIso:
    alpha: float
    rho: float
    family = "rbf-iso"

    def __post_init__(self):
        _positive("alpha and rho", self.alpha, self.rho)

    def of_delta(self, dx, dy):
        return self.alpha ** 2 * np.exp(-(dx * dx + dy * dy) / (2 * self.rho ** 2))


@dataclass(frozen=True)
class RbfAniso:
    alpha: float
    rhos: np.ndarray
    directions: np.ndarray
    family = "rbf-aniso"

    def __post_init__(self):
        object.__setattr__(self, "rhos", np.atleast_1d(np.asarray(self.rhos, dtype=float)))
        object.__setattr__(self, "directions", _unit_rows(self.directions))
        _positive("alpha and rho_l", self.alpha, self.rhos)
        if len(self.rhos) != len(self.directions):
            raise InvalidInputError("one length scale per direction is required")

    def of_delta(self, dx, dy):
        expo = np.zeros(np.shape(dx))
        for (ux, uy), rho in zip(self.directions, self.rhos):
            p = ux * dx + uy * dy
            expo += p * p / rho ** 2
        return self.alpha ** 2 * np.exp(-0.5 * expo)


@dataclass(frozen=True)
class RbfPeriodic:
    alpha: float
    rhos: np.ndarray
    directions: np.ndarray
    k: float
    family = "rbf-per"

    def __post_init__(self):
        object.__setattr__(self, "rhos", np.atleast_1d(np.asarray(self.rhos, dtype=float)))
        object.__setattr__(self, "directions", _unit_rows(self.directions))
        _positive("alpha, rho_l and k", self.alpha, self.rhos, self.k)
        if len(self.rhos) != len(self.directions):
            raise InvalidInputError("one length scale per direction is required")

    def of_delta(self, dx, dy):
        expo = np.zeros(np.shape(dx))
        for (ux, uy), rho in zip(self.directions, self.rhos):
            s = np.sin(0.5 * self.k * np.abs(ux * dx + uy * dy))
            expo += s * s / (2 * rho ** 2)
        return self.alpha ** 2 * np.exp(-expo)


def _plane_wave_sum(weights, directions, k, dx, dy):
    dx, dy = np.asarray(dx, dtype=float), np.asarray(dy, dtype=float)
    out = np.zeros(dx.shape, dtype=complex)
    for w, (ux, uy) in zip(weights, directions):
        out += w * np.exp(-1j * k * (ux * dx + uy * dy))
    return out


@dataclass(frozen=True)
class PlaneWaveMulti:
    sigma_w: float
    directions: np.ndarray
    k: float
    family = "pw-multi"

    def __post_init__(self):
        object.__setattr__(self, "directions", _unit_rows(self.directions))
        _positive("sigma_w and k", self.sigma_w, self.k)

    @property
    def weights(self):
        return np.full(len(self.directions), self.sigma_w ** 2)

    def of_delta(self, dx, dy):
        return _plane_wave_sum(self.weights, self.directions, self.k, dx, dy)


@dataclass(frozen=True)
class PlaneWaveSparse:
    sigmas: np.ndarray
    directions: np.ndarray
    k: float
    a: float = 1.0
    b: float = 0.01
    family = "pw-sparse"

    def __post_init__(self):
        object.__setattr__(self, "sigmas", np.atleast_1d(np.asarray(self.sigmas, dtype=float)))
        object.__setattr__(self, "directions", _unit_rows(self.directions))
        _positive("sigma_l, k, a and b", self.sigmas, self.k, self.a, self.b)
        if len(self.sigmas) != len(self.directions):
            raise InvalidInputError("one weight deviation per direction is required")

    @property
    def weights(self):
        return self.sigmas ** 2

    def of_delta(self, dx, dy):
        return _plane_wave_sum(self.weights, self.directions, self.k, dx, dy)


@dataclass(frozen=True)
class Hierarchical:
    """Sparse plane-wave kernel whose inverse-gamma scale is itself uncertain.

    ``sigma_l ~ InvGamma(1, b)`` with ``b = 10^-b_log`` and
    ``b_log ~ N(mu_b, sigma_b)``.
    """

    sigmas: np.ndarray
    b_log: float
    directions: np.ndarray
    k: float
    mu_b: float = 2.0
    sigma_b: float = 1.0
    family = "hier"

    def __post_init__(self):
        object.__setattr__(self, "sigmas", np.atleast_1d(np.asarray(self.sigmas, dtype=float)))
        object.__setattr__(self, "directions", _unit_rows(self.directions))
        _positive("sigma_l, k and sigma_b", self.sigmas, self.k, self.sigma_b)
        if not np.isfinite(self.b_log):
            raise InvalidInputError("b_log must be finite")
        if len(self.sigmas) != len(self.directions):
            raise InvalidInputError("one weight deviation per direction is required")

    @property
    def weights(self):
        return self.sigmas ** 2

    def of_delta(self, dx, dy):
        return _plane_wave_sum(self.weights, self.directions, self.k, dx, dy)


@dataclass(frozen=True)
class Bessel:
    sigma_w: float
    k: float
    family = "bessel"

    def __post_init__(self):
        _positive("sigma_w and k", self.sigma_w, self.k)

    def of_delta(self, dx, dy):
        return self.sigma_w ** 2 * special.j0(self.k * np.hypot(dx, dy))


KernelSpec = RbfIso | RbfAniso | RbfPeriodic | PlaneWaveMulti | PlaneWaveSparse | Hierarchical | Bessel


def kernel_eval(spec, r, r_prime):
    """Kernel value for one location pair, as a complex scalar."""
    r, r_prime = np.asarray(r, dtype=float), np.asarray(r_prime, dtype=float)
    d = r - r_prime
    return complex(spec.of_delta(d[0], d[1]))


def cross_gram(spec, locs_a, locs_b):
    """``K[i, j] = kernel(locs_a[i], locs_b[j])``."""
    a = np.atleast_2d(np.asarray(locs_a, dtype=float))
    b = np.atleast_2d(np.asarray(locs_b, dtype=float))
    dx = a[:, None, 0] - b[None, :, 0]
    dy = a[:, None, 1] - b[None, :, 1]
    return np.asarray(spec.of_delta(dx, dy), dtype=complex)


def gram(spec, locs):
    locs = np.atleast_2d(np.asarray(locs, dtype=float))
    if len(locs) == 0:
        raise InvalidInputError("gram needs at least one location")
    return cross_gram(spec, locs, locs)


def base_jitter(K):
    """Diagonal jitter ``1e-10 * trace(K) / N`` applied before every factorization."""
    n = K.shape[0]
    return JITTER * max(float(np.trace(K).real) / n, np.finfo(float).tiny)


def _factor(C, kernel_trace=None):
    """Lower Cholesky factor of ``C`` with escalating diagonal jitter.

    The jitter is sized from ``kernel_trace`` (the trace of the noise-free
    Gram matrix) when given, else from ``trace(C)``.
    """
    n = C.shape[0]
    tr = float(np.trace(C).real) if kernel_trace is None else float(kernel_trace)
    base = JITTER * max(tr / n, np.finfo(float).tiny)
    diag = np.arange(n)
    jitter = base
    for _ in range(JITTER_DOUBLINGS + 1):
        Cj = C.copy()
        Cj[diag, diag] += jitter
        try:
            return np.linalg.cholesky(Cj)
        except np.linalg.LinAlgError:
            jitter *= 2
    raise SingularSystemError(f"Gram system of size {n} is not positive definite even with jitter {jitter / 2:.3g}",
                              condition=float(np.linalg.cond(C)))


# ------------------------------------------------------------------ priors

@dataclass(frozen=True)
class HalfNormal:
    scale: float
    log_scale = True

    def logpdf(self, x):
        return 0.5 * math.log(2 / math.pi) - math.log(self.scale) - 0.5 * (np.asarray(x) / self.scale) ** 2

    def sample(self, rng, size=None):
        return np.abs(rng.normal(0.0, self.scale, size))

    @property
    def mode(self):
        # mode of the density over log x
        return self.scale


@dataclass(frozen=True)
class InvGamma:
    a: float
    b: float
    log_scale = True

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * math.log(self.b) - math.lgamma(self.a) - (self.a + 1) * np.log(x) - self.b / x

    def sample(self, rng, size=None):
        return self.b / rng.gamma(self.a, 1.0, size)

    @property
    def mode(self):
        return self.b / self.a


@dataclass(frozen=True)
class LogNormal:
    median: float
    sigma: float
    log_scale = True

    def logpdf(self, x):
        lx = np.log(np.asarray(x, dtype=float))
        z = (lx - math.log(self.median)) / self.sigma
        return -0.5 * z * z - lx - math.log(self.sigma * math.sqrt(2 * math.pi))

    def sample(self, rng, size=None):
        return self.median * np.exp(self.sigma * rng.standard_normal(size))

    @property
    def mode(self):
        return self.median


@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float
    log_scale = False

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma * math.sqrt(2 * math.pi))

    def sample(self, rng, size=None):
        return rng.normal(self.mu, self.sigma, size)

    @property
    def mode(self):
        return self.mu


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float
    log_scale = False

    def logpdf(self, x):
        return np.full(np.shape(x), -math.log(self.high - self.low))

    def sample(self, rng, size=None):
        return rng.uniform(self.low, self.high, size)

    @property
    def mode(self):
        return 0.5 * (self.low + self.high)


@dataclass(frozen=True)
class Pinned:
    """Zero-width prior: the parameter is held at ``value``."""

    value: float
    log_scale = False

    @property
    def mode(self):
        return self.value


def inverse_gamma_logpdf(x, a, b):
    """``log[b^a / Gamma(a) x^-(a+1) exp(-b / x)]``."""
    if not (x > 0 and a > 0 and b > 0):
        raise InvalidInputError(f"inverse-gamma density needs x, a, b > 0, got {x}, {a}, {b}")
    return a * math.log(b) - math.lgamma(a) - (a + 1) * math.log(x) - b / x


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameter priors.  ``sigma_w_multi=None`` means ``HalfNormal(1/sqrt(L))``."""

    alpha: object = HalfNormal(1.0)
    rho: object = InvGamma(5.0, 5.0)
    angle: object = Uniform(0.0, math.pi)
    noise: object = LogNormal(1e-2, 1.0)
    sigma_w: object = HalfNormal(1.0)
    sigma_w_multi: object = None
    sparse: object = InvGamma(1.0, 0.01)
    b_log: object = Normal(2.0, 1.0)

    def pinned(self, num_directions=NUM_DIRECTIONS):
        """Every prior collapsed onto its mode."""
        resolved = replace(self, sigma_w_multi=self.multi_prior(num_directions))
        return PriorConfig(**{f: Pinned(getattr(resolved, f).mode) for f in self.__dataclass_fields__})

    def multi_prior(self, num_directions):
        return self.sigma_w_multi or HalfNormal(1.0 / math.sqrt(num_directions))


# ----------------------------------------------------------------- fitting

@dataclass
class GpFit:
    """A fitted kernel, its noise variance and the achieved log posterior.

    ``scale`` is the factor the observations were divided by before fitting;
    predictions are multiplied back by it.
    """

    spec: object
    noise_variance: float
    log_map: float = float("nan")
    scale: float = 1.0
    trace: list = dc_field(default_factory=list)

    def __post_init__(self):
        if not self.noise_variance >= 0:
            raise InvalidInputError("noise variance must be non-negative")


def posterior_mean(obs, targets, fit):
    """Posterior mean at ``targets`` given complex observations.

    Returns ``(values, magnitudes)`` where ``magnitudes = |values|``.
    """
    locs = np.atleast_2d(np.asarray(obs.locations, dtype=float))
    y = np.asarray(obs.values, dtype=complex).ravel()
    if len(y) == 0:
        raise InvalidInputError("posterior_mean needs at least one observation")
    if len(y) != len(locs):
        raise InvalidInputError("observation values and locations disagree in length")
    K = gram(fit.spec, locs)
    C = K + fit.noise_variance * np.eye(len(y))
    L = _factor(C, np.trace(K).real)
    weights = linalg.cho_solve((L, True), y / fit.scale, check_finite=False)
    values = fit.scale * (cross_gram(fit.spec, targets, locs) @ weights)
    return values, np.abs(values)


@dataclass
class _Param:
    name: str
    prior: object
    size: int = 1


def _param_layout(family, priors, num_directions):
    noise = _Param("noise", priors.noise)
    if family == "rbf-iso":
        return [_Param("alpha", priors.alpha), _Param("rho", priors.rho), noise]
    if family in ("rbf-aniso", "rbf-per"):
        return [_Param("alpha", priors.alpha), _Param("rho", priors.rho, 2),
                _Param("angle", priors.angle), noise]
    if family == "pw-multi":
        return [_Param("sigma_w", priors.multi_prior(num_directions)), noise]
    if family == "pw-sparse":
        return [_Param("sigmas", priors.sparse, num_directions), noise]
    if family == "hier":
        # sigma_l's prior depends on b_log, so b_log comes first
        sig = priors.sparse if isinstance(priors.sparse, Pinned) else None
        return [_Param("b_log", priors.b_log), _Param("sigmas", sig, num_directions), noise]
    if family == "bessel":
        return [_Param("sigma_w", priors.sigma_w), noise]
    raise InvalidInputError(f"unknown kernel family {family!r}; choose from {', '.join(FAMILIES)}")


def _hier_prior(b_log):
    return InvGamma(1.0, 10.0 ** (-b_log))


class _Objective:
    """Log posterior of one family on one observation set, over free coordinates.

    Positive parameters are searched in log space and their density includes
    the log-Jacobian, so the objective is the log posterior of the searched
    coordinates.
    """

    def __init__(self, family, locs, y, k, priors, num_directions):
        self.family = family
        self.y = y
        self.n = len(y)
        self.k = k
        self._diag = np.arange(self.n)
        self.layout = _param_layout(family, priors, num_directions)
        self.directions = unit_directions(num_directions)
        dx = locs[:, None, 0] - locs[None, :, 0]
        dy = locs[:, None, 1] - locs[None, :, 1]
        self.dx, self.dy = dx, dy
        if family == "rbf-iso":
            self.d2 = dx * dx + dy * dy
        elif family == "bessel":
            self.j0 = special.j0(k * np.hypot(dx, dy))
        elif family in ("pw-multi", "pw-sparse", "hier"):
            self.phi = np.exp(-1j * k * locs @ self.directions.T)
        # which coordinates are free
        self.slots = []
        for p in self.layout:
            pinned = isinstance(p.prior, Pinned)
            log = p.prior is None or p.prior.log_scale
            self.slots.append((p, pinned, log))
        self.dim = sum(p.size for p, pinned, _ in self.slots if not pinned)

    def unpack(self, theta):
        values, offset = {}, 0
        for p, pinned, log in self.slots:
            if pinned:
                v = np.full(p.size, float(p.prior.value))
            else:
                v = np.asarray(theta[offset:offset + p.size], dtype=float)
                offset += p.size
                if log:
                    v = np.exp(v)
            values[p.name] = v if p.size > 1 else float(v[0])
        return values

    def pack(self, values):
        parts = []
        for p, pinned, log in self.slots:
            if pinned:
                continue
            v = np.atleast_1d(np.asarray(values[p.name], dtype=float))
            parts.append(np.log(v) if log else v)
        return np.concatenate(parts) if parts else np.zeros(0)

    def draw(self, rng):
        values = {}
        for p, pinned, log in self.slots:
            if pinned:
                values[p.name] = float(p.prior.value)
                continue
            prior = p.prior if p.prior is not None else _hier_prior(values["b_log"])
            v = prior.sample(rng, p.size) if p.size > 1 else float(prior.sample(rng))
            if log:
                v = np.maximum(v, 1e-8)
            values[p.name] = v
        return values

    def log_prior(self, values):
        total = 0.0
        for p, pinned, log in self.slots:
            if pinned:
                continue
            prior = p.prior if p.prior is not None else _hier_prior(values["b_log"])
            v = values[p.name]
            if p.size > 1:
                total += float(prior.logpdf(v).sum()) + (float(np.log(v).sum()) if log else 0.0)
            else:
                total += float(prior.logpdf(v)) + (math.log(v) if log else 0.0)
        return total

    def gram(self, values):
        f = self.family
        if f == "rbf-iso":
            return values["alpha"] ** 2 * np.exp(-self.d2 / (2 * values["rho"] ** 2))
        if f in ("rbf-aniso", "rbf-per"):
            u = _orthonormal_pair(values["angle"])
            expo = np.zeros_like(self.dx)
            for (ux, uy), rho in zip(u, values["rho"]):
                p = ux * self.dx + uy * self.dy
                if f == "rbf-aniso":
                    expo += 0.5 * p * p / rho ** 2
                else:
                    s = np.sin(0.5 * self.k * np.abs(p))
                    expo += s * s / (2 * rho ** 2)
            return values["alpha"] ** 2 * np.exp(-expo)
        if f == "bessel":
            return values["sigma_w"] ** 2 * self.j0
        if f == "pw-multi":
            w = np.full(len(self.directions), values["sigma_w"] ** 2)
        else:
            w = np.asarray(values["sigmas"]) ** 2
        return (self.phi * w) @ self.phi.conj().T

    def log_likelihood(self, values):
        C = self.gram(values)
        kernel_trace = np.trace(C).real
        C[self._diag, self._diag] += values["noise"]
        try:
            L = _factor(C, kernel_trace)
        except SingularSystemError:
            return -np.inf
        a = linalg.solve_triangular(L, self.y, lower=True, check_finite=False)
        logdet = 2.0 * np.log(L.diagonal().real).sum()
        return float(-np.vdot(a, a).real - logdet - self.n * math.log(math.pi))

    def __call__(self, theta):
        values = self.unpack(theta)
        with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
            try:
                lp = self.log_prior(values)
            except (ValueError, OverflowError):
                return -np.inf
            if not np.isfinite(lp):
                return -np.inf
            ll = self.log_likelihood(values)
        out = ll + lp
        return out if np.isfinite(out) else -np.inf

    def spec(self, values):
        f, k, u = self.family, self.k, self.directions
        if f == "rbf-iso":
            return RbfIso(values["alpha"], values["rho"])
        if f == "rbf-aniso":
            return RbfAniso(values["alpha"], values["rho"], _orthonormal_pair(values["angle"]))
        if f == "rbf-per":
            return RbfPeriodic(values["alpha"], values["rho"], _orthonormal_pair(values["angle"]), k)
        if f == "pw-multi":
            return PlaneWaveMulti(values["sigma_w"], u, k)
        if f == "pw-sparse":
            prior = self.layout[0].prior
            a, b = (prior.a, prior.b) if isinstance(prior, InvGamma) else (1.0, 0.01)
            return PlaneWaveSparse(values["sigmas"], u, k, a, b)
        if f == "hier":
            return Hierarchical(values["sigmas"], values["b_log"], u, k)
        return Bessel(values["sigma_w"], k)


def fit_map(obs, family, priors=None, restarts=8, seed=0, *, freq_hz=None,
            num_directions=NUM_DIRECTIONS, maxfev=None, scale=True):
    """Maximum a posteriori hyperparameters for one kernel family.

    Parameters
    ----------
    obs : ObservationSet
        Complex pressures at the observation locations (metres).
    family : str
        One of ``FAMILIES``.
    priors : PriorConfig, optional
    restarts : int
        Number of simplex searches.  Starting points are the first
        ``restarts`` prior draws of a stream fixed by ``seed``, so more
        restarts never give a worse result.
    freq_hz : float, optional
        Required by the wave-based kernels.
    maxfev : int, optional
        Objective-evaluation budget per restart.
    scale : bool
        Divide observations by their mean magnitude before fitting.

    Returns
    -------
    GpFit
    """
    if family not in FAMILIES:
        raise InvalidInputError(f"unknown kernel family {family!r}; choose from {', '.join(FAMILIES)}")
    priors = priors or PriorConfig()
    locs = np.atleast_2d(np.asarray(obs.locations, dtype=float))
    y = np.asarray(obs.values, dtype=complex).ravel()
    if len(y) < 2:
        raise InvalidInputError("fit_map needs at least two observations")
    if restarts < 1:
        raise InvalidInputError("restarts must be at least 1")
    needs_k = family not in ("rbf-iso", "rbf-aniso")
    if needs_k and freq_hz is None:
        raise InvalidInputError(f"kernel {family!r} needs freq_hz")
    k = wavenumber(freq_hz) if freq_hz is not None else 1.0
    s = float(np.mean(np.abs(y))) if scale else 1.0
    if not s > 0:
        raise InvalidInputError("observations are all zero")
    objective = _Objective(family, locs, y / s, k, priors, num_directions)
    rng = np.random.default_rng(seed)
    starts = [objective.pack(objective.draw(rng)) for _ in range(restarts)]

    if objective.dim == 0:
        values = objective.unpack(np.zeros(0))
        val = objective(np.zeros(0))
        if not np.isfinite(val):
            raise OptimizationError("objective is not finite at the pinned hyperparameters")
        return GpFit(objective.spec(values), values["noise"], val, s, [val])

    budget = maxfev or min(250 * (objective.dim + 1), 2000)
    best, best_x, traces = -np.inf, None, []

    def neg(theta):
        v = objective(theta)
        return -v if np.isfinite(v) else np.inf

    for x0 in starts:
        simplex = np.vstack([x0, x0 + 0.5 * np.eye(objective.dim)])
        trace = []
        res = optimize.minimize(
            neg, x0, method="Nelder-Mead",
            callback=lambda xk: trace.append(-neg(xk)),
            options={"initial_simplex": simplex, "maxfev": budget, "adaptive": objective.dim > 8,
                     "xatol": 1e-6, "fatol": 1e-9})
        traces.append(trace)
        if np.isfinite(res.fun) and -res.fun > best:
            best, best_x = -res.fun, res.x
    if best_x is None:
        raise OptimizationError(f"every restart of the {family} fit produced a non-finite objective")
    values = objective.unpack(best_x)
    return GpFit(objective.spec(values), values["noise"], best, s, traces)


def log_posterior(obs, fit, family, priors=None, *, freq_hz=None, num_directions=NUM_DIRECTIONS):
    """Objective value ``fit_map`` assigns to an already-fitted ``fit``."""
    priors = priors or PriorConfig()
    y = np.asarray(obs.values, dtype=complex).ravel() / fit.scale
    k = wavenumber(freq_hz) if freq_hz is not None else 1.0
    objective = _Objective(family, np.atleast_2d(obs.locations), y, k, priors, num_directions)
    values = _spec_values(fit)
    return objective(objective.pack(values))


def _spec_values(fit):
    sp = fit.spec
    values = {"noise": fit.noise_variance}
    if isinstance(sp, RbfIso):
        values.update(alpha=sp.alpha, rho=sp.rho)
    elif isinstance(sp, (RbfAniso, RbfPeriodic)):
        u = sp.directions[0]
        values.update(alpha=sp.alpha, rho=sp.rhos, angle=math.atan2(u[1], u[0]))
    elif isinstance(sp, (PlaneWaveMulti, Bessel)):
        values.update(sigma_w=sp.sigma_w)
    elif isinstance(sp, PlaneWaveSparse):
        values.update(sigmas=sp.sigmas)
    else:
        values.update(sigmas=sp.sigmas, b_log=sp.b_log)
    return values
