"""Fields on a uniform grid of the torus [0, 2 pi)^d and their Sobolev norms.

Spectral coefficients follow the convention
``u_hat[k] = (2 pi)^-d int u(x) exp(-i k.x) dx``, which on the grid is
``fftn(u) / M^d``. With it, ``||u||_{H^s}^2 = sum_k |u_hat[k]|^2 (1+|k|^2)^s``
and ``(f * g)^ = (2 pi)^d f_hat g_hat``.
"""
import csv
import io
import math
import os
import struct
import tempfile
import threading
from dataclasses import dataclass, replace

import numpy as np

TWO_PI = 2.0 * math.pi


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid with ``m`` points per axis in ``d`` dimensions."""

    d: int
    m: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.m < 4 or self.m & (self.m - 1):
            raise ValueError(f"points per axis must be a power of two >= 4, got {self.m}")

    @property
    def shape(self):
        return (self.m,) * self.d

    @property
    def spacing(self):
        return TWO_PI / self.m

    @property
    def size(self):
        return self.m**self.d

    def axis(self):
        return np.arange(self.m) * self.spacing

    def points(self):
        """Array of shape (m, ..., m, d) with the grid coordinates."""
        axes = np.meshgrid(*([self.axis()] * self.d), indexing="ij")
        return np.stack(axes, axis=-1)

    def coordinate(self, ax):
        shape = [1] * self.d
        shape[ax] = self.m
        return self.axis().reshape(shape)

    def wavenumbers(self):
        """Integer wavenumber arrays, one per axis, broadcastable to ``shape``."""
        return _plans.get(self).k

    def derivative_wavenumbers(self):
        """Wavenumbers with the Nyquist entry zeroed (real-preserving derivatives)."""
        return _plans.get(self).kd

    def ksq(self):
        return _plans.get(self).ksq

    def sobolev_weight(self, s):
        return _plans.get(self).weight(s)

    def dealias_mask(self):
        return _plans.get(self).mask


class _Plan:
    def __init__(self, grid):
        m, d = grid.m, grid.d
        k1 = np.fft.fftfreq(m, 1.0 / m)
        kd1 = k1.copy()
        kd1[m // 2] = 0.0
        self.k = []
        self.kd = []
        for ax in range(d):
            shape = [1] * d
            shape[ax] = m
            self.k.append(k1.reshape(shape))
            self.kd.append(kd1.reshape(shape))
        self.ksq = sum(k * k for k in self.k) * np.ones(grid.shape)
        cut = m / 3.0
        mask = np.ones(grid.shape, dtype=bool)
        for k in self.k:
            mask &= np.abs(k) < cut
        self.mask = mask
        self._weights = {}
        self._lock = threading.Lock()

    def weight(self, s):
        w = self._weights.get(s)
        if w is None:
            w = (1.0 + self.ksq) ** s
            with self._lock:
                self._weights[s] = w
        return w


class _PlanRegistry:
    """Per-grid wavenumber tables, built once and then only read."""

    def __init__(self):
        self._plans = {}
        self._lock = threading.Lock()

    def get(self, grid):
        plan = self._plans.get(grid)
        if plan is None:
            with self._lock:
                plan = self._plans.get(grid)
                if plan is None:
                    plan = self._plans[grid] = _Plan(grid)
        return plan


_plans = _PlanRegistry()


def _check(grid, arr, lead=()):
    if tuple(arr.shape[len(lead):]) != grid.shape or tuple(arr.shape[: len(lead)]) != tuple(lead):
        raise GridMismatchError(f"array of shape {arr.shape} does not match grid {grid.shape}")


def transform(values, grid):
    """Spectral coefficients of a real (or complex) field sampled on ``grid``."""
    values = np.asarray(values)
    _check(grid, values, values.shape[: values.ndim - grid.d])
    axes = tuple(range(values.ndim - grid.d, values.ndim))
    return np.fft.fftn(values, axes=axes) / grid.size


def inverse_transform(coeffs, grid, real=True):
    coeffs = np.asarray(coeffs)
    _check(grid, coeffs, coeffs.shape[: coeffs.ndim - grid.d])
    axes = tuple(range(coeffs.ndim - grid.d, coeffs.ndim))
    out = np.fft.ifftn(coeffs, axes=axes) * grid.size
    return out.real if real else out


def _weighted_root(parts):
    """sqrt(sum_i sum |a_i|^2 w_i), rescaled so tiny or huge entries neither underflow nor overflow."""
    mags = [(np.abs(a), w) for a, w in parts]
    top = max((float(m.max()) for m, _ in mags if m.size), default=0.0)
    if top == 0.0 or not math.isfinite(top):
        return top
    total = sum(float(np.sum((m / top) ** 2 * w)) for m, w in mags)
    return top * math.sqrt(total)


def hs_norm_hat(coeffs, grid, s):
    return _weighted_root([(coeffs, grid.sobolev_weight(s))])


def hs_norm(values, grid, s):
    """H^s norm of a band-limited field sampled on ``grid``."""
    return hs_norm_hat(transform(values, grid), grid, s)


def hs_inner(u, v, grid, s):
    return complex(np.sum(transform(u, grid) * np.conj(transform(v, grid)) * grid.sobolev_weight(s)))


def gradient(values, grid):
    """Spectral gradient, shape (d,) + grid.shape."""
    uh = transform(values, grid)
    return np.stack([inverse_transform(1j * k * uh, grid) for k in grid.derivative_wavenumbers()])


def divergence(vec, grid):
    kd = grid.derivative_wavenumbers()
    total = sum(1j * kd[ax] * transform(vec[ax], grid) for ax in range(grid.d))
    return inverse_transform(total, grid)


def integration_by_parts_sides(u, vec, grid, s):
    """(<-div v, u>_{H^s}, sum_l <v_l, d_l u>_{H^s}); equal for band-limited data."""
    lhs = hs_inner(-divergence(vec, grid), u, grid, s)
    du = gradient(u, grid)
    rhs = sum(hs_inner(vec[ax], du[ax], grid, s) for ax in range(grid.d))
    return lhs, rhs


def convolve(f, g, grid):
    """Periodic convolution int f(x - y) g(y) dy."""
    return inverse_transform(TWO_PI**grid.d * transform(f, grid) * transform(g, grid), grid)


def c0_norm(values):
    return float(np.max(np.abs(values)))


def dealias(coeffs, grid):
    return coeffs * grid.dealias_mask()


def padded_product(u, v, grid):
    """Coefficients of u*v on a grid twice as fine, so no aliasing occurs."""
    fine = TorusGrid(grid.d, 2 * grid.m)
    uf = inverse_transform(resample_hat(transform(u, grid), grid, fine), fine)
    vf = inverse_transform(resample_hat(transform(v, grid), grid, fine), fine)
    return transform(uf * vf, fine), fine


def resample_hat(coeffs, grid, target):
    """Embed (or truncate) coefficients into another grid's mode layout."""
    out = np.zeros(coeffs.shape[: coeffs.ndim - grid.d] + target.shape, dtype=complex)
    lo = min(grid.m, target.m) // 2
    idx = list(range(0, lo)) + list(range(-lo + 1, 0))
    src = np.ix_(*([[i % grid.m for i in idx]] * grid.d))
    dst = np.ix_(*([[i % target.m for i in idx]] * grid.d))
    out[(Ellipsis,) + dst] = coeffs[(Ellipsis,) + src]
    return out


@dataclass
class PairState:
    """Density and momentum pair, stored by spectral coefficients.

    ``rho_hat`` has the grid shape; ``j_hat`` carries one leading axis of
    length d for the momentum components.
    """

    grid: TorusGrid
    rho_hat: np.ndarray
    j_hat: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        _check(self.grid, self.rho_hat)
        _check(self.grid, self.j_hat, (self.grid.d,))

    @classmethod
    def from_values(cls, grid, rho, j=None, time=0.0):
        rho = np.asarray(rho, dtype=float)
        if j is None:
            j = np.zeros((grid.d,) + grid.shape)
        return cls(grid, transform(rho, grid), transform(np.asarray(j, float), grid), time)

    @property
    def rho(self):
        return inverse_transform(self.rho_hat, self.grid)

    @property
    def j(self):
        return inverse_transform(self.j_hat, self.grid)

    def copy(self):
        return replace(self, rho_hat=self.rho_hat.copy(), j_hat=self.j_hat.copy())

    def scaled(self, c):
        return replace(self, rho_hat=c * self.rho_hat, j_hat=c * self.j_hat)

    def __sub__(self, other):
        if other.grid != self.grid:
            raise GridMismatchError("states live on different grids")
        return replace(self, rho_hat=self.rho_hat - other.rho_hat, j_hat=self.j_hat - other.j_hat)

    def mass(self):
        """int rho dx, read off the zero mode."""
        return float(self.rho_hat[(0,) * self.grid.d].real) * TWO_PI**self.grid.d


def pair_norm(state, s):
    """(||rho||_{H^s}^2 + sum_l ||j_l||_{H^s}^2)^(1/2)."""
    return energy_norm(state, 1.0, s)


def energy_norm(state, c, s):
    """(c ||rho||_{H^s}^2 + sum_l ||j_l||_{H^s}^2)^(1/2), c > 0."""
    if c <= 0:
        raise ValueError("energy weight must be positive")
    w = state.grid.sobolev_weight(s)
    return _weighted_root([(state.rho_hat, c * w), (state.j_hat, w)])


def random_bandlimited(grid, rng, decay, band=None, size=None):
    """Real Gaussian fields with coefficient standard deviation (1+|k|^2)^(-decay/2).

    Modes with any |k_l| >= band are zero (default: half the Nyquist number).
    """
    band = grid.m // 4 if band is None else band
    lead = () if size is None else (size,)
    noise = rng.standard_normal(lead + grid.shape)
    coeffs = transform(noise, grid) * math.sqrt(grid.size)
    mask = np.ones(grid.shape, dtype=bool)
    for k in grid.wavenumbers():
        mask &= np.abs(k) < band
    coeffs = coeffs * mask * (1.0 + grid.ksq()) ** (-decay / 2.0)
    return inverse_transform(coeffs, grid)


def embedding_probe(samples, grid, s):
    """max over samples of ||u||_C0 / ||u||_{H^s}."""
    if s <= grid.d / 2.0:
        raise ValueError("the C^0 embedding needs s > d/2")
    return max(c0_norm(u) / hs_norm(u, grid, s) for u in samples)


def multiplication_probe(u, v, grid, s):
    """||uv||_{H^s} / (||u||_{H^s} ||v||_{H^s}), product computed without aliasing."""
    nu, nv = hs_norm(u, grid, s), hs_norm(v, grid, s)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("zero-norm input")
    prod_hat, fine = padded_product(u, v, grid)
    return hs_norm_hat(prod_hat, fine, s) / (nu * nv)


# --- snapshot files -------------------------------------------------------

_HEADER = struct.Struct("<QQQ")


def atomic_write(path, data, mode="wb"):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def snapshot_bytes(fields, grid):
    """Flat layout: little-endian u64 header (d, M, count), then row-major float64."""
    arr = np.ascontiguousarray(np.asarray(fields, dtype="<f8"))
    if arr.ndim == grid.d:
        arr = arr[None]
    _check(grid, arr, (arr.shape[0],))
    return _HEADER.pack(grid.d, grid.m, arr.shape[0]) + arr.tobytes(order="C")


def write_snapshot(path, fields, grid):
    atomic_write(path, snapshot_bytes(fields, grid))


def read_snapshot(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    return parse_snapshot(raw)


def parse_snapshot(raw):
    d, m, count = _HEADER.unpack_from(raw)
    grid = TorusGrid(int(d), int(m))
    expected = _HEADER.size + 8 * count * grid.size
    if len(raw) != expected:
        raise ValueError(f"snapshot has {len(raw)} bytes, header implies {expected}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape((int(count),) + grid.shape)
    return grid, data.astype(float)


def snapshot_csv(fields, grid, names=None):
    """CSV with the grid coordinates followed by one column per field."""
    arr = np.asarray(fields, dtype=float)
    if arr.ndim == grid.d:
        arr = arr[None]
    names = names or [f"f{i}" for i in range(arr.shape[0])]
    pts = grid.points().reshape(-1, grid.d)
    flat = arr.reshape(arr.shape[0], -1)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(grid.d)] + list(names))
    for n in range(pts.shape[0]):
        w.writerow([repr(float(v)) for v in pts[n]] + [repr(float(v)) for v in flat[:, n]])
    return buf.getvalue()


def state_fields(state):
    """Stack (rho, j_1, ..., j_d) for writing."""
    return np.concatenate([state.rho[None], state.j], axis=0)

