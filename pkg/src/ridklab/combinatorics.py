"""Set partitions, the multivariate chain rule over partitions, and product-difference identities."""
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .fields import inverse_transform, transform
from .ridk import h_delta_derivatives

MAX_GROUND_SET = 12
MAX_CHAIN_ORDER = 4
IDENTITY_TOL = 1e-12


class IdentityMismatch(ArithmeticError):
    pass


@dataclass(frozen=True)
class SetPartition:
    """Partition of {1..alpha}; blocks are sorted and ordered by least element."""

    alpha: int
    blocks: tuple

    def __post_init__(self):
        seen = sorted(i for b in self.blocks for i in b)
        if seen != list(range(1, self.alpha + 1)):
            raise ValueError("blocks must be disjoint and cover 1..alpha")

    @property
    def size(self):
        return len(self.blocks)

    def block_size_counts(self):
        """beta_j: number of blocks of size j."""
        return dict(sorted(Counter(len(b) for b in self.blocks).items()))

    def sizes_present(self):
        return sorted(self.block_size_counts())


def _growth_strings(n):
    """Restricted growth strings of length n in lexicographic order."""
    a = [0] * n
    while True:
        yield tuple(a)
        i = n - 1
        while i > 0 and a[i] > max(a[:i]):
            i -= 1
        if i == 0:
            return
        a[i] += 1
        for k in range(i + 1, n):
            a[k] = 0


def enumerate_partitions(alpha):
    if int(alpha) != alpha or not 1 <= alpha <= MAX_GROUND_SET:
        raise ValueError(f"alpha must be an integer in 1..{MAX_GROUND_SET}, got {alpha!r}")
    out = []
    for rgs in _growth_strings(int(alpha)):
        blocks = [[] for _ in range(max(rgs) + 1)]
        for pos, label in enumerate(rgs, start=1):
            blocks[label].append(pos)
        out.append(SetPartition(int(alpha), tuple(tuple(b) for b in blocks)))
    return out


def bell_number(n):
    """Bell numbers from the Bell triangle."""
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def mixed_derivative(u_hat, grid, axes):
    """Physical values of the mixed partial derivative over ``axes`` (spectral)."""
    kd = grid.derivative_wavenumbers()
    factor = np.ones(grid.shape, dtype=complex)
    for ax in axes:
        factor = factor * (1j * kd[ax])
    return inverse_transform(factor * u_hat, grid)


def faa_di_bruno_derivative(spec, u, grid, axes):
    """d^alpha h_delta(u) / dx_{l_1}..dx_{l_alpha} summed over set partitions."""
    axes = [int(a) for a in axes]
    if not 1 <= len(axes) <= MAX_CHAIN_ORDER:
        raise ValueError(f"derivative order must be in 1..{MAX_CHAIN_ORDER}")
    if any(a < 0 or a >= grid.d for a in axes):
        raise ValueError(f"axis index out of range for d={grid.d}")
    u = np.asarray(u, dtype=float)
    u_hat = transform(u, grid)
    hder = h_delta_derivatives(u, spec, len(axes))
    cache = {}
    total = np.zeros(grid.shape)
    for part in enumerate_partitions(len(axes)):
        term = hder[part.size].copy()
        for block in part.blocks:
            key = tuple(sorted(axes[z - 1] for z in block))
            if key not in cache:
                cache[key] = mixed_derivative(u_hat, grid, key)
            term *= cache[key]
        total += term
    return total


def _check(lhs, rhs, what):
    if abs(lhs - rhs) > IDENTITY_TOL * max(1.0, abs(lhs), abs(rhs)):
        raise IdentityMismatch(f"{what}: expansion {rhs!r} differs from direct value {lhs!r}")


def _prefix_suffix(b, a):
    """b_{<k} and a_{>k} for k = 1..N."""
    n = len(a)
    before = np.ones(n)
    after = np.ones(n)
    for k in range(1, n):
        before[k] = before[k - 1] * b[k - 1]
    for k in range(n - 2, -1, -1):
        after[k] = after[k + 1] * a[k + 1]
    return before, after


def _telescoped(a, b, middle):
    before, after = _prefix_suffix(b, a)
    return float(np.sum(before * middle * after))


def _as_vectors(*vs):
    arrs = [np.asarray(v, dtype=float).ravel() for v in vs]
    if len({a.size for a in arrs}) != 1:
        raise ValueError("all vectors must have the same length")
    return arrs


def product_difference_expand(a, b):
    """sum_k b_{<k} (a_k - b_k) a_{>k}; checked against prod(a) - prod(b)."""
    a, b = _as_vectors(a, b)
    rhs = _telescoped(a, b, a - b)
    _check(float(np.prod(a) - np.prod(b)), rhs, "product difference")
    return rhs


def double_difference_expand(a, b, c, d):
    """Two-sum expansion of prod(a) - prod(b) - (prod(c) - prod(d))."""
    a, b, c, d = _as_vectors(a, b, c, d)
    n = a.size
    first = _telescoped(a, b, a - b - (c - d))
    second = 0.0
    for k in range(n):
        alpha_k = np.concatenate([b[:k], a[k + 1:]])
        beta_k = np.concatenate([d[:k], c[k + 1:]])
        if n > 1:
            second += (c[k] - d[k]) * _telescoped(alpha_k, beta_k, alpha_k - beta_k)
    rhs = first + second
    direct = float(np.prod(a) - np.prod(b) - (np.prod(c) - np.prod(d)))
    _check(direct, rhs, "double difference")
    return rhs


def identity_residuals(rng, instances=1000, max_len=8):
    """Largest |expansion - direct| over random instances of both identities."""
    worst_single = worst_double = 0.0
    for _ in range(instances):
        n = int(rng.integers(1, max_len + 1))
        a, b, c, d = rng.uniform(-2.0, 2.0, size=(4, n))
        worst_single = max(worst_single, abs(product_difference_expand(a, b) - (np.prod(a) - np.prod(b))))
        direct = np.prod(a) - np.prod(b) - (np.prod(c) - np.prod(d))
        worst_double = max(worst_double, abs(double_difference_expand(a, b, c, d) - direct))
    return worst_single, worst_double


def nested_central_difference(f, x, axes, step):
    """Mixed partial of f at points x (last axis = coordinates) by nested central differences."""
    if not axes:
        return f(x)
    ax, rest = axes[0], axes[1:]
    shift = np.zeros(x.shape[-1])
    shift[ax] = step
    return (nested_central_difference(f, x + shift, rest, step) - nested_central_difference(f, x - shift, rest, step)) / (
        2.0 * step
    )

