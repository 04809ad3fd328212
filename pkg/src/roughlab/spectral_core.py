"""Domains, the Dirichlet sine eigenbasis, quadrature and L^q norms.

Fields live on the interior nodes of a uniform grid over an interval or a
rectangle.  Quadrature is the composite trapezoid rule; the Dirichlet
zeros at the boundary make it a plain weighted sum over interior nodes.
The eigenbasis is the tensor-product sine basis, and transforms between
nodal values and modal coefficients go through the orthonormal DST-I, for
which the trapezoid rule is exactly orthonormal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.fft import dstn

from .errors import DomainError, ResolutionError, StructuralError

MIN_NODES = 8


@dataclass(frozen=True)
class DomainSpec:
    """An interval (0, l) or a rectangle (0, l1) x (0, l2) with interior nodes."""

    dim: int
    extent: tuple[float, ...]
    nodes: tuple[int, ...]

    def __post_init__(self):
        extent = tuple(float(e) for e in np.atleast_1d(self.extent))
        nodes = tuple(int(n) for n in np.atleast_1d(self.nodes))
        if self.dim not in (1, 2):
            raise DomainError(f"dim must be 1 or 2, got {self.dim}")
        if len(extent) != self.dim or len(nodes) != self.dim:
            raise DomainError("extent and nodes need one entry per axis")
        if any(not np.isfinite(e) or e <= 0 for e in extent):
            raise DomainError(f"side lengths must be positive, got {extent}")
        if any(n < MIN_NODES for n in nodes):
            raise DomainError(f"need at least {MIN_NODES} nodes per axis, got {nodes}")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def interval(cls, length=np.pi, nodes=255):
        return cls(1, (length,), (nodes,))

    @classmethod
    def rectangle(cls, extent=(np.pi, np.pi), nodes=(63, 63)):
        return cls(2, tuple(extent), tuple(nodes))

    @property
    def shape(self):
        return self.nodes

    @property
    def size(self):
        return int(np.prod(self.nodes))

    @property
    def spacing(self):
        return tuple(l / (n + 1) for l, n in zip(self.extent, self.nodes))

    @property
    def cell_volume(self):
        """Trapezoid weight of one interior node."""
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.extent))

    @cached_property
    def axes(self):
        return tuple(
            np.arange(1, n + 1) * (l / (n + 1)) for l, n in zip(self.extent, self.nodes)
        )

    @cached_property
    def mesh(self):
        return np.meshgrid(*self.axes, indexing="ij")

    def sample(self, fn):
        """Evaluate ``fn(x)`` (1D) or ``fn(x, y)`` (2D) at the nodes."""
        return GridFunction(self, np.asarray(fn(*self.mesh), dtype=float))

    def constant(self, value):
        return GridFunction(self, np.full(self.shape, float(value)))

    def zeros(self):
        return self.constant(0.0)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real samples of a field at the interior nodes of ``domain``."""

    domain: DomainSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.size != self.domain.size:
            raise StructuralError(
                f"expected {self.domain.size} values, got {values.size}"
            )
        values = values.reshape(self.domain.shape)
        if not np.all(np.isfinite(values)):
            raise DomainError("grid function values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def _wrap(self, values):
        return GridFunction(self.domain, values)

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.domain != self.domain:
                raise StructuralError("grid functions live on different domains")
            return other.values
        return other

    def __add__(self, other):
        return self._wrap(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.values - self._other(other))

    def __rsub__(self, other):
        return self._wrap(self._other(other) - self.values)

    def __mul__(self, other):
        return self._wrap(self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._wrap(self.values / self._other(other))

    def __neg__(self):
        return self._wrap(-self.values)

    def __abs__(self):
        return self._wrap(np.abs(self.values))

    def map(self, fn):
        return self._wrap(fn(self.values))

    def max(self):
        return float(self.values.max())

    def min(self):
        return float(self.values.min())


def lq_norm(f, q):
    """Trapezoid L^q norm of a grid function; ``q = inf`` gives the nodal max."""
    q = float(q)
    if np.isnan(q) or q < 1:
        raise DomainError(f"L^q norm needs q >= 1, got {q}")
    values = f.values if isinstance(f, GridFunction) else np.asarray(f)
    if np.isinf(q):
        return float(np.max(np.abs(values))) if values.size else 0.0
    w = f.domain.cell_volume
    if q == 1:
        return float(w * np.sum(np.abs(values)))
    if q == 2:
        return float(np.sqrt(w * np.sum(values * values)))
    return float((w * np.sum(np.abs(values) ** q)) ** (1.0 / q))


def lq_norms(values, domain, q):
    """Row-wise L^q norms of a stack of nodal arrays shaped ``(m, *domain.shape)``."""
    values = np.asarray(values).reshape(len(values), -1)
    q = float(q)
    if q < 1:
        raise DomainError(f"L^q norm needs q >= 1, got {q}")
    if np.isinf(q):
        return np.max(np.abs(values), axis=1)
    w = domain.cell_volume
    return (w * np.sum(np.abs(values) ** q, axis=1)) ** (1.0 / q)


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """The ``K`` lowest Dirichlet eigenpairs of -Laplacian on a rectangle.

    ``index[k]`` holds the 1-based sine wavenumbers of mode ``k``; modes are
    ordered by eigenvalue with ties broken by wavenumber.
    """

    domain: DomainSpec
    count: int
    eigenvalues: np.ndarray = field(repr=False)
    index: np.ndarray = field(repr=False)

    @property
    def K(self):
        return self.count

    @cached_property
    def _flat_index(self):
        return np.ravel_multi_index(tuple((self.index - 1).T), self.domain.shape)

    @cached_property
    def _scale(self):
        # orthonormal DST-I -> L2-orthonormal sine coefficients
        return float(
            np.prod([np.sqrt(l / (n + 1)) for l, n in zip(self.domain.extent, self.domain.nodes)])
        )

    def _check(self, f):
        if f.domain != self.domain:
            raise StructuralError("grid function and basis live on different domains")

    def to_modes(self, f):
        """Quadrature projection onto the retained modes."""
        self._check(f)
        return self.project_values(f.values)

    def project_values(self, values):
        """Project raw nodal arrays; a leading batch axis is allowed."""
        values = np.asarray(values, dtype=float)
        d = self.domain.dim
        axes = tuple(range(values.ndim - d, values.ndim))
        full = dstn(values, type=1, norm="ortho", axes=axes) * self._scale
        batch = values.shape[: values.ndim - d]
        return full.reshape(*batch, -1)[..., self._flat_index]

    def synthesize(self, coeffs):
        """Grid function with the given modal coefficients."""
        return GridFunction(self.domain, self.synthesize_values(coeffs))

    def synthesize_values(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.count:
            raise StructuralError(
                f"expected {self.count} coefficients, got {coeffs.shape[-1]}"
            )
        batch = coeffs.shape[:-1]
        full = np.zeros(batch + (self.domain.size,))
        full[..., self._flat_index] = coeffs
        full = full.reshape(batch + self.domain.shape)
        d = self.domain.dim
        axes = tuple(range(full.ndim - d, full.ndim))
        return dstn(full, type=1, norm="ortho", axes=axes) / self._scale

    @cached_property
    def matrix(self):
        """Dense nodes-by-K matrix of eigenfunction samples."""
        return self.synthesize_values(np.eye(self.count)).reshape(self.count, -1).T

    @property
    def eigenfunctions(self):
        return [self.synthesize(row) for row in np.eye(self.count)]

    def evaluate(self, coeffs, *points):
        """Evaluate a modal expansion at arbitrary points (not just nodes)."""
        coeffs = np.asarray(coeffs, dtype=float)
        points = [np.asarray(p, dtype=float) for p in points]
        if len(points) != self.domain.dim:
            raise StructuralError("need one coordinate array per axis")
        out = np.zeros(np.broadcast(*points).shape)
        for c, wave in zip(coeffs, self.index):
            if c == 0.0:
                continue
            term = c
            for p, k, l in zip(points, wave, self.domain.extent):
                term = term * np.sqrt(2.0 / l) * np.sin(k * np.pi * p / l)
            out = out + term
        return out


def dirichlet_eigenpairs(domain, K):
    """Closed-form sine eigenpairs; ``K`` may not exceed the number of nodes."""
    K = int(K)
    limit = domain.size
    if K < 1:
        raise DomainError("need at least one mode")
    if K > limit:
        raise ResolutionError(
            f"{K} modes exceed the grid resolution; at most {limit} are admissible"
        )
    grids = np.meshgrid(*[np.arange(1, n + 1) for n in domain.nodes], indexing="ij")
    waves = np.stack([g.ravel() for g in grids], axis=1)
    mu = sum(
        (waves[:, a] * np.pi / domain.extent[a]) ** 2 for a in range(domain.dim)
    )
    keys = [waves[:, a] for a in reversed(range(domain.dim))] + [mu]
    order = np.lexsort(keys)[:K]
    return EigenBasis(domain, K, mu[order].copy(), waves[order].copy())


def to_modes(f, basis):
    return basis.to_modes(f)


def synthesize(coeffs, basis):
    return basis.synthesize(coeffs)


# -- refined quadrature for closed-form integrands --------------------------


def refined_rule(length, singular_points=(), breakpoints=(), panels=256, order=12, depth=200):
    """Composite Gauss-Legendre rule on (0, length).

    Panels are uniform away from ``singular_points`` and shrink geometrically
    (ratio 1/2, ``depth`` levels) towards each of them, so integrable power
    singularities are captured to near machine precision.  ``breakpoints``
    become panel edges, which keeps kinks (e.g. clamp levels) out of panel
    interiors.
    """
    edges = [np.linspace(0.0, length, panels + 1)]
    for s in singular_points:
        offsets = length * 0.5 ** np.arange(1, depth + 1)
        # stop grading before panels drop below the float spacing at s
        offsets = offsets[offsets > 1e4 * np.spacing(abs(s))]
        edges.append(np.array([s]))
        edges.append(s + offsets)
        edges.append(s - offsets)
    edges.append(np.asarray(breakpoints, dtype=float))
    e = np.unique(np.concatenate(edges))
    e = e[(e >= 0.0) & (e <= length)]
    a, b = e[:-1], e[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    xg, wg = leggauss(order)
    half = 0.5 * (b - a)
    x = (0.5 * (a + b))[:, None] + half[:, None] * xg[None, :]
    w = half[:, None] * wg[None, :]
    return x.ravel(), w.ravel()


def refined_lq(fn, q, length, singular_points=(), breakpoints=(), **kw):
    """L^q norm of a closed-form function on (0, length) by refined quadrature."""
    q = float(q)
    if q < 1:
        raise DomainError(f"L^q norm needs q >= 1, got {q}")
    x, w = refined_rule(length, singular_points, breakpoints, **kw)
    vals = np.abs(fn(x))
    if np.isinf(q):
        return float(vals.max())
    return float(np.sum(w * vals**q) ** (1.0 / q))


def refined_sine_coefficients(fn, basis, singular_points=(), breakpoints=(), chunk=4096, **kw):
    """Exact-quadrature L2 projection of a closed-form 1D function onto ``basis``."""
    if basis.domain.dim != 1:
        raise StructuralError("closed-form projection is implemented for intervals")
    length = basis.domain.extent[0]
    kw.setdefault("panels", max(256, 2 * int(basis.index.max())))
    x, w = refined_rule(length, singular_points, breakpoints, **kw)
    fw = fn(x) * w
    k = basis.index[:, 0].astype(float)
    out = np.zeros(basis.count)
    for start in range(0, x.size, chunk):
        xs = x[start : start + chunk]
        out += np.sin(np.outer(k, xs) * (np.pi / length)) @ fw[start : start + chunk]
    return out * np.sqrt(2.0 / length)
