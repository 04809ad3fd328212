"""Reaction terms f(x, u) = g(x) + m(x) u + f0(x, u) and their certificates.

Every nonlinearity carries an almost-monotonicity majorant ``L`` (a bound
``d f0/du <= L(x)``) and a local Lipschitz majorant ``L0(x, R)``.  The
registry families compute these; the checks here only verify them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import AdmissibilityError, ConsistencyError, StructuralError
from .reports import BoundReport
from .spectral_core import GridFunction

DENSE_SAMPLES = 100_000

INTEGRABILITY_NOTE = {
    "q0": "N/2 < q0 < inf (source and Lipschitz majorant)",
    "r0": "N/2 < r0 <= inf (linear rate)",
    "sigma0": "N/2 < sigma0 (almost-monotonicity majorant)",
    "discrete": "every sampled field on a bounded grid lies in every L^r",
}


def _node(index):
    return tuple(int(i) for i in index)


def _values(f):
    return f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=float)


class Logistic:
    """f0(x, u) = -n(x) |u|^(rho-1) u."""

    name = "logistic"

    def __init__(self, n, rho):
        self.n = _values(n)
        self.rho = float(rho)

    def value(self, u):
        return -self.n * np.abs(u) ** (self.rho - 1.0) * u

    def derivative(self, u):
        return -self.n * self.rho * np.abs(u) ** (self.rho - 1.0)

    def lipschitz(self, R):
        return self.rho * R ** (self.rho - 1.0) * self.n

    def params(self):
        return {"rho": self.rho}


class MonotonePolynomial:
    """f0(x, u) = sum_j n_j(x) u^j for j = 2..k, k odd."""

    name = "monotone_poly"

    def __init__(self, coeffs):
        self.coeffs = {int(j): _values(c) for j, c in coeffs.items()}
        self.k = max(self.coeffs)

    def value(self, u):
        return sum(c * u**j for j, c in self.coeffs.items())

    def derivative(self, u):
        return sum(j * c * u ** (j - 1) for j, c in self.coeffs.items())

    def lipschitz(self, R):
        return sum(j * R ** (j - 1) * np.abs(c) for j, c in self.coeffs.items())

    def params(self):
        return {"k": self.k}


class FractionalPolynomial:
    """f0(x, u) = sum_j n_j(x) |u|^(rho_j - 1) u with increasing rho_j > 1."""

    name = "fractional_poly"

    def __init__(self, ns, rhos):
        self.ns = [_values(n) for n in ns]
        self.rhos = [float(r) for r in rhos]

    def value(self, u):
        au = np.abs(u)
        return sum(n * au ** (r - 1.0) * u for n, r in zip(self.ns, self.rhos))

    def derivative(self, u):
        au = np.abs(u)
        return sum(r * n * au ** (r - 1.0) for n, r in zip(self.ns, self.rhos))

    def lipschitz(self, R):
        return sum(r * R ** (r - 1.0) * np.abs(n) for n, r in zip(self.ns, self.rhos))

    def params(self):
        return {f"rho_{j + 1}": r for j, r in enumerate(self.rhos)}


class CustomNonlinearity:
    """User-supplied f0 with explicit derivative and Lipschitz majorant."""

    name = "custom"

    def __init__(self, value, derivative, lipschitz):
        self._value = value
        self._derivative = derivative
        self._lipschitz = lipschitz

    def value(self, u):
        return self._value(u)

    def derivative(self, u):
        return self._derivative(u)

    def lipschitz(self, R):
        return self._lipschitz(R)

    def params(self):
        return {}


class Zero:
    name = "none"

    def value(self, u):
        return np.zeros_like(u)

    derivative = value

    def lipschitz(self, R):
        return 0.0

    def params(self):
        return {}


@dataclass(frozen=True, eq=False)
class ReactionDecomposition:
    g: GridFunction
    m: GridFunction
    f0: object
    L: GridFunction
    notes: tuple = field(default=())

    def __post_init__(self):
        if not (self.g.domain == self.m.domain == self.L.domain):
            raise StructuralError("g, m and L must share one domain")

    @property
    def domain(self):
        return self.g.domain

    def lipschitz_majorant(self, R):
        return np.broadcast_to(self.f0.lipschitz(R), self.domain.shape)

    def f(self, u):
        """Full reaction g + m u + f0(u) on nodal values."""
        return self.g.values + self.m.values * u + self.f0.value(u)

    def forcing(self, u):
        """g + f0(u): the part integrated against the semigroup of Laplacian + m."""
        return self.g.values + self.f0.value(u)

    @property
    def is_linear(self):
        return isinstance(self.f0, Zero)

    def describe(self):
        params = ",".join(f"{k}={v:g}" for k, v in self.f0.params().items())
        return f"{self.f0.name}({params})" if params else self.f0.name


@dataclass(frozen=True, eq=False)
class SignConditionFields:
    C: GridFunction
    D: GridFunction


def _defaults(domain, g, m):
    g = domain.zeros() if g is None else g
    m = domain.zeros() if m is None else m
    return g, m


def linear(domain, g=None, m=None):
    """f0 = 0: the linear problem u_t = Laplacian u + m u + g."""
    g, m = _defaults(domain, g, m)
    return ReactionDecomposition(g, m, Zero(), domain.zeros())


def make_logistic(n, rho, g=None, m=None):
    rho = float(rho)
    if rho <= 1:
        raise AdmissibilityError(f"logistic exponent must exceed 1, got {rho}")
    bad = np.argwhere(n.values < 0)
    if bad.size:
        raise AdmissibilityError(f"logistic coefficient negative at node {_node(bad[0])}")
    if not np.any(n.values > 0):
        raise AdmissibilityError("logistic coefficient is identically zero")
    g, m = _defaults(n.domain, g, m)
    return ReactionDecomposition(g, m, Logistic(n, rho), n.domain.zeros())


def _golden_refine(fn, grid, values, i):
    if 0 < i < grid.size - 1:
        try:
            res = minimize_scalar(
                lambda s: -fn(s), bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden"
            )
        except ValueError:
            # flat neighbour: the bracket is not strict, the grid value stands
            return float(values[i])
        if -res.fun > values[i]:
            return float(-res.fun)
    return float(values[i])


def _nodewise_max(rows, fn_of_row, lo_hi):
    """Maximize a per-node scalar function; rows are unique coefficient tuples."""
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    best = np.empty(len(uniq))
    for r, row in enumerate(uniq):
        lo, hi = lo_hi(row)
        grid = np.linspace(lo, hi, DENSE_SAMPLES)
        fn = fn_of_row(row)
        vals = fn(grid)
        i = int(np.argmax(vals))
        best[r] = _golden_refine(fn, grid, vals, i)
    return best[np.ravel(inverse)]


def make_monotone_polynomial(coeffs, g=None, m=None):
    """Coefficient fields n_j for j = 2..k; the top exponent k must be odd."""
    coeffs = {int(j): c for j, c in coeffs.items()}
    if not coeffs or min(coeffs) < 2:
        raise AdmissibilityError("monotone polynomial needs exponents j >= 2")
    k = max(coeffs)
    if k % 2 == 0:
        raise AdmissibilityError(f"top exponent k must be odd, got {k}")
    domain = coeffs[k].domain
    bad = np.argwhere(coeffs[k].values >= 0)
    if bad.size:
        raise AdmissibilityError(
            f"leading coefficient n_{k} must be negative; fails at node {_node(bad[0])}"
        )
    js = sorted(coeffs)
    rows = np.stack([coeffs[j].values.ravel() for j in js], axis=1)

    def poly(row):
        return lambda u: sum(c * np.asarray(u) ** (j - 1) for j, c in zip(js, row))

    def bracket(row):
        B = 1.0 + np.sum(np.abs(row[:-1])) / abs(row[-1])
        return -B, B

    peak = _nodewise_max(rows, poly, bracket).reshape(domain.shape)
    L = GridFunction(domain, k * np.maximum(peak, 0.0))
    g, m = _defaults(domain, g, m)
    return ReactionDecomposition(g, m, MonotonePolynomial(coeffs), L)


def make_fractional_polynomial(ns, rhos, g=None, m=None):
    """Terms n_j |u|^(rho_j-1) u; L scaled by the top exponent as in the polynomial case."""
    rhos = [float(r) for r in rhos]
    if len(ns) != len(rhos) or not ns:
        raise AdmissibilityError("need one exponent per coefficient field")
    if rhos[0] <= 1 or any(b <= a for a, b in zip(rhos, rhos[1:])):
        raise AdmissibilityError(f"exponents must satisfy 1 < rho_1 < ... < rho_k, got {rhos}")
    domain = ns[-1].domain
    bad = np.argwhere(ns[-1].values >= 0)
    if bad.size:
        raise AdmissibilityError(
            f"leading coefficient must be negative; fails at node {_node(bad[0])}"
        )
    rows = np.stack([n.values.ravel() for n in ns], axis=1)

    def poly(row):
        return lambda s: sum(c * np.abs(s) ** (r - 1.0) for r, c in zip(rhos, row))

    def bracket(row):
        if len(row) == 1:
            return 0.0, 1.0
        ratio = np.sum(np.abs(row[:-1])) / abs(row[-1])
        return 0.0, 1.0 + max(1.0, ratio) ** (1.0 / (rhos[-1] - rhos[-2]))

    peak = _nodewise_max(rows, poly, bracket).reshape(domain.shape)
    L = GridFunction(domain, rhos[-1] * np.maximum(peak, 0.0))
    g, m = _defaults(domain, g, m)
    note = (
        "L for fractional powers uses rho_k * max_s(sum n_j s^(rho_j-1))^+ "
        "by analogy with the polynomial recipe"
    )
    return ReactionDecomposition(g, m, FractionalPolynomial(ns, rhos), L, notes=(note,))


def make_custom(domain, value, derivative, L, lipschitz, g=None, m=None):
    """Custom f0; the caller supplies every certificate and we only verify them."""
    L = domain.constant(L) if np.isscalar(L) else L
    bad = np.argwhere(L.values < 0)
    if bad.size:
        raise AdmissibilityError(f"L must be nonnegative; fails at node {_node(bad[0])}")
    g, m = _defaults(domain, g, m)
    return ReactionDecomposition(g, m, CustomNonlinearity(value, derivative, lipschitz), L)


def admissibility_check(rd, u_max=10.0, samples=2001):
    """Sample d f0/du - L(x) on nodes x u-grid; positive margins are violations."""
    if u_max <= 0 or samples < 100:
        raise ValueError("need u_max > 0 and at least 100 samples")
    u = np.linspace(-u_max, u_max, int(samples))
    shape = (u.size,) + (1,) * rd.domain.dim
    excess = rd.f0.derivative(u.reshape(shape)) - rd.L.values
    excess = np.broadcast_to(excess, (u.size,) + rd.domain.shape)
    flat = int(np.argmax(excess))
    iu, *node = np.unravel_index(flat, excess.shape)
    worst = float(excess.flat[flat])
    zero = np.zeros((1,) + (1,) * rd.domain.dim)
    f00 = float(np.max(np.abs(rd.f0.value(zero))))
    df00 = float(np.max(np.abs(rd.f0.derivative(zero))))
    normalized = f00 == 0.0 and df00 == 0.0
    ok = worst <= 0.0 and normalized
    witnesses = [] if ok else [{"node": tuple(int(i) for i in node), "u": float(u[iu])}]
    notes = list(rd.notes)
    if not normalized:
        notes.append(f"normalization violated: |f0(0)|={f00:g}, |df0(0)|={df00:g}")
    return BoundReport(
        name="almost_monotonicity",
        verdict=ok,
        worst_margin=worst,
        witnesses=witnesses,
        fitted_constants={"L_max": float(rd.L.values.max())},
        notes=notes,
        metadata=dict(INTEGRABILITY_NOTE),
    )


def sign_condition_fields(rd, u_max=10.0, samples=201):
    """C = m + L and D = |g|, spot-checking u f(x,u) <= C u^2 + D |u|."""
    C = rd.m + rd.L
    D = abs(rd.g)
    u = np.linspace(-u_max, u_max, samples).reshape((samples,) + (1,) * rd.domain.dim)
    lhs = u * rd.f(u)
    rhs = C.values * u**2 + D.values * np.abs(u)
    excess = lhs - rhs - 1e-12 * (1.0 + np.abs(rhs))
    if np.any(excess > 0):
        i = np.unravel_index(int(np.argmax(excess)), excess.shape)
        raise ConsistencyError(
            f"sign condition fails at node {tuple(int(j) for j in i[1:])}, "
            f"u={float(u.flat[i[0]]):g}: f0 contradicts its majorant L"
        )
    return SignConditionFields(C, D)
