"""Rough L^q initial data, its mollifications, and the approximating solutions.

Initial data are closed-form functions on (0, l), possibly unbounded near a
few points.  Distances between mollified data are always computed by
refined quadrature of the closed forms, never from grid samples, so that the
right-hand side of the contraction bound does not inherit solver error.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, RefusalError, SchemeError, StructuralError
from .integrator import integrate
from .reports import BoundReport
from .spectral_core import GridFunction, lq_norms, refined_lq, refined_sine_coefficients

SCHEMES = ("amplitude_truncation", "modal_projection")


@dataclass(frozen=True, eq=False)
class RoughData:
    """u0 given by ``formula`` on (0, length), integrable to the power ``q``.

    ``kinks(level)`` lists the points where |u0| crosses ``level``; they are
    used as quadrature breakpoints for clamped data.  ``in_l2`` says whether
    the data are square integrable (None: decide numerically).
    """

    formula: object
    q: float
    singular_points: tuple = ()
    name: str = "custom"
    length: float = np.pi
    kinks: object = None
    in_l2: bool | None = None
    bound: float = np.inf
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.q >= 1:
            raise DomainError(f"integrability exponent needs q >= 1, got {self.q}")
        if not np.isfinite(self.norm):
            raise DomainError(f"{self.name} is not in L^{self.q}")

    def __call__(self, x):
        return self.formula(np.asarray(x, dtype=float))

    @cached_property
    def norm(self):
        return self.lq(self.q)

    def lq(self, p):
        with np.errstate(all="ignore"):
            return refined_lq(self, p, self.length, self.singular_points)

    def level_breakpoints(self, level):
        return tuple(self.kinks(level)) if self.kinks is not None else ()

    def square_integrable(self):
        if self.in_l2 is not None:
            return self.in_l2
        with np.errstate(all="ignore"):
            a = refined_lq(self, 2, self.length, self.singular_points, depth=40)
            b = refined_lq(self, 2, self.length, self.singular_points, depth=80)
        return bool(np.isfinite(a) and np.isfinite(b) and abs(a - b) <= 1e-6 * b)


def power_singularity(beta=0.25, q=1.0, length=np.pi):
    """u0(x) = x^(-beta), singular at the boundary point 0; needs beta q < 1."""
    if not 0 < beta * q < 1:
        raise DomainError(f"x^-{beta} is not in L^{q}: need 0 < beta q < 1")
    return RoughData(
        formula=lambda x: x ** (-beta),
        q=q,
        singular_points=(0.0,),
        name="power_singularity",
        length=length,
        kinks=lambda n: (n ** (-1.0 / beta),),
        in_l2=2 * beta < 1,
        params={"beta": beta},
    )


def sign_flip_singularity(beta=0.25, q=1.0, length=np.pi, center=None):
    """u0(x) = sign(x - c)|x - c|^(-beta): an interior singularity with a sign change."""
    if not 0 < beta * q < 1:
        raise DomainError(f"|x - c|^-{beta} is not in L^{q}: need 0 < beta q < 1")
    c = 0.4713 * length if center is None else float(center)
    return RoughData(
        formula=lambda x: np.sign(x - c) * np.abs(x - c) ** (-beta),
        q=q,
        singular_points=(c,),
        name="sign_flip_singularity",
        length=length,
        kinks=lambda n: (c - n ** (-1.0 / beta), c + n ** (-1.0 / beta)),
        in_l2=2 * beta < 1,
        params={"beta": beta, "center": c},
    )


def smooth(amplitudes=(1.0, 0.5, 0.25), q=2.0, length=np.pi):
    """Sine packet sum_k a_k sin(k pi x / l)."""
    amps = tuple(float(a) for a in amplitudes)

    def packet(x):
        return sum(a * np.sin((k + 1) * np.pi * x / length) for k, a in enumerate(amps))

    return RoughData(
        formula=packet,
        q=q,
        name="smooth",
        length=length,
        in_l2=True,
        bound=float(np.sum(np.abs(amps))),
        params={"modes": len(amps)},
    )


ROUGH_REGISTRY = {
    "power_singularity": power_singularity,
    "sign_flip_singularity": sign_flip_singularity,
    "smooth": smooth,
}


@dataclass(frozen=True, eq=False)
class Mollified:
    """The level-n smooth approximation of rough data, evaluable anywhere."""

    data: RoughData
    level: int
    scheme: str
    modal: np.ndarray | None = None
    basis: object = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.scheme == "amplitude_truncation":
            with np.errstate(all="ignore"):
                return np.clip(self.data(x), -self.level, self.level)
        return self.basis.evaluate(self.modal, x)

    @property
    def breakpoints(self):
        if self.scheme == "amplitude_truncation":
            return self.data.level_breakpoints(self.level)
        return ()

    def coefficients(self, basis):
        """L2 projection onto ``basis`` by refined quadrature of the closed form."""
        if self.scheme == "modal_projection":
            if basis is self.basis:
                return self.modal.copy()
            raise StructuralError("modal mollification is tied to the basis it was built on")
        return refined_sine_coefficients(
            self, basis, self.data.singular_points, self.breakpoints
        )

    def abs_coefficients(self, basis):
        """L2 projection of |u0^n|; identical to ``coefficients`` for nonnegative data."""
        if self.scheme == "modal_projection":
            raise SchemeError("|u0^n| of a modal projection has no closed-form breakpoints")
        return refined_sine_coefficients(
            lambda x: np.abs(self(x)), basis, self.data.singular_points, self.breakpoints
        )


def _check_interval(data, domain):
    if domain.dim != 1 or not np.isclose(domain.extent[0], data.length):
        raise StructuralError("rough data are defined on the interval of the same length")


def mollify_data(u0, n, scheme, basis):
    if n < 1:
        raise DomainError("mollification level must be at least 1")
    if scheme not in SCHEMES:
        raise SchemeError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    _check_interval(u0, basis.domain)
    if scheme == "amplitude_truncation":
        return Mollified(u0, int(n), scheme)
    if not u0.square_integrable():
        raise SchemeError(f"{u0.name} is not square integrable; modal projection does not apply")
    if n > basis.count:
        raise SchemeError(f"level {n} exceeds the {basis.count} retained modes")
    exact = refined_sine_coefficients(u0, basis, u0.singular_points)
    exact[int(n):] = 0.0
    return Mollified(u0, int(n), scheme, modal=exact, basis=basis)


def mollify(u0, n, scheme, basis):
    """Grid samples of the level-n mollification.

    Amplitude truncation samples clamp(u0, -n, n) at the nodes; modal
    projection synthesizes the first n exact sine coefficients.
    """
    mol = mollify_data(u0, n, scheme, basis)
    if scheme == "amplitude_truncation":
        return GridFunction(basis.domain, mol(basis.domain.axes[0]))
    return basis.synthesize(mol.modal)


@dataclass(eq=False)
class ApproximationFamily:
    scheme: str
    levels: tuple
    data: RoughData
    mollified: list
    initial_fields: list
    trajectories: list
    _cache: dict = field(default_factory=dict, repr=False)

    def exact_distance(self, i, j, q):
        """Refined-quadrature L^q distance between the level-i and level-j data."""
        key = (min(i, j), max(i, j), float(q))
        if key not in self._cache:
            a, b = self.mollified[i], self.mollified[j]
            self._cache[key] = _closed_form_distance(a, b, q)
        return self._cache[key]

    def initial_error(self, i, q):
        """||u0^n - u0||_q by refined quadrature."""
        mol = self.mollified[i]
        return _closed_form_distance(mol, self.data, q)


def _closed_form_distance(a, b, q):
    data = a.data
    bps = tuple(getattr(a, "breakpoints", ()) or ()) + tuple(getattr(b, "breakpoints", ()) or ())
    panels = 256
    for m in (a, b):
        if getattr(m, "modal", None) is not None:
            panels = max(panels, 4 * m.level)
    with np.errstate(all="ignore"):
        return refined_lq(
            lambda x: a(x) - b(x), q, data.length, data.singular_points, bps, panels=panels
        )


def run_family(problem, u0, levels, T, h=None, scheme="amplitude_truncation",
               q=None, t_first=None, integrator_scheme="exp_euler", workers=1):
    """Approximating solutions u_n started from the level-n mollified data."""
    op, rd = problem
    levels = tuple(int(n) for n in levels)
    if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError(f"levels must be strictly increasing with >= 2 entries, got {levels}")
    _check_interval(u0, op.domain)
    q = u0.q if q is None else q
    t_first = 1e-4 * T if t_first is None else t_first
    mols = [mollify_data(u0, n, scheme, op.basis) for n in levels]

    def one(mol):
        a0 = mol.coefficients(op.basis)
        traj = integrate(op, rd, a0, T, h, scheme=integrator_scheme, q=q, t_first=t_first)
        traj.meta.update({"level": mol.level, "mollification": scheme, "data": u0.name})
        return traj

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(one, mols))
    else:
        trajs = [one(m) for m in mols]
    fields = [t.state(0) for t in trajs]
    return ApproximationFamily(scheme, levels, u0, mols, fields, trajs)


def _grid_distance(ta, tb, q):
    if len(ta) != len(tb) or not np.array_equal(ta.times, tb.times):
        raise StructuralError("trajectories must share their time grid")
    out = np.empty(len(ta))
    for sl, va in ta.iter_values():
        vb = tb.space.to_values(tb.coeffs[sl])
        out[sl] = lq_norms(va - vb, ta.domain, q)
    return out


def pair_distances(family, i, j, q):
    """sup-in-time trace of ||u_i(t) - u_j(t)||_q with the exact value at t = 0."""
    d = _grid_distance(family.trajectories[i], family.trajectories[j], q)
    d[0] = family.exact_distance(i, j, q)
    return d


def cauchy_report(family, q, lam, uniformity=1.1):
    """Ratios ||u_n(t) - u_k(t)||_q / (e^{-lam t} ||u0^n - u0^k||_q) over all pairs."""
    if len(family.levels) < 2:
        raise ValueError("need at least two levels")
    times = family.trajectories[0].times
    decay = np.exp(-lam * times)
    pairs, notes = [], []
    for i in range(len(family.levels)):
        for j in range(i + 1, len(family.levels)):
            n, k = family.levels[i], family.levels[j]
            d0 = family.exact_distance(i, j, q)
            if not d0 > 0:
                notes.append(f"pair ({n},{k}) skipped: identical initial data")
                continue
            d = pair_distances(family, i, j, q)
            ratio = d / (decay * d0)
            w = int(np.argmax(ratio))
            pairs.append({
                "n": n, "k": k, "initial_distance": d0, "sup_distance": float(d.max()),
                "c": float(ratio[w]), "t_worst": float(times[w]),
                "consecutive": j == i + 1,
            })
    if not pairs:
        notes.append("all pairs skipped; the family is constant")
        return BoundReport("cauchy_contraction", True, 0.0,
                           fitted_constants={"c": 1.0, "lambda": float(lam)},
                           notes=notes, metadata={"pairs": []})
    cs = np.array([p["c"] for p in pairs])
    c_max, c_med = float(cs.max()), float(np.median(cs))
    uniform = np.isfinite(c_max) and c_max <= uniformity * c_med
    chain = [p for p in pairs if p["consecutive"]]
    sups = np.array([p["sup_distance"] for p in chain])
    decaying = bool(np.all(np.diff(sups) < 0))
    ok = uniform and decaying
    witnesses = []
    if not uniform:
        worst = pairs[int(np.argmax(cs))]
        witnesses.append({"pair": (worst["n"], worst["k"]), "t": worst["t_worst"], "c": worst["c"]})
    if not decaying:
        bad = int(np.argmax(np.diff(sups) >= 0))
        witnesses.append({"pair": (chain[bad + 1]["n"], chain[bad + 1]["k"]),
                          "sup_distance": float(sups[bad + 1]),
                          "previous": float(sups[bad])})
    return BoundReport(
        name="cauchy_contraction",
        verdict=ok,
        worst_margin=c_max / c_med - uniformity,
        witnesses=witnesses,
        fitted_constants={"c": c_max, "c_median": c_med, "lambda": float(lam)},
        notes=notes,
        metadata={"pairs": pairs, "q": q, "scheme": family.scheme},
    )


def extract_limit(family, report):
    """Top-level trajectory plus a Cauchy-tail error estimate."""
    if not report.passed:
        raise RefusalError("Cauchy verdict failed; refusing to extract a limit", report)
    top = len(family.levels) - 1
    half = family.levels[top] // 2
    lower = family.levels.index(half) if half in family.levels else top - 1
    q = report.metadata.get("q", family.data.q)
    d0 = family.exact_distance(lower, top, q)
    estimate = 0.0 if d0 == 0 else float(pair_distances(family, lower, top, q).max())
    return family.trajectories[top], estimate
