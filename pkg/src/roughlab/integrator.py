"""Exponential time stepping for u_t = Laplacian u + m u + g + f0(u).

The linear part (Laplacian + m) lives in the operator's factorization and is
propagated exactly; the forcing g + f0(u) is evaluated at the nodes and
projected back each step.  ``reference_solve`` is a semi-implicit backward
Euler scheme used only as an independent oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpError, DomainError
from .spectral_core import GridFunction, lq_norms

SCHEMES = ("exp_euler", "exp_rk2")
MAX_STORED = 2048


@dataclass(eq=False)
class Trajectory:
    """Stored states of one run, kept as native state vectors of ``space``."""

    times: np.ndarray
    coeffs: np.ndarray
    space: object
    q: float
    lq: np.ndarray
    linf: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must start at 0 and increase strictly")
        if len(self.coeffs) != len(self.times):
            raise ValueError("one state per stored time is required")

    def __len__(self):
        return len(self.times)

    @property
    def domain(self):
        return self.space.domain

    def values(self, i):
        return self.space.to_values(self.coeffs[i])

    def state(self, i):
        return GridFunction(self.domain, self.values(i))

    @property
    def states(self):
        return [self.state(i) for i in range(len(self))]

    @property
    def final(self):
        return self.state(-1)

    def iter_values(self, chunk=64):
        """Yield (slice, nodal values) in chunks to bound memory in 2D."""
        for start in range(0, len(self), chunk):
            sl = slice(start, min(start + chunk, len(self)))
            yield sl, self.space.to_values(self.coeffs[sl])

    def norms(self, p):
        out = np.empty(len(self))
        for sl, vals in self.iter_values():
            out[sl] = lq_norms(vals, self.domain, p)
        return out

    def index_of(self, t, rtol=1e-12):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > rtol * max(1.0, abs(t)):
            raise KeyError(f"time {t} is not stored")
        return i


def time_grid(T, h, t_first=None, growth=1.25):
    """Uniform steps of size h, optionally preceded by geometric steps from t_first.

    Returns (times, early) where ``early`` flags the geometric start-up points.
    """
    if T <= 0 or h <= 0 or h > T:
        raise DomainError(f"need T > 0 and 0 < h <= T, got T={T}, h={h}")
    n = T / h
    n_steps = int(round(n)) if abs(n - round(n)) < 1e-9 * n else int(np.ceil(n))
    uniform = np.minimum(h * np.arange(1, n_steps + 1), T)
    uniform[-1] = T
    early = np.empty(0)
    if t_first is not None and 0 < t_first < h:
        count = int(np.floor(np.log(h / t_first) / np.log(growth))) + 1
        early = t_first * growth ** np.arange(count)
        early = early[early < h * (1.0 - 1e-3)]
    times = np.concatenate([[0.0], early, uniform])
    flags = np.zeros(times.size, dtype=bool)
    flags[1 : 1 + early.size] = True
    return times, flags


def store_mask(n_times, early, max_store=MAX_STORED):
    """Keep everything for short runs; otherwise all early points plus a stride."""
    if n_times <= max_store:
        return np.ones(n_times, dtype=bool)
    keep = early.copy()
    keep[0] = keep[-1] = True
    budget = max_store - int(keep.sum())
    rest = np.flatnonzero(~keep)
    stride = int(np.ceil(rest.size / max(budget, 1)))
    keep[rest[::stride]] = True
    return keep


def default_step(T, rd):
    """h = min(T/200, 1/(4 |m + L|_inf))."""
    cmax = float(np.max(np.abs(rd.m.values + rd.L.values)))
    h = T / 200.0
    return min(h, 1.0 / (4.0 * cmax)) if cmax > 0 else h


def _initial_state(op, u0):
    if isinstance(u0, GridFunction):
        return op.from_grid(u0)
    a = np.array(u0, dtype=float)
    if a.shape != (op.dim,):
        raise ValueError(f"initial state vector must have length {op.dim}")
    return a


def _finish(times, stored, space, q, meta):
    coeffs = np.asarray(stored)
    traj = Trajectory(times, coeffs, space, float(q), np.empty(0), np.empty(0), meta)
    traj.lq = traj.norms(q)
    traj.linf = traj.norms(np.inf)
    return traj


def integrate(op, rd, u0, T, h=None, scheme="exp_euler", q=2.0, t_first=None,
              growth=1.25, max_store=MAX_STORED):
    """Exponential Euler or two-stage exponential Runge-Kutta (ETD2RK) run.

    ``u0`` is a GridFunction or a native state vector of ``op``.  With
    ``t_first`` the run starts with geometrically growing steps so that
    early times are resolved on a logarithmic scale.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    h = default_step(T, rd) if h is None else float(h)
    times, early = time_grid(T, h, t_first, growth)
    keep = store_mask(times.size, early, max_store)
    a = _initial_state(op, u0)
    if not np.all(np.isfinite(a)):
        raise DomainError("initial data must be finite")

    linear = rd.is_linear and not np.any(rd.g.values)

    def forcing(state):
        return op.from_values(rd.forcing(op.to_values(state)))

    stored = [a]
    for i in range(1, times.size):
        dt = times[i] - times[i - 1]
        if linear:
            a = op.propagate(dt, a)
        else:
            Fa = forcing(a)
            nxt = op.propagate(dt, a) + dt * op.phi(dt, Fa, 1)
            if scheme == "exp_rk2":
                nxt = nxt + dt * op.phi(dt, forcing(nxt) - Fa, 2)
            a = nxt
        if not np.all(np.isfinite(a)):
            raise BlowUpError(
                f"non-finite state after t={times[i - 1]:g}; reduce h or check admissibility",
                times[i - 1],
            )
        if keep[i]:
            stored.append(a)
    meta = {"scheme": scheme, "h": h, "t_first": t_first, "backend": op.backend,
            "nonlinearity": rd.describe()}
    return _finish(times[keep], stored, op, q, meta)


def reference_solve(op, rd, u0, T, h_ref, q=2.0, max_store=MAX_STORED):
    """Semi-implicit backward Euler: (I - h A) u_{n+1} = u_n + h (g + f0(u_n))."""
    if 1.0 - h_ref * op.nu_max <= 0:
        raise DomainError(f"h_ref={h_ref:g} too large: I - hA must be positive definite")
    times, early = time_grid(T, h_ref)
    keep = store_mask(times.size, early, max_store)
    a = _initial_state(op, u0)
    stored = [a]
    for i in range(1, times.size):
        dt = times[i] - times[i - 1]
        rhs = a + dt * op.from_values(rd.forcing(op.to_values(a)))
        a = op.shifted_solve(dt, rhs)
        if not np.all(np.isfinite(a)):
            raise BlowUpError(f"reference solve diverged after t={times[i - 1]:g}", times[i - 1])
        if keep[i]:
            stored.append(a)
    meta = {"scheme": "backward_euler", "h": h_ref, "backend": op.backend,
            "nonlinearity": rd.describe()}
    return _finish(times[keep], stored, op, q, meta)


def extrapolated_reference(op, rd, u0, T, h_ref):
    """Richardson combination 2 u(h/2) - u(h) of two backward-Euler runs (final state)."""
    coarse = reference_solve(op, rd, u0, T, h_ref, max_store=2)
    fine = reference_solve(op, rd, u0, T, h_ref / 2, max_store=2)
    return 2.0 * fine.coeffs[-1] - coarse.coeffs[-1]
