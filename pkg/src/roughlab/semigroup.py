"""Semigroups generated by Laplacian + c(x) with Dirichlet conditions.

Two discretizations share one interface.  :class:`PerturbedOperator` is the
Galerkin projection onto the sine eigenbasis (state = modal coefficients);
:class:`FiniteDifferenceOperator` is the second-order finite-difference
matrix on the nodes (state = nodal values) and serves as an independent
cross-check.  Both factorize their symmetric generator once, after which
``exp(tA)``, ``phi_k(hA)`` and shifted solves are diagonal scalings.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .errors import DomainError, ResolutionError, ResolutionWarning, StructuralError
from .spectral_core import GridFunction, dirichlet_eigenpairs

ASYMMETRY_WARN = 1e-8
PHI_SERIES_CUTOFF = {1: 1e-5, 2: 1e-2}


def phi_function(z, k=1):
    """phi_0 = exp, phi_1 = (e^z - 1)/z, phi_2 = (e^z - 1 - z)/z^2, elementwise."""
    z = np.asarray(z, dtype=float)
    if k == 0:
        return np.exp(z)
    small = np.abs(z) < PHI_SERIES_CUTOFF[k]
    zs = np.where(small, 0.0, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        if k == 1:
            direct = np.expm1(zs) / zs
            series = 1.0 + z / 2.0 + z * z / 6.0 + z**3 / 24.0
        elif k == 2:
            direct = (np.expm1(zs) - zs) / (zs * zs)
            series = 0.5 + z / 6.0 + z**2 / 24.0 + z**3 / 120.0 + z**4 / 720.0 + z**5 / 5040.0
        else:
            raise ValueError(f"phi_{k} is not provided")
    return np.where(small, series, direct)


class _Spectral:
    """Shared machinery: a symmetric generator A = Q diag(nu) Q^T."""

    _nu: np.ndarray
    _Q: np.ndarray | None

    @property
    def eigenvalues(self):
        """Spectrum of the generator, largest first."""
        return np.sort(self._nu)[::-1]

    @property
    def nu_max(self):
        return float(self._nu.max())

    def _in(self, a):
        return a if self._Q is None else a @ self._Q

    def _out(self, b):
        return b if self._Q is None else b @ self._Q.T

    def _scaled(self, weights, a):
        return self._out(weights * self._in(np.asarray(a, dtype=float)))

    def propagate(self, t, a):
        """exp(tA) a on native state vectors (last axis)."""
        if t < 0:
            raise DomainError("the semigroup is defined for t >= 0 only")
        if t == 0:
            return np.array(a, dtype=float)
        return self._scaled(np.exp(t * self._nu), a)

    def phi(self, h, a, k=1):
        if h <= 0:
            raise DomainError("phi actions need a positive step")
        return self._scaled(phi_function(h * self._nu, k), a)

    def propagate_batch(self, ts, a):
        """exp(t_i A) a for several times; returns shape (len(ts), dim)."""
        ts = np.asarray(ts, dtype=float)
        if np.any(ts < 0):
            raise DomainError("the semigroup is defined for t >= 0 only")
        return self._out(np.exp(np.outer(ts, self._nu)) * self._in(np.asarray(a, dtype=float)))

    def shifted_solve(self, h, a):
        """(I - hA)^{-1} a; needs 1 - h nu_max > 0."""
        denom = 1.0 - h * self._nu
        if np.any(denom <= 0):
            raise DomainError(
                f"I - hA is not positive definite for h={h:g}; need h < {1.0 / self.nu_max:g}"
            )
        return self._scaled(1.0 / denom, a)

    # grid-level wrappers

    def apply(self, t, v):
        if t == 0:
            return v
        return self.to_grid(self.propagate(t, self.from_grid(v)))

    def apply_phi1(self, h, v):
        return self.to_grid(self.phi(h, self.from_grid(v), 1))


class PerturbedOperator(_Spectral):
    """Galerkin matrix -diag(mu) + (<c phi_k, phi_j>) on the retained eigenbasis."""

    backend = "galerkin"

    def __init__(self, basis, potential):
        if potential.domain != basis.domain:
            raise StructuralError("potential and basis live on different domains")
        self.basis = basis
        self.domain = basis.domain
        self.potential = potential
        c = potential.values
        K = basis.count
        self.asymmetry = 0.0
        if np.ptp(c) == 0.0:
            # constant potential: the projected multiplication is c * I exactly
            self._matrix = None
            self._nu = c.flat[0] - basis.eigenvalues
            self._Q = None
            self.factorization_residual = 0.0
            return
        Phi = basis.matrix
        M = Phi.T @ (Phi * (c.reshape(-1, 1) * self.domain.cell_volume))
        scale = max(np.abs(M).max(), 1e-300)
        self.asymmetry = float(np.abs(M - M.T).max() / scale)
        if self.asymmetry > ASYMMETRY_WARN:
            warnings.warn(
                f"quadrature asymmetry {self.asymmetry:.2e} before symmetrization",
                ResolutionWarning,
                stacklevel=2,
            )
        A = 0.5 * (M + M.T) - np.diag(basis.eigenvalues)
        nu, Q = eigh(A)
        self._matrix = A
        self._nu, self._Q = nu, Q
        norm = max(np.abs(A).max(), 1e-300)
        self.factorization_residual = float(
            np.abs(A - (Q * nu) @ Q.T).max() / norm
        ) if K <= 2048 else float("nan")

    @property
    def matrix(self):
        """Dense generator; built on demand in the diagonal case."""
        if self._matrix is None:
            return np.diag(self._nu)
        return self._matrix

    @property
    def dim(self):
        return self.basis.count

    def from_grid(self, v):
        return self.basis.to_modes(v)

    def from_values(self, values):
        return self.basis.project_values(values)

    def to_grid(self, a):
        return self.basis.synthesize(a)

    def to_values(self, a):
        return self.basis.synthesize_values(a)


class FiniteDifferenceOperator(_Spectral):
    """Second-order finite differences for Laplacian + c on the interior nodes."""

    backend = "fd"

    def __init__(self, domain, potential):
        if potential.domain != domain:
            raise StructuralError("potential lives on a different domain")
        self.domain = domain
        self.potential = potential
        lap = None
        for axis, (n, hx) in enumerate(zip(domain.nodes, domain.spacing)):
            T = (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1)
                 + np.diag(np.ones(n - 1), -1)) / hx**2
            if domain.dim == 1:
                lap = T
            else:
                other = domain.nodes[1 - axis]
                term = np.kron(T, np.eye(other)) if axis == 0 else np.kron(np.eye(other), T)
                lap = term if lap is None else lap + term
        A = lap + np.diag(potential.values.ravel())
        nu, Q = eigh(A)
        self.matrix = A
        self._nu, self._Q = nu, Q
        self.factorization_residual = float(
            np.abs(A - (Q * nu) @ Q.T).max() / np.abs(A).max()
        )

    @property
    def dim(self):
        return self.domain.size

    def from_grid(self, v):
        if v.domain != self.domain:
            raise StructuralError("grid function lives on a different domain")
        return v.values.ravel().copy()

    def from_values(self, values):
        values = np.asarray(values, dtype=float)
        return values.reshape(values.shape[: values.ndim - self.domain.dim] + (-1,))

    def to_grid(self, a):
        return GridFunction(self.domain, np.asarray(a).reshape(self.domain.shape))

    def to_values(self, a):
        a = np.asarray(a)
        return a.reshape(a.shape[:-1] + self.domain.shape)


def assemble(domain, c, K):
    """Galerkin generator of the semigroup for Laplacian + c with K modes."""
    return PerturbedOperator(dirichlet_eigenpairs(domain, K), c)


def assemble_fd(domain, c):
    return FiniteDifferenceOperator(domain, c)


def apply_semigroup(op, t, v):
    if t < 0:
        raise DomainError("the semigroup is defined for t >= 0 only")
    return op.apply(t, v)


def phi1_apply(op, h, v):
    if h <= 0:
        raise DomainError("phi_1 needs a positive step")
    return op.apply_phi1(h, v)


@dataclass(frozen=True)
class PrincipalEigenvalue:
    """lambda = -(top of the generator spectrum), with a K-refinement error."""

    value: float
    error: float
    K: int
    K_check: int

    def __float__(self):
        return self.value


def principal_eigenvalue(domain, c, K, rtol=1e-4):
    """First eigenvalue of -Laplacian - c, checked against a 2K (or K/2) assembly."""
    K = int(K)
    limit = domain.size
    lam = -assemble(domain, c, K).nu_max
    K_check = 2 * K if 2 * K <= limit else max(1, K // 2)
    if K_check == K:
        return PrincipalEigenvalue(lam, 0.0, K, K)
    lam_check = -assemble(domain, c, K_check).nu_max
    err = abs(lam - lam_check)
    if err > rtol * (1.0 + abs(lam)):
        raise ResolutionError(
            f"principal eigenvalue not converged: K={K} gives {lam:.10g}, "
            f"K={K_check} gives {lam_check:.10g}"
        )
    return PrincipalEigenvalue(lam, err, K, K_check)
