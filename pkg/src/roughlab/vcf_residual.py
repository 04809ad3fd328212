"""Variation-of-constants residual of a computed trajectory.

For stored instants t >= epsilon the residual is

    u(t) - S_m(t - eps) u(eps) - int_eps^t S_m(t - s) (g + f0(u(s))) ds.

The forcing h(s) = g + f0(u(s)) is interpolated linearly in time between
stored instants, in modal coefficients, and the integral of the semigroup
against that interpolant is evaluated exactly on every interval with the
phi_1 / phi_2 functions of the generator.  Stiff high modes therefore add
no quadrature error, and the residual measures only how far the stored
states are from satisfying the identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InsufficientDataError
from .integrator import Trajectory
from .spectral_core import lq_norms

MIN_QUAD_NODES = 8


@dataclass(eq=False)
class ResidualTrace:
    """Residual norms at the stored instants t >= epsilon."""

    times: np.ndarray
    residual_norms: np.ndarray
    residual_l2: np.ndarray
    quadrature_order: int
    q: float
    epsilon: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.residual_norms < 0) or np.any(self.residual_l2 < 0):
            raise ValueError("residual norms are nonnegative")

    @property
    def sup(self):
        return float(self.residual_norms.max())

    @property
    def sup_l2(self):
        return float(self.residual_l2.max())

    def relative(self, traj):
        """Residuals scaled by 1 + ||u(t)||_q at the same instants."""
        idx = np.searchsorted(traj.times, self.times)
        return self.residual_norms / (1.0 + traj.lq[idx])


def vcf_residual(u, op, rd, epsilon, quad_nodes=MIN_QUAD_NODES):
    """Residual of the Duhamel identity started at ``epsilon``.

    ``epsilon`` is moved up to the first stored instant at or after it.
    ``quad_nodes`` is the minimum number of stored instants (interpolation
    nodes) that must lie in [epsilon, T]; sparser trajectories are refused.
    """
    if quad_nodes < MIN_QUAD_NODES:
        raise DomainError(f"quad_nodes must be at least {MIN_QUAD_NODES}")
    first_positive = u.times[1] if len(u) > 1 else np.inf
    if epsilon < first_positive * (1 - 1e-12):
        raise DomainError(f"epsilon={epsilon:g} precedes the first stored instant {first_positive:g}")
    start = int(np.searchsorted(u.times, epsilon * (1 - 1e-12)))
    if len(u) - start < quad_nodes:
        raise InsufficientDataError(
            f"{len(u) - start} stored instants in [{epsilon:g}, {u.times[-1]:g}]; need {quad_nodes}"
        )
    times = u.times[start:]
    states = u.coeffs[start:]
    forcing = op.from_values(rd.forcing(op.to_values(states)))

    w = np.empty_like(states)
    w[0] = states[0]
    for i in range(len(times) - 1):
        dt = times[i + 1] - times[i]
        w[i + 1] = (op.propagate(dt, w[i]) + dt * op.phi(dt, forcing[i], 1)
                    + dt * op.phi(dt, forcing[i + 1] - forcing[i], 2))
    defect = op.to_values(states - w)
    res_q = lq_norms(defect, u.domain, u.q)
    res_2 = lq_norms(defect, u.domain, 2.0)
    return ResidualTrace(
        times=times.copy(),
        residual_norms=res_q,
        residual_l2=res_2,
        quadrature_order=len(times),
        q=u.q,
        epsilon=float(times[0]),
        meta={"scheme": u.meta.get("scheme"), "h": u.meta.get("h")},
    )


def perturb_trajectory(u, index, amplitude=0.01):
    """Copy of ``u`` with amplitude * (first L2-normalized Dirichlet eigenfunction) added at one instant."""
    basis = getattr(u.space, "basis", None)
    if basis is None:
        raise DomainError("perturbation needs a Galerkin trajectory")
    coeffs = u.coeffs.copy()
    coeffs[index, 0] += amplitude
    traj = Trajectory(u.times.copy(), coeffs, u.space, u.q, u.lq.copy(), u.linf.copy(), dict(u.meta))
    values = u.space.to_values(coeffs[index : index + 1])
    traj.lq[index] = lq_norms(values, u.domain, u.q)[0]
    traj.linf[index] = lq_norms(values, u.domain, np.inf)[0]
    return traj


def refinement_order(coarse, fine, ratio=2.0):
    """Observed order from the sup residuals of two runs with step ratio ``ratio``."""
    return float(np.log(coarse.sup / fine.sup) / np.log(ratio))
