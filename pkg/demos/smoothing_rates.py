"""Measure how fast concentrated data spread out in one and two dimensions.

A narrow Gaussian bump of unit mass is released under the heat flow.  Its
peak decays like t^(-N/2) until the bump feels the boundary, so the fitted
log-log slope of ||u(t)||_inf over early times should sit near -1/2 on the
interval and near -1 on the square.

    python demos/smoothing_rates.py
"""
import numpy as np

from roughlab.coefficient_fields import linear
from roughlab.comparison_lab import required_exponent, smoothing_exponent_fit
from roughlab.harness import gaussian_bump
from roughlab.integrator import integrate
from roughlab.semigroup import assemble
from roughlab.spectral_core import DomainSpec


def main():
    domains = {1: DomainSpec.interval(np.pi, 511), 2: DomainSpec.rectangle((np.pi, np.pi), (127, 127))}
    window = (1e-3, 1e-1)
    for N, domain in domains.items():
        op = assemble(domain, domain.zeros(), domain.size // 2**N)
        u = integrate(op, linear(domain), gaussian_bump(domain, 0.045), 10.0, q=1.0, t_first=1e-3)
        print(f"N = {N}: {domain.size} nodes, {op.basis.count} modes")
        for p in (2.0, np.inf):
            rep = smoothing_exponent_fit(u, 1.0, p, window)
            print(f"  p = {p:g}: fitted slope {rep.fitted_constants['slope']:+.4f}, "
                  f"heat-kernel rate {-required_exponent(N, 1.0, p):+.4f}, verdict "
                  f"{'pass' if rep.passed else 'fail'}")
        for t in (1e-3, 1e-2, 1e-1, 1.0):
            i = int(np.argmin(np.abs(u.times - t)))
            print(f"    t = {u.times[i]:.4g}: ||u||_inf = {u.linf[i]:.5f}")


if __name__ == "__main__":
    main()
