"""Scenario orchestration and report emission.

``run_scenario`` turns a validated :class:`ScenarioConfig` into a list of
BoundReports plus the traces and pair tables behind them, and writes
``traces.csv``, ``pairs.csv``, ``bounds.csv`` and ``manifest.txt``.  CSV
bodies depend only on the configuration; wall-clock times and the date are
confined to the manifest.
"""
from __future__ import annotations

import csv
import io
import logging
import os
import platform
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .coefficient_fields import (
    admissibility_check,
    linear,
    make_custom,
    make_fractional_polynomial,
    make_logistic,
    make_monotone_polynomial,
    sign_condition_fields,
)
from .comparison_lab import (
    linfty_bound_check,
    semigroup_boundedness_report,
    smoothing_exponent_fit,
    solve_majorant,
    supersolution_check,
    uniqueness_probe,
)
from .config import ConfigError, critical_exponent, emit_config
from .errors import AdmissibilityError, ConsistencyError, RoughlabError
from .integrator import integrate
from .reports import BoundReport
from .rough_driver import ROUGH_REGISTRY, cauchy_report, extract_limit, run_family
from .semigroup import assemble, assemble_fd, principal_eigenvalue
from .spectral_core import DomainSpec, lq_norm
from .vcf_residual import perturb_trajectory, vcf_residual

log = logging.getLogger("roughlab")

OUT_ENV = "ROUGHLAB_OUT"
DEFAULT_OUT = "roughlab_out"
EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

HEAT_TOL = 1e-8
FD_TOL = 1e-4
EIGEN_TOL = 1e-10
VCF_ORDER_MIN = 0.8
DETECTOR_AMPLITUDE = 1e-2
DETECTOR_THRESHOLD = 9e-3
FD_MAX_NODES = 4096
SUPERCRITICAL_LOGISTIC = {"name": "logistic", "n": 1.0, "rho": 5.0, "m": 0.0, "g": 0.0}


def fmt(x):
    """17 significant digits: bit-stable decimal text for doubles."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


@dataclass
class RunResult:
    """Everything one run produced, in emission order."""

    config: object
    reports: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    stage_times: list = field(default_factory=list)
    facts: list = field(default_factory=list)
    error: str | None = None

    def add(self, stage, report):
        log.info("%s %s", stage, report.summary())
        self.reports.append((stage, report))

    @property
    def passed(self):
        return all(r.passed for _, r in self.reports)

    @property
    def exit_code(self):
        if self.error is not None:
            return EXIT_NUMERIC
        return EXIT_OK if self.passed else EXIT_VERDICT


# problem construction --------------------------------------------------------

def build_domain(cfg, dim=None):
    dim = cfg.domain["dim"] if dim is None else dim
    length = cfg.domain["length"]
    if dim == cfg.domain["dim"]:
        nodes = cfg.domain["nodes"]
    else:
        nodes = cfg.numerics["nodes_2d"] if dim == 2 else 511
    if dim == 1:
        return DomainSpec.interval(length, nodes)
    return DomainSpec.rectangle((length, length), (nodes, nodes))


def modes_for(cfg, domain):
    if domain.dim == cfg.domain["dim"] and domain.nodes == (cfg.domain["nodes"],) * domain.dim:
        return cfg.numerics["K"]
    return domain.size // 2 ** domain.dim


def build_reaction(cfg, domain, override=None):
    """ReactionDecomposition for the configured nonlinearity with constant fields."""
    nl = dict(cfg.nonlinearity if override is None else override)
    g, m = domain.constant(nl["g"]), domain.constant(nl["m"])
    name = nl["name"]
    if name == "none":
        return linear(domain, g, m)
    if name == "logistic":
        return make_logistic(domain.constant(nl["n"]), nl["rho"], g, m)
    if name == "monotone_poly":
        coeffs = {j: domain.constant(v) for j, v in nl["coefficients"]}
        return make_monotone_polynomial(coeffs, g, m)
    if name == "fractional_poly":
        return make_fractional_polynomial([domain.constant(v) for v in nl["ns"]], nl["rhos"], g, m)
    if name == "custom":
        a, p = nl["coefficient"], nl["power"]
        return make_custom(
            domain,
            value=lambda u: a * np.abs(u) ** (p - 1.0) * u,
            derivative=lambda u: a * p * np.abs(u) ** (p - 1.0),
            L=nl["lipschitz"],
            lipschitz=lambda R: abs(a) * p * R ** (p - 1.0),
            g=g,
            m=m,
        )
    raise ConfigError([f"unknown nonlinearity {name!r}"])


def build_rough(cfg, q=None):
    rd = dict(cfg.rough_data)
    name = rd.pop("name")
    q = rd.pop("q") if q is None else q
    rd.pop("q", None)
    kwargs = {k: v for k, v in rd.items() if v is not None}
    if name == "smooth":
        kwargs["amplitudes"] = tuple(kwargs["amplitudes"])
    return ROUGH_REGISTRY[name](q=q, length=cfg.domain["length"], **kwargs)


def check_step(cfg, rd):
    """Explicit h must respect h <= 1/(4 ||m + L||_inf)."""
    h = cfg.numerics["h"]
    if h is None:
        return
    cmax = float(np.max(np.abs(rd.m.values + rd.L.values)))
    if cmax > 0 and h > 1.0 / (4.0 * cmax) * (1 + 1e-12):
        raise ConfigError([f"h={h:g} exceeds the step bound 1/(4 |m + L|_inf) = {1.0 / (4.0 * cmax):g}"])


def prepare(cfg):
    """Build every object the scenario needs; construction errors are configuration errors."""
    try:
        domain = build_domain(cfg)
        rd = build_reaction(cfg, domain)
        check_step(cfg, rd)
        if cfg.scenario in ("cauchy_study", "majorant_study", "uniqueness_study",
                            "supercritical_demo", "full_suite"):
            if domain.dim != 1 and cfg.scenario != "full_suite":
                raise ConfigError([f"{cfg.scenario} uses interval rough data; set dim = 1"])
            data = build_rough(cfg)
            if cfg.scenario == "uniqueness_study" and not data.square_integrable():
                raise ConfigError([f"{data.name} is not square integrable; modal projection does not apply"])
            if max(cfg.numerics["levels"]) > modes_for(cfg, build_domain(cfg, 1)) and \
                    cfg.scenario in ("uniqueness_study", "full_suite"):
                raise ConfigError(["top level exceeds the retained modes for modal projection"])
    except (AdmissibilityError, ConsistencyError, RoughlabError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError([str(exc)]) from exc
    return domain, rd


# stages --------------------------------------------------------------------

def _trace(result, label, traj):
    result.traces.append((label, traj))


def stage_admissibility(result, rd, label):
    rep = admissibility_check(rd)
    rep.name = "almost_monotonicity"
    result.add(label, rep)


def stage_heat(result, cfg, domain):
    label = f"heat_sanity_N{domain.dim}"
    K = modes_for(cfg, domain)
    op = assemble(domain, domain.zeros(), K)
    mode = domain.sample(lambda *x: np.prod([np.sin(np.pi * xi / l) for xi, l in zip(x, domain.extent)], axis=0))
    mu1 = float(op.basis.eigenvalues[0])
    T = cfg.numerics["T"]
    u = integrate(op, linear(domain), mode, T, q=2.0, t_first=cfg.numerics["t_first"] * T)
    exact = mode * np.exp(-mu1 * T)
    err = lq_norm(u.final - exact, 2) / lq_norm(exact, 2)
    _trace(result, f"{label}/galerkin", u)
    result.add(label, BoundReport(
        "heat_mode_decay", err <= HEAT_TOL, err - HEAT_TOL,
        witnesses=[] if err <= HEAT_TOL else [{"t": T, "relative_error": err}],
        fitted_constants={"relative_l2_error": err, "tolerance": HEAT_TOL},
    ))
    if domain.size <= FD_MAX_NODES:
        fd = assemble_fd(domain, domain.zeros())
        v = fd.apply(T, mode)
        err_fd = lq_norm(v - exact, 2) / lq_norm(exact, 2)
        result.add(label, BoundReport(
            "heat_mode_decay_fd", err_fd <= FD_TOL, err_fd - FD_TOL,
            witnesses=[] if err_fd <= FD_TOL else [{"t": T, "relative_error": err_fd}],
            fitted_constants={"relative_l2_error": err_fd, "tolerance": FD_TOL},
        ))
    lam = principal_eigenvalue(domain, domain.zeros(), min(K, 64))
    gap = abs(lam.value - mu1)
    result.add(label, BoundReport(
        "principal_eigenvalue_heat", gap <= EIGEN_TOL, gap - EIGEN_TOL,
        witnesses=[] if gap <= EIGEN_TOL else [{"lambda": lam.value, "expected": mu1}],
        fitted_constants={"lambda": lam.value, "expected": mu1},
    ))


def stage_cauchy(result, cfg, domain, rd, data, label, scheme=None):
    K = modes_for(cfg, domain)
    op = assemble(domain, rd.m, K)
    scheme = cfg.numerics["mollification"] if scheme is None else scheme
    T = cfg.numerics["T"]
    family = run_family(
        (op, rd), data, cfg.numerics["levels"], T, h=cfg.numerics["h"], scheme=scheme,
        q=data.q, t_first=cfg.numerics["t_first"] * T,
        integrator_scheme=cfg.numerics["integrator"], workers=cfg.numerics["workers"],
    )
    lam = principal_eigenvalue(domain, rd.m + rd.L, K).value
    rep = cauchy_report(family, data.q, lam)
    if rep.passed:
        _, tail = extract_limit(family, rep)
        rep.fitted_constants["tail_estimate"] = tail
    result.add(label, rep)
    result.pairs.append((label, rep))
    for n, traj in zip(family.levels, family.trajectories):
        _trace(result, f"{label}/{scheme}/level={n}", traj)
    return op, family


def stage_majorant(result, family, op, rd, label):
    fields = sign_condition_fields(rd)
    for n, mol, traj in zip(family.levels, family.mollified, family.trajectories):
        a0 = mol.abs_coefficients(op.basis)
        signed = not np.array_equal(a0, mol.coefficients(op.basis))
        maj = solve_majorant(op.basis, fields.C, fields.D, a0, traj.times[-1], h=traj.meta["h"],
                             t_first=traj.meta["t_first"], q=traj.q)
        rep = supersolution_check(traj, maj.U, name=f"supersolution_level_{n}", skip_initial=signed)
        rep.fitted_constants["decomposition_error"] = maj.decomposition_error
        result.add(label, rep)
        _trace(result, f"{label}/majorant/level={n}", maj.U)


def stage_vcf(result, family, op, rd, epsilon_frac, label):
    base = family.trajectories[-1]
    T = float(base.times[-1])
    h = base.meta["h"]
    a0 = family.mollified[-1].coefficients(op.basis)
    runs = [base] + [
        integrate(op, rd, a0, T, h / 2**k, scheme=base.meta["scheme"], q=base.q, t_first=base.meta["t_first"])
        for k in (1, 2)
    ]
    eps = epsilon_frac * T
    traces = [vcf_residual(u, op, rd, eps, 8) for u in runs]
    sups = np.array([t.sup for t in traces])
    steps = np.array([u.meta["h"] for u in runs])
    order = float(np.polyfit(np.log(steps), np.log(sups), 1)[0])
    ok = order >= VCF_ORDER_MIN
    result.add(label, BoundReport(
        "vcf_residual_order", ok, VCF_ORDER_MIN - order,
        witnesses=[] if ok else [{"h": float(steps[-1]), "residual": float(sups[-1])}],
        fitted_constants={"order": order, "residual_h": sups[0], "residual_h2": sups[1], "residual_h4": sups[2]},
    ))
    fine = runs[-1]
    start = int(np.searchsorted(fine.times, traces[-1].epsilon))
    j = start + (len(fine) - start) // 2
    bumped = vcf_residual(perturb_trajectory(fine, j, DETECTOR_AMPLITUDE), op, rd, eps, 8)
    k = int(np.searchsorted(bumped.times, fine.times[j]))
    spike = float(bumped.residual_l2[k])
    ok = spike >= DETECTOR_THRESHOLD
    result.add(label, BoundReport(
        "vcf_defect_detector", ok, DETECTOR_THRESHOLD - spike,
        witnesses=[] if ok else [{"t": float(fine.times[j]), "spike": spike}],
        fitted_constants={"spike": spike, "baseline": float(traces[-1].residual_l2[k]),
                          "injected": DETECTOR_AMPLITUDE},
    ))


def gaussian_bump(domain, sigma, center=None):
    """Unit-L1-mass Gaussian bump centred in the domain."""
    center = [l / 2 for l in domain.extent] if center is None else center
    bump = domain.sample(lambda *x: np.exp(-sum((xi - c) ** 2 for xi, c in zip(x, center)) / (2 * sigma**2)))
    return bump * (1.0 / lq_norm(bump, 1))


def refine(domain):
    nodes = tuple(2 * n + 1 for n in domain.nodes)
    return DomainSpec(domain.dim, domain.extent, nodes)


def stage_smoothing(result, cfg, domain, rd_linear):
    label = f"smoothing_study_N{domain.dim}"
    T = cfg.numerics["smoothing_horizon"]
    sigma = cfg.numerics["bump_sigma"]
    window = (1e-4 * T, 1e-2 * T)
    fine = refine(domain)
    rd_fine = _linear_part(rd_linear, fine)
    op = assemble(domain, rd_linear.m, modes_for(cfg, domain))
    op_fine = assemble(fine, rd_fine.m, fine.size // 2**fine.dim)
    u = integrate(op, rd_linear, gaussian_bump(domain, sigma), T, q=1.0, t_first=1e-4 * T)
    u_ref = integrate(op_fine, rd_fine, gaussian_bump(fine, sigma), T, q=1.0, t_first=1e-4 * T)
    _trace(result, f"{label}/bump", u)
    for p in (np.inf, 2.0):
        result.add(label, smoothing_exponent_fit(u, 1.0, p, window))
    result.add(label, linfty_bound_check(u, 1.0, T, u0_norm=1.0, refined=u_ref))
    data = [(gaussian_bump(domain, s), 1.0) for s in (sigma, 2 * sigma, 4 * sigma)]
    result.add(label, semigroup_boundedness_report((op, rd_linear), data, 1e-2 * T, T, 1.0))


def stage_uniqueness(result, cfg, domain, rd, data, label):
    op = assemble(domain, rd.m, modes_for(cfg, domain))
    T = cfg.numerics["T"]
    rep = uniqueness_probe((op, rd), data, cfg.numerics["levels"], T, h=cfg.numerics["h"],
                           q=data.q, t_first=cfg.numerics["t_first"] * T)
    fam_a, fam_b = rep.metadata["families"]
    for cr in rep.metadata["cauchy"]:
        result.pairs.append((label, cr))
    result.add(label, rep)
    _trace(result, f"{label}/amplitude_truncation/limit", fam_a.trajectories[-1])
    _trace(result, f"{label}/modal_projection/limit", fam_b.trajectories[-1])


def stage_supercritical(result, cfg, domain, rd, data, label):
    q, N = data.q, domain.dim
    rho = float(rd.f0.params().get("rho", np.nan))
    p_c = critical_exponent(q, N)
    result.facts.append(f"supercritical: rho={fmt(rho)} p_c={fmt(p_c)} q={fmt(q)} N={N}")
    op, family = stage_cauchy(result, cfg, domain, rd, data, label, scheme="amplitude_truncation")
    stage_majorant(result, family, op, rd, label)
    stage_vcf(result, family, op, rd, cfg.numerics["vcf_epsilon"], label)


def _timed(result, name, fn, *args):
    t0 = time.perf_counter()
    try:
        return fn(*args)
    finally:
        result.stage_times.append((name, time.perf_counter() - t0))


def _linear_part(rd, domain):
    return linear(domain, domain.constant(rd.g.values.flat[0]), domain.constant(rd.m.values.flat[0]))


def run_scenario(cfg, prepared=None):
    """Run the configured scenario; numerical errors are captured in the result."""
    domain, rd = prepare(cfg) if prepared is None else prepared
    result = RunResult(cfg)
    scen = cfg.scenario
    suite = scen == "full_suite"
    dom1 = domain if domain.dim == 1 else build_domain(cfg, 1)
    nv = cfg.numerics
    try:
        rd1 = rd if domain.dim == 1 else build_reaction(cfg, dom1)
        if scen != "smoothing_study":
            _timed(result, "admissibility", stage_admissibility, result, rd, scen)
        if scen == "heat_sanity" or suite:
            _timed(result, "heat_sanity", stage_heat, result, cfg, dom1 if suite else domain)
        if scen in ("cauchy_study", "majorant_study") or suite:
            op, family = _timed(result, "cauchy", stage_cauchy, result, cfg, dom1, rd1,
                                build_rough(cfg), "cauchy_study")
            if scen != "majorant_study":
                _timed(result, "vcf", stage_vcf, result, family, op, rd1, nv["vcf_epsilon"], "cauchy_study")
            if scen != "cauchy_study":
                _timed(result, "majorant", stage_majorant, result, family, op, rd1, "majorant_study")
        if scen == "uniqueness_study" or suite:
            _timed(result, "uniqueness", stage_uniqueness, result, cfg, dom1, rd1,
                   build_rough(cfg), "uniqueness_study")
        if scen == "smoothing_study":
            _timed(result, "smoothing", stage_smoothing, result, cfg, domain, _linear_part(rd, domain))
        if scen == "supercritical_demo":
            _timed(result, "supercritical", stage_supercritical, result, cfg, domain, rd,
                   build_rough(cfg), "supercritical_demo")
        if suite:
            _timed(result, "smoothing_N1", stage_smoothing, result, cfg, dom1, _linear_part(rd1, dom1))
            dom2 = build_domain(cfg, 2)
            _timed(result, "heat_sanity_N2", stage_heat, result, cfg, dom2)
            _timed(result, "smoothing_N2", stage_smoothing, result, cfg, dom2,
                   _linear_part(build_reaction(cfg, dom2), dom2))
            rd_sup = build_reaction(cfg, dom1, override=SUPERCRITICAL_LOGISTIC)
            _timed(result, "supercritical", stage_supercritical, result, cfg, dom1, rd_sup,
                   build_rough(cfg, q=1.0), "supercritical_demo")
    except (RoughlabError, FloatingPointError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        result.error = f"{type(exc).__name__}: {exc}"
        log.error("run aborted: %s", result.error)
    return result


# emission ------------------------------------------------------------------

def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def traces_csv(result):
    rows = []
    for label, traj in result.traces:
        for t, a, b in zip(traj.times, traj.lq, traj.linf):
            rows.append((label, fmt(traj.q), t, a, b))
    return _csv_text(("trajectory", "q", "t", "lq_norm", "linf_norm"), rows)


def pairs_csv(result):
    rows = []
    for label, rep in result.pairs:
        meta = rep.metadata
        for p in meta.get("pairs", []):
            rows.append((label, meta.get("scheme", ""), meta.get("q", ""), p["n"], p["k"],
                         p["initial_distance"], p["sup_distance"], p["c"], p["t_worst"], p["consecutive"]))
    return _csv_text(("stage", "scheme", "q", "n", "k", "initial_distance", "sup_distance",
                      "c", "t_worst", "consecutive"), rows)


def bounds_csv(result):
    rows = []
    for stage, rep in result.reports:
        consts = ";".join(f"{k}={fmt(v)}" for k, v in rep.fitted_constants.items())
        rows.append((rep.name, "pass" if rep.passed else "fail", rep.worst_margin, stage, consts))
    return _csv_text(("name", "verdict", "worst_margin", "stage", "constants"), rows)


def manifest_text(result, wall_clock=True):
    cfg = result.config
    lines = ["# roughlab run manifest", "", "[config]", emit_config(cfg).rstrip(), "", "[versions]",
             f"roughlab = {__version__}", f"numpy = {np.__version__}", f"scipy = {scipy.__version__}",
             f"python = {platform.python_version()}", ""]
    if wall_clock:
        lines += ["[timing]", f"finished = {datetime.now(timezone.utc).isoformat(timespec='seconds')}"]
        lines += [f"{name} = {secs:.3f} s" for name, secs in result.stage_times]
        lines.append("")
    if result.facts:
        lines += ["[facts]"] + result.facts + [""]
    lines += ["[verdicts]"] + [f"{stage}: {rep.summary()}" for stage, rep in result.reports]
    lines += ["", "[status]", f"exit_code = {result.exit_code}"]
    if result.error:
        lines.append(f"error = {result.error}")
    return "\n".join(lines) + "\n"


def write_outputs(result, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "traces.csv").write_text(traces_csv(result), encoding="utf-8")
    (out / "pairs.csv").write_text(pairs_csv(result), encoding="utf-8")
    (out / "bounds.csv").write_text(bounds_csv(result), encoding="utf-8")
    (out / "manifest.txt").write_text(manifest_text(result), encoding="utf-8")
    return out


def resolve_output(cfg, cli_out=None):
    """--out beats the config, which beats the environment variable."""
    if cli_out:
        return Path(cli_out)
    if cfg.output.get("directory"):
        return Path(cfg.output["directory"])
    return Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)


__all__ = [
    "EXIT_CONFIG", "EXIT_NUMERIC", "EXIT_OK", "EXIT_VERDICT", "RunResult", "bounds_csv",
    "build_domain", "build_reaction", "build_rough", "manifest_text", "pairs_csv",
    "prepare", "resolve_output", "run_scenario", "traces_csv", "write_outputs",
]
