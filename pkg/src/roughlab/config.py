"""Scenario configuration: INI-style text in, validated ScenarioConfig out.

Every section has a schema of typed keys with defaults.  ``parse_config``
collects every violation before raising, suggests the nearest valid key
for typos, and ``emit_config`` writes a canonical text that parses back
to an equal config.
"""
from __future__ import annotations

import configparser
import difflib
import math
from dataclasses import dataclass

SCENARIOS = (
    "heat_sanity",
    "cauchy_study",
    "majorant_study",
    "smoothing_study",
    "uniqueness_study",
    "supercritical_demo",
    "full_suite",
)
MULTI_LEVEL = {"cauchy_study", "majorant_study", "uniqueness_study", "supercritical_demo", "full_suite"}
NONLINEARITIES = ("none", "logistic", "monotone_poly", "fractional_poly", "custom")
ROUGH_DATA = ("power_singularity", "sign_flip_singularity", "smooth")
INTEGRATORS = ("exp_euler", "exp_rk2")
MOLLIFICATIONS = ("amplitude_truncation", "modal_projection")


class ConfigError(ValueError):
    """Every problem found in one configuration text."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


# value parsers -------------------------------------------------------------

def _real(text):
    t = text.strip().lower()
    if t in ("pi", "+pi"):
        return math.pi
    if t.endswith("*pi"):
        return float(t[:-3]) * math.pi
    return float(t)


def _optional_real(text):
    return None if text.strip().lower() in ("", "auto", "none") else _real(text)


def _int(text):
    return int(text.strip())


def _optional_int(text):
    return None if text.strip().lower() in ("", "auto", "none") else _int(text)


def _reals(text):
    return tuple(_real(t) for t in text.split(",") if t.strip())


def _ints(text):
    return tuple(_int(t) for t in text.split(",") if t.strip())


def _word(text):
    return text.strip()


def _terms(text):
    """'2:1, 3:-1' -> ((2, 1.0), (3, -1.0))."""
    out = []
    for item in text.split(","):
        if item.strip():
            j, v = item.split(":")
            out.append((int(j), float(v)))
    return tuple(out)


# value formatters ----------------------------------------------------------

def _fmt_real(v):
    return "auto" if v is None else repr(float(v))


def _fmt_int(v):
    return "auto" if v is None else str(int(v))


def _fmt_list(vs):
    return ", ".join(repr(float(v)) if isinstance(v, float) else str(v) for v in vs)


def _fmt_terms(vs):
    return ", ".join(f"{j}:{float(v)!r}" for j, v in vs)


KINDS = {
    "real": (_real, _fmt_real),
    "real?": (_optional_real, _fmt_real),
    "int": (_int, _fmt_int),
    "int?": (_optional_int, _fmt_int),
    "reals": (_reals, _fmt_list),
    "ints": (_ints, _fmt_list),
    "word": (_word, str),
    "terms": (_terms, _fmt_terms),
}

REQUIRED = object()

SCHEMA = {
    "scenario": {"name": ("word", REQUIRED)},
    "domain": {
        "dim": ("int", REQUIRED),
        "length": ("real", math.pi),
        "nodes": ("int?", None),
    },
    "nonlinearity": {
        "name": ("word", "none"),
        "m": ("real", 0.0),
        "g": ("real", 0.0),
    },
    "rough_data": {
        "name": ("word", "power_singularity"),
        "q": ("real", 1.0),
    },
    "numerics": {
        "K": ("int?", None),
        "h": ("real?", None),
        "T": ("real", 1.0),
        "levels": ("ints", (2, 4, 8, 16)),
        "seeds": ("ints", (0,)),
        "workers": ("int", 1),
        "integrator": ("word", "exp_euler"),
        "mollification": ("word", "amplitude_truncation"),
        "t_first": ("real", 1e-4),
        "vcf_epsilon": ("real", 0.1),
        "smoothing_horizon": ("real", 10.0),
        "bump_sigma": ("real", 0.045),
        "nodes_2d": ("int", 127),
    },
    "output": {"directory": ("word", "")},
}

NONLINEARITY_KEYS = {
    "none": {},
    "logistic": {"n": ("real", 1.0), "rho": ("real", 3.0)},
    "monotone_poly": {"coefficients": ("terms", ((2, 1.0), (3, -1.0)))},
    "fractional_poly": {"ns": ("reals", (1.0, -1.0)), "rhos": ("reals", (1.5, 2.5))},
    "custom": {"coefficient": ("real", -1.0), "power": ("real", 3.0), "lipschitz": ("real", 0.0)},
}

ROUGH_KEYS = {
    "power_singularity": {"beta": ("real", 0.25)},
    "sign_flip_singularity": {"beta": ("real", 0.25), "center": ("real?", None)},
    "smooth": {"amplitudes": ("reals", (1.0, 0.5, 0.25))},
}

SECTION_ORDER = tuple(SCHEMA)

# stand-ins for unreadable or missing values so that the remaining checks still run
FALLBACK = {"name": "heat_sanity", "dim": 1}


def default_nodes(dim):
    return 511 if dim == 1 else 127


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated configuration; each section is a plain dict of typed values."""

    scenario: str
    domain: dict
    nonlinearity: dict
    rough_data: dict
    numerics: dict
    output: dict

    def section(self, name):
        return self.scenario if name == "scenario" else getattr(self, name)

    @property
    def K(self):
        return self.numerics["K"]

    @property
    def q(self):
        return self.rough_data["q"]


def _section_schema(section, values):
    schema = dict(SCHEMA[section])
    if section == "nonlinearity":
        schema.update(NONLINEARITY_KEYS.get(values.get("name", "none"), {}))
    if section == "rough_data":
        schema.update(ROUGH_KEYS.get(values.get("name", "power_singularity"), {}))
    return schema


def _template(section):
    lines = [f"[{section}]"]
    for key, (kind, default) in SCHEMA[section].items():
        shown = "<required>" if default is REQUIRED else KINDS[kind][1](default)
        lines.append(f"{key} = {shown}")
    return "\n".join(lines)


def _nearest(word, options):
    match = difflib.get_close_matches(word, list(options), n=1, cutoff=0.5)
    return match[0] if match else None


def _read_ini(text, problems):
    parser = configparser.ConfigParser(
        interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",),
        empty_lines_in_values=False,
    )
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        problems.append(f"malformed configuration text: {exc.message if hasattr(exc, 'message') else exc}")
        return None
    return parser


def parse_config(text):
    """Parse and validate; raises ConfigError listing every violated constraint."""
    problems = []
    parser = _read_ini(text, problems)
    if parser is None:
        raise ConfigError(problems)
    for section in parser.sections():
        if section not in SCHEMA:
            hint = _nearest(section, SCHEMA)
            problems.append(f"unknown section [{section}]" + (f"; did you mean [{hint}]?" if hint else ""))
    raw = {s: dict(parser[s]) if parser.has_section(s) else {} for s in SCHEMA}

    parsed = {}
    for section in SECTION_ORDER:
        given = raw[section]
        name_kind = SCHEMA[section].get("name")
        schema = _section_schema(section, {"name": given.get("name", name_kind[1] if name_kind else None)})
        values = {}
        for key, (kind, default) in schema.items():
            if key in given:
                try:
                    values[key] = KINDS[kind][0](given[key])
                except (ValueError, TypeError):
                    problems.append(f"[{section}] {key} = {given[key]!r} is not a valid {kind.rstrip('?')}")
                    values[key] = FALLBACK.get(key, default)
            elif default is REQUIRED:
                problems.append(f"missing required key [{section}] {key}; section template:\n{_template(section)}")
                values[key] = FALLBACK[key]
            else:
                values[key] = default
        for key in given:
            if key not in schema:
                hint = _nearest(key, schema)
                problems.append(
                    f"unknown key [{section}] {key}" + (f"; nearest valid key is '{hint}'" if hint else "")
                )
        parsed[section] = values

    problems.extend(p for p in _validate(parsed) if p not in problems)
    if problems:
        raise ConfigError(problems)
    if parsed["domain"]["nodes"] is None:
        parsed["domain"]["nodes"] = default_nodes(parsed["domain"]["dim"])
    if parsed["numerics"]["K"] is None:
        n = parsed["domain"]["nodes"]
        parsed["numerics"]["K"] = n // 2 if parsed["domain"]["dim"] == 1 else n * n // 4
    return ScenarioConfig(
        scenario=parsed["scenario"]["name"],
        domain=parsed["domain"],
        nonlinearity=parsed["nonlinearity"],
        rough_data=parsed["rough_data"],
        numerics=parsed["numerics"],
        output=parsed["output"],
    )


def _validate(p):
    out = []
    scen = p["scenario"]["name"]
    if scen not in SCENARIOS:
        hint = _nearest(scen, SCENARIOS)
        out.append(f"unknown scenario '{scen}'" + (f"; nearest is '{hint}'" if hint else ""))
    dom = p["domain"]
    if dom["dim"] not in (1, 2):
        out.append(f"domain dim must be 1 or 2, got {dom['dim']}")
    if not dom["length"] > 0:
        out.append("domain length must be positive")
    nodes = dom["nodes"] if dom["nodes"] is not None else default_nodes(dom["dim"])
    if nodes < 8:
        out.append(f"need at least 8 nodes per axis, got {nodes}")
    num = p["numerics"]
    size = nodes ** dom["dim"]
    if num["K"] is not None and not 1 <= 2 ** dom["dim"] * num["K"] <= size:
        out.append(
            f"K={num['K']} violates node/mode ratio >= 2 per axis (K <= {size // 2 ** dom['dim']})"
        )
    if not num["T"] > 0:
        out.append("T must be positive")
    if num["h"] is not None and not 0 < num["h"] <= num["T"]:
        out.append(f"h must satisfy 0 < h <= T, got h={num['h']}")
    if not 0 < num["t_first"] < 1:
        out.append("t_first is a fraction of T and must lie in (0, 1)")
    if not 0 < num["vcf_epsilon"] < 1:
        out.append("vcf_epsilon is a fraction of T and must lie in (0, 1)")
    if num["workers"] < 1:
        out.append("workers must be at least 1")
    if num["integrator"] not in INTEGRATORS:
        out.append(f"unknown integrator '{num['integrator']}'; choose from {', '.join(INTEGRATORS)}")
    if num["mollification"] not in MOLLIFICATIONS:
        out.append(f"unknown mollification '{num['mollification']}'; choose from {', '.join(MOLLIFICATIONS)}")
    levels = num["levels"]
    if any(n < 1 for n in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
        out.append(f"levels must be positive and strictly increasing, got {levels}")
    if scen in MULTI_LEVEL and len(levels) < 2:
        out.append(f"scenario {scen} compares mollification levels and needs at least 2, got {len(levels)}")
    if not num["smoothing_horizon"] > 0 or not num["bump_sigma"] > 0:
        out.append("smoothing_horizon and bump_sigma must be positive")
    if num["nodes_2d"] < 8:
        out.append("nodes_2d must be at least 8")

    nl = p["nonlinearity"]
    if nl["name"] not in NONLINEARITIES:
        hint = _nearest(nl["name"], NONLINEARITIES)
        out.append(f"unknown nonlinearity '{nl['name']}'" + (f"; nearest is '{hint}'" if hint else ""))
    elif nl["name"] == "logistic":
        if not nl["rho"] > 1:
            out.append(f"logistic rho must exceed 1, got {nl['rho']}")
        if not nl["n"] > 0:
            out.append("logistic coefficient n must be positive")
    elif nl["name"] == "monotone_poly":
        top = max((j for j, _ in nl["coefficients"]), default=0)
        lead = dict(nl["coefficients"]).get(top, 0.0)
        if top % 2 == 0 or lead >= 0 or min((j for j, _ in nl["coefficients"]), default=2) < 2:
            out.append("monotone_poly needs powers >= 2 and an odd top power with negative coefficient")
    elif nl["name"] == "fractional_poly":
        if len(nl["ns"]) != len(nl["rhos"]) or not nl["ns"]:
            out.append("fractional_poly needs equally many ns and rhos")
    elif nl["name"] == "custom":
        if not nl["power"] > 1:
            out.append("custom power must exceed 1")
        if nl["lipschitz"] < 0:
            out.append("custom lipschitz bound must be nonnegative")

    rdat = p["rough_data"]
    if rdat["name"] not in ROUGH_DATA:
        hint = _nearest(rdat["name"], ROUGH_DATA)
        out.append(f"unknown rough data '{rdat['name']}'" + (f"; nearest is '{hint}'" if hint else ""))
    if not rdat["q"] >= 1:
        out.append(f"q = {rdat['q']} violates the precondition q >= 1")
    elif rdat["name"] in ("power_singularity", "sign_flip_singularity"):
        if not 0 < rdat["beta"] * rdat["q"] < 1:
            out.append(f"{rdat['name']} with beta={rdat['beta']} is not in L^q: need 0 < beta*q < 1")
    if scen == "supercritical_demo" and not out:
        p_c = critical_exponent(rdat["q"], dom["dim"])
        if dom["dim"] != 1:
            out.append("supercritical_demo runs on the interval (dim = 1)")
        if nl["name"] != "logistic" or not nl["rho"] > p_c:
            out.append(f"supercritical_demo needs a logistic nonlinearity with rho > p_c = {p_c:g}")
    return out


def critical_exponent(q, dim):
    """Classical growth threshold p_c = 1 + 2q/N."""
    return 1.0 + 2.0 * q / dim


def emit_config(cfg):
    """Canonical text with every key written out; parses back to an equal config."""
    blocks = []
    for section in SECTION_ORDER:
        values = {"name": cfg.scenario} if section == "scenario" else cfg.section(section)
        schema = _section_schema(section, values)
        lines = [f"[{section}]"]
        for key, (kind, _default) in schema.items():
            lines.append(f"{key} = {KINDS[kind][1](values[key])}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
