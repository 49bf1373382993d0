"""Experiment configuration: a small sectioned ``key = value`` format.

Example::

    [system]
    maps = affine(1/3, 0); affine(1/3, 2/3)

    [weights]
    p = 1/2, 1/2

    [experiment]
    kind = dissonance
    depth = 18

Sections are ``system``, ``weights``, ``system2``, ``weights2``,
``experiment`` and ``output``.  Maps are ``affine(r, a)``,
``moebius(a, b, c, d)`` or ``diag(rho, lam, ax, ay)``; numbers may be
fractions such as ``2/3``.  Parsing collects every problem with its line
number instead of stopping at the first one.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction

from .ifs import Bernoulli, ConformalMap1D, DiagonalAffineMap2D, IfsSystem, MarkovWeights

KINDS = ("discretize", "scenery", "uniform-scaling", "prop31", "dissonance", "normality", "projection", "gap")
SECTIONS = ("system", "weights", "system2", "weights2", "experiment", "output")
FORMATS = ("rows", "structured")
REQUIRED = object()

# per-kind parameters: name -> (parser name, default)
PARAMETERS = {
    "discretize": {"depth": ("int", 12), "word_cap": ("int", None)},
    "scenery": {"x": ("floats", REQUIRED), "T": ("int", 16), "level": ("int", 8), "t0": ("float", None),
                "alpha": ("float", None), "shift": ("int", 0)},
    "uniform-scaling": {"T": ("ints", [8, 16, 32]), "point_count": ("int", 16), "level": ("int", 4)},
    "prop31": {"n": ("int", 8), "alpha": ("float", 0.5), "samples": ("int", 64), "mixture": ("str", "identity"),
               "x": ("floats", None), "t": ("float", None), "frame_level": ("int", 4),
               "tangent_level": ("int", 8)},
    "dissonance": {"depth": ("int", 18), "word_bound": ("int", 8), "multiplier_bound": ("int", 8),
                   "tolerance": ("float", 0.03)},
    "normality": {"beta": ("str", "2"), "point_count": ("int", 20), "orbit_length": ("int", 2000),
                  "precision_bits": ("int", 4096), "h": ("str", None), "checkpoints": ("ints", None),
                  "word_bound": ("int", 12), "multiplier_bound": ("int", 19)},
    "projection": {"thetas": ("floats", [0.0, 45.0, 90.0]), "depth": ("int", 16), "radii": ("ints", [2, 4, 6]),
                   "point_count": ("int", 8), "strip_level": ("int", 10), "tolerance": ("float", 0.05),
                   "word_bound": ("int", 8), "multiplier_bound": ("int", 8)},
    "gap": {"mode": ("str", "ifs-vs-beta"), "beta": ("str", None), "word_bound": ("int", 8),
            "multiplier_bound": ("int", 8)},
}
SYSTEM_KEYS = ("maps", "domain", "name", "holder")
WEIGHT_KEYS = ("p", "initial", "transition", "constant")
OUTPUT_KEYS = ("dir", "format")
COMMON_KEYS = ("kind", "seed")


@dataclass
class ConfigIssue:
    line: int | None
    section: str | None
    message: str

    def __str__(self):
        where = f"line {self.line}" if self.line else "config"
        sect = f" [{self.section}]" if self.section else ""
        return f"{where}{sect}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("\n".join(str(i) for i in self.issues))


@dataclass
class ExperimentConfig:
    kind: str
    system: IfsSystem
    system2: IfsSystem | None
    params: dict
    seed: int
    output_dir: str | None = None
    output_format: str = "rows"
    raw: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        """Everything that determines the results, in a JSON-ready form."""
        return {
            "kind": self.kind,
            "seed": self.seed,
            "system": _system_record(self.system),
            "system2": None if self.system2 is None else _system_record(self.system2),
            "params": {k: self.params[k] for k in sorted(self.params)},
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.canonical(), sort_keys=True, default=str).encode()).hexdigest()


def _system_record(system: IfsSystem) -> dict:
    # the Hoelder exponent is metadata only, echoed so reports show what was assumed
    holders = sorted({getattr(m, "holder", None) for m in system.maps} - {None})
    return {"key": repr(system.key()), "holder": holders[0] if len(holders) == 1 else holders or None}


# ---------------------------------------------------------------------------
# line structure


_SECTION = re.compile(r"^\[\s*([A-Za-z0-9_-]+)\s*\]$")
_ENTRY = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


def _scan(text: str, issues: list):
    """``{section: {key: (value, line)}}`` plus the line each section started on."""
    sections: dict[str, dict] = {}
    starts: dict[str, int] = {}
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SECTION.match(line)
        if m:
            name = m.group(1).lower()
            if name not in SECTIONS:
                issues.append(ConfigIssue(no, name, f"unknown section (expected one of {', '.join(SECTIONS)})"))
                current = None
                continue
            if name in sections:
                issues.append(ConfigIssue(no, name, f"duplicate section (first defined on line {starts[name]})"))
                current = None
                continue
            sections[name] = {}
            starts[name] = no
            current = name
            continue
        m = _ENTRY.match(line)
        if not m:
            issues.append(ConfigIssue(no, current, f"cannot parse {line!r}; expected 'key = value'"))
            continue
        if current is None:
            if not any(i.line == no for i in issues):
                issues.append(ConfigIssue(no, None, "entry outside a valid section"))
            continue
        key, value = m.group(1), m.group(2).strip()
        if key in sections[current]:
            issues.append(ConfigIssue(no, current, f"duplicate key {key!r}"))
            continue
        sections[current][key] = (value, no)
    return sections, starts


# ---------------------------------------------------------------------------
# value parsers


def parse_number(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text.strip()!r}") from None


def _numbers(text: str) -> list:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if not parts:
        raise ValueError("empty list")
    return [parse_number(p) for p in parts]


_MAP = re.compile(r"^\s*(affine|moebius|diag)\s*\((.*)\)\s*$", re.IGNORECASE)
_ARITY = {"affine": 2, "moebius": 4, "diag": 4}


def parse_map(text: str, domain=(0, 1), holder=1.0):
    m = _MAP.match(text)
    if not m:
        raise ValueError(f"unrecognized map {text.strip()!r}; use affine(r, a), moebius(a, b, c, d) or diag(rho, lam, ax, ay)")
    kind = m.group(1).lower()
    args = [parse_number(a) for a in m.group(2).split(",")]
    if len(args) != _ARITY[kind]:
        raise ValueError(f"{kind} takes {_ARITY[kind]} arguments, got {len(args)}")
    if kind == "affine":
        return ConformalMap1D.affine(args[0], args[1], domain=domain, holder=holder)
    if kind == "moebius":
        return ConformalMap1D.moebius(*args, domain=domain, holder=holder)
    return DiagonalAffineMap2D(*args)


def _parse_param(kind: str, text: str):
    if kind == "int":
        v = parse_number(text)
        if v.denominator != 1:
            raise ValueError(f"expected an integer, got {text!r}")
        return int(v)
    if kind == "float":
        return float(parse_number(text))
    if kind == "ints":
        vals = _numbers(text)
        if any(v.denominator != 1 for v in vals):
            raise ValueError(f"expected integers, got {text!r}")
        return [int(v) for v in vals]
    if kind == "floats":
        return [float(v) for v in _numbers(text)]
    return text


# ---------------------------------------------------------------------------
# sections


def _build_system(sections, sys_name, w_name, issues):
    sect = sections.get(sys_name)
    if sect is None:
        return None
    ok = True
    for key, (_, no) in sect.items():
        if key not in SYSTEM_KEYS:
            issues.append(ConfigIssue(no, sys_name, f"unknown key {key!r}"))
    domain = (0, 1)
    if "domain" in sect:
        value, no = sect["domain"]
        try:
            lo, hi = _numbers(value)
            domain = (lo, hi)
        except ValueError as exc:
            issues.append(ConfigIssue(no, sys_name, f"domain: {exc}"))
            ok = False
    holder = 1.0
    if "holder" in sect:
        value, no = sect["holder"]
        try:
            holder = float(parse_number(value))
            if not 0 < holder <= 1:
                raise ValueError("holder must lie in (0, 1]")
        except ValueError as exc:
            issues.append(ConfigIssue(no, sys_name, f"holder: {exc}"))
            ok = False
    if "maps" not in sect:
        issues.append(ConfigIssue(None, sys_name, "missing required key 'maps'"))
        return None
    value, no = sect["maps"]
    maps = []
    for part in [p for p in value.split(";") if p.strip()]:
        try:
            maps.append(parse_map(part, domain, holder))
        except (ValueError, ZeroDivisionError) as exc:
            issues.append(ConfigIssue(no, sys_name, str(exc)))
            ok = False
    if not maps and ok:
        issues.append(ConfigIssue(no, sys_name, "no maps given"))
        ok = False
    weights = _build_weights(sections.get(w_name), w_name, len(maps), issues)
    if not ok or weights is False:
        return None
    try:
        return IfsSystem(maps, weights, name=sect.get("name", ("", 0))[0])
    except (ValueError, TypeError) as exc:
        issues.append(ConfigIssue(no, sys_name, str(exc)))
        return None


def _build_weights(sect, name, size, issues):
    """A weight model, ``None`` for uniform weights, or ``False`` after an error."""
    if sect is None:
        return None
    for key, (_, no) in sect.items():
        if key not in WEIGHT_KEYS:
            issues.append(ConfigIssue(no, name, f"unknown key {key!r}"))
    try:
        if "p" in sect:
            value, no = sect["p"]
            p = _numbers(value)
            if any(v <= 0 for v in p):
                issues.append(ConfigIssue(no, name, "weights must be strictly positive"))
                return False
            if abs(float(sum(p)) - 1.0) > 1e-9:
                issues.append(ConfigIssue(no, name, f"weights sum to {float(sum(p)):.12g}, not 1 (normalization error)"))
                return False
            if size and len(p) != size:
                issues.append(ConfigIssue(no, name, f"{len(p)} weights for {size} maps"))
                return False
            return Bernoulli(p)
        if "initial" in sect or "transition" in sect:
            if "initial" not in sect or "transition" not in sect:
                issues.append(ConfigIssue(None, name, "Markov weights need both 'initial' and 'transition'"))
                return False
            value, no = sect["initial"]
            init = [float(v) for v in _numbers(value)]
            tvalue, tno = sect["transition"]
            rows = [[float(v) for v in _numbers(r)] for r in tvalue.split(";") if r.strip()]
            bad = False
            if abs(sum(init) - 1.0) > 1e-9:
                issues.append(ConfigIssue(no, name, f"initial weights sum to {sum(init):.12g}, not 1 (normalization error)"))
                bad = True
            for i, r in enumerate(rows):
                if abs(sum(r) - 1.0) > 1e-9:
                    issues.append(ConfigIssue(tno, name, f"transition row {i} sums to {sum(r):.12g}, not 1 (normalization error)"))
                    bad = True
            if bad:
                return False
            constant = None
            if "constant" in sect:
                constant = float(parse_number(sect["constant"][0]))
            return MarkovWeights(init, rows, constant)
    except ValueError as exc:
        issues.append(ConfigIssue(None, name, str(exc)))
        return False
    issues.append(ConfigIssue(None, name, "give 'p' or 'initial' and 'transition'"))
    return False


def parse_config(text: str, kind: str | None = None) -> ExperimentConfig:
    """Validated configuration; raises :class:`ConfigError` listing every problem.

    ``kind`` (a subcommand name) fills in or must agree with ``experiment.kind``.
    """
    issues: list[ConfigIssue] = []
    sections, _ = _scan(text, issues)
    exp = sections.get("experiment", {})
    declared = exp.get("kind")
    if declared and kind and declared[0] != kind:
        issues.append(ConfigIssue(declared[1], "experiment", f"kind {declared[0]!r} does not match subcommand {kind!r}"))
    kind = kind or (declared[0] if declared else None)
    if kind is None:
        issues.append(ConfigIssue(None, "experiment", "missing required key 'kind'"))
    elif kind not in KINDS:
        issues.append(ConfigIssue(declared[1] if declared else None, "experiment",
                                  f"unknown kind {kind!r} (expected one of {', '.join(KINDS)})"))
        kind = None

    if "system" not in sections:
        issues.append(ConfigIssue(None, "system", "missing required section"))
    system = _build_system(sections, "system", "weights", issues)
    system2 = _build_system(sections, "system2", "weights2", issues)
    for orphan, owner in (("weights", "system"), ("weights2", "system2")):
        if orphan in sections and owner not in sections:
            issues.append(ConfigIssue(None, orphan, f"weights without a [{owner}] section"))

    seed = 0
    if "seed" in exp:
        value, no = exp["seed"]
        try:
            seed = _parse_param("int", value)
        except ValueError as exc:
            issues.append(ConfigIssue(no, "experiment", f"seed: {exc}"))

    params = {}
    if kind is not None:
        schema = PARAMETERS[kind]
        for key, (value, no) in exp.items():
            if key in COMMON_KEYS:
                continue
            if key not in schema:
                issues.append(ConfigIssue(no, "experiment", f"unknown key {key!r} for kind {kind!r}"))
                continue
            try:
                params[key] = _parse_param(schema[key][0], value)
            except ValueError as exc:
                issues.append(ConfigIssue(no, "experiment", f"{key}: {exc}"))
        for key, (_, default) in schema.items():
            if key in params:
                continue
            if default is REQUIRED:
                issues.append(ConfigIssue(None, "experiment", f"missing required key {key!r} for kind {kind!r}"))
            else:
                params[key] = default
        _check_kind(kind, params, system, system2, exp, issues)

    out = sections.get("output", {})
    out_dir, fmt = None, "rows"
    for key, (value, no) in out.items():
        if key not in OUTPUT_KEYS:
            issues.append(ConfigIssue(no, "output", f"unknown key {key!r}"))
        elif key == "dir":
            out_dir = value
        elif value not in FORMATS:
            issues.append(ConfigIssue(no, "output", f"format must be one of {', '.join(FORMATS)}"))
        else:
            fmt = value

    if issues:
        raise ConfigError(issues)
    raw = {s: {k: v for k, (v, _) in entries.items()} for s, entries in sections.items()}
    return ExperimentConfig(kind, system, system2, params, seed, out_dir, fmt, raw)


def _line(exp, key):
    return exp[key][1] if key in exp else None


def _check_kind(kind, params, system, system2, exp, issues):
    """Cross-field checks that need the parsed systems."""
    def bad(key, message):
        issues.append(ConfigIssue(_line(exp, key), "experiment", message))

    for key, value in params.items():
        if isinstance(value, int) and key != "shift" and value < 1:
            bad(key, f"{key} must be >= 1")
    if system is None:
        return
    if kind == "normality":
        if system.dim != 1:
            bad("beta", "normality needs a 1-D system")
        try:
            from .beta import parse_beta

            if not parse_beta(params["beta"], 64) > 1:
                bad("beta", "beta must exceed 1")
        except (ValueError, SyntaxError, TypeError) as exc:
            bad("beta", f"beta: {exc}")
        if params["h"] is not None:
            try:
                parse_map(params["h"], system.domain)
            except (ValueError, ZeroDivisionError) as exc:
                bad("h", f"h: {exc}")
    if kind == "projection" and system.dim != 2:
        bad("thetas", "projection needs a 2-D diagonal system")
    if kind in ("scenery",) and params.get("x") is not None and len(params["x"]) != system.dim:
        bad("x", f"x needs {system.dim} coordinate(s)")
    if kind == "prop31":
        if params["mixture"] not in ("identity", "tangent"):
            bad("mixture", "mixture must be 'identity' or 'tangent'")
        elif params["mixture"] == "tangent" and (params["x"] is None or params["t"] is None):
            bad("mixture", "a tangent mixture needs 'x' and 't'")
    if kind == "dissonance":
        if system.dim != 1 or (system2 is not None and system2.dim != 1):
            bad("depth", "dissonance needs 1-D systems")
    if kind == "gap":
        mode = params["mode"]
        if mode not in ("ifs-vs-beta", "ifs-vs-ifs", "eigenvalues"):
            bad("mode", "mode must be ifs-vs-beta, ifs-vs-ifs or eigenvalues")
        elif mode == "ifs-vs-beta" and params["beta"] is None:
            bad("mode", "mode ifs-vs-beta needs 'beta'")
        elif mode == "ifs-vs-ifs" and system2 is None:
            bad("mode", "mode ifs-vs-ifs needs a [system2] section")
        elif mode == "eigenvalues" and system.dim != 2:
            bad("mode", "mode eigenvalues needs a 2-D diagonal system")
    if kind == "scenery" and params["t0"] is not None and params["t0"] <= 0:
        bad("t0", "t0 must be positive")
    if kind == "projection":
        for th in params["thetas"]:
            if not 0 <= th < 180:
                bad("thetas", "angles are in degrees within [0, 180)")
                break
