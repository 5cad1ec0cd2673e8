"""Declarative scenario configuration.

One scenario per JSON file, sections mirroring module names.  Lengths accept
pi-literals ("pi", "pi/2", "2*pi"), nu accepts rationals as strings ("7/1",
"6.5").  Unknown fields are rejected with their dotted path; value errors
carry the same diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .exact import parse_length
from .pointwise import LIOUVILLE_RULES, PointSpec
from .spectrum import Box, External, SpectrumSpec, load_external_eigenvalues

TASKS = (
    "spectrum",
    "critical-set",
    "biortho",
    "control-1d",
    "control-point",
    "minimal-time",
    "control-nd",
    "nonlinear",
    "simulate",
)

_TASK_SECTION = {t: t.replace("-", "_") for t in TASKS}


@dataclass
class Scenario:
    task: str
    spec: SpectrumSpec
    params: dict
    seed: int = 0
    output_dir: str = "runs"
    raw: dict = field(repr=False, default_factory=dict)


def _require(cond, path, msg):
    if not cond:
        raise ConfigError(path, msg)


def _known_keys(d, allowed, path):
    for key in d:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown field")


def _get_number(d, key, path, default=None, positive=False, integer=False):
    if key not in d:
        if default is None and not isinstance(default, (int, float)):
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    v = d[key]
    if integer:
        _require(isinstance(v, int) and not isinstance(v, bool), f"{path}.{key}", "must be an integer")
    else:
        _require(isinstance(v, (int, float)) and not isinstance(v, bool), f"{path}.{key}",
                 "must be a number")
    if positive:
        _require(v > 0, f"{path}.{key}", "must be positive")
    return v


def _parse_domain(d: dict) -> SpectrumSpec:
    _require(isinstance(d, dict), "domain", "must be an object")
    _known_keys(d, {"a", "nu", "cross_section", "K_x", "J_y", "crit_tol"}, "domain")
    _require("a" in d, "domain.a", "missing required field")
    _require("nu" in d, "domain.nu", "missing required field")
    _require("cross_section" in d, "domain.cross_section", "missing required field")
    a = d["a"]
    if isinstance(a, str):
        _require(parse_length(a) is not None, "domain.a", f"cannot parse length literal {a!r}")
    cs_raw = d["cross_section"]
    _require(isinstance(cs_raw, dict), "domain.cross_section", "must be an object")
    _known_keys(cs_raw, {"box", "external", "external_file"}, "domain.cross_section")
    _require(len(cs_raw) == 1, "domain.cross_section", "exactly one of box/external/external_file")
    if "box" in cs_raw:
        dims = cs_raw["box"]
        _require(isinstance(dims, list) and dims, "domain.cross_section.box",
                 "must be a nonempty list of lengths")
        try:
            cs = Box(dims)
        except (ValueError, TypeError) as exc:
            raise ConfigError("domain.cross_section.box", str(exc))
    elif "external" in cs_raw:
        try:
            cs = External(cs_raw["external"])
        except (ValueError, TypeError) as exc:
            raise ConfigError("domain.cross_section.external", str(exc))
    else:
        try:
            cs = load_external_eigenvalues(cs_raw["external_file"])
        except (OSError, ValueError) as exc:
            raise ConfigError("domain.cross_section.external_file", str(exc))
    try:
        return SpectrumSpec(
            a=a,
            nu=d["nu"],
            cross_section=cs,
            K_x=_get_number(d, "K_x", "domain", default=32, positive=True, integer=True),
            J_y=_get_number(d, "J_y", "domain", default=64, positive=True, integer=True),
            crit_tol=_get_number(d, "crit_tol", "domain", default=1e-9, positive=True),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError("domain", str(exc))


def parse_point(d, path) -> PointSpec:
    _require(isinstance(d, dict), path, "must be an object")
    _known_keys(d, {"rational", "real", "algebraic", "root_index", "liouville", "depth", "k_max"},
                path)
    k_max = _get_number(d, "k_max", path, default=10_000, positive=True, integer=True)
    kinds = [k for k in ("rational", "real", "algebraic", "liouville") if k in d]
    _require(len(kinds) == 1, path, "exactly one of rational/real/algebraic/liouville")
    kind = kinds[0]
    if kind == "rational":
        parts = str(d["rational"]).split("/")
        _require(len(parts) == 2, f"{path}.rational", "expected p/q")
        return PointSpec.rational(int(parts[0]), int(parts[1]), k_max)
    if kind == "real":
        return PointSpec.real(d["real"], k_max)
    if kind == "algebraic":
        coeffs = d["algebraic"]
        _require(isinstance(coeffs, list) and len(coeffs) >= 2, f"{path}.algebraic",
                 "integer polynomial coefficients, highest degree first")
        return PointSpec.algebraic(coeffs, int(d.get("root_index", 0)), k_max)
    rule = d["liouville"]
    _require(rule in LIOUVILLE_RULES, f"{path}.liouville",
             f"unknown rule; available: {sorted(LIOUVILLE_RULES)}")
    return PointSpec.liouville(rule, int(d.get("depth", 6)), k_max)


def parse_u0_modes(d, path, nd: bool):
    _require(isinstance(d, dict) and d, path, "must be a nonempty object of mode: value")
    out = {}
    for key, val in d.items():
        _require(isinstance(val, (int, float)), f"{path}.{key}", "mode value must be a number")
        if nd:
            parts = str(key).split(",")
            _require(len(parts) == 2, f"{path}.{key}", "N-D mode keys are 'k,j'")
            try:
                k, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise ConfigError(f"{path}.{key}", "mode indices must be integers")
            _require(k >= 1 and j >= 1, f"{path}.{key}", "mode indices are 1-based")
            out[(k, j)] = float(val)
        else:
            try:
                k = int(key)
            except ValueError:
                raise ConfigError(f"{path}.{key}", "mode index must be an integer")
            _require(k >= 1, f"{path}.{key}", "mode indices are 1-based")
            out[k] = float(val)
    return out


def _parse_geometry(d, path):
    _require(isinstance(d, dict), path, "must be an object")
    _known_keys(d, {"boundary", "internal"}, path)
    _require(len(d) == 1, path, "exactly one of boundary/internal")
    if "boundary" in d:
        g = d["boundary"] if isinstance(d["boundary"], dict) else {}
        _known_keys(g, {"omega"}, f"{path}.boundary")
        return {"kind": "boundary", "omega": _parse_omega(g.get("omega"), f"{path}.boundary.omega")}
    g = d["internal"]
    _require(isinstance(g, dict), f"{path}.internal", "must be an object")
    _known_keys(g, {"point", "omega"}, f"{path}.internal")
    _require("point" in g, f"{path}.internal.point", "missing required field")
    return {
        "kind": "internal",
        "point": parse_point(g["point"], f"{path}.internal.point"),
        "omega": _parse_omega(g.get("omega"), f"{path}.internal.omega"),
    }


def _parse_omega(v, path):
    if v is None:
        return None
    _require(isinstance(v, list) and len(v) == 2, path, "omega is [lo, hi] or null")
    if all(isinstance(x, (int, float)) for x in v):
        return (float(v[0]), float(v[1]))
    # per-axis intervals for 2-D cross-sections
    out = []
    for i, iv in enumerate(v):
        _require(isinstance(iv, list) and len(iv) == 2, f"{path}[{i}]", "interval is [lo, hi]")
        out.append((float(iv[0]), float(iv[1])))
    return tuple(out)


_SECTION_FIELDS = {
    "spectrum": set(),
    "critical_set": {"search_bound"},
    "biortho": {"j", "K", "T"},
    "control_1d": {"j", "T", "K_trunc", "u0_modes"},
    "control_point": {"j", "T", "K_trunc", "u0_modes", "point", "margin"},
    "minimal_time": {"point", "k_max"},
    "control_nd": {"T", "rho", "beta", "geometry", "u0_modes"},
    "nonlinear": {"T", "u0_modes", "q_w", "p", "C_cost", "tol", "max_iter", "sim_steps",
                  "rho", "beta", "r_guess", "geometry"},
    "simulate": {"T", "u0_modes", "random_modes", "n_samples", "j"},
}


def parse_config(path) -> Scenario:
    """Load, validate, and normalize a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("<file>", str(exc))
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}")
    return parse_config_dict(raw)


def parse_config_dict(raw: dict) -> Scenario:
    _require(isinstance(raw, dict), "<root>", "top level must be an object")
    task = raw.get("task")
    _require(task in TASKS, "task", f"must be one of {TASKS}")
    section = _TASK_SECTION[task]
    allowed_top = {"task", "seed", "domain", "output", section}
    _known_keys(raw, allowed_top, "")
    _require("domain" in raw, "domain", "missing required section")
    spec = _parse_domain(raw["domain"])
    seed = _get_number(raw, "seed", "", default=0, integer=True)

    out = raw.get("output", {})
    _require(isinstance(out, dict), "output", "must be an object")
    _known_keys(out, {"dir"}, "output")
    output_dir = out.get("dir", "runs")

    sect = raw.get(section, {})
    _require(isinstance(sect, dict), section, "must be an object")
    _known_keys(sect, _SECTION_FIELDS[section], section)
    params = _normalize_params(task, section, sect, spec)

    # surface exact criticality for control tasks at parse time
    if task.startswith("control") or task == "nonlinear":
        from .spectrum import critical_set_check

        verdict = critical_set_check(spec)
        params["critical_verdict"] = verdict.kind
    return Scenario(task=task, spec=spec, params=params, seed=int(seed),
                    output_dir=output_dir, raw=raw)


def _normalize_params(task, section, sect, spec) -> dict:
    p = dict(sect)
    nd = task in ("control-nd", "nonlinear") or (task == "simulate" and "j" not in sect)
    if "u0_modes" in p:
        p["u0_modes"] = parse_u0_modes(p["u0_modes"], f"{section}.u0_modes", nd)
    if "point" in p:
        p["point"] = parse_point(p["point"], f"{section}.point")
    if "geometry" in p:
        p["geometry"] = _parse_geometry(p["geometry"], f"{section}.geometry")
    for key in ("T",):
        if key in p:
            _require(isinstance(p[key], (int, float)) and p[key] > 0, f"{section}.{key}",
                     "must be a positive number")
    return p
