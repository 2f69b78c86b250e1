"""Run configuration files and deterministic CSV / key-value writers.

Config format: flat ``[section]`` headers, ``key = value`` lines, ``#``
comments (full-line or trailing). Sections and keys::

    [run]      kind, t_end, output, seed
    [physics]  c, beta, gamma
    [grid]     dim, x, y, n          (x, y are "a, b" extents)
    [stepper]  dt, scheme, newton_tol, newton_max_iter, eps_deg, boundary
    [initial]  recipe, then the recipe's own parameters
"""

from __future__ import annotations

import difflib
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .experiments import INITIAL_RECIPES, check_recipe_params
from .model import PhysicalParams
from .report import SERIES_COLUMNS
from .stepper import BOUNDARY_VARIANTS, SCHEMES, StepperConfig

KINDS = ("simulate", "compat-check")
OUT_ENV = "WESTERVELT_OUT"

_SCHEMA = {
    "run": {"kind": "simulate", "t_end": 1.0, "output": "out", "seed": 0},
    "physics": {"c": 1.0, "beta": 1.0, "gamma": 0.5},
    "grid": {"dim": 1, "x": (0.0, 1.0), "y": (0.0, 1.0), "n": 65},
    "stepper": {
        "dt": 0.01,
        "scheme": "tr-bdf2",
        "newton_tol": 1e-10,
        "newton_max_iter": 25,
        "eps_deg": None,
        "boundary": "abc",
    },
    "initial": {"recipe": "equilibrium"},
}


@dataclass(frozen=True)
class GridSpec:
    dim: int = 1
    extents: tuple = ((0.0, 1.0),)
    n: int = 65


@dataclass(frozen=True)
class RunConfig:
    kind: str = "simulate"
    physics: PhysicalParams = field(default_factory=PhysicalParams)
    grid: GridSpec = field(default_factory=GridSpec)
    stepper: StepperConfig = field(default_factory=lambda: StepperConfig(dt=0.01))
    boundary: str = "abc"
    recipe: str = "equilibrium"
    recipe_params: tuple = ()  # sorted (name, float) pairs
    t_end: float = 1.0
    output: str = "out"
    seed: int = 0

    @property
    def initial_params(self) -> dict:
        return dict(self.recipe_params)

    def output_dir(self) -> str:
        return os.environ.get(OUT_ENV) or self.output

    def serialize(self) -> str:
        p, g, s = self.physics, self.grid, self.stepper
        lines = [
            "[run]",
            f"kind = {self.kind}",
            f"t_end = {self.t_end!r}",
            f"output = {self.output}",
            f"seed = {self.seed}",
            "",
            "[physics]",
            f"c = {p.c!r}",
            f"beta = {p.beta!r}",
            f"gamma = {p.gamma!r}",
            "",
            "[grid]",
            f"dim = {g.dim}",
            f"x = {g.extents[0][0]!r}, {g.extents[0][1]!r}",
        ]
        if g.dim == 2:
            lines.append(f"y = {g.extents[1][0]!r}, {g.extents[1][1]!r}")
        lines += [
            f"n = {g.n}",
            "",
            "[stepper]",
            f"dt = {s.dt!r}",
            f"scheme = {s.scheme}",
            f"newton_tol = {s.newton_tol!r}",
            f"newton_max_iter = {s.newton_max_iter}",
        ]
        if s.eps_deg is not None:
            lines.append(f"eps_deg = {s.eps_deg!r}")
        lines += [f"boundary = {self.boundary}", "", "[initial]", f"recipe = {self.recipe}"]
        lines += [f"{k} = {v!r}" for k, v in self.recipe_params]
        return "\n".join(lines) + "\n"


def _read_sections(text: str):
    """Yield (line_no, section, key, value) and collect syntax problems."""
    entries, problems = [], []
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                near = difflib.get_close_matches(section, _SCHEMA, n=1)
                hint = f" (did you mean [{near[0]}]?)" if near else ""
                problems.append(f"line {no}: unknown section [{section}]{hint}")
            continue
        if "=" not in line:
            problems.append(f"line {no}: expected 'key = value', got {raw.strip()!r}")
            continue
        if section is None:
            problems.append(f"line {no}: key outside of any section")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        entries.append((no, section, key, value))
    return entries, problems


def _as_float(value: str) -> float:
    x = float(value)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


def _as_int(value: str) -> int:
    x = float(value)
    if x != int(x):
        raise ValueError("not an integer")
    return int(x)


def _as_pair(value: str) -> tuple:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 2:
        raise ValueError("expected 'a, b'")
    a, b = (_as_float(p) for p in parts)
    if not b > a:
        raise ValueError("need a < b")
    return (a, b)


_CONVERT = {
    ("run", "t_end"): _as_float,
    ("run", "seed"): _as_int,
    ("physics", "c"): _as_float,
    ("physics", "beta"): _as_float,
    ("physics", "gamma"): _as_float,
    ("grid", "dim"): _as_int,
    ("grid", "x"): _as_pair,
    ("grid", "y"): _as_pair,
    ("grid", "n"): _as_int,
    ("stepper", "dt"): _as_float,
    ("stepper", "newton_tol"): _as_float,
    ("stepper", "newton_max_iter"): _as_int,
    ("stepper", "eps_deg"): _as_float,
}

_CHECKS = {
    ("run", "kind"): (lambda v: v in KINDS, f"must be one of {KINDS}"),
    ("run", "t_end"): (lambda v: v > 0, "must be > 0"),
    ("run", "output"): (lambda v: bool(v), "must not be empty"),
    ("run", "seed"): (lambda v: v >= 0, "must be >= 0"),
    ("physics", "c"): (lambda v: v > 0, "must be > 0"),
    ("physics", "beta"): (lambda v: v > 0, "must be > 0"),
    ("physics", "gamma"): (lambda v: v >= 0, "must be >= 0"),
    ("grid", "dim"): (lambda v: v in (1, 2), "must be 1 or 2"),
    ("grid", "n"): (lambda v: v >= 3, "must be >= 3"),
    ("stepper", "dt"): (lambda v: v > 0, "must be > 0"),
    ("stepper", "scheme"): (lambda v: v in SCHEMES, f"must be one of {SCHEMES}"),
    ("stepper", "newton_tol"): (lambda v: v > 0, "must be > 0"),
    ("stepper", "newton_max_iter"): (lambda v: v >= 1, "must be >= 1"),
    ("stepper", "eps_deg"): (lambda v: v > 0, "must be > 0"),
    ("stepper", "boundary"): (lambda v: v in BOUNDARY_VARIANTS, f"must be one of {BOUNDARY_VARIANTS}"),
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run config; every problem is reported at once."""
    entries, problems = _read_sections(text)
    values = {sec: dict(defaults) for sec, defaults in _SCHEMA.items()}
    recipe_raw, recipe_lines = {}, {}
    seen = {}
    for no, sec, key, raw in entries:
        if sec not in _SCHEMA:
            continue
        if (sec, key) in seen:
            problems.append(f"line {no}: [{sec}] {key} repeats line {seen[sec, key]}")
            continue
        seen[sec, key] = no
        if sec == "initial" and key != "recipe":
            recipe_raw[key], recipe_lines[key] = raw, no
            continue
        if key not in _SCHEMA[sec]:
            near = difflib.get_close_matches(key, _SCHEMA[sec], n=1)
            hint = f"; nearest valid key is {near[0]!r}" if near else ""
            problems.append(f"line {no}: unknown key [{sec}] {key!r}{hint}")
            continue
        try:
            val = _CONVERT.get((sec, key), str)(raw)
        except ValueError as exc:
            problems.append(f"line {no}: [{sec}] {key} = {raw!r} is invalid ({exc})")
            continue
        check = _CHECKS.get((sec, key))
        if check and not check[0](val):
            problems.append(f"line {no}: [{sec}] {key} = {raw} {check[1]}")
            continue
        values[sec][key] = val

    recipe = values["initial"]["recipe"]
    if recipe not in INITIAL_RECIPES:
        problems.extend(f"line {seen.get(('initial', 'recipe'), '?')}: {p}" for p in check_recipe_params(recipe, {}))
    else:
        for key in recipe_raw:
            for p in check_recipe_params(recipe, {key: None}):
                problems.append(f"line {recipe_lines[key]}: [initial] {p}")
    recipe_params = {}
    for key, raw in recipe_raw.items():
        try:
            recipe_params[key] = _as_float(raw)
        except ValueError:
            problems.append(f"line {recipe_lines[key]}: [initial] {key} = {raw!r} is not a number")

    dim = values["grid"]["dim"]
    extents = (values["grid"]["x"],) if dim == 1 else (values["grid"]["x"], values["grid"]["y"])
    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems), problems)
    st = values["stepper"]
    return RunConfig(
        kind=values["run"]["kind"],
        physics=PhysicalParams(**values["physics"]),
        grid=GridSpec(dim, extents, values["grid"]["n"]),
        stepper=StepperConfig(st["dt"], st["scheme"], st["newton_tol"], st["newton_max_iter"], st["eps_deg"]),
        boundary=st["boundary"],
        recipe=recipe,
        recipe_params=tuple(sorted(recipe_params.items())),
        t_end=values["run"]["t_end"],
        output=values["run"]["output"],
        seed=values["run"]["seed"],
    )


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------


def fmt(x) -> str:
    """Locale-independent text for a value; floats keep 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x).replace("\n", " ")


def _write_text(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_series(series: dict, path: str):
    rows = [",".join(SERIES_COLUMNS)]
    rows += [
        ",".join(fmt(float(series[c][i])) for c in SERIES_COLUMNS)
        for i in range(len(series["t"]))
    ]
    _write_text(path, "\n".join(rows) + "\n")


def write_report(summary: dict, path: str):
    """Flat ``key = value`` block in insertion order."""
    _write_text(path, "".join(f"{k} = {fmt(v)}\n" for k, v in summary.items()))


def read_report(path: str) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if " = " in line:
                k, v = line.rstrip("\n").split(" = ", 1)
                out[k] = v
    return out


def sort_spectrum(eigenvalues, zero_mask):
    lam = np.asarray(eigenvalues)
    order = np.lexsort((lam.imag, -lam.real))
    return lam[order], np.asarray(zero_mask)[order]


def write_spectrum(eigenvalues, zero_mask, path: str):
    lam, mask = sort_spectrum(eigenvalues, zero_mask)
    rows = ["re,im,is_zero_cluster"]
    rows += [f"{fmt(z.real)},{fmt(z.imag)},{int(m)}" for z, m in zip(lam, mask)]
    _write_text(path, "\n".join(rows) + "\n")


def with_output(cfg: RunConfig, output: str) -> RunConfig:
    return replace(cfg, output=output)
