"""Run configuration (JSON), external-field presets and result files.

A configuration looks like::

    {
      "regime": {"Finite": 1.0},          # or "Zero" / "Infinity"
      "alpha": 1.0, "beta": 1.0,
      "grid_a": [17, 17, 17], "grid_b": [17, 17, 17],
      "grid_1d": 65, "grid_2d": [33, 33],
      "thickness_schedule": [[0.4, 0.16], [0.2, 0.04]],
      "field_preset_a": "Zero",
      "field_preset_b": {"AxisSine": {"axis": 3, "amplitude": 2.0}},
      "optimizer": {"max_iters": 500, "grad_tol": 1e-6, "restarts": 4},
      "seed": 0,
      "output_path": "results.csv"
    }

The schedule may also be given as ``{"h_a": [...]}``; ``h_b`` is then
generated from ``h_a`` for the regime (see :func:`generate_schedule`).
Only ``regime`` and ``thickness_schedule`` are required.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import REGIMES
from .grid import BC_KINDS, TANGENTIAL, Grid3
from .optimize import OptimizerOptions

CSV_HEADER = (
    "h_a",
    "h_b",
    "ratio",
    "regime",
    "E3d_scaled",
    "S3d_scaled",
    "E_limit",
    "gap",
    "iters",
    "restarts",
    "norm_p_a_L4",
    "norm_p_b_L4_scaled",
)

# generated-schedule exponents: h_b = h_a**p
ZERO_EXPONENT = 3.0
INFINITY_EXPONENT = 0.6

# h_b == ell * h_a**2 is checked to this relative tolerance; values produced by
# generate_schedule match bit for bit, hand-written decimals within rounding
FINITE_RTOL = 1e-12


class ConfigError(ValueError):
    """Malformed or invalid configuration.  ``line``/``column`` locate JSON syntax errors."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line, self.column = line, column


class ResultsError(OSError):
    def __init__(self, message: str, path):
        super().__init__(f"{message}: {path}")
        self.path = str(path)


# -- field presets --------------------------------------------------------------


PRESET_KINDS = ("Zero", "Constant", "AxisSine", "Polynomial")


@dataclass(frozen=True)
class FieldPreset:
    """Thickness-independent external field in rescaled coordinates.

    * ``Zero``
    * ``Constant``: ``value`` is a 3-vector.
    * ``AxisSine``: component ``axis`` (1-based) equals
      ``amplitude * sin(pi * x_axis)``; the others vanish.
    * ``Polynomial``: ``terms`` is a tuple of ``(component, coeff, (e1, e2, e3))``
      adding ``coeff * x1**e1 * x2**e2 * x3**e3`` to a 1-based component.
    """

    kind: str = "Zero"
    value: tuple = (0.0, 0.0, 0.0)
    axis: int = 3
    amplitude: float = 0.0
    terms: tuple = ()

    def __post_init__(self):
        if self.kind not in PRESET_KINDS:
            raise ConfigError(f"unknown field preset {self.kind!r}")
        if len(self.value) != 3:
            raise ConfigError("Constant preset needs a 3-vector")
        if self.axis not in (1, 2, 3):
            raise ConfigError(f"AxisSine axis must be 1, 2 or 3, got {self.axis}")
        for comp, _, powers in self.terms:
            if comp not in (1, 2, 3) or len(powers) != 3 or any(int(p) != p or p < 0 for p in powers):
                raise ConfigError(f"bad polynomial term {(comp, powers)}")

    def __call__(self, x1, x2, x3) -> np.ndarray:
        x1, x2, x3 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (x1, x2, x3)))
        out = np.zeros((3,) + x1.shape)
        if self.kind == "Constant":
            out[:] = np.reshape(self.value, (3,) + (1,) * x1.ndim)
        elif self.kind == "AxisSine":
            coord = (x1, x2, x3)[self.axis - 1]
            out[self.axis - 1] = self.amplitude * np.sin(np.pi * coord)
        elif self.kind == "Polynomial":
            for comp, coeff, (e1, e2, e3) in self.terms:
                out[comp - 1] += coeff * x1**e1 * x2**e2 * x3**e3
        return out

    def to_json(self):
        if self.kind == "Zero":
            return "Zero"
        if self.kind == "Constant":
            return {"Constant": list(self.value)}
        if self.kind == "AxisSine":
            return {"AxisSine": {"axis": self.axis, "amplitude": self.amplitude}}
        return {"Polynomial": [{"component": c, "coeff": k, "powers": list(p)} for c, k, p in self.terms]}

    @classmethod
    def from_json(cls, obj) -> "FieldPreset":
        if obj == "Zero" or obj is None:
            return cls()
        if not isinstance(obj, dict) or len(obj) != 1:
            raise ConfigError(f"field preset must be 'Zero' or a one-key object, got {obj!r}")
        ((kind, body),) = obj.items()
        try:
            if kind == "Constant":
                return cls("Constant", value=tuple(float(v) for v in body))
            if kind == "AxisSine":
                return cls("AxisSine", axis=int(body["axis"]), amplitude=float(body["amplitude"]))
            if kind == "Polynomial":
                terms = tuple(
                    (int(t["component"]), float(t["coeff"]), tuple(int(p) for p in t["powers"])) for t in body
                )
                return cls("Polynomial", terms=terms)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad {kind} preset: {exc}") from exc
        raise ConfigError(f"unknown field preset {kind!r}")


def materialize_field(preset: FieldPreset, grid: Grid3) -> np.ndarray:
    """Evaluate a preset at the grid nodes; shape ``(3, N1, N2, N3)``."""
    return preset(*grid.coords)


# -- run configuration ----------------------------------------------------------


@dataclass(frozen=True)
class Regime:
    kind: str  # "finite" | "zero" | "infinity"
    ell: float | None = None

    def __post_init__(self):
        if self.kind not in REGIMES:
            raise ConfigError(f"unknown regime {self.kind!r}")
        if self.kind == "finite" and not (self.ell is not None and self.ell > 0 and math.isfinite(self.ell)):
            raise ConfigError(f"Finite regime needs a positive ell, got {self.ell!r}")

    def to_json(self):
        return {"Finite": self.ell} if self.kind == "finite" else self.kind.capitalize()

    @classmethod
    def from_json(cls, obj) -> "Regime":
        if obj in ("Zero", "Infinity"):
            return cls(obj.lower())
        if isinstance(obj, dict) and set(obj) == {"Finite"}:
            try:
                return cls("finite", float(obj["Finite"]))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"Finite regime needs a number, got {obj['Finite']!r}") from exc
        raise ConfigError(f"regime must be {{'Finite': ell}}, 'Zero' or 'Infinity', got {obj!r}")


@dataclass(frozen=True)
class RunConfig:
    regime: Regime
    thickness_schedule: tuple
    alpha: float = 1.0
    beta: float = 1.0
    grid_a: tuple = (9, 9, 9)
    grid_b: tuple = (9, 9, 9)
    grid_1d: int = 65
    grid_2d: tuple = (33, 33)
    field_preset_a: FieldPreset = field(default_factory=FieldPreset)
    field_preset_b: FieldPreset = field(default_factory=FieldPreset)
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)
    seed: int = 0
    output_path: str = "results.csv"
    junction_zero: bool = True
    bc_variant: str = TANGENTIAL
    sweep_parallel: bool = True

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ConfigError("alpha and beta must be positive")
        for name, dims, n in (("grid_a", self.grid_a, 3), ("grid_b", self.grid_b, 3), ("grid_2d", self.grid_2d, 2)):
            if len(dims) != n or any(int(d) != d or d < 3 for d in dims):
                raise ConfigError(f"{name} needs {n} integers >= 3, got {list(dims)}")
        if int(self.grid_1d) != self.grid_1d or self.grid_1d < 3:
            raise ConfigError(f"grid_1d must be an integer >= 3, got {self.grid_1d}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"seed must be an unsigned integer, got {self.seed}")
        if self.bc_variant not in BC_KINDS:
            raise ConfigError(f"bc_variant must be one of {BC_KINDS}")
        validate_schedule(self.regime, self.thickness_schedule)

    @property
    def ell(self) -> float:
        return {"finite": self.regime.ell, "zero": 0.0, "infinity": math.inf}[self.regime.kind]


def generate_schedule(regime: Regime, h_a_values) -> tuple:
    """``(h_a, h_b)`` pairs with ``h_b`` computed from ``h_a`` for the regime.

    Finite: ``ell * h_a**2``.  Zero: ``h_a**3``.  Infinity: ``h_a**0.6``, so
    that ``h_b / h_a**2`` grows while ``h_b / sqrt(h_a)`` shrinks.
    """
    out = []
    for h_a in h_a_values:
        h_a = float(h_a)
        if regime.kind == "finite":
            h_b = regime.ell * h_a**2
        elif regime.kind == "zero":
            h_b = h_a**ZERO_EXPONENT
        else:
            h_b = h_a**INFINITY_EXPONENT
        out.append((h_a, h_b))
    return tuple(out)


def validate_schedule(regime: Regime, schedule) -> None:
    if not len(schedule):
        raise ConfigError("thickness_schedule is empty")
    for h_a, h_b in schedule:
        if not (0 < h_a < 1 and 0 < h_b < 1):
            raise ConfigError(f"thickness pair {(h_a, h_b)} outside (0, 1)")
        if regime.kind == "finite" and not math.isclose(h_b, regime.ell * h_a**2, rel_tol=FINITE_RTOL, abs_tol=0.0):
            raise ConfigError(f"thickness pair {(h_a, h_b)} violates h_b = {regime.ell} * h_a^2")
        if regime.kind == "infinity" and not h_b < math.sqrt(h_a):
            raise ConfigError(f"thickness pair {(h_a, h_b)} violates h_b < sqrt(h_a)")
    ratios = [h_b / h_a**2 for h_a, h_b in schedule]
    steps = list(zip(schedule, schedule[1:], ratios, ratios[1:]))
    for p, q, r0, r1 in steps:
        if regime.kind == "zero" and not r1 < r0:
            raise ConfigError(f"h_b/h_a^2 must strictly decrease, but {p} -> {q} gives {r0:.6g} -> {r1:.6g}")
        if regime.kind == "infinity":
            if not r1 > r0:
                raise ConfigError(f"h_b/h_a^2 must strictly increase, but {p} -> {q} gives {r0:.6g} -> {r1:.6g}")
            if not q[1] / math.sqrt(q[0]) < p[1] / math.sqrt(p[0]):
                raise ConfigError(f"h_b/sqrt(h_a) must strictly decrease, but it does not from {p} to {q}")


def _int_tuple(v, name):
    try:
        return tuple(int(x) for x in v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of integers, got {v!r}") from exc


_OPTIMIZER_KEYS = {f.name for f in dataclasses.fields(OptimizerOptions)}
_TOP_KEYS = {f.name for f in dataclasses.fields(RunConfig)}


def config_from_dict(d: dict) -> RunConfig:
    try:
        return _config_from_dict(d)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def _config_from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    for key in ("regime", "thickness_schedule"):
        if key not in d:
            raise ConfigError(f"missing required key {key!r}")
    regime = Regime.from_json(d["regime"])
    sched = d["thickness_schedule"]
    if isinstance(sched, dict):
        if set(sched) != {"h_a"}:
            raise ConfigError("a generated schedule is given as {'h_a': [...]}")
        schedule = generate_schedule(regime, sched["h_a"])
    else:
        try:
            schedule = tuple((float(a), float(b)) for a, b in sched)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"thickness_schedule must be a list of [h_a, h_b] pairs: {exc}") from exc
    opt = d.get("optimizer", {})
    if not isinstance(opt, dict) or set(opt) - _OPTIMIZER_KEYS:
        raise ConfigError(f"optimizer must be an object with keys from {sorted(_OPTIMIZER_KEYS)}")
    try:
        optimizer = OptimizerOptions(**opt)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid optimizer options: {exc}") from exc
    kw = {}
    for key in ("alpha", "beta"):
        if key in d:
            kw[key] = float(d[key])
    for key in ("grid_a", "grid_b", "grid_2d"):
        if key in d:
            kw[key] = _int_tuple(d[key], key)
    if "grid_1d" in d:
        kw["grid_1d"] = int(d["grid_1d"])
    for key in ("field_preset_a", "field_preset_b"):
        if key in d:
            kw[key] = FieldPreset.from_json(d[key])
    if "seed" in d:
        kw["seed"] = d["seed"]
    if "output_path" in d:
        kw["output_path"] = str(d["output_path"])
    if "bc_variant" in d:
        kw["bc_variant"] = d["bc_variant"]
    for key in ("junction_zero", "sweep_parallel"):
        if key in d:
            if not isinstance(d[key], bool):
                raise ConfigError(f"{key} must be true or false")
            kw[key] = d[key]
    return RunConfig(regime=regime, thickness_schedule=schedule, optimizer=optimizer, **kw)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON configuration document."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    return config_from_dict(d)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "regime": cfg.regime.to_json(),
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "grid_a": list(cfg.grid_a),
        "grid_b": list(cfg.grid_b),
        "grid_1d": cfg.grid_1d,
        "grid_2d": list(cfg.grid_2d),
        "thickness_schedule": [list(p) for p in cfg.thickness_schedule],
        "field_preset_a": cfg.field_preset_a.to_json(),
        "field_preset_b": cfg.field_preset_b.to_json(),
        "optimizer": dataclasses.asdict(cfg.optimizer),
        "seed": cfg.seed,
        "output_path": cfg.output_path,
        "junction_zero": cfg.junction_zero,
        "bc_variant": cfg.bc_variant,
        "sweep_parallel": cfg.sweep_parallel,
    }


def serialize_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2)


# -- results ------------------------------------------------------------------


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_results(rows, path) -> tuple[Path, Path]:
    """Write ``rows`` (dataclasses carrying the CSV columns) to CSV plus a sibling JSON.

    Returns the two paths.  The JSON holds every field of every row,
    including nested energy breakdowns.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no result rows to write")
    path = Path(path)
    json_path = path.with_suffix(".json")
    records = [_plain(dataclasses.asdict(r)) for r in rows]
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for rec in records:
                writer.writerow([rec[k] for k in CSV_HEADER])
        json_path.write_text(json.dumps(records, indent=2))
    except OSError as exc:
        raise ResultsError(f"cannot write results ({exc.strerror or exc})", path) from exc
    return path, json_path
