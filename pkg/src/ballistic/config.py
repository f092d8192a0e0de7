"""Structured text configs: key-value sections plus whitespace tables.

Format: ``[section]`` headers, ``key = value`` lines, ``#`` comments, and in
table sections one whitespace-separated row per line.  The parser rejects
unknown sections and keys with line-anchored messages; scenario runners
validate the keys they need.  See README for the full schema.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .numbers import Alpha
from .potentials import LimitPeriodicPotential, PeriodicLayer, QuasiPeriodicPotential


class ConfigError(ValueError):
    def __init__(self, line: int | None, message: str):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.line = line


_KV_SECTIONS = {
    "potential": {"kind", "d1", "d2", "R0", "eta", "coupling", "schedule"},
    "quasi": {"alpha", "alpha_quadratic"},
    "scenario": {
        "kind",
        "seed",
        "level",
        "cutoff",
        "theta",
        "gap_min",
        "krect",
        "kres",
        "lambdas",
        "phi_samples",
        "box",
        "resolution",
        "k0",
        "sigma",
        "delta",
        "window_radius",
        "T_min",
        "T_max",
        "T_count",
        "dt",
        "sample_dt",
        "N0",
        "N1",
        "search_bound",
        "profile",
        "k_ring",
        "time",
        "bin_width",
        "closeness_iterations",
        "random_fields",
    },
}
_TABLE_SECTIONS = {
    "layers": 5,  # r q1 q2 re im
    "modes": 6,  # s1x s1y s2x s2y re im
}


@dataclass
class RawConfig:
    sections: dict[str, dict[str, tuple[str, int]]] = field(default_factory=dict)
    tables: dict[str, list[tuple[list[str], int]]] = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        got = self.sections.get(section, {}).get(key)
        return default if got is None else got[0]

    def require(self, section: str, key: str) -> str:
        got = self.sections.get(section, {}).get(key)
        if got is None:
            raise ConfigError(None, f"missing key '{key}' in [{section}]")
        return got[0]

    def line_of(self, section: str, key: str) -> int | None:
        got = self.sections.get(section, {}).get(key)
        return None if got is None else got[1]


def parse_config_text(text: str) -> RawConfig:
    raw = RawConfig()
    current: str | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            if current not in _KV_SECTIONS and current not in _TABLE_SECTIONS:
                raise ConfigError(lineno, f"unknown section [{current}]")
            if current in _KV_SECTIONS:
                raw.sections.setdefault(current, {})
            else:
                raw.tables.setdefault(current, [])
            continue
        if current is None:
            raise ConfigError(lineno, "content before any [section] header")
        if current in _KV_SECTIONS:
            if "=" not in stripped:
                raise ConfigError(lineno, f"expected 'key = value' in [{current}]")
            key, value = (part.strip() for part in stripped.split("=", 1))
            if key not in _KV_SECTIONS[current]:
                raise ConfigError(lineno, f"unknown key '{key}' in [{current}]")
            if key in raw.sections[current]:
                raise ConfigError(lineno, f"duplicate key '{key}' in [{current}]")
            raw.sections[current][key] = (value, lineno)
        else:
            cells = stripped.split()
            want = _TABLE_SECTIONS[current]
            if len(cells) != want:
                raise ConfigError(
                    lineno, f"[{current}] rows need {want} columns, got {len(cells)}"
                )
            raw.tables[current].append((cells, lineno))
    return raw


def _as_float(raw: RawConfig, section: str, key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(raw.line_of(section, key), f"'{key}' must be a number") from None


def _as_int(raw: RawConfig, section: str, key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(raw.line_of(section, key), f"'{key}' must be an integer") from None


def build_potential(raw: RawConfig):
    """Instantiate the configured potential; returns None for kind = free."""
    sec = raw.sections.get("potential")
    if sec is None:
        raise ConfigError(None, "missing [potential] section")
    kind = raw.require("potential", "kind")
    if kind == "free":
        return None
    if kind == "limit_periodic":
        d1 = _as_float(raw, "potential", "d1", raw.get("potential", "d1", "1.0"))
        d2 = _as_float(raw, "potential", "d2", raw.get("potential", "d2", "1.0"))
        r0 = _as_float(raw, "potential", "R0", raw.get("potential", "R0", "10.0"))
        eta = _as_float(raw, "potential", "eta", raw.get("potential", "eta", "0.5"))
        coupling = _as_float(
            raw, "potential", "coupling", raw.get("potential", "coupling", "1.0")
        )
        rows = raw.tables.get("layers", [])
        if not rows:
            raise ConfigError(None, "limit_periodic potential needs a [layers] table")
        per_layer: dict[int, dict] = {}
        for cells, lineno in rows:
            try:
                r = int(cells[0])
                q = (int(cells[1]), int(cells[2]))
                v = complex(float(cells[3]), float(cells[4]))
            except ValueError:
                raise ConfigError(lineno, "bad [layers] row") from None
            per_layer.setdefault(r, {})[q] = v
        layers = tuple(
            PeriodicLayer(r, per_layer[r], (d1, d2)) for r in sorted(per_layer)
        )
        schedule_text = raw.get("potential", "schedule")
        schedule = (
            tuple(int(tok) for tok in schedule_text.split()) if schedule_text else ()
        )
        return LimitPeriodicPotential(
            layers=layers, R0=r0, eta=eta, schedule=schedule, coupling=coupling
        )
    if kind == "quasi_periodic":
        if "quasi" not in raw.sections:
            raise ConfigError(None, "quasi_periodic potential needs a [quasi] section")
        quad = raw.get("quasi", "alpha_quadratic")
        if quad is not None:
            toks = quad.split()
            if len(toks) != 4:
                raise ConfigError(
                    raw.line_of("quasi", "alpha_quadratic"),
                    "alpha_quadratic needs 4 integers: p q r d",
                )
            alpha = Alpha.quadratic(*(int(t) for t in toks))
        else:
            alpha = Alpha.from_decimal(raw.require("quasi", "alpha"))
        coupling = _as_float(
            raw, "potential", "coupling", raw.get("potential", "coupling", "1.0")
        )
        rows = raw.tables.get("modes", [])
        if not rows:
            raise ConfigError(None, "quasi_periodic potential needs a [modes] table")
        modes: dict = {}
        for cells, lineno in rows:
            try:
                key = tuple(int(c) for c in cells[:4])
                modes[key] = complex(float(cells[4]), float(cells[5]))
            except ValueError:
                raise ConfigError(lineno, "bad [modes] row") from None
        return QuasiPeriodicPotential(alpha=alpha, modes=modes, coupling=coupling)
    raise ConfigError(
        raw.line_of("potential", "kind"), f"unknown potential kind '{kind}'"
    )


_SCENARIO_KINDS = ("validate", "bands", "isoenergy", "transform", "transport", "front")


@dataclass
class ExperimentConfig:
    """One parsed scenario: the potential plus numeric parameters."""

    kind: str
    seed: int
    potential: object
    params: dict
    raw: RawConfig

    def param_float(self, key: str, default: float | None = None) -> float:
        val = self.params.get(key)
        if val is None:
            if default is None:
                raise ConfigError(None, f"missing key '{key}' in [scenario]")
            return default
        return _as_float(self.raw, "scenario", key, val)

    def param_int(self, key: str, default: int | None = None) -> int:
        val = self.params.get(key)
        if val is None:
            if default is None:
                raise ConfigError(None, f"missing key '{key}' in [scenario]")
            return default
        return _as_int(self.raw, "scenario", key, val)

    def param_floats(self, key: str, count: int, default=None) -> tuple[float, ...]:
        val = self.params.get(key)
        if val is None:
            if default is None:
                raise ConfigError(None, f"missing key '{key}' in [scenario]")
            return tuple(default)
        toks = val.split()
        if len(toks) != count:
            raise ConfigError(
                self.raw.line_of("scenario", key), f"'{key}' needs {count} numbers"
            )
        return tuple(float(t) for t in toks)

    def param_ints(self, key: str, count: int, default=None) -> tuple[int, ...]:
        got = self.param_floats(key, count, default)
        return tuple(int(round(v)) for v in got)

    def param_str(self, key: str, default: str | None = None) -> str:
        val = self.params.get(key)
        if val is None:
            if default is None:
                raise ConfigError(None, f"missing key '{key}' in [scenario]")
            return default
        return val


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = parse_config_text(fh.read())
    if "scenario" not in raw.sections:
        raise ConfigError(None, "missing [scenario] section")
    kind = raw.require("scenario", "kind")
    if kind not in _SCENARIO_KINDS:
        raise ConfigError(
            raw.line_of("scenario", "kind"), f"unknown scenario kind '{kind}'"
        )
    seed_text = raw.get("scenario", "seed", "0")
    seed = _as_int(raw, "scenario", "seed", seed_text)
    potential = build_potential(raw)
    params = {key: val for key, (val, _) in raw.sections["scenario"].items()}
    return ExperimentConfig(kind=kind, seed=seed, potential=potential, params=params, raw=raw)
