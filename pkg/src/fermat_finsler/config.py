"""Key-value config files describing a chart, its fields and run settings.

Example::

    # rotating frame, w = 0.5
    let w = 0.5
    dim = 2
    periods = [none, none]
    bounds = [[-3, 3],
              [-3, 3]]
    g0 = [[1, 0], [0, 1]]
    delta = [-w*x2, w*x1]
    d_delta = [[0, -w], [w, 0]]
    beta = 1

``let`` lines define named constants usable in later expressions.  A list
value may span several lines as long as its brackets are open.  ``d_<field>``
supplies analytic partials with the derivative index last.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .expr import evaluate_constant
from .fields import ChartDomain, OneFormField, RiemannianField, ScalarField, VectorField
from .fermat import StationarySpacetime, fermat_metric, reversed_fermat_metric
from .finsler import RandersMetric

KINDS = ("spacetime", "randers", "riemannian")
STRUCTURE_KEYS = ("kind", "name", "dim", "periods", "bounds")
FIELD_KEYS = {
    "g0": RiemannianField,
    "delta": VectorField,
    "beta": ScalarField,
    "phi": ScalarField,
    "h": RiemannianField,
    "omega": OneFormField,
}
RUN_KEYS = (
    "source",
    "target",
    "velocity",
    "t0",
    "interval",
    "energy",
    "horizon",
    "s_max",
    "events",
    "N",
    "K",
    "tol",
    "step",
    "resolution",
    "stencil",
    "seed",
    "direction",
)
KEY_ORDER = STRUCTURE_KEYS + tuple(k for f in FIELD_KEYS for k in (f, f"d_{f}")) + RUN_KEYS
_NAME = re.compile(r"^[A-Za-z_][A-Za-z_0-9]*$")


@dataclass
class Config:
    """Parsed config: raw values (strings or nested lists of strings) plus ``let`` constants."""

    values: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    path: str | None = None

    def constant_values(self) -> dict:
        out: dict[str, float] = {}
        for name, text in self.constants.items():
            out[name] = evaluate_constant(text, out)
        return out

    def has(self, key) -> bool:
        return key in self.values and not _is_none(self.values[key])

    def raw(self, key, default=None):
        return self.values.get(key, default)

    def number(self, key, default=None) -> float | None:
        if not self.has(key):
            return default
        v = self.values[key]
        if isinstance(v, list):
            raise ConfigError(f"{key} must be a single number")
        return _number(v, self.constant_values(), key)

    def integer(self, key, default=None) -> int | None:
        v = self.number(key, None)
        if v is None:
            return default
        if v != int(v):
            raise ConfigError(f"{key} must be an integer, got {v}")
        return int(v)

    def vector(self, key, default=None) -> np.ndarray | None:
        if not self.has(key):
            return default
        v = self.values[key]
        if not isinstance(v, list) or any(isinstance(e, list) for e in v):
            raise ConfigError(f"{key} must be a flat list of numbers")
        consts = self.constant_values()
        return np.array([_number(e, consts, key) for e in v])

    def word(self, key, default=None) -> str | None:
        if not self.has(key):
            return default
        v = self.values[key]
        if isinstance(v, list):
            raise ConfigError(f"{key} must be a single word")
        return v.strip()

    def set(self, key, value):
        """Override a value from Python data (numbers, strings, nested lists)."""
        _check_key(key)
        self.values[key] = _to_raw(value)

    @property
    def kind(self) -> str:
        k = self.word("kind")
        if k is None:
            if any(k in self.values for k in ("g0", "delta", "beta", "phi")):
                return "spacetime"
            if "omega" in self.values:
                return "randers"
            if "h" in self.values:
                return "riemannian"
            raise ConfigError("cannot infer kind: give kind or some field entries")
        if k not in KINDS:
            raise ConfigError(f"kind must be one of {', '.join(KINDS)}, got {k!r}")
        return k

    def dump(self) -> str:
        lines = [f"let {k} = {v}" for k, v in self.constants.items()]
        for key in KEY_ORDER:
            if key in self.values:
                lines.append(f"{key} = {_format(self.values[key])}")
        return "\n".join(lines) + "\n"


def _is_none(v) -> bool:
    return isinstance(v, str) and v.strip().lower() == "none"


def _number(text, consts, key) -> float:
    try:
        return evaluate_constant(str(text), consts)
    except ConfigError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _to_raw(value):
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_to_raw(v) for v in value]
    if value is None:
        return "none"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _format(v) -> str:
    if isinstance(v, list):
        return "[" + ", ".join(_format(e) for e in v) + "]"
    return v


def _check_key(key):
    if key in KEY_ORDER:
        return
    raise ConfigError(f"unknown key {key!r}")


def _split_top(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "[(":
            depth += 1
        elif ch in "])":
            depth -= 1
            if depth < 0:
                raise ConfigError(f"unbalanced brackets in {text!r}")
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def parse_value(text: str):
    text = text.strip()
    if not text:
        raise ConfigError("missing value")
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError(f"unterminated list {text!r}")
        inner = text[1:-1]
        if not inner.strip():
            return []
        return [parse_value(p) for p in _split_top(inner)]
    return text


def _depth(text: str) -> int:
    return text.count("[") - text.count("]") + text.count("(") - text.count(")")


def parse_config(text: str, path: str | None = None) -> Config:
    cfg = Config(path=path)
    pending, start = "", 0
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0]
        if not pending and not line.strip():
            continue
        if not pending:
            start = lineno
        pending = f"{pending} {line}" if pending else line
        if _depth(pending) > 0:
            continue
        _statement(cfg, pending.strip(), start)
        pending = ""
    if pending:
        raise ConfigError(f"line {start}: unclosed bracket")
    return cfg


def _statement(cfg: Config, stmt: str, lineno: int):
    if "=" not in stmt:
        raise ConfigError(f"line {lineno}: expected 'key = value'")
    key, value = (s.strip() for s in stmt.split("=", 1))
    try:
        if key.startswith("let "):
            name = key[4:].strip()
            if not _NAME.match(name) or name in ("pi", "e") or re.match(r"^x\d+$", name):
                raise ConfigError(f"invalid constant name {name!r}")
            evaluate_constant(value, cfg.constant_values())
            cfg.constants[name] = value.strip()
            return
        _check_key(key)
        if key in cfg.values:
            raise ConfigError(f"duplicate key {key!r}")
        cfg.values[key] = parse_value(value)
    except ConfigError as exc:
        raise ConfigError(f"line {lineno}: {exc}") from None


def load_config(path) -> Config:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(p))


# -- building objects ---------------------------------------------------------------


def build_domain(cfg: Config) -> ChartDomain:
    dim = cfg.integer("dim")
    if dim is None:
        raise ConfigError("dim is required")
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    consts = cfg.constant_values()
    periods = [None] * dim
    if "periods" in cfg.values:
        raw = cfg.values["periods"]
        if not isinstance(raw, list) or len(raw) != dim:
            raise ConfigError(f"periods needs {dim} entries")
        periods = [None if _is_none(p) else _number(p, consts, "periods") for p in raw]
    bounds = [None] * dim
    if "bounds" in cfg.values:
        raw = cfg.values["bounds"]
        if not isinstance(raw, list) or len(raw) != dim:
            raise ConfigError(f"bounds needs {dim} entries")
        bounds = []
        for b in raw:
            if _is_none(b):
                bounds.append(None)
            elif isinstance(b, list) and len(b) == 2:
                bounds.append((_number(b[0], consts, "bounds"), _number(b[1], consts, "bounds")))
            else:
                raise ConfigError("each bounds entry is [lo, hi] or none")
    try:
        return ChartDomain(dim, tuple(periods), tuple(bounds))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_field(cfg: Config, domain: ChartDomain, key: str):
    cls = FIELD_KEYS[key]
    raw = cfg.values[key]
    partials = cfg.values.get(f"d_{key}")
    try:
        return cls.from_expressions(domain, raw, partials, cfg.constant_values(), name=key)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _default_field(domain, key):
    n = domain.dim
    defaults = {"delta": np.zeros(n), "beta": 1.0, "omega": np.zeros(n), "g0": np.eye(n), "h": np.eye(n)}
    return FIELD_KEYS[key].constant(domain, defaults[key], name=key)


def _field_or_default(cfg, domain, key):
    return build_field(cfg, domain, key) if cfg.has(key) else _default_field(domain, key)


def build_spacetime(cfg: Config, resolution: int = 21) -> StationarySpacetime:
    if cfg.kind != "spacetime":
        raise ConfigError(f"a spacetime config is required, this one is {cfg.kind!r}")
    dom = build_domain(cfg)
    phi = build_field(cfg, dom, "phi") if cfg.has("phi") else None
    st = StationarySpacetime(
        dom,
        _field_or_default(cfg, dom, "g0"),
        _field_or_default(cfg, dom, "delta"),
        _field_or_default(cfg, dom, "beta"),
        phi,
        name=cfg.word("name", "spacetime"),
    )
    try:
        return st.validate(resolution)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_metric(cfg: Config, direction: str = "future") -> RandersMetric:
    """The Finsler metric a config describes; spacetimes give their (reversed) Fermat metric.

    May raise :class:`~fermat_finsler.errors.RandersConditionError`.
    """
    if cfg.kind == "spacetime":
        st = build_spacetime(cfg)
        return fermat_metric(st) if direction == "future" else reversed_fermat_metric(st)
    dom = build_domain(cfg)
    h = _field_or_default(cfg, dom, "h")
    omega = _field_or_default(cfg, dom, "omega") if cfg.kind == "randers" else _default_field(dom, "omega")
    if cfg.kind == "riemannian" and cfg.has("omega"):
        raise ConfigError("a riemannian config takes no omega")
    m = RandersMetric(h, omega, name=cfg.word("name", cfg.kind))
    return m.reversed() if direction == "past" else m
