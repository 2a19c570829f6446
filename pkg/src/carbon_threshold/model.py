"""Scenario definition: diffusion dynamics, economic constants and present bias.

The config format is a flat text document of ``key = value`` lines; ``#``
starts a comment.  :func:`build_scenario` validates it and derives the
composite constants used everywhere else.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import (
    DriftSlopeExceedsDelta,
    InvariantViolation,
    MissingKey,
    OutOfDomain,
    UnknownKey,
)

log = logging.getLogger(__name__)

CONSTANT = "constant"
OU = "ou"
CUSTOM = "custom"
_KIND_ALIASES = {
    "constant": CONSTANT,
    "constantcoefficients": CONSTANT,
    "brownian": CONSTANT,
    "ou": OU,
    "affinevolatilityou": OU,
}

CONFIG_KEYS = (
    "model.kind", "model.mu_bar", "model.sigma", "model.kappa", "model.theta",
    "model.sigma0", "model.sigma1",
    "econ.gamma", "econ.c_ind", "econ.c_tax", "econ.beta_override",
    "econ.l_base", "econ.l_max", "econ.Lambda_bar", "econ.delta",
    "bias.lambda", "bias.alpha",
    "init.x0", "init.T",
    "grid.h", "grid.x_max",
)
_KIND_KEYS = {
    CONSTANT: ("model.mu_bar", "model.sigma"),
    OU: ("model.kappa", "model.theta", "model.sigma0", "model.sigma1"),
}
_REQUIRED = (
    "econ.gamma", "econ.c_ind", "econ.c_tax", "econ.l_base", "econ.l_max",
    "econ.Lambda_bar", "econ.delta", "bias.lambda", "bias.alpha", "init.x0", "init.T",
)
DEFAULT_H = 0.01
_warned_beta: set = set()


@dataclass(frozen=True)
class DiffusionSpec:
    """Uncontrolled drift and volatility of the budget process."""

    kind: str
    mu_bar: float = 0.0
    sigma: float = 1.0
    kappa: float = 0.0
    theta_level: float = 0.0
    sigma0: float = 1.0
    sigma1: float = 0.0
    table_x: tuple = ()
    table_mu: tuple = ()
    table_sigma: tuple = ()
    _interp: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == CUSTOM:
            from scipy.interpolate import PchipInterpolator

            x = np.asarray(self.table_x, dtype=float)
            if x.ndim != 1 or x.size < 4 or np.any(np.diff(x) <= 0):
                raise InvariantViolation("custom table needs >= 4 strictly increasing nodes")
            mu = PchipInterpolator(x, np.asarray(self.table_mu, dtype=float))
            sg = PchipInterpolator(x, np.asarray(self.table_sigma, dtype=float))
            object.__setattr__(self, "_interp", (mu, sg, mu.derivative()))

    @classmethod
    def constant(cls, mu_bar: float, sigma: float) -> "DiffusionSpec":
        return cls(CONSTANT, mu_bar=float(mu_bar), sigma=float(sigma))

    @classmethod
    def ou(cls, kappa: float, theta: float, sigma0: float, sigma1: float) -> "DiffusionSpec":
        return cls(OU, kappa=float(kappa), theta_level=float(theta),
                   sigma0=float(sigma0), sigma1=float(sigma1))

    @classmethod
    def custom(cls, x, mu_bar, sigma) -> "DiffusionSpec":
        """Tabulated coefficients, interpolated with monotone cubics."""
        return cls(CUSTOM, table_x=tuple(map(float, x)), table_mu=tuple(map(float, mu_bar)),
                   table_sigma=tuple(map(float, sigma)))

    @property
    def is_constant(self) -> bool:
        return self.kind == CONSTANT

    def drift_bar(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == CONSTANT:
            return np.full_like(x, self.mu_bar)
        if self.kind == OU:
            return self.kappa * (self.theta_level - x)
        return self._interp[0](x)

    def drift_bar_slope(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == CONSTANT:
            return np.zeros_like(x)
        if self.kind == OU:
            return np.full_like(x, -self.kappa)
        return self._interp[2](x)

    def vol(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == CONSTANT:
            return np.full_like(x, self.sigma)
        if self.kind == OU:
            return self.sigma0 + self.sigma1 * x
        return self._interp[1](x)


@dataclass(frozen=True)
class EconomicParams:
    gamma: float
    c_ind: float
    c_tax: float
    l_base: float
    l_max: float
    lambda_bar_sustain: float
    delta: float
    beta_override: float | None = None

    @property
    def beta_formula(self) -> float:
        return self.c_ind * self.gamma + self.c_tax

    @property
    def beta(self) -> float:
        return self.beta_formula if self.beta_override is None else self.beta_override

    @property
    def margin(self) -> float:
        """Net profit per unit of emission, gamma - beta."""
        return self.gamma - self.beta

    @property
    def Lambda(self) -> float:
        return self.lambda_bar_sustain + self.margin * self.l_base

    @property
    def reward_emitting(self) -> float:
        """Running reward while emitting at the cap: (gamma-beta)*l_max + Lambda."""
        return self.margin * self.l_max + self.Lambda

    @property
    def value_bound(self) -> float:
        return self.reward_emitting / self.delta


@dataclass(frozen=True)
class PresentBias:
    lam: float = 0.0
    alpha: float = 1.0

    @property
    def unbiased(self) -> bool:
        return self.lam == 0.0 or self.alpha == 1.0


@dataclass(frozen=True)
class GridSpec:
    h: float
    x_max: float

    @property
    def n(self) -> int:
        return int(round(self.x_max / self.h))


@dataclass(frozen=True)
class Scenario:
    diffusion: DiffusionSpec
    econ: EconomicParams
    bias: PresentBias
    x0: float
    horizon_T: float
    grid: GridSpec

    def net_drift(self, x):
        return self.diffusion.drift_bar(x) - self.econ.l_base

    def eval_drift_net(self, x):
        """Net drift mu(x) with a domain check."""
        xa = np.asarray(x, dtype=float)
        if np.any(xa < 0) or np.any(xa > self.grid.x_max):
            bad = xa[(xa < 0) | (xa > self.grid.x_max)].flat[0]
            raise OutOfDomain(float(bad), 0.0, self.grid.x_max)
        out = self.net_drift(xa)
        return float(out) if np.ndim(x) == 0 else out

    def vol(self, x):
        return self.diffusion.vol(x)

    @property
    def qh_bound(self) -> float:
        lam, a, d = self.bias.lam, self.bias.alpha, self.econ.delta
        return self.econ.value_bound * (lam * a + d) / (lam + d)

    def to_config(self) -> dict[str, str]:
        return scenario_to_config(self)

    def with_updates(self, updates: Mapping[str, object]) -> "Scenario":
        """Rebuild with some config keys replaced (used by sweeps and tables)."""
        if self.diffusion.kind == CUSTOM:
            raise InvariantViolation("custom diffusions are not config-addressable")
        doc = self.to_config()
        for k, v in updates.items():
            if k not in CONFIG_KEYS:
                raise UnknownKey(k)
            doc[k] = _fmt(v)
        if "init.x0" in updates and "grid.x_max" not in updates:
            doc.pop("grid.x_max", None)
        return build_scenario(doc)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, str):
        return v
    return repr(float(v))


def parse_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines into a dict of raw strings."""
    doc: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvariantViolation(f"line {lineno}: expected 'key = value'", raw)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise UnknownKey(key)
        if key in doc:
            raise InvariantViolation(f"line {lineno}: duplicate key", key)
        doc[key] = value
    return doc


def dump_config(doc: Mapping[str, object]) -> str:
    lines = [f"{k} = {_fmt(doc[k])}" for k in CONFIG_KEYS if k in doc]
    return "\n".join(lines) + "\n"


def load_config(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _num(doc, key, default=None):
    if key not in doc:
        if default is not None:
            return default
        raise MissingKey(key)
    raw = doc[key]
    try:
        val = float(raw)
    except (TypeError, ValueError):
        raise InvariantViolation(f"{key} must be a number", raw) from None
    if not math.isfinite(val):
        raise InvariantViolation(f"{key} must be finite", raw)
    return val


def build_scenario(doc: Mapping[str, object] | str) -> Scenario:
    """Validate a config document and construct an immutable :class:`Scenario`."""
    if isinstance(doc, str):
        doc = parse_config(doc)
    doc = {k: (v if isinstance(v, str) else _fmt(v)) for k, v in doc.items()}
    for k in doc:
        if k not in CONFIG_KEYS:
            raise UnknownKey(k)
    if "model.kind" not in doc:
        raise MissingKey("model.kind")
    kind = _KIND_ALIASES.get(doc["model.kind"].strip().lower())
    if kind is None:
        raise InvariantViolation("model.kind must be 'constant' or 'ou'", doc["model.kind"])
    for k in _KIND_KEYS[kind] + _REQUIRED:
        if k not in doc:
            raise MissingKey(k)

    if kind == CONSTANT:
        diffusion = DiffusionSpec.constant(_num(doc, "model.mu_bar"), _num(doc, "model.sigma"))
    else:
        diffusion = DiffusionSpec.ou(_num(doc, "model.kappa"), _num(doc, "model.theta"),
                                     _num(doc, "model.sigma0"), _num(doc, "model.sigma1"))

    override = doc.get("econ.beta_override", "none").strip().lower()
    beta_override = None if override in ("", "none", "null") else _num(doc, "econ.beta_override")
    econ = EconomicParams(
        gamma=_num(doc, "econ.gamma"), c_ind=_num(doc, "econ.c_ind"), c_tax=_num(doc, "econ.c_tax"),
        l_base=_num(doc, "econ.l_base"), l_max=_num(doc, "econ.l_max"),
        lambda_bar_sustain=_num(doc, "econ.Lambda_bar"), delta=_num(doc, "econ.delta"),
        beta_override=beta_override,
    )
    bias = PresentBias(lam=_num(doc, "bias.lambda"), alpha=_num(doc, "bias.alpha"))
    x0 = _num(doc, "init.x0")
    grid = GridSpec(h=_num(doc, "grid.h", DEFAULT_H),
                    x_max=_num(doc, "grid.x_max", default_x_max(x0)))
    scenario = Scenario(diffusion, econ, bias, x0, _num(doc, "init.T"), grid)
    validate_scenario(scenario)
    return scenario


def default_x_max(x0: float) -> float:
    return float(max(10.0 * x0, 60.0))


def scenario_to_config(s: Scenario) -> dict[str, str]:
    d = s.diffusion
    doc: dict[str, str] = {}
    if d.kind == CONSTANT:
        doc["model.kind"] = CONSTANT
        doc["model.mu_bar"] = _fmt(d.mu_bar)
        doc["model.sigma"] = _fmt(d.sigma)
    elif d.kind == OU:
        doc["model.kind"] = OU
        doc["model.kappa"] = _fmt(d.kappa)
        doc["model.theta"] = _fmt(d.theta_level)
        doc["model.sigma0"] = _fmt(d.sigma0)
        doc["model.sigma1"] = _fmt(d.sigma1)
    else:
        raise InvariantViolation("custom diffusions have no text form")
    e = s.econ
    doc.update({
        "econ.gamma": _fmt(e.gamma), "econ.c_ind": _fmt(e.c_ind), "econ.c_tax": _fmt(e.c_tax),
        "econ.beta_override": _fmt(e.beta_override),
        "econ.l_base": _fmt(e.l_base), "econ.l_max": _fmt(e.l_max),
        "econ.Lambda_bar": _fmt(e.lambda_bar_sustain), "econ.delta": _fmt(e.delta),
        "bias.lambda": _fmt(s.bias.lam), "bias.alpha": _fmt(s.bias.alpha),
        "init.x0": _fmt(s.x0), "init.T": _fmt(s.horizon_T),
        "grid.h": _fmt(s.grid.h), "grid.x_max": _fmt(s.grid.x_max),
    })
    return doc


def make_scenario(diffusion: DiffusionSpec, econ: EconomicParams, bias: PresentBias = PresentBias(),
                  x0: float = 34.0, horizon_T: float = 25.0, h: float = DEFAULT_H,
                  x_max: float | None = None) -> Scenario:
    """Programmatic constructor (the only route for custom diffusions)."""
    grid = GridSpec(h, default_x_max(x0) if x_max is None else float(x_max))
    s = Scenario(diffusion, econ, bias, float(x0), float(horizon_T), grid)
    validate_scenario(s)
    return s


def validate_scenario(s: Scenario) -> None:
    e, b, g = s.econ, s.bias, s.grid
    if not e.delta > 0:
        raise InvariantViolation("delta must be > 0", e.delta)
    if not e.l_max > 0:
        raise InvariantViolation("l_max must be > 0", e.l_max)
    if not e.l_base >= 0:
        raise InvariantViolation("l_base must be >= 0", e.l_base)
    if not e.lambda_bar_sustain >= 0:
        raise InvariantViolation("Lambda_bar must be >= 0", e.lambda_bar_sustain)
    if not e.margin > 0:
        raise InvariantViolation("gamma - beta must be > 0", e.margin)
    if not e.Lambda > 0:
        raise InvariantViolation("Lambda = Lambda_bar + (gamma-beta)*l_base must be > 0", e.Lambda)
    if e.beta_override is not None and abs(e.beta_override - e.beta_formula) > 1e-12 \
            and (e.beta_override, e.beta_formula) not in _warned_beta:
        _warned_beta.add((e.beta_override, e.beta_formula))
        log.warning("beta_override=%g differs from c_ind*gamma + c_tax = %g",
                    e.beta_override, e.beta_formula)
    if not b.lam >= 0:
        raise InvariantViolation("lambda must be >= 0", b.lam)
    if not 0 <= b.alpha <= 1:
        raise InvariantViolation("alpha must lie in [0, 1]", b.alpha)
    if not s.x0 >= 0:
        raise InvariantViolation("x0 must be >= 0", s.x0)
    if not s.horizon_T > 0:
        raise InvariantViolation("T must be > 0", s.horizon_T)
    if not g.h > 0:
        raise InvariantViolation("grid.h must be > 0", g.h)
    if not g.x_max > s.x0:
        raise InvariantViolation("grid.x_max must exceed x0", g.x_max)
    if abs(g.n * g.h - g.x_max) > 1e-9 * g.x_max:
        raise InvariantViolation("grid.x_max must be a multiple of grid.h", g.x_max)

    x = np.linspace(0.0, g.x_max, g.n + 1)
    sig = s.diffusion.vol(x)
    if not np.all(np.isfinite(sig)) or np.any(sig <= 0):
        i = int(np.argmax(~np.isfinite(sig) | (sig <= 0)))
        raise InvariantViolation("volatility must be positive on [0, x_max]", float(x[i]))
    slope = s.diffusion.drift_bar_slope(x)
    over = slope > e.delta * (1 + 1e-12)
    if np.any(over):
        i = int(np.argmax(over))
        raise DriftSlopeExceedsDelta(float(x[i]), float(slope[i]), e.delta)
    if s.diffusion.kind == CUSTOM:
        if np.any(x > s.diffusion.table_x[-1] + 1e-12) or np.any(x < s.diffusion.table_x[0] - 1e-12):
            raise InvariantViolation("custom table must cover [0, x_max]")
        mu = s.diffusion.drift_bar(x)
        lip = np.max(np.abs(np.diff(np.stack([mu, sig]), axis=1))) / g.h
        growth = np.max((np.abs(mu) + sig) / (1.0 + x))
        if not (np.isfinite(lip) and np.isfinite(growth)):
            raise InvariantViolation("custom coefficients are not Lipschitz on the grid")


def replace(s: Scenario, **kw) -> Scenario:
    out = dataclasses.replace(s, **kw)
    validate_scenario(out)
    return out
