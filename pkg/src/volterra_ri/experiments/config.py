"""Flat ``section.key = value`` configuration files.

Grammar: one entry per line, ``#`` starts a comment, blank lines are
ignored, keys are case-sensitive dotted names from :data:`DEFAULTS`.
Missing keys take the mortality-study defaults; every default that is used
is logged with its provenance.
"""

import hashlib
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError, VolterraRIError
from ..kernels import DiscreteGrid, KernelSpec
from ..market import MarketParams, moment_fit
from ..mortality import MortalityParams
from ..strategies import RiskAversion

log = logging.getLogger(__name__)

STUDY = "mortality study defaults"
ARTIFACT = "artifact choice"

# key -> (default, parser name, provenance)
DEFAULTS = {
    "mortality.lambda0": (0.18, "float", STUDY),
    "mortality.b1": (0.15, "float", STUDY),
    "mortality.a1": (0.5, "float", STUDY),
    "mortality.sigma_lambda": (0.1, "float", STUDY),
    "mortality.baseline": (0.0, "float", STUDY),
    "mortality.history_start": (-20.0, "float", STUDY),
    "mortality.start_age": (30.0, "float", STUDY),
    "kernel.family": ("fractional", "str", STUDY),
    "kernel.alpha": (1.33, "float", STUDY),
    "kernel.c": (1.0, "float", STUDY),
    "kernel.lambda_decay": (0.0, "float", ARTIFACT),
    "comparison.markov_model": ("closed_form", "str", STUDY),
    "comparison.use_history": (True, "bool", STUDY),
    "market.r": (0.05, "float", STUDY),
    "market.mu": (0.07, "float", STUDY),
    "market.sigma": (0.2, "float", STUDY),
    "market.eta": (0.2, "float", STUDY),
    "market.theta": (0.2, "float", ARTIFACT),
    "market.k1": (10.0, "float", STUDY),
    "market.x0": (10.0, "float", STUDY),
    "market.s0": (1.0, "float", ARTIFACT),
    "claims.family": ("gamma", "str", ARTIFACT),
    "claims.mu_z": (1.0, "float", STUDY),
    "claims.m2": (1.2, "float", STUDY),
    "claims.z_max": (None, "optfloat", ARTIFACT),
    "risk.phi1": (1.0, "float", STUDY),
    "risk.phi2": (0.0, "float", STUDY),
    "risk.phi1_sweep": ((0.5, 0.6, 0.7, 0.8, 0.9, 1.0), "floatlist", STUDY),
    "risk.constraint": ("nonnegative", "str", ARTIFACT),
    "grid.T": (3.0, "float", STUDY),
    "grid.steps_per_year": (128, "int", ARTIFACT),
    "run.seed": (42, "int", ARTIFACT),
    "run.n_paths": (1, "int", ARTIFACT),
    "run.verify_paths": (2000, "int", ARTIFACT),
    "output.dir": ("results", "str", ARTIFACT),
}

_LINE = re.compile(r"^\s*([A-Za-z_][\w]*\.[A-Za-z_][\w]*)\s*=\s*(.*?)\s*$")


def _parse_value(kind, raw):
    if kind == "float":
        return float(raw)
    if kind == "int":
        v = float(raw)
        if v != int(v):
            raise ValueError(f"expected an integer, got {raw}")
        return int(v)
    if kind == "str":
        if not raw:
            raise ValueError("empty value")
        return raw
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected true or false, got {raw}")
    if kind == "optfloat":
        return None if raw.lower() in ("none", "") else float(raw)
    if kind == "floatlist":
        items = [s for s in re.split(r"[,\s]+", raw) if s]
        if not items:
            raise ValueError("empty list")
        return tuple(float(s) for s in items)
    raise AssertionError(kind)


def parse_entries(text):
    """Parse config text into ``{key: (value, line)}``; raises ConfigError."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        m = _LINE.match(body)
        if not m:
            raise ConfigError("expected 'section.key = value'", line=lineno)
        key, raw = m.group(1), m.group(2)
        if key not in DEFAULTS:
            raise ConfigError("unknown key", line=lineno, field=key)
        if key in out:
            raise ConfigError("duplicate key", line=lineno, field=key)
        kind = DEFAULTS[key][1]
        try:
            out[key] = (_parse_value(kind, raw), lineno)
        except ValueError as exc:
            raise ConfigError(str(exc), line=lineno, field=key) from None
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated parameter set for one experiment.

    ``values`` holds every key with its final value; ``provenance`` maps
    each key to ``"file"`` or its default's provenance tag.
    """

    values: dict
    provenance: dict
    source_text: str = ""
    mortality: MortalityParams = field(init=False, repr=False)
    market: MarketParams = field(init=False, repr=False)
    claims: object = field(init=False, repr=False)
    risk: RiskAversion = field(init=False, repr=False)

    def __post_init__(self):
        v = self.values
        lines = {k: p[1] for k, p in self.provenance.items() if isinstance(p, tuple)}

        def guard(keys, fn):
            try:
                return fn()
            except VolterraRIError as exc:
                key = keys[0]
                raise ConfigError(str(exc), line=lines.get(key), field=key) from None

        kernel = guard(["kernel.family", "kernel.alpha", "kernel.c"], lambda: KernelSpec(
            v["kernel.family"], c=v["kernel.c"], alpha=v["kernel.alpha"], lambda_decay=v["kernel.lambda_decay"]))
        base = v["mortality.baseline"]
        if base < 0:
            raise ConfigError("baseline must be nonnegative", line=lines.get("mortality.baseline"),
                              field="mortality.baseline")
        l_fn = None if base == 0 else (lambda t, b=base: b + 0.0 * t)
        mort = guard(["mortality.lambda0"], lambda: MortalityParams(
            v["mortality.lambda0"], v["mortality.b1"], v["mortality.a1"], v["mortality.sigma_lambda"], kernel, l_fn))
        market = guard(["market.eta"], lambda: MarketParams(
            r=v["market.r"], mu=v["market.mu"], sigma=v["market.sigma"], theta=v["market.theta"],
            eta=v["market.eta"], k1=v["market.k1"]))
        claims = guard(["claims.family"], lambda: moment_fit(
            v["claims.family"], v["claims.mu_z"], v["claims.m2"], v["claims.z_max"]))
        risk = guard(["risk.phi1", "risk.phi2"], lambda: RiskAversion(v["risk.phi1"], v["risk.phi2"]))
        for key in ("run.n_paths", "run.verify_paths"):
            if v[key] < 1:
                raise ConfigError("must be at least 1", line=lines.get(key), field=key)
        if any(p <= 0 for p in v["risk.phi1_sweep"]):
            raise ConfigError("sweep values must be positive", line=lines.get("risk.phi1_sweep"),
                              field="risk.phi1_sweep")
        if v["mortality.history_start"] > 0:
            raise ConfigError("history must start at or before time 0", line=lines.get("mortality.history_start"),
                              field="mortality.history_start")
        if v["comparison.markov_model"] != "closed_form":
            raise ConfigError("only the closed_form Markov forecast is supported",
                              line=lines.get("comparison.markov_model"), field="comparison.markov_model")
        if v["risk.constraint"] not in ("nonnegative", "unit_interval"):
            raise ConfigError("constraint must be nonnegative or unit_interval",
                              line=lines.get("risk.constraint"), field="risk.constraint")
        guard(["grid.steps_per_year"], lambda: self.grid)
        object.__setattr__(self, "mortality", mort)
        object.__setattr__(self, "market", market)
        object.__setattr__(self, "claims", claims)
        object.__setattr__(self, "risk", risk)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def grid(self):
        """Simulation grid from the history start to the horizon."""
        return DiscreteGrid.per_year(
            self.values["mortality.history_start"], self.values["grid.T"], self.values["grid.steps_per_year"]
        )

    @property
    def markov_kernel(self):
        return KernelSpec.constant(1.0)

    @property
    def all_default(self):
        return all(p != "file" and not isinstance(p, tuple) for p in self.provenance.values())

    def digest(self):
        """SHA-256 of the canonical ``key = value`` listing."""
        canon = "\n".join(f"{k} = {_fmt(self.values[k])}" for k in sorted(self.values))
        return hashlib.sha256(canon.encode()).hexdigest()

    def with_overrides(self, **kv):
        """Copy with keys replaced (dots written as double underscores)."""
        values = dict(self.values)
        prov = dict(self.provenance)
        for k, val in kv.items():
            key = k.replace("__", ".")
            if key not in DEFAULTS:
                raise ConfigError("unknown key", field=key)
            values[key] = val
            prov[key] = "override"
        return ExperimentConfig(values, prov, self.source_text)


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    return repr(v)


def config_from_text(text):
    entries = parse_entries(text)
    values, prov = {}, {}
    for key, (default, _, tag) in DEFAULTS.items():
        if key in entries:
            values[key] = entries[key][0]
            prov[key] = ("file", entries[key][1])
        else:
            values[key] = default
            prov[key] = tag
    if not entries:
        log.info("configuration is empty; every value is a default")
    for key in DEFAULTS:
        if not isinstance(prov[key], tuple):
            log.info("default %s = %s (%s)", key, _fmt(values[key]), prov[key])
    return ExperimentConfig(values, prov, text)


def load_config(path):
    """Read and validate a configuration file.

    Raises
    ------
    ConfigError
        With the line number and key of the offending entry.
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror or exc}") from None
    return config_from_text(text)


def default_config():
    return config_from_text("")


__all__ = ["DEFAULTS", "ExperimentConfig", "config_from_text", "default_config", "load_config", "parse_entries"]
