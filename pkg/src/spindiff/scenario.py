"""Scenario files: TOML documents naming an experiment kind and its parameters.

Example::

    kind = "four-spin-effective"
    seed = 0

    [params]
    regime = 1
    azz12 = 40e6      # Hz
    azx12 = 40e6
    azz34 = 9e6
    azx34 = 9e6
    jd = [1e6, 5e6]
    t_max = 2e-3      # s
    n_t = 2001

Frequencies are linear (Hz) unless a key says otherwise.
"""

from __future__ import annotations

import hashlib
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class ScenarioError(ValueError):
    """Parse or validation failure; ``line``/``column`` are set for parse errors."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


# required and optional keys per kind; values are defaults (None = required)
KINDS: dict[str, dict] = {
    "four-spin-exact": {
        "azz12": None, "azx12": None, "azz34": None, "azx34": None, "jd": None,
        "field": 0.051, "t_max": 2e-3, "n_t": 2001, "frame": "hyperfine", "initial": "udud",
    },
    "four-spin-effective": {
        "regime": None, "azz12": 0.0, "azx12": None, "azz34": 0.0, "azx34": None, "jd": None,
        "field": 0.051, "t_max": 2e-3, "n_t": 2001, "initial": "udud",
    },
    "rf-map": {
        "azz12": None, "azx12": None, "azz34": None, "azx34": None, "field": 0.051,
        "omega": 75e3, "rf_min": -12e6, "rf_max": 12e6, "n_rf": 100,
        "jd_min": 0.0, "jd_max": 5e6, "n_jd": 50,
        "window": 200e-6, "samples": 512, "init": "zero-projection", "contrast": 0.05,
    },
    "spectrum": {
        "azz12": None, "azx12": None, "azz34": None, "azx34": None, "field": 0.051,
        "jd_min": 0.0, "jd_max": 5e6, "n_jd": 101, "projection": 0, "frame": "hyperfine",
    },
    "cayley": {
        "rings": [1, 3, 6, 12], "couplings": [1e3, 1e4, 1e5], "units": "rad/s",
        "t_max": 10e-3, "n_t": 201, "n_states": 8, "engine": "ts4", "dt": 0.0,
    },
    "chain-sweep": {
        "m": 40, "gamma0": None, "k": [20], "a_rf": 1e6, "profile": "uniform",
        "k0": 15, "k_width": 2.0, "amplitude_factor": 100.0,
        "tau_min": 1e-4, "tau_max": 0.1, "n_tau": 50, "tau_rf": 1e-3, "total": 1.0,
    },
    "fit": {"tau": None, "signal": None},
    "laplace": {"tau_d": None, "eps": None, "threshold": 0.0, "points_per_decade": 100},
}

_CHOICES = {
    "frame": ("hyperfine", "lab"),
    "init": ("zero-projection", "unpolarized"),
    "units": ("rad/s", "hz"),
    "engine": ("ts4", "exact"),
    "profile": ("uniform", "gaussian"),
    "regime": (1, 2),
}


@dataclass
class Scenario:
    kind: str
    params: dict
    seed: int = 0
    name: str = "scenario"
    source: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        """SHA-256 of the canonical scenario content (including the effective seed)."""
        body = json.dumps({"kind": self.kind, "seed": self.seed, "params": self.params}, sort_keys=True)
        return hashlib.sha256(body.encode()).hexdigest()


_LOC = re.compile(r"line (\d+), column (\d+)")


def parse_text(text: str, name: str = "scenario") -> Scenario:
    if not text.strip():
        raise ScenarioError("parse error: empty scenario file", 1, 1)
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _LOC.search(str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ScenarioError(f"parse error: {_LOC.sub('', str(exc)).strip(' ()')}", line, col) from None
    return from_dict(doc, name)


def load(path: str | Path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    return parse_text(text, p.stem)


def from_dict(doc: dict, name: str = "scenario") -> Scenario:
    unknown_top = set(doc) - {"kind", "seed", "params", "name"}
    if unknown_top:
        raise ScenarioError(f"unknown top-level keys: {sorted(unknown_top)}")
    if "kind" not in doc:
        raise ScenarioError("missing key 'kind'")
    kind = doc["kind"]
    if kind not in KINDS:
        raise ScenarioError(f"unknown kind {kind!r}; expected one of {sorted(KINDS)}")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ScenarioError("'seed' must be a non-negative integer")
    raw = doc.get("params", {})
    if not isinstance(raw, dict):
        raise ScenarioError("'params' must be a table")
    spec = KINDS[kind]
    unknown = set(raw) - set(spec)
    if unknown:
        raise ScenarioError(f"unknown keys for {kind}: {sorted(unknown)}")
    params = {}
    for key, default in spec.items():
        if key in raw:
            params[key] = raw[key]
        elif default is None:
            raise ScenarioError(f"missing key 'params.{key}' for kind {kind}")
        else:
            params[key] = default
        if key in _CHOICES and params[key] not in _CHOICES[key]:
            raise ScenarioError(f"params.{key} = {params[key]!r}; expected one of {_CHOICES[key]}")
    return Scenario(kind, params, seed, doc.get("name", name), doc)
