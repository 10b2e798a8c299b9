"""Scenario configuration: JSON schema, validation and construction of objects."""

from __future__ import annotations

import json
from dataclasses import dataclass

import jsonschema
import numpy as np

from .asymptotics import random_initial_state
from .beam_ops import assemble_fd
from .dynamics import FORCING_KINDS, SCHEMES, Forcing, State
from .errors import ConfigError
from .gap_pair import GapSpectrum, MatrixPair, UnstableMode, gap_spectrum, unstable_mode, validate_pair

_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_matrix = {"type": "array", "items": _vector, "minItems": 2}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["discretization"],
    "properties": {
        "discretization": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["source", "n"],
                    "properties": {"source": {"const": "fd"}, "n": {"type": "integer", "minimum": 8, "maximum": 4096}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["source", "A", "B2"],
                    "properties": {"source": {"const": "explicit"}, "A": _matrix, "B2": _matrix},
                },
            ]
        },
        "lambda": {"type": "number"},
        "eigs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"k": {"type": "integer", "minimum": 1}},
        },
        "forcing": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(FORCING_KINDS)},
                "amplitude": {"type": "number", "minimum": 0},
                "amplitude_from": {"enum": ["eps0_explicit", "eps1"]},
                "shape": {"oneOf": [_vector, {"enum": ["e0", "e1", "ones"]}]},
                "rate": {"type": "number", "exclusiveMinimum": 0},
                "omega": {"type": "number"},
                "phase": {"type": "number"},
            },
        },
        "initial": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "u"],
                    "properties": {"kind": {"enum": ["vector", "modes"]}, "u": _vector, "v": _vector},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {"kind": {"const": "stationary"}, "sign": {"enum": [-1, 0, 1]}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"const": "random"},
                        "radius": {"type": "number", "exclusiveMinimum": 0},
                        "velocity_radius": {"type": "number", "minimum": 0},
                        "modes": {"type": "integer", "minimum": 1},
                        "seed": {"type": "integer", "minimum": 0},
                    },
                },
            ]
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "required": ["T"],
            "properties": {
                "T": {"type": "number", "exclusiveMinimum": 0},
                "tol": {"type": "number", "minimum": 1e-12, "maximum": 1e-3},
                "stride": {"type": "number", "exclusiveMinimum": 0},
                "scheme": {"enum": list(SCHEMES)},
            },
        },
        "monitor": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "slack": {"type": "number", "minimum": 0},
                "tail_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["count"],
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "velocity_radius": {"type": "number", "minimum": 0},
                "modes": {"type": "integer", "minimum": 1},
                "flip": {"type": "boolean"},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"trajectory": {"type": "boolean"}, "figures": {"type": "boolean"}},
        },
    },
}


def _where(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def load_config(path) -> dict:
    """Parse and schema-validate a JSON scenario file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(str(exc), where=str(path)) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, where=f"{path}:{exc.lineno}:{exc.colno}") from exc
    return validate_config(raw)


def validate_config(raw: dict) -> dict:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        best = jsonschema.exceptions.best_match(errors) or err
        raise ConfigError(best.message, where=_where(best))
    return raw


@dataclass(frozen=True)
class Scenario:
    """Everything derived from a validated configuration."""

    config: dict
    pair: MatrixPair
    spectrum: GapSpectrum
    is_fd: bool

    @property
    def lam(self) -> float:
        if "lambda" not in self.config:
            raise ConfigError("this command needs 'lambda'", where="lambda")
        return float(self.config["lambda"])

    def mode(self) -> UnstableMode:
        return unstable_mode(self.pair, self.spectrum, self.lam)

    def section(self, name) -> dict:
        return dict(self.config.get(name, {}))


def build_scenario(cfg: dict) -> Scenario:
    disc = cfg["discretization"]
    if disc["source"] == "fd":
        pair = assemble_fd(int(disc["n"]))
        is_fd = True
    else:
        try:
            pair = validate_pair(np.array(disc["A"], dtype=float), np.array(disc["B2"], dtype=float))
        except ValueError as exc:
            raise ConfigError(str(exc), where="discretization") from exc
        is_fd = False
    k = int(cfg.get("eigs", {}).get("k", min(pair.n, 8)))
    if k > pair.n:
        raise ConfigError(f"k={k} exceeds the dimension {pair.n}", where="eigs.k")
    return Scenario(config=cfg, pair=pair, spectrum=gap_spectrum(pair, k=k), is_fd=is_fd)


def _shape(section, sc: Scenario, mode: UnstableMode | None):
    n = sc.pair.n
    if isinstance(section, str):
        if section == "e1":
            return sc.spectrum.e1
        if section == "e0":
            return (mode or sc.mode()).e0
        return np.ones(n)
    g = np.array(section, dtype=float)
    if g.shape != (n,):
        raise ConfigError(f"shape has length {g.size}, expected {n}", where="forcing.shape")
    return g


def build_forcing(sc: Scenario, consts=None) -> Forcing:
    section = sc.section("forcing")
    kind = section.get("kind", "zero")
    if kind == "zero":
        return Forcing("zero")
    amp = section.get("amplitude")
    if "amplitude_from" in section:
        if consts is None:
            raise ConfigError("amplitude_from needs certified constants", where="forcing.amplitude_from")
        amp = getattr(consts, section["amplitude_from"])
    if amp is None:
        raise ConfigError("nonzero forcing needs 'amplitude' or 'amplitude_from'", where="forcing")
    return Forcing(
        kind, float(amp), _shape(section.get("shape", "e1"), sc, None),
        rate=float(section.get("rate", 1.0)), omega=float(section.get("omega", 1.0)), phase=float(section.get("phase", 0.0)),
    )


def build_initial(sc: Scenario, seed: int | None = None) -> State:
    section = sc.section("initial") or {"kind": "stationary", "sign": 1}
    n = sc.pair.n
    kind = section["kind"]
    if kind == "stationary":
        s = section.get("sign", 1)
        u = s * np.sqrt(sc.lam - sc.spectrum.lambda1) * sc.spectrum.e1
        return State(0.0, u, np.zeros(n))
    if kind == "random":
        d = random_initial_state(
            sc.spectrum, section.get("seed", 0) if seed is None else seed, radius=section.get("radius", 3.0),
            velocity_radius=section.get("velocity_radius"), modes=section.get("modes"),
        )
        return d.state
    u = np.array(section["u"], dtype=float)
    v = np.array(section.get("v", np.zeros_like(u)), dtype=float)
    if kind == "modes":
        k = sc.spectrum.vectors.shape[1]
        if u.size > k or v.size > k:
            raise ConfigError(f"at most {k} mode coefficients are available (eigs.k)", where="initial")
        E = sc.spectrum.vectors
        u, v = E[:, : u.size] @ u, E[:, : v.size] @ v
    if u.shape != (n,) or v.shape != (n,):
        raise ConfigError(f"initial vectors must have length {n}", where="initial")
    return State(0.0, u, v)


def integrator_options(sc: Scenario) -> dict:
    section = sc.section("integrator")
    if "T" not in section:
        raise ConfigError("this command needs 'integrator.T'", where="integrator")
    return {
        "T": float(section["T"]),
        "tol": float(section.get("tol", 1e-8)),
        "stride": float(section.get("stride", 0.01)),
        "scheme": section.get("scheme", "ros2"),
    }
