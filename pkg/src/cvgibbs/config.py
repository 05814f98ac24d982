"""Experiment configuration schema and model construction from configs."""

from __future__ import annotations

import json

import numpy as np
from jsonschema import Draft202012Validator

from .errors import ConfigError
from .filters import gaussian_kms, load_filter_table, metropolis
from .fock import Operator, build_basis
from .hamiltonians import (
    AubryAndreParams,
    BoseHubbardParams,
    MeanFieldParams,
    build_aubry_andre,
    build_bose_hubbard,
    build_mean_field,
    build_mott_truncation,
    build_superfluid_truncation,
    square_lattice,
)

SCENARIOS = [
    "filter-audit",
    "gap-vs-psi",
    "gap-vs-truncation",
    "gap-vs-sigmaE",
    "ladder-block-compare",
    "finite-rank-audit",
    "meanfield-eigen-audit",
    "gibbs-trace-distance",
    "mixing-time",
    "free-energy",
    "aubry-andre-spectrum",
]

FAMILIES = ["number", "mean_field", "bose_hubbard", "superfluid", "mott", "aubry_andre"]

_number = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg_int = {"type": "integer", "minimum": 0}
_num_list = {"type": "array", "items": _number}
_int_list = {"type": "array", "items": _nonneg_int}
_sigma = {"oneOf": [{"type": "number", "minimum": 0}, {"const": "inf"}]}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "cvgibbs experiment configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario", "model", "basis", "filter"],
    "properties": {
        "scenario": {"enum": SCENARIOS},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": FAMILIES},
                "lattice": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["D", "L"],
                    "properties": {
                        "D": {"type": "integer", "minimum": 1},
                        "L": {"type": "integer", "minimum": 1},
                        "boundary": {"enum": ["open", "periodic"]},
                    },
                },
                "params": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "J": _number,
                        "U": {"type": "number", "minimum": 0},
                        "mu": _number,
                        "eta": _number,
                        "eta_prime": _number,
                        "psi": _number,
                        "psi_imag": _number,
                        "t": _number,
                        "p": _nonneg_int,
                        "L": {"type": "integer", "minimum": 2},
                        "truncation": _nonneg_int,
                        "coefficients": _num_list,
                    },
                },
            },
        },
        "basis": {
            "type": "object",
            "additionalProperties": False,
            "required": ["per_mode_cutoff"],
            "properties": {
                "n_modes": {"type": "integer", "minimum": 1},
                "per_mode_cutoff": _nonneg_int,
                "total_cutoff": _nonneg_int,
                "max_dim": {"type": "integer", "minimum": 1},
            },
        },
        "filter": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "beta"],
            "properties": {
                "kind": {"enum": ["metropolis", "gaussian_kms", "custom"]},
                "beta": _pos,
                "width": _pos,
                "table": {"type": "string"},
            },
        },
        "generator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sigma_E": _sigma,
                "jumps": {"enum": ["ladder"]},
                "cluster_tol": _pos,
                "max_superop_dim": {"type": "integer", "minimum": 1},
            },
        },
        "scenario_params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "psi_values": _num_list,
                "truncations": _int_list,
                "lattice_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "sigma_E_values": {"type": "array", "items": _sigma},
                "eps_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
                "n_values": _int_list,
                "n_cases": {"type": "integer", "minimum": 1},
                "grid_L": {"type": "integer", "minimum": 1},
                "observable_cutoff": _nonneg_int,
                "M_prime": _nonneg_int,
                "shots": {"type": "integer", "minimum": 1},
                "target_eps": _pos,
                "target_delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "tolerance": _pos,
                "grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["min", "max", "points"],
                    "properties": {"min": _number, "max": _number, "points": {"type": "integer", "minimum": 1}},
                },
                "seed": {"type": "integer", "minimum": 0},
                "exclude_top": _nonneg_int,
                "k_max": _nonneg_int,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}, "uniqueItems": True},
            },
        },
    },
    "allOf": [
        {
            "if": {"properties": {"scenario_params": {"required": ["shots"]}}, "required": ["scenario_params"]},
            "then": {"properties": {"scenario_params": {"required": ["seed"]}}},
        },
        {
            "if": {"properties": {"scenario": {"const": "finite-rank-audit"}}},
            "then": {"required": ["scenario_params"], "properties": {"scenario_params": {"required": ["seed"]}}},
        },
    ],
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "cvgibbs experiment report",
    "type": "object",
    "additionalProperties": False,
    "required": ["config", "version", "scenario", "summary", "checks", "passed", "series", "timestamp", "wall_clock_seconds"],
    "properties": {
        "config": {"type": "object"},
        "version": {"type": "string"},
        "scenario": {"enum": SCENARIOS},
        "summary": {"type": "object"},
        "checks": {"type": "object", "additionalProperties": {"type": "boolean"}},
        "passed": {"type": "boolean"},
        "series": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["columns", "rows"],
                "properties": {"columns": {"type": "array", "items": {"type": "string"}}, "rows": {"type": "integer"}},
            },
        },
        "timestamp": {"type": "string"},
        "wall_clock_seconds": {"type": "number"},
    },
}


def validate_config(config) -> None:
    """Raise ConfigError listing every schema violation."""
    errors = sorted(Draft202012Validator(CONFIG_SCHEMA).iter_errors(config), key=lambda e: list(e.path))
    if errors:
        lines = [f"{'/'.join(str(p) for p in e.path) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines))
    _semantic_checks(config)


def _semantic_checks(config):
    fam = config["model"]["family"]
    params = config["model"].get("params", {})
    if fam in ("bose_hubbard", "superfluid", "mott"):
        if "lattice" not in config["model"]:
            raise ConfigError(f"model family '{fam}' needs a lattice block")
        has_mu = "mu" in params
        has_eta = "eta" in params or "eta_prime" in params
        if has_mu == has_eta or "J" not in params or "U" not in params:
            raise ConfigError("Bose-Hubbard params need J, U and either mu or (eta, eta_prime)")
        if has_eta and not ("eta" in params and "eta_prime" in params):
            raise ConfigError("both eta and eta_prime are required")
    if fam in ("superfluid", "mott") and "truncation" not in params and config["scenario"] not in (
        "gap-vs-truncation", "gibbs-trace-distance"
    ):
        raise ConfigError(f"model family '{fam}' needs params.truncation")
    if fam == "mean_field" and not {"mu", "U"} <= set(params):
        raise ConfigError("mean_field params need mu and U")
    if fam == "aubry_andre" and not {"t", "p", "L"} <= set(params):
        raise ConfigError("aubry_andre params need t, p and L")
    if config["filter"]["kind"] == "custom" and "table" not in config["filter"]:
        raise ConfigError("custom filter needs a table path")


def load_config(path) -> dict:
    """Read JSON; OSError propagates, malformed JSON becomes ConfigError."""
    with open(path) as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def make_filter(block):
    kind = block["kind"]
    if kind == "metropolis":
        return metropolis(block["beta"])
    if kind == "gaussian_kms":
        return gaussian_kms(block["beta"], block.get("width"))
    return load_filter_table(block["table"], block["beta"])


def sigma_value(v) -> float:
    return np.inf if v == "inf" else float(v)


def n_modes_for(config) -> int:
    model = config["model"]
    fam = model["family"]
    if fam in ("bose_hubbard", "superfluid", "mott"):
        lat = model["lattice"]
        return lat["L"] ** lat["D"]
    if fam == "aubry_andre":
        return model["params"]["L"] ** 2
    return config["basis"].get("n_modes", 1)


def make_basis(config, lattice_L=None):
    b = config["basis"]
    n = n_modes_for(config) if lattice_L is None else lattice_L ** config["model"]["lattice"]["D"]
    if "n_modes" in b and lattice_L is None and b["n_modes"] != n:
        raise ConfigError(f"basis.n_modes={b['n_modes']} does not match the model's {n} modes")
    return build_basis(n, b["per_mode_cutoff"], b.get("total_cutoff"), b.get("max_dim", 20000))


def bh_params(params) -> BoseHubbardParams:
    if "mu" in params:
        return BoseHubbardParams(params["J"], params["U"], mu=params["mu"])
    return BoseHubbardParams(params["J"], params["U"], eta=params["eta"], eta_prime=params["eta_prime"])


def lattice_for(config, L=None):
    lat = config["model"]["lattice"]
    return square_lattice(lat["D"], lat["L"] if L is None else L, lat.get("boundary", "open"))


def mean_field_params(params, psi=None) -> MeanFieldParams:
    if psi is None:
        psi = complex(params.get("psi", 0.0), params.get("psi_imag", 0.0))
    return MeanFieldParams(params["mu"], params["U"], psi)


def build_hamiltonian(config, basis, truncation=None, lattice_L=None, psi=None) -> Operator:
    """Hamiltonian named by the model block on the given basis."""
    model = config["model"]
    fam = model["family"]
    params = model.get("params", {})
    if fam == "number":
        coeffs = params.get("coefficients", [0.0, 1.0])
        occ = basis.occupations.astype(float)
        diag = sum(c * occ**k for k, c in enumerate(coeffs)).sum(axis=1)
        return Operator(basis, np.diag(diag.astype(complex)), True, f"h(N) coeffs={coeffs}")
    if fam == "mean_field":
        return build_mean_field(mean_field_params(params, psi), basis)
    if fam == "aubry_andre":
        return build_aubry_andre(AubryAndreParams(params["t"], params["p"], params["L"]), basis).hamiltonian
    lattice = lattice_for(config, lattice_L)
    p = bh_params(params)
    trunc = params.get("truncation") if truncation is None else truncation
    if fam == "bose_hubbard":
        return build_bose_hubbard(lattice, p, basis)
    if fam == "superfluid":
        return build_superfluid_truncation(lattice, p, trunc, basis)
    return build_mott_truncation(lattice, p, trunc, basis)
