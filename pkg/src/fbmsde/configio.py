"""Flat ``key = value`` run-configuration files.

Lines are ``key = value`` pairs; ``#`` starts a comment anywhere on a line
and blank lines are ignored.  Values are whitespace- or comma-separated
tokens.  Mesh-like quantities accept dyadic shorthand (``2^-7`` or
``2**-7``) next to plain floats because refinement studies are usually
expressed in powers of two.

Every problem in a file is collected and reported at once through
:class:`~fbmsde.errors.ConfigError`.
"""

from __future__ import annotations

import os

from .errors import ConfigError
from .harness import ExperimentConfig

__all__ = [
    "parse_config_text",
    "load_config_file",
    "experiment_config_from_mapping",
    "limit_params_from_mapping",
]


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat key/value lines, last assignment wins."""
    out: dict[str, str] = {}
    issues: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            issues.append(f"line {lineno}: expected 'key = value', got {raw!r}")
            continue
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            issues.append(f"line {lineno}: empty key")
            continue
        out[key] = value.strip()
    if issues:
        raise ConfigError(issues)
    return out


def load_config_file(path: str | os.PathLike) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config_text(handle.read())


def _tokens(value: str) -> list[str]:
    return value.replace(",", " ").split()


def _parse_dyadic(token: str) -> float:
    for marker in ("2^", "2**"):
        if token.startswith(marker):
            return 2.0 ** int(token[len(marker):])
    return float(token)


def _get_float(mapping, key, issues, default=None, dyadic=False):
    if key not in mapping:
        if default is None:
            issues.append(f"missing required key {key!r}")
        return default
    try:
        return _parse_dyadic(mapping[key]) if dyadic else float(mapping[key])
    except ValueError:
        issues.append(f"key {key!r}: cannot parse {mapping[key]!r} as a number")
        return default


def _get_int(mapping, key, issues, default=None):
    if key not in mapping:
        if default is None:
            issues.append(f"missing required key {key!r}")
        return default
    try:
        return int(mapping[key])
    except ValueError:
        issues.append(f"key {key!r}: cannot parse {mapping[key]!r} as an integer")
        return default


def _get_floats(mapping, key, issues, default=None, dyadic=False):
    if key not in mapping:
        if default is None:
            issues.append(f"missing required key {key!r}")
        return default
    try:
        return tuple(_parse_dyadic(tok) if dyadic else float(tok)
                     for tok in _tokens(mapping[key]))
    except ValueError:
        issues.append(f"key {key!r}: cannot parse {mapping[key]!r} as numbers")
        return default

def _get_bool(mapping, key, issues, default=False):
    if key not in mapping:
        return default
    token = mapping[key].strip().lower()
    if token in ("1", "true", "yes", "on"):
        return True
    if token in ("0", "false", "no", "off"):
        return False
    issues.append(f"key {key!r}: cannot parse {mapping[key]!r} as a boolean")
    return default


def _parse_matrix(value: str, issues: list[str]):
    try:
        rows = tuple(tuple(float(tok) for tok in _tokens(chunk))
                     for chunk in value.split(";") if chunk.strip())
    except ValueError:
        issues.append(f"key 'linear_matrix': cannot parse {value!r}")
        return None
    if not rows or any(len(row) != len(rows) for row in rows):
        issues.append("key 'linear_matrix': matrix must be square, rows "
                      "separated by ';'")
        return None
    return rows


_EXPERIMENT_KEYS = {
    "drift", "x0", "t_final", "hurst", "schemes", "meshes", "master_mesh",
    "mc_paths", "seed", "out", "threads", "sup_error", "newton_tol",
    "newton_max_iter", "sampler", "zero_noise", "linear_matrix",
}


def experiment_config_from_mapping(mapping: dict[str, str],
                                   overrides: dict | None = None
                                   ) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig`, reporting all problems at once.

    ``overrides`` (already-typed values, usually from command-line flags)
    replace file values after parsing.
    """
    issues: list[str] = []
    unknown = sorted(set(mapping) - _EXPERIMENT_KEYS)
    issues.extend(f"unknown key {key!r}" for key in unknown)

    drift = mapping.get("drift")
    if drift is None:
        issues.append("missing required key 'drift'")
    x0 = _get_floats(mapping, "x0", issues)
    t_final = _get_float(mapping, "t_final", issues)
    hurst = _get_floats(mapping, "hurst", issues)
    schemes = tuple(_tokens(mapping["schemes"])) if "schemes" in mapping \
        else ("bem",)
    meshes = _get_floats(mapping, "meshes", issues, dyadic=True)
    master_mesh = None
    if "master_mesh" in mapping:
        master_mesh = _get_float(mapping, "master_mesh", issues, dyadic=True)
    mc_paths = _get_int(mapping, "mc_paths", issues, default=1)
    seed = _get_int(mapping, "seed", issues)
    threads = _get_int(mapping, "threads", issues, default=1)
    sup_error = _get_bool(mapping, "sup_error", issues)
    zero_noise = _get_bool(mapping, "zero_noise", issues)
    newton_tol = _get_float(mapping, "newton_tol", issues, default=1e-12)
    newton_max_iter = _get_int(mapping, "newton_max_iter", issues, default=50)
    sampler = mapping.get("sampler", "circulant")
    linear_matrix = None
    if "linear_matrix" in mapping:
        linear_matrix = _parse_matrix(mapping["linear_matrix"], issues)

    if issues:
        raise ConfigError(issues)
    cfg = ExperimentConfig(
        drift=drift,
        x0=x0,
        t_final=t_final,
        hurst_values=hurst,
        schemes=schemes,
        meshes=meshes,
        master_mesh=master_mesh,
        mc_paths=mc_paths,
        seed=seed,
        out=mapping.get("out"),
        threads=threads,
        sup_error=sup_error,
        newton_tol=newton_tol,
        newton_max_iter=newton_max_iter,
        sampler=sampler,
        zero_noise=zero_noise,
        linear_matrix=linear_matrix,
    )
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    return cfg


_LIMIT_KEYS = {
    "drift", "x0", "hurst", "t", "n_values", "p", "mc_paths", "master_factor",
    "seed", "out", "threads", "sampler", "newton_tol", "linear_matrix",
}


def limit_params_from_mapping(mapping: dict[str, str]) -> dict:
    """Typed parameters for a limit-comparison run."""
    issues: list[str] = []
    unknown = sorted(set(mapping) - _LIMIT_KEYS)
    issues.extend(f"unknown key {key!r}" for key in unknown)

    params: dict = {}
    params["drift"] = mapping.get("drift")
    if params["drift"] is None:
        issues.append("missing required key 'drift'")
    params["x0"] = _get_floats(mapping, "x0", issues)
    params["hurst"] = _get_float(mapping, "hurst", issues)
    params["t"] = _get_float(mapping, "t", issues)
    n_values = mapping.get("n_values")
    if n_values is None:
        issues.append("missing required key 'n_values'")
        params["n_values"] = None
    else:
        try:
            params["n_values"] = tuple(
                int(round(_parse_dyadic(tok))) for tok in _tokens(n_values))
        except ValueError:
            issues.append(f"key 'n_values': cannot parse {n_values!r}")
            params["n_values"] = None
    params["p"] = _get_float(mapping, "p", issues, default=1.0)
    params["mc_paths"] = _get_int(mapping, "mc_paths", issues, default=100)
    params["master_factor"] = _get_int(mapping, "master_factor", issues, default=8)
    params["seed"] = _get_int(mapping, "seed", issues)
    params["threads"] = _get_int(mapping, "threads", issues, default=1)
    params["sampler"] = mapping.get("sampler", "circulant")
    params["newton_tol"] = _get_float(mapping, "newton_tol", issues, default=1e-12)
    params["out"] = mapping.get("out")
    params["linear_matrix"] = None
    if "linear_matrix" in mapping:
        params["linear_matrix"] = _parse_matrix(mapping["linear_matrix"], issues)
    if issues:
        raise ConfigError(issues)
    return params
