"""Monte Carlo experiment drivers: strong-error rates and stability tables.

A run is described by an :class:`ExperimentConfig`.  Coarse grids are always
index subsets of one fine master grid and every scheme run on a path reuses
the restriction of that path's master noise, so error estimates compare
schemes on identical randomness.  Per-path seeds derive from the master seed
by path index, which makes results independent of the worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from ._parallel import map_indexed
from .drifts import DriftSpec, get_drift, make_linear_drift
from .errors import ConfigError, DomainError
from .fbm import FbmPath, HurstVector, child_seed, coarsen, sample_multi, zero_path
from .grids import Partition
from .integrate import (
    Trajectory,
    backward_euler,
    crank_nicolson,
    forward_euler,
    reference_solution,
)
from .solver import SolveConfig

__all__ = [
    "ExperimentConfig",
    "RateReport",
    "resolve_drift",
    "mc_strong_error",
    "sweep_strong_error",
    "fit_order",
    "stability_compare",
    "reference_bias_check",
]

_SCHEMES = ("bem", "em", "cn")
_REL_TOL = 1e-9


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of a Monte Carlo experiment.

    ``meshes`` are coarse step sizes; each must be an integer multiple of
    ``master_mesh`` and divide ``t_final`` into whole steps.  ``hurst_values``
    lists the Hurst indices to sweep; rate runs take them one at a time.
    ``linear_matrix`` feeds the ``linear`` drift, which has no registry entry
    of its own because it is parameterized.
    """

    drift: str
    x0: tuple[float, ...]
    t_final: float
    hurst_values: tuple[float, ...]
    schemes: tuple[str, ...]
    meshes: tuple[float, ...]
    master_mesh: float | None
    mc_paths: int
    seed: int
    out: str | None = None
    threads: int = 1
    sup_error: bool = False
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    sampler: str = "circulant"
    zero_noise: bool = False
    linear_matrix: tuple[tuple[float, ...], ...] | None = None

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value) if not value or not isinstance(value[0], tuple) \
                    else [list(row) for row in value]
            out[f.name] = value
        return out

    def solve_config(self) -> SolveConfig:
        return SolveConfig(tol=self.newton_tol, max_iter=self.newton_max_iter)


def resolve_drift(cfg: ExperimentConfig) -> DriftSpec:
    """Look up the configured drift, instantiating ``linear`` from its matrix."""
    name = cfg.drift.strip()
    if name == "linear":
        if cfg.linear_matrix is None:
            raise ConfigError("drift 'linear' needs linear_matrix")
        return make_linear_drift(np.asarray(cfg.linear_matrix, dtype=np.float64))
    return get_drift(name)


def _int_ratio(value: float, base: float) -> int | None:
    ratio = value / base
    rounded = int(round(ratio))
    if rounded >= 1 and abs(ratio - rounded) <= _REL_TOL * max(1.0, rounded):
        return rounded
    return None


def _common_issues(cfg: ExperimentConfig) -> tuple[list[str], DriftSpec | None]:
    issues: list[str] = []
    spec = None
    try:
        spec = resolve_drift(cfg)
    except (ConfigError, DomainError) as exc:
        issues.append(str(exc))
    if spec is not None and len(cfg.x0) != spec.dim:
        issues.append(
            f"x0 has {len(cfg.x0)} coordinates but drift {spec.name!r} "
            f"expects {spec.dim}")
    if not cfg.t_final > 0.0:
        issues.append(f"t_final must be positive, got {cfg.t_final}")
    if not cfg.hurst_values:
        issues.append("at least one Hurst value is required")
    for h in cfg.hurst_values:
        if not 0.5 < h < 1.0:
            issues.append(f"Hurst value {h} outside the supported range (0.5, 1)")
    for scheme in cfg.schemes:
        if scheme not in _SCHEMES:
            issues.append(f"unknown scheme {scheme!r}; choose from {_SCHEMES}")
    if not cfg.meshes:
        issues.append("at least one mesh is required")
    for mesh in cfg.meshes:
        if not mesh > 0.0:
            issues.append(f"mesh {mesh} must be positive")
        elif cfg.t_final > 0.0 and _int_ratio(cfg.t_final, mesh) is None:
            issues.append(f"mesh {mesh} does not divide t_final {cfg.t_final} "
                          f"into whole steps")
    if cfg.master_mesh is not None:
        for mesh in cfg.meshes:
            if mesh > 0.0 and _int_ratio(mesh, cfg.master_mesh) is None:
                issues.append(f"mesh {mesh} is not an integer multiple of the "
                              f"master mesh {cfg.master_mesh}")
    if cfg.mc_paths < 1:
        issues.append(f"mc_paths must be >= 1, got {cfg.mc_paths}")
    if cfg.threads < 1:
        issues.append(f"threads must be >= 1, got {cfg.threads}")
    if cfg.sampler not in ("circulant", "cholesky"):
        issues.append(f"unknown sampler {cfg.sampler!r}")
    if not cfg.newton_tol > 0.0:
        issues.append(f"newton_tol must be positive, got {cfg.newton_tol}")
    if cfg.newton_max_iter < 1:
        issues.append(f"newton_max_iter must be >= 1, got {cfg.newton_max_iter}")
    return issues, spec


def validate_rate_config(cfg: ExperimentConfig) -> DriftSpec:
    issues, spec = _common_issues(cfg)
    if len(cfg.schemes) != 1:
        issues.append("rate runs use exactly one scheme")
    if cfg.master_mesh is None:
        issues.append("rate runs need a master_mesh for the reference solution")
    else:
        if not cfg.master_mesh > 0.0:
            issues.append(f"master_mesh must be positive, got {cfg.master_mesh}")
        elif cfg.meshes and min(cfg.meshes) > 0.0 \
                and cfg.master_mesh > min(cfg.meshes) / 4.0 + _REL_TOL:
            issues.append(
                f"master_mesh {cfg.master_mesh} must be at most a quarter of "
                f"the smallest mesh {min(cfg.meshes)}")
        elif _int_ratio(cfg.t_final, cfg.master_mesh) is None:
            issues.append(f"master_mesh {cfg.master_mesh} does not divide "
                          f"t_final {cfg.t_final} into whole steps")
    if issues:
        raise ConfigError(issues)
    assert spec is not None
    return spec


def validate_stability_config(cfg: ExperimentConfig) -> DriftSpec:
    issues, spec = _common_issues(cfg)
    if spec is not None and spec.dim != 1:
        issues.append("stability tables are defined for one-dimensional drifts")
    if len(cfg.meshes) != 1:
        issues.append("stability runs use exactly one mesh")
    if len(cfg.hurst_values) != 1:
        issues.append("stability runs use exactly one Hurst value")
    if not cfg.schemes:
        issues.append("stability runs need at least one scheme")
    if cfg.master_mesh is not None and cfg.master_mesh > 0.0 \
            and _int_ratio(cfg.t_final, cfg.master_mesh) is None:
        issues.append(f"master_mesh {cfg.master_mesh} does not divide "
                      f"t_final {cfg.t_final} into whole steps")
    if issues:
        raise ConfigError(issues)
    assert spec is not None
    return spec


@dataclass(frozen=True, eq=False)
class RateReport:
    """Strong-error table for one drift, Hurst index and scheme."""

    hurst: float
    scheme: str
    meshes: tuple[float, ...]
    errors: np.ndarray = field(repr=False)
    stderrs: np.ndarray = field(repr=False)
    pairwise_orders: np.ndarray = field(repr=False)
    slope: float
    slope_stderr: float
    sup_errors: np.ndarray | None = field(default=None, repr=False)

    def rows(self):
        """Yield per-mesh CSV rows; the first pairwise order is undefined."""
        for i, mesh in enumerate(self.meshes):
            order = None if i == 0 else float(self.pairwise_orders[i])
            sup = None if self.sup_errors is None else float(self.sup_errors[i])
            yield mesh, float(self.errors[i]), float(self.stderrs[i]), order, sup


def fit_order(meshes, errors) -> tuple[float, float]:
    """Least-squares slope of ``log(error)`` against ``log(mesh)``.

    Returns ``(slope, stderr)``; the stderr is NaN for exactly two points.

    Raises:
        DomainError: on fewer than two points or non-positive values.
    """
    meshes = np.asarray(meshes, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if meshes.size != errors.size or meshes.size < 2:
        raise DomainError("fit_order needs at least two (mesh, error) pairs")
    if np.any(meshes <= 0.0) or np.any(errors <= 0.0) \
            or not np.all(np.isfinite(meshes)) or not np.all(np.isfinite(errors)):
        raise DomainError("fit_order needs positive finite meshes and errors")
    x = np.log(meshes)
    y = np.log(errors)
    if meshes.size == 2:
        return float((y[1] - y[0]) / (x[1] - x[0])), float("nan")
    coeffs, cov = np.polyfit(x, y, 1, cov=True)
    return float(coeffs[0]), float(np.sqrt(cov[0, 0]))


def _run_scheme(scheme: str, spec: DriftSpec, noise: FbmPath, x0: np.ndarray,
                cfg: SolveConfig, stability_mode: bool = False) -> Trajectory:
    if scheme == "bem":
        return backward_euler(spec, noise, x0, cfg)
    if scheme == "em":
        return forward_euler(spec, noise, x0)
    if scheme == "cn":
        return crank_nicolson(spec, noise, x0, cfg, stability_mode=stability_mode)
    raise ConfigError(f"unknown scheme {scheme!r}")


def _master_noise(payload: dict, index: int) -> FbmPath:
    grid: Partition = payload["grid"]
    hurst: HurstVector = payload["hurst"]
    if payload["zero_noise"]:
        return zero_path(grid, hurst)
    return sample_multi(grid, hurst, child_seed(payload["seed"], index),
                        method=payload["sampler"])


def _rate_path_worker(payload: dict, index: int) -> tuple[np.ndarray, np.ndarray]:
    spec: DriftSpec = payload["spec"]
    solve_cfg: SolveConfig = payload["solve_cfg"]
    grid: Partition = payload["grid"]
    noise = _master_noise(payload, index)
    ref = reference_solution(spec, noise, payload["x0"], solve_cfg)
    ratios = payload["ratios"]
    sq_terminal = np.empty(len(ratios))
    sq_sup = np.empty(len(ratios))
    with np.errstate(all="ignore"):
        for i, ratio in enumerate(ratios):
            sub = coarsen(noise, grid.subsample(ratio))
            traj = _run_scheme(payload["scheme"], spec, sub, payload["x0"], solve_cfg)
            diff_t = ref.states[-1] - traj.states[-1]
            sq_terminal[i] = float(diff_t @ diff_t)
            diff_all = ref.states[::ratio] - traj.states
            sq_sup[i] = float(np.max(np.sum(diff_all * diff_all, axis=1)))
    return sq_terminal, sq_sup


def _mean_sqrt_with_se(sq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Root-mean of squared errors per mesh with a delta-method stderr."""
    mean_sq = sq.mean(axis=0)
    eps = np.sqrt(mean_sq)
    n = sq.shape[0]
    if n > 1:
        se_mean = sq.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        se_mean = np.zeros_like(mean_sq)
    safe = np.where(eps > 0.0, eps, 1.0)
    return eps, np.where(eps > 0.0, se_mean / (2.0 * safe), 0.0)


def mc_strong_error(cfg: ExperimentConfig) -> RateReport:
    """Strong terminal error of one scheme against the implicit reference.

    Requires exactly one Hurst value; sweeps live in the caller.  The
    pairwise order between consecutive meshes and a least-squares slope are
    attached when two or more meshes are present.
    """
    spec = validate_rate_config(cfg)
    if len(cfg.hurst_values) != 1:
        raise ConfigError("mc_strong_error runs one Hurst value at a time; "
                          "sweep by calling it per value")
    h = cfg.hurst_values[0]
    master_steps = _int_ratio(cfg.t_final, cfg.master_mesh)
    grid = Partition.uniform(cfg.t_final, master_steps)
    ratios = tuple(_int_ratio(mesh, cfg.master_mesh) for mesh in cfg.meshes)
    payload = {
        "spec": spec,
        "x0": np.asarray(cfg.x0, dtype=np.float64),
        "grid": grid,
        "hurst": HurstVector.constant(h, spec.dim),
        "scheme": cfg.schemes[0],
        "ratios": ratios,
        "seed": cfg.seed,
        "sampler": cfg.sampler,
        "zero_noise": cfg.zero_noise,
        "solve_cfg": cfg.solve_config(),
    }
    rows = map_indexed(_rate_path_worker, payload, cfg.mc_paths, cfg.threads)
    sq_terminal = np.stack([row[0] for row in rows])
    sq_sup = np.stack([row[1] for row in rows])

    errors, stderrs = _mean_sqrt_with_se(sq_terminal)
    sup_errors = _mean_sqrt_with_se(sq_sup)[0] if cfg.sup_error else None

    orders = np.full(len(cfg.meshes), np.nan)
    for i in range(1, len(cfg.meshes)):
        if errors[i - 1] > 0.0 and errors[i] > 0.0:
            orders[i] = float(np.log(errors[i - 1] / errors[i])
                              / np.log(cfg.meshes[i - 1] / cfg.meshes[i]))
    usable = errors > 0.0
    if len(cfg.meshes) >= 2 and np.all(usable) and np.all(np.isfinite(errors)):
        slope, slope_stderr = fit_order(cfg.meshes, errors)
    else:
        slope, slope_stderr = float("nan"), float("nan")
    return RateReport(hurst=h, scheme=cfg.schemes[0], meshes=cfg.meshes,
                      errors=errors, stderrs=stderrs, pairwise_orders=orders,
                      slope=slope, slope_stderr=slope_stderr,
                      sup_errors=sup_errors)


def stability_compare(cfg: ExperimentConfig) -> list[tuple[str, float, float]]:
    """Scheme values along one shared noise path at the coarse grid times.

    Returns rows ``(scheme, t, value)`` for each configured scheme, plus
    ``reference`` rows (implicit Euler on the master mesh) when a master
    mesh is configured.  Non-finite values are kept as data.
    """
    spec = validate_stability_config(cfg)
    solve_cfg = cfg.solve_config()
    x0 = np.asarray(cfg.x0, dtype=np.float64)
    hurst = HurstVector.constant(cfg.hurst_values[0], spec.dim)
    coarse_steps = _int_ratio(cfg.t_final, cfg.meshes[0])
    payload = {
        "hurst": hurst,
        "seed": cfg.seed,
        "sampler": cfg.sampler,
        "zero_noise": cfg.zero_noise,
    }
    if cfg.master_mesh is not None:
        master_steps = _int_ratio(cfg.t_final, cfg.master_mesh)
        master_grid = Partition.uniform(cfg.t_final, master_steps)
        payload["grid"] = master_grid
        master_noise = _master_noise(payload, 0)
        ratio = master_steps // coarse_steps
        coarse_noise = coarsen(master_noise, master_grid.subsample(ratio))
    else:
        master_grid = None
        master_noise = None
        ratio = 1
        payload["grid"] = Partition.uniform(cfg.t_final, coarse_steps)
        coarse_noise = _master_noise(payload, 0)

    rows: list[tuple[str, float, float]] = []
    times = coarse_noise.grid.times
    for scheme in cfg.schemes:
        traj = _run_scheme(scheme, spec, coarse_noise, x0, solve_cfg,
                           stability_mode=True)
        for k in range(1, times.size):
            rows.append((scheme, float(times[k]), float(traj.states[k, 0])))
    if master_noise is not None:
        ref = reference_solution(spec, master_noise, x0, solve_cfg)
        ref_states = ref.states[::ratio]
        for k in range(1, times.size):
            rows.append(("reference", float(times[k]), float(ref_states[k, 0])))
    return rows


def _bias_path_worker(payload: dict, index: int) -> tuple[float, float]:
    spec: DriftSpec = payload["spec"]
    solve_cfg: SolveConfig = payload["solve_cfg"]
    fine_grid: Partition = payload["grid"]
    noise_fine = _master_noise(payload, index)
    noise_half = coarsen(noise_fine, fine_grid.subsample(2))
    coarse = coarsen(noise_fine, fine_grid.subsample(payload["ratio"]))
    x0 = payload["x0"]
    ref_fine = backward_euler(spec, noise_fine, x0, solve_cfg)
    ref_half = backward_euler(spec, noise_half, x0, solve_cfg)
    y = _run_scheme(payload["scheme"], spec, coarse, x0, solve_cfg)
    d_fine = ref_fine.states[-1] - y.states[-1]
    d_half = ref_half.states[-1] - y.states[-1]
    return float(d_fine @ d_fine), float(d_half @ d_half)


def reference_bias_check(cfg: ExperimentConfig) -> float:
    """Relative shift of the finest-mesh error when the master mesh halves.

    Both error estimates couple to the same noise realizations: the halved
    master path is a restriction of the doubled one, and the coarse scheme
    run is identical in both arms.  A small return value certifies that the
    reference resolution does not bias the rate table.
    """
    spec = validate_rate_config(cfg)
    if len(cfg.hurst_values) != 1:
        raise ConfigError("reference_bias_check runs one Hurst value at a time")
    finest = min(cfg.meshes)
    doubled_steps = 2 * _int_ratio(cfg.t_final, cfg.master_mesh)
    grid = Partition.uniform(cfg.t_final, doubled_steps)
    payload = {
        "spec": spec,
        "x0": np.asarray(cfg.x0, dtype=np.float64),
        "grid": grid,
        "hurst": HurstVector.constant(cfg.hurst_values[0], spec.dim),
        "scheme": cfg.schemes[0],
        "ratio": _int_ratio(finest, cfg.master_mesh) * 2,
        "seed": cfg.seed,
        "sampler": cfg.sampler,
        "zero_noise": cfg.zero_noise,
        "solve_cfg": cfg.solve_config(),
    }
    rows = map_indexed(_bias_path_worker, payload, cfg.mc_paths, cfg.threads)
    sq_fine = np.array([row[0] for row in rows])
    sq_half = np.array([row[1] for row in rows])
    eps_fine = float(np.sqrt(sq_fine.mean()))
    eps_half = float(np.sqrt(sq_half.mean()))
    if eps_fine == 0.0 and eps_half == 0.0:
        return 0.0
    return abs(eps_fine - eps_half) / max(eps_fine, eps_half)


def sweep_strong_error(cfg: ExperimentConfig) -> list[RateReport]:
    """Run :func:`mc_strong_error` once per configured Hurst value."""
    reports = []
    for h in cfg.hurst_values:
        reports.append(mc_strong_error(replace(cfg, hurst_values=(h,))))
    return reports
