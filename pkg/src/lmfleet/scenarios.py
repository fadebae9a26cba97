"""Demand scenarios, ambiguity estimates and cost calibration.

Randomness
----------
Every draw comes from ``numpy.random.default_rng([seed, stream, block])``.
Scenarios are generated in blocks of :data:`BLOCK` rows, each block with its
own stream, so the output depends only on ``(seed, spec, count)`` and never
on how many threads produced it.

Quantiles use linear interpolation between order statistics
(``numpy.quantile(method="linear")``, Hyndman-Fan type 7).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import ndtr

from .domain import CostParams, DemandScenario, Instance
from .dr import AmbiguityInfo

BLOCK = 256

# stream tags
_MEANS, _SCEN, _MISSPEC = 1, 2, 3

FAMILIES = ("lognormal", "uniform")
ROUNDINGS = ("nearest_int", "none")


@dataclass(frozen=True)
class DemandSpec:
    mean_range: tuple[float, float] = (1.0, 4.0)
    sigma_ratio: float = 0.5
    family: str = "lognormal"
    rounding: str = "nearest_int"
    seed: int = 0
    # equicorrelation of the Gaussian copula across cells; 0 means independent cells
    correlation: float = 0.0

    def __post_init__(self):
        a, b = (float(x) for x in self.mean_range)
        object.__setattr__(self, "mean_range", (a, b))
        if not (math.isfinite(a) and math.isfinite(b)) or a < 0 or a > b:
            raise ValueError(f"mean_range must satisfy 0 <= a <= b, got {self.mean_range}")
        if not self.sigma_ratio >= 0:
            raise ValueError("sigma_ratio must be >= 0")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.rounding not in ROUNDINGS:
            raise ValueError(f"rounding must be one of {ROUNDINGS}")
        if not 0.0 <= self.correlation < 1.0:
            raise ValueError("correlation must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_range"] = list(self.mean_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DemandSpec":
        known = {"mean_range", "sigma_ratio", "family", "rounding", "seed", "correlation"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown DemandSpec keys: {sorted(extra)}")
        d = dict(d)
        if "mean_range" in d:
            d["mean_range"] = tuple(d["mean_range"])
        return cls(**d)


def draw_means(instance: Instance, spec: DemandSpec) -> np.ndarray:
    """One mean per cell, ``U[a, b]``, as a flat vector in instance cell order."""
    a, b = spec.mean_range
    rng = np.random.default_rng([spec.seed, _MEANS])
    return rng.uniform(a, b, instance.n_cells) if b > a else np.full(instance.n_cells, a)


def _normals(rng: np.random.Generator, rows: int, cells: int, rho: float) -> np.ndarray:
    z = rng.standard_normal((rows, cells))
    if rho > 0:
        common = rng.standard_normal((rows, 1))
        z = math.sqrt(rho) * common + math.sqrt(1 - rho) * z
    return z


def _transform(z: np.ndarray, mu: np.ndarray, spec: DemandSpec) -> np.ndarray:
    sigma = spec.sigma_ratio * mu
    if spec.family == "lognormal":
        s2 = math.log1p(spec.sigma_ratio ** 2)
        with np.errstate(divide="ignore"):
            mlog = np.log(mu) - s2 / 2
        x = np.where(mu > 0, np.exp(mlog + math.sqrt(s2) * z), 0.0)
    else:
        lo = np.maximum(0.0, mu - math.sqrt(3) * sigma)
        hi = mu + math.sqrt(3) * sigma
        x = lo + (hi - lo) * ndtr(z)
    return _round(x, spec.rounding)


def _round(x: np.ndarray, rounding: str) -> np.ndarray:
    x = np.maximum(x, 0.0)
    return np.rint(x) if rounding == "nearest_int" else x


def _blocks(count: int):
    return [(b, min(BLOCK, count - b * BLOCK)) for b in range(-(-count // BLOCK))]


def scenario_matrix(instance: Instance, mean: np.ndarray, spec: DemandSpec, count: int,
                    threads: int = 1) -> np.ndarray:
    """``(count, n_cells)`` demand draws; see :func:`gen_scenarios`."""
    mu = np.asarray(mean, dtype=float)
    if mu.shape != (instance.n_cells,):
        raise ValueError(f"expected {instance.n_cells} means, got shape {mu.shape}")
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise ValueError("means must be finite and nonnegative")
    if count < 0:
        raise ValueError("count must be >= 0")

    def block(args):
        b, rows = args
        rng = np.random.default_rng([spec.seed, _SCEN, b])
        return _transform(_normals(rng, rows, mu.size, spec.correlation), mu, spec)

    parts = _run_blocks(block, _blocks(count), threads)
    return np.vstack(parts) if parts else np.zeros((0, mu.size))


def _run_blocks(fn, blocks, threads: int):
    if threads <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, blocks))  # map keeps block order


def gen_scenarios(instance: Instance, mean: np.ndarray, spec: DemandSpec, count: int,
                  threads: int = 1) -> list[DemandScenario]:
    """Independent demand scenarios with per-cell mean ``mean`` and std ``sigma_ratio * mean``.

    Lognormal draws use ``s2 = ln(1 + ratio^2)``, ``m = ln(mu) - s2 / 2`` for
    the underlying normal; uniform draws use ``[max(0, mu - sqrt(3) sigma),
    mu + sqrt(3) sigma]``. Cells with ``mu = 0`` are always 0.
    """
    x = scenario_matrix(instance, mean, spec, count, threads)
    return [DemandScenario.from_flat(instance, row) for row in x]


def _split_like(template: DemandScenario, flat: np.ndarray) -> tuple[np.ndarray, ...]:
    out, at = [], 0
    for d in template.demand:
        out.append(flat[at: at + d.size].reshape(d.shape))
        at += d.size
    return tuple(out)


def estimate_ambiguity(scenarios, q_lo: float = 0.20, q_hi: float = 0.80) -> AmbiguityInfo:
    """Empirical per-cell mean and interpolated ``q_lo``/``q_hi`` quantiles."""
    scenarios = list(scenarios)
    if len(scenarios) < 2:
        raise ValueError("at least two scenarios are needed to estimate an ambiguity set")
    if not 0.0 <= q_lo <= q_hi <= 1.0:
        raise ValueError("need 0 <= q_lo <= q_hi <= 1")
    x = np.stack([sc.flat() for sc in scenarios])
    mean = x.mean(axis=0)
    lo, hi = np.quantile(x, [q_lo, q_hi], axis=0, method="linear")
    hi = np.maximum(hi, lo)  # guard against rounding in the interpolation
    t = scenarios[0]
    return AmbiguityInfo(_split_like(t, mean), _split_like(t, lo), _split_like(t, hi))


def misspecified_set(amb: AmbiguityInfo, count: int, seed: int, correlation: float = 0.0,
                     threads: int = 1) -> list[DemandScenario]:
    """Uniform draws centred on each cell's mean, as wide as the support allows.

    Cell ``(i, j, s)`` draws from ``U[mu - d, mu + d]`` with
    ``d = min(mu - lower, upper - mu)`` (0 if the mean lies outside the
    support), so both the mean and the support are respected. Values are
    not rounded.
    """
    mu = np.concatenate([m.ravel() for m in amb.mean])
    lo = np.concatenate([m.ravel() for m in amb.lower])
    hi = np.concatenate([m.ravel() for m in amb.upper])
    d = np.maximum(np.minimum(mu - lo, hi - mu), 0.0)
    if not 0.0 <= correlation < 1.0:
        raise ValueError("correlation must lie in [0, 1)")

    def block(args):
        b, rows = args
        rng = np.random.default_rng([seed, _MISSPEC, b])
        u = ndtr(_normals(rng, rows, mu.size, correlation))
        return np.maximum(mu - d + 2 * d * u, 0.0)

    parts = _run_blocks(block, _blocks(count), threads)
    template = DemandScenario(amb.mean)
    return [DemandScenario(_split_like(template, row)) for part in parts for row in part]


def calibrate_costs(wage: float, vehicle_hourly_cost: float, n_trains: int, headway_minutes: float) -> CostParams:
    """Per-minute money weights from an hourly wage and an hourly vehicle cost.

    Fixed cost covers one vehicle for the whole service window
    (``b * I * h / 60``); riding and waiting are valued at 0.0127 and 0.0325
    times the hourly wage per minute.
    """
    if wage < 0 or vehicle_hourly_cost < 0:
        raise ValueError("wage and vehicle cost must be >= 0")
    return CostParams(
        fixed_cost_per_vehicle=vehicle_hourly_cost * n_trains * headway_minutes / 60.0,
        wait_weight=0.0325 * wage,
        ride_weight=0.0127 * wage,
    )
