"""Monte Carlo simulation of tender success ratios.

Random suppliers and tenders are matched pairwise; the success ratio of a
tender is the fraction of suppliers eligible to bid on it.  All randomness
comes from one master seed: each supplier and each tender draws from its own
spawned substream, so runs that differ only in the capability interval share
their underlying uniforms (common random numbers).
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import integrate

from tenderbroker.matching import CapabilityMatrix, RequirementMatrix, SupplierRegistry, TenderSeries

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

CAPABILITY_MODES = ("per_supplier", "per_entry")

# Mean success ranges reported for the three capability intervals.
TARGET_SUCCESS_RANGES = {
    (0.1, 0.8): (0.02, 0.10),
    (0.3, 0.8): (0.19, 0.26),
    (0.5, 0.8): (0.79, 0.83),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimulationConfig:
    m: int = 50
    p: int = 10
    n_suppliers: int = 100
    n_tenders: int = 1000
    capability_interval: tuple[float, float] = (0.1, 0.8)
    unspecified_range: tuple[int, int] = (2, 6)
    desired_count_range: tuple[int, int] | None = None
    success_bin_size: int = 2000
    unspecified_bin_size: int = 20
    seed: int = 0
    capability_mode: str = "per_supplier"

    def __post_init__(self) -> None:
        object.__setattr__(self, "capability_interval", tuple(float(x) for x in self.capability_interval))
        object.__setattr__(self, "unspecified_range", tuple(int(x) for x in self.unspecified_range))
        desired = self.desired_count_range or (1, self.p)
        object.__setattr__(self, "desired_count_range", tuple(int(x) for x in desired))
        lo, hi = self.capability_interval
        a, b = self.unspecified_range
        d_min, d_max = self.desired_count_range
        checks = [
            (self.m >= 1 and self.p >= 1, "m and p must be positive"),
            (self.n_suppliers >= 1 and self.n_tenders >= 1, "need at least one supplier and tender"),
            (0.0 <= lo <= hi <= 1.0, "capability_interval must satisfy 0 <= lo <= hi <= 1"),
            (0 <= a <= b <= self.m, "unspecified_range must satisfy 0 <= a <= b <= m"),
            (1 <= d_min <= d_max <= self.p, "desired_count_range must satisfy 1 <= min <= max <= p"),
            (self.success_bin_size >= 1 and self.unspecified_bin_size >= 1, "bin sizes must be >= 1"),
            (self.capability_mode in CAPABILITY_MODES, f"capability_mode must be one of {CAPABILITY_MODES}"),
            (0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown simulation settings: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_toml(cls, path: str | Path) -> "SimulationConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        return cls.from_dict(data.get("simulation", data))

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("capability_interval", "unspecified_range", "desired_count_range"):
            out[key] = list(out[key])
        return out


@dataclass(frozen=True)
class SimulationResult:
    per_tender_success: np.ndarray
    per_tender_unspecified: np.ndarray
    binned_success: list[tuple[int, float]]
    binned_unspecified: list[tuple[int, float]]
    config_echo: SimulationConfig
    eligible_counts: np.ndarray = field(repr=False, default=None)

    @property
    def mean_success(self) -> float:
        return float(self.per_tender_success.mean())


def _streams(config: SimulationConfig) -> tuple[list[np.random.SeedSequence], list[np.random.SeedSequence]]:
    suppliers, tenders = np.random.SeedSequence(config.seed).spawn(2)
    return suppliers.spawn(config.n_suppliers), tenders.spawn(config.n_tenders)


def _capabilities(config: SimulationConfig, seq: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.default_rng(seq)
    lo, hi = config.capability_interval
    shape = (config.m, config.p)
    if config.capability_mode == "per_supplier":
        q = lo + (hi - lo) * rng.random()
    else:
        q = lo + (hi - lo) * rng.random(shape)
    return (rng.random(shape) < q).astype(np.int8)


def _requirements(config: SimulationConfig, seq: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.default_rng(seq)
    a, b = config.unspecified_range
    d_min, d_max = config.desired_count_range
    entries = np.zeros((config.m, config.p), dtype=np.int8)
    u = int(rng.integers(a, b + 1))
    unspecified = set(rng.choice(config.m, size=u, replace=False).tolist())
    for i in range(config.m):
        if i in unspecified:
            entries[i, :] = -1
            continue
        d = int(rng.integers(d_min, d_max + 1))
        entries[i, rng.choice(config.p, size=d, replace=False)] = 1
    return entries


def generate_suppliers(config: SimulationConfig) -> SupplierRegistry:
    """Random capability matrices.

    ``per_supplier``: each supplier draws q uniformly from the capability
    interval and supports every realization independently with probability q.
    ``per_entry``: every entry draws its own probability from the interval.
    """
    streams, _ = _streams(config)
    return SupplierRegistry(
        tuple(CapabilityMatrix(f"S{k + 1}", _capabilities(config, s)) for k, s in enumerate(streams))
    )


def generate_tenders(config: SimulationConfig) -> TenderSeries:
    """Random canonical requirement matrices with a uniform number of unspecified rows."""
    _, streams = _streams(config)
    return TenderSeries(
        tuple(RequirementMatrix(f"T{n + 1}", _requirements(config, s)) for n, s in enumerate(streams))
    )


def bin_series(values, bin_size: int) -> list[tuple[int, float]]:
    """Means of consecutive chunks; the last chunk may be shorter."""
    if bin_size < 1:
        raise ValueError("bin_size must be >= 1")
    values = [float(v) for v in values]
    return [
        (k, math.fsum(values[start : start + bin_size]) / len(values[start : start + bin_size]))
        for k, start in enumerate(range(0, len(values), bin_size))
    ]


def success_counts(capabilities: np.ndarray, requirements: np.ndarray, chunk: int = 128) -> np.ndarray:
    """Number of eligible suppliers per tender for stacked (N,m,p) and (M,m,p) arrays."""
    caps = capabilities.astype(np.int32)
    out = np.empty(requirements.shape[0], dtype=np.int64)
    for start in range(0, requirements.shape[0], chunk):
        block = requirements[start : start + chunk].astype(np.int32)
        mu = np.einsum("kij,nij->nki", caps, block)
        out[start : start + chunk] = (mu != 0).all(axis=2).sum(axis=1)
    return out


def run_experiment(config: SimulationConfig) -> SimulationResult:
    registry = generate_suppliers(config)
    series = generate_tenders(config)
    tenders = series.stacked()
    counts = success_counts(registry.stacked(), tenders)
    success = counts / config.n_suppliers
    r = tenders.astype(np.int64)
    nu = (np.abs(r) - r).sum(axis=(1, 2)) // (2 * config.p)
    return SimulationResult(
        per_tender_success=success,
        per_tender_unspecified=nu,
        binned_success=bin_series(success, config.success_bin_size),
        binned_unspecified=bin_series(nu, config.unspecified_bin_size),
        config_echo=config,
        eligible_counts=counts,
    )


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def render_csvs(result: SimulationResult) -> dict[str, str]:
    return {
        "success.csv": _csv(["bin", "mean_success"], ((k, repr(v)) for k, v in result.binned_success)),
        "unspecified.csv": _csv(
            ["bin", "mean_unspecified"], ((k, repr(v)) for k, v in result.binned_unspecified)
        ),
        "raw.csv": _csv(
            ["tender", "success_ratio", "nu"],
            (
                (n, repr(float(s)), int(u))
                for n, (s, u) in enumerate(zip(result.per_tender_success, result.per_tender_unspecified))
            ),
        ),
    }


def write_csvs(result: SimulationResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in render_csvs(result).items():
        path = out / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        written.append(path)
    return written


def expected_success(config: SimulationConfig) -> float:
    """Closed-form expectation of the mean success ratio.

    Given a support probability q, a specified row desiring d realizations is
    met with probability 1-(1-q)^d and an unspecified row with 1-(1-q)^p; rows
    are independent.  In ``per_entry`` mode every entry is supported with the
    interval midpoint, independently.
    """
    lo, hi = config.capability_interval
    a, b = config.unspecified_range
    d = np.arange(config.desired_count_range[0], config.desired_count_range[1] + 1)

    def given_q(q: float) -> float:
        row = float(np.mean(1.0 - (1.0 - q) ** d))
        free = 1.0 - (1.0 - q) ** config.p
        return float(np.mean([row ** (config.m - u) * free**u for u in range(a, b + 1)]))

    if config.capability_mode == "per_entry" or hi == lo:
        return given_q((lo + hi) / 2)
    value, _ = integrate.quad(given_q, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=200)
    return value / (hi - lo)


@dataclass(frozen=True)
class Calibration:
    capability_mode: str
    desired_count_range: tuple[int, int]
    expected: dict[tuple[float, float], float]
    distance: float

    @property
    def inside(self) -> bool:
        return self.distance == 0.0


def _range_distance(value: float, bounds: tuple[float, float]) -> float:
    return max(0.0, bounds[0] - value, value - bounds[1])


def calibrate_desired_count_range(
    base: SimulationConfig = SimulationConfig(),
    targets: dict[tuple[float, float], tuple[float, float]] = TARGET_SUCCESS_RANGES,
) -> list[Calibration]:
    """Rank every (mode, desired_count_range) by distance of the expected mean
    success from the target ranges, closest first."""
    ranked = []
    for mode in CAPABILITY_MODES:
        for d_min, d_max in itertools.combinations_with_replacement(range(1, base.p + 1), 2):
            expected = {
                interval: expected_success(
                    replace(base, capability_mode=mode, desired_count_range=(d_min, d_max),
                            capability_interval=interval)
                )
                for interval in targets
            }
            distance = sum(_range_distance(expected[i], targets[i]) for i in targets)
            ranked.append(Calibration(mode, (d_min, d_max), expected, distance))
    ranked.sort(key=lambda c: (c.distance, c.capability_mode, c.desired_count_range))
    return ranked
