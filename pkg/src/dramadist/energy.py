"""Bootstrap energy-distance distinctiveness over character 3-gram distributions.

Under the discrete metric d(x, y) = 1{x != y} the two-sample energy distance
2 E d(X, Y) - E d(X, X') - E d(Y, Y') between categorical distributions p and q
reduces to sum((p - q) ** 2).  That closed form is what the bootstrap uses;
:func:`pairwise_energy_statistic` evaluates the general definition directly
and exists to check it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence, Union

import numpy as np

from .text import NgramSample

DistanceForm = Literal["root", "squared"]

# Independent random streams per replicate: (seed, stream, replicate index).
_STREAM_DISTINCT = 0
_STREAM_BASELINE = 1


class ContractError(ValueError):
    """Inputs violate an operation's preconditions."""


@dataclass(frozen=True)
class ProbabilityVector:
    support: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        if len(self.support) != len(self.probs):
            raise ContractError("support and probs differ in length")
        if len(set(self.support)) != len(self.support):
            raise ContractError("support entries must be unique")
        if np.any(self.probs < 0):
            raise ContractError("probabilities must be non-negative")
        if len(self.probs) and abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ContractError("probabilities must sum to 1")

    @classmethod
    def from_counts(cls, support: Sequence[str], counts) -> "ProbabilityVector":
        counts = np.asarray(counts, dtype=float)
        return cls(tuple(support), counts / counts.sum())


def union_counts(x: NgramSample, y: NgramSample) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    """Count vectors of both samples over their sorted union support."""
    support = tuple(sorted(set(x.counts) | set(y.counts)))
    cx = np.fromiter((x.counts.get(g, 0) for g in support), dtype=np.int64, count=len(support))
    cy = np.fromiter((y.counts.get(g, 0) for g in support), dtype=np.int64, count=len(support))
    return support, cx, cy


def energy_distance(p: ProbabilityVector, q: ProbabilityVector) -> float:
    """Squared-form energy distance sum((p - q)**2) under the discrete metric."""
    if p.support != q.support:
        raise ContractError("energy_distance needs both vectors on the same support ordering")
    diff = p.probs - q.probs
    return float(np.dot(diff, diff))


def apply_form(squared: Union[float, np.ndarray], form: DistanceForm):
    if form == "squared":
        return squared
    if form == "root":
        return np.sqrt(squared) if isinstance(squared, np.ndarray) else math.sqrt(squared)
    raise ValueError(f"unknown distance form {form!r}")


def _discrete(a: str, b: str) -> float:
    return 0.0 if a == b else 1.0


def pairwise_energy_statistic(
    sample_x: NgramSample,
    sample_y: NgramSample,
    metric: Callable[[str, str], float] = _discrete,
) -> float:
    """Exact V-statistic 2 E d(X,Y) - E d(X,X') - E d(Y,Y') over empirical distributions.

    Expectations are taken over all pairs of categories weighted by their
    empirical probabilities; nothing is sampled.
    """
    if sample_x.total == 0 or sample_y.total == 0:
        raise ContractError("both samples must be non-empty")
    px = {g: c / sample_x.total for g, c in sample_x.counts.items()}
    py = {g: c / sample_y.total for g, c in sample_y.counts.items()}

    def expected(a: dict, b: dict) -> float:
        return math.fsum(pa * pb * metric(ga, gb) for ga, pa in a.items() for gb, pb in b.items())

    return 2.0 * expected(px, py) - expected(px, px) - expected(py, py)


@dataclass(frozen=True)
class BootstrapConfig:
    """Bootstrap settings.

    ``resample_size`` is ``"character_size"`` (n = the character's gram count,
    used for both sides) or a fixed positive integer.  ``resample=False`` and
    ``shared_baseline_draw=True`` are diagnostic switches.
    """

    replicates: int = 1000
    seed: int = 0
    resample_size: Union[str, int] = "character_size"
    ci_level: float = 0.95
    form: DistanceForm = "root"
    resample: bool = True
    shared_baseline_draw: bool = False
    keep_replicates: bool = False
    workers: int = 1

    def validate(self) -> list[str]:
        problems = []
        if self.resample and self.replicates < 2:
            problems.append(
                f"replicates={self.replicates}: at least 2 bootstrap replicates are needed "
                "for a percentile confidence interval"
            )
        if not 0.0 < self.ci_level < 1.0:
            problems.append(f"ci_level={self.ci_level}: must lie strictly between 0 and 1")
        if self.form not in ("root", "squared"):
            problems.append(f"form={self.form!r}: must be 'root' or 'squared'")
        if not (self.resample_size == "character_size"
                or (isinstance(self.resample_size, int) and self.resample_size > 0)):
            problems.append(
                f"resample_size={self.resample_size!r}: must be 'character_size' or a positive integer"
            )
        if not 0 <= self.seed < 2**64:
            problems.append(f"seed={self.seed}: must be a 64-bit unsigned integer")
        if self.workers < 1:
            problems.append(f"workers={self.workers}: must be >= 1")
        return problems

    def check(self) -> None:
        problems = self.validate()
        if problems:
            raise ContractError("; ".join(problems))

    def sample_size(self, char_total: int) -> int:
        return char_total if self.resample_size == "character_size" else int(self.resample_size)


@dataclass(frozen=True)
class DistinctivenessEstimate:
    median: float
    ci_low: float
    ci_high: float
    baseline_median: float
    baseline_ci_low: float
    baseline_ci_high: float
    form: DistanceForm = "root"
    sample_size: int = 0
    replicates: int = 0
    ci_level: float = 0.95
    replicate_values: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    baseline_values: Optional[np.ndarray] = field(default=None, repr=False, compare=False)


def _rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))


def _run_replicates(fn: Callable[[int], float], count: int, workers: int) -> np.ndarray:
    # Each replicate owns its sub-seed, so chunking never changes the values.
    out = np.empty(count, dtype=float)
    if workers <= 1 or count < 2:
        for b in range(count):
            out[b] = fn(b)
        return out
    chunks = np.array_split(np.arange(count), workers)

    def run(idx):
        for b in idx:
            out[b] = fn(int(b))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(run, chunks))
    return out


def _squared_gap(a: np.ndarray, b: np.ndarray, n: int) -> float:
    diff = a - b
    # integer sum of squares is exact; one division at the end
    return float(np.dot(diff, diff)) / (float(n) * n)


def _summarise(values: np.ndarray, cfg: BootstrapConfig) -> tuple[float, float, float]:
    scaled = apply_form(values, cfg.form)
    tail = (1.0 - cfg.ci_level) / 2.0
    lo, mid, hi = np.percentile(scaled, [100 * tail, 50.0, 100 * (1.0 - tail)])
    return float(mid), float(lo), float(hi)


def _baseline_values(counts: np.ndarray, n: int, cfg: BootstrapConfig) -> np.ndarray:
    p = counts / counts.sum()
    if not cfg.resample:
        return np.zeros(1)

    def one(b: int) -> float:
        rng = _rng(cfg.seed, _STREAM_BASELINE, b)
        first = rng.multinomial(n, p)
        second = first if cfg.shared_baseline_draw else rng.multinomial(n, p)
        return _squared_gap(first, second, n)

    return _run_replicates(one, cfg.replicates, cfg.workers)


def baseline_distinctiveness(char: NgramSample, cfg: BootstrapConfig) -> tuple[float, float, float]:
    """Median and percentile CI of the distance between two resamples of ``char``."""
    cfg.check()
    if char.total == 0:
        raise ContractError("character sample is empty")
    counts = np.array([char.counts[g] for g in sorted(char.counts)], dtype=np.int64)
    return _summarise(_baseline_values(counts, cfg.sample_size(char.total), cfg), cfg)


def bootstrap_distinctiveness(
    char: NgramSample, others: NgramSample, cfg: BootstrapConfig
) -> DistinctivenessEstimate:
    cfg.check()
    if char.total == 0 or others.total == 0:
        raise ContractError("character and others samples must both be non-empty")
    support, cx, cy = union_counts(char, others)
    n = cfg.sample_size(char.total)
    px = cx / cx.sum()
    py = cy / cy.sum()

    if cfg.resample:
        def one(b: int) -> float:
            rng = _rng(cfg.seed, _STREAM_DISTINCT, b)
            return _squared_gap(rng.multinomial(n, px), rng.multinomial(n, py), n)

        values = _run_replicates(one, cfg.replicates, cfg.workers)
    else:
        values = np.array([energy_distance(ProbabilityVector(support, px), ProbabilityVector(support, py))])

    base = _baseline_values(cx[cx > 0], n, cfg)
    median, lo, hi = _summarise(values, cfg)
    b_median, b_lo, b_hi = _summarise(base, cfg)
    return DistinctivenessEstimate(
        median=median,
        ci_low=lo,
        ci_high=hi,
        baseline_median=b_median,
        baseline_ci_low=b_lo,
        baseline_ci_high=b_hi,
        form=cfg.form,
        sample_size=n,
        replicates=len(values),
        ci_level=cfg.ci_level,
        replicate_values=values if cfg.keep_replicates else None,
        baseline_values=base if cfg.keep_replicates else None,
    )
