"""Counts-only branching simulation and the Monte Carlo experiments.

Per-trial randomness comes from ``numpy.random.SeedSequence([seed, *keys])``
so results depend only on (master seed, h, trial index, side), never on
scheduling.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .isoperimetry import folner_ratio
from .leveled_tree import LevelCounts, TreeParams, mean_offspring

DEFAULT_COUNT_CAP = 10**15


def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate_level_counts(
    params: TreeParams,
    height: int,
    seed,
    root_level: int = 0,
    cap: int = DEFAULT_COUNT_CAP,
) -> LevelCounts:
    """Level sizes of one percolated window, drawing per-level binomial sums.

    A level of ``x`` vertices has ``x * alpha_min`` unmarked children plus a
    Binomial(``x * (alpha_max - alpha_min)``, ``p``) number of marked ones.
    If a count would exceed ``cap`` the vector stops there and is flagged.
    """
    if height < 0:
        raise ParameterError("height must be >= 0")
    rng = _as_rng(seed)
    a0, a, p = params.alpha_min, params.alpha_max, float(params.retention)
    x = 1
    counts = [1]
    for _ in range(height):
        marked = x * (a - a0)
        x = x * a0 + (int(rng.binomial(marked, p)) if marked else 0)
        if x > cap:
            return LevelCounts(root_level, tuple(counts), truncated=True)
        counts.append(x)
    return LevelCounts(root_level, tuple(counts))


# martingale ------------------------------------------------------------------


@dataclass
class MartingaleTrack:
    """Normalised level counts ``Y_j = X_j / z^j`` over many trials.

    Row ``t`` of ``values`` is one trial; column ``j`` is depth ``j`` below
    the root.  Only non-extinct, untruncated trials are kept.
    """

    params: TreeParams
    z: float
    values: np.ndarray
    discarded: int
    seed: int

    @property
    def trials(self) -> int:
        return self.values.shape[0]

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=1)

    @property
    def mean_increment(self) -> np.ndarray:
        return self.increments.mean(axis=0)

    @property
    def se_increment(self) -> np.ndarray:
        return self.increments.std(axis=0, ddof=1) / math.sqrt(self.trials)

    @property
    def mean_normalized(self) -> np.ndarray:
        return self.values.mean(axis=0)

    @property
    def se_normalized(self) -> np.ndarray:
        return self.values.std(axis=0, ddof=1) / math.sqrt(self.trials)

    @property
    def sup_inverse(self) -> np.ndarray:
        """Per-trial ``sup_j 1 / Y_j``."""
        return (1.0 / self.values).max(axis=1)

    def increments_ok(self, k: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.mean_increment) <= k * self.se_increment))

    def rows(self) -> list[dict]:
        out = []
        for j, (m, s) in enumerate(zip(self.mean_increment, self.se_increment)):
            out.append({
                "level": j,
                "mean_increment": float(m),
                "se_increment": float(s),
                "mean_y": float(self.mean_normalized[j + 1]),
                "within_3se": bool(abs(m) <= 3 * s),
            })
        return out


def martingale_track(
    params: TreeParams,
    height: int,
    trials: int,
    seed: int,
    condition: bool = False,
    cap: int = DEFAULT_COUNT_CAP,
) -> MartingaleTrack:
    """Simulate ``trials`` windows of ``height`` levels and normalise by ``z^j``.

    With ``alpha_min = 0`` extinction is possible; pass ``condition=True`` to
    discard extinct trials, otherwise a :class:`ParameterError` is raised.
    """
    if params.alpha_min == 0 and not condition:
        raise ParameterError("alpha_min = 0 allows extinction; pass condition=True")
    if trials < 2:
        raise ParameterError("need at least two trials for standard errors")
    z = mean_offspring(params)
    if z <= 0:
        raise ParameterError("mean offspring must be positive")
    norm = np.array([z**j for j in range(height + 1)], dtype=float)
    rows = []
    discarded = 0
    for t in range(trials):
        c = simulate_level_counts(params, height, trial_rng(seed, t), cap=cap)
        if c.truncated or c.extinct:
            discarded += 1
            continue
        rows.append(np.asarray(c.counts, dtype=float) / norm)
    if len(rows) < 2:
        raise ParameterError("fewer than two surviving trials")
    return MartingaleTrack(params, float(z), np.vstack(rows), discarded, seed)


# growth condition and all-closed probability -----------------------------


@dataclass(frozen=True)
class GrowthReport:
    z_left: float
    z_right: float
    tolerance: float

    @property
    def satisfied(self) -> bool:
        return abs(self.z_left - self.z_right) <= self.tolerance

    def __str__(self):
        word = "satisfied" if self.satisfied else "violated"
        return f"{word}: {self.z_left:g} vs {self.z_right:g}"


def growth_condition_check(left: TreeParams, right: TreeParams, tolerance: float = 1e-12) -> GrowthReport:
    return GrowthReport(mean_offspring(left), mean_offspring(right), tolerance)


def _exact(p) -> Fraction:
    if isinstance(p, (int, Fraction)):
        return Fraction(p)
    return Fraction(repr(float(p)))


def marked_edge_budget(params: TreeParams, N: int) -> int:
    """``alpha * (alpha_min^(N+1) - 1) / (alpha_min - 1)``, geometric-sum form for ``alpha_min <= 1``."""
    if N < 0:
        raise ParameterError("N must be >= 0")
    return params.alpha_max * sum(params.alpha_min**i for i in range(N + 1))


@dataclass(frozen=True)
class ClosedReport:
    m_left: int
    m_right: int
    probability: Fraction

    def to_dict(self) -> dict:
        return {
            "M_left": self.m_left,
            "M_right": self.m_right,
            "probability_num": self.probability.numerator,
            "probability_den": self.probability.denominator,
            "probability": float(self.probability),
        }


def all_closed_probability(left: TreeParams, right: TreeParams, N: int) -> ClosedReport:
    """``(1-p')^(2M'_N) (1-p)^(2M_N)`` in exact arithmetic."""
    ml, mr = marked_edge_budget(left, N), marked_edge_budget(right, N)
    prob = (1 - _exact(left.retention)) ** (2 * ml) * (1 - _exact(right.retention)) ** (2 * mr)
    return ClosedReport(ml, mr, prob)


# Følner experiment ---------------------------------------------------------


@dataclass(frozen=True)
class FolnerRow:
    h: int
    trials: int
    discarded: int
    median: Fraction
    mean: float
    q10: float
    q90: float

    @property
    def median_scaled(self) -> float:
        return float(self.median * (2 * self.h + 1))

    def as_csv_row(self) -> list:
        return [self.h, self.trials, self.discarded, self.median.numerator, self.median.denominator,
                repr(self.mean), repr(self.q10), repr(self.q90), repr(self.median_scaled)]


CSV_COLUMNS = ["h", "trials", "discarded", "median_ratio_num", "median_ratio_den",
               "mean", "q10", "q90", "median_scaled"]


@dataclass
class FolnerSeries:
    left: TreeParams
    right: TreeParams
    seed: int
    trials: int
    exploratory: bool
    rows: list[FolnerRow] = field(default_factory=list)

    @property
    def medians(self) -> list[Fraction]:
        return [r.median for r in self.rows]

    def strictly_decreasing(self) -> bool:
        m = self.medians
        return all(a > b for a, b in zip(m, m[1:]))

    def scaled_spread(self) -> float:
        s = [r.median_scaled for r in self.rows]
        return max(s) / min(s)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.as_csv_row())
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "left": self.left.as_text(),
            "right": self.right.as_text(),
            "seed": self.seed,
            "trials": self.trials,
            "exploratory": self.exploratory,
            "rows": [dict(zip(CSV_COLUMNS, r.as_csv_row())) for r in self.rows],
        }


def exact_median(values: Sequence[Fraction]) -> Fraction:
    s = sorted(values)
    n = len(s)
    if n == 0:
        raise ParameterError("median of empty sample")
    mid = n // 2
    return s[mid] if n % 2 else (s[mid - 1] + s[mid]) / 2


def folner_trial_counts(left: TreeParams, right: TreeParams, h: int, trials: int, seed: int,
                        cap: int = DEFAULT_COUNT_CAP):
    """Yield ``(trial, left_counts, right_counts)`` for every trial of the ``h``-window."""
    for t in range(trials):
        lc = simulate_level_counts(left, 2 * h, trial_rng(seed, h, t, 0), root_level=-h, cap=cap)
        rc = simulate_level_counts(right, 2 * h, trial_rng(seed, h, t, 1), root_level=-h, cap=cap)
        yield t, lc, rc


def usable(counts: LevelCounts) -> bool:
    return not (counts.truncated or counts.extinct)


def folner_samples(left: TreeParams, right: TreeParams, h: int, trials: int, seed: int,
                   cap: int = DEFAULT_COUNT_CAP) -> tuple[list[Fraction], int]:
    """Ratios of the ``h``-window over independent trials, plus the discard count."""
    ratios, discarded = [], 0
    for _, lc, rc in folner_trial_counts(left, right, h, trials, seed, cap):
        if not (usable(lc) and usable(rc)):
            discarded += 1
            continue
        ratios.append(folner_ratio(lc, rc, h))
    return ratios, discarded


def _folner_row(args) -> FolnerRow:
    left, right, h, trials, seed, cap = args
    ratios, discarded = folner_samples(left, right, h, trials, seed, cap)
    if not ratios:
        raise ParameterError(f"every trial at h={h} was discarded")
    floats = np.sort(np.array([float(r) for r in ratios]))
    return FolnerRow(
        h=h,
        trials=trials,
        discarded=discarded,
        median=exact_median(ratios),
        mean=float(floats.mean()),
        q10=float(np.quantile(floats, 0.1)),
        q90=float(np.quantile(floats, 0.9)),
    )


def run_folner_experiment(
    left: TreeParams,
    right: TreeParams,
    h_range: Sequence[int],
    trials: int,
    seed: int,
    jobs: int = 1,
    allow_extinction: bool = False,
    cap: int = DEFAULT_COUNT_CAP,
) -> FolnerSeries:
    """Følner ratio statistics of the symmetric ``h``-windows for each ``h``.

    Off the equal-growth condition the run still happens but is flagged
    exploratory.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if not allow_extinction and min(left.alpha_min, right.alpha_min) < 1:
        raise ParameterError("alpha_min = 0 allows extinction; pass allow_extinction=True")
    exploratory = not growth_condition_check(left, right).satisfied
    tasks = [(left, right, h, trials, seed, cap) for h in h_range]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_folner_row, tasks))
    else:
        rows = [_folner_row(t) for t in tasks]
    return FolnerSeries(left, right, seed, trials, exploratory, rows)
